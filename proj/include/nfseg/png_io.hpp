#pragma once

#include <string>
#include <vector>

namespace nfseg {

// 8-bit RGB, row-major, 3 bytes per pixel.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> pixels;

    unsigned char* at(int y, int x) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const unsigned char* at(int y, int x) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
};

RgbImage read_png_rgb8(const std::string& path);
void write_png_rgb8(const std::string& path, const RgbImage& img);

}  // namespace nfseg
