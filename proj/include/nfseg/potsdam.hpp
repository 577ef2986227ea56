#pragma once

#include <array>
#include <string>
#include <vector>

#include "nfseg/dataset.hpp"
#include "nfseg/png_io.hpp"

namespace nfseg {

struct Rgb {
    unsigned char r, g, b;
    bool operator==(const Rgb&) const = default;
};

// Label color code: 0 impervious surfaces (white), 1 building (blue),
// 2 low vegetation (cyan), 3 tree (green), 4 car (yellow), 5 clutter (red).
inline constexpr std::array<Rgb, kNumClasses> kClassColors = {{
    {255, 255, 255},
    {0, 0, 255},
    {0, 255, 255},
    {0, 255, 0},
    {255, 255, 0},
    {255, 0, 0},
}};

Rgb class_color(int cls);
int class_from_color(Rgb color);  // -1 when the color is not in the table

// mask (H*W class ids) -> label image in the class color code
RgbImage render_mask(const std::vector<std::uint8_t>& mask, int H, int W);

// label image -> mask; LoadError names the first offending pixel
std::vector<std::uint8_t> decode_label_image(const RgbImage& img, const std::string& origin = "");

// image + label PNG pair -> sample (image scaled to [0,1])
SegSample sample_from_pngs(const RgbImage& image, const RgbImage& label,
                           const std::string& origin = "");

RgbImage render_sample_image(const SegSample& s);

// Writes <dir>/images/<name>.png and <dir>/labels/<name>.png.
void save_sample(const std::string& dir, const std::string& name, const SegSample& s);

struct TileSplitSpec {
    std::vector<std::string> train, val, test;  // tile names without extension
};

// Loads <dir>/images/<tile>.png + <dir>/labels/<tile>.png pairs and
// partitions them by the given tile lists. With all lists empty every tile
// goes to the training split.
DatasetSplit load_tile_dataset(const std::string& dir, const TileSplitSpec& split = {});

}  // namespace nfseg
