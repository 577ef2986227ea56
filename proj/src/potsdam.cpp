#include "nfseg/potsdam.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "nfseg/errors.hpp"

namespace fs = std::filesystem;

namespace nfseg {

Rgb class_color(int cls) {
    if (cls < 0 || cls >= kNumClasses) throw ContractViolation("class_color: class out of range");
    return kClassColors[static_cast<std::size_t>(cls)];
}

int class_from_color(Rgb color) {
    for (int c = 0; c < kNumClasses; ++c)
        if (kClassColors[static_cast<std::size_t>(c)] == color) return c;
    return -1;
}

RgbImage render_mask(const std::vector<std::uint8_t>& mask, int H, int W) {
    if (mask.size() != static_cast<std::size_t>(H) * W)
        throw ContractViolation("render_mask: mask length does not match H*W");
    RgbImage img;
    img.width = W;
    img.height = H;
    img.pixels.resize(mask.size() * 3);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const Rgb c = class_color(mask[i]);
        img.pixels[3 * i] = c.r;
        img.pixels[3 * i + 1] = c.g;
        img.pixels[3 * i + 2] = c.b;
    }
    return img;
}

std::vector<std::uint8_t> decode_label_image(const RgbImage& img, const std::string& origin) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const unsigned char* px = img.at(y, x);
            const int cls = class_from_color({px[0], px[1], px[2]});
            if (cls < 0)
                throw LoadError("unknown label color (" + std::to_string(px[0]) + "," +
                                std::to_string(px[1]) + "," + std::to_string(px[2]) +
                                ") at pixel (" + std::to_string(y) + "," + std::to_string(x) +
                                ")" + (origin.empty() ? "" : " in " + origin));
            mask[static_cast<std::size_t>(y) * img.width + x] = static_cast<std::uint8_t>(cls);
        }
    return mask;
}

SegSample sample_from_pngs(const RgbImage& image, const RgbImage& label, const std::string& origin) {
    if (image.width != label.width || image.height != label.height)
        throw LoadError("image/label size mismatch" + (origin.empty() ? "" : " for " + origin));
    SegSample s;
    s.height = image.height;
    s.width = image.width;
    s.image = Tensor<float>({3, s.height, s.width});
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            const unsigned char* px = image.at(y, x);
            const std::size_t idx = static_cast<std::size_t>(y) * s.width + x;
            s.image.data[idx] = static_cast<float>(px[0]) / 255.0f;
            s.image.data[plane + idx] = static_cast<float>(px[1]) / 255.0f;
            s.image.data[2 * plane + idx] = static_cast<float>(px[2]) / 255.0f;
        }
    s.mask = decode_label_image(label, origin);
    return s;
}

RgbImage render_sample_image(const SegSample& s) {
    RgbImage img;
    img.width = s.width;
    img.height = s.height;
    img.pixels.resize(static_cast<std::size_t>(s.width) * s.height * 3);
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    for (std::size_t i = 0; i < plane; ++i)
        for (int ch = 0; ch < 3; ++ch)
            img.pixels[3 * i + ch] = static_cast<unsigned char>(
                std::lround(std::clamp(s.image.data[ch * plane + i], 0.0f, 1.0f) * 255.0f));
    return img;
}

void save_sample(const std::string& dir, const std::string& name, const SegSample& s) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "labels");
    write_png_rgb8((fs::path(dir) / "images" / (name + ".png")).string(), render_sample_image(s));
    write_png_rgb8((fs::path(dir) / "labels" / (name + ".png")).string(),
                   render_mask(s.mask, s.height, s.width));
}

DatasetSplit load_tile_dataset(const std::string& dir, const TileSplitSpec& split) {
    const fs::path images = fs::path(dir) / "images";
    const fs::path labels = fs::path(dir) / "labels";
    if (!fs::is_directory(images)) throw LoadError("missing images directory under " + dir);

    std::vector<std::string> tiles;
    for (const auto& e : fs::directory_iterator(images))
        if (e.path().extension() == ".png") tiles.push_back(e.path().stem().string());
    std::sort(tiles.begin(), tiles.end());
    if (tiles.empty()) throw LoadError("no tiles found under " + images.string());

    auto contains = [](const std::vector<std::string>& v, const std::string& s) {
        return std::find(v.begin(), v.end(), s) != v.end();
    };
    const bool explicit_split =
        !split.train.empty() || !split.val.empty() || !split.test.empty();

    DatasetSplit out;
    for (const std::string& tile : tiles) {
        const fs::path label_path = labels / (tile + ".png");
        if (!fs::exists(label_path)) throw LoadError("tile '" + tile + "' has no label file");
        SegSample s = sample_from_pngs(read_png_rgb8((images / (tile + ".png")).string()),
                                       read_png_rgb8(label_path.string()), tile);
        if (!explicit_split || contains(split.train, tile))
            out.train.push_back(std::move(s));
        else if (contains(split.val, tile))
            out.val.push_back(std::move(s));
        else if (contains(split.test, tile))
            out.test.push_back(std::move(s));
        // tiles outside an explicit split are ignored
    }
    return out;
}

}  // namespace nfseg
