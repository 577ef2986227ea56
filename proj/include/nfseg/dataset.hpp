#pragma once

#include <cstdint>
#include <vector>

#include "nfseg/rng.hpp"
#include "nfseg/tensor.hpp"

namespace nfseg {

inline constexpr int kNumClasses = 6;

struct SegSample {
    Tensor<float> image;             // [3,H,W], values in [0,1]
    std::vector<std::uint8_t> mask;  // H*W class indices, row-major
    int height = 0;
    int width = 0;

    void validate() const;
};

struct DatasetSplit {
    std::vector<SegSample> train, val, test;
};

// Deterministic scene built from (seed, H, W): textured background (0),
// rectangles (1), stripes (2), ellipses (3), car-sized squares placed on
// stripes and colored from the rectangle palette (4), clutter blobs (5).
SegSample generate_synthetic(std::uint64_t seed, int H, int W);

SegSample crop(const SegSample& s, int oy, int ox, int size);
SegSample random_crop(const SegSample& s, int size, Rng& rng);

SegSample flip(const SegSample& s, bool horizontal, bool vertical);
SegSample flip_augment(const SegSample& s, Rng& rng);  // each axis with p=0.5

struct PointSet {
    Tensor<float> coords;     // [S,2] normalized (x,y), half-pixel centers
    std::vector<int> labels;  // empty for dense grids
};

PointSet sample_points_train(const SegSample& s, int count, Rng& rng);
PointSet dense_grid(int H, int W);

}  // namespace nfseg
