#pragma once

#include <vector>

namespace nfseg {

struct ConvLayerSpec {
    int kernel = 3;
    int stride = 1;
    int dilation = 1;
};

// Receptive field of a stack of conv-like layers, in input pixels.
int receptive_field(const std::vector<ConvLayerSpec>& layers);

// Main-path layer list of a ResNet34 backbone (stem, maxpool, 16 basic
// blocks of two 3x3 convs; the first block of stages 2-4 strides by 2).
std::vector<ConvLayerSpec> resnet34_layers();

}  // namespace nfseg
