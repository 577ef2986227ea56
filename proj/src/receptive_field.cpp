#include "nfseg/receptive_field.hpp"

#include "nfseg/errors.hpp"

namespace nfseg {

int receptive_field(const std::vector<ConvLayerSpec>& layers) {
    if (layers.empty()) throw ContractViolation("receptive_field: empty layer list");
    int r = 1;
    long jump = 1;
    for (const auto& l : layers) {
        if (l.kernel < 1 || l.stride < 1 || l.dilation < 1)
            throw ContractViolation("receptive_field: layer fields must be >= 1");
        r += static_cast<int>((l.kernel - 1) * static_cast<long>(l.dilation) * jump);
        jump *= l.stride;
    }
    return r;
}

std::vector<ConvLayerSpec> resnet34_layers() {
    std::vector<ConvLayerSpec> layers;
    layers.push_back({7, 2, 1});  // stem
    layers.push_back({3, 2, 1});  // maxpool
    const int blocks[4] = {3, 4, 6, 3};
    for (int stage = 0; stage < 4; ++stage) {
        for (int block = 0; block < blocks[stage]; ++block) {
            const int first_stride = (stage > 0 && block == 0) ? 2 : 1;
            layers.push_back({3, first_stride, 1});
            layers.push_back({3, 1, 1});
        }
    }
    return layers;
}

}  // namespace nfseg
