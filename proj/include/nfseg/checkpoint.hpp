#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nfseg/tensor.hpp"

namespace nfseg {

// Self-contained training snapshot: the config as structured text plus every
// named tensor (parameters, batchnorm running statistics, Adam moments) as a
// raw little-endian f32 payload with a name/shape index.
struct Checkpoint {
    std::string config_text;
    struct Entry {
        std::string name;
        Tensor<float> value;
    };
    std::vector<Entry> tensors;
    long adam_t = 0;
    int epoch = 0;
    double best_val_iou = 0.0;

    const Entry* find(const std::string& name) const {
        for (const auto& e : tensors)
            if (e.name == name) return &e;
        return nullptr;
    }
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace nfseg
