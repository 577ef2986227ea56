#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nfseg/decoder.hpp"
#include "nfseg/encoder.hpp"

namespace nfseg {

// Full experiment description. Defaults are the desk profile (CPU-sized
// synthetic benchmark); `profile = paper` switches width, batch size and
// encoder to the published training setup.
struct ExperimentConfig {
    // model
    Strategy strategy = Strategy::concat;
    CodeSource code_source = CodeSource::global;
    int hidden = 128;
    int blocks = 0;  // 0: one block, two for cross-attention
    int heads = 8;
    int embed_l = 4;
    int classes = 6;
    bool token_posenc = true;

    // encoder
    int stem_width = 16;
    std::vector<int> stage_widths = {32, 64, 128};

    // data
    std::string dataset = "synthetic";  // synthetic | tiles
    int train_count = 200;
    int val_count = 40;
    int test_count = 40;
    int image_size = 64;
    bool single_image = false;  // train = val = test = one synthetic image
    std::string tile_dir;
    std::vector<std::string> train_tiles, val_tiles, test_tiles;

    // training
    double lr = 1e-4;
    int batch_size = 16;
    int points = 512;  // sampled per image per step
    int max_epochs = 40;
    int patience = 10;
    int val_every = 1;    // validate every N epochs
    int val_subset = 0;   // images used for per-epoch validation; 0 = all
    double target_iou = 0.0;  // stop once validation IoU reaches this; 0 = off
    std::uint64_t seed = 1;
    bool deterministic = true;

    int resolved_blocks() const {
        return blocks > 0 ? blocks : (strategy == Strategy::cross_attention ? 2 : 1);
    }

    DecoderConfig decoder_config() const;
    EncoderConfig encoder_config() const;
    void validate() const;
};

// Applies the paper-parity training values (hidden 512, batch 64, deeper
// encoder for 256/512 inputs) on top of a default-constructed config.
void apply_paper_profile(ExperimentConfig& cfg);

ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// --key value pairs using the dotted names from the config file
// (e.g. --model.strategy film --train.lr 3e-4).
void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& args);

std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace nfseg
