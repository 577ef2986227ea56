#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nfseg/checkpoint.hpp"
#include "nfseg/config.hpp"
#include "nfseg/conditioning.hpp"
#include "nfseg/dataset.hpp"
#include "nfseg/decoder.hpp"
#include "nfseg/encoder.hpp"
#include "nfseg/metrics.hpp"

namespace nfseg {

struct ModelPair {
    Encoder<float> encoder;
    NeuralFieldModel<float> decoder;
};

ModelPair build_models(const ExperimentConfig& cfg);
void load_models(ModelPair& models, const Checkpoint& ck);

struct TrainLog {
    struct Step {
        int step;
        float loss;
    };
    struct Epoch {
        int epoch;
        double val_iou;
        bool improved;
    };
    std::vector<Step> steps;
    std::vector<Epoch> epochs;
    std::string to_text() const;
};

struct TrainResult {
    Checkpoint best;
    TrainLog log;
    double best_val_iou = 0.0;
    int best_epoch = -1;
};

DatasetSplit build_dataset(const ExperimentConfig& cfg);

TrainResult train(const ExperimentConfig& cfg);

struct TrainOutput {
    TrainResult result;
    ModelPair models;  // final weights; result.best holds the best epoch
};
TrainOutput train_with_data(const ExperimentConfig& cfg, const DatasetSplit& data);

std::vector<std::uint8_t> predict_mask(ModelPair& models, const SegSample& sample,
                                       const ExperimentConfig& cfg);

MetricsReport evaluate_models(ModelPair& models, const std::vector<const SegSample*>& samples,
                              const ExperimentConfig& cfg);
MetricsReport evaluate_models(ModelPair& models, const std::vector<SegSample>& samples,
                              const ExperimentConfig& cfg);

// Rebuilds dataset and models from the checkpoint's embedded config.
MetricsReport evaluate(const Checkpoint& ck, const std::string& split);

// Harness self-check: scores ground truth replayed as the prediction.
MetricsReport replay_ground_truth(const std::vector<SegSample>& samples, int classes = kNumClasses);

// The seven-strategy comparison.
struct CompareRun {
    Strategy strategy;
    CodeSource source;
    int image_size = 0;
    std::uint64_t seed = 0;
    double mean_iou = 0, aggregate_iou = 0, mean_f = 0, aggregate_f = 0;
    std::int64_t params = 0;
};

struct CompareResult {
    std::vector<CompareRun> runs;     // per seed
    std::vector<CompareRun> medians;  // per (strategy, size), seed field unused
    std::string csv() const;          // bit-stable across reruns
    std::string table() const;
};

CompareResult compare(const ExperimentConfig& templ, const std::vector<std::uint64_t>& seeds,
                      const std::vector<int>& sizes);

// median over per-seed aggregate IoU for one strategy/size of a CompareResult
double median_aggregate_iou(const CompareResult& r, Strategy s, CodeSource c, int size);

}  // namespace nfseg
