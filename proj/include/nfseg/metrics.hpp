#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nfseg {

// Rows are ground truth, columns are prediction.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int classes = 6);

    void add(int truth, int pred, long count = 1);
    void add_batch(std::span<const int> truth, std::span<const int> pred);
    void add_batch(std::span<const unsigned char> truth, std::span<const unsigned char> pred);
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);

    long at(int truth, int pred) const { return m_[static_cast<std::size_t>(truth) * k_ + pred]; }
    int classes() const { return k_; }
    long total() const;
    long row_sum(int truth) const;
    long col_sum(int pred) const;

private:
    int k_;
    std::vector<long> m_;
};

// Per-class values (NaN when the class is absent from both truth and
// prediction), the macro mean over present classes, and the aggregate
// (pooled TP/FP/FN) value.
struct ClasswiseMetric {
    std::vector<double> per_class;
    double macro = 0.0;
    double aggregate = 0.0;
};

ClasswiseMetric iou(const ConfusionMatrix& cm);
ClasswiseMetric f_score(const ConfusionMatrix& cm);

// The algebraic identity F = 2*IoU/(1+IoU).
double f_from_iou(double iou_value);

struct MetricsReport {
    ConfusionMatrix confusion{6};
    std::vector<double> per_class_iou, per_class_f;
    double mean_iou = 0.0, aggregate_iou = 0.0;
    double mean_f = 0.0, aggregate_f = 0.0;
    std::int64_t param_count = 0;
    double runtime_seconds = 0.0;
    std::uint64_t seed = 0;

    static MetricsReport from_confusion(const ConfusionMatrix& cm);

    static std::string csv_header(int classes = 6);
    std::string csv_row() const;
    std::string table() const;
};

}  // namespace nfseg
