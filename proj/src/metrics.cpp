#include "nfseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "nfseg/errors.hpp"

namespace nfseg {

ConfusionMatrix::ConfusionMatrix(int classes) : k_(classes) {
    if (classes < 1) throw ContractViolation("confusion matrix needs at least one class");
    m_.assign(static_cast<std::size_t>(k_) * k_, 0);
}

void ConfusionMatrix::add(int truth, int pred, long count) {
    if (truth < 0 || truth >= k_ || pred < 0 || pred >= k_)
        throw ContractViolation("confusion matrix: class index out of range (truth " +
                                std::to_string(truth) + ", pred " + std::to_string(pred) + ")");
    m_[static_cast<std::size_t>(truth) * k_ + pred] += count;
}

void ConfusionMatrix::add_batch(std::span<const int> truth, std::span<const int> pred) {
    if (truth.size() != pred.size())
        throw ContractViolation("confusion matrix: truth/pred length mismatch");
    for (std::size_t i = 0; i < truth.size(); ++i) add(truth[i], pred[i]);
}

void ConfusionMatrix::add_batch(std::span<const unsigned char> truth,
                                std::span<const unsigned char> pred) {
    if (truth.size() != pred.size())
        throw ContractViolation("confusion matrix: truth/pred length mismatch");
    for (std::size_t i = 0; i < truth.size(); ++i) add(truth[i], pred[i]);
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw ContractViolation("confusion matrix: class count mismatch");
    for (std::size_t i = 0; i < m_.size(); ++i) m_[i] += other.m_[i];
    return *this;
}

long ConfusionMatrix::total() const {
    long s = 0;
    for (long v : m_) s += v;
    return s;
}

long ConfusionMatrix::row_sum(int truth) const {
    long s = 0;
    for (int p = 0; p < k_; ++p) s += at(truth, p);
    return s;
}

long ConfusionMatrix::col_sum(int pred) const {
    long s = 0;
    for (int t = 0; t < k_; ++t) s += at(t, pred);
    return s;
}

namespace {

// shared scaffolding: IoU uses TP/(TP+FP+FN), F uses 2TP/(2TP+FP+FN)
ClasswiseMetric classwise(const ConfusionMatrix& cm, bool dice) {
    const int k = cm.classes();
    ClasswiseMetric out;
    out.per_class.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
    double macro_sum = 0.0;
    int macro_n = 0;
    long tp_all = 0, fp_all = 0, fn_all = 0;
    for (int c = 0; c < k; ++c) {
        const long tp = cm.at(c, c);
        const long fn = cm.row_sum(c) - tp;
        const long fp = cm.col_sum(c) - tp;
        tp_all += tp;
        fp_all += fp;
        fn_all += fn;
        if (tp + fp + fn == 0) continue;  // absent from truth and prediction
        const double v = dice ? 2.0 * tp / static_cast<double>(2 * tp + fp + fn)
                              : tp / static_cast<double>(tp + fp + fn);
        out.per_class[static_cast<std::size_t>(c)] = v;
        macro_sum += v;
        macro_n += 1;
    }
    out.macro = macro_n > 0 ? macro_sum / macro_n : 0.0;
    const long denom = dice ? 2 * tp_all + fp_all + fn_all : tp_all + fp_all + fn_all;
    out.aggregate = denom > 0 ? (dice ? 2.0 * tp_all : static_cast<double>(tp_all)) / denom : 0.0;
    return out;
}

}  // namespace

ClasswiseMetric iou(const ConfusionMatrix& cm) { return classwise(cm, false); }

ClasswiseMetric f_score(const ConfusionMatrix& cm) { return classwise(cm, true); }

double f_from_iou(double iou_value) { return 2.0 * iou_value / (1.0 + iou_value); }

MetricsReport MetricsReport::from_confusion(const ConfusionMatrix& cm) {
    MetricsReport r;
    r.confusion = cm;
    const ClasswiseMetric i = iou(cm);
    const ClasswiseMetric f = f_score(cm);
    r.per_class_iou = i.per_class;
    r.per_class_f = f.per_class;
    r.mean_iou = i.macro;
    r.aggregate_iou = i.aggregate;
    r.mean_f = f.macro;
    r.aggregate_f = f.aggregate;
    return r;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

std::string MetricsReport::csv_header(int classes) {
    std::string h = "seed,runtime_s,params,mean_iou,aggregate_iou,mean_f,aggregate_f";
    for (int c = 0; c < classes; ++c) h += ",iou_" + std::to_string(c);
    for (int c = 0; c < classes; ++c) h += ",f_" + std::to_string(c);
    for (int t = 0; t < classes; ++t)
        for (int p = 0; p < classes; ++p) h += ",conf_" + std::to_string(t) + "_" + std::to_string(p);
    return h;
}

std::string MetricsReport::csv_row() const {
    std::string row = std::to_string(seed) + "," + fmt(runtime_seconds) + "," +
                      std::to_string(param_count) + "," + fmt(mean_iou) + "," +
                      fmt(aggregate_iou) + "," + fmt(mean_f) + "," + fmt(aggregate_f);
    for (double v : per_class_iou) row += "," + fmt(v);
    for (double v : per_class_f) row += "," + fmt(v);
    const int k = confusion.classes();
    for (int t = 0; t < k; ++t)
        for (int p = 0; p < k; ++p) row += "," + std::to_string(confusion.at(t, p));
    return row;
}

std::string MetricsReport::table() const {
    const int k = confusion.classes();
    char buf[160];
    std::string out;
    out += "class       iou        f\n";
    for (int c = 0; c < k; ++c) {
        std::snprintf(buf, sizeof buf, "%5d  %8.4f %8.4f\n", c, per_class_iou[c], per_class_f[c]);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "macro  %8.4f %8.4f\naggr   %8.4f %8.4f\n", mean_iou, mean_f,
                  aggregate_iou, aggregate_f);
    out += buf;
    return out;
}

}  // namespace nfseg
