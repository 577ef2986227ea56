#include "nfseg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "nfseg/adam.hpp"
#include "nfseg/graph.hpp"
#include "nfseg/ops.hpp"
#include "nfseg/potsdam.hpp"

namespace nfseg {

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt_float(double v, const char* spec = "%.9g") {
    char buf[40];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

}  // namespace

ModelPair build_models(const ExperimentConfig& cfg) {
    Rng root(cfg.seed);
    Encoder<float> enc(cfg.encoder_config(), root.fork(0xE4C));
    const int cond_dim = cond_dim_for(cfg.code_source, cfg.encoder_config().out_channels(),
                                      cfg.embed_l, cfg.token_posenc);
    NeuralFieldModel<float> dec(cfg.decoder_config(), cond_dim, root.fork(0xDEC));
    return ModelPair{std::move(enc), std::move(dec)};
}

void load_models(ModelPair& models, const Checkpoint& ck) {
    auto restore = [&](ParamSet<float>& ps) {
        for (auto& p : ps) {
            const Checkpoint::Entry* e = ck.find(p.name);
            if (!e) throw LoadError("checkpoint is missing tensor '" + p.name + "'");
            if (e->value.shape != p.value->shape)
                throw LoadError("checkpoint tensor '" + p.name + "' has shape " +
                                shape_str(e->value.shape) + ", model expects " +
                                shape_str(p.value->shape));
            *p.value = e->value;
        }
    };
    restore(models.encoder.params());
    restore(models.decoder.params());
}

std::string TrainLog::to_text() const {
    std::string out;
    for (const auto& s : steps)
        out += "step " + std::to_string(s.step) + " loss " + fmt_float(s.loss) + "\n";
    for (const auto& e : epochs)
        out += "epoch " + std::to_string(e.epoch) + " val_iou " + fmt_float(e.val_iou) +
               (e.improved ? " *\n" : "\n");
    return out;
}

DatasetSplit build_dataset(const ExperimentConfig& cfg) {
    DatasetSplit out;
    if (cfg.dataset == "tiles") {
        TileSplitSpec spec{cfg.train_tiles, cfg.val_tiles, cfg.test_tiles};
        out = load_tile_dataset(cfg.tile_dir, spec);
        return out;
    }
    Rng root(cfg.seed);
    if (cfg.single_image) {
        SegSample s = generate_synthetic(root.fork(0x0A11).seed(), cfg.image_size, cfg.image_size);
        out.train.push_back(s);
        out.val.push_back(s);
        out.test.push_back(std::move(s));
        return out;
    }
    auto make = [&](int count, std::uint64_t tag, std::vector<SegSample>& dst) {
        Rng branch = root.fork(tag);
        for (int i = 0; i < count; ++i)
            dst.push_back(generate_synthetic(branch.fork(static_cast<std::uint64_t>(i)).seed(),
                                             cfg.image_size, cfg.image_size));
    };
    make(cfg.train_count, 0x01, out.train);
    make(cfg.val_count, 0x02, out.val);
    make(cfg.test_count, 0x03, out.test);
    return out;
}

namespace {

// One forward pass to class logits for a prepared batch. coords are [B,S,2].
Node<float>* forward_logits(Graph<float>& g, ModelPair& models, const ExperimentConfig& cfg,
                            Node<float>* images, const Tensor<float>& coords, bool train,
                            int* tokens_out = nullptr) {
    const int B = coords.dim(0), S = coords.dim(1);
    Node<float>* fmap = models.encoder.forward(g, images, train);
    Conditioning<float> cond =
        build_conditioning(g, fmap, coords, cfg.code_source, S, cfg.embed_l, cfg.token_posenc);
    Node<float>* emb = g.leaf(embed_points(coords, cfg.embed_l));
    if (tokens_out) *tokens_out = cond.tokens;
    return models.decoder.forward(g, emb, cond.node, B, S, cond.tokens, train);
}

Tensor<float> batch_images(const std::vector<SegSample>& batch) {
    const int B = static_cast<int>(batch.size());
    const int H = batch[0].height, W = batch[0].width;
    Tensor<float> out({B, 3, H, W});
    const std::size_t per = static_cast<std::size_t>(3) * H * W;
    for (int b = 0; b < B; ++b)
        std::copy(batch[static_cast<std::size_t>(b)].image.data.begin(),
                  batch[static_cast<std::size_t>(b)].image.data.end(),
                  out.data.begin() + static_cast<std::size_t>(b) * per);
    return out;
}

}  // namespace

TrainOutput train_with_data(const ExperimentConfig& cfg, const DatasetSplit& data) {
    cfg.validate();
    if (data.train.empty()) throw ConfigError("training dataset is empty");
    const std::vector<SegSample>& val_set = data.val.empty() ? data.train : data.val;

    TrainOutput out{TrainResult{}, build_models(cfg)};
    ModelPair& models = out.models;
    TrainResult& res = out.result;

    AdamOptimizer<float> opt(static_cast<float>(cfg.lr));
    opt.attach(models.encoder.params());
    opt.attach(models.decoder.params());

    const int n_train = static_cast<int>(data.train.size());
    const int S = cfg.points;
    int global_step = 0;
    int epochs_since_best = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng rng = Rng(cfg.seed).fork(0xE70C).fork(static_cast<std::uint64_t>(epoch));
        std::vector<int> order(static_cast<std::size_t>(n_train));
        for (int i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;
        for (int i = n_train - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);

        for (int start = 0; start < n_train; start += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, n_train - start);
            std::vector<SegSample> batch;
            batch.reserve(static_cast<std::size_t>(bs));
            Tensor<float> coords({bs, S, 2});
            std::vector<int> labels(static_cast<std::size_t>(bs) * S);
            for (int b = 0; b < bs; ++b) {
                const SegSample& src = data.train[static_cast<std::size_t>(order[start + b])];
                SegSample s = (src.height > cfg.image_size || src.width > cfg.image_size)
                                  ? random_crop(src, cfg.image_size, rng)
                                  : src;
                s = flip_augment(s, rng);
                PointSet pts = sample_points_train(s, S, rng);
                for (int i = 0; i < S; ++i) {
                    coords(b, i, 0) = pts.coords(i, 0);
                    coords(b, i, 1) = pts.coords(i, 1);
                    labels[static_cast<std::size_t>(b) * S + i] = pts.labels[static_cast<std::size_t>(i)];
                }
                batch.push_back(std::move(s));
            }

            Graph<float> g;
            Node<float>* images = g.leaf(batch_images(batch));
            Node<float>* logits = forward_logits(g, models, cfg, images, coords, /*train=*/true);
            Node<float>* loss = softmax_cross_entropy(g, logits, labels);
            const float loss_value = loss->val()(0);
            if (!std::isfinite(loss_value))
                throw DivergenceError("non-finite training loss at step " +
                                      std::to_string(global_step));
            g.backward(loss);
            opt.step();
            res.log.steps.push_back({global_step, loss_value});
            ++global_step;
        }

        // dense validation for early stopping, on the configured cadence
        if ((epoch + 1) % cfg.val_every != 0 && epoch + 1 != cfg.max_epochs) continue;
        std::vector<const SegSample*> val_ptrs;
        const int n_val = cfg.val_subset > 0
                              ? std::min<int>(cfg.val_subset, static_cast<int>(val_set.size()))
                              : static_cast<int>(val_set.size());
        for (int i = 0; i < n_val; ++i) val_ptrs.push_back(&val_set[static_cast<std::size_t>(i)]);
        const MetricsReport val_report = evaluate_models(models, val_ptrs, cfg);
        const double val_iou = val_report.aggregate_iou;

        const bool improved = res.best_epoch < 0 || val_iou > res.best_val_iou;
        res.log.epochs.push_back({epoch, val_iou, improved});
        if (improved) {
            res.best_val_iou = val_iou;
            res.best_epoch = epoch;
            epochs_since_best = 0;
            // snapshot
            Checkpoint ck;
            ck.config_text = serialize_config(cfg);
            ck.epoch = epoch;
            ck.best_val_iou = val_iou;
            for (auto& p : models.encoder.params()) ck.tensors.push_back({p.name, *p.value});
            for (auto& p : models.decoder.params()) ck.tensors.push_back({p.name, *p.value});
            for (auto& e : opt.entries()) {
                if (e.state.m.numel() == 0) continue;
                ck.tensors.push_back({"adam.m." + e.name, e.state.m});
                ck.tensors.push_back({"adam.v." + e.name, e.state.v});
                ck.adam_t = e.state.t;
            }
            res.best = std::move(ck);
            if (cfg.target_iou > 0.0 && val_iou >= cfg.target_iou) break;
        } else {
            ++epochs_since_best;
            if (epochs_since_best >= cfg.patience) break;
        }
    }
    return out;
}

TrainResult train(const ExperimentConfig& cfg) {
    cfg.validate();
    const DatasetSplit data = build_dataset(cfg);
    return train_with_data(cfg, data).result;
}

std::vector<std::uint8_t> predict_mask(ModelPair& models, const SegSample& sample,
                                       const ExperimentConfig& cfg) {
    const int H = sample.height, W = sample.width;
    // encoder once per image
    Tensor<float> fmap_value;
    {
        Graph<float> g(/*grads=*/false);
        Tensor<float> img({1, 3, H, W}, sample.image.data);
        Node<float>* fmap = models.encoder.forward(g, g.leaf(std::move(img)), /*train=*/false);
        fmap_value = fmap->val();
    }
    const PointSet grid = dense_grid(H, W);
    const int total = H * W;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(total));
    const int chunk = 4096;  // bounds activation memory during dense decoding
    const int K = cfg.classes;
    for (int start = 0; start < total; start += chunk) {
        const int n = std::min(chunk, total - start);
        Tensor<float> coords({1, n, 2});
        std::copy(grid.coords.data.begin() + static_cast<std::size_t>(start) * 2,
                  grid.coords.data.begin() + static_cast<std::size_t>(start + n) * 2,
                  coords.data.begin());
        Graph<float> g(/*grads=*/false);
        Node<float>* fmap = g.leaf(fmap_value);
        Conditioning<float> cond =
            build_conditioning(g, fmap, coords, cfg.code_source, n, cfg.embed_l, cfg.token_posenc);
        Node<float>* emb = g.leaf(embed_points(coords, cfg.embed_l));
        Node<float>* logits =
            models.decoder.forward(g, emb, cond.node, 1, n, cond.tokens, /*train=*/false);
        for (int i = 0; i < n; ++i) {
            const float* row = logits->val().ptr() + static_cast<std::size_t>(i) * K;
            int best = 0;
            for (int c = 1; c < K; ++c)
                if (row[c] > row[best]) best = c;
            mask[static_cast<std::size_t>(start + i)] = static_cast<std::uint8_t>(best);
        }
    }
    return mask;
}

MetricsReport evaluate_models(ModelPair& models, const std::vector<const SegSample*>& samples,
                              const ExperimentConfig& cfg) {
    const double t0 = now_seconds();
    ConfusionMatrix cm(cfg.classes);
    for (const SegSample* s : samples) {
        const std::vector<std::uint8_t> pred = predict_mask(models, *s, cfg);
        cm.add_batch(std::span<const unsigned char>(s->mask.data(), s->mask.size()),
                     std::span<const unsigned char>(pred.data(), pred.size()));
    }
    MetricsReport rep = MetricsReport::from_confusion(cm);
    rep.runtime_seconds = now_seconds() - t0;
    rep.param_count =
        models.encoder.params().count_trainable() + models.decoder.params().count_trainable();
    rep.seed = cfg.seed;
    return rep;
}

MetricsReport evaluate_models(ModelPair& models, const std::vector<SegSample>& samples,
                              const ExperimentConfig& cfg) {
    std::vector<const SegSample*> ptrs;
    ptrs.reserve(samples.size());
    for (const auto& s : samples) ptrs.push_back(&s);
    return evaluate_models(models, ptrs, cfg);
}

MetricsReport evaluate(const Checkpoint& ck, const std::string& split) {
    const ExperimentConfig cfg = parse_config_text(ck.config_text);
    const DatasetSplit data = build_dataset(cfg);
    const std::vector<SegSample>* samples = nullptr;
    if (split == "train")
        samples = &data.train;
    else if (split == "val")
        samples = &data.val;
    else if (split == "test")
        samples = &data.test;
    else
        throw ConfigError("unknown split '" + split + "'");
    ModelPair models = build_models(cfg);
    load_models(models, ck);
    return evaluate_models(models, *samples, cfg);
}

MetricsReport replay_ground_truth(const std::vector<SegSample>& samples, int classes) {
    ConfusionMatrix cm(classes);
    for (const auto& s : samples)
        cm.add_batch(std::span<const unsigned char>(s.mask.data(), s.mask.size()),
                     std::span<const unsigned char>(s.mask.data(), s.mask.size()));
    return MetricsReport::from_confusion(cm);
}

namespace {

constexpr std::pair<Strategy, CodeSource> kSevenStrategies[] = {
    {Strategy::concat, CodeSource::global},
    {Strategy::concat, CodeSource::local},
    {Strategy::concat, CodeSource::combined},
    {Strategy::film, CodeSource::global},
    {Strategy::film, CodeSource::local},
    {Strategy::film, CodeSource::combined},
    {Strategy::cross_attention, CodeSource::tokens},
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 0) return 0.0;
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

CompareResult compare(const ExperimentConfig& templ, const std::vector<std::uint64_t>& seeds,
                      const std::vector<int>& sizes) {
    if (seeds.empty()) throw ConfigError("compare needs at least one seed");
    if (sizes.empty()) throw ConfigError("compare needs at least one image size");
    CompareResult out;
    for (int size : sizes) {
        for (std::uint64_t seed : seeds) {
            ExperimentConfig base = templ;
            base.image_size = size;
            base.seed = seed;
            const DatasetSplit data = build_dataset(base);  // shared by all strategies
            for (const auto& [strat, src] : kSevenStrategies) {
                ExperimentConfig cfg = base;
                cfg.strategy = strat;
                cfg.code_source = src;
                cfg.validate();
                TrainOutput t = train_with_data(cfg, data);
                load_models(t.models, t.result.best);
                const MetricsReport rep = evaluate_models(t.models, data.test, cfg);
                CompareRun run;
                run.strategy = strat;
                run.source = src;
                run.image_size = size;
                run.seed = seed;
                run.mean_iou = rep.mean_iou;
                run.aggregate_iou = rep.aggregate_iou;
                run.mean_f = rep.mean_f;
                run.aggregate_f = rep.aggregate_f;
                run.params = rep.param_count;
                out.runs.push_back(run);
            }
        }
        for (const auto& [strat, src] : kSevenStrategies) {
            std::vector<double> mi, ai, mf, af;
            CompareRun med;
            for (const auto& r : out.runs)
                if (r.strategy == strat && r.source == src && r.image_size == size) {
                    mi.push_back(r.mean_iou);
                    ai.push_back(r.aggregate_iou);
                    mf.push_back(r.mean_f);
                    af.push_back(r.aggregate_f);
                    med.params = r.params;
                }
            med.strategy = strat;
            med.source = src;
            med.image_size = size;
            med.mean_iou = median(mi);
            med.aggregate_iou = median(ai);
            med.mean_f = median(mf);
            med.aggregate_f = median(af);
            out.medians.push_back(med);
        }
    }
    return out;
}

double median_aggregate_iou(const CompareResult& r, Strategy s, CodeSource c, int size) {
    for (const auto& m : r.medians)
        if (m.strategy == s && m.source == c && m.image_size == size) return m.aggregate_iou;
    throw ContractViolation("no median for requested strategy/size");
}

std::string CompareResult::csv() const {
    std::string out =
        "strategy,code_source,image_size,seed,mean_iou,aggregate_iou,mean_f,aggregate_f,params\n";
    auto row = [&](const CompareRun& r, const std::string& seed_text) {
        out += std::string(to_string(r.strategy)) + "," + to_string(r.source) + "," +
               std::to_string(r.image_size) + "," + seed_text + "," + fmt_float(r.mean_iou) + "," +
               fmt_float(r.aggregate_iou) + "," + fmt_float(r.mean_f) + "," +
               fmt_float(r.aggregate_f) + "," + std::to_string(r.params) + "\n";
    };
    for (const auto& r : runs) row(r, std::to_string(r.seed));
    for (const auto& m : medians) row(m, "median");
    return out;
}

std::string CompareResult::table() const {
    std::string out;
    char buf[160];
    int last_size = -1;
    for (const auto& m : medians) {
        if (m.image_size != last_size) {
            last_size = m.image_size;
            std::snprintf(buf, sizeof buf,
                          "image size %d (medians)\n%-16s %-10s %8s %9s %10s\n", m.image_size,
                          "decoder", "code", "IoU", "F-score", "params");
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "%-16s %-10s %8.3f %9.3f %10lld\n", to_string(m.strategy),
                      to_string(m.source), m.aggregate_iou, m.aggregate_f,
                      static_cast<long long>(m.params));
        out += buf;
    }
    return out;
}

}  // namespace nfseg
