#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nfseg/conditioning.hpp"
#include "nfseg/decoder.hpp"
#include "nfseg/gradcheck.hpp"
#include "nfseg/graph.hpp"
#include "nfseg/ops.hpp"
#include "nfseg/rng.hpp"

// Randomized finite-difference verification of every differentiable
// operation and of each full decoder, in f64. Shared by the gradcheck CLI
// subcommand, the unit tests, and the acceptance suite.

namespace nfseg {

struct GradSuiteEntry {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

namespace gradsuite_detail {

inline Tensor<double> randn(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

// Holds perturbable inputs with persistent gradient buffers and drives
// finite_diff_check against a rebuildable forward pass.
struct Harness {
    std::vector<std::shared_ptr<Tensor<double>>> values;
    std::vector<std::shared_ptr<Tensor<double>>> grads;
    std::function<double(bool)> forward;  // forward(run_backward)

    std::shared_ptr<Tensor<double>> input(Tensor<double> t) {
        values.push_back(std::make_shared<Tensor<double>>(std::move(t)));
        grads.push_back(std::make_shared<Tensor<double>>(values.back()->shape));
        return values.back();
    }

    void adopt(const std::shared_ptr<Tensor<double>>& v, const std::shared_ptr<Tensor<double>>& g) {
        values.push_back(v);
        grads.push_back(g);
    }

    Node<double>* leaf(Graph<double>& g, const std::shared_ptr<Tensor<double>>& v) {
        for (std::size_t i = 0; i < values.size(); ++i)
            if (values[i] == v) return g.leaf_shared(values[i], grads[i]);
        throw ContractViolation("gradsuite: unknown input");
    }

    double run(double epsilon = 1e-5) {
        for (auto& gr : grads) gr->fill(0.0);
        forward(true);
        std::vector<GradCheckInput> ins;
        for (std::size_t i = 0; i < values.size(); ++i)
            ins.push_back({values[i].get(), grads[i].get()});
        return finite_diff_check([this] { return forward(false); }, ins, epsilon);
    }
};

inline double linear_trial(Rng& rng) {
    const int N = 1 + rng.uniform_int(4), n = 1 + rng.uniform_int(6), m = 1 + rng.uniform_int(6);
    Harness h;
    auto x = h.input(randn({N, n}, rng));
    auto W = h.input(randn({m, n}, rng));
    auto b = h.input(randn({m}, rng));
    Tensor<double> wts = randn({N, m}, rng);
    h.forward = [&, wts](bool bw) {
        Graph<double> g;
        auto* loss = weighted_sum(g, linear(g, h.leaf(g, x), h.leaf(g, W), h.leaf(g, b)), wts);
        if (bw) g.backward(loss);
        return loss->val()(0);
    };
    return h.run();
}

inline double conv2d_trial(Rng& rng) {
    const int B = 1 + rng.uniform_int(2), C = 1 + rng.uniform_int(3), F = 1 + rng.uniform_int(3);
    const int H = 4 + rng.uniform_int(4), W_ = 4 + rng.uniform_int(4);
    const int kh = 1 + rng.uniform_int(3), kw = 1 + rng.uniform_int(3);
    const int stride = 1 + rng.uniform_int(2), pad = rng.uniform_int(2);
    const int Ho = kernels::conv_out_extent(H, kh, stride, pad);
    const int Wo = kernels::conv_out_extent(W_, kw, stride, pad);
    if (Ho < 1 || Wo < 1) return 0.0;
    Harness h;
    auto x = h.input(randn({B, C, H, W_}, rng));
    auto w = h.input(randn({F, C, kh, kw}, rng));
    Tensor<double> wts = randn({B, F, Ho, Wo}, rng);
    h.forward = [&, wts, stride, pad](bool bw) {
        Graph<double> g;
        auto* loss = weighted_sum(g, conv2d(g, h.leaf(g, x), h.leaf(g, w), stride, pad), wts);
        if (bw) g.backward(loss);
        return loss->val()(0);
    };
    return h.run();
}

inline double batchnorm_trial(Rng& rng, bool train) {
    const int N = 4 + rng.uniform_int(6), k = 1 + rng.uniform_int(6);
    Harness h;
    auto x = h.input(randn({N, k}, rng, 2.0));
    auto gamma = h.input(randn({k}, rng, 0.5));
    auto beta = h.input(randn({k}, rng, 0.5));
    Tensor<double> wts = randn({N, k}, rng);
    Tensor<double> rm({k}), rv({k});
    for (auto& v : rv.data) v = 0.5 + rng.uniform();
    h.forward = [&, wts, rm, rv, train](bool bw) {
        Graph<double> g;
        Tensor<double> rm_c = rm, rv_c = rv;
        auto* y = batchnorm<double>(g, h.leaf(g, x), h.leaf(g, gamma), h.leaf(g, beta), &rm_c,
                                    &rv_c, train);
        auto* loss = weighted_sum(g, y, wts);
        if (bw) g.backward(loss);
        return loss->val()(0);
    };
    return h.run();
}

inline double layernorm_trial(Rng& rng) {
    const int N = 1 + rng.uniform_int(5), k = 3 + rng.uniform_int(5);
    Harness h;
    auto x = h.input(randn({N, k}, rng, 2.0));
    auto gamma = h.input(randn({k}, rng, 0.5));
    auto beta = h.input(randn({k}, rng, 0.5));
    Tensor<double> wts = randn({N, k}, rng);
    h.forward = [&, wts](bool bw) {
        Graph<double> g;
        auto* loss = weighted_sum(
            g, layernorm(g, h.leaf(g, x), h.leaf(g, gamma), h.leaf(g, beta)), wts);
        if (bw) g.backward(loss);
        return loss->val()(0);
    };
    return h.run();
}

inline double mha_trial(Rng& rng) {
    const int heads = 1 + rng.uniform_int(2);
    const int k = heads * (1 + rng.uniform_int(3));
    const int S = 1 + rng.uniform_int(4), T_ = 2 + rng.uniform_int(4);
    Harness h;
    auto q = h.input(randn({S, k}, rng));
    auto tok = h.input(randn({T_, k}, rng));
    auto wq = h.input(randn({k, k}, rng, 0.5));
    auto bq = h.input(randn({k}, rng, 0.2));
    auto wk = h.input(randn({k, k}, rng, 0.5));
    auto wv = h.input(randn({k, k}, rng, 0.5));
    auto bv = h.input(randn({k}, rng, 0.2));
    auto wo = h.input(randn({k, k}, rng, 0.5));
    auto bo = h.input(randn({k}, rng, 0.2));
    Tensor<double> wts = randn({S, k}, rng);
    h.forward = [&, wts, heads](bool bw) {
        Graph<double> g;
        auto* y = multi_head_attention(g, h.leaf(g, q), h.leaf(g, tok), heads, h.leaf(g, wq),
                                       h.leaf(g, bq), h.leaf(g, wk), h.leaf(g, wv), h.leaf(g, bv),
                                       h.leaf(g, wo), h.leaf(g, bo));
        auto* loss = weighted_sum(g, y, wts);
        if (bw) g.backward(loss);
        return loss->val()(0);
    };
    // wider step: the stacked projections leave some coordinates with tiny
    // gradients right at the f64 central-difference noise floor
    return h.run(5e-5);
}

inline double xent_trial(Rng& rng) {
    const int N = 1 + rng.uniform_int(6), K = 2 + rng.uniform_int(6);
    Harness h;
    auto logits = h.input(randn({N, K}, rng, 2.0));
    std::vector<int> labels(static_cast<std::size_t>(N));
    for (auto& l : labels) l = rng.uniform_int(K);
    h.forward = [&, labels](bool bw) {
        Graph<double> g;
        auto* loss = softmax_cross_entropy(g, h.leaf(g, logits), labels);
        if (bw) g.backward(loss);
        return loss->val()(0);
    };
    return h.run();
}

inline double decoder_trial(Strategy strat, CodeSource src, unsigned seed) {
    Rng rng(seed);
    DecoderConfig cfg;
    cfg.strategy = strat;
    cfg.code_source = src;
    cfg.hidden = 8;
    cfg.blocks = strat == Strategy::cross_attention ? 2 : 1;
    cfg.heads = 2;
    cfg.embed_l = 1;
    cfg.classes = 3;

    // two images: a single image would give a global code with an exactly
    // zero gradient (batchnorm cancels constant column shifts)
    const int B = 2, S = 2, c = 3, hgt = 2, wdt = 2;
    const int dim = cond_dim_for(src, c, cfg.embed_l, cfg.token_posenc);
    NeuralFieldModel<double> model(cfg, dim, rng.fork(1));

    Harness h;
    auto fmap = h.input(randn({B, c, hgt, wdt}, rng));
    Tensor<double> pts({B, S, 2});
    for (auto& v : pts.data) v = rng.uniform();
    Tensor<double> emb = embed_points(pts, cfg.embed_l);
    const std::vector<int> labels = {0, 2, 1, 1};
    for (auto& p : model.params())
        if (p.trainable) h.adopt(p.value, p.grad);

    const int T_ = src == CodeSource::tokens ? hgt * wdt : 0;
    h.forward = [&h, &model, fmap, pts, emb, labels, src, cfg, B, S, T_](bool bw) {
        Graph<double> g;
        auto* f = h.leaf(g, fmap);
        Conditioning<double> cond =
            build_conditioning(g, f, pts, src, S, cfg.embed_l, cfg.token_posenc);
        auto* logits = model.forward(g, g.leaf(emb), cond.node, B, S, T_, /*train=*/true);
        auto* loss = softmax_cross_entropy(g, logits, labels);
        if (bw) g.backward(loss);
        return loss->val()(0);
    };
    return h.run();
}

}  // namespace gradsuite_detail

// trials randomized shapes per operation, plus one full forward+loss check
// per decoder strategy/code-source pairing.
inline std::vector<GradSuiteEntry> run_gradient_suite(int trials = 20, std::uint64_t seed = 7) {
    using namespace gradsuite_detail;
    std::vector<GradSuiteEntry> out;
    auto run_op = [&](const std::string& name, double tol, auto&& trial_fn) {
        Rng rng(seed ^ (0x5eedULL * (out.size() + 1)));
        double worst = 0.0;
        for (int t = 0; t < trials; ++t) worst = std::max(worst, trial_fn(rng));
        out.push_back({name, worst, tol, worst < tol});
    };
    run_op("linear", 1e-5, [](Rng& r) { return linear_trial(r); });
    run_op("conv2d", 1e-5, [](Rng& r) { return conv2d_trial(r); });
    run_op("batchnorm", 1e-5, [n = 0](Rng& r) mutable { return batchnorm_trial(r, n++ % 2 == 0); });
    run_op("layernorm", 1e-5, [](Rng& r) { return layernorm_trial(r); });
    run_op("multi_head_attention", 1e-5, [](Rng& r) { return mha_trial(r); });
    run_op("softmax_cross_entropy", 1e-5, [](Rng& r) { return xent_trial(r); });

    const struct {
        const char* name;
        Strategy s;
        CodeSource c;
        unsigned seed;
    } decoders[] = {
        {"decoder concat/global", Strategy::concat, CodeSource::global, 201},
        {"decoder concat/local", Strategy::concat, CodeSource::local, 202},
        {"decoder concat/combined", Strategy::concat, CodeSource::combined, 203},
        {"decoder film/global", Strategy::film, CodeSource::global, 204},
        {"decoder film/local", Strategy::film, CodeSource::local, 205},
        {"decoder film/combined", Strategy::film, CodeSource::combined, 206},
        {"decoder cross_attention", Strategy::cross_attention, CodeSource::tokens, 207},
    };
    for (const auto& d : decoders) {
        const double err = decoder_trial(d.s, d.c, d.seed);
        out.push_back({d.name, err, 1e-4, err < 1e-4});
    }
    return out;
}

}  // namespace nfseg
