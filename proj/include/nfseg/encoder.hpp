#pragma once

#include <string>
#include <vector>

#include "nfseg/ops.hpp"
#include "nfseg/params.hpp"

namespace nfseg {

// Per-channel batch normalization over [B,F,H,W] (statistics across batch
// and space). Same math as the row-wise batchnorm op, laid out for feature
// maps. Statistics are accumulated serially so the result is independent of
// the thread count.
template <typename T>
Node<T>* batchnorm2d(Graph<T>& g, Node<T>* x, Node<T>* gamma, Node<T>* beta, Tensor<T>* run_mean,
                     Tensor<T>* run_var, bool train, T momentum = T(0.1), T eps = T(1e-5)) {
    detail::require(x->val().rank() == 4, "batchnorm2d: input must be [B,F,H,W]");
    const int B = x->val().dim(0), F = x->val().dim(1);
    const int plane = x->val().dim(2) * x->val().dim(3);
    const long N = static_cast<long>(B) * plane;
    detail::require(!train || N >= 2, "batchnorm2d: train mode needs at least 2 samples");

    auto xhat = std::make_shared<Tensor<T>>(x->val().shape);
    auto inv_std = std::make_shared<Tensor<T>>(std::vector<int>{F});
    Tensor<T> mean({F}), var({F});
    if (train) {
        const T* xp = x->val().ptr();
        for (int f = 0; f < F; ++f) {
            T s = T(0);
            for (int b = 0; b < B; ++b) {
                const T* p = xp + (static_cast<std::size_t>(b) * F + f) * plane;
                for (int i = 0; i < plane; ++i) s += p[i];
            }
            mean(f) = s / static_cast<T>(N);
            T v = T(0);
            for (int b = 0; b < B; ++b) {
                const T* p = xp + (static_cast<std::size_t>(b) * F + f) * plane;
                for (int i = 0; i < plane; ++i) {
                    const T d = p[i] - mean(f);
                    v += d * d;
                }
            }
            var(f) = v / static_cast<T>(N);
        }
        const T unbias = static_cast<T>(N) / static_cast<T>(N - 1);
        for (int f = 0; f < F; ++f) {
            run_mean->data[f] = (T(1) - momentum) * run_mean->data[f] + momentum * mean(f);
            run_var->data[f] = (T(1) - momentum) * run_var->data[f] + momentum * var(f) * unbias;
        }
    } else {
        mean = *run_mean;
        var = *run_var;
    }
    for (int f = 0; f < F; ++f) inv_std->data[f] = T(1) / std::sqrt(var(f) + eps);

    Tensor<T> y(x->val().shape);
    {
        const T* xp = x->val().ptr();
        const T* gp = gamma->val().ptr();
        const T* bp = beta->val().ptr();
#pragma omp parallel for collapse(2) schedule(static)
        for (int b = 0; b < B; ++b)
            for (int f = 0; f < F; ++f) {
                const std::size_t off = (static_cast<std::size_t>(b) * F + f) * plane;
                for (int i = 0; i < plane; ++i) {
                    const T xh = (xp[off + i] - mean(f)) * inv_std->data[f];
                    xhat->data[off + i] = xh;
                    y.data[off + i] = xh * gp[f] + bp[f];
                }
            }
    }

    Node<T>* out = g.op(std::move(y), {x, gamma, beta});
    if (out->requires_grad)
        out->backprop = [x, gamma, beta, out, xhat, inv_std, B, F, plane, N, train] {
            const T* dy = out->grad->ptr();
            const T* xh = xhat->ptr();
            const T* gp = gamma->value->ptr();
            // per-channel sums of dy and dy*xhat
            Tensor<T> s1({F}), s2({F});
            for (int b = 0; b < B; ++b)
                for (int f = 0; f < F; ++f) {
                    const std::size_t off = (static_cast<std::size_t>(b) * F + f) * plane;
                    T a = T(0), c = T(0);
                    for (int i = 0; i < plane; ++i) {
                        a += dy[off + i];
                        c += dy[off + i] * xh[off + i];
                    }
                    s1(f) += a;
                    s2(f) += c;
                }
            if (x->requires_grad) {
                T* dx = x->grad->ptr();
#pragma omp parallel for collapse(2) schedule(static)
                for (int b = 0; b < B; ++b)
                    for (int f = 0; f < F; ++f) {
                        const std::size_t off = (static_cast<std::size_t>(b) * F + f) * plane;
                        const T is = inv_std->data[f];
                        const T gv = gp[f];
                        if (train) {
                            for (int i = 0; i < plane; ++i)
                                dx[off + i] += is * gv / static_cast<T>(N) *
                                               (static_cast<T>(N) * dy[off + i] - s1(f) -
                                                xh[off + i] * s2(f));
                        } else {
                            for (int i = 0; i < plane; ++i) dx[off + i] += dy[off + i] * gv * is;
                        }
                    }
            }
            if (gamma->requires_grad)
                for (int f = 0; f < F; ++f) gamma->grad->data[f] += s2(f);
            if (beta->requires_grad)
                for (int f = 0; f < F; ++f) beta->grad->data[f] += s1(f);
        };
    return out;
}

struct EncoderConfig {
    int in_channels = 3;
    int stem_width = 16;
    std::vector<int> stage_widths = {32, 64, 128, 128};

    int downsample() const { return 1 << (1 + static_cast<int>(stage_widths.size())); }
    int out_channels() const { return stage_widths.back(); }
};

// Small trainable CNN: stem conv (stride 2), then per stage
// [conv s2 -> batchnorm -> ReLU -> conv s1 -> batchnorm -> ReLU].
template <typename T>
class Encoder {
public:
    Encoder(EncoderConfig cfg, Rng rng) : cfg_(std::move(cfg)) {
        add_conv("enc.stem.w", cfg_.stem_width, cfg_.in_channels, rng);
        int in_w = cfg_.stem_width;
        for (std::size_t s = 0; s < cfg_.stage_widths.size(); ++s) {
            const int w = cfg_.stage_widths[s];
            const std::string base = "enc.s" + std::to_string(s);
            add_conv(base + ".conv1.w", w, in_w, rng);
            add_bn(base + ".bn1", w);
            add_conv(base + ".conv2.w", w, w, rng);
            add_bn(base + ".bn2", w);
            in_w = w;
        }
    }

    // images[B,3,H,W] -> [B,c,h,w]; H and W must divide by downsample()
    Node<T>* forward(Graph<T>& g, Node<T>* images, bool train) {
        const int H = images->val().dim(2), W = images->val().dim(3);
        const int ds = cfg_.downsample();
        if (H % ds != 0 || W % ds != 0)
            throw ConfigError("encoder: input " + std::to_string(H) + "x" + std::to_string(W) +
                              " not divisible by downsample factor " + std::to_string(ds));
        Node<T>* h = conv2d(g, images, use(g, *params_.find("enc.stem.w")), 2, 1);
        for (std::size_t s = 0; s < cfg_.stage_widths.size(); ++s) {
            const std::string base = "enc.s" + std::to_string(s);
            h = conv2d(g, h, use(g, *params_.find(base + ".conv1.w")), 2, 1);
            h = bn(g, h, base + ".bn1", train);
            h = relu(g, h);
            h = conv2d(g, h, use(g, *params_.find(base + ".conv2.w")), 1, 1);
            h = bn(g, h, base + ".bn2", train);
            h = relu(g, h);
        }
        return h;
    }

    ParamSet<T>& params() { return params_; }
    const EncoderConfig& config() const { return cfg_; }

private:
    void add_conv(const std::string& name, int out_c, int in_c, Rng& rng) {
        params_.add(name, init_uniform<T>({out_c, in_c, 3, 3}, in_c * 9, rng));
    }

    void add_bn(const std::string& base, int width) {
        params_.add(base + ".gamma", Tensor<T>::full({width}, T(1)));
        params_.add(base + ".beta", Tensor<T>({width}));
        params_.add(base + ".run_mean", Tensor<T>({width}), /*trainable=*/false);
        params_.add(base + ".run_var", Tensor<T>::full({width}, T(1)), /*trainable=*/false);
    }

    Node<T>* bn(Graph<T>& g, Node<T>* x, const std::string& base, bool train) {
        return batchnorm2d(g, x, use(g, *params_.find(base + ".gamma")),
                           use(g, *params_.find(base + ".beta")),
                           params_.find(base + ".run_mean")->value.get(),
                           params_.find(base + ".run_var")->value.get(), train);
    }

    EncoderConfig cfg_;
    ParamSet<T> params_;
};

}  // namespace nfseg
