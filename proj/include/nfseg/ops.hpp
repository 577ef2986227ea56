#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nfseg/embedding.hpp"
#include "nfseg/graph.hpp"
#include "nfseg/kernels.hpp"

// Differentiable graph operations. Forward and backward work both run
// through the kernels in kernels.hpp; shapes are validated here.

namespace nfseg {

namespace detail {
inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}
}  // namespace detail

// y[N,m] = x[N,n] * W[m,n]^T + b[m]. b may be null: layers feeding a
// normalization run bias-free, since the normalization cancels a constant
// column shift exactly and the bias could never learn.
template <typename T>
Node<T>* linear(Graph<T>& g, Node<T>* x, Node<T>* W, Node<T>* b) {
    detail::require(x->val().rank() == 2 && W->val().rank() == 2, "linear: x must be [N,n], W [m,n]");
    const int N = x->val().dim(0), n = x->val().dim(1);
    const int m = W->val().dim(0);
    detail::require(W->val().dim(1) == n, "linear: inner dimensions disagree, x " +
                                              shape_str(x->val().shape) + " vs W " +
                                              shape_str(W->val().shape));
    if (b) detail::require(b->val().rank() == 1 && b->val().dim(0) == m, "linear: bias length mismatch");

    Tensor<T> y({N, m});
    {
        Tensor<T> wt({n, m});
        kernels::transpose(W->val().ptr(), wt.ptr(), m, n);
        kernels::matmul_nn_acc(x->val().ptr(), wt.ptr(), y.ptr(), N, n, m);
    }
    if (b) kernels::add_bias_rows(y.ptr(), b->val().ptr(), N, m);

    std::vector<Node<T>*> parents{x, W};
    if (b) parents.push_back(b);
    Node<T>* out = g.op(std::move(y), std::move(parents));
    if (out->requires_grad)
        out->backprop = [x, W, b, out, N, n, m] {
            const T* dy = out->grad->ptr();
            if (x->requires_grad)
                kernels::matmul_nn_acc(dy, W->value->ptr(), x->grad->ptr(), N, m, n);
            if (W->requires_grad)
                kernels::matmul_tn_acc(dy, x->value->ptr(), W->grad->ptr(), m, N, n);
            if (b && b->requires_grad) kernels::col_sum_acc(dy, b->grad->ptr(), N, m);
        };
    return out;
}

// Cross-correlation, no bias. x[B,C,H,W], w[F,C,kh,kw] -> y[B,F,Ho,Wo]
template <typename T>
Node<T>* conv2d(Graph<T>& g, Node<T>* x, Node<T>* w, int stride, int pad) {
    detail::require(x->val().rank() == 4 && w->val().rank() == 4,
                    "conv2d: x must be [B,C,H,W] and w [F,C,kh,kw]");
    detail::require(stride >= 1, "conv2d: stride must be >= 1");
    detail::require(pad >= 0, "conv2d: pad must be >= 0");
    const int B = x->val().dim(0), C = x->val().dim(1), H = x->val().dim(2), W_ = x->val().dim(3);
    const int F = w->val().dim(0), kh = w->val().dim(2), kw = w->val().dim(3);
    detail::require(w->val().dim(1) == C, "conv2d: channel count mismatch");
    detail::require(kh <= H + 2 * pad && kw <= W_ + 2 * pad,
                    "conv2d: kernel larger than padded input");
    const int Ho = kernels::conv_out_extent(H, kh, stride, pad);
    const int Wo = kernels::conv_out_extent(W_, kw, stride, pad);

    Tensor<T> y({B, F, Ho, Wo});
    kernels::conv2d_forward(x->val().ptr(), w->val().ptr(), y.ptr(), B, C, H, W_, F, kh, kw,
                            stride, pad, Ho, Wo);

    Node<T>* out = g.op(std::move(y), {x, w});
    if (out->requires_grad)
        out->backprop = [x, w, out, B, C, H, W_, F, kh, kw, stride, pad, Ho, Wo] {
            const T* dy = out->grad->ptr();
            if (x->requires_grad)
                kernels::conv2d_backward_input_acc(dy, w->value->ptr(), x->grad->ptr(), B, C, H,
                                                   W_, F, kh, kw, stride, pad, Ho, Wo);
            if (w->requires_grad)
                kernels::conv2d_backward_weight_acc(dy, x->value->ptr(), w->grad->ptr(), B, C, H,
                                                    W_, F, kh, kw, stride, pad, Ho, Wo);
        };
    return out;
}

template <typename T>
Node<T>* relu(Graph<T>& g, Node<T>* x) {
    Tensor<T> y(x->val().shape);
    kernels::relu_forward(x->val().ptr(), y.ptr(), y.numel());
    Node<T>* out = g.op(std::move(y), {x});
    if (out->requires_grad)
        out->backprop = [x, out] {
            kernels::relu_backward_acc(out->grad->ptr(), x->value->ptr(), x->grad->ptr(),
                                       out->grad->numel());
        };
    return out;
}

template <typename T>
Node<T>* add(Graph<T>& g, Node<T>* a, Node<T>* b) {
    detail::require(same_shape(a->val(), b->val()), "add: shape mismatch");
    Tensor<T> y(a->val().shape);
    kernels::ewise_add(a->val().ptr(), b->val().ptr(), y.ptr(), y.numel());
    Node<T>* out = g.op(std::move(y), {a, b});
    if (out->requires_grad)
        out->backprop = [a, b, out] {
            const std::size_t n = out->grad->numel();
            if (a->requires_grad) kernels::ewise_add_acc(out->grad->ptr(), a->grad->ptr(), n);
            if (b->requires_grad) kernels::ewise_add_acc(out->grad->ptr(), b->grad->ptr(), n);
        };
    return out;
}

template <typename T>
Node<T>* mul(Graph<T>& g, Node<T>* a, Node<T>* b) {
    detail::require(same_shape(a->val(), b->val()), "mul: shape mismatch");
    Tensor<T> y(a->val().shape);
    kernels::ewise_mul(a->val().ptr(), b->val().ptr(), y.ptr(), y.numel());
    Node<T>* out = g.op(std::move(y), {a, b});
    if (out->requires_grad)
        out->backprop = [a, b, out] {
            const std::size_t n = out->grad->numel();
            if (a->requires_grad)
                kernels::ewise_mul_acc(out->grad->ptr(), b->value->ptr(), a->grad->ptr(), n);
            if (b->requires_grad)
                kernels::ewise_mul_acc(out->grad->ptr(), a->value->ptr(), b->grad->ptr(), n);
        };
    return out;
}

// [N,p] ++ [N,q] -> [N,p+q]
template <typename T>
Node<T>* concat_cols(Graph<T>& g, Node<T>* a, Node<T>* b) {
    detail::require(a->val().rank() == 2 && b->val().rank() == 2 && a->val().dim(0) == b->val().dim(0),
                    "concat_cols: operands must be 2-d with equal row counts");
    const int N = a->val().dim(0), p = a->val().dim(1), q = b->val().dim(1);
    Tensor<T> y({N, p + q});
#pragma omp parallel for schedule(static)
    for (int i = 0; i < N; ++i) {
        T* row = y.ptr() + static_cast<std::size_t>(i) * (p + q);
        const T* arow = a->val().ptr() + static_cast<std::size_t>(i) * p;
        const T* brow = b->val().ptr() + static_cast<std::size_t>(i) * q;
        for (int j = 0; j < p; ++j) row[j] = arow[j];
        for (int j = 0; j < q; ++j) row[p + j] = brow[j];
    }
    Node<T>* out = g.op(std::move(y), {a, b});
    if (out->requires_grad)
        out->backprop = [a, b, out, N, p, q] {
            const T* dy = out->grad->ptr();
#pragma omp parallel for schedule(static)
            for (int i = 0; i < N; ++i) {
                const T* row = dy + static_cast<std::size_t>(i) * (p + q);
                if (a->requires_grad) {
                    T* da = a->grad->ptr() + static_cast<std::size_t>(i) * p;
                    for (int j = 0; j < p; ++j) da[j] += row[j];
                }
                if (b->requires_grad) {
                    T* db = b->grad->ptr() + static_cast<std::size_t>(i) * q;
                    for (int j = 0; j < q; ++j) db[j] += row[p + j];
                }
            }
        };
    return out;
}

// Batch normalization over the rows of x[N,k]. gamma/beta may be null (raw
// normalization, used by conditional batchnorm). Running statistics are
// plain model-owned buffers updated in train mode (EMA, unbiased variance).
template <typename T>
Node<T>* batchnorm(Graph<T>& g, Node<T>* x, Node<T>* gamma, Node<T>* beta, Tensor<T>* run_mean,
                   Tensor<T>* run_var, bool train, T momentum = T(0.1), T eps = T(1e-5)) {
    detail::require(x->val().rank() == 2, "batchnorm: x must be [N,k]");
    const int N = x->val().dim(0), k = x->val().dim(1);
    detail::require(!train || N >= 2, "batchnorm: train mode needs at least 2 rows");
    detail::require(static_cast<int>(run_mean->numel()) == k && static_cast<int>(run_var->numel()) == k,
                    "batchnorm: running stat length mismatch");
    if (gamma) detail::require(static_cast<int>(gamma->val().numel()) == k, "batchnorm: gamma length");
    if (beta) detail::require(static_cast<int>(beta->val().numel()) == k, "batchnorm: beta length");

    auto xhat = std::make_shared<Tensor<T>>(std::vector<int>{N, k});
    auto inv_std = std::make_shared<Tensor<T>>(std::vector<int>{k});
    {
        Tensor<T> mean({k}), var({k});
        if (train) {
            kernels::col_mean_var(x->val().ptr(), N, k, mean.ptr(), var.ptr());
            const T unbias = static_cast<T>(N) / static_cast<T>(N - 1);
            for (int j = 0; j < k; ++j) {
                run_mean->data[j] = (T(1) - momentum) * run_mean->data[j] + momentum * mean(j);
                run_var->data[j] = (T(1) - momentum) * run_var->data[j] + momentum * var(j) * unbias;
            }
        } else {
            mean = *run_mean;
            var = *run_var;
        }
        for (int j = 0; j < k; ++j) inv_std->data[j] = T(1) / std::sqrt(var(j) + eps);
        const T* xp = x->val().ptr();
        T* xh = xhat->ptr();
#pragma omp parallel for schedule(static)
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < k; ++j)
                xh[static_cast<std::size_t>(i) * k + j] =
                    (xp[static_cast<std::size_t>(i) * k + j] - mean(j)) * inv_std->data[j];
    }

    Tensor<T> y({N, k});
    {
        const T* xh = xhat->ptr();
        const T* gp = gamma ? gamma->val().ptr() : nullptr;
        const T* bp = beta ? beta->val().ptr() : nullptr;
#pragma omp parallel for schedule(static)
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < k; ++j) {
                T v = xh[static_cast<std::size_t>(i) * k + j];
                if (gp) v *= gp[j];
                if (bp) v += bp[j];
                y(i, j) = v;
            }
    }

    std::vector<Node<T>*> parents{x};
    if (gamma) parents.push_back(gamma);
    if (beta) parents.push_back(beta);
    Node<T>* out = g.op(std::move(y), std::move(parents));
    if (out->requires_grad)
        out->backprop = [x, gamma, beta, out, xhat, inv_std, N, k, train] {
            const T* dy = out->grad->ptr();
            const T* xh = xhat->ptr();
            // dxhat = dy * gamma (gamma absent -> 1)
            Tensor<T> dxhat({N, k});
            {
                const T* gp = gamma ? gamma->value->ptr() : nullptr;
#pragma omp parallel for schedule(static)
                for (int i = 0; i < N; ++i)
                    for (int j = 0; j < k; ++j) {
                        const std::size_t idx = static_cast<std::size_t>(i) * k + j;
                        dxhat.data[idx] = gp ? dy[idx] * gp[j] : dy[idx];
                    }
            }
            if (x->requires_grad) {
                T* dx = x->grad->ptr();
                if (train) {
                    Tensor<T> s1({k}), s2({k});
                    kernels::col_sum_and_dot(dxhat.ptr(), xh, N, k, s1.ptr(), s2.ptr());
#pragma omp parallel for schedule(static)
                    for (int i = 0; i < N; ++i)
                        for (int j = 0; j < k; ++j) {
                            const std::size_t idx = static_cast<std::size_t>(i) * k + j;
                            dx[idx] += inv_std->data[j] / static_cast<T>(N) *
                                       (static_cast<T>(N) * dxhat.data[idx] - s1(j) - xh[idx] * s2(j));
                        }
                } else {
#pragma omp parallel for schedule(static)
                    for (int i = 0; i < N; ++i)
                        for (int j = 0; j < k; ++j) {
                            const std::size_t idx = static_cast<std::size_t>(i) * k + j;
                            dx[idx] += dxhat.data[idx] * inv_std->data[j];
                        }
                }
            }
            if (gamma && gamma->requires_grad) {
                Tensor<T> dg({k}), tmp({k});
                kernels::col_sum_and_dot(dy, xh, N, k, tmp.ptr(), dg.ptr());
                for (int j = 0; j < k; ++j) gamma->grad->data[j] += dg(j);
            }
            if (beta && beta->requires_grad) kernels::col_sum_acc(dy, beta->grad->ptr(), N, k);
        };
    return out;
}

// Layer normalization over the last axis with affine parameters.
template <typename T>
Node<T>* layernorm(Graph<T>& g, Node<T>* x, Node<T>* gamma, Node<T>* beta, T eps = T(1e-5)) {
    detail::require(x->val().rank() >= 1, "layernorm: rank must be >= 1");
    const int k = x->val().shape.back();
    const int rows = static_cast<int>(x->val().numel()) / k;
    detail::require(static_cast<int>(gamma->val().numel()) == k &&
                        static_cast<int>(beta->val().numel()) == k,
                    "layernorm: affine length mismatch");

    auto xhat = std::make_shared<Tensor<T>>(std::vector<int>{rows, k});
    auto inv_std = std::make_shared<Tensor<T>>(std::vector<int>{rows});
    Tensor<T> y(x->val().shape);
    {
        const T* xp = x->val().ptr();
        const T* gp = gamma->val().ptr();
        const T* bp = beta->val().ptr();
#pragma omp parallel for schedule(static)
        for (int i = 0; i < rows; ++i) {
            const T* row = xp + static_cast<std::size_t>(i) * k;
            T m = T(0);
            for (int j = 0; j < k; ++j) m += row[j];
            m /= static_cast<T>(k);
            T v = T(0);
            for (int j = 0; j < k; ++j) {
                const T d = row[j] - m;
                v += d * d;
            }
            v /= static_cast<T>(k);
            const T is = T(1) / std::sqrt(v + eps);
            inv_std->data[static_cast<std::size_t>(i)] = is;
            T* xh = xhat->ptr() + static_cast<std::size_t>(i) * k;
            T* yrow = y.ptr() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < k; ++j) {
                xh[j] = (row[j] - m) * is;
                yrow[j] = xh[j] * gp[j] + bp[j];
            }
        }
    }

    Node<T>* out = g.op(std::move(y), {x, gamma, beta});
    if (out->requires_grad)
        out->backprop = [x, gamma, beta, out, xhat, inv_std, rows, k] {
            const T* dy = out->grad->ptr();
            const T* xh = xhat->ptr();
            const T* gp = gamma->value->ptr();
            if (x->requires_grad) {
                T* dx = x->grad->ptr();
#pragma omp parallel for schedule(static)
                for (int i = 0; i < rows; ++i) {
                    const T* dyr = dy + static_cast<std::size_t>(i) * k;
                    const T* xhr = xh + static_cast<std::size_t>(i) * k;
                    T s1 = T(0), s2 = T(0);
                    for (int j = 0; j < k; ++j) {
                        const T dxh = dyr[j] * gp[j];
                        s1 += dxh;
                        s2 += dxh * xhr[j];
                    }
                    const T is = inv_std->data[static_cast<std::size_t>(i)];
                    T* dxr = dx + static_cast<std::size_t>(i) * k;
                    for (int j = 0; j < k; ++j) {
                        const T dxh = dyr[j] * gp[j];
                        dxr[j] += is * (dxh - (s1 + xhr[j] * s2) / static_cast<T>(k));
                    }
                }
            }
            if (gamma->requires_grad) {
                Tensor<T> ds({k}), dg({k});
                kernels::col_sum_and_dot(dy, xh, rows, k, ds.ptr(), dg.ptr());
                for (int j = 0; j < k; ++j) gamma->grad->data[j] += dg(j);
            }
            if (beta->requires_grad) kernels::col_sum_acc(dy, beta->grad->ptr(), rows, k);
        };
    return out;
}

// Mean over rows of -log softmax(logits)[label]. Returns a scalar node.
template <typename T>
Node<T>* softmax_cross_entropy(Graph<T>& g, Node<T>* logits, const std::vector<int>& labels) {
    detail::require(logits->val().rank() == 2, "softmax_cross_entropy: logits must be [N,K]");
    const int N = logits->val().dim(0), K = logits->val().dim(1);
    detail::require(static_cast<int>(labels.size()) == N,
                    "softmax_cross_entropy: label count mismatch");
    for (int lab : labels)
        detail::require(lab >= 0 && lab < K, "softmax_cross_entropy: label out of range");

    auto probs = std::make_shared<Tensor<T>>(std::vector<int>{N, K});
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    Tensor<T> nll({N});
    kernels::softmax_xent_forward(logits->val().ptr(), labels_copy->data(), probs->ptr(),
                                  nll.ptr(), N, K);
    T total = T(0);
    for (int i = 0; i < N; ++i) total += nll(i);
    Tensor<T> loss({1});
    loss(0) = total / static_cast<T>(N);

    Node<T>* out = g.op(std::move(loss), {logits});
    if (out->requires_grad)
        out->backprop = [logits, out, probs, labels_copy, N, K] {
            const T scale = out->grad->data[0] / static_cast<T>(N);
            kernels::softmax_xent_backward_acc(probs->ptr(), labels_copy->data(),
                                               logits->grad->ptr(), N, K, scale);
        };
    return out;
}

// Scaled dot-product attention. q rows are grouped per image (S each), token
// rows likewise (T each). Projections live in the callers.
template <typename T>
Node<T>* attention_core(Graph<T>& g, Node<T>* q, Node<T>* kt, Node<T>* vt, int B, int S, int T_,
                        int heads) {
    detail::require(T_ >= 1, "attention: needs at least one token");
    const int k = q->val().dim(1);
    if (k % heads != 0) throw ConfigError("attention: width not divisible by head count");
    detail::require(q->val().dim(0) == B * S, "attention: query row count mismatch");
    detail::require(kt->val().dim(0) == B * T_ && vt->val().dim(0) == B * T_,
                    "attention: token row count mismatch");
    detail::require(kt->val().dim(1) == k && vt->val().dim(1) == k,
                    "attention: key/value width mismatch");

    auto attn = std::make_shared<Tensor<T>>(std::vector<int>{B, heads, S, T_});
    Tensor<T> y({B * S, k});
    kernels::attention_forward(q->val().ptr(), kt->val().ptr(), vt->val().ptr(), y.ptr(),
                               attn->ptr(), B, S, T_, heads, k);

    Node<T>* out = g.op(std::move(y), {q, kt, vt});
    if (out->requires_grad)
        out->backprop = [q, kt, vt, out, attn, B, S, T_, heads, k] {
            // all three inputs receive gradients in one fused sweep; scratch
            // buffers absorb the pieces for inputs that do not need them
            Tensor<T> dq_tmp, dk_tmp, dv_tmp;
            T* dq = nullptr;
            T* dk = nullptr;
            T* dv = nullptr;
            if (q->requires_grad) dq = q->grad->ptr();
            else { dq_tmp = Tensor<T>({B * S, k}); dq = dq_tmp.ptr(); }
            if (kt->requires_grad) dk = kt->grad->ptr();
            else { dk_tmp = Tensor<T>({B * T_, k}); dk = dk_tmp.ptr(); }
            if (vt->requires_grad) dv = vt->grad->ptr();
            else { dv_tmp = Tensor<T>({B * T_, k}); dv = dv_tmp.ptr(); }
            kernels::attention_backward_acc(out->grad->ptr(), q->value->ptr(), kt->value->ptr(),
                                            vt->value->ptr(), attn->ptr(), dq, dk, dv, B, S, T_,
                                            heads, k);
        };
    return out;
}

// Scalar contraction sum_i w_i * x_i; the workhorse of gradient checks.
template <typename T>
Node<T>* weighted_sum(Graph<T>& g, Node<T>* x, const Tensor<T>& weights) {
    detail::require(same_shape(x->val(), weights), "weighted_sum: weight shape mismatch");
    auto w_copy = std::make_shared<Tensor<T>>(weights);
    T s = T(0);
    for (std::size_t i = 0; i < weights.numel(); ++i) s += x->val().data[i] * w_copy->data[i];
    Tensor<T> y({1});
    y(0) = s;
    Node<T>* out = g.op(std::move(y), {x});
    if (out->requires_grad)
        out->backprop = [x, out, w_copy] {
            const T go = out->grad->data[0];
            for (std::size_t i = 0; i < w_copy->numel(); ++i)
                x->grad->data[i] += go * w_copy->data[i];
        };
    return out;
}

// fmap[B,c,h,w] -> [B,c] per-channel spatial mean
template <typename T>
Node<T>* global_avg_pool(Graph<T>& g, Node<T>* fmap) {
    detail::require(fmap->val().rank() == 4, "global_avg_pool: input must be [B,c,h,w]");
    const int B = fmap->val().dim(0), c = fmap->val().dim(1), h = fmap->val().dim(2),
              w = fmap->val().dim(3);
    Tensor<T> y({B, c});
    kernels::global_pool_forward(fmap->val().ptr(), y.ptr(), B, c, h, w);
    Node<T>* out = g.op(std::move(y), {fmap});
    if (out->requires_grad)
        out->backprop = [fmap, out, B, c, h, w] {
            kernels::global_pool_backward_acc(out->grad->ptr(), fmap->grad->ptr(), B, c, h, w);
        };
    return out;
}

// Bilinear lookup of fmap[B,c,h,w] at normalized points pts[B,S,2].
// Coordinates are inputs, not differentiated.
template <typename T>
Node<T>* bilinear_sample(Graph<T>& g, Node<T>* fmap, const Tensor<T>& pts) {
    detail::require(fmap->val().rank() == 4, "bilinear_sample: input must be [B,c,h,w]");
    detail::require(pts.rank() == 3 && pts.shape[2] == 2, "bilinear_sample: points must be [B,S,2]");
    const int B = fmap->val().dim(0), c = fmap->val().dim(1), h = fmap->val().dim(2),
              w = fmap->val().dim(3);
    detail::require(pts.dim(0) == B, "bilinear_sample: batch mismatch");
    const int S = pts.dim(1);
    for (const T& v : pts.data)
        detail::require(v >= T(0) && v <= T(1), "bilinear_sample: coordinate outside [0,1]");

    auto pts_copy = std::make_shared<Tensor<T>>(pts);
    Tensor<T> y({B * S, c});
    kernels::bilinear_forward(fmap->val().ptr(), pts_copy->ptr(), y.ptr(), B, c, h, w, S);
    Node<T>* out = g.op(std::move(y), {fmap});
    if (out->requires_grad)
        out->backprop = [fmap, out, pts_copy, B, c, h, w, S] {
            kernels::bilinear_backward_acc(out->grad->ptr(), pts_copy->ptr(), fmap->grad->ptr(),
                                           B, c, h, w, S);
        };
    return out;
}

// X[B,c] -> [B*S,c], row b replicated into rows b*S..b*S+S-1
template <typename T>
Node<T>* repeat_rows(Graph<T>& g, Node<T>* x, int S) {
    detail::require(x->val().rank() == 2, "repeat_rows: input must be [B,c]");
    detail::require(S >= 1, "repeat_rows: S must be >= 1");
    const int B = x->val().dim(0), c = x->val().dim(1);
    Tensor<T> y({B * S, c});
#pragma omp parallel for schedule(static)
    for (int r = 0; r < B * S; ++r) {
        const T* src = x->val().ptr() + static_cast<std::size_t>(r / S) * c;
        T* dst = y.ptr() + static_cast<std::size_t>(r) * c;
        for (int j = 0; j < c; ++j) dst[j] = src[j];
    }
    Node<T>* out = g.op(std::move(y), {x});
    if (out->requires_grad)
        out->backprop = [x, out, B, c, S] {
            const T* dy = out->grad->ptr();
#pragma omp parallel for schedule(static)
            for (int b = 0; b < B; ++b) {
                T* dst = x->grad->ptr() + static_cast<std::size_t>(b) * c;
                for (int s = 0; s < S; ++s) {
                    const T* src = dy + (static_cast<std::size_t>(b) * S + s) * c;
                    for (int j = 0; j < c; ++j) dst[j] += src[j];
                }
            }
        };
    return out;
}

// fmap[B,c,h,w] -> [B*h*w, c (+ 4(l+1))] feature tokens in row-major spatial
// order, optionally carrying the embedding of each cell's normalized center.
template <typename T>
Node<T>* feature_tokens(Graph<T>& g, Node<T>* fmap, int l, bool with_pos) {
    detail::require(fmap->val().rank() == 4, "feature_tokens: input must be [B,c,h,w]");
    const int B = fmap->val().dim(0), c = fmap->val().dim(1), h = fmap->val().dim(2),
              w = fmap->val().dim(3);
    const int pos = with_pos ? embed_dim(l) : 0;
    const int Ttok = h * w;
    const int width = c + pos;

    Tensor<T> pos_table({Ttok, pos > 0 ? pos : 1});
    if (with_pos)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                embed_point(static_cast<T>((j + 0.5) / w), static_cast<T>((i + 0.5) / h), l,
                            pos_table.ptr() + static_cast<std::size_t>(i * w + j) * pos);

    Tensor<T> y({B * Ttok, width});
    const T* fp = fmap->val().ptr();
#pragma omp parallel for schedule(static)
    for (int r = 0; r < B * Ttok; ++r) {
        const int b = r / Ttok;
        const int cell = r % Ttok;
        T* row = y.ptr() + static_cast<std::size_t>(r) * width;
        const T* img = fp + static_cast<std::size_t>(b) * c * Ttok;
        for (int ch = 0; ch < c; ++ch) row[ch] = img[static_cast<std::size_t>(ch) * Ttok + cell];
        for (int j = 0; j < pos; ++j)
            row[c + j] = pos_table.data[static_cast<std::size_t>(cell) * pos + j];
    }

    Node<T>* out = g.op(std::move(y), {fmap});
    if (out->requires_grad)
        out->backprop = [fmap, out, B, c, Ttok, width] {
            const T* dy = out->grad->ptr();
#pragma omp parallel for schedule(static)
            for (int r = 0; r < B * Ttok; ++r) {
                const int b = r / Ttok;
                const int cell = r % Ttok;
                const T* row = dy + static_cast<std::size_t>(r) * width;
                T* img = fmap->grad->ptr() + static_cast<std::size_t>(b) * c * Ttok;
                for (int ch = 0; ch < c; ++ch)
                    img[static_cast<std::size_t>(ch) * Ttok + cell] += row[ch];
            }
        };
    return out;
}

}  // namespace nfseg
