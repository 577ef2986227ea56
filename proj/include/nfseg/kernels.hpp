#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

// OpenMP-parallel compute kernels. Every kernel assigns each output element
// to exactly one thread and keeps a fixed accumulation order per element, so
// results are bit-identical for any thread count and match the serial
// reference implementations in reference.hpp bit for bit.
//
// Backward kernels accumulate (+=) into their gradient outputs; callers zero
// the buffers when accumulation is not wanted.

namespace nfseg::kernels {

// Canonical token order for one attention query: tokens sorted by score,
// ties broken by key then value content. The order is a pure function of
// token content, so reductions that follow it yield bit-identical results
// under any permutation of the incoming tokens.
template <typename T>
inline void canonical_token_order(const T* scores, const T* kt, const T* vt, int T_, int k,
                                  int head_off, int hd, int* perm) {
    for (int t = 0; t < T_; ++t) perm[t] = t;
    std::sort(perm, perm + T_, [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        const T* ka = kt + static_cast<std::size_t>(a) * k + head_off;
        const T* kb = kt + static_cast<std::size_t>(b) * k + head_off;
        for (int d = 0; d < hd; ++d)
            if (ka[d] != kb[d]) return ka[d] < kb[d];
        const T* va = vt + static_cast<std::size_t>(a) * k + head_off;
        const T* vb = vt + static_cast<std::size_t>(b) * k + head_off;
        for (int d = 0; d < hd; ++d)
            if (va[d] != vb[d]) return va[d] < vb[d];
        return false;
    });
}

// ---------------------------------------------------------------- matmul ---

// c[M,N] += a[M,K] * b[K,N]
template <typename T>
void matmul_nn_acc(const T* a, const T* b, T* c, int M, int K, int N) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * N;
        const T* arow = a + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const T av = arow[k];
            const T* brow = b + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[M,N] += a[M,K] * b[N,K]^T
template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, int M, int K, int N) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * K;
        T* crow = c + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const T* brow = b + static_cast<std::size_t>(j) * K;
            T s = crow[j];
            for (int k = 0; k < K; ++k) s += arow[k] * brow[k];
            crow[j] = s;
        }
    }
}

// c[M,N] += a[K,M]^T * b[K,N]
template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, int M, int K, int N) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * N;
        for (int k = 0; k < K; ++k) {
            const T av = a[static_cast<std::size_t>(k) * M + i];
            const T* brow = b + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void transpose(const T* a, T* at, int rows, int cols) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            at[static_cast<std::size_t>(j) * rows + i] = a[static_cast<std::size_t>(i) * cols + j];
}

template <typename T>
void add_bias_rows(T* y, const T* bias, int rows, int cols) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        T* row = y + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) row[j] += bias[j];
    }
}

// db[j] += sum_i dy[i,j]
template <typename T>
void col_sum_acc(const T* dy, T* db, int rows, int cols) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < cols; ++j) {
        T s = db[j];
        for (int i = 0; i < rows; ++i) s += dy[static_cast<std::size_t>(i) * cols + j];
        db[j] = s;
    }
}

// ------------------------------------------------------------ elementwise ---

template <typename T>
void relu_forward(const T* x, T* y, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward_acc(const T* dy, const T* x, T* dx, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        if (x[i] > T(0)) dx[i] += dy[i];
}

template <typename T>
void ewise_add(const T* a, const T* b, T* y, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] = a[i] + b[i];
}

template <typename T>
void ewise_mul(const T* a, const T* b, T* y, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] = a[i] * b[i];
}

template <typename T>
void ewise_mul_acc(const T* a, const T* b, T* y, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] += a[i] * b[i];
}

template <typename T>
void ewise_add_acc(const T* a, T* y, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] += a[i];
}

// ----------------------------------------------------------------- conv2d ---

inline int conv_out_extent(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

// y[B,F,Ho,Wo] = cross-correlation of x[B,C,H,W] with w[F,C,kh,kw]
template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, int B, int C, int H, int W, int F, int kh,
                    int kw, int stride, int pad, int Ho, int Wo) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
        for (int f = 0; f < F; ++f) {
            for (int oh = 0; oh < Ho; ++oh) {
                T* yrow = y + ((static_cast<std::size_t>(b) * F + f) * Ho + oh) * Wo;
                for (int ow = 0; ow < Wo; ++ow) yrow[ow] = T(0);
                for (int c = 0; c < C; ++c) {
                    for (int i = 0; i < kh; ++i) {
                        const int ih = oh * stride + i - pad;
                        if (ih < 0 || ih >= H) continue;
                        const T* xrow = x + ((static_cast<std::size_t>(b) * C + c) * H + ih) * W;
                        for (int j = 0; j < kw; ++j) {
                            const T wv = w[((static_cast<std::size_t>(f) * C + c) * kh + i) * kw + j];
                            // tight ow range keeping iw = ow*stride + j - pad inside [0,W)
                            int lo = 0;
                            if (j - pad < 0) lo = (pad - j + stride - 1) / stride;
                            int hi = Wo - 1;
                            const int max_iw = W - 1 + pad - j;
                            if (max_iw < 0) continue;
                            if (max_iw / stride < hi) hi = max_iw / stride;
                            const T* xoff = xrow + j - pad;
                            for (int ow = lo; ow <= hi; ++ow)
                                yrow[ow] += wv * xoff[static_cast<std::size_t>(ow) * stride];
                        }
                    }
                }
            }
        }
    }
}

// dx[B,C,H,W] += adjoint of conv2d_forward w.r.t. x
template <typename T>
void conv2d_backward_input_acc(const T* dy, const T* w, T* dx, int B, int C, int H, int W, int F,
                               int kh, int kw, int stride, int pad, int Ho, int Wo) {
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) {
        for (int f = 0; f < F; ++f) {
            for (int oh = 0; oh < Ho; ++oh) {
                const T* dyrow = dy + ((static_cast<std::size_t>(b) * F + f) * Ho + oh) * Wo;
                for (int c = 0; c < C; ++c) {
                    for (int i = 0; i < kh; ++i) {
                        const int ih = oh * stride + i - pad;
                        if (ih < 0 || ih >= H) continue;
                        T* dxrow = dx + ((static_cast<std::size_t>(b) * C + c) * H + ih) * W;
                        for (int j = 0; j < kw; ++j) {
                            const T wv = w[((static_cast<std::size_t>(f) * C + c) * kh + i) * kw + j];
                            int lo = 0;
                            if (j - pad < 0) lo = (pad - j + stride - 1) / stride;
                            int hi = Wo - 1;
                            const int max_iw = W - 1 + pad - j;
                            if (max_iw < 0) continue;
                            if (max_iw / stride < hi) hi = max_iw / stride;
                            T* dxoff = dxrow + j - pad;
                            for (int ow = lo; ow <= hi; ++ow)
                                dxoff[static_cast<std::size_t>(ow) * stride] += wv * dyrow[ow];
                        }
                    }
                }
            }
        }
    }
}

// dw[F,C,kh,kw] += adjoint of conv2d_forward w.r.t. w (gather form)
template <typename T>
void conv2d_backward_weight_acc(const T* dy, const T* x, T* dw, int B, int C, int H, int W, int F,
                                int kh, int kw, int stride, int pad, int Ho, int Wo) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int f = 0; f < F; ++f) {
        for (int c = 0; c < C; ++c) {
            for (int i = 0; i < kh; ++i) {
                for (int j = 0; j < kw; ++j) {
                    T s = T(0);
                    for (int b = 0; b < B; ++b) {
                        const T* dyimg = dy + (static_cast<std::size_t>(b) * F + f) * Ho * Wo;
                        const T* ximg = x + (static_cast<std::size_t>(b) * C + c) * H * W;
                        for (int oh = 0; oh < Ho; ++oh) {
                            const int ih = oh * stride + i - pad;
                            if (ih < 0 || ih >= H) continue;
                            const T* dyrow = dyimg + static_cast<std::size_t>(oh) * Wo;
                            const T* xrow = ximg + static_cast<std::size_t>(ih) * W;
                            int lo = 0;
                            if (j - pad < 0) lo = (pad - j + stride - 1) / stride;
                            int hi = Wo - 1;
                            const int max_iw = W - 1 + pad - j;
                            if (max_iw < 0) continue;
                            if (max_iw / stride < hi) hi = max_iw / stride;
                            const T* xoff = xrow + j - pad;
                            for (int ow = lo; ow <= hi; ++ow)
                                s += xoff[static_cast<std::size_t>(ow) * stride] * dyrow[ow];
                        }
                    }
                    dw[((static_cast<std::size_t>(f) * C + c) * kh + i) * kw + j] += s;
                }
            }
        }
    }
}

// ------------------------------------------------------------- reductions ---

// Per-feature mean and biased variance over rows of x[N,k]. Serial on
// purpose: feature statistics feed batchnorm, whose result must not depend
// on the thread count. The j-inner loops vectorize; N*k stays small enough
// that this is never a bottleneck.
template <typename T>
void col_mean_var(const T* x, int N, int k, T* mean, T* var) {
    for (int j = 0; j < k; ++j) mean[j] = T(0);
    for (int i = 0; i < N; ++i) {
        const T* row = x + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) mean[j] += row[j];
    }
    for (int j = 0; j < k; ++j) mean[j] /= static_cast<T>(N);
    for (int j = 0; j < k; ++j) var[j] = T(0);
    for (int i = 0; i < N; ++i) {
        const T* row = x + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            const T d = row[j] - mean[j];
            var[j] += d * d;
        }
    }
    for (int j = 0; j < k; ++j) var[j] /= static_cast<T>(N);
}

// s1[j] += sum_i a[i,j]; s2[j] += sum_i a[i,j]*b[i,j]  (batchnorm backward)
template <typename T>
void col_sum_and_dot(const T* a, const T* b, int N, int k, T* s1, T* s2) {
    for (int i = 0; i < N; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        const T* brow = b + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            s1[j] += arow[j];
            s2[j] += arow[j] * brow[j];
        }
    }
}

// --------------------------------------------------------------- softmax ---

// Row-wise softmax probabilities and per-row negative log-likelihood.
template <typename T>
void softmax_xent_forward(const T* logits, const int* labels, T* probs, T* nll, int N, int K) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < N; ++i) {
        const T* row = logits + static_cast<std::size_t>(i) * K;
        T* prow = probs + static_cast<std::size_t>(i) * K;
        T m = row[0];
        for (int j = 1; j < K; ++j) m = std::max(m, row[j]);
        T denom = T(0);
        for (int j = 0; j < K; ++j) {
            prow[j] = std::exp(row[j] - m);
            denom += prow[j];
        }
        for (int j = 0; j < K; ++j) prow[j] /= denom;
        nll[i] = std::log(denom) + m - row[labels[i]];
    }
}

// dlogits[i,j] += scale * (probs[i,j] - onehot(labels[i]))
template <typename T>
void softmax_xent_backward_acc(const T* probs, const int* labels, T* dlogits, int N, int K,
                               T scale) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < N; ++i) {
        const T* prow = probs + static_cast<std::size_t>(i) * K;
        T* drow = dlogits + static_cast<std::size_t>(i) * K;
        for (int j = 0; j < K; ++j) drow[j] += scale * prow[j];
        drow[labels[i]] -= scale;
    }
}

// -------------------------------------------------------------- attention ---

// Scaled dot-product attention over per-image token sets.
//   q[B*S,k], kt[B*T,k], vt[B*T,k] -> out[B*S,k], attn[B*heads*S*T]
// Token reductions follow the canonical content order, so outputs are
// bit-invariant under any permutation of a query's tokens.
template <typename T>
void attention_forward(const T* q, const T* kt, const T* vt, T* out, T* attn, int B, int S, int T_,
                       int heads, int k) {
    const int hd = k / heads;
    const T inv_scale = T(1) / std::sqrt(static_cast<T>(hd));
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
        for (int h = 0; h < heads; ++h) {
            std::vector<int> perm(static_cast<std::size_t>(T_));
            const T* kimg = kt + static_cast<std::size_t>(b) * T_ * k;
            const T* vimg = vt + static_cast<std::size_t>(b) * T_ * k;
            for (int s = 0; s < S; ++s) {
                const T* qrow = q + (static_cast<std::size_t>(b) * S + s) * k + h * hd;
                T* arow = attn + ((static_cast<std::size_t>(b) * heads + h) * S + s) * T_;
                for (int t = 0; t < T_; ++t) {
                    const T* krow = kimg + static_cast<std::size_t>(t) * k + h * hd;
                    T dot = T(0);
                    for (int d = 0; d < hd; ++d) dot += qrow[d] * krow[d];
                    arow[t] = dot * inv_scale;
                }
                canonical_token_order(arow, kimg, vimg, T_, k, h * hd, hd, perm.data());
                T m = arow[0];
                for (int t = 1; t < T_; ++t) m = std::max(m, arow[t]);
                T denom = T(0);
                for (int t = 0; t < T_; ++t) arow[t] = std::exp(arow[t] - m);
                for (int t = 0; t < T_; ++t) denom += arow[static_cast<std::size_t>(perm[t])];
                for (int t = 0; t < T_; ++t) arow[t] /= denom;
                T* orow = out + (static_cast<std::size_t>(b) * S + s) * k + h * hd;
                for (int d = 0; d < hd; ++d) orow[d] = T(0);
                for (int t = 0; t < T_; ++t) {
                    const int tt = perm[static_cast<std::size_t>(t)];
                    const T a = arow[tt];
                    const T* vrow = vimg + static_cast<std::size_t>(tt) * k + h * hd;
                    for (int d = 0; d < hd; ++d) orow[d] += a * vrow[d];
                }
            }
        }
    }
}

// Adjoint of attention_forward. Accumulates into dq, dkt, dvt.
template <typename T>
void attention_backward_acc(const T* dout, const T* q, const T* kt, const T* vt, const T* attn,
                            T* dq, T* dkt, T* dvt, int B, int S, int T_, int heads, int k) {
    const int hd = k / heads;
    const T inv_scale = T(1) / std::sqrt(static_cast<T>(hd));
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
        for (int h = 0; h < heads; ++h) {
            std::vector<T> da(static_cast<std::size_t>(T_));
            for (int s = 0; s < S; ++s) {
                const T* arow = attn + ((static_cast<std::size_t>(b) * heads + h) * S + s) * T_;
                const T* dorow = dout + (static_cast<std::size_t>(b) * S + s) * k + h * hd;
                // dvt[t,d] += attn[s,t] * dout[s,d]; da[t] = dout . v[t]
                T dot_da_a = T(0);
                for (int t = 0; t < T_; ++t) {
                    const std::size_t voff = (static_cast<std::size_t>(b) * T_ + t) * k + h * hd;
                    T acc = T(0);
                    for (int d = 0; d < hd; ++d) {
                        dvt[voff + d] += arow[t] * dorow[d];
                        acc += dorow[d] * vt[voff + d];
                    }
                    da[static_cast<std::size_t>(t)] = acc;
                    dot_da_a += acc * arow[t];
                }
                const T* qrow = q + (static_cast<std::size_t>(b) * S + s) * k + h * hd;
                T* dqrow = dq + (static_cast<std::size_t>(b) * S + s) * k + h * hd;
                for (int t = 0; t < T_; ++t) {
                    const T ds = arow[t] * (da[static_cast<std::size_t>(t)] - dot_da_a) * inv_scale;
                    const std::size_t koff = (static_cast<std::size_t>(b) * T_ + t) * k + h * hd;
                    for (int d = 0; d < hd; ++d) {
                        dqrow[d] += ds * kt[koff + d];
                        dkt[koff + d] += ds * qrow[d];
                    }
                }
            }
        }
    }
}

// --------------------------------------------------- feature-map sampling ---

// Half-pixel-aligned bilinear weights for a normalized coordinate in [0,1].
// extent is the number of cells along the axis.
template <typename T>
inline void bilinear_axis(T coord, int extent, int& i0, int& i1, T& frac) {
    T u = coord * static_cast<T>(extent) - T(0.5);
    if (u < T(0)) u = T(0);
    const T maxu = static_cast<T>(extent - 1);
    if (u > maxu) u = maxu;
    i0 = static_cast<int>(std::floor(u));
    if (i0 > extent - 1) i0 = extent - 1;
    i1 = std::min(i0 + 1, extent - 1);
    frac = u - static_cast<T>(i0);
}

// out[B*S,c] = bilinear lookup of fmap[B,c,h,w] at pts[B,S,2] (x,y in [0,1])
template <typename T>
void bilinear_forward(const T* fmap, const T* pts, T* out, int B, int c, int h, int w, int S) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < B * S; ++r) {
        const int b = r / S;
        const T x = pts[static_cast<std::size_t>(r) * 2];
        const T y = pts[static_cast<std::size_t>(r) * 2 + 1];
        int j0, j1, i0, i1;
        T fx, fy;
        bilinear_axis(x, w, j0, j1, fx);
        bilinear_axis(y, h, i0, i1, fy);
        const T w00 = (T(1) - fy) * (T(1) - fx);
        const T w01 = (T(1) - fy) * fx;
        const T w10 = fy * (T(1) - fx);
        const T w11 = fy * fx;
        const T* img = fmap + static_cast<std::size_t>(b) * c * h * w;
        T* orow = out + static_cast<std::size_t>(r) * c;
        for (int ch = 0; ch < c; ++ch) {
            const T* plane = img + static_cast<std::size_t>(ch) * h * w;
            orow[ch] = w00 * plane[static_cast<std::size_t>(i0) * w + j0] +
                       w01 * plane[static_cast<std::size_t>(i0) * w + j1] +
                       w10 * plane[static_cast<std::size_t>(i1) * w + j0] +
                       w11 * plane[static_cast<std::size_t>(i1) * w + j1];
        }
    }
}

// dfmap += adjoint of bilinear_forward (scatter; parallel over images)
template <typename T>
void bilinear_backward_acc(const T* dout, const T* pts, T* dfmap, int B, int c, int h, int w,
                           int S) {
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) {
        T* img = dfmap + static_cast<std::size_t>(b) * c * h * w;
        for (int s = 0; s < S; ++s) {
            const int r = b * S + s;
            const T x = pts[static_cast<std::size_t>(r) * 2];
            const T y = pts[static_cast<std::size_t>(r) * 2 + 1];
            int j0, j1, i0, i1;
            T fx, fy;
            bilinear_axis(x, w, j0, j1, fx);
            bilinear_axis(y, h, i0, i1, fy);
            const T w00 = (T(1) - fy) * (T(1) - fx);
            const T w01 = (T(1) - fy) * fx;
            const T w10 = fy * (T(1) - fx);
            const T w11 = fy * fx;
            const T* drow = dout + static_cast<std::size_t>(r) * c;
            for (int ch = 0; ch < c; ++ch) {
                T* plane = img + static_cast<std::size_t>(ch) * h * w;
                plane[static_cast<std::size_t>(i0) * w + j0] += w00 * drow[ch];
                plane[static_cast<std::size_t>(i0) * w + j1] += w01 * drow[ch];
                plane[static_cast<std::size_t>(i1) * w + j0] += w10 * drow[ch];
                plane[static_cast<std::size_t>(i1) * w + j1] += w11 * drow[ch];
            }
        }
    }
}

// out[b,ch] = mean over the h*w cells of fmap[b,ch,:,:]
template <typename T>
void global_pool_forward(const T* fmap, T* out, int B, int c, int h, int w) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            const T* p = fmap + (static_cast<std::size_t>(b) * c + ch) * plane;
            T s = T(0);
            for (std::size_t i = 0; i < plane; ++i) s += p[i];
            out[static_cast<std::size_t>(b) * c + ch] = s / static_cast<T>(plane);
        }
    }
}

template <typename T>
void global_pool_backward_acc(const T* dout, T* dfmap, int B, int c, int h, int w) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            const T g = dout[static_cast<std::size_t>(b) * c + ch] / static_cast<T>(plane);
            T* p = dfmap + (static_cast<std::size_t>(b) * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] += g;
        }
    }
}

}  // namespace nfseg::kernels
