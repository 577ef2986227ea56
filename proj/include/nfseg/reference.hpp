#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "nfseg/kernels.hpp"

// Serial reference implementations of the parallel kernels, written as the
// plainest possible loops. Tests assert bit-identical agreement with
// nfseg::kernels (same per-output accumulation order), which pins down the
// parallelization as race-free; the benchmark tool compares their speed.

namespace nfseg::reference {

template <typename T>
void matmul_nn_acc(const T* a, const T* b, T* c, int M, int K, int N) {
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) {
            T s = c[static_cast<std::size_t>(i) * N + j];
            for (int k = 0; k < K; ++k)
                s += a[static_cast<std::size_t>(i) * K + k] * b[static_cast<std::size_t>(k) * N + j];
            c[static_cast<std::size_t>(i) * N + j] = s;
        }
}

template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, int M, int K, int N) {
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) {
            T s = c[static_cast<std::size_t>(i) * N + j];
            for (int k = 0; k < K; ++k)
                s += a[static_cast<std::size_t>(i) * K + k] * b[static_cast<std::size_t>(j) * K + k];
            c[static_cast<std::size_t>(i) * N + j] = s;
        }
}

template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, int M, int K, int N) {
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) {
            T s = c[static_cast<std::size_t>(i) * N + j];
            for (int k = 0; k < K; ++k)
                s += a[static_cast<std::size_t>(k) * M + i] * b[static_cast<std::size_t>(k) * N + j];
            c[static_cast<std::size_t>(i) * N + j] = s;
        }
}

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, int B, int C, int H, int W, int F, int kh,
                    int kw, int stride, int pad, int Ho, int Wo) {
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    T s = T(0);
                    for (int c = 0; c < C; ++c)
                        for (int i = 0; i < kh; ++i)
                            for (int j = 0; j < kw; ++j) {
                                const int ih = oh * stride + i - pad;
                                const int iw = ow * stride + j - pad;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                s += w[((static_cast<std::size_t>(f) * C + c) * kh + i) * kw + j] *
                                     x[((static_cast<std::size_t>(b) * C + c) * H + ih) * W + iw];
                            }
                    y[((static_cast<std::size_t>(b) * F + f) * Ho + oh) * Wo + ow] = s;
                }
}

template <typename T>
void conv2d_backward_input_acc(const T* dy, const T* w, T* dx, int B, int C, int H, int W, int F,
                               int kh, int kw, int stride, int pad, int Ho, int Wo) {
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
            for (int oh = 0; oh < Ho; ++oh)
                for (int c = 0; c < C; ++c)
                    for (int i = 0; i < kh; ++i)
                        for (int j = 0; j < kw; ++j)
                            for (int ow = 0; ow < Wo; ++ow) {
                                const int ih = oh * stride + i - pad;
                                const int iw = ow * stride + j - pad;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                dx[((static_cast<std::size_t>(b) * C + c) * H + ih) * W + iw] +=
                                    w[((static_cast<std::size_t>(f) * C + c) * kh + i) * kw + j] *
                                    dy[((static_cast<std::size_t>(b) * F + f) * Ho + oh) * Wo + ow];
                            }
}

template <typename T>
void conv2d_backward_weight_acc(const T* dy, const T* x, T* dw, int B, int C, int H, int W, int F,
                                int kh, int kw, int stride, int pad, int Ho, int Wo) {
    for (int f = 0; f < F; ++f)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j) {
                    T s = T(0);
                    for (int b = 0; b < B; ++b)
                        for (int oh = 0; oh < Ho; ++oh)
                            for (int ow = 0; ow < Wo; ++ow) {
                                const int ih = oh * stride + i - pad;
                                const int iw = ow * stride + j - pad;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                s += x[((static_cast<std::size_t>(b) * C + c) * H + ih) * W + iw] *
                                     dy[((static_cast<std::size_t>(b) * F + f) * Ho + oh) * Wo + ow];
                            }
                    dw[((static_cast<std::size_t>(f) * C + c) * kh + i) * kw + j] += s;
                }
}

template <typename T>
void col_mean_var(const T* x, int N, int k, T* mean, T* var) {
    for (int j = 0; j < k; ++j) {
        T m = T(0);
        for (int i = 0; i < N; ++i) m += x[static_cast<std::size_t>(i) * k + j];
        mean[j] = m / static_cast<T>(N);
    }
    for (int j = 0; j < k; ++j) {
        T v = T(0);
        for (int i = 0; i < N; ++i) {
            const T d = x[static_cast<std::size_t>(i) * k + j] - mean[j];
            v += d * d;
        }
        var[j] = v / static_cast<T>(N);
    }
}

template <typename T>
void attention_forward(const T* q, const T* kt, const T* vt, T* out, T* attn, int B, int S, int T_,
                       int heads, int k) {
    const int hd = k / heads;
    const T inv_scale = T(1) / std::sqrt(static_cast<T>(hd));
    std::vector<int> perm(static_cast<std::size_t>(T_));
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < heads; ++h) {
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
                kernels::canonical_token_order(arow, kimg, vimg, T_, k, h * hd, hd, perm.data());
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

template <typename T>
void bilinear_forward(const T* fmap, const T* pts, T* out, int B, int c, int h, int w, int S) {
    for (int r = 0; r < B * S; ++r) {
        const int b = r / S;
        int j0, j1, i0, i1;
        T fx, fy;
        kernels::bilinear_axis(pts[static_cast<std::size_t>(r) * 2], w, j0, j1, fx);
        kernels::bilinear_axis(pts[static_cast<std::size_t>(r) * 2 + 1], h, i0, i1, fy);
        const T w00 = (T(1) - fy) * (T(1) - fx);
        const T w01 = (T(1) - fy) * fx;
        const T w10 = fy * (T(1) - fx);
        const T w11 = fy * fx;
        for (int ch = 0; ch < c; ++ch) {
            const T* plane = fmap + (static_cast<std::size_t>(b) * c + ch) * h * w;
            out[static_cast<std::size_t>(r) * c + ch] =
                w00 * plane[static_cast<std::size_t>(i0) * w + j0] +
                w01 * plane[static_cast<std::size_t>(i0) * w + j1] +
                w10 * plane[static_cast<std::size_t>(i1) * w + j0] +
                w11 * plane[static_cast<std::size_t>(i1) * w + j1];
        }
    }
}

template <typename T>
void global_pool_forward(const T* fmap, T* out, int B, int c, int h, int w) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int b = 0; b < B; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const T* p = fmap + (static_cast<std::size_t>(b) * c + ch) * plane;
            T s = T(0);
            for (std::size_t i = 0; i < plane; ++i) s += p[i];
            out[static_cast<std::size_t>(b) * c + ch] = s / static_cast<T>(plane);
        }
}

}  // namespace nfseg::reference
