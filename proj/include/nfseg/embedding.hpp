#pragma once

#include <cmath>
#include <vector>

#include "nfseg/errors.hpp"
#include "nfseg/tensor.hpp"

namespace nfseg {

inline constexpr double kPi = 3.14159265358979323846264338327950288;

// Fourier features of a single normalized coordinate:
//   (sin(2^0 pi x), ..., sin(2^l pi x), cos(2^0 pi x), ..., cos(2^l pi x))
template <typename T>
void fourier_embed(T x, int l, T* out) {
    if (!(x >= T(0) && x <= T(1))) throw ContractViolation("fourier_embed: coordinate outside [0,1]");
    if (l < 0) throw ContractViolation("fourier_embed: l must be >= 0");
    double f = kPi;
    for (int j = 0; j <= l; ++j) {
        out[j] = static_cast<T>(std::sin(f * static_cast<double>(x)));
        out[l + 1 + j] = static_cast<T>(std::cos(f * static_cast<double>(x)));
        f *= 2.0;
    }
}

template <typename T>
std::vector<T> fourier_embed(T x, int l) {
    std::vector<T> out(static_cast<std::size_t>(2 * (l + 1)));
    fourier_embed(x, l, out.data());
    return out;
}

inline int embed_dim(int l) { return 4 * (l + 1); }

// Both coordinates embedded independently, x block first.
template <typename T>
void embed_point(T x, T y, int l, T* out) {
    fourier_embed(x, l, out);
    fourier_embed(y, l, out + 2 * (l + 1));
}

template <typename T>
std::vector<T> embed_point(T x, T y, int l) {
    std::vector<T> out(static_cast<std::size_t>(embed_dim(l)));
    embed_point(x, y, l, out.data());
    return out;
}

// coords[...,2] (row-major pairs) -> [N, 4(l+1)]
template <typename T>
Tensor<T> embed_points(const Tensor<T>& coords, int l) {
    if (coords.rank() < 1 || coords.shape.back() != 2)
        throw ContractViolation("embed_points: last extent must be 2");
    const int n = static_cast<int>(coords.numel() / 2);
    Tensor<T> out({n, embed_dim(l)});
    for (int i = 0; i < n; ++i)
        embed_point(coords.data[2 * static_cast<std::size_t>(i)],
                    coords.data[2 * static_cast<std::size_t>(i) + 1], l,
                    out.ptr() + static_cast<std::size_t>(i) * embed_dim(l));
    return out;
}

}  // namespace nfseg
