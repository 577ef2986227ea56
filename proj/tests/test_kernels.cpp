#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "nfseg/kernels.hpp"
#include "nfseg/reference.hpp"
#include "nfseg/rng.hpp"
#include "nfseg/tensor.hpp"

using namespace nfseg;

namespace {

Tensor<float> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

void check_identical(const Tensor<float>& a, const Tensor<float>& b) {
    REQUIRE(a.shape == b.shape);
    for (std::size_t i = 0; i < a.numel(); ++i) {
        CAPTURE(i);
        CHECK(a.data[i] == b.data[i]);  // bit-identical, not approximate
    }
}

}  // namespace

// The parallel kernels and the serial reference use the same per-output
// accumulation order, so agreement must be exact.

TEST_CASE("matmul kernels match serial reference bit for bit") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const int M = 1 + rng.uniform_int(40);
        const int K = 1 + rng.uniform_int(40);
        const int N = 1 + rng.uniform_int(40);
        auto a = random_tensor({M, K}, rng);
        auto b = random_tensor({K, N}, rng);
        auto bt = random_tensor({N, K}, rng);
        auto at = random_tensor({K, M}, rng);

        Tensor<float> c0({M, N}), c1({M, N});
        kernels::matmul_nn_acc(a.ptr(), b.ptr(), c0.ptr(), M, K, N);
        reference::matmul_nn_acc(a.ptr(), b.ptr(), c1.ptr(), M, K, N);
        check_identical(c0, c1);

        c0.fill(0); c1.fill(0);
        kernels::matmul_nt_acc(a.ptr(), bt.ptr(), c0.ptr(), M, K, N);
        reference::matmul_nt_acc(a.ptr(), bt.ptr(), c1.ptr(), M, K, N);
        check_identical(c0, c1);

        c0.fill(0); c1.fill(0);
        kernels::matmul_tn_acc(at.ptr(), b.ptr(), c0.ptr(), M, K, N);
        reference::matmul_tn_acc(at.ptr(), b.ptr(), c1.ptr(), M, K, N);
        check_identical(c0, c1);
    }
}

TEST_CASE("matmul_nn against a hand example") {
    // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
    Tensor<float> a({2, 2}, {1, 2, 3, 4});
    Tensor<float> b({2, 2}, {5, 6, 7, 8});
    Tensor<float> c({2, 2});
    kernels::matmul_nn_acc(a.ptr(), b.ptr(), c.ptr(), 2, 2, 2);
    CHECK(c(0, 0) == doctest::Approx(19));
    CHECK(c(0, 1) == doctest::Approx(22));
    CHECK(c(1, 0) == doctest::Approx(43));
    CHECK(c(1, 1) == doctest::Approx(50));
}

TEST_CASE("conv2d kernels match serial reference bit for bit") {
    Rng rng(12);
    struct Case {
        int B, C, H, W, F, kh, kw, stride, pad;
    };
    const Case cases[] = {
        {2, 3, 8, 8, 4, 3, 3, 1, 1},
        {1, 2, 9, 7, 3, 3, 3, 2, 1},
        {2, 1, 6, 6, 2, 2, 2, 2, 0},
        {1, 4, 5, 5, 5, 5, 5, 1, 2},
    };
    for (const auto& cs : cases) {
        const int Ho = kernels::conv_out_extent(cs.H, cs.kh, cs.stride, cs.pad);
        const int Wo = kernels::conv_out_extent(cs.W, cs.kw, cs.stride, cs.pad);
        auto x = random_tensor({cs.B, cs.C, cs.H, cs.W}, rng);
        auto w = random_tensor({cs.F, cs.C, cs.kh, cs.kw}, rng);
        Tensor<float> y0({cs.B, cs.F, Ho, Wo}), y1({cs.B, cs.F, Ho, Wo});
        kernels::conv2d_forward(x.ptr(), w.ptr(), y0.ptr(), cs.B, cs.C, cs.H, cs.W, cs.F, cs.kh,
                                cs.kw, cs.stride, cs.pad, Ho, Wo);
        reference::conv2d_forward(x.ptr(), w.ptr(), y1.ptr(), cs.B, cs.C, cs.H, cs.W, cs.F, cs.kh,
                                  cs.kw, cs.stride, cs.pad, Ho, Wo);
        check_identical(y0, y1);

        auto dy = random_tensor({cs.B, cs.F, Ho, Wo}, rng);
        Tensor<float> dx0(x.shape), dx1(x.shape);
        kernels::conv2d_backward_input_acc(dy.ptr(), w.ptr(), dx0.ptr(), cs.B, cs.C, cs.H, cs.W,
                                           cs.F, cs.kh, cs.kw, cs.stride, cs.pad, Ho, Wo);
        reference::conv2d_backward_input_acc(dy.ptr(), w.ptr(), dx1.ptr(), cs.B, cs.C, cs.H, cs.W,
                                             cs.F, cs.kh, cs.kw, cs.stride, cs.pad, Ho, Wo);
        check_identical(dx0, dx1);

        Tensor<float> dw0(w.shape), dw1(w.shape);
        kernels::conv2d_backward_weight_acc(dy.ptr(), x.ptr(), dw0.ptr(), cs.B, cs.C, cs.H, cs.W,
                                            cs.F, cs.kh, cs.kw, cs.stride, cs.pad, Ho, Wo);
        reference::conv2d_backward_weight_acc(dy.ptr(), x.ptr(), dw1.ptr(), cs.B, cs.C, cs.H,
                                              cs.W, cs.F, cs.kh, cs.kw, cs.stride, cs.pad, Ho, Wo);
        check_identical(dw0, dw1);
    }
}

TEST_CASE("conv2d identity kernel returns the input") {
    Rng rng(13);
    auto x = random_tensor({1, 1, 5, 5}, rng);
    Tensor<float> w({1, 1, 1, 1}, {1.0f});
    Tensor<float> y({1, 1, 5, 5});
    kernels::conv2d_forward(x.ptr(), w.ptr(), y.ptr(), 1, 1, 5, 5, 1, 1, 1, 1, 0, 5, 5);
    check_identical(x, y);
}

TEST_CASE("conv2d all-ones 3x3 kernel sums the window") {
    // constant input 1, pad 1: interior outputs see the full 3x3 window
    Tensor<float> x = Tensor<float>::full({1, 1, 5, 5}, 1.0f);
    Tensor<float> w = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
    Tensor<float> y({1, 1, 5, 5});
    kernels::conv2d_forward(x.ptr(), w.ptr(), y.ptr(), 1, 1, 5, 5, 1, 3, 3, 1, 1, 5, 5);
    for (int i = 1; i < 4; ++i)
        for (int j = 1; j < 4; ++j) CHECK(y(0, 0, i, j) == doctest::Approx(9.0));
    CHECK(y(0, 0, 0, 0) == doctest::Approx(4.0));  // corner window
    CHECK(y(0, 0, 0, 2) == doctest::Approx(6.0));  // edge window
}

TEST_CASE("conv2d output shape follows the stride formula") {
    CHECK(kernels::conv_out_extent(4, 2, 2, 0) == 2);
    CHECK(kernels::conv_out_extent(64, 3, 2, 1) == 32);
    CHECK(kernels::conv_out_extent(5, 3, 1, 1) == 5);
}

TEST_CASE("attention kernel matches serial reference bit for bit") {
    Rng rng(14);
    const int B = 2, S = 5, T = 7, heads = 2, k = 8;
    auto q = random_tensor({B * S, k}, rng);
    auto kt = random_tensor({B * T, k}, rng);
    auto vt = random_tensor({B * T, k}, rng);
    Tensor<float> o0({B * S, k}), o1({B * S, k});
    Tensor<float> a0({B, heads, S, T}), a1({B, heads, S, T});
    kernels::attention_forward(q.ptr(), kt.ptr(), vt.ptr(), o0.ptr(), a0.ptr(), B, S, T, heads, k);
    reference::attention_forward(q.ptr(), kt.ptr(), vt.ptr(), o1.ptr(), a1.ptr(), B, S, T, heads, k);
    check_identical(o0, o1);
    check_identical(a0, a1);
}

TEST_CASE("attention output is bit-invariant under token permutation") {
    Rng rng(15);
    const int B = 1, S = 4, T = 6, heads = 2, k = 8;
    auto q = random_tensor({B * S, k}, rng);
    auto kt = random_tensor({B * T, k}, rng);
    auto vt = random_tensor({B * T, k}, rng);

    // permuted copies of the token rows
    const int perm[T] = {4, 0, 5, 2, 1, 3};
    Tensor<float> ktp({B * T, k}), vtp({B * T, k});
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < k; ++j) {
            ktp(t, j) = kt(perm[t], j);
            vtp(t, j) = vt(perm[t], j);
        }

    Tensor<float> o0({B * S, k}), o1({B * S, k});
    Tensor<float> attn({B, heads, S, T});
    kernels::attention_forward(q.ptr(), kt.ptr(), vt.ptr(), o0.ptr(), attn.ptr(), B, S, T, heads, k);
    kernels::attention_forward(q.ptr(), ktp.ptr(), vtp.ptr(), o1.ptr(), attn.ptr(), B, S, T, heads, k);
    check_identical(o0, o1);
}

TEST_CASE("bilinear and pooling kernels match serial reference bit for bit") {
    Rng rng(16);
    const int B = 2, c = 3, h = 4, w = 5, S = 9;
    auto fmap = random_tensor({B, c, h, w}, rng);
    Tensor<float> pts({B, S, 2});
    for (auto& v : pts.data) v = static_cast<float>(rng.uniform());

    Tensor<float> o0({B * S, c}), o1({B * S, c});
    kernels::bilinear_forward(fmap.ptr(), pts.ptr(), o0.ptr(), B, c, h, w, S);
    reference::bilinear_forward(fmap.ptr(), pts.ptr(), o1.ptr(), B, c, h, w, S);
    check_identical(o0, o1);

    Tensor<float> p0({B, c}), p1({B, c});
    kernels::global_pool_forward(fmap.ptr(), p0.ptr(), B, c, h, w);
    reference::global_pool_forward(fmap.ptr(), p1.ptr(), B, c, h, w);
    check_identical(p0, p1);
}

TEST_CASE("column statistics match serial reference bit for bit") {
    Rng rng(17);
    const int N = 37, k = 11;
    auto x = random_tensor({N, k}, rng);
    Tensor<float> m0({k}), v0({k}), m1({k}), v1({k});
    kernels::col_mean_var(x.ptr(), N, k, m0.ptr(), v0.ptr());
    reference::col_mean_var(x.ptr(), N, k, m1.ptr(), v1.ptr());
    check_identical(m0, m1);
    check_identical(v0, v1);
}
