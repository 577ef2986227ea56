// Compares the OpenMP kernels against their serial reference on
// training-shaped workloads. Build and run:
//   cmake --build build --target bench_kernels && ./build/tools/bench_kernels

#include <omp.h>

#include <cstdio>
#include <functional>

#include "nfseg/kernels.hpp"
#include "nfseg/reference.hpp"
#include "nfseg/rng.hpp"
#include "nfseg/tensor.hpp"

using namespace nfseg;

namespace {

Tensor<float> random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

double time_best_of(int reps, const std::function<void()>& fn) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const double t0 = omp_get_wtime();
        fn();
        best = std::min(best, omp_get_wtime() - t0);
    }
    return best;
}

void report(const char* name, double serial_s, double parallel_s) {
    std::printf("%-26s serial %9.4f ms   openmp %9.4f ms   speedup %5.2fx\n", name,
                serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    Rng rng(42);

    {
        const int M = 2048, K = 384, N = 128;  // decoder-block linear, desk batch
        auto a = random_tensor({M, K}, rng);
        auto b = random_tensor({K, N}, rng);
        Tensor<float> c({M, N});
        const double ts = time_best_of(3, [&] {
            c.fill(0);
            reference::matmul_nn_acc(a.ptr(), b.ptr(), c.ptr(), M, K, N);
        });
        const double tp = time_best_of(3, [&] {
            c.fill(0);
            kernels::matmul_nn_acc(a.ptr(), b.ptr(), c.ptr(), M, K, N);
        });
        report("matmul_nn 2048x384x128", ts, tp);
    }

    {
        const int B = 8, C = 32, H = 32, W = 32, F = 64, k = 3, stride = 1, pad = 1;
        const int Ho = kernels::conv_out_extent(H, k, stride, pad);
        const int Wo = kernels::conv_out_extent(W, k, stride, pad);
        auto x = random_tensor({B, C, H, W}, rng);
        auto w = random_tensor({F, C, k, k}, rng);
        Tensor<float> y({B, F, Ho, Wo});
        const double ts = time_best_of(3, [&] {
            reference::conv2d_forward(x.ptr(), w.ptr(), y.ptr(), B, C, H, W, F, k, k, stride, pad,
                                      Ho, Wo);
        });
        const double tp = time_best_of(3, [&] {
            kernels::conv2d_forward(x.ptr(), w.ptr(), y.ptr(), B, C, H, W, F, k, k, stride, pad,
                                    Ho, Wo);
        });
        report("conv2d fwd 8x32x32x32", ts, tp);

        auto dy = random_tensor({B, F, Ho, Wo}, rng);
        Tensor<float> dx({B, C, H, W});
        const double ts2 = time_best_of(3, [&] {
            dx.fill(0);
            reference::conv2d_backward_input_acc(dy.ptr(), w.ptr(), dx.ptr(), B, C, H, W, F, k, k,
                                                 stride, pad, Ho, Wo);
        });
        const double tp2 = time_best_of(3, [&] {
            dx.fill(0);
            kernels::conv2d_backward_input_acc(dy.ptr(), w.ptr(), dx.ptr(), B, C, H, W, F, k, k,
                                               stride, pad, Ho, Wo);
        });
        report("conv2d bwd-input", ts2, tp2);

        Tensor<float> dw({F, C, k, k});
        const double ts3 = time_best_of(3, [&] {
            dw.fill(0);
            reference::conv2d_backward_weight_acc(dy.ptr(), x.ptr(), dw.ptr(), B, C, H, W, F, k,
                                                  k, stride, pad, Ho, Wo);
        });
        const double tp3 = time_best_of(3, [&] {
            dw.fill(0);
            kernels::conv2d_backward_weight_acc(dy.ptr(), x.ptr(), dw.ptr(), B, C, H, W, F, k, k,
                                                stride, pad, Ho, Wo);
        });
        report("conv2d bwd-weight", ts3, tp3);
    }

    {
        const int B = 8, S = 512, T = 64, heads = 8, k = 128;
        auto q = random_tensor({B * S, k}, rng);
        auto kt = random_tensor({B * T, k}, rng);
        auto vt = random_tensor({B * T, k}, rng);
        Tensor<float> o({B * S, k});
        Tensor<float> attn({B, heads, S, T});
        const double ts = time_best_of(3, [&] {
            reference::attention_forward(q.ptr(), kt.ptr(), vt.ptr(), o.ptr(), attn.ptr(), B, S,
                                         T, heads, k);
        });
        const double tp = time_best_of(3, [&] {
            kernels::attention_forward(q.ptr(), kt.ptr(), vt.ptr(), o.ptr(), attn.ptr(), B, S, T,
                                       heads, k);
        });
        report("attention 8x512q 64t", ts, tp);
    }

    {
        const int B = 8, c = 128, h = 8, w = 8, S = 4096;
        auto fmap = random_tensor({B, c, h, w}, rng);
        Tensor<float> pts({B, S, 2});
        for (auto& v : pts.data) v = static_cast<float>(rng.uniform());
        Tensor<float> out({B * S, c});
        const double ts = time_best_of(3, [&] {
            reference::bilinear_forward(fmap.ptr(), pts.ptr(), out.ptr(), B, c, h, w, S);
        });
        const double tp = time_best_of(3, [&] {
            kernels::bilinear_forward(fmap.ptr(), pts.ptr(), out.ptr(), B, c, h, w, S);
        });
        report("bilinear 8x4096 pts", ts, tp);
    }

    return 0;
}
