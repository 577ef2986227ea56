#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "nfseg/errors.hpp"
#include "nfseg/tensor.hpp"

namespace nfseg {

struct GradCheckInput {
    Tensor<double>* value;               // perturbed in place
    const Tensor<double>* analytic_grad; // same shape
};

// Central-difference verification of analytic gradients. loss_fn must
// recompute the scalar loss from the current contents of the input tensors.
// Returns max over all coordinates of
//   |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
inline double finite_diff_check(const std::function<double()>& loss_fn,
                                const std::vector<GradCheckInput>& inputs,
                                double epsilon = 1e-5) {
    double worst = 0.0;
    for (const auto& in : inputs) {
        if (!same_shape(*in.value, *in.analytic_grad))
            throw ContractViolation("finite_diff_check: gradient shape mismatch");
        for (std::size_t i = 0; i < in.value->numel(); ++i) {
            const double saved = in.value->data[i];
            in.value->data[i] = saved + epsilon;
            const double fp = loss_fn();
            in.value->data[i] = saved - epsilon;
            const double fm = loss_fn();
            in.value->data[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw DivergenceError("finite_diff_check: non-finite loss during perturbation");
            const double numeric = (fp - fm) / (2.0 * epsilon);
            const double analytic = in.analytic_grad->data[i];
            const double denom = std::max(1e-12, std::abs(analytic) + std::abs(numeric));
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace nfseg
