#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nfseg/errors.hpp"
#include "nfseg/params.hpp"
#include "nfseg/tensor.hpp"

namespace nfseg {

template <typename T>
struct AdamState {
    Tensor<T> m, v;
    long t = 0;
    T lr = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

// One bias-corrected Adam update for a single parameter tensor.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& st,
               const std::string& name = "") {
    if (!same_shape(param, grad)) throw ContractViolation("adam_step: shape mismatch");
    if (st.m.numel() == 0) {
        st.m = Tensor<T>(param.shape);
        st.v = Tensor<T>(param.shape);
    }
    if (!grad.all_finite())
        throw DivergenceError("adam_step: non-finite gradient for parameter '" + name + "'");
    st.t += 1;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(st.beta1), st.t));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(st.beta2), st.t));
    const std::size_t n = param.numel();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const T gv = grad.data[i];
        st.m.data[i] = st.beta1 * st.m.data[i] + (T(1) - st.beta1) * gv;
        st.v.data[i] = st.beta2 * st.v.data[i] + (T(1) - st.beta2) * gv * gv;
        const T mhat = st.m.data[i] / bc1;
        const T vhat = st.v.data[i] / bc2;
        param.data[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
}

// Adam over a collection of ParamSets (encoder + decoder train jointly).
template <typename T>
class AdamOptimizer {
public:
    explicit AdamOptimizer(T lr = T(1e-4), T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void attach(ParamSet<T>& ps) { sets_.push_back(&ps); }

    // applies one step to every trainable parameter, then clears gradients
    void step() {
        for (ParamSet<T>* ps : sets_)
            for (auto& p : *ps) {
                if (!p.trainable) continue;
                AdamState<T>& st = state_for(p.name);
                adam_step(*p.value, *p.grad, st, p.name);
                p.grad->fill(T(0));
            }
    }

    AdamState<T>& state_for(const std::string& name) {
        for (auto& e : states_)
            if (e.name == name) return e.state;
        states_.push_back({name, AdamState<T>{}});
        auto& st = states_.back().state;
        st.lr = lr_;
        st.beta1 = beta1_;
        st.beta2 = beta2_;
        st.eps = eps_;
        return st;
    }

    struct Entry {
        std::string name;
        AdamState<T> state;
    };
    std::vector<Entry>& entries() { return states_; }

private:
    T lr_, beta1_, beta2_, eps_;
    std::vector<ParamSet<T>*> sets_;
    std::vector<Entry> states_;
};

}  // namespace nfseg
