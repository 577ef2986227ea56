#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <string_view>

#include "nfseg/errors.hpp"
#include "nfseg/graph.hpp"
#include "nfseg/rng.hpp"
#include "nfseg/tensor.hpp"

namespace nfseg {

// A named tensor with a persistent gradient buffer. Non-trainable entries
// hold state such as batchnorm running statistics; they are checkpointed but
// never updated by the optimizer and excluded from parameter counts.
template <typename T>
struct Parameter {
    std::string name;
    std::shared_ptr<Tensor<T>> value;
    std::shared_ptr<Tensor<T>> grad;  // null for non-trainable entries
    bool trainable = true;
};

template <typename T>
class ParamSet {
public:
    Parameter<T>& add(std::string name, Tensor<T> init, bool trainable = true) {
        if (find(name)) throw ConfigError("duplicate parameter name: " + name);
        Parameter<T> p;
        p.name = std::move(name);
        p.value = std::make_shared<Tensor<T>>(std::move(init));
        if (trainable) p.grad = std::make_shared<Tensor<T>>(p.value->shape);
        p.trainable = trainable;
        items_.push_back(std::move(p));
        return items_.back();
    }

    Parameter<T>* find(std::string_view name) {
        for (auto& p : items_)
            if (p.name == name) return &p;
        return nullptr;
    }

    const Parameter<T>* find(std::string_view name) const {
        for (const auto& p : items_)
            if (p.name == name) return &p;
        return nullptr;
    }

    std::int64_t count_trainable() const {
        std::int64_t n = 0;
        for (const auto& p : items_)
            if (p.trainable) n += static_cast<std::int64_t>(p.value->numel());
        return n;
    }

    void zero_grads() {
        for (auto& p : items_)
            if (p.grad) p.grad->fill(T(0));
    }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }
    std::size_t size() const { return items_.size(); }

private:
    std::deque<Parameter<T>> items_;  // deque: stable references across add()
};

// Tape leaf for a parameter, sharing its value and gradient buffers.
template <typename T>
Node<T>* use(Graph<T>& g, Parameter<T>& p) {
    return g.leaf_shared(p.value, p.grad);
}

// Kaiming-style uniform init, bound 1/sqrt(fan_in).
template <typename T>
Tensor<T> init_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor<T> t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

}  // namespace nfseg
