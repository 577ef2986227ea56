#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "nfseg/errors.hpp"
#include "nfseg/tensor.hpp"

namespace nfseg {

// One value in a reverse-mode tape. Creation order is a valid topological
// order, so backward() is a single reverse sweep.
template <typename T>
struct Node {
    std::shared_ptr<Tensor<T>> value;
    std::shared_ptr<Tensor<T>> grad;  // allocated iff requires_grad
    bool requires_grad = false;
    std::vector<Node<T>*> parents;
    std::function<void()> backprop;  // accumulates into parents' grads

    const Tensor<T>& val() const { return *value; }
    Tensor<T>& g() { return *grad; }
};

template <typename T>
class Graph {
public:
    // grads=false builds a forward-only tape (inference): no gradient
    // buffers, no backprop closures.
    explicit Graph(bool grads = true) : grads_(grads) {}

    bool grads_enabled() const { return grads_; }

    Node<T>* leaf(Tensor<T> v, bool requires_grad = false) {
        auto n = std::make_unique<Node<T>>();
        n->value = std::make_shared<Tensor<T>>(std::move(v));
        n->requires_grad = requires_grad && grads_;
        if (n->requires_grad) n->grad = std::make_shared<Tensor<T>>(n->value->shape);
        return push(std::move(n));
    }

    // Leaf whose value and gradient buffers are owned elsewhere (parameters).
    Node<T>* leaf_shared(std::shared_ptr<Tensor<T>> v, std::shared_ptr<Tensor<T>> g) {
        auto n = std::make_unique<Node<T>>();
        n->value = std::move(v);
        if (grads_) n->grad = std::move(g);
        n->requires_grad = n->grad != nullptr;
        return push(std::move(n));
    }

    // Creates the result node; when any parent needs gradients the caller
    // must assign node->backprop afterwards (it usually captures the node).
    Node<T>* op(Tensor<T> v, std::vector<Node<T>*> parents) {
        auto n = std::make_unique<Node<T>>();
        n->value = std::make_shared<Tensor<T>>(std::move(v));
        for (Node<T>* p : parents)
            if (p->requires_grad) n->requires_grad = true;
        if (n->requires_grad) {
            n->grad = std::make_shared<Tensor<T>>(n->value->shape);
            n->parents = std::move(parents);
        }
        return push(std::move(n));
    }

    // Seeds root->grad with 1 and runs one reverse sweep. root must be scalar.
    void backward(Node<T>* root) {
        if (root->value->numel() != 1)
            throw ContractViolation("backward root must be a scalar");
        if (!root->requires_grad) return;
        std::unordered_set<const Node<T>*> reach;
        std::vector<Node<T>*> stack{root};
        while (!stack.empty()) {
            Node<T>* n = stack.back();
            stack.pop_back();
            if (!reach.insert(n).second) continue;
            for (Node<T>* p : n->parents)
                if (p->requires_grad) stack.push_back(p);
        }
        root->grad->data[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<T>* n = it->get();
            if (n->backprop && reach.count(n)) n->backprop();
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    Node<T>* push(std::unique_ptr<Node<T>> n) {
        nodes_.push_back(std::move(n));
        return nodes_.back().get();
    }

    std::vector<std::unique_ptr<Node<T>>> nodes_;
    bool grads_ = true;
};

}  // namespace nfseg
