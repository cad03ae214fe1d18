#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mdn/common.hpp"

namespace mdn {

class TensorImpl;
using TensorPtr = std::shared_ptr<TensorImpl>;

/// Dense row-major double tensor participating in a recorded computation
/// graph. Copying a Tensor copies the handle, not the buffer.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data);
    static Tensor scalar(double value);

    bool defined() const { return impl != nullptr; }
    const std::vector<int>& shape() const;
    int numel() const;

    std::vector<double>& data();
    const std::vector<double>& data() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool flag);
    bool is_leaf() const;

    /// Gradient buffer, zero-initialized on first access.
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    bool has_grad() const;
    void zero_grad();

    double value() const;  // scalar tensors only

    TensorPtr impl;
};

class TensorImpl {
public:
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first use
    bool requires_grad = false;

    // Graph record; empty for leaves. `backprop` reads this node's grad and
    // accumulates into the parents' grads.
    std::vector<TensorPtr> parents;
    std::function<void(TensorImpl&)> backprop;

    int numel() const { return static_cast<int>(data.size()); }
    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

/// Reverse sweep from a scalar loss. Gradients accumulate (+=) into leaves;
/// calling twice without zeroing doubles them.
void backward(const Tensor& loss);

/// Thread-local switch controlling whether ops record graph nodes.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

namespace detail {
void set_grad_enabled(bool flag);
int checked_numel(const std::vector<int>& shape);
}  // namespace detail

}  // namespace mdn
