#include "mdn/tensor.hpp"

#include <unordered_set>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace mdn {

namespace {
thread_local bool g_grad_enabled = true;

// Graph execution allocates and frees many MB-sized buffers per pass. With
// glibc defaults those exceed the mmap threshold, so every tensor costs a
// fresh mmap/munmap plus page faults. Keeping them on the heap lets freed
// blocks be reused.
#ifdef __GLIBC__
const bool g_malloc_tuned = [] {
    // 32 MiB is glibc's hard cap for the mmap threshold; larger values are
    // rejected and the 128 KiB default would stay in effect. Trimming is
    // disabled so the pages backing one pass's graph are not returned to the
    // kernel and re-faulted on the next pass.
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, -1);
    return true;
}();
#endif
}

bool grad_enabled() { return g_grad_enabled; }

void detail::set_grad_enabled(bool flag) { g_grad_enabled = flag; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

int detail::checked_numel(const std::vector<int>& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
    long long n = 1;
    for (int e : shape) {
        if (e <= 0) throw ShapeError("tensor extent must be positive, got shape " + shape_str(shape));
        n *= e;
        if (n > (1ll << 31)) throw ShapeError("tensor too large: " + shape_str(shape));
    }
    return static_cast<int>(n);
}

Tensor Tensor::zeros(std::vector<int> shape) {
    const int n = detail::checked_numel(shape);
    Tensor t;
    t.impl = std::make_shared<TensorImpl>();
    t.impl->shape = std::move(shape);
    t.impl->data.assign(n, 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (double& v : t.impl->data) v = value;
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
    const int n = detail::checked_numel(shape);
    if (n != static_cast<int>(data.size()))
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    Tensor t;
    t.impl = std::make_shared<TensorImpl>();
    t.impl->shape = std::move(shape);
    t.impl->data = std::move(data);
    return t;
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

const std::vector<int>& Tensor::shape() const { return impl->shape; }
int Tensor::numel() const { return impl->numel(); }
std::vector<double>& Tensor::data() { return impl->data; }
const std::vector<double>& Tensor::data() const { return impl->data; }
bool Tensor::requires_grad() const { return impl && impl->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
    impl->requires_grad = flag;
    return *this;
}

bool Tensor::is_leaf() const { return !impl->backprop; }

std::vector<double>& Tensor::grad() { return impl->ensure_grad(); }
const std::vector<double>& Tensor::grad() const { return const_cast<TensorImpl*>(impl.get())->ensure_grad(); }
bool Tensor::has_grad() const { return impl && !impl->grad.empty(); }

void Tensor::zero_grad() {
    if (!impl->grad.empty()) std::fill(impl->grad.begin(), impl->grad.end(), 0.0);
}

double Tensor::value() const {
    if (numel() != 1) throw ContractError("value() requires a scalar tensor, got " + shape_str(shape()));
    return impl->data[0];
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ContractError("backward on undefined tensor");
    if (loss.numel() != 1)
        throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));

    // Iterative post-order DFS; parents are visited in creation order so the
    // sweep is deterministic for a fixed graph.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, size_t>> stack;
    stack.emplace_back(loss.impl.get(), 0);
    visited.insert(loss.impl.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorImpl* parent = node->parents[idx++].get();
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.impl->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backprop && !node->grad.empty()) {
            node->backprop(*node);
            // Interior grads are only needed once per sweep; leaves keep theirs.
            node->grad.clear();
        }
    }
}

}  // namespace mdn
