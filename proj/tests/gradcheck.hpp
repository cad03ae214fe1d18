#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mdn/tensor.hpp"

namespace mdn::testing {

// Central finite-difference check. `make_loss` must rebuild the graph from
// the given leaves on every call and return a scalar. Returns the worst
// relative error across all leaf elements.
inline double gradcheck(const std::function<Tensor()>& make_loss, std::vector<Tensor> leaves,
                        double eps = 1e-5) {
    for (auto& leaf : leaves) {
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }
    Tensor loss = make_loss();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());

    double worst = 0.0;
    NoGradGuard guard;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& data = leaves[li].data();
        for (size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + eps;
            const double lp = make_loss().value();
            data[i] = orig - eps;
            const double lm = make_loss().value();
            data[i] = orig;
            const double fd = (lp - lm) / (2.0 * eps);
            const double an = analytic[li][i];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-3});
            worst = std::max(worst, std::fabs(fd - an) / denom);
        }
    }
    return worst;
}

}  // namespace mdn::testing
