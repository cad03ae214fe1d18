#pragma once

#include <string>
#include <vector>

#include "mdn/tensor.hpp"

namespace mdn {

/// Named leaf tensor. Names are dotted paths ("mmd.3.gate.weight") and must
/// be unique within a model.
struct Parameter {
    std::string name;
    Tensor tensor;
};

class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Parameter> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    void zero_grad();
    /// Bias-corrected Adam update, applied in place.
    void step();

    int64_t step_count() const { return t_; }

private:
    std::vector<Parameter> params_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Little-endian binary checkpoint: magic "MDN1", parameter count, then per
/// parameter (name length, UTF-8 name, rank, extents, raw doubles).
void save_checkpoint(const std::string& path, const std::vector<Parameter>& params);

/// Loads values into matching parameters by name; throws IoError on missing
/// file or malformed contents, ContractError on name/shape mismatch.
void load_checkpoint(const std::string& path, std::vector<Parameter>& params);

}  // namespace mdn
