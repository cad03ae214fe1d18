#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mdn/ops.hpp"
#include "mdn/optim.hpp"
#include "mdn/rng.hpp"

namespace mdn {

// ---------------------------------------------------------------------------
// Numeric core: single-channel state-space machinery. This is the oracle
// surface (recurrence vs materialized kernel) and uses libm throughout.
// ---------------------------------------------------------------------------

/// ZOH discretization of one diagonal entry's input factor:
/// (exp(delta*a) - 1) / a, evaluated by series when |delta*a| < 1e-6.
double zoh_b_factor(double a, double delta);

/// A_d = exp(delta*A) and B_d = ((exp(delta*A) - 1)/A) * B, elementwise.
std::pair<std::vector<double>, std::vector<double>> discretize(std::span<const double> a_diag,
                                                               std::span<const double> b,
                                                               double delta);

/// Diagonal selective SSM over one scalar sequence. b/c/delta hold either a
/// single entry (frozen, time-invariant) or one entry per token (selective).
struct SsmParams {
    std::vector<double> a_diag;           // [N], negative for stability
    double skip = 0.0;                    // D
    std::vector<std::vector<double>> b;   // [1 or L][N]
    std::vector<std::vector<double>> c;   // [1 or L][N]
    std::vector<double> delta;            // [1 or L], positive

    int state_dim() const { return static_cast<int>(a_diag.size()); }
    bool selective() const { return b.size() > 1 || c.size() > 1 || delta.size() > 1; }
};

/// Exact sequential evaluation: h_k = A_d h_{k-1} + B_d x_k, y_k = C h_k + D x_k.
std::vector<double> scan_recurrent(const SsmParams& p, std::span<const double> x);

/// K = [C B_d, C A_d B_d, ..., C A_d^{L-1} B_d]. Only valid for frozen
/// parameters; throws ContractError when selectivity is enabled.
std::vector<double> kernel_materialize(const SsmParams& p, int len);

/// y = causal_conv(x, K) + D*x; the convolution-form counterpart of
/// scan_recurrent for frozen parameters.
std::vector<double> ssm_conv_apply(std::span<const double> x, std::span<const double> kernel,
                                   double skip);

// ---------------------------------------------------------------------------
// 2D selective scan
// ---------------------------------------------------------------------------

enum class ScanDirection { RowForward, RowBackward, ColForward, ColBackward };

constexpr std::array<ScanDirection, 4> kAllDirections = {
    ScanDirection::RowForward, ScanDirection::RowBackward, ScanDirection::ColForward,
    ScanDirection::ColBackward};

/// Sequence position -> flat (row-major) pixel index. The backward
/// directions are full sequence reversals of their forward counterparts.
std::vector<int> scan_order(ScanDirection dir, int h, int w);
std::vector<int> inverse_order(const std::vector<int>& order);

/// Differentiable multi-channel selective scan.
///   x [c,L], delta_raw [1,L], b_seq [N,L], c_seq [N,L],
///   a_diag [c,N], delta_bias [c], skip [c]  ->  y [c,L]
/// Per token: delta = softplus(delta_raw + delta_bias), ZOH-discretized
/// recurrence per channel. Backward runs the adjoint recurrence (no kernel
/// materialization; selectivity breaks the convolution form).
Tensor selective_scan(const Tensor& x, const Tensor& delta_raw, const Tensor& b_seq,
                      const Tensor& c_seq, const Tensor& a_diag, const Tensor& delta_bias,
                      const Tensor& skip);

/// Per-direction learnable parameters of an SS2D layer. a_log parameterizes
/// A = -exp(a_log), keeping the diagonal negative under training.
struct Ss2dDirection {
    Tensor a_log;       // [c,N]
    Tensor b_proj;      // [N,c]
    Tensor c_proj;      // [N,c]
    Tensor delta_proj;  // [1,c]
    Tensor delta_bias;  // [c]
    Tensor skip;        // [c]
};

/// Four-direction 2D selective scan; the directional outputs are merged by
/// sum (mean when average_merge is set).
class Ss2dLayer {
public:
    Ss2dLayer() = default;
    Ss2dLayer(int channels, int state_dim, Rng& rng, bool average_merge = false);

    Tensor forward(const Tensor& x) const;  // [c,h,w] -> [c,h,w]
    /// One direction only (shared-parameter symmetry tests).
    Tensor forward_direction(const Tensor& x, ScanDirection dir) const;

    void collect_parameters(const std::string& prefix, std::vector<Parameter>& out);

    int channels() const { return channels_; }
    int state_dim() const { return state_dim_; }
    std::array<Ss2dDirection, 4>& directions() { return dirs_; }

private:
    int channels_ = 0;
    int state_dim_ = 0;
    bool average_merge_ = false;
    std::array<Ss2dDirection, 4> dirs_;
};

}  // namespace mdn
