#pragma once

#include <string>
#include <vector>

#include "mdn/config.hpp"
#include "mdn/kspace.hpp"
#include "mdn/ssm.hpp"

namespace mdn {

/// [2,h,w] tensor from the image's real/imaginary planes (non-grad leaf).
Tensor image_to_planes(const ComplexImage& img);
ComplexImage planes_to_image(const Tensor& planes);

/// Differentiable hard data consistency on a [2,h,w] planes tensor. The
/// measured-line branch carries no gradient; the estimate's branch
/// backpropagates through the unitary transforms via their adjoints.
Tensor dc_project(const Tensor& planes, const KSpaceGrid& k_tar_us, const SamplingMask& m);

/// Mean absolute difference over both planes.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

struct ConvParams {
    Tensor weight, bias;
};

/// U-Net feature extractor: `depth` pooling levels with channel doubling,
/// skip connections by concatenation, SiLU activations. Output is [c,h,w]
/// with the input's spatial extents.
class UnetEncoder {
public:
    UnetEncoder() = default;
    UnetEncoder(int in_channels, int base_channels, int depth, int kernel, Rng& rng);

    Tensor forward(const Tensor& x) const;
    void collect_parameters(const std::string& prefix, std::vector<Parameter>& out);

private:
    int depth_ = 0;
    ConvParams stem_;
    std::vector<ConvParams> down_, up_;
};

/// Gated disentanglement block: both inputs pass projection -> depthwise
/// conv -> SS2D -> normalization; a sigmoid gate computed from the incoming
/// target feature modulates the reference branch, which is subtracted from
/// the mixed branch (added in fusion mode).
class MmdBlock {
public:
    MmdBlock() = default;
    MmdBlock(int channels, int state_dim, int kernel, MergeMode merge, Rng& rng);

    Tensor forward(const Tensor& f_tar, const Tensor& f_mix0, const Tensor& f_ref,
                   bool fuse_add = false) const;
    void collect_parameters(const std::string& prefix, std::vector<Parameter>& out);

    struct Branch {
        ConvParams proj;
        Tensor dw_kernel;
        Ss2dLayer ss2d;
        Tensor norm_gain, norm_bias;
    };
    Branch& mix_branch() { return mix_; }
    Branch& ref_branch() { return ref_; }
    ConvParams& gate() { return gate_; }
    ConvParams& out_proj() { return out_; }

private:
    Tensor run_branch(const Branch& b, const Tensor& x) const;
    Branch mix_, ref_;
    ConvParams gate_, out_;
};

class MambaMdnModel {
public:
    explicit MambaMdnModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    ModelConfig& config() { return cfg_; }

    /// Differentiable reconstruction, returned as [2,h,w] planes.
    Tensor forward_train(const KSpaceGrid& k_tar_us, const KSpaceGrid& k_ref_fs,
                         const SamplingMask& m) const;

    /// Evaluation path (no graph recording).
    ComplexImage forward(const KSpaceGrid& k_tar_us, const KSpaceGrid& k_ref_fs,
                         const SamplingMask& m) const;

    std::vector<Parameter> parameters();

    UnetEncoder& mfe() { return mfe_; }
    UnetEncoder& rfe() { return rfe_; }
    std::vector<MmdBlock>& blocks() { return blocks_; }
    ConvParams& head() { return head_; }

private:
    ModelConfig cfg_;
    UnetEncoder mfe_, rfe_;
    std::vector<MmdBlock> blocks_;
    ConvParams head_;
};

/// Returns a model sharing this model's weights with the forward path
/// rewired for the requested variant.
MambaMdnModel ablation_variant(const MambaMdnModel& base, Variant v);

}  // namespace mdn
