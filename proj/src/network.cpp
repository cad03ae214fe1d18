#include "mdn/network.hpp"

#include <cmath>

namespace mdn {

Tensor image_to_planes(const ComplexImage& img) {
    Tensor t = Tensor::zeros({2, img.h, img.w});
    std::copy(img.re.begin(), img.re.end(), t.data().begin());
    std::copy(img.im.begin(), img.im.end(), t.data().begin() + img.numel());
    return t;
}

ComplexImage planes_to_image(const Tensor& planes) {
    if (planes.shape().size() != 3 || planes.shape()[0] != 2)
        throw ShapeError("planes_to_image expects [2,h,w], got " + shape_str(planes.shape()));
    ComplexImage img(planes.shape()[1], planes.shape()[2]);
    const auto& d = planes.data();
    std::copy(d.begin(), d.begin() + img.numel(), img.re.begin());
    std::copy(d.begin() + img.numel(), d.end(), img.im.begin());
    return img;
}

Tensor dc_project(const Tensor& planes, const KSpaceGrid& k_tar_us, const SamplingMask& m) {
    if (planes.shape() != std::vector<int>{2, m.h, m.w})
        throw ShapeError("dc_project expects [2," + std::to_string(m.h) + "," +
                         std::to_string(m.w) + "], got " + shape_str(planes.shape()));

    ComplexImage out = dc_layer(planes_to_image(planes), k_tar_us, m);
    Tensor result = image_to_planes(out);

    if (grad_enabled() && planes.requires_grad()) {
        auto pi = planes.impl;
        auto mask = std::make_shared<SamplingMask>(m);
        result.impl->requires_grad = true;
        result.impl->parents = {pi};
        result.impl->backprop = [pi, mask](TensorImpl& self) {
            if (!pi->requires_grad) return;
            // Adjoint of ifft2 . (1-M) . fft2 is itself (unitary transforms,
            // real diagonal mask).
            ComplexImage g(mask->h, mask->w);
            std::copy(self.grad.begin(), self.grad.begin() + g.numel(), g.re.begin());
            std::copy(self.grad.begin() + g.numel(), self.grad.end(), g.im.begin());
            KSpaceGrid gk = fft2(g);
            for (int y = 0; y < mask->h; ++y) {
                if (!mask->lines[y]) continue;
                const size_t base = static_cast<size_t>(y) * mask->w;
                for (int x = 0; x < mask->w; ++x) {
                    gk.re[base + x] = 0.0;
                    gk.im[base + x] = 0.0;
                }
            }
            ComplexImage gi = ifft2(gk);
            auto& gp = pi->ensure_grad();
            for (size_t i = 0; i < gi.numel(); ++i) {
                gp[i] += gi.re[i];
                gp[gi.numel() + i] += gi.im[i];
            }
        };
    }
    return result;
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("l1_loss shapes differ: " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    return mul_scalar(sum_all(abs_op(sub(pred, target))), 1.0 / pred.numel());
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

namespace {

ConvParams make_conv(int out_ch, int in_ch, int kernel, Rng& rng) {
    ConvParams p;
    p.weight = Tensor::zeros({out_ch, in_ch, kernel, kernel});
    const double s = 1.0 / std::sqrt(static_cast<double>(in_ch) * kernel * kernel);
    for (double& v : p.weight.data()) v = rng.uniform(-s, s);
    p.bias = Tensor::zeros({out_ch});
    p.weight.set_requires_grad(true);
    p.bias.set_requires_grad(true);
    return p;
}

void push_conv(const std::string& name, ConvParams& c, std::vector<Parameter>& out) {
    out.push_back({name + ".weight", c.weight});
    out.push_back({name + ".bias", c.bias});
}

}  // namespace

UnetEncoder::UnetEncoder(int in_channels, int base_channels, int depth, int kernel, Rng& rng)
    : depth_(depth) {
    stem_ = make_conv(base_channels, in_channels, kernel, rng);
    int ch = base_channels;
    for (int l = 0; l < depth; ++l) {
        down_.push_back(make_conv(ch * 2, ch, kernel, rng));
        ch *= 2;
    }
    for (int l = depth - 1; l >= 0; --l) {
        // concat(upsampled deeper level, skip at this level)
        const int lower = base_channels << (l + 1);
        const int skip = base_channels << l;
        up_.push_back(make_conv(skip, lower + skip, kernel, rng));
    }
}

Tensor UnetEncoder::forward(const Tensor& x) const {
    std::vector<Tensor> skips;
    Tensor t = silu(conv2d(x, stem_.weight, stem_.bias));
    skips.push_back(t);
    for (int l = 0; l < depth_; ++l) {
        t = silu(conv2d(avg_pool2(t), down_[l].weight, down_[l].bias));
        if (l + 1 < depth_) skips.push_back(t);
    }
    for (int l = depth_ - 1; l >= 0; --l) {
        const Tensor& skip = skips[l];
        Tensor upped = upsample_nearest2(t, skip.shape()[1], skip.shape()[2]);
        t = silu(conv2d(concat_channels(upped, skip), up_[depth_ - 1 - l].weight,
                        up_[depth_ - 1 - l].bias));
    }
    return t;
}

void UnetEncoder::collect_parameters(const std::string& prefix, std::vector<Parameter>& out) {
    push_conv(prefix + ".stem", stem_, out);
    for (size_t l = 0; l < down_.size(); ++l) push_conv(prefix + ".down" + std::to_string(l), down_[l], out);
    for (size_t l = 0; l < up_.size(); ++l) push_conv(prefix + ".up" + std::to_string(l), up_[l], out);
}

// ---------------------------------------------------------------------------
// MMD block
// ---------------------------------------------------------------------------

namespace {

MmdBlock::Branch make_branch(int channels, int state_dim, int kernel, MergeMode merge, Rng& rng) {
    MmdBlock::Branch b;
    b.proj = make_conv(channels, channels, 1, rng);
    b.dw_kernel = Tensor::zeros({channels, kernel, kernel});
    const double s = 1.0 / std::sqrt(static_cast<double>(kernel) * kernel);
    for (double& v : b.dw_kernel.data()) v = rng.uniform(-s, s);
    b.dw_kernel.set_requires_grad(true);
    b.ss2d = Ss2dLayer(channels, state_dim, rng, merge == MergeMode::Mean);
    b.norm_gain = Tensor::full({channels}, 1.0);
    b.norm_bias = Tensor::zeros({channels});
    b.norm_gain.set_requires_grad(true);
    b.norm_bias.set_requires_grad(true);
    return b;
}

}  // namespace

MmdBlock::MmdBlock(int channels, int state_dim, int kernel, MergeMode merge, Rng& rng) {
    mix_ = make_branch(channels, state_dim, kernel, merge, rng);
    ref_ = make_branch(channels, state_dim, kernel, merge, rng);
    gate_ = make_conv(channels, channels, 1, rng);
    out_ = make_conv(channels, channels, 1, rng);
}

Tensor MmdBlock::run_branch(const Branch& b, const Tensor& x) const {
    Tensor t = conv2d(x, b.proj.weight, b.proj.bias);
    t = depthwise_conv2d(t, b.dw_kernel);
    t = b.ss2d.forward(t);
    return layer_norm(t, b.norm_gain, b.norm_bias, 1e-5, 0);
}

Tensor MmdBlock::forward(const Tensor& f_tar, const Tensor& f_mix0, const Tensor& f_ref,
                         bool fuse_add) const {
    if (f_tar.shape() != f_mix0.shape() || f_tar.shape() != f_ref.shape())
        throw ShapeError("mmd_forward: feature shapes differ: " + shape_str(f_tar.shape()) + ", " +
                         shape_str(f_mix0.shape()) + ", " + shape_str(f_ref.shape()));
    Tensor f_mix_i = add(f_mix0, f_tar);
    Tensor fm = run_branch(mix_, f_mix_i);
    Tensor fr = run_branch(ref_, f_ref);
    Tensor g = sigmoid(conv2d(f_tar, gate_.weight, gate_.bias));
    Tensor removed = conv2d(mul(g, fr), out_.weight, out_.bias);
    return fuse_add ? add(fm, removed) : sub(fm, removed);
}

void MmdBlock::collect_parameters(const std::string& prefix, std::vector<Parameter>& out) {
    auto branch = [&](const std::string& name, Branch& b) {
        push_conv(prefix + "." + name + ".proj", b.proj, out);
        out.push_back({prefix + "." + name + ".dw", b.dw_kernel});
        b.ss2d.collect_parameters(prefix + "." + name + ".ss2d", out);
        out.push_back({prefix + "." + name + ".norm.gain", b.norm_gain});
        out.push_back({prefix + "." + name + ".norm.bias", b.norm_bias});
    };
    branch("mix", mix_);
    branch("ref", ref_);
    push_conv(prefix + ".gate", gate_, out);
    push_conv(prefix + ".out", out_, out);
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

MambaMdnModel::MambaMdnModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix_seed(cfg.seed, 0x6d646e));
    mfe_ = UnetEncoder(2, cfg.channels, cfg.depth, cfg.kernel, rng);
    rfe_ = UnetEncoder(2, cfg.channels, cfg.depth, cfg.kernel, rng);
    blocks_.reserve(cfg.blocks);
    for (int i = 0; i < cfg.blocks; ++i)
        blocks_.emplace_back(cfg.channels, cfg.state_dim, cfg.kernel, cfg.merge, rng);
    // Zero-initialized head: the untrained model reproduces its complemented
    // input after DC, which keeps early training stable.
    head_ = make_conv(2, cfg.channels, 1, rng);
    std::fill(head_.weight.data().begin(), head_.weight.data().end(), 0.0);
}

Tensor MambaMdnModel::forward_train(const KSpaceGrid& k_tar_us, const KSpaceGrid& k_ref_fs,
                                    const SamplingMask& m) const {
    const Variant variant = cfg_.variant;

    ComplexImage mfe_img;
    if (variant == Variant::TarusMinusRef)
        mfe_img = zero_fill(k_tar_us);
    else
        mfe_img = kcm(k_tar_us, k_ref_fs, m).second;

    Tensor x_in = image_to_planes(mfe_img);
    Tensor f_mix0 = mfe_.forward(x_in);

    Tensor f_ref;
    if (variant == Variant::MixMinusZero) {
        f_ref = Tensor::zeros(f_mix0.shape());
    } else if (variant == Variant::MixMinusTarus) {
        f_ref = rfe_.forward(image_to_planes(zero_fill(k_tar_us)));
    } else {
        f_ref = rfe_.forward(image_to_planes(ifft2(k_ref_fs)));
    }

    auto head_out = [&](const Tensor& f) { return conv2d(f, head_.weight, head_.bias); };

    if (variant == Variant::ParallelT) {
        Tensor acc;
        for (const auto& block : blocks_) {
            Tensor y = block.forward(f_mix0, f_mix0, f_ref, cfg_.fuse_add);
            acc = acc.defined() ? add(acc, y) : y;
        }
        Tensor f_final = mul_scalar(acc, 1.0 / static_cast<double>(blocks_.size()));
        return dc_project(add(x_in, head_out(f_final)), k_tar_us, m);
    }
    if (variant == Variant::SingleBlock) {
        Tensor f_final = blocks_[0].forward(f_mix0, f_mix0, f_ref, cfg_.fuse_add);
        return dc_project(add(x_in, head_out(f_final)), k_tar_us, m);
    }

    Tensor f_tar = f_mix0;
    if (cfg_.dc_mode == DcMode::PerBlock) {
        Tensor base = x_in;
        for (const auto& block : blocks_) {
            f_tar = block.forward(f_tar, f_mix0, f_ref, cfg_.fuse_add);
            base = dc_project(add(base, head_out(f_tar)), k_tar_us, m);
        }
        return base;
    }
    for (const auto& block : blocks_) f_tar = block.forward(f_tar, f_mix0, f_ref, cfg_.fuse_add);
    return dc_project(add(x_in, head_out(f_tar)), k_tar_us, m);
}

ComplexImage MambaMdnModel::forward(const KSpaceGrid& k_tar_us, const KSpaceGrid& k_ref_fs,
                                    const SamplingMask& m) const {
    NoGradGuard guard;
    return planes_to_image(forward_train(k_tar_us, k_ref_fs, m));
}

std::vector<Parameter> MambaMdnModel::parameters() {
    std::vector<Parameter> out;
    mfe_.collect_parameters("mfe", out);
    rfe_.collect_parameters("rfe", out);
    for (size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].collect_parameters("mmd." + std::to_string(i), out);
    push_conv("head", head_, out);
    return out;
}

MambaMdnModel ablation_variant(const MambaMdnModel& base, Variant v) {
    MambaMdnModel rewired = base;  // shares parameter storage
    rewired.config().variant = v;
    return rewired;
}

}  // namespace mdn
