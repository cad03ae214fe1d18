#include "mdn/ssm.hpp"

#include <cmath>

#include "mdn/fastmath.hpp"

namespace mdn {

double zoh_b_factor(double a, double delta) {
    const double z = delta * a;
    if (std::fabs(z) < 1e-6) {
        // (exp(z)-1)/a = delta * (1 + z/2 + z^2/6 + z^3/24), truncation ~z^4.
        return delta * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)));
    }
    return std::expm1(z) / a;
}

std::pair<std::vector<double>, std::vector<double>> discretize(std::span<const double> a_diag,
                                                               std::span<const double> b,
                                                               double delta) {
    if (a_diag.size() != b.size())
        throw ShapeError("discretize: A diagonal and B lengths differ");
    if (delta <= 0) throw ConfigError("discretize: delta must be positive");
    std::vector<double> a_d(a_diag.size()), b_d(a_diag.size());
    for (size_t n = 0; n < a_diag.size(); ++n) {
        a_d[n] = std::exp(delta * a_diag[n]);
        b_d[n] = zoh_b_factor(a_diag[n], delta) * b[n];
    }
    return {std::move(a_d), std::move(b_d)};
}

namespace {

const std::vector<double>& at_token(const std::vector<std::vector<double>>& seq, size_t k) {
    return seq.size() == 1 ? seq[0] : seq[k];
}

double delta_at(const std::vector<double>& delta, size_t k) {
    return delta.size() == 1 ? delta[0] : delta[k];
}

void validate_params(const SsmParams& p, size_t len, const char* what) {
    const size_t n = p.a_diag.size();
    if (n == 0) throw ConfigError(std::string(what) + ": empty state");
    for (const auto* seq : {&p.b, &p.c}) {
        if (seq->size() != 1 && seq->size() != len)
            throw ShapeError(std::string(what) + ": per-token parameter length mismatch");
        for (const auto& v : *seq)
            if (v.size() != n) throw ShapeError(std::string(what) + ": state width mismatch");
    }
    if (p.delta.size() != 1 && p.delta.size() != len)
        throw ShapeError(std::string(what) + ": delta length mismatch");
    for (double d : p.delta)
        if (d <= 0) throw ConfigError(std::string(what) + ": delta must be positive");
}

}  // namespace

std::vector<double> scan_recurrent(const SsmParams& p, std::span<const double> x) {
    if (x.empty()) throw ContractError("scan_recurrent: empty sequence");
    validate_params(p, x.size(), "scan_recurrent");
    const int n = p.state_dim();
    std::vector<double> h(n, 0.0), y(x.size());
    for (size_t k = 0; k < x.size(); ++k) {
        const auto& bk = at_token(p.b, k);
        const auto& ck = at_token(p.c, k);
        const double dk = delta_at(p.delta, k);
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double a_d = std::exp(dk * p.a_diag[i]);
            const double b_d = zoh_b_factor(p.a_diag[i], dk) * bk[i];
            h[i] = a_d * h[i] + b_d * x[k];
            acc += ck[i] * h[i];
        }
        y[k] = acc + p.skip * x[k];
    }
    return y;
}

std::vector<double> kernel_materialize(const SsmParams& p, int len) {
    if (p.selective())
        throw ContractError("kernel_materialize requires frozen parameters; the convolution form "
                            "does not exist for a selective scan");
    if (len < 1) throw ConfigError("kernel_materialize: length must be >= 1");
    validate_params(p, 1, "kernel_materialize");
    auto [a_d, b_d] = discretize(p.a_diag, p.b[0], p.delta[0]);
    const auto& c = p.c[0];
    std::vector<double> kernel(len);
    std::vector<double> state = b_d;  // A_d^j B_d
    for (int j = 0; j < len; ++j) {
        double acc = 0.0;
        for (size_t i = 0; i < state.size(); ++i) acc += c[i] * state[i];
        kernel[j] = acc;
        for (size_t i = 0; i < state.size(); ++i) state[i] *= a_d[i];
    }
    return kernel;
}

std::vector<double> ssm_conv_apply(std::span<const double> x, std::span<const double> kernel,
                                   double skip) {
    std::vector<double> y(x.size(), 0.0);
    for (size_t k = 0; k < x.size(); ++k) {
        double acc = 0.0;
        const size_t jmax = std::min(k + 1, kernel.size());
        for (size_t j = 0; j < jmax; ++j) acc += kernel[j] * x[k - j];
        y[k] = acc + skip * x[k];
    }
    return y;
}

std::vector<int> scan_order(ScanDirection dir, int h, int w) {
    if (h < 1 || w < 1) throw ShapeError("scan_order: extents must be positive");
    const int len = h * w;
    std::vector<int> order(len);
    switch (dir) {
        case ScanDirection::RowForward:
            for (int k = 0; k < len; ++k) order[k] = k;
            break;
        case ScanDirection::RowBackward:
            for (int k = 0; k < len; ++k) order[k] = len - 1 - k;
            break;
        case ScanDirection::ColForward:
            for (int k = 0; k < len; ++k) order[k] = (k % h) * w + (k / h);
            break;
        case ScanDirection::ColBackward:
            for (int k = 0; k < len; ++k) {
                const int r = len - 1 - k;
                order[k] = (r % h) * w + (r / h);
            }
            break;
    }
    return order;
}

std::vector<int> inverse_order(const std::vector<int>& order) {
    std::vector<int> inv(order.size());
    for (size_t k = 0; k < order.size(); ++k) inv[order[k]] = static_cast<int>(k);
    return inv;
}

// ---------------------------------------------------------------------------
// Differentiable selective scan
// ---------------------------------------------------------------------------

namespace {

struct ScanDims {
    int c, len, n;
};

ScanDims check_scan_shapes(const Tensor& x, const Tensor& delta_raw, const Tensor& b_seq,
                           const Tensor& c_seq, const Tensor& a_diag, const Tensor& delta_bias,
                           const Tensor& skip) {
    if (x.shape().size() != 2) throw ShapeError("selective_scan: x must be [c,L]");
    const int c = x.shape()[0], len = x.shape()[1];
    if (delta_raw.numel() != len)
        throw ShapeError("selective_scan: delta_raw length " + std::to_string(delta_raw.numel()) +
                         " != L " + std::to_string(len));
    if (b_seq.shape().size() != 2 || b_seq.shape()[1] != len)
        throw ShapeError("selective_scan: b_seq must be [N,L]");
    const int n = b_seq.shape()[0];
    if (c_seq.shape() != b_seq.shape())
        throw ShapeError("selective_scan: c_seq shape differs from b_seq");
    if (a_diag.shape() != std::vector<int>{c, n})
        throw ShapeError("selective_scan: a_diag must be [c,N], got " + shape_str(a_diag.shape()));
    if (delta_bias.numel() != c || skip.numel() != c)
        throw ShapeError("selective_scan: delta_bias and skip must be [c]");
    return {c, len, n};
}

// zoh factor via the fast exp pair, blend form so the state loops vectorize;
// series cutoff matches zoh_b_factor.
inline double zoh_blend(double a, double delta, double em) {
    const double z = delta * a;
    const double series = delta * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)));
    const double exact = em / a;
    return std::fabs(z) < 1e-6 ? series : exact;
}

inline double zoh_da_blend(double a, double delta, double ex, double bf) {
    const double z = delta * a;
    const double series = delta * delta * (0.5 + z * (1.0 / 3.0 + z / 8.0));
    const double exact = (delta * ex - bf) / a;
    return std::fabs(z) < 1e-6 ? series : exact;
}

}  // namespace

Tensor selective_scan(const Tensor& x, const Tensor& delta_raw, const Tensor& b_seq,
                      const Tensor& c_seq, const Tensor& a_diag, const Tensor& delta_bias,
                      const Tensor& skip) {
    const auto [c, len, n] = check_scan_shapes(x, delta_raw, b_seq, c_seq, a_diag, delta_bias, skip);

    // Token-major copies of the projections: [L,N] keeps the recurrence inner
    // loop contiguous.
    std::vector<double> bt(static_cast<size_t>(len) * n), ct(static_cast<size_t>(len) * n);
    {
        const double* pb = b_seq.data().data();
        const double* pc = c_seq.data().data();
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < len; ++k) {
                bt[static_cast<size_t>(k) * n + i] = pb[static_cast<size_t>(i) * len + k];
                ct[static_cast<size_t>(k) * n + i] = pc[static_cast<size_t>(i) * len + k];
            }
    }

    Tensor out = Tensor::zeros({c, len});
    {
        const double* px = x.data().data();
        const double* pdr = delta_raw.data().data();
        const double* pa = a_diag.data().data();
        const double* pbias = delta_bias.data().data();
        const double* pskip = skip.data().data();
        double* po = out.data().data();
        std::vector<double> h(n), exv(n), bfv(n);
        for (int ch = 0; ch < c; ++ch) {
            const double* __restrict arow = pa + static_cast<size_t>(ch) * n;
            const double bias = pbias[ch];
            const double dsk = pskip[ch];
            const double* __restrict xrow = px + static_cast<size_t>(ch) * len;
            double* __restrict orow = po + static_cast<size_t>(ch) * len;
            std::fill(h.begin(), h.end(), 0.0);
            double* __restrict hp = h.data();
            double* __restrict exp_ = exv.data();
            double* __restrict bfp = bfv.data();
            for (int k = 0; k < len; ++k) {
                double dlt, dltg;
                softplus_val_grad(pdr[k] + bias, dlt, dltg);
                const double xv = xrow[k];
                const double* __restrict bk = bt.data() + static_cast<size_t>(k) * n;
                const double* __restrict ck = ct.data() + static_cast<size_t>(k) * n;
                for (int i = 0; i < n; ++i) {
                    double ex, em;
                    fast_exp_expm1(dlt * arow[i], ex, em);
                    exp_[i] = ex;
                    bfp[i] = zoh_blend(arow[i], dlt, em);
                }
                double acc = 0.0;
                for (int i = 0; i < n; ++i) {
                    hp[i] = exp_[i] * hp[i] + bfp[i] * bk[i] * xv;
                    acc += ck[i] * hp[i];
                }
                orow[k] = acc + dsk * xv;
            }
        }
    }

    if (grad_enabled() &&
        (x.requires_grad() || delta_raw.requires_grad() || b_seq.requires_grad() ||
         c_seq.requires_grad() || a_diag.requires_grad() || delta_bias.requires_grad() ||
         skip.requires_grad())) {
        auto xi = x.impl, di = delta_raw.impl, bi = b_seq.impl, ci = c_seq.impl, ai = a_diag.impl,
             bbi = delta_bias.impl, si = skip.impl;
        auto bt_s = std::make_shared<std::vector<double>>(std::move(bt));
        auto ct_s = std::make_shared<std::vector<double>>(std::move(ct));
        const int cc = c, ll = len, nn = n;
        out.impl->requires_grad = true;
        out.impl->parents = {xi, di, bi, ci, ai, bbi, si};
        out.impl->backprop = [=](TensorImpl& self) {
            const double* g = self.grad.data();
            const double* px = xi->data.data();
            const double* pdr = di->data.data();
            const double* pa = ai->data.data();
            const double* pbias = bbi->data.data();
            const double* pskip = si->data.data();
            const double* btp = bt_s->data();
            const double* ctp = ct_s->data();

            const bool need_x = xi->requires_grad;
            const bool need_dr = di->requires_grad;
            const bool need_b = bi->requires_grad;
            const bool need_c = ci->requires_grad;
            const bool need_a = ai->requires_grad;
            const bool need_bias = bbi->requires_grad;
            const bool need_skip = si->requires_grad;

            double* gx = need_x ? xi->ensure_grad().data() : nullptr;
            double* gdr = need_dr ? di->ensure_grad().data() : nullptr;
            double* ga = need_a ? ai->ensure_grad().data() : nullptr;
            double* gbias = need_bias ? bbi->ensure_grad().data() : nullptr;
            double* gskip = need_skip ? si->ensure_grad().data() : nullptr;

            // Token-major scratch for the sequence grads, folded back at the end.
            std::vector<double> gb_t, gc_t;
            if (need_b) gb_t.assign(static_cast<size_t>(ll) * nn, 0.0);
            if (need_c) gc_t.assign(static_cast<size_t>(ll) * nn, 0.0);

            // Forward states and discretization factors are recomputed per
            // channel and cached for the adjoint pass: O(L*N) transient
            // memory instead of holding every scan's states in the graph.
            std::vector<double> hs(static_cast<size_t>(ll + 1) * nn);
            std::vector<double> ex_all(static_cast<size_t>(ll) * nn);
            std::vector<double> bf_all(static_cast<size_t>(ll) * nn);
            std::vector<double> dbf_all(static_cast<size_t>(ll) * nn);
            std::vector<double> dlt_all(ll), dltg_all(ll);
            std::vector<double> lambda(nn);
            for (int ch = 0; ch < cc; ++ch) {
                const double* __restrict arow = pa + static_cast<size_t>(ch) * nn;
                const double bias = pbias[ch];
                const double dsk = pskip[ch];
                const double* __restrict xrow = px + static_cast<size_t>(ch) * ll;
                const double* __restrict grow = g + static_cast<size_t>(ch) * ll;

                std::fill(hs.begin(), hs.begin() + nn, 0.0);
                for (int k = 0; k < ll; ++k) {
                    softplus_val_grad(pdr[k] + bias, dlt_all[k], dltg_all[k]);
                    const double dlt = dlt_all[k];
                    const double xv = xrow[k];
                    const double* __restrict bk = btp + static_cast<size_t>(k) * nn;
                    const double* __restrict hprev = hs.data() + static_cast<size_t>(k) * nn;
                    double* __restrict hcur = hs.data() + static_cast<size_t>(k + 1) * nn;
                    double* __restrict exk = ex_all.data() + static_cast<size_t>(k) * nn;
                    double* __restrict bfk = bf_all.data() + static_cast<size_t>(k) * nn;
                    double* __restrict dbfk = dbf_all.data() + static_cast<size_t>(k) * nn;
                    for (int i = 0; i < nn; ++i) {
                        double ex, em;
                        fast_exp_expm1(dlt * arow[i], ex, em);
                        const double bf = zoh_blend(arow[i], dlt, em);
                        exk[i] = ex;
                        bfk[i] = bf;
                        dbfk[i] = zoh_da_blend(arow[i], dlt, ex, bf);
                        hcur[i] = ex * hprev[i] + bf * bk[i] * xv;
                    }
                }

                std::fill(lambda.begin(), lambda.end(), 0.0);
                double* __restrict lam_p = lambda.data();
                double* __restrict ga_row = need_a ? ga + static_cast<size_t>(ch) * nn : nullptr;
                double gbias_acc = 0.0, gskip_acc = 0.0;
                for (int k = ll - 1; k >= 0; --k) {
                    const double dlt = dlt_all[k];
                    const double xv = xrow[k];
                    const double gy = grow[k];
                    const double* __restrict bk = btp + static_cast<size_t>(k) * nn;
                    const double* __restrict ck = ctp + static_cast<size_t>(k) * nn;
                    const double* __restrict hprev = hs.data() + static_cast<size_t>(k) * nn;
                    const double* __restrict hcur = hs.data() + static_cast<size_t>(k + 1) * nn;
                    const double* __restrict exk = ex_all.data() + static_cast<size_t>(k) * nn;
                    const double* __restrict bfk = bf_all.data() + static_cast<size_t>(k) * nn;
                    const double* __restrict dbfk = dbf_all.data() + static_cast<size_t>(k) * nn;

                    gskip_acc += gy * xv;
                    double gx_acc = gy * dsk;
                    double gdelta = 0.0;

                    double* __restrict gck = need_c ? gc_t.data() + static_cast<size_t>(k) * nn : nullptr;
                    double* __restrict gbk = need_b ? gb_t.data() + static_cast<size_t>(k) * nn : nullptr;
                    for (int i = 0; i < nn; ++i) {
                        const double lam = lam_p[i] + gy * ck[i];
                        if (need_c) gck[i] += gy * hcur[i];
                        const double gad = lam * hprev[i];
                        const double gbf = lam * bk[i] * xv;
                        if (need_a) ga_row[i] += gad * dlt * exk[i] + gbf * dbfk[i];
                        gdelta += gad * arow[i] * exk[i] + gbf * exk[i];
                        if (need_b) gbk[i] += lam * bf_all[static_cast<size_t>(k) * nn + i] * xv;
                        gx_acc += lam * bfk[i] * bk[i];
                        lam_p[i] = lam * exk[i];
                    }
                    if (need_x) gx[static_cast<size_t>(ch) * ll + k] += gx_acc;
                    const double gs = gdelta * dltg_all[k];
                    if (need_dr) gdr[k] += gs;
                    gbias_acc += gs;
                }
                if (need_bias) gbias[ch] += gbias_acc;
                if (need_skip) gskip[ch] += gskip_acc;
            }

            if (need_b) {
                auto& gb = bi->ensure_grad();
                for (int i = 0; i < nn; ++i)
                    for (int k = 0; k < ll; ++k)
                        gb[static_cast<size_t>(i) * ll + k] += gb_t[static_cast<size_t>(k) * nn + i];
            }
            if (need_c) {
                auto& gc = ci->ensure_grad();
                for (int i = 0; i < nn; ++i)
                    for (int k = 0; k < ll; ++k)
                        gc[static_cast<size_t>(i) * ll + k] += gc_t[static_cast<size_t>(k) * nn + i];
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// SS2D layer
// ---------------------------------------------------------------------------

Ss2dLayer::Ss2dLayer(int channels, int state_dim, Rng& rng, bool average_merge)
    : channels_(channels), state_dim_(state_dim), average_merge_(average_merge) {
    if (channels < 1 || state_dim < 1) throw ConfigError("ss2d: channels and state_dim must be >= 1");
    const double s = 1.0 / std::sqrt(static_cast<double>(channels));
    for (auto& d : dirs_) {
        d.a_log = Tensor::zeros({channels, state_dim});
        for (int ch = 0; ch < channels; ++ch)
            for (int i = 0; i < state_dim; ++i)
                d.a_log.data()[static_cast<size_t>(ch) * state_dim + i] = std::log(i + 1.0);

        d.b_proj = Tensor::zeros({state_dim, channels});
        d.c_proj = Tensor::zeros({state_dim, channels});
        d.delta_proj = Tensor::zeros({1, channels});
        for (double& v : d.b_proj.data()) v = rng.uniform(-s, s);
        for (double& v : d.c_proj.data()) v = rng.uniform(-s, s);
        for (double& v : d.delta_proj.data()) v = rng.uniform(-s, s);

        d.delta_bias = Tensor::zeros({channels});
        for (double& v : d.delta_bias.data()) {
            // softplus(bias) lands in [1e-3, 0.1] so exp(delta*A) starts
            // well-conditioned.
            const double target = rng.uniform(1e-3, 0.1);
            v = std::log(std::expm1(target));
        }
        d.skip = Tensor::full({channels}, 1.0);

        d.a_log.set_requires_grad(true);
        d.b_proj.set_requires_grad(true);
        d.c_proj.set_requires_grad(true);
        d.delta_proj.set_requires_grad(true);
        d.delta_bias.set_requires_grad(true);
        d.skip.set_requires_grad(true);
    }
}

namespace {

Tensor scan_one_direction(const Ss2dDirection& p, const Tensor& flat, const std::vector<int>& order,
                          const std::vector<int>& inv) {
    Tensor xs = gather_cols(flat, order);
    Tensor b_seq = matmul(p.b_proj, xs);
    Tensor c_seq = matmul(p.c_proj, xs);
    Tensor dr = matmul(p.delta_proj, xs);
    Tensor a = neg(exp_op(p.a_log));
    Tensor y = selective_scan(xs, dr, b_seq, c_seq, a, p.delta_bias, p.skip);
    return gather_cols(y, inv);
}

}  // namespace

Tensor Ss2dLayer::forward(const Tensor& x) const {
    if (x.shape().size() != 3 || x.shape()[0] != channels_)
        throw ShapeError("ss2d: input must be [" + std::to_string(channels_) + ",h,w], got " +
                         shape_str(x.shape()));
    const int h = x.shape()[1], w = x.shape()[2];
    Tensor flat = reshape(x, {channels_, h * w});
    Tensor merged;
    for (size_t d = 0; d < dirs_.size(); ++d) {
        const auto order = scan_order(kAllDirections[d], h, w);
        const auto inv = inverse_order(order);
        Tensor y = scan_one_direction(dirs_[d], flat, order, inv);
        merged = merged.defined() ? add(merged, y) : y;
    }
    if (average_merge_) merged = mul_scalar(merged, 1.0 / dirs_.size());
    return reshape(merged, {channels_, h, w});
}

Tensor Ss2dLayer::forward_direction(const Tensor& x, ScanDirection dir) const {
    const int h = x.shape()[1], w = x.shape()[2];
    Tensor flat = reshape(x, {channels_, h * w});
    const auto order = scan_order(dir, h, w);
    const auto inv = inverse_order(order);
    const auto& p = dirs_[static_cast<size_t>(dir)];
    return reshape(scan_one_direction(p, flat, order, inv), {channels_, h, w});
}

void Ss2dLayer::collect_parameters(const std::string& prefix, std::vector<Parameter>& out) {
    static const char* dir_names[4] = {"rowf", "rowb", "colf", "colb"};
    for (size_t d = 0; d < dirs_.size(); ++d) {
        const std::string p = prefix + "." + dir_names[d];
        out.push_back({p + ".a_log", dirs_[d].a_log});
        out.push_back({p + ".b_proj", dirs_[d].b_proj});
        out.push_back({p + ".c_proj", dirs_[d].c_proj});
        out.push_back({p + ".delta_proj", dirs_[d].delta_proj});
        out.push_back({p + ".delta_bias", dirs_[d].delta_bias});
        out.push_back({p + ".skip", dirs_[d].skip});
    }
}

}  // namespace mdn
