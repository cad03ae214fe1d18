#include "mdn/ops.hpp"

#include <cmath>
#include <cstring>

namespace mdn {

namespace {

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!grad_enabled()) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

void record(Tensor& out, std::vector<TensorPtr> parents, std::function<void(TensorImpl&)> fn) {
    out.impl->requires_grad = true;
    out.impl->parents = std::move(parents);
    out.impl->backprop = std::move(fn);
}

void axpy(std::vector<double>& dst, const std::vector<double>& src, double scale) {
    double* __restrict d = dst.data();
    const double* __restrict s = src.data();
    const size_t n = dst.size();
    for (size_t i = 0; i < n; ++i) d[i] += scale * s[i];
}

enum class BinKind { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
    const bool a_scalar = a.numel() == 1;
    const bool b_scalar = b.numel() == 1;
    if (a.shape() != b.shape() && !a_scalar && !b_scalar)
        throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ and neither is scalar");

    const Tensor& big = (a_scalar && !b_scalar) ? b : a;
    Tensor out = Tensor::zeros(big.shape());
    const int n = out.numel();
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    const int sa = a_scalar ? 0 : 1;
    const int sb = b_scalar ? 0 : 1;
    switch (kind) {
        case BinKind::Add:
            for (int i = 0; i < n; ++i) po[i] = pa[i * sa] + pb[i * sb];
            break;
        case BinKind::Sub:
            for (int i = 0; i < n; ++i) po[i] = pa[i * sa] - pb[i * sb];
            break;
        case BinKind::Mul:
            for (int i = 0; i < n; ++i) po[i] = pa[i * sa] * pb[i * sb];
            break;
    }

    if (should_record({&a, &b})) {
        auto ai = a.impl, bi = b.impl;
        record(out, {ai, bi}, [ai, bi, kind, sa, sb, n](TensorImpl& self) {
            const double* g = self.grad.data();
            if (ai->requires_grad) {
                auto& ga = ai->ensure_grad();
                if (sa == 0) {
                    double acc = 0;
                    if (kind == BinKind::Mul) {
                        const double* pb2 = bi->data.data();
                        for (int i = 0; i < n; ++i) acc += g[i] * pb2[i * sb];
                    } else {
                        for (int i = 0; i < n; ++i) acc += g[i];
                    }
                    ga[0] += acc;
                } else {
                    if (kind == BinKind::Mul) {
                        const double* pb2 = bi->data.data();
                        for (int i = 0; i < n; ++i) ga[i] += g[i] * pb2[i * sb];
                    } else {
                        for (int i = 0; i < n; ++i) ga[i] += g[i];
                    }
                }
            }
            if (bi->requires_grad) {
                auto& gb = bi->ensure_grad();
                const double sign = (kind == BinKind::Sub) ? -1.0 : 1.0;
                if (sb == 0) {
                    double acc = 0;
                    if (kind == BinKind::Mul) {
                        const double* pa2 = ai->data.data();
                        for (int i = 0; i < n; ++i) acc += g[i] * pa2[i * sa];
                    } else {
                        for (int i = 0; i < n; ++i) acc += g[i];
                    }
                    gb[0] += sign * acc;
                } else {
                    if (kind == BinKind::Mul) {
                        const double* pa2 = ai->data.data();
                        for (int i = 0; i < n; ++i) gb[i] += g[i] * pa2[i * sa];
                    } else {
                        for (int i = 0; i < n; ++i) gb[i] += sign * g[i];
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul, "mul"); }

Tensor add_scalar(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    const int n = a.numel();
    for (int i = 0; i < n; ++i) out.data()[i] = a.data()[i] + c;
    if (should_record({&a})) {
        auto ai = a.impl;
        record(out, {ai}, [ai](TensorImpl& self) {
            if (ai->requires_grad) axpy(ai->ensure_grad(), self.grad, 1.0);
        });
    }
    return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    const int n = a.numel();
    for (int i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
    if (should_record({&a})) {
        auto ai = a.impl;
        record(out, {ai}, [ai, c](TensorImpl& self) {
            if (ai->requires_grad) axpy(ai->ensure_grad(), self.grad, c);
        });
    }
    return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd dfn) {
    Tensor out = Tensor::zeros(a.shape());
    const int n = a.numel();
    const double* pa = a.data().data();
    double* po = out.data().data();
    for (int i = 0; i < n; ++i) po[i] = fwd(pa[i]);
    if (should_record({&a})) {
        auto ai = a.impl;
        // `self` is the output node; capturing out.impl here would create a
        // shared_ptr cycle and leak the whole graph.
        record(out, {ai}, [ai, dfn, n](TensorImpl& self) {
            if (!ai->requires_grad) return;
            auto& ga = ai->ensure_grad();
            const double* g = self.grad.data();
            const double* x = ai->data.data();
            const double* y = self.data.data();
            for (int i = 0; i < n; ++i) ga[i] += g[i] * dfn(x[i], y[i]);
        });
    }
    return out;
}

}  // namespace

Tensor neg(const Tensor& a) {
    return unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp_op(const Tensor& a) {
    return unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor abs_op(const Tensor& a) {
    return unary_op(a, [](double x) { return std::fabs(x); },
                    [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& a) {
    return unary_op(a,
                    [](double x) { return x / (1.0 + std::exp(-x)); },
                    [](double x, double) {
                        const double s = 1.0 / (1.0 + std::exp(-x));
                        return s * (1.0 + x * (1.0 - s));
                    });
}

Tensor sum_all(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    Tensor out = Tensor::scalar(acc);
    if (should_record({&a})) {
        auto ai = a.impl;
        record(out, {ai}, [ai](TensorImpl& self) {
            if (!ai->requires_grad) return;
            auto& ga = ai->ensure_grad();
            const double g = self.grad[0];
            for (double& v : ga) v += g;
        });
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2)
        throw ShapeError("matmul expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const int m = a.shape()[0], k = a.shape()[1];
    const int k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));

    Tensor out = Tensor::zeros({m, n});
    {
        const double* __restrict pa = a.data().data();
        const double* __restrict pb = b.data().data();
        double* __restrict po = out.data().data();
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                const double av = pa[i * k + p];
                const double* __restrict brow = pb + p * n;
                double* __restrict orow = po + i * n;
                for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
    }

    if (should_record({&a, &b})) {
        auto ai = a.impl, bi = b.impl;
        record(out, {ai, bi}, [ai, bi, m, k, n](TensorImpl& self) {
            const double* __restrict g = self.grad.data();
            if (ai->requires_grad) {
                // a.grad += g . b^T
                auto& ga = ai->ensure_grad();
                const double* __restrict pb = bi->data.data();
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        const double* __restrict grow = g + i * n;
                        const double* __restrict brow = pb + p * n;
                        double acc = 0;
                        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + p] += acc;
                    }
            }
            if (bi->requires_grad) {
                // b.grad += a^T . g
                auto& gb = bi->ensure_grad();
                const double* __restrict pa = ai->data.data();
                for (int p = 0; p < k; ++p)
                    for (int i = 0; i < m; ++i) {
                        const double av = pa[i * k + p];
                        const double* __restrict grow = g + i * n;
                        double* __restrict gbrow = gb.data() + p * n;
                        for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                    }
            }
        });
    }
    return out;
}

namespace {

void check_conv_kernel(int kh, int kw) {
    if (kh % 2 == 0 || kw % 2 == 0)
        throw ConfigError("convolution kernel extents must be odd, got " + std::to_string(kh) +
                          "x" + std::to_string(kw));
}

// Same-padded correlation of one (h,w) plane pair: out += w_val * shifted(in).
// dy/dx are kernel offsets relative to the center.
inline void corr_accum_plane(double* __restrict out, const double* __restrict in, int h, int w,
                             int dy, int dx, double w_val) {
    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
    for (int y = y0; y < y1; ++y) {
        double* __restrict orow = out + y * w;
        const double* __restrict irow = in + (y + dy) * w + dx;
        for (int x = x0; x < x1; ++x) orow[x] += w_val * irow[x];
    }
}

// dot(g_plane, shifted(in_plane)) over the valid overlap.
inline double corr_dot_plane(const double* __restrict g, const double* __restrict in, int h, int w,
                             int dy, int dx) {
    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
    double acc = 0;
    for (int y = y0; y < y1; ++y) {
        const double* __restrict grow = g + y * w;
        const double* __restrict irow = in + (y + dy) * w + dx;
        for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x];
    }
    return acc;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape().size() != 3) throw ShapeError("conv2d input must be [c,h,w], got " + shape_str(x.shape()));
    if (w.shape().size() != 4) throw ShapeError("conv2d weight must be [co,ci,kh,kw], got " + shape_str(w.shape()));
    const int ci = x.shape()[0], h = x.shape()[1], ww = x.shape()[2];
    const int co = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    if (w.shape()[1] != ci)
        throw ShapeError("conv2d channel mismatch: input " + shape_str(x.shape()) + " weight " +
                         shape_str(w.shape()));
    if (b.shape() != std::vector<int>{co})
        throw ShapeError("conv2d bias must be [co], got " + shape_str(b.shape()));
    check_conv_kernel(kh, kw);

    const int plane = h * ww;
    const int ph = kh / 2, pw = kw / 2;
    Tensor out = Tensor::zeros({co, h, ww});
    {
        const double* px = x.data().data();
        const double* pw_ = w.data().data();
        double* po = out.data().data();
        for (int oc = 0; oc < co; ++oc) {
            double* oplane = po + oc * plane;
            const double bias = b.data()[oc];
            for (int i = 0; i < plane; ++i) oplane[i] = bias;
            for (int ic = 0; ic < ci; ++ic) {
                const double* iplane = px + ic * plane;
                const double* krn = pw_ + ((oc * ci) + ic) * kh * kw;
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx)
                        corr_accum_plane(oplane, iplane, h, ww, ky - ph, kx - pw,
                                         krn[ky * kw + kx]);
            }
        }
    }

    if (should_record({&x, &w, &b})) {
        auto xi = x.impl, wi = w.impl, bi = b.impl;
        record(out, {xi, wi, bi}, [xi, wi, bi, ci, co, h, ww, kh, kw, ph, pw, plane](TensorImpl& self) {
            const double* g = self.grad.data();
            if (bi->requires_grad) {
                auto& gb = bi->ensure_grad();
                for (int oc = 0; oc < co; ++oc) {
                    const double* gp = g + oc * plane;
                    double acc = 0;
                    for (int i = 0; i < plane; ++i) acc += gp[i];
                    gb[oc] += acc;
                }
            }
            if (wi->requires_grad) {
                auto& gw = wi->ensure_grad();
                const double* px = xi->data.data();
                for (int oc = 0; oc < co; ++oc)
                    for (int ic = 0; ic < ci; ++ic) {
                        double* gk = gw.data() + ((oc * ci) + ic) * kh * kw;
                        const double* gp = g + oc * plane;
                        const double* iplane = px + ic * plane;
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx)
                                gk[ky * kw + kx] +=
                                    corr_dot_plane(gp, iplane, h, ww, ky - ph, kx - pw);
                    }
            }
            if (xi->requires_grad) {
                // Gradient wrt input is the correlation of g with the flipped
                // kernel: gx[ic] += sum_oc corr(g[oc], flip(w[oc][ic])).
                auto& gx = xi->ensure_grad();
                const double* pw_ = wi->data.data();
                for (int ic = 0; ic < ci; ++ic) {
                    double* gplane = gx.data() + ic * plane;
                    for (int oc = 0; oc < co; ++oc) {
                        const double* gp = g + oc * plane;
                        const double* krn = pw_ + ((oc * ci) + ic) * kh * kw;
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx)
                                corr_accum_plane(gplane, gp, h, ww, ph - ky, pw - kx,
                                                 krn[ky * kw + kx]);
                    }
                }
            }
        });
    }
    return out;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel) {
    if (x.shape().size() != 3)
        throw ShapeError("depthwise_conv2d input must be [c,h,w], got " + shape_str(x.shape()));
    if (kernel.shape().size() != 3)
        throw ShapeError("depthwise_conv2d kernel must be [c,kh,kw], got " +
                         shape_str(kernel.shape()));
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const int kh = kernel.shape()[1], kw = kernel.shape()[2];
    if (kernel.shape()[0] != c)
        throw ShapeError("depthwise_conv2d channel mismatch: " + shape_str(x.shape()) + " vs " +
                         shape_str(kernel.shape()));
    check_conv_kernel(kh, kw);

    const int plane = h * w;
    const int ph = kh / 2, pw = kw / 2;
    Tensor out = Tensor::zeros({c, h, w});
    {
        const double* px = x.data().data();
        const double* pk = kernel.data().data();
        double* po = out.data().data();
        for (int ch = 0; ch < c; ++ch) {
            const double* iplane = px + ch * plane;
            const double* krn = pk + ch * kh * kw;
            double* oplane = po + ch * plane;
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx)
                    corr_accum_plane(oplane, iplane, h, w, ky - ph, kx - pw, krn[ky * kw + kx]);
        }
    }

    if (should_record({&x, &kernel})) {
        auto xi = x.impl, ki = kernel.impl;
        record(out, {xi, ki}, [xi, ki, c, h, w, kh, kw, ph, pw, plane](TensorImpl& self) {
            const double* g = self.grad.data();
            if (ki->requires_grad) {
                auto& gk = ki->ensure_grad();
                const double* px = xi->data.data();
                for (int ch = 0; ch < c; ++ch) {
                    const double* gp = g + ch * plane;
                    const double* iplane = px + ch * plane;
                    double* gkrn = gk.data() + ch * kh * kw;
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx)
                            gkrn[ky * kw + kx] += corr_dot_plane(gp, iplane, h, w, ky - ph, kx - pw);
                }
            }
            if (xi->requires_grad) {
                auto& gx = xi->ensure_grad();
                const double* pk = ki->data.data();
                for (int ch = 0; ch < c; ++ch) {
                    const double* gp = g + ch * plane;
                    const double* krn = pk + ch * kh * kw;
                    double* gplane = gx.data() + ch * plane;
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx)
                            corr_accum_plane(gplane, gp, h, w, ph - ky, pw - kx, krn[ky * kw + kx]);
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps, int axis) {
    const auto& s = x.shape();
    const int rank = static_cast<int>(s.size());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ShapeError("layer_norm axis out of range");
    if (eps <= 0) throw ConfigError("layer_norm eps must be positive");
    const int nc = s[axis];
    if (gain.shape() != std::vector<int>{nc} || bias.shape() != std::vector<int>{nc})
        throw ShapeError("layer_norm gain/bias must be [" + std::to_string(nc) + "], got " +
                         shape_str(gain.shape()) + " and " + shape_str(bias.shape()));

    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < rank; ++i) inner *= s[i];

    Tensor out = Tensor::zeros(s);
    // Saved statistics for the backward pass.
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(outer) * inner);
    auto means = std::make_shared<std::vector<double>>(static_cast<size_t>(outer) * inner);
    {
        const double* px = x.data().data();
        const double* pg = gain.data().data();
        const double* pb = bias.data().data();
        double* po = out.data().data();
        for (int o = 0; o < outer; ++o)
            for (int p = 0; p < inner; ++p) {
                const size_t base = static_cast<size_t>(o) * nc * inner + p;
                double mean = 0;
                for (int ch = 0; ch < nc; ++ch) mean += px[base + static_cast<size_t>(ch) * inner];
                mean /= nc;
                double var = 0;
                for (int ch = 0; ch < nc; ++ch) {
                    const double d = px[base + static_cast<size_t>(ch) * inner] - mean;
                    var += d * d;
                }
                var /= nc;
                const double is = 1.0 / std::sqrt(var + eps);
                (*means)[static_cast<size_t>(o) * inner + p] = mean;
                (*inv_std)[static_cast<size_t>(o) * inner + p] = is;
                for (int ch = 0; ch < nc; ++ch) {
                    const size_t idx = base + static_cast<size_t>(ch) * inner;
                    po[idx] = (px[idx] - mean) * is * pg[ch] + pb[ch];
                }
            }
    }

    if (should_record({&x, &gain, &bias})) {
        auto xi = x.impl, gi = gain.impl, bi = bias.impl;
        record(out, {xi, gi, bi},
               [xi, gi, bi, inv_std, means, outer, inner, nc](TensorImpl& self) {
                   const double* g = self.grad.data();
                   const double* px = xi->data.data();
                   const double* pg = gi->data.data();
                   std::vector<double> xhat(nc), gy(nc);
                   for (int o = 0; o < outer; ++o)
                       for (int p = 0; p < inner; ++p) {
                           const size_t base = static_cast<size_t>(o) * nc * inner + p;
                           const double mean = (*means)[static_cast<size_t>(o) * inner + p];
                           const double is = (*inv_std)[static_cast<size_t>(o) * inner + p];
                           for (int ch = 0; ch < nc; ++ch) {
                               const size_t idx = base + static_cast<size_t>(ch) * inner;
                               xhat[ch] = (px[idx] - mean) * is;
                               gy[ch] = g[idx];
                           }
                           if (gi->requires_grad) {
                               auto& gg = gi->ensure_grad();
                               for (int ch = 0; ch < nc; ++ch) gg[ch] += gy[ch] * xhat[ch];
                           }
                           if (bi->requires_grad) {
                               auto& gb = bi->ensure_grad();
                               for (int ch = 0; ch < nc; ++ch) gb[ch] += gy[ch];
                           }
                           if (xi->requires_grad) {
                               auto& gx = xi->ensure_grad();
                               double sum_d = 0, sum_dx = 0;
                               for (int ch = 0; ch < nc; ++ch) {
                                   const double d = gy[ch] * pg[ch];
                                   sum_d += d;
                                   sum_dx += d * xhat[ch];
                               }
                               const double inv_n = 1.0 / nc;
                               for (int ch = 0; ch < nc; ++ch) {
                                   const double d = gy[ch] * pg[ch];
                                   gx[base + static_cast<size_t>(ch) * inner] +=
                                       is * (d - inv_n * sum_d - xhat[ch] * inv_n * sum_dx);
                               }
                           }
                       }
               });
    }
    return out;
}

Tensor avg_pool2(const Tensor& x) {
    if (x.shape().size() != 3) throw ShapeError("avg_pool2 input must be [c,h,w]");
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const int oh = (h + 1) / 2, ow = (w + 1) / 2;
    Tensor out = Tensor::zeros({c, oh, ow});
    {
        const double* px = x.data().data();
        double* po = out.data().data();
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = 0;
                    int cnt = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const int y = 2 * oy + dy, xx = 2 * ox + dx;
                            if (y < h && xx < w) {
                                acc += px[(static_cast<size_t>(ch) * h + y) * w + xx];
                                ++cnt;
                            }
                        }
                    po[(static_cast<size_t>(ch) * oh + oy) * ow + ox] = acc / cnt;
                }
    }
    if (should_record({&x})) {
        auto xi = x.impl;
        record(out, {xi}, [xi, c, h, w, oh, ow](TensorImpl& self) {
            if (!xi->requires_grad) return;
            auto& gx = xi->ensure_grad();
            const double* g = self.grad.data();
            for (int ch = 0; ch < c; ++ch)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        int cnt = 0;
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx)
                                if (2 * oy + dy < h && 2 * ox + dx < w) ++cnt;
                        const double gv = g[(static_cast<size_t>(ch) * oh + oy) * ow + ox] / cnt;
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const int y = 2 * oy + dy, xx = 2 * ox + dx;
                                if (y < h && xx < w)
                                    gx[(static_cast<size_t>(ch) * h + y) * w + xx] += gv;
                            }
                    }
        });
    }
    return out;
}

Tensor upsample_nearest2(const Tensor& x, int out_h, int out_w) {
    if (x.shape().size() != 3) throw ShapeError("upsample_nearest2 input must be [c,h,w]");
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    if (out_h < h || out_w < w || out_h > 2 * h || out_w > 2 * w)
        throw ShapeError("upsample_nearest2 target " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " incompatible with source " + std::to_string(h) +
                         "x" + std::to_string(w));
    Tensor out = Tensor::zeros({c, out_h, out_w});
    {
        const double* px = x.data().data();
        double* po = out.data().data();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < out_h; ++y) {
                const int sy = std::min(y / 2, h - 1);
                const double* irow = px + (static_cast<size_t>(ch) * h + sy) * w;
                double* orow = po + (static_cast<size_t>(ch) * out_h + y) * out_w;
                for (int xx = 0; xx < out_w; ++xx) orow[xx] = irow[std::min(xx / 2, w - 1)];
            }
    }
    if (should_record({&x})) {
        auto xi = x.impl;
        record(out, {xi}, [xi, c, h, w, out_h, out_w](TensorImpl& self) {
            if (!xi->requires_grad) return;
            auto& gx = xi->ensure_grad();
            const double* g = self.grad.data();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < out_h; ++y) {
                    const int sy = std::min(y / 2, h - 1);
                    double* grow = gx.data() + (static_cast<size_t>(ch) * h + sy) * w;
                    const double* orow = g + (static_cast<size_t>(ch) * out_h + y) * out_w;
                    for (int xx = 0; xx < out_w; ++xx) grow[std::min(xx / 2, w - 1)] += orow[xx];
                }
        });
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 3 || b.shape().size() != 3)
        throw ShapeError("concat_channels operands must be [c,h,w]");
    if (a.shape()[1] != b.shape()[1] || a.shape()[2] != b.shape()[2])
        throw ShapeError("concat_channels spatial extents differ: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    const int ca = a.shape()[0], cb = b.shape()[0];
    const int h = a.shape()[1], w = a.shape()[2];
    Tensor out = Tensor::zeros({ca + cb, h, w});
    std::memcpy(out.data().data(), a.data().data(), a.data().size() * sizeof(double));
    std::memcpy(out.data().data() + a.numel(), b.data().data(), b.data().size() * sizeof(double));
    if (should_record({&a, &b})) {
        auto ai = a.impl, bi = b.impl;
        const int na = a.numel();
        record(out, {ai, bi}, [ai, bi, na](TensorImpl& self) {
            const double* g = self.grad.data();
            if (ai->requires_grad) {
                auto& ga = ai->ensure_grad();
                for (int i = 0; i < na; ++i) ga[i] += g[i];
            }
            if (bi->requires_grad) {
                auto& gb = bi->ensure_grad();
                const int nb = static_cast<int>(gb.size());
                for (int i = 0; i < nb; ++i) gb[i] += g[na + i];
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    const int n = detail::checked_numel(shape);
    if (n != x.numel())
        throw ShapeError("reshape from " + shape_str(x.shape()) + " to " + shape_str(shape) +
                         " changes element count");
    Tensor out = Tensor::from_data(std::move(shape), x.data());
    if (should_record({&x})) {
        auto xi = x.impl;
        record(out, {xi}, [xi](TensorImpl& self) {
            if (xi->requires_grad) axpy(xi->ensure_grad(), self.grad, 1.0);
        });
    }
    return out;
}

Tensor gather_cols(const Tensor& x, const std::vector<int>& order) {
    if (x.shape().size() != 2) throw ShapeError("gather_cols input must be [c,L]");
    const int c = x.shape()[0], n = x.shape()[1];
    if (static_cast<int>(order.size()) != n)
        throw ShapeError("gather_cols order length " + std::to_string(order.size()) +
                         " does not match column count " + std::to_string(n));
    Tensor out = Tensor::zeros({c, n});
    {
        const double* px = x.data().data();
        double* po = out.data().data();
        for (int ch = 0; ch < c; ++ch) {
            const double* irow = px + static_cast<size_t>(ch) * n;
            double* orow = po + static_cast<size_t>(ch) * n;
            for (int k = 0; k < n; ++k) orow[k] = irow[order[k]];
        }
    }
    if (should_record({&x})) {
        auto xi = x.impl;
        auto ord = std::make_shared<std::vector<int>>(order);
        record(out, {xi}, [xi, ord, c, n](TensorImpl& self) {
            if (!xi->requires_grad) return;
            auto& gx = xi->ensure_grad();
            const double* g = self.grad.data();
            for (int ch = 0; ch < c; ++ch) {
                double* grow = gx.data() + static_cast<size_t>(ch) * n;
                const double* orow = g + static_cast<size_t>(ch) * n;
                for (int k = 0; k < n; ++k) grow[(*ord)[k]] += orow[k];
            }
        });
    }
    return out;
}

}  // namespace mdn
