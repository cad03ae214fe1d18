#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <doctest.h>

#include "gradcheck.hpp"
#include "mdn/ops.hpp"
#include "mdn/rng.hpp"
#include "mdn/ssm.hpp"

using namespace mdn;

namespace {

SsmParams random_frozen(int n, Rng& rng) {
    SsmParams p;
    p.a_diag.resize(n);
    for (int i = 0; i < n; ++i) p.a_diag[i] = -rng.uniform(0.05, 4.0);
    p.skip = rng.normal();
    p.b.assign(1, std::vector<double>(n));
    p.c.assign(1, std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
        p.b[0][i] = rng.normal();
        p.c[0][i] = rng.normal();
    }
    p.delta.assign(1, rng.uniform(0.01, 1.5));
    return p;
}

SsmParams random_selective(int n, int len, Rng& rng) {
    SsmParams p = random_frozen(n, rng);
    p.b.assign(len, std::vector<double>(n));
    p.c.assign(len, std::vector<double>(n));
    p.delta.resize(len);
    for (int k = 0; k < len; ++k) {
        for (int i = 0; i < n; ++i) {
            p.b[k][i] = rng.normal();
            p.c[k][i] = rng.normal();
        }
        p.delta[k] = rng.uniform(0.01, 1.0);
    }
    return p;
}

std::vector<double> random_signal(int len, Rng& rng) {
    std::vector<double> x(len);
    for (double& v : x) v = rng.normal();
    return x;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = scale * rng.normal();
    return t;
}

Tensor rot180(const Tensor& x) {
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    Tensor out = Tensor::zeros({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                out.data()[(static_cast<size_t>(ch) * h + (h - 1 - y)) * w + (w - 1 - xx)] =
                    x.data()[(static_cast<size_t>(ch) * h + y) * w + xx];
    return out;
}

}  // namespace

TEST_CASE("zoh analytic case: A=-1, delta=ln 2") {
    auto [a_d, b_d] = discretize(std::vector<double>{-1.0}, std::vector<double>{1.0}, std::log(2.0));
    CHECK(std::fabs(a_d[0] - 0.5) < 1e-14);
    CHECK(std::fabs(b_d[0] - 0.5) < 1e-14);
}

TEST_CASE("zoh limit a -> 0 gives A_d -> 1, B_d -> delta*B") {
    const double delta = 0.37;
    auto [a_d, b_d] = discretize(std::vector<double>{-1e-12}, std::vector<double>{2.0}, delta);
    CHECK(std::fabs(a_d[0] - 1.0) < 1e-10);
    CHECK(std::fabs(b_d[0] - delta * 2.0) < 1e-10);
}

TEST_CASE("zoh series and exact branches agree at the cutoff") {
    // |delta*a| straddling 1e-6: evaluate both branches explicitly.
    const double delta = 1.0;
    for (double a : {-1e-6, -9.99e-7, -1.000001e-6}) {
        const double series = delta * (1 + delta * a * (0.5 + delta * a * (1.0 / 6.0 + delta * a / 24.0)));
        const double exact = std::expm1(delta * a) / a;
        CHECK(std::fabs(series - exact) < 1e-12);
        CHECK(std::fabs(zoh_b_factor(a, delta) - exact) < 1e-12);
    }
}

TEST_CASE("zoh matches a high-precision series near a -> 0") {
    const double delta = 0.8;
    for (double a : {-1e-7, -1e-8, -1e-10}) {
        // sum_{m>=0} delta^{m+1} a^m / (m+1)! in long double
        long double term = delta, acc = delta;
        for (int m = 1; m < 30; ++m) {
            term *= static_cast<long double>(delta) * a / (m + 1);
            acc += term;
        }
        CHECK(std::fabs(zoh_b_factor(a, delta) - static_cast<double>(acc)) < 1e-12);
    }
}

TEST_CASE("recurrence single step and pure-skip forms") {
    Rng rng(1);
    SsmParams p = random_frozen(3, rng);
    std::vector<double> x = {1.7};
    auto y = scan_recurrent(p, x);
    auto [a_d, b_d] = discretize(p.a_diag, p.b[0], p.delta[0]);
    double expect = p.skip * x[0];
    for (int i = 0; i < 3; ++i) expect += p.c[0][i] * b_d[i] * x[0];
    CHECK(std::fabs(y[0] - expect) < 1e-14);

    SsmParams noc = p;
    noc.c[0] = {0, 0, 0};
    auto x8 = random_signal(8, rng);
    auto ys = scan_recurrent(noc, x8);
    for (size_t k = 0; k < x8.size(); ++k) CHECK(ys[k] == doctest::Approx(p.skip * x8[k]));

    std::vector<double> zeros(8, 0.0);
    for (double v : scan_recurrent(p, zeros)) CHECK(v == 0.0);
}

TEST_CASE("kernel closed forms") {
    SsmParams p;
    p.a_diag = {std::log(0.5)};  // A_d = 0.5 at delta = 1
    p.delta = {1.0};
    p.b = {{zoh_b_factor(p.a_diag[0], 1.0) != 0.0 ? 1.0 / zoh_b_factor(p.a_diag[0], 1.0) : 1.0}};
    p.c = {{1.0}};
    p.skip = 0.0;
    auto k = kernel_materialize(p, 3);  // B_d == 1 by construction
    CHECK(k[0] == doctest::Approx(1.0));
    CHECK(k[1] == doctest::Approx(0.5));
    CHECK(k[2] == doctest::Approx(0.25));

    auto k1 = kernel_materialize(p, 1);
    CHECK(k1.size() == 1);
    CHECK(k1[0] == doctest::Approx(1.0));
}

TEST_CASE("kernel_materialize rejects selective parameters") {
    Rng rng(2);
    SsmParams p = random_selective(4, 16, rng);
    CHECK_THROWS_AS(kernel_materialize(p, 16), ContractError);
}

TEST_CASE("recurrence/convolution duality for frozen parameters") {
    Rng rng(3);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = rng.uniform_int(1, 8);
        const int len = rng.uniform_int(1, 64);
        SsmParams p = random_frozen(n, rng);
        auto x = random_signal(len, rng);
        auto y_rec = scan_recurrent(p, x);
        auto y_conv = ssm_conv_apply(x, kernel_materialize(p, len), p.skip);
        for (int k = 0; k < len; ++k) CHECK(std::fabs(y_rec[k] - y_conv[k]) < 1e-10);
    }
}

TEST_CASE("stability over long sequences") {
    Rng rng(4);
    SsmParams p = random_selective(8, 4096, rng);
    auto x = random_signal(4096, rng);
    auto y = scan_recurrent(p, x);
    for (double v : y) {
        CHECK(std::isfinite(v));
        CHECK(std::fabs(v) < 1e6);
    }
}

TEST_CASE("selectivity makes the scan non-equivariant to permutation") {
    Rng rng(5);
    const int len = 32;
    SsmParams p = random_selective(4, len, rng);
    auto x = random_signal(len, rng);
    auto y = scan_recurrent(p, x);

    std::vector<double> x_rev(x.rbegin(), x.rend());
    auto y_perm = scan_recurrent(p, x_rev);
    double max_diff = 0;
    for (int k = 0; k < len; ++k)
        max_diff = std::max(max_diff, std::fabs(y_perm[k] - y[len - 1 - k]));
    CHECK(max_diff > 1e-6);
}

TEST_CASE("scan directions are bijections") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = rng.uniform_int(1, 9), w = rng.uniform_int(1, 9);
        for (ScanDirection dir : kAllDirections) {
            auto order = scan_order(dir, h, w);
            auto inv = inverse_order(order);
            std::vector<bool> seen(order.size(), false);
            for (int v : order) {
                REQUIRE(v >= 0);
                REQUIRE(v < static_cast<int>(order.size()));
                CHECK(!seen[v]);
                seen[v] = true;
            }
            for (size_t k = 0; k < order.size(); ++k) CHECK(order[inv[k]] == static_cast<int>(k));
        }
    }
}

TEST_CASE("selective_scan matches the recurrence oracle per channel") {
    Rng rng(7);
    const int c = 3, len = 20, n = 4;
    Tensor x = random_tensor({c, len}, rng);
    Tensor dr = random_tensor({1, len}, rng, 0.3);
    Tensor b = random_tensor({n, len}, rng);
    Tensor cc = random_tensor({n, len}, rng);
    Tensor a = Tensor::zeros({c, n});
    for (double& v : a.data()) v = -rng.uniform(0.1, 3.0);
    Tensor bias = random_tensor({c}, rng, 0.2);
    Tensor skip = random_tensor({c}, rng);

    Tensor y = selective_scan(x, dr, b, cc, a, bias, skip);

    for (int ch = 0; ch < c; ++ch) {
        SsmParams p;
        p.a_diag.assign(a.data().begin() + static_cast<size_t>(ch) * n,
                        a.data().begin() + static_cast<size_t>(ch + 1) * n);
        p.skip = skip.data()[ch];
        p.b.resize(len);
        p.c.resize(len);
        p.delta.resize(len);
        for (int k = 0; k < len; ++k) {
            p.b[k].resize(n);
            p.c[k].resize(n);
            for (int i = 0; i < n; ++i) {
                p.b[k][i] = b.data()[static_cast<size_t>(i) * len + k];
                p.c[k][i] = cc.data()[static_cast<size_t>(i) * len + k];
            }
            const double s = dr.data()[k] + bias.data()[ch];
            p.delta[k] = s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
        }
        std::vector<double> xch(x.data().begin() + static_cast<size_t>(ch) * len,
                                x.data().begin() + static_cast<size_t>(ch + 1) * len);
        auto oracle = scan_recurrent(p, xch);
        for (int k = 0; k < len; ++k)
            CHECK(std::fabs(y.data()[static_cast<size_t>(ch) * len + k] - oracle[k]) < 1e-9);
    }
}

TEST_CASE("selective_scan gradients match finite differences") {
    Rng rng(8);
    const int c = 2, len = 6, n = 3;
    Tensor x = random_tensor({c, len}, rng);
    Tensor dr = random_tensor({1, len}, rng, 0.3);
    Tensor b = random_tensor({n, len}, rng);
    Tensor cc = random_tensor({n, len}, rng);
    Tensor a = Tensor::zeros({c, n});
    for (double& v : a.data()) v = -rng.uniform(0.1, 2.0);
    Tensor bias = random_tensor({c}, rng, 0.2);
    Tensor skip = random_tensor({c}, rng);

    const double err = testing::gradcheck(
        [&] {
            Tensor y = selective_scan(x, dr, b, cc, a, bias, skip);
            return sum_all(mul(y, y));
        },
        {x, dr, b, cc, a, bias, skip});
    CHECK(err < 1e-6);
}

TEST_CASE("ss2d single pixel sums four single-step scans") {
    Rng rng(9);
    Ss2dLayer layer(3, 4, rng);
    Tensor x = random_tensor({3, 1, 1}, rng);
    NoGradGuard ng;
    Tensor y = layer.forward(x);
    Tensor acc;
    for (ScanDirection d : kAllDirections) {
        Tensor yd = layer.forward_direction(x, d);
        acc = acc.defined() ? add(acc, yd) : yd;
    }
    for (int i = 0; i < y.numel(); ++i)
        CHECK(y.data()[i] == doctest::Approx(acc.data()[i]).epsilon(1e-12));
}

TEST_CASE("row-forward on x equals row-backward on rot180(x), mapped back") {
    Rng rng(10);
    Ss2dLayer layer(2, 4, rng);
    // Shared parameters across the two directions under test.
    layer.directions()[1] = layer.directions()[0];
    Tensor x = random_tensor({2, 4, 5}, rng);
    NoGradGuard ng;
    Tensor fwd = layer.forward_direction(x, ScanDirection::RowForward);
    Tensor bwd = rot180(layer.forward_direction(rot180(x), ScanDirection::RowBackward));
    for (int i = 0; i < fwd.numel(); ++i)
        CHECK(fwd.data()[i] == doctest::Approx(bwd.data()[i]).epsilon(1e-12));
}

TEST_CASE("column scan equals row scan on the transpose") {
    Rng rng(11);
    Ss2dLayer layer(2, 3, rng);
    layer.directions()[2] = layer.directions()[0];
    const int h = 4, w = 3;
    Tensor x = random_tensor({2, h, w}, rng);
    Tensor xt = Tensor::zeros({2, w, h});
    for (int ch = 0; ch < 2; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                xt.data()[(static_cast<size_t>(ch) * w + xx) * h + y] =
                    x.data()[(static_cast<size_t>(ch) * h + y) * w + xx];
    NoGradGuard ng;
    Tensor col = layer.forward_direction(x, ScanDirection::ColForward);
    Tensor row_t = layer.forward_direction(xt, ScanDirection::RowForward);
    for (int ch = 0; ch < 2; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                CHECK(col.data()[(static_cast<size_t>(ch) * h + y) * w + xx] ==
                      doctest::Approx(row_t.data()[(static_cast<size_t>(ch) * w + xx) * h + y])
                          .epsilon(1e-12));
}

TEST_CASE("ss2d gradient through the full layer") {
    Rng rng(12);
    Ss2dLayer layer(2, 3, rng);
    Tensor x = random_tensor({2, 4, 4}, rng);
    std::vector<Parameter> params;
    layer.collect_parameters("ss2d", params);
    std::vector<Tensor> leaves = {x};
    for (auto& p : params) leaves.push_back(p.tensor);
    const double err = testing::gradcheck(
        [&] {
            Tensor y = layer.forward(x);
            return sum_all(mul(y, y));
        },
        leaves);
    CHECK(err < 1e-4);
}
