#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <doctest.h>

#include "gradcheck.hpp"
#include "mdn/ops.hpp"
#include "mdn/optim.hpp"
#include "mdn/rng.hpp"
#include "mdn/tensor.hpp"

using namespace mdn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = scale * rng.normal();
    return t;
}

}  // namespace

TEST_CASE("matmul identity and hand-expanded product") {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor y = matmul(eye, x);
    for (int i = 0; i < 6; ++i) CHECK(y.data()[i] == x.data()[i]);

    Tensor a = Tensor::from_data({1, 2}, {1, 2});
    Tensor b = Tensor::from_data({2, 1}, {3, 4});
    CHECK(matmul(a, b).value() == doctest::Approx(11.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,2]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(42);
    Tensor a = random_tensor({4, 5}, rng);
    Tensor b = random_tensor({5, 3}, rng);
    const double err = testing::gradcheck(
        [&] { return sum_all(mul(matmul(a, b), matmul(a, b))); }, {a, b});
    CHECK(err < 1e-6);
}

TEST_CASE("depthwise identity kernel") {
    Rng rng(7);
    Tensor x = random_tensor({2, 4, 4}, rng);
    Tensor k = Tensor::zeros({2, 3, 3});
    k.data()[4] = 1.0;       // center of channel 0
    k.data()[9 + 4] = 1.0;   // center of channel 1
    Tensor y = depthwise_conv2d(x, k);
    for (int i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("depthwise overlap counting at borders") {
    Tensor x = Tensor::full({1, 3, 3}, 1.0);
    Tensor k = Tensor::full({1, 3, 3}, 1.0);
    Tensor y = depthwise_conv2d(x, k);
    CHECK(y.data()[4] == doctest::Approx(9.0));  // center
    CHECK(y.data()[0] == doctest::Approx(4.0));  // corner
}

TEST_CASE("depthwise rejects even kernels") {
    CHECK_THROWS_AS(depthwise_conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 2, 2})),
                    ConfigError);
}

TEST_CASE("depthwise gradient vs finite differences") {
    Rng rng(11);
    Tensor x = random_tensor({2, 5, 5}, rng);
    Tensor k = random_tensor({2, 3, 3}, rng);
    const double err =
        testing::gradcheck([&] { return sum_all(mul(depthwise_conv2d(x, k), depthwise_conv2d(x, k))); },
                           {x, k});
    CHECK(err < 1e-6);
}

TEST_CASE("layer_norm constant input collapses to bias") {
    Tensor x = Tensor::full({2, 4}, 3.5);
    Tensor g = Tensor::full({4}, 1.0);
    Tensor b = Tensor::zeros({4});
    Tensor y = layer_norm(x, g, b, 1e-5);
    for (double v : y.data()) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("layer_norm symmetric pair") {
    Tensor x = Tensor::from_data({2}, {1, 3});
    Tensor g = Tensor::full({2}, 1.0);
    Tensor b = Tensor::zeros({2});
    Tensor y = layer_norm(x, g, b, 1e-12);
    CHECK(y.data()[0] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(y.data()[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("layer_norm gradient vs finite differences") {
    Rng rng(5);
    Tensor x = random_tensor({2, 4}, rng);
    Tensor g = random_tensor({4}, rng);
    Tensor b = random_tensor({4}, rng);
    const double err = testing::gradcheck(
        [&] {
            Tensor y = layer_norm(x, g, b, 1e-5);
            return sum_all(mul(y, y));
        },
        {x, g, b});
    CHECK(err < 1e-5);
}

TEST_CASE("activation fixed points") {
    CHECK(sigmoid(Tensor::scalar(0.0)).value() == doctest::Approx(0.5));
    CHECK(silu(Tensor::scalar(0.0)).value() == doctest::Approx(0.0));
}

TEST_CASE("sub of a tensor with itself cancels and routes +g/-g") {
    Rng rng(3);
    Tensor a = random_tensor({3}, rng);
    a.set_requires_grad(true);
    Tensor d = sub(a, a);
    for (double v : d.data()) CHECK(v == 0.0);
    backward(sum_all(d));
    for (double v : a.grad()) CHECK(v == 0.0);  // +1 and -1 per element
}

TEST_CASE("scalar broadcast add/mul and rejected broadcast") {
    Tensor a = Tensor::from_data({3}, {1, 2, 3});
    Tensor s = Tensor::scalar(2.0);
    Tensor y = mul(a, s);
    CHECK(y.data()[2] == doctest::Approx(6.0));
    CHECK_THROWS_AS(add(Tensor::zeros({3}), Tensor::zeros({2})), ShapeError);
}

TEST_CASE("backward of sum gives ones; of sum of squares gives 2x") {
    Rng rng(9);
    Tensor x = random_tensor({5}, rng);
    x.set_requires_grad(true);
    backward(sum_all(x));
    for (double v : x.grad()) CHECK(v == doctest::Approx(1.0));

    x.zero_grad();
    backward(sum_all(mul(x, x)));
    for (int i = 0; i < 5; ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]));
}

TEST_CASE("backward requires scalar loss") {
    Tensor x = Tensor::zeros({2});
    x.set_requires_grad(true);
    CHECK_THROWS_AS(backward(add(x, x)), ContractError);
}

TEST_CASE("repeated backward accumulates") {
    Tensor x = Tensor::from_data({2}, {1, 2});
    x.set_requires_grad(true);
    Tensor loss = sum_all(x);
    backward(loss);
    backward(loss);
    for (double v : x.grad()) CHECK(v == doctest::Approx(2.0));
}

TEST_CASE("backward is deterministic for identical graphs") {
    auto run = [] {
        Rng rng(1234);
        Tensor a = random_tensor({3, 3}, rng);
        Tensor b = random_tensor({3, 3}, rng);
        a.set_requires_grad(true);
        b.set_requires_grad(true);
        backward(sum_all(mul(matmul(a, b), matmul(a, b))));
        auto g = a.grad();
        auto gb = b.grad();
        g.insert(g.end(), gb.begin(), gb.end());
        return g;
    };
    auto g1 = run(), g2 = run();
    REQUIRE(g1.size() == g2.size());
    for (size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("finite-difference property sweep over all differentiable ops") {
    Rng rng(2024);
    int trials_per_op = 20;
    for (int t = 0; t < trials_per_op; ++t) {
        const int m = rng.uniform_int(1, 4), k = rng.uniform_int(1, 4), n = rng.uniform_int(1, 4);
        Tensor a = random_tensor({m, k}, rng);
        Tensor b = random_tensor({k, n}, rng);
        CHECK(testing::gradcheck([&] { return sum_all(mul(matmul(a, b), matmul(a, b))); }, {a, b}) <
              1e-4);

        const int c = rng.uniform_int(1, 3), h = rng.uniform_int(2, 5), w = rng.uniform_int(2, 5);
        Tensor x = random_tensor({c, h, w}, rng);
        Tensor y = random_tensor({c, h, w}, rng);
        CHECK(testing::gradcheck(
                  [&] { return sum_all(mul(add(x, y), sub(x, mul(x, y)))); }, {x, y}) < 1e-4);
        CHECK(testing::gradcheck([&] { return sum_all(sigmoid(x)); }, {x}) < 1e-4);
        CHECK(testing::gradcheck([&] { return sum_all(silu(x)); }, {x}) < 1e-4);
        CHECK(testing::gradcheck([&] { return sum_all(exp_op(mul_scalar(x, 0.3))); }, {x}) < 1e-4);
        CHECK(testing::gradcheck([&] { return sum_all(mul(abs_op(x), abs_op(x))); }, {x}) < 1e-4);
        CHECK(testing::gradcheck([&] { return sum_all(mul(neg(x), x)); }, {x}) < 1e-4);
        CHECK(testing::gradcheck([&] { return sum_all(mul(avg_pool2(x), avg_pool2(x))); }, {x}) <
              1e-4);
        CHECK(testing::gradcheck(
                  [&] {
                      Tensor u = upsample_nearest2(x, 2 * h - 1, 2 * w);
                      return sum_all(mul(u, u));
                  },
                  {x}) < 1e-4);
        CHECK(testing::gradcheck(
                  [&] {
                      Tensor cc = concat_channels(x, y);
                      return sum_all(mul(cc, cc));
                  },
                  {x, y}) < 1e-4);

        Tensor kern = random_tensor({c, 3, 3}, rng);
        CHECK(testing::gradcheck(
                  [&] {
                      Tensor o = depthwise_conv2d(x, kern);
                      return sum_all(mul(o, o));
                  },
                  {x, kern}) < 1e-4);

        const int co = rng.uniform_int(1, 3);
        Tensor wt = random_tensor({co, c, 3, 3}, rng, 0.5);
        Tensor bias = random_tensor({co}, rng);
        CHECK(testing::gradcheck(
                  [&] {
                      Tensor o = conv2d(x, wt, bias);
                      return sum_all(mul(o, o));
                  },
                  {x, wt, bias}) < 1e-4);

        Tensor gn = random_tensor({c}, rng);
        Tensor bn = random_tensor({c}, rng);
        CHECK(testing::gradcheck(
                  [&] {
                      Tensor o = layer_norm(x, gn, bn, 1e-5, 0);
                      return sum_all(mul(o, o));
                  },
                  {x, gn, bn}) < 1e-4);
    }
}

TEST_CASE("adam leaves parameters untouched at zero gradient") {
    Tensor w = Tensor::from_data({3}, {1, 2, 3});
    w.set_requires_grad(true);
    AdamOptimizer opt({{"w", w}}, 1e-3);
    opt.zero_grad();
    for (int t = 0; t < 5; ++t) opt.step();
    CHECK(w.data()[0] == 1.0);
    CHECK(w.data()[2] == 3.0);
}

TEST_CASE("adam first step magnitude is about lr for unit gradient") {
    Tensor w = Tensor::scalar(0.0);
    w.set_requires_grad(true);
    AdamOptimizer opt({{"w", w}}, 0.01);
    w.grad()[0] = 1.0;
    opt.step();
    CHECK(std::fabs(w.data()[0] + 0.01) < 1e-6);  // bias correction makes mhat/sqrt(vhat) = 1
}

TEST_CASE("adam drives a quadratic bowl toward zero") {
    Tensor w = Tensor::scalar(1.0);
    w.set_requires_grad(true);
    AdamOptimizer opt({{"w", w}}, 0.1);
    for (int t = 0; t < 200; ++t) {
        opt.zero_grad();
        backward(mul(w, w));
        opt.step();
    }
    CHECK(std::fabs(w.data()[0]) < 0.05);
}

TEST_CASE("adam rejects non-positive learning rate") {
    Tensor w = Tensor::scalar(0.0);
    CHECK_THROWS_AS(AdamOptimizer({{"w", w}}, 0.0), ConfigError);
}

TEST_CASE("checkpoint round-trips bit-identically") {
    Rng rng(77);
    std::vector<Parameter> params;
    params.push_back({"enc.0.weight", random_tensor({4, 2, 3, 3}, rng)});
    params.push_back({"mmd.3.gate.weight", random_tensor({8, 8}, rng)});
    params.push_back({"head.bias", random_tensor({2}, rng)});

    const std::string path = "ckpt_roundtrip_test.bin";
    save_checkpoint(path, params);

    std::vector<Parameter> restored;
    for (const auto& p : params) restored.push_back({p.name, Tensor::zeros(p.tensor.shape())});
    load_checkpoint(path, restored);
    for (size_t i = 0; i < params.size(); ++i) {
        REQUIRE(restored[i].tensor.numel() == params[i].tensor.numel());
        for (int j = 0; j < params[i].tensor.numel(); ++j)
            CHECK(restored[i].tensor.data()[j] == params[i].tensor.data()[j]);
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint mismatches are contract errors") {
    Tensor w = Tensor::zeros({2, 2});
    const std::string path = "ckpt_mismatch_test.bin";
    save_checkpoint(path, {{"w", w}});
    std::vector<Parameter> wrong_shape = {{"w", Tensor::zeros({3})}};
    CHECK_THROWS_AS(load_checkpoint(path, wrong_shape), ContractError);
    std::vector<Parameter> wrong_name = {{"v", Tensor::zeros({2, 2})}};
    CHECK_THROWS_AS(load_checkpoint(path, wrong_name), ContractError);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_checkpoint(path, wrong_name), IoError);
}
