#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <doctest.h>

#include "mdn/kspace.hpp"
#include "mdn/rng.hpp"

using namespace mdn;

namespace {

// Blocky deterministic test image with both low and high frequency content.
ComplexImage block_image(int h, int w, uint64_t seed) {
    ComplexImage img(h, w);
    Rng rng(seed);
    for (int b = 0; b < 6; ++b) {
        const int y0 = rng.uniform_int(0, h - 2), x0 = rng.uniform_int(0, w - 2);
        const int y1 = rng.uniform_int(y0 + 1, h - 1), x1 = rng.uniform_int(x0 + 1, w - 1);
        const double v = rng.uniform(0.2, 1.0);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) img.re[static_cast<size_t>(y) * w + x] = v;
    }
    return img;
}

double mse(const ComplexImage& a, const ComplexImage& b) {
    double acc = 0;
    for (size_t i = 0; i < a.numel(); ++i) {
        const double dr = a.re[i] - b.re[i], di = a.im[i] - b.im[i];
        acc += dr * dr + di * di;
    }
    return acc / static_cast<double>(a.numel());
}

double max_abs_diff(const ComplexImage& a, const ComplexImage& b) {
    double m = 0;
    for (size_t i = 0; i < a.numel(); ++i)
        m = std::max({m, std::fabs(a.re[i] - b.re[i]), std::fabs(a.im[i] - b.im[i])});
    return m;
}

SamplingMask full_mask(int h, int w) {
    SamplingMask m;
    m.h = h;
    m.w = w;
    m.acceleration = 1.0;
    m.center_fraction = 1.0;
    m.lines.assign(h, 1);
    return m;
}

SamplingMask empty_mask(int h, int w) {
    SamplingMask m = full_mask(h, w);
    m.lines.assign(h, 0);
    return m;
}

}  // namespace

TEST_CASE("mask keeps the expected central band") {
    SamplingMask m = make_mask(64, 64, 4, 0.08, 123);
    for (int y = 30; y <= 34; ++y) CHECK(m.lines[y] == 1);
    int center_kept = 0;
    for (int y = 30; y <= 34; ++y) center_kept += m.lines[y];
    CHECK(center_kept == 5);
}

TEST_CASE("acceleration 1 keeps everything") {
    SamplingMask m = make_mask(32, 32, 1, 0.1, 7);
    CHECK(m.kept_rows() == 32);
}

TEST_CASE("mask determinism and seed sensitivity") {
    SamplingMask a = make_mask(64, 48, 4, 0.08, 99);
    SamplingMask b = make_mask(64, 48, 4, 0.08, 99);
    CHECK(a.lines == b.lines);
    SamplingMask c = make_mask(64, 48, 4, 0.08, 100);
    CHECK(a.lines != c.lines);
}

TEST_CASE("kept fraction lands within the tolerance band for all seeds") {
    for (double accel : {2.0, 4.0, 8.0}) {
        for (uint64_t seed = 0; seed < 50; ++seed) {
            SamplingMask m = make_mask(64, 64, accel, 0.06, seed);
            CHECK(std::fabs(m.kept_fraction() - 1.0 / accel) <= 0.05);
        }
    }
}

TEST_CASE("mask configuration errors") {
    CHECK_THROWS_AS(make_mask(64, 64, 4, 0.5, 1), ConfigError);     // center exceeds budget
    CHECK_THROWS_AS(make_mask(64, 64, 4, 0.001, 1), ConfigError);   // keeps no full row
    CHECK_THROWS_AS(make_mask(64, 64, 0.5, 0.08, 1), ConfigError);  // acceleration < 1
}

TEST_CASE("apply_mask basics") {
    ComplexImage img = block_image(16, 16, 5);
    KSpaceGrid k = fft2(img);

    KSpaceGrid same = apply_mask(k, full_mask(16, 16));
    CHECK(same.re == k.re);
    CHECK(same.im == k.im);

    KSpaceGrid zeroed = apply_mask(k, empty_mask(16, 16));
    for (double v : zeroed.re) CHECK(v == 0.0);
    for (double v : zeroed.im) CHECK(v == 0.0);

    SamplingMask m = make_mask(16, 16, 2, 0.2, 3);
    KSpaceGrid once = apply_mask(k, m);
    KSpaceGrid twice = apply_mask(once, m);
    CHECK(once.re == twice.re);
    CHECK(once.im == twice.im);
}

TEST_CASE("zero_fill of a fully sampled grid recovers the image") {
    ComplexImage img = block_image(32, 32, 9);
    ComplexImage zf = zero_fill(fft2(img));
    CHECK(max_abs_diff(img, zf) < 1e-10);
}

TEST_CASE("undersampling degrades the zero-filled image, more at higher R") {
    ComplexImage img = block_image(64, 64, 21);
    KSpaceGrid k = fft2(img);

    SamplingMask m4 = make_mask(64, 64, 4, 0.08, 1);
    CHECK(mse(zero_fill(apply_mask(k, m4)), img) > 1e-8);

    double total4 = 0, total8 = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        SamplingMask a4 = make_mask(64, 64, 4, 0.08, seed);
        SamplingMask a8 = make_mask(64, 64, 8, 0.08, seed);
        total4 += mse(zero_fill(apply_mask(k, a4)), img);
        total8 += mse(zero_fill(apply_mask(k, a8)), img);
    }
    CHECK(total8 >= total4);  // lower PSNR at x8 on average
}

TEST_CASE("kcm partition is exact") {
    ComplexImage tar = block_image(32, 32, 40);
    ComplexImage ref = block_image(32, 32, 41);
    SamplingMask m = make_mask(32, 32, 4, 0.1, 2);
    KSpaceGrid k_tar = fft2(tar), k_ref = fft2(ref);
    KSpaceGrid k_us = apply_mask(k_tar, m);

    auto [mix, i_mix] = kcm(k_us, k_ref, m);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            const size_t i = static_cast<size_t>(y) * 32 + x;
            if (m.lines[y]) {
                CHECK(mix.re[i] == k_us.re[i]);
                CHECK(mix.im[i] == k_us.im[i]);
            } else {
                CHECK(mix.re[i] == k_ref.re[i]);
                CHECK(mix.im[i] == k_ref.im[i]);
            }
        }
    CHECK(i_mix.h == 32);
}

TEST_CASE("kcm degenerate masks") {
    ComplexImage tar = block_image(16, 16, 50);
    ComplexImage ref = block_image(16, 16, 51);
    KSpaceGrid k_tar = fft2(tar), k_ref = fft2(ref);

    auto [mix_full, img_full] = kcm(k_tar, k_ref, full_mask(16, 16));
    CHECK(mix_full.re == k_tar.re);

    KSpaceGrid zero_grid(16, 16);
    auto [mix_none, img_none] = kcm(zero_grid, k_ref, empty_mask(16, 16));
    CHECK(mix_none.re == k_ref.re);
    CHECK(mix_none.im == k_ref.im);
}

TEST_CASE("kcm keyhole limit recovers ground truth") {
    ComplexImage tar = block_image(32, 32, 60);
    SamplingMask m = make_mask(32, 32, 4, 0.1, 4);
    KSpaceGrid k_tar = fft2(tar);
    auto [mix, i_mix] = kcm(apply_mask(k_tar, m), k_tar, m);
    CHECK(max_abs_diff(i_mix, tar) < 1e-10);
}

TEST_CASE("kcm rejects grids with energy on unsampled rows") {
    ComplexImage tar = block_image(16, 16, 70);
    SamplingMask m = make_mask(16, 16, 2, 0.2, 5);
    KSpaceGrid k_tar = fft2(tar);  // not masked
    CHECK_THROWS_AS(kcm(k_tar, k_tar, m), ContractError);
}

TEST_CASE("dc_layer fixed point, idempotence and zero input") {
    ComplexImage tar = block_image(32, 32, 80);
    SamplingMask m = make_mask(32, 32, 4, 0.1, 6);
    KSpaceGrid k_us = apply_mask(fft2(tar), m);

    // Consistent input: the ground truth itself.
    ComplexImage out = dc_layer(tar, k_us, m);
    CHECK(max_abs_diff(out, tar) < 1e-10);

    ComplexImage arbitrary = block_image(32, 32, 81);
    ComplexImage once = dc_layer(arbitrary, k_us, m);
    ComplexImage twice = dc_layer(once, k_us, m);
    CHECK(max_abs_diff(once, twice) < 1e-10);

    ComplexImage zero_img(32, 32);
    ComplexImage from_zero = dc_layer(zero_img, k_us, m);
    CHECK(max_abs_diff(from_zero, zero_fill(k_us)) < 1e-10);

    // Degenerate masks.
    ComplexImage all_kept = dc_layer(arbitrary, fft2(tar), full_mask(32, 32));
    CHECK(max_abs_diff(all_kept, tar) < 1e-10);
    ComplexImage none_kept = dc_layer(arbitrary, KSpaceGrid(32, 32), empty_mask(32, 32));
    CHECK(max_abs_diff(none_kept, arbitrary) < 1e-10);
}

TEST_CASE("add_noise statistics and determinism") {
    ComplexImage img = block_image(8, 8, 90);
    KSpaceGrid k = fft2(img);

    KSpaceGrid clean = add_noise(k, 0.0, 1);
    CHECK(clean.re == k.re);
    CHECK(clean.im == k.im);

    KSpaceGrid big(256, 256);
    const double sigma = 0.3;
    KSpaceGrid noisy = add_noise(big, sigma, 7);
    double var_re = 0, var_im = 0;
    for (size_t i = 0; i < noisy.numel(); ++i) {
        var_re += noisy.re[i] * noisy.re[i];
        var_im += noisy.im[i] * noisy.im[i];
    }
    var_re /= static_cast<double>(noisy.numel());
    var_im /= static_cast<double>(noisy.numel());
    CHECK(std::fabs(var_re - sigma * sigma) < 0.05 * sigma * sigma);
    CHECK(std::fabs(var_im - sigma * sigma) < 0.05 * sigma * sigma);

    KSpaceGrid n1 = add_noise(big, sigma, 1);
    KSpaceGrid n2 = add_noise(big, sigma, 2);
    CHECK(n1.re != n2.re);
    KSpaceGrid n1_again = add_noise(big, sigma, 1);
    CHECK(n1.re == n1_again.re);
}

TEST_CASE("mask file round trip") {
    SamplingMask m = make_mask(48, 40, 4, 0.1, 12);
    const std::string path = "mask_roundtrip_test.txt";
    save_mask(path, m);
    SamplingMask back = load_mask(path);
    CHECK(back.h == m.h);
    CHECK(back.w == m.w);
    CHECK(back.lines == m.lines);
    CHECK(back.seed == m.seed);
    std::remove(path.c_str());
}
