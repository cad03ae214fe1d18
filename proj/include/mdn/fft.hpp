#pragma once

#include <string>
#include <vector>

#include "mdn/common.hpp"

namespace mdn {

/// Image-domain slice, split real/imaginary planes (row-major doubles).
struct ComplexImage {
    int h = 0, w = 0;
    std::vector<double> re, im;

    ComplexImage() = default;
    ComplexImage(int h_, int w_)
        : h(h_), w(w_), re(static_cast<size_t>(h_) * w_, 0.0), im(static_cast<size_t>(h_) * w_, 0.0) {}

    size_t numel() const { return re.size(); }
    std::vector<double> magnitude() const;
};

/// Frequency-domain grid, same layout; `centered` means the DC component sits
/// at (h/2, w/2).
struct KSpaceGrid {
    int h = 0, w = 0;
    std::vector<double> re, im;
    bool centered = true;

    KSpaceGrid() = default;
    KSpaceGrid(int h_, int w_)
        : h(h_), w(w_), re(static_cast<size_t>(h_) * w_, 0.0), im(static_cast<size_t>(h_) * w_, 0.0) {}

    size_t numel() const { return re.size(); }
};

/// Unitary 2D transforms: ||fft2(x)|| == ||x||, and ifft2(fft2(x)) == x.
/// Grids are stored centered (DC at h/2, w/2).
KSpaceGrid fft2(const ComplexImage& img);
ComplexImage ifft2(const KSpaceGrid& k);

/// In-place unitary 1D transform of one complex line; any n >= 1
/// (radix-2 when n is a power of two, Bluestein otherwise).
void fft_1d(std::vector<double>& re, std::vector<double>& im, bool inverse);

double l2_norm(const std::vector<double>& re, const std::vector<double>& im);

/// "CPLX" binary grid file: magic, h, w (u64 LE), interleaved re/im doubles.
void save_cplx(const std::string& path, const ComplexImage& img);
ComplexImage load_cplx(const std::string& path);

}  // namespace mdn
