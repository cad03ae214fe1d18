#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mdn/fft.hpp"

namespace mdn {

/// Binary row mask over the centered k-space grid; constant along each row
/// (the frequency-encode axis). lines[y] == 1 means row y was acquired.
struct SamplingMask {
    int h = 0, w = 0;
    std::vector<uint8_t> lines;
    double acceleration = 1.0;
    double center_fraction = 0.0;
    uint64_t seed = 0;

    int kept_rows() const;
    double kept_fraction() const;
};

/// Variable-density row mask: the central band is always kept, outer rows are
/// kept with probability solved so the expected kept fraction is 1/R. The
/// realized fraction is guaranteed within 1/R +- 0.05 (resampled from a
/// seed-derived substream until it lands there). Deterministic per
/// (h, w, accel, center_fraction, seed).
SamplingMask make_mask(int h, int w, double acceleration, double center_fraction, uint64_t seed);

/// Zero out unsampled entries; sampled entries are bit-preserved.
KSpaceGrid apply_mask(const KSpaceGrid& k, const SamplingMask& m);

/// Inverse transform of the undersampled grid (the "ZF" baseline).
ComplexImage zero_fill(const KSpaceGrid& k_us);

/// K-space complementation: K_mix = K_tar_us + (1-M) . K_ref_fs, plus its
/// image. Requires (1-M) . k_tar_us == 0 (a grid that was actually masked).
std::pair<KSpaceGrid, ComplexImage> kcm(const KSpaceGrid& k_tar_us, const KSpaceGrid& k_ref_fs,
                                        const SamplingMask& m);

/// Hard data consistency: measured rows are replaced by the measurements,
/// unmeasured rows keep the estimate's spectrum.
ComplexImage dc_layer(const ComplexImage& x_hat, const KSpaceGrid& k_tar_us,
                      const SamplingMask& m);

/// I.i.d. complex Gaussian noise, sigma per real component; sigma == 0
/// returns the input unchanged.
KSpaceGrid add_noise(const KSpaceGrid& k, double sigma, uint64_t seed);

/// Mask file: "h w R center_fraction seed" line followed by h '0'/'1' chars.
void save_mask(const std::string& path, const SamplingMask& m);
SamplingMask load_mask(const std::string& path);

}  // namespace mdn
