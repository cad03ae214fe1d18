#include "mdn/kspace.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mdn/rng.hpp"

namespace mdn {

int SamplingMask::kept_rows() const {
    int n = 0;
    for (uint8_t v : lines) n += v;
    return n;
}

double SamplingMask::kept_fraction() const {
    return lines.empty() ? 0.0 : static_cast<double>(kept_rows()) / static_cast<double>(h);
}

SamplingMask make_mask(int h, int w, double acceleration, double center_fraction, uint64_t seed) {
    if (h < 1 || w < 1) throw ConfigError("mask extents must be positive");
    if (acceleration < 1.0)
        throw ConfigError("acceleration must be >= 1, got " + std::to_string(acceleration));
    if (center_fraction * h < 1.0)
        throw ConfigError("center_fraction " + std::to_string(center_fraction) +
                          " keeps no full row at h=" + std::to_string(h));
    const int nc = std::min(h, static_cast<int>(std::floor(center_fraction * h + 0.5)));
    const double target = static_cast<double>(h) / acceleration;
    if (static_cast<double>(nc) > target + 1e-9)
        throw ConfigError("center band (" + std::to_string(nc) +
                          " rows) already exceeds the sampling budget at R=" +
                          std::to_string(acceleration));

    SamplingMask m;
    m.h = h;
    m.w = w;
    m.acceleration = acceleration;
    m.center_fraction = center_fraction;
    m.seed = seed;

    const int start = h / 2 - nc / 2;  // centered on the DC row
    const double p = (h == nc) ? 1.0 : (target - nc) / static_cast<double>(h - nc);
    const double want = 1.0 / acceleration;

    for (uint64_t attempt = 0; attempt < 1000; ++attempt) {
        Rng rng(mix_seed(seed, attempt));
        m.lines.assign(h, 0);
        for (int y = start; y < start + nc; ++y) m.lines[y] = 1;
        for (int y = 0; y < h; ++y) {
            if (m.lines[y]) continue;
            if (rng.uniform01() < p) m.lines[y] = 1;
        }
        if (std::fabs(m.kept_fraction() - want) <= 0.05) return m;
    }
    throw ConfigError("mask sampling failed to meet the kept-fraction tolerance");
}

namespace {

void require_grid_match(const KSpaceGrid& k, const SamplingMask& m, const char* what) {
    if (k.h != m.h || k.w != m.w)
        throw ShapeError(std::string(what) + ": grid " + std::to_string(k.h) + "x" +
                         std::to_string(k.w) + " vs mask " + std::to_string(m.h) + "x" +
                         std::to_string(m.w));
}

}  // namespace

KSpaceGrid apply_mask(const KSpaceGrid& k, const SamplingMask& m) {
    require_grid_match(k, m, "apply_mask");
    KSpaceGrid out = k;
    for (int y = 0; y < k.h; ++y) {
        if (m.lines[y]) continue;
        const size_t base = static_cast<size_t>(y) * k.w;
        for (int x = 0; x < k.w; ++x) {
            out.re[base + x] = 0.0;
            out.im[base + x] = 0.0;
        }
    }
    return out;
}

ComplexImage zero_fill(const KSpaceGrid& k_us) { return ifft2(k_us); }

std::pair<KSpaceGrid, ComplexImage> kcm(const KSpaceGrid& k_tar_us, const KSpaceGrid& k_ref_fs,
                                        const SamplingMask& m) {
    require_grid_match(k_tar_us, m, "kcm target");
    require_grid_match(k_ref_fs, m, "kcm reference");
    for (int y = 0; y < m.h; ++y) {
        if (m.lines[y]) continue;
        const size_t base = static_cast<size_t>(y) * m.w;
        for (int x = 0; x < m.w; ++x)
            if (k_tar_us.re[base + x] != 0.0 || k_tar_us.im[base + x] != 0.0)
                throw ContractError("kcm: target grid has energy on unsampled row " +
                                    std::to_string(y) + "; pass an undersampled grid");
    }

    KSpaceGrid mix = k_tar_us;
    for (int y = 0; y < m.h; ++y) {
        if (m.lines[y]) continue;
        const size_t base = static_cast<size_t>(y) * m.w;
        for (int x = 0; x < m.w; ++x) {
            mix.re[base + x] = k_ref_fs.re[base + x];
            mix.im[base + x] = k_ref_fs.im[base + x];
        }
    }
    return {mix, ifft2(mix)};
}

ComplexImage dc_layer(const ComplexImage& x_hat, const KSpaceGrid& k_tar_us,
                      const SamplingMask& m) {
    if (x_hat.h != m.h || x_hat.w != m.w)
        throw ShapeError("dc_layer: image " + std::to_string(x_hat.h) + "x" +
                         std::to_string(x_hat.w) + " vs mask " + std::to_string(m.h) + "x" +
                         std::to_string(m.w));
    require_grid_match(k_tar_us, m, "dc_layer");
    KSpaceGrid k = fft2(x_hat);
    for (int y = 0; y < m.h; ++y) {
        const size_t base = static_cast<size_t>(y) * m.w;
        if (m.lines[y]) {
            for (int x = 0; x < m.w; ++x) {
                k.re[base + x] = k_tar_us.re[base + x];
                k.im[base + x] = k_tar_us.im[base + x];
            }
        }
    }
    return ifft2(k);
}

KSpaceGrid add_noise(const KSpaceGrid& k, double sigma, uint64_t seed) {
    if (sigma < 0) throw ConfigError("noise sigma must be >= 0");
    if (sigma == 0.0) return k;
    KSpaceGrid out = k;
    Rng rng(mix_seed(seed, 0x6e6f6973));
    for (size_t i = 0; i < out.numel(); ++i) {
        out.re[i] += sigma * rng.normal();
        out.im[i] += sigma * rng.normal();
    }
    return out;
}

void save_mask(const std::string& path, const SamplingMask& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << m.h << " " << m.w << " " << m.acceleration << " " << m.center_fraction << " " << m.seed
        << "\n";
    for (int y = 0; y < m.h; ++y) out << (m.lines[y] ? '1' : '0');
    out << "\n";
    if (!out) throw IoError("write failed: " + path);
}

SamplingMask load_mask(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    SamplingMask m;
    std::string header;
    if (!std::getline(in, header)) throw IoError("mask file empty: " + path);
    std::istringstream hs(header);
    if (!(hs >> m.h >> m.w >> m.acceleration >> m.center_fraction >> m.seed))
        throw IoError("bad mask header in " + path);
    std::string bits;
    if (!std::getline(in, bits) || static_cast<int>(bits.size()) < m.h)
        throw IoError("mask file truncated: " + path);
    m.lines.assign(m.h, 0);
    for (int y = 0; y < m.h; ++y) {
        if (bits[y] != '0' && bits[y] != '1') throw IoError("bad mask bit in " + path);
        m.lines[y] = bits[y] == '1';
    }
    return m;
}

}  // namespace mdn
