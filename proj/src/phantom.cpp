#include "mdn/phantom.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mdn/rng.hpp"

namespace mdn {

bool Ellipse::contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double u = (dx * ct + dy * st) / rx;
    const double v = (-dx * st + dy * ct) / ry;
    return u * u + v * v <= 1.0;
}

std::vector<uint8_t> Phantom::leak_footprint() const {
    std::vector<uint8_t> mask(static_cast<size_t>(h) * w, 0);
    if (!leak) return mask;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (leak->contains(y + 0.5, x + 0.5)) mask[static_cast<size_t>(y) * w + x] = 1;
    return mask;
}

Phantom generate_phantom(int h, int w, int n_ellipses, uint64_t seed, bool leak_structure) {
    if (h < 16 || w < 16) throw ConfigError("phantom extents must be >= 16");
    if (n_ellipses < 1) throw ConfigError("phantom needs at least one ellipse");

    Phantom ph;
    ph.h = h;
    ph.w = w;
    ph.seed = seed;
    ph.labels.assign(static_cast<size_t>(h) * w, 0);

    Rng rng(mix_seed(seed, 0x70686172));
    constexpr double kPi = 3.14159265358979323846;

    std::vector<Ellipse> shapes;
    shapes.reserve(n_ellipses);
    for (int i = 0; i < n_ellipses; ++i) {
        Ellipse e;
        e.cy = rng.uniform(0.18, 0.82) * h;
        e.cx = rng.uniform(0.18, 0.82) * w;
        e.ry = rng.uniform(0.06, 0.3) * h;
        e.rx = rng.uniform(0.06, 0.3) * w;
        e.theta = rng.uniform(0.0, kPi);
        shapes.push_back(e);
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int i = n_ellipses - 1; i >= 0; --i)
                if (shapes[i].contains(y + 0.5, x + 0.5)) {
                    ph.labels[static_cast<size_t>(y) * w + x] = i + 1;
                    break;
                }

    ph.lut_reference.assign(n_ellipses + 1, 0.0);
    ph.lut_target.assign(n_ellipses + 1, 0.0);
    for (int i = 1; i <= n_ellipses; ++i) ph.lut_reference[i] = rng.uniform(0.1, 1.0);
    for (int i = 1; i <= n_ellipses; ++i) ph.lut_target[i] = rng.uniform(0.1, 1.0);

    if (leak_structure) {
        Ellipse e;
        e.cy = rng.uniform(0.25, 0.75) * h;
        e.cx = rng.uniform(0.25, 0.75) * w;
        e.ry = rng.uniform(0.05, 0.14) * h;
        e.rx = rng.uniform(0.05, 0.14) * w;
        e.theta = rng.uniform(0.0, kPi);
        ph.leak = e;
        ph.leak_intensity = rng.uniform(0.7, 1.0);
    }
    return ph;
}

ComplexImage render(const Phantom& ph, Contrast contrast, bool with_phase) {
    ComplexImage img(ph.h, ph.w);
    const auto& lut = contrast == Contrast::Reference ? ph.lut_reference : ph.lut_target;
    for (size_t i = 0; i < img.numel(); ++i) img.re[i] = lut[ph.labels[i]];

    if (ph.leak && contrast == Contrast::Reference) {
        for (int y = 0; y < ph.h; ++y)
            for (int x = 0; x < ph.w; ++x)
                if (ph.leak->contains(y + 0.5, x + 0.5))
                    img.re[static_cast<size_t>(y) * ph.w + x] = ph.leak_intensity;
    }

    if (with_phase) {
        // Smooth bilinear phase field, seed-derived; |value| is untouched.
        Rng rng(mix_seed(ph.seed, 0x70687365));
        const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0),
                     c = rng.uniform(-1.0, 1.0);
        constexpr double kQuarterPi = 0.78539816339744831;
        for (int y = 0; y < ph.h; ++y)
            for (int x = 0; x < ph.w; ++x) {
                const double fy = static_cast<double>(y) / ph.h - 0.5;
                const double fx = static_cast<double>(x) / ph.w - 0.5;
                const double phi = kQuarterPi * (a * fy + b * fx + c * fy * fx);
                const size_t i = static_cast<size_t>(y) * ph.w + x;
                const double mag = img.re[i];
                img.re[i] = mag * std::cos(phi);
                img.im[i] = mag * std::sin(phi);
            }
    }
    return img;
}

std::vector<ManifestEntry> DatasetManifest::split(const std::string& name) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == name) out.push_back(e);
    return out;
}

uint64_t sample_seed(uint64_t dataset_seed, int index) {
    return mix_seed(dataset_seed, 0x64617461u + static_cast<uint64_t>(index));
}

DatasetManifest build_dataset(int n, int h, int w, uint64_t seed, const std::string& out_dir,
                              bool leak_structure, bool with_phase, int n_ellipses) {
    if (n < 1) throw ConfigError("dataset needs at least one sample");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create dataset directory " + out_dir + ": " + ec.message());

    const int n_train = (7 * n) / 10;
    const int n_valid = n / 10;

    DatasetManifest manifest;
    manifest.count = n;
    manifest.seed = seed;
    for (int i = 0; i < n; ++i) {
        Phantom ph = generate_phantom(h, w, n_ellipses, sample_seed(seed, i), leak_structure);
        const std::string tag = std::to_string(i);
        ManifestEntry entry;
        entry.split = i < n_train ? "train" : (i < n_train + n_valid ? "valid" : "test");
        entry.target_path = out_dir + "/sample" + tag + "_target.cplx";
        entry.reference_path = out_dir + "/sample" + tag + "_reference.cplx";
        save_cplx(entry.target_path, render(ph, Contrast::Target, with_phase));
        save_cplx(entry.reference_path, render(ph, Contrast::Reference, with_phase));
        manifest.entries.push_back(std::move(entry));
    }
    save_manifest(out_dir + "/manifest.tsv", manifest);
    return manifest;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& e : manifest.entries)
        out << e.split << "\t" << e.target_path << "\t" << e.reference_path << "\n";
    if (!out) throw IoError("write failed: " + path);
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    DatasetManifest manifest;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestEntry e;
        if (!std::getline(ls, e.split, '\t') || !std::getline(ls, e.target_path, '\t') ||
            !std::getline(ls, e.reference_path, '\t'))
            throw IoError("bad manifest line: " + line);
        manifest.entries.push_back(std::move(e));
    }
    manifest.count = static_cast<int>(manifest.entries.size());
    return manifest;
}

}  // namespace mdn
