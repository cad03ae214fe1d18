#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mdn/fft.hpp"

namespace mdn {

struct Ellipse {
    double cy, cx;    // center, pixel units
    double ry, rx;    // semi-axes
    double theta;     // orientation, radians
    bool contains(double y, double x) const;
};

enum class Contrast { Reference, Target };

/// Shared-anatomy ellipse phantom rendered under two intensity lookups.
/// A leak structure, when present, appears only in the reference rendering.
struct Phantom {
    int h = 0, w = 0;
    std::vector<int> labels;                  // label map, 0 = background
    std::vector<double> lut_reference, lut_target;  // label -> intensity in [0,1]
    std::optional<Ellipse> leak;
    double leak_intensity = 0.0;
    uint64_t seed = 0;

    /// 1 inside the reference-only structure, 0 elsewhere (empty mask when
    /// there is none).
    std::vector<uint8_t> leak_footprint() const;
};

Phantom generate_phantom(int h, int w, int n_ellipses, uint64_t seed, bool leak_structure);

/// Real plane from the contrast lookup, zero imaginary plane; with_phase adds
/// a smooth phase field that leaves the magnitude unchanged.
ComplexImage render(const Phantom& ph, Contrast contrast, bool with_phase = false);

struct ManifestEntry {
    std::string split;  // "train" | "valid" | "test"
    std::string target_path, reference_path;
};

struct DatasetManifest {
    int count = 0;
    uint64_t seed = 0;
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> split(const std::string& name) const;
};

/// Writes paired CPLX files plus a manifest ("split\ttarget\treference" lines)
/// under out_dir. Split is 7:1:2 in sample order; deterministic per seed.
DatasetManifest build_dataset(int n, int h, int w, uint64_t seed, const std::string& out_dir,
                              bool leak_structure = false, bool with_phase = false,
                              int n_ellipses = 8);

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& manifest);

/// Per-sample generation seed used by build_dataset (exposed so in-memory
/// experiments can reproduce file datasets exactly).
uint64_t sample_seed(uint64_t dataset_seed, int index);

}  // namespace mdn
