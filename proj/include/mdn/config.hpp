#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mdn/common.hpp"

namespace mdn {

enum class Variant {
    MixMinusRef,    // base model: subtract reference features from the mix
    TarusMinusRef,  // zero-filled target replaces the complemented input
    MixMinusTarus,  // zero-filled target replaces the reference branch
    MixMinusZero,   // reference branch zeroed (self-conversion)
    ParallelT,      // T blocks on identical inputs, outputs averaged
    SingleBlock,    // one block, no refinement
};

enum class DcMode { Final, PerBlock };
enum class MergeMode { Sum, Mean };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);  // ConfigError on unknown tag
std::string dc_mode_name(DcMode m);
DcMode parse_dc_mode(const std::string& name);
std::string merge_name(MergeMode m);
MergeMode parse_merge(const std::string& name);

/// Architecture and training hyperparameters (flat key=value surface).
struct ModelConfig {
    int channels = 32;   // key "c"
    int blocks = 6;      // key "T"
    int state_dim = 8;
    int depth = 2;
    int kernel = 3;
    double lr = 1e-4;
    int batch = 2;
    int epochs = 6;
    uint64_t seed = 0;
    Variant variant = Variant::MixMinusRef;
    DcMode dc_mode = DcMode::Final;
    MergeMode merge = MergeMode::Sum;
    bool fuse_add = false;

    void validate() const;
};

/// Dataset / simulation / experiment settings shared by the CLI and harness.
struct RunConfig {
    ModelConfig model;

    int n_samples = 200;
    int size = 64;
    int n_ellipses = 8;
    bool leak = false;
    bool phase = false;

    double accel = 4.0;
    double center_fraction = 0.08;
    uint64_t mask_seed = 0;
    double noise_sigma = 0.0;

    int seeds = 5;  // seed count for multi-seed experiments

    std::string command, data_dir, out_dir, checkpoint;

    void apply(const std::map<std::string, std::string>& kv);  // rejects unknown keys
    std::map<std::string, std::string> to_kv() const;
};

std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> load_kv_file(const std::string& path);
void save_kv_file(const std::string& path, const std::map<std::string, std::string>& kv);

}  // namespace mdn
