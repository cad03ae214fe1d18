#pragma once

#include <string>
#include <vector>

#include "mdn/metrics.hpp"
#include "mdn/network.hpp"
#include "mdn/phantom.hpp"

namespace mdn {

/// Thrown when the training loss stops being finite.
class TrainDivergedError : public std::runtime_error {
public:
    explicit TrainDivergedError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Sample {
    ComplexImage target, reference;
};

/// The acquisition applied to one sample: retrospective undersampling of the
/// target plus the fully sampled reference spectrum.
struct SimulatedSample {
    KSpaceGrid k_tar_us, k_ref_fs;
    SamplingMask mask;
    ComplexImage gt;
};

std::vector<Sample> make_phantom_set(int n, int h, int w, uint64_t seed, bool leak,
                                     bool with_phase, int n_ellipses);
std::vector<Sample> load_samples(const DatasetManifest& manifest, const std::string& split);

/// Sample i always draws mask seed mix(mask_seed, i): fixed masks per split.
SimulatedSample simulate_sample(const Sample& s, const RunConfig& cfg, int index);
std::vector<SimulatedSample> simulate_all(const std::vector<Sample>& samples, const RunConfig& cfg,
                                          int index_offset = 0);

struct TrainStats {
    std::vector<double> epoch_loss;
    double initial_loss = 0.0, final_loss = 0.0;
};

/// Adam / L1 training over the simulated set; deterministic per config seed.
TrainStats train_model(MambaMdnModel& model, const std::vector<SimulatedSample>& train_set);

MetricReport evaluate_model(const MambaMdnModel& model, const std::vector<SimulatedSample>& set,
                            const std::string& name);
MetricReport evaluate_zero_fill(const std::vector<SimulatedSample>& set);

struct AblationRow {
    std::string name;
    MetricReport report;
};

/// Trains every disentanglement variant plus the no-KCM fusion counterpart on
/// identical data/seeds and reports test metrics per variant.
std::vector<AblationRow> run_ablation_suite(const RunConfig& cfg, std::ostream* progress = nullptr);

struct LeakResult {
    std::vector<double> base_err, zero_err;  // per seed, mean abs error in the footprint
    int base_wins = 0;
    int seeds = 0;
};

/// Reference-leak experiment: phantoms carry a reference-only structure; the
/// base model and the zero-reference variant are trained per seed and their
/// reconstruction error inside the structure's footprint is compared.
LeakResult run_leak_experiment(const RunConfig& cfg, std::ostream* progress = nullptr);

/// Mean absolute magnitude error restricted to a footprint mask.
double footprint_error(const ComplexImage& pred, const ComplexImage& gt,
                       const std::vector<uint8_t>& footprint);

}  // namespace mdn
