#include "mdn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <thread>

#include "mdn/queue.hpp"

namespace mdn {

std::vector<Sample> make_phantom_set(int n, int h, int w, uint64_t seed, bool leak,
                                     bool with_phase, int n_ellipses) {
    std::vector<Sample> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        Phantom ph = generate_phantom(h, w, n_ellipses, sample_seed(seed, i), leak);
        out.push_back({render(ph, Contrast::Target, with_phase),
                       render(ph, Contrast::Reference, with_phase)});
    }
    return out;
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, const std::string& split) {
    std::vector<Sample> out;
    for (const auto& e : manifest.entries) {
        if (e.split != split) continue;
        out.push_back({load_cplx(e.target_path), load_cplx(e.reference_path)});
    }
    if (out.empty()) throw ContractError("empty split: " + split);
    return out;
}

SimulatedSample simulate_sample(const Sample& s, const RunConfig& cfg, int index) {
    SimulatedSample sim;
    sim.gt = s.target;
    sim.mask = make_mask(s.target.h, s.target.w, cfg.accel, cfg.center_fraction,
                         mix_seed(cfg.mask_seed, static_cast<uint64_t>(index)));
    KSpaceGrid k_tar = fft2(s.target);
    if (cfg.noise_sigma > 0)
        k_tar = add_noise(k_tar, cfg.noise_sigma, mix_seed(cfg.mask_seed, 0xff00 + index));
    sim.k_tar_us = apply_mask(k_tar, sim.mask);
    sim.k_ref_fs = fft2(s.reference);
    return sim;
}

std::vector<SimulatedSample> simulate_all(const std::vector<Sample>& samples, const RunConfig& cfg,
                                          int index_offset) {
    std::vector<SimulatedSample> out;
    out.reserve(samples.size());
    for (size_t i = 0; i < samples.size(); ++i)
        out.push_back(simulate_sample(samples[i], cfg, index_offset + static_cast<int>(i)));
    return out;
}

TrainStats train_model(MambaMdnModel& model, const std::vector<SimulatedSample>& train_set) {
    if (train_set.empty()) throw ContractError("train_model: empty training set");
    const ModelConfig& cfg = model.config();
    AdamOptimizer opt(model.parameters(), cfg.lr);

    TrainStats stats;
    const int n = static_cast<int>(train_set.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, 0x65700000 + static_cast<uint64_t>(epoch)));
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);

        // Bounded hand-off: the loader walks the epoch order while the
        // consumer trains. FIFO keeps the step sequence deterministic.
        BoundedQueue<const SimulatedSample*> queue(4);
        std::thread loader([&] {
            for (int idx : order) queue.push(&train_set[idx]);
            queue.close();
        });

        double epoch_loss = 0.0;
        int seen = 0, in_batch = 0;
        opt.zero_grad();
        while (auto item = queue.pop()) {
            const SimulatedSample& s = **item;
            Tensor pred = model.forward_train(s.k_tar_us, s.k_ref_fs, s.mask);
            Tensor loss = mul_scalar(l1_loss(pred, image_to_planes(s.gt)), 1.0 / cfg.batch);
            const double value = loss.value() * cfg.batch;
            if (!std::isfinite(value))
                throw TrainDivergedError("training loss is not finite at epoch " +
                                         std::to_string(epoch) + ", sample " + std::to_string(seen));
            backward(loss);
            epoch_loss += value;
            ++seen;
            if (++in_batch == cfg.batch || seen == n) {
                opt.step();
                opt.zero_grad();
                in_batch = 0;
            }
        }
        loader.join();
        epoch_loss /= n;
        stats.epoch_loss.push_back(epoch_loss);
        if (epoch == 0) stats.initial_loss = epoch_loss;
        stats.final_loss = epoch_loss;
    }
    return stats;
}

namespace {

double magnitude_range(const std::vector<double>& mag) {
    double m = 0;
    for (double v : mag) m = std::max(m, v);
    return m > 0 ? m : 1.0;
}

}  // namespace

MetricReport evaluate_model(const MambaMdnModel& model, const std::vector<SimulatedSample>& set,
                            const std::string& name) {
    if (set.empty()) throw ContractError("evaluate: empty split");
    MetricReport report;
    report.name = name;
    for (const auto& s : set) {
        const ComplexImage recon = model.forward(s.k_tar_us, s.k_ref_fs, s.mask);
        const auto pred_mag = recon.magnitude();
        const auto gt_mag = s.gt.magnitude();
        const double range = magnitude_range(gt_mag);
        report.add(psnr(pred_mag, gt_mag, range), ssim(pred_mag, gt_mag, s.gt.h, s.gt.w, range),
                   rmse(pred_mag, gt_mag, false, range));
    }
    return report;
}

MetricReport evaluate_zero_fill(const std::vector<SimulatedSample>& set) {
    if (set.empty()) throw ContractError("evaluate: empty split");
    MetricReport report;
    report.name = "ZF";
    for (const auto& s : set) {
        const auto pred_mag = zero_fill(s.k_tar_us).magnitude();
        const auto gt_mag = s.gt.magnitude();
        const double range = magnitude_range(gt_mag);
        report.add(psnr(pred_mag, gt_mag, range), ssim(pred_mag, gt_mag, s.gt.h, s.gt.w, range),
                   rmse(pred_mag, gt_mag, false, range));
    }
    return report;
}

namespace {

struct SplitSets {
    std::vector<SimulatedSample> train, test;
};

SplitSets make_split_sets(const RunConfig& cfg, uint64_t data_seed) {
    const auto samples =
        make_phantom_set(cfg.n_samples, cfg.size, cfg.size, data_seed, cfg.leak, cfg.phase,
                         cfg.n_ellipses);
    const int n_train = (7 * cfg.n_samples) / 10;
    const int n_valid = cfg.n_samples / 10;
    SplitSets out;
    for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
        if (i < n_train)
            out.train.push_back(simulate_sample(samples[i], cfg, i));
        else if (i >= n_train + n_valid)
            out.test.push_back(simulate_sample(samples[i], cfg, i));
    }
    return out;
}

}  // namespace

std::vector<AblationRow> run_ablation_suite(const RunConfig& cfg, std::ostream* progress) {
    struct Setting {
        std::string name;
        Variant variant;
        bool fuse;
    };
    const std::vector<Setting> settings = {
        {"MIX_MINUS_REF", Variant::MixMinusRef, false},
        {"TARUS_MINUS_REF", Variant::TarusMinusRef, false},
        {"MIX_MINUS_TARUS", Variant::MixMinusTarus, false},
        {"MIX_MINUS_ZERO", Variant::MixMinusZero, false},
        {"PARALLEL_T", Variant::ParallelT, false},
        {"SINGLE_BLOCK", Variant::SingleBlock, false},
        {"FUSION_NO_KCM", Variant::TarusMinusRef, true},
    };

    std::vector<AblationRow> rows;
    for (const auto& setting : settings) {
        MetricReport combined;
        combined.name = setting.name;
        for (int s = 0; s < cfg.seeds; ++s) {
            RunConfig run = cfg;
            run.model.variant = setting.variant;
            run.model.fuse_add = setting.fuse;
            run.model.seed = mix_seed(cfg.model.seed, 0xab1a0000 + static_cast<uint64_t>(s));
            const uint64_t data_seed = mix_seed(cfg.model.seed, 0xda7a0000 + static_cast<uint64_t>(s));
            SplitSets sets = make_split_sets(run, data_seed);
            MambaMdnModel model(run.model);
            train_model(model, sets.train);
            MetricReport r = evaluate_model(model, sets.test, setting.name);
            combined.psnr_values.insert(combined.psnr_values.end(), r.psnr_values.begin(),
                                        r.psnr_values.end());
            combined.ssim_values.insert(combined.ssim_values.end(), r.ssim_values.begin(),
                                        r.ssim_values.end());
            combined.rmse_values.insert(combined.rmse_values.end(), r.rmse_values.begin(),
                                        r.rmse_values.end());
            if (progress)
                (*progress) << "ablate " << setting.name << " seed " << s << ": psnr "
                            << r.psnr_mean() << "\n";
        }
        rows.push_back({setting.name, std::move(combined)});
    }
    return rows;
}

double footprint_error(const ComplexImage& pred, const ComplexImage& gt,
                       const std::vector<uint8_t>& footprint) {
    const auto pm = pred.magnitude();
    const auto gm = gt.magnitude();
    double acc = 0;
    int count = 0;
    for (size_t i = 0; i < pm.size(); ++i) {
        if (!footprint[i]) continue;
        acc += std::fabs(pm[i] - gm[i]);
        ++count;
    }
    if (count == 0) throw ContractError("footprint_error: empty footprint");
    return acc / count;
}

LeakResult run_leak_experiment(const RunConfig& cfg, std::ostream* progress) {
    LeakResult result;
    result.seeds = cfg.seeds;
    for (int s = 0; s < cfg.seeds; ++s) {
        RunConfig run = cfg;
        run.leak = true;
        run.model.seed = mix_seed(cfg.model.seed, 0x1eac0000 + static_cast<uint64_t>(s));
        const uint64_t data_seed = mix_seed(cfg.model.seed, 0x1da70000 + static_cast<uint64_t>(s));

        const auto samples = make_phantom_set(run.n_samples, run.size, run.size, data_seed,
                                              /*leak=*/true, run.phase, run.n_ellipses);
        const int n_train = (7 * run.n_samples) / 10;
        const int n_valid = run.n_samples / 10;
        std::vector<SimulatedSample> train_set, test_set;
        std::vector<std::vector<uint8_t>> test_footprints;
        for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
            if (i < n_train) {
                train_set.push_back(simulate_sample(samples[i], run, i));
            } else if (i >= n_train + n_valid) {
                test_set.push_back(simulate_sample(samples[i], run, i));
                Phantom ph = generate_phantom(run.size, run.size, run.n_ellipses,
                                              sample_seed(data_seed, i), true);
                test_footprints.push_back(ph.leak_footprint());
            }
        }

        auto run_variant = [&](Variant v) {
            RunConfig vc = run;
            vc.model.variant = v;
            MambaMdnModel model(vc.model);
            train_model(model, train_set);
            double err = 0;
            for (size_t i = 0; i < test_set.size(); ++i) {
                const ComplexImage recon =
                    model.forward(test_set[i].k_tar_us, test_set[i].k_ref_fs, test_set[i].mask);
                err += footprint_error(recon, test_set[i].gt, test_footprints[i]);
            }
            return err / static_cast<double>(test_set.size());
        };

        const double base = run_variant(Variant::MixMinusRef);
        const double zero = run_variant(Variant::MixMinusZero);
        result.base_err.push_back(base);
        result.zero_err.push_back(zero);
        if (base <= zero) ++result.base_wins;
        if (progress)
            (*progress) << "leak seed " << s << ": base " << base << " zero " << zero << "\n";
    }
    return result;
}

}  // namespace mdn
