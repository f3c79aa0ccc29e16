#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sems/baselines.hpp"
#include "sems/checkpoint.hpp"
#include "sems/common.hpp"
#include "sems/config.hpp"
#include "sems/dataset.hpp"
#include "sems/decoders.hpp"
#include "sems/encoder.hpp"
#include "sems/metrics.hpp"
#include "sems/tensor.hpp"

namespace sems {

// Method naming shared by the CLI, sweep records and checkpoints. The first
// group is trainable; the second group is evaluation-only estimators.
inline const std::vector<std::string>& trainable_methods() {
    static const std::vector<std::string> m = {"sems",        "mse_recon",   "uniform_dl",
                                               "perfect_csi", "svm_uniform", "svm_optimized"};
    return m;
}

inline const std::vector<std::string>& estimator_methods() {
    static const std::vector<std::string> m = {"omp", "up_music", "rp_music", "op_music"};
    return m;
}

inline int method_id(const std::string& method) {
    const auto& ms = trainable_methods();
    for (size_t i = 0; i < ms.size(); ++i)
        if (ms[i] == method) return static_cast<int>(i);
    throw ValidationError("unknown trainable method: " + method);
}

inline constexpr int kDelayGridOversampling = 4;  // Q = 4*M grid points
inline constexpr double kDefaultTauMax = kMaxTargetDelayS;

struct TrainSpec {
    TaskKind task = TaskKind::Classification;
    std::string method = "sems";
    int epochs = 30;
    int batch_size = 256;
    double learning_rate = 0.01;
    int n_pilots = 32;
    double snr_db_train = 20.0;          // delay task trains at a fixed SNR
    std::vector<double> snr_db_grid;     // classification mixes per batch over this grid
    uint64_t seed = 0;
    TemperatureSchedule schedule;
    // Returns the best-validation checkpoint by default; the overfit sanity
    // oracles disable this to inspect the final iterate.
    bool select_best_validation = true;

    void validate() const {
        require(batch_size >= 1, "train: batch_size must be >= 1");
        require(epochs >= 1, "train: epochs must be >= 1");
        require(n_pilots >= 1, "train: n_pilots must be >= 1");
        bool trainable = std::any_of(trainable_methods().begin(), trainable_methods().end(),
                                     [&](const std::string& m) { return m == method; });
        require(trainable, "train: method '" + method + "' is not trainable");
        bool svm = method == "svm_uniform" || method == "svm_optimized";
        if (svm)
            require(task == TaskKind::Classification,
                    "train: feature-SVM methods are classification-only");
    }
};

struct TrainedModel {
    TaskKind task = TaskKind::Classification;
    std::string method = "sems";
    int n_pilots = 0;
    FrameConfig cfg;
    std::optional<SelectorParams> selector;
    std::optional<ClassifierParams> classifier;
    std::optional<RegressorParams> regressor;
    std::optional<LinearSvmModel> svm;
    PilotPattern pattern;  // pattern used at evaluation time (empty for perfect_csi)
    std::shared_ptr<DelayDictionary> dict;  // delay task only
    std::vector<double> epoch_train_loss;
    std::vector<double> epoch_val_loss;
};

namespace detail {

inline std::shared_ptr<DelayDictionary> make_delay_dictionary(const FrameConfig& cfg) {
    return std::make_shared<DelayDictionary>(build_delay_dictionary(
        cfg, kDelayGridOversampling * cfg.n_subcarriers(), kDefaultTauMax));
}

/// Receiver input for a fixed pilot pattern (kept off the tape).
inline Tensor fixed_pattern_input(const TFGrid& h, const PilotPattern& pattern,
                                  const FrameConfig& cfg, double noise_variance,
                                  uint64_t noise_seed, uint64_t data_seed) {
    TFGrid x_data = random_qpsk(h.n_slots(), h.n_subcarriers(), data_seed);
    TFGrid y = receive(h, multiplex(pattern, x_data, cfg), noise_variance, noise_seed);
    return Tensor::constant({2, h.n_slots(), h.n_subcarriers()},
                            normalize_pilots(y, pattern, cfg.pilot_symbol()));
}

/// Receiver input built through a tape mask so gradients reach the selector:
/// the mask multiplies both the transmitted grid and the receiver-side
/// pilot gate.
inline Tensor masked_input(const Tensor& mask, const TFGrid& h, const FrameConfig& cfg,
                           double noise_variance, uint64_t noise_seed, uint64_t data_seed) {
    const int n = h.n_slots(), m = h.n_subcarriers();
    const size_t cells = static_cast<size_t>(n) * m;
    TFGrid x_data = random_qpsk(n, m, data_seed);
    Rng noise_rng(noise_seed);

    std::vector<double> xd_re(cells), xd_im(cells), h_re(cells), h_im(cells), v_re(cells),
        v_im(cells);
    const double data_scale = std::sqrt(cfg.data_energy());
    for (size_t i = 0; i < cells; ++i) {
        xd_re[i] = data_scale * x_data.data()[i].real();
        xd_im[i] = data_scale * x_data.data()[i].imag();
        h_re[i] = h.data()[i].real();
        h_im[i] = h.data()[i].imag();
        cplx v = noise_variance > 0 ? noise_rng.complex_normal(noise_variance) : cplx{0, 0};
        v_re[i] = v.real();
        v_im[i] = v.imag();
    }
    std::vector<int> flat{static_cast<int>(cells)};
    Tensor cxd_re = Tensor::constant(flat, std::move(xd_re));
    Tensor cxd_im = Tensor::constant(flat, std::move(xd_im));
    Tensor ch_re = Tensor::constant(flat, std::move(h_re));
    Tensor ch_im = Tensor::constant(flat, std::move(h_im));
    Tensor cv_re = Tensor::constant(flat, std::move(v_re));
    Tensor cv_im = Tensor::constant(flat, std::move(v_im));

    const cplx sp = cfg.pilot_symbol();
    const double ep = std::sqrt(cfg.pilot_energy());
    Tensor one_minus = affine(mask, -1.0, 1.0);
    Tensor xs_re = add(affine(mask, ep * sp.real(), 0.0), mul(one_minus, cxd_re));
    Tensor xs_im = add(affine(mask, ep * sp.imag(), 0.0), mul(one_minus, cxd_im));
    Tensor y_re = add(sub(mul(ch_re, xs_re), mul(ch_im, xs_im)), cv_re);
    Tensor y_im = add(add(mul(ch_re, xs_im), mul(ch_im, xs_re)), cv_im);

    const cplx inv = cplx(1.0, 0.0) / sp;
    Tensor ht_re = inv.imag() == 0.0 ? affine(y_re, inv.real(), 0.0)
                                     : sub(affine(y_re, inv.real(), 0.0), affine(y_im, inv.imag(), 0.0));
    Tensor ht_im = inv.imag() == 0.0 ? affine(y_im, inv.real(), 0.0)
                                     : add(affine(y_im, inv.real(), 0.0), affine(y_re, inv.imag(), 0.0));
    Tensor t0 = mul(mask, ht_re);
    Tensor t1 = mul(mask, ht_im);
    return stack2(t0, t1, {2, n, m});
}

struct ParamSnapshot {
    std::vector<std::vector<double>> values;

    static ParamSnapshot capture(const std::vector<Tensor>& params) {
        ParamSnapshot s;
        for (const Tensor& p : params) s.values.push_back(p.values());
        return s;
    }
    void restore(std::vector<Tensor>& params) const {
        for (size_t i = 0; i < params.size(); ++i) params[i].values() = values[i];
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

/// Shared epoch loop for the gradient-trained methods. `sample_loss` builds
/// the per-sample loss given (frame, mask-or-pattern input); `val_loss`
/// scores one validation frame against the exported pattern.
struct GradientTrainer {
    const TrainSpec& spec;
    const Dataset& dataset;
    const FrameConfig& cfg;
    SeedSpec seeds;
    std::vector<Tensor> params;
    std::optional<SelectorParams>* selector = nullptr;  // trained when non-null

    std::vector<double> epoch_train_loss;
    std::vector<double> epoch_val_loss;

    /// Runs the loop. build_loss(frame_index, input_tensor) -> scalar loss.
    template <typename BuildInput, typename BuildLoss, typename ValLoss>
    void run(const std::vector<int>& train_idx, const std::vector<int>& val_idx,
             BuildInput&& build_input, BuildLoss&& build_loss, ValLoss&& val_loss) {
        AdamState adam = AdamState::init(params, spec.learning_rate);
        ParamSnapshot best;
        double best_val = 0.0;
        bool have_best = false;

        uint64_t sample_counter = 0;
        uint64_t batch_counter = 0;
        const int n_batches =
            static_cast<int>((train_idx.size() + spec.batch_size - 1) / spec.batch_size);

        for (int epoch = 0; epoch < spec.epochs; ++epoch) {
            std::vector<int> order = train_idx;
            Rng shuffle_rng(spawn_seed(seeds, "batch", epoch));
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

            const double temperature = spec.schedule.at_epoch(epoch);
            double epoch_loss = 0.0;
            for (int b = 0; b < n_batches; ++b) {
                const size_t lo = static_cast<size_t>(b) * spec.batch_size;
                const size_t hi = std::min(order.size(), lo + spec.batch_size);
                const int batch_n = static_cast<int>(hi - lo);

                double snr_db = spec.snr_db_train;
                if (spec.task == TaskKind::Classification && !spec.snr_db_grid.empty()) {
                    Rng snr_rng(spawn_seed(seeds, "snr", batch_counter));
                    snr_db = spec.snr_db_grid[snr_rng.uniform_index(spec.snr_db_grid.size())];
                }
                const double noise_var = cfg.pilot_energy() * std::pow(10.0, -snr_db / 10.0);

                Tensor mask;
                PilotPattern batch_pattern;
                if (selector && selector->has_value()) {
                    SelectorForward fwd = selector_forward(
                        **selector, temperature, spawn_seed(seeds, "gumbel", batch_counter));
                    mask = fwd.mask;
                    batch_pattern = fwd.pattern;
                }

                zero_grad(params);
                double batch_loss = 0.0;
                for (size_t s = lo; s < hi; ++s) {
                    const int frame_idx = order[s];
                    Tensor input = build_input(frame_idx, mask, batch_pattern, noise_var,
                                               spawn_seed(seeds, "noise", sample_counter),
                                               spawn_seed(seeds, "data", sample_counter));
                    ++sample_counter;
                    Tensor loss = build_loss(frame_idx, input);
                    if (!std::isfinite(loss.value()))
                        throw NumericalError("train: non-finite loss in batch " +
                                             std::to_string(batch_counter) + " (epoch " +
                                             std::to_string(epoch) + ")");
                    batch_loss += loss.value() / batch_n;
                    backward(loss, 1.0 / batch_n);
                }
                adam_step(params, adam);
                epoch_loss += batch_loss / n_batches;
                ++batch_counter;
            }
            epoch_train_loss.push_back(epoch_loss);

            double vloss = 0.0;
            PilotPattern val_pattern;
            if (selector && selector->has_value()) val_pattern = export_pattern(**selector);
            for (size_t i = 0; i < val_idx.size(); ++i)
                vloss += val_loss(val_idx[i], static_cast<int>(i), val_pattern) /
                         static_cast<double>(val_idx.size());
            epoch_val_loss.push_back(vloss);
            if (!have_best || vloss < best_val) {
                best_val = vloss;
                if (spec.select_best_validation) best = ParamSnapshot::capture(params);
                have_best = true;
            }
        }
        if (spec.select_best_validation && have_best) best.restore(params);
    }
};

}  // namespace detail

inline TrainedModel train(const TrainSpec& spec, const Dataset& dataset) {
    spec.validate();
    require((spec.task == TaskKind::Classification) ==
                (dataset.header.task == TaskKind::Classification),
            "train: dataset task does not match spec");
    const FrameConfig cfg = [&] {
        FrameParams raw;
        raw.n_slots = dataset.header.n_slots;
        raw.n_subcarriers = dataset.header.n_subcarriers;
        return derive_config(raw);
    }();
    require(cfg.n_slots() == dataset.header.n_slots, "train: config/dataset mismatch");

    SplitIndices split = split_indices(static_cast<int>(dataset.frames.size()),
                                       dataset.header.master_seed);
    SeedSpec seeds{spec.seed};

    TrainedModel model;
    model.task = spec.task;
    model.method = spec.method;
    model.n_pilots = spec.n_pilots;
    model.cfg = cfg;
    if (spec.task == TaskKind::DelayEstimation) model.dict = detail::make_delay_dictionary(cfg);
    const double tau_max = model.dict ? model.dict->grid().back() : kDefaultTauMax;

    // --- feature-SVM methods -------------------------------------------------
    if (spec.method == "svm_uniform" || spec.method == "svm_optimized") {
        const bool optimized = spec.method == "svm_optimized";
        model.pattern = optimized
                            ? make_baseline_pattern(MusicVariant::OptimizedPilots, spec.n_pilots,
                                                    cfg, 0, spec.n_pilots % cfg.n_slots() == 0)
                            : make_baseline_pattern(MusicVariant::UniformPilots, spec.n_pilots, cfg, 0);
        std::vector<std::vector<double>> features;
        std::vector<int> labels;
        for (size_t i = 0; i < split.train.size(); ++i) {
            const Frame& frame = dataset.frames[split.train[i]];
            double snr_db = spec.snr_db_grid.empty()
                                ? spec.snr_db_train
                                : spec.snr_db_grid[i % spec.snr_db_grid.size()];
            double noise_var = cfg.pilot_energy() * std::pow(10.0, -snr_db / 10.0);
            Tensor t = detail::fixed_pattern_input(frame.channel, model.pattern, cfg, noise_var,
                                                   spawn_seed(seeds, "svm", i),
                                                   spawn_seed(seeds, "data", i));
            auto spectrum = doppler_spectrum(t.values(), cfg.n_slots(), cfg.n_subcarriers(),
                                             model.pattern);
            features.push_back(stat_features(spectrum).to_vector());
            labels.push_back(frame.class_label);
        }
        model.svm = train_linear_svm(features, labels, kNumClasses, SvmHyper{}, spec.seed);
        return model;
    }

    // --- fixed pattern / selector setup --------------------------------------
    const bool uses_selector = spec.method == "sems" || spec.method == "mse_recon";
    std::optional<SelectorParams> selector;
    PilotPattern fixed_pattern;
    if (uses_selector) {
        selector = init_selector(spec.n_pilots, cfg, spec.schedule, spawn_seed(seeds, "init", 0));
    } else if (spec.method == "uniform_dl") {
        fixed_pattern = make_baseline_pattern(MusicVariant::UniformPilots, spec.n_pilots, cfg, 0);
    }

    auto selector_params = [&](std::vector<Tensor>& out) {
        if (selector) out.push_back(selector->scores);
    };

    // --- stage 1 for mse_recon: channel-reconstruction objective -------------
    if (spec.method == "mse_recon") {
        ReconParams recon = ReconParams::init(cfg, spawn_seed(seeds, "init", 3));
        detail::GradientTrainer stage1{spec, dataset, cfg, seeds};
        selector_params(stage1.params);
        for (const NamedParam& p : recon.named()) stage1.params.push_back(p.tensor);
        stage1.selector = &selector;
        stage1.run(
            split.train, split.val,
            [&](int frame_idx, const Tensor& mask, const PilotPattern&, double noise_var,
                uint64_t noise_seed, uint64_t data_seed) {
                return detail::masked_input(mask, dataset.frames[frame_idx].channel, cfg, noise_var,
                                            noise_seed, data_seed);
            },
            [&](int frame_idx, const Tensor& input) {
                return loss_channel_mse(reconstruct_channel(input, recon),
                                        dataset.frames[frame_idx].channel);
            },
            [&](int frame_idx, int val_i, const PilotPattern& pattern) {
                double snr_db = spec.task == TaskKind::Classification && !spec.snr_db_grid.empty()
                                    ? spec.snr_db_grid[val_i % spec.snr_db_grid.size()]
                                    : spec.snr_db_train;
                double noise_var = cfg.pilot_energy() * std::pow(10.0, -snr_db / 10.0);
                Tensor input = detail::fixed_pattern_input(
                    dataset.frames[frame_idx].channel, pattern, cfg, noise_var,
                    spawn_seed(seeds, "eval", frame_idx), spawn_seed(seeds, "data", frame_idx));
                return loss_channel_mse(reconstruct_channel(input, recon),
                                        dataset.frames[frame_idx].channel)
                    .value();
            });
        // stage 2 freezes the learned pattern and trains the task decoder
        fixed_pattern = export_pattern(*selector);
        model.selector = selector;
        selector.reset();
    }

    // --- task-decoder training ------------------------------------------------
    const bool perfect_csi = spec.method == "perfect_csi";
    auto build_input = [&](int frame_idx, const Tensor& mask, const PilotPattern&,
                           double noise_var, uint64_t noise_seed, uint64_t data_seed) {
        const TFGrid& h = dataset.frames[frame_idx].channel;
        if (perfect_csi)
            return Tensor::constant({2, cfg.n_slots(), cfg.n_subcarriers()}, grid_to_stacked(h));
        if (selector)
            return detail::masked_input(mask, h, cfg, noise_var, noise_seed, data_seed);
        return detail::fixed_pattern_input(h, fixed_pattern, cfg, noise_var, noise_seed, data_seed);
    };
    auto val_input = [&](int frame_idx, double snr_db, const PilotPattern& val_pattern) {
        const TFGrid& h = dataset.frames[frame_idx].channel;
        if (perfect_csi)
            return Tensor::constant({2, cfg.n_slots(), cfg.n_subcarriers()}, grid_to_stacked(h));
        const PilotPattern& pattern = selector ? val_pattern : fixed_pattern;
        double noise_var = cfg.pilot_energy() * std::pow(10.0, -snr_db / 10.0);
        return detail::fixed_pattern_input(h, pattern, cfg, noise_var,
                                           spawn_seed(seeds, "eval", frame_idx),
                                           spawn_seed(seeds, "data", frame_idx));
    };

    if (spec.task == TaskKind::Classification) {
        ClassifierParams classifier = ClassifierParams::init(cfg, spawn_seed(seeds, "init", 1));
        detail::GradientTrainer trainer{spec, dataset, cfg, seeds};
        selector_params(trainer.params);
        for (const NamedParam& p : classifier.named()) trainer.params.push_back(p.tensor);
        trainer.selector = &selector;
        trainer.run(
            split.train, split.val, build_input,
            [&](int frame_idx, const Tensor& input) {
                return cross_entropy(classify(input, classifier).probs,
                                     dataset.frames[frame_idx].class_label);
            },
            [&](int frame_idx, int val_i, const PilotPattern& pattern) {
                double snr_db = spec.snr_db_grid.empty()
                                    ? spec.snr_db_train
                                    : spec.snr_db_grid[val_i % spec.snr_db_grid.size()];
                return cross_entropy(classify(val_input(frame_idx, snr_db, pattern), classifier).probs,
                                     dataset.frames[frame_idx].class_label)
                    .value();
            });
        model.classifier = classifier;
        model.epoch_train_loss = trainer.epoch_train_loss;
        model.epoch_val_loss = trainer.epoch_val_loss;
    } else {
        RegressorParams regressor = RegressorParams::init(cfg, spawn_seed(seeds, "init", 2));
        detail::GradientTrainer trainer{spec, dataset, cfg, seeds};
        selector_params(trainer.params);
        for (const NamedParam& p : regressor.named()) trainer.params.push_back(p.tensor);
        trainer.selector = &selector;
        trainer.run(
            split.train, split.val, build_input,
            [&](int frame_idx, const Tensor& input) {
                Tensor tau = estimate_delay(input, regressor, *model.dict);
                return loss_mse(tau, dataset.frames[frame_idx].delay_s, tau_max);
            },
            [&](int frame_idx, int, const PilotPattern& pattern) {
                Tensor tau = estimate_delay(val_input(frame_idx, spec.snr_db_train, pattern),
                                            regressor, *model.dict);
                return loss_mse(tau, dataset.frames[frame_idx].delay_s, tau_max).value();
            });
        model.regressor = regressor;
        model.epoch_train_loss = trainer.epoch_train_loss;
        model.epoch_val_loss = trainer.epoch_val_loss;
    }

    if (selector) model.selector = selector;
    if (model.selector)
        model.pattern = export_pattern(*model.selector);
    else if (!perfect_csi)
        model.pattern = fixed_pattern;
    return model;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
    std::map<std::string, double> metrics;
    std::vector<std::vector<double>> latents;
    std::vector<int> latent_labels;
    std::optional<ClassificationReport> classification;
    std::optional<DelayErrorReport> delay;
};

/// Scores a trained model on the given frames with fresh noise at snr_db.
/// perfect_csi ignores the SNR by construction.
inline EvalResult evaluate(const TrainedModel& model, const Dataset& dataset,
                           const std::vector<int>& indices, double snr_db, uint64_t eval_seed) {
    require(!indices.empty(), "evaluate: no frames selected");
    require((model.task == TaskKind::Classification) ==
                (dataset.header.task == TaskKind::Classification),
            "evaluate: dataset task does not match model");
    const FrameConfig& cfg = model.cfg;
    const double noise_var = cfg.pilot_energy() * std::pow(10.0, -snr_db / 10.0);
    SeedSpec seeds{eval_seed};

    EvalResult result;
    std::vector<int> predictions, labels;
    std::vector<double> estimates, truths;

    for (size_t i = 0; i < indices.size(); ++i) {
        const Frame& frame = dataset.frames[indices[i]];
        Tensor input;
        if (model.method == "perfect_csi") {
            input = Tensor::constant({2, cfg.n_slots(), cfg.n_subcarriers()},
                                     grid_to_stacked(frame.channel));
        } else {
            input = detail::fixed_pattern_input(frame.channel, model.pattern, cfg, noise_var,
                                                spawn_seed(seeds, "noise", i),
                                                spawn_seed(seeds, "data", i));
        }
        if (model.task == TaskKind::Classification) {
            labels.push_back(frame.class_label);
            if (model.svm) {
                auto spectrum = doppler_spectrum(input.values(), cfg.n_slots(),
                                                 cfg.n_subcarriers(), model.pattern);
                predictions.push_back(model.svm->predict(stat_features(spectrum).to_vector()));
            } else {
                require(model.classifier.has_value(), "evaluate: model has no classifier");
                ClassifierOutput out = classify(input, *model.classifier);
                predictions.push_back(
                    static_cast<int>(argmax_index(out.probs.values())));
                result.latents.push_back(out.latent.values());
                result.latent_labels.push_back(frame.class_label);
            }
        } else {
            require(model.regressor.has_value() && model.dict, "evaluate: model has no regressor");
            Tensor tau = estimate_delay(input, *model.regressor, *model.dict);
            estimates.push_back(tau.value());
            truths.push_back(frame.delay_s);
        }
    }

    if (model.task == TaskKind::Classification) {
        result.classification = classification_report(predictions, labels, kNumClasses);
        result.metrics["accuracy"] = result.classification->accuracy;
        result.metrics["macro_f1"] = result.classification->macro_f1;
        // j_disc needs >= 2 samples in every present class to be well posed
        std::vector<int> counts(kNumClasses, 0);
        for (int l : result.latent_labels) counts[l] += 1;
        int present = 0;
        bool well_posed = !result.latents.empty();
        for (int c : counts) {
            if (c == 1) well_posed = false;
            if (c > 0) ++present;
        }
        if (well_posed && present >= 2)
            result.metrics["j_disc"] = discriminative_gain(result.latents, result.latent_labels);
    } else {
        result.delay = delay_report(estimates, truths, model.dict->grid_spacing());
        result.metrics["mae_bins"] = result.delay->mae_bins;
    }
    return result;
}

/// Classical delay estimators share the evaluation surface: method is one of
/// estimator_methods(), the pattern is derived from the variant.
inline EvalResult evaluate_estimator(const std::string& method, const Dataset& dataset,
                                     const std::vector<int>& indices, int n_pilots, double snr_db,
                                     int k_paths, uint64_t eval_seed) {
    require(dataset.header.task == TaskKind::DelayEstimation,
            "evaluate_estimator: delay estimators need a delay dataset");
    FrameParams raw;
    raw.n_slots = dataset.header.n_slots;
    raw.n_subcarriers = dataset.header.n_subcarriers;
    const FrameConfig cfg = derive_config(raw);
    auto dict = detail::make_delay_dictionary(cfg);
    const double noise_var = cfg.pilot_energy() * std::pow(10.0, -snr_db / 10.0);

    PilotPattern pattern;
    if (method == "omp" || method == "up_music")
        pattern = make_baseline_pattern(MusicVariant::UniformPilots, n_pilots, cfg, 0);
    else if (method == "rp_music")
        pattern = make_baseline_pattern(MusicVariant::RandomPilots, n_pilots, cfg, eval_seed);
    else if (method == "op_music")
        pattern = make_baseline_pattern(MusicVariant::OptimizedPilots, n_pilots, cfg, 0);
    else
        throw ValidationError("unknown estimator method: " + method);

    SeedSpec seeds{eval_seed};
    std::vector<double> estimates, truths;
    for (size_t i = 0; i < indices.size(); ++i) {
        const Frame& frame = dataset.frames[indices[i]];
        Tensor input = detail::fixed_pattern_input(frame.channel, pattern, cfg, noise_var,
                                                   spawn_seed(seeds, "noise", i),
                                                   spawn_seed(seeds, "data", i));
        double tau = 0.0;
        if (method == "omp") {
            auto delays = omp_delay(input.values(), cfg.n_slots(), cfg.n_subcarriers(), *dict,
                                    pattern, k_paths);
            tau = delays.empty() ? 0.0 : delays.front();
        } else {
            tau = music_delay(input.values(), cfg.n_slots(), cfg.n_subcarriers(), pattern, k_paths,
                              *dict);
        }
        estimates.push_back(tau);
        truths.push_back(frame.delay_s);
    }
    EvalResult result;
    result.delay = delay_report(estimates, truths, dict->grid_spacing());
    result.metrics["mae_bins"] = result.delay->mae_bins;
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoint plumbing
// ---------------------------------------------------------------------------

inline void save_model(const TrainedModel& model, const std::string& path) {
    std::vector<NamedParam> params;
    auto meta = [&](const std::string& key, double v) {
        params.push_back({"__meta." + key, Tensor::scalar(v)});
    };
    meta("task", static_cast<double>(static_cast<int>(model.task)));
    meta("method_id", static_cast<double>(method_id(model.method)));
    meta("n_pilots", static_cast<double>(model.n_pilots));
    if (!model.pattern.empty()) {
        std::vector<double> cells;
        for (auto [slot, sub] : model.pattern.cells())
            cells.push_back(static_cast<double>(slot * model.cfg.n_subcarriers() + sub));
        const int n_cells = static_cast<int>(cells.size());
        params.push_back({"pattern.cells", Tensor::leaf({n_cells}, std::move(cells))});
    }
    if (model.selector) params.push_back({"selector.scores", model.selector->scores});
    if (model.classifier)
        for (const NamedParam& p : model.classifier->named()) params.push_back(p);
    if (model.regressor)
        for (const NamedParam& p : model.regressor->named()) params.push_back(p);
    if (model.svm) {
        const LinearSvmModel& svm = *model.svm;
        std::vector<double> w;
        for (const auto& row : svm.weights) w.insert(w.end(), row.begin(), row.end());
        params.push_back({"svm.weights", Tensor::leaf({svm.n_classes, svm.dim + 1}, std::move(w))});
        params.push_back({"svm.mean", Tensor::leaf({svm.dim}, svm.feat_mean)});
        params.push_back({"svm.std", Tensor::leaf({svm.dim}, svm.feat_std)});
    }
    save_checkpoint(params, path);
}

inline TrainedModel load_model(const std::string& path, const FrameConfig& cfg) {
    Checkpoint ckpt = load_checkpoint(path);
    TrainedModel model;
    model.cfg = cfg;
    model.task = static_cast<TaskKind>(static_cast<int>(checkpoint_meta(ckpt, "task")));
    model.method = trainable_methods().at(static_cast<size_t>(checkpoint_meta(ckpt, "method_id")));
    model.n_pilots = static_cast<int>(checkpoint_meta(ckpt, "n_pilots"));
    if (model.task == TaskKind::DelayEstimation) model.dict = detail::make_delay_dictionary(cfg);

    if (checkpoint_has(ckpt, "pattern.cells")) {
        const auto& cells = checkpoint_get(ckpt, "pattern.cells").values;
        std::vector<int> flat(cells.begin(), cells.end());
        model.pattern = pattern_from_flat(flat, cfg.n_slots(), cfg.n_subcarriers());
    }
    if (checkpoint_has(ckpt, "selector.scores")) {
        SelectorParams sel;
        sel.n_pilots = model.n_pilots;
        sel.n_slots = cfg.n_slots();
        sel.n_subcarriers = cfg.n_subcarriers();
        sel.scores = Tensor::zeros({model.n_pilots, cfg.n_slots(), cfg.n_subcarriers()});
        checkpoint_restore(ckpt, "selector.scores", sel.scores);
        model.selector = sel;
    }
    if (checkpoint_has(ckpt, "classifier.w_proj")) {
        ClassifierParams cls = ClassifierParams::init(cfg, 0);
        for (NamedParam p : cls.named()) checkpoint_restore(ckpt, p.name, p.tensor);
        model.classifier = cls;
    }
    if (checkpoint_has(ckpt, "regressor.w_proj")) {
        RegressorParams reg = RegressorParams::init(cfg, 0);
        for (NamedParam p : reg.named()) checkpoint_restore(ckpt, p.name, p.tensor);
        model.regressor = reg;
    }
    if (checkpoint_has(ckpt, "svm.weights")) {
        LinearSvmModel svm;
        const auto& w = checkpoint_get(ckpt, "svm.weights");
        svm.n_classes = w.shape[0];
        svm.dim = w.shape[1] - 1;
        for (int c = 0; c < svm.n_classes; ++c)
            svm.weights.emplace_back(w.values.begin() + static_cast<size_t>(c) * (svm.dim + 1),
                                     w.values.begin() + static_cast<size_t>(c + 1) * (svm.dim + 1));
        svm.feat_mean = checkpoint_get(ckpt, "svm.mean").values;
        svm.feat_std = checkpoint_get(ckpt, "svm.std").values;
        model.svm = svm;
    }
    return model;
}

}  // namespace sems
