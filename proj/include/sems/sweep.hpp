#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "sems/common.hpp"
#include "sems/dataset.hpp"
#include "sems/records.hpp"
#include "sems/train.hpp"

namespace sems {

/// One experiment family: the dataset regime, task, methods and grids that
/// reproduce one figure-style comparison at desk scale.
struct FamilyPlan {
    std::string name;
    TaskKind task = TaskKind::Classification;
    ScenarioFlags scenario;
    std::vector<std::string> methods;
    bool budget_sweep = false;  // sweep pilot budgets at a single SNR
    int k_paths = 1;            // source count handed to the classical estimators
};

inline FamilyPlan family_plan(const std::string& family) {
    FamilyPlan plan;
    plan.name = family;
    if (family == "fig4_cls") {
        plan.task = TaskKind::Classification;
        plan.methods = {"perfect_csi", "sems", "mse_recon", "uniform_dl", "svm_optimized",
                        "svm_uniform"};
    } else if (family == "fig5a_no_udoppler") {
        plan.task = TaskKind::Classification;
        plan.scenario.micro_doppler = false;
        plan.methods = {"sems", "svm_optimized", "svm_uniform"};
    } else if (family == "fig5b_clutter") {
        plan.task = TaskKind::Classification;
        plan.scenario.clutter = true;
        plan.methods = {"perfect_csi", "sems", "mse_recon", "svm_optimized"};
    } else if (family == "fig7_delay_single") {
        plan.task = TaskKind::DelayEstimation;
        plan.scenario.single_path = true;
        plan.methods = {"sems", "omp", "up_music", "rp_music", "op_music"};
        plan.k_paths = 1;
    } else if (family == "fig7_delay_multi") {
        plan.task = TaskKind::DelayEstimation;
        plan.methods = {"sems", "omp", "up_music", "rp_music", "op_music"};
        plan.k_paths = kPathsPerTarget;
    } else if (family == "fig8_budget") {
        plan.task = TaskKind::DelayEstimation;
        plan.methods = {"sems"};
        plan.budget_sweep = true;
        plan.k_paths = kPathsPerTarget;
    } else {
        throw ValidationError("unknown sweep family: " + family);
    }
    return plan;
}

inline const std::vector<std::string>& all_families() {
    static const std::vector<std::string> f = {"fig4_cls",          "fig5a_no_udoppler",
                                               "fig5b_clutter",     "fig7_delay_single",
                                               "fig7_delay_multi",  "fig8_budget"};
    return f;
}

struct SweepSpec {
    std::string family;
    AppConfig config;
    std::string out_dir;
    int workers = 1;
    std::vector<std::string> methods_override;  // replaces the family's method list when set
};

namespace detail {

inline bool is_estimator(const std::string& method) {
    for (const auto& m : estimator_methods())
        if (m == method) return true;
    return false;
}

inline std::vector<std::string> metrics_for(const FamilyPlan& plan, const std::string& method) {
    if (plan.task == TaskKind::DelayEstimation) return {"mae_bins"};
    if (method == "svm_uniform" || method == "svm_optimized") return {"accuracy", "macro_f1"};
    return {"accuracy", "macro_f1", "j_disc"};
}

inline uint64_t cell_train_seed(uint64_t master, const std::string& method, int budget, int seed) {
    uint64_t x = master;
    x = splitmix64(x += fnv1a64(method));
    x = splitmix64(x += static_cast<uint64_t>(budget) * 0x9E3779B97F4A7C15ULL);
    x = splitmix64(x += static_cast<uint64_t>(seed) + 1);
    return x;
}

inline uint64_t cell_eval_seed(uint64_t train_seed, double snr_db) {
    uint64_t x = train_seed;
    x = splitmix64(x += static_cast<uint64_t>(static_cast<int64_t>(snr_db * 1000.0)) + 17);
    return x;
}

}  // namespace detail

struct SweepCell {
    std::string method;
    int n_pilots = 0;
    int seed = 0;
};

/// Runs (or resumes) one experiment family: builds the dataset on demand,
/// trains every (method x budget x seed) cell, scores each over the SNR
/// grid on the test split and appends keyed records. Completed cells are
/// skipped, so interrupted sweeps pick up where they stopped.
inline std::vector<ExperimentRecord> sweep(const SweepSpec& spec) {
    FamilyPlan plan = family_plan(spec.family);
    if (!spec.methods_override.empty()) plan.methods = spec.methods_override;
    const AppConfig& cfg = spec.config;
    std::filesystem::create_directories(spec.out_dir);

    const std::vector<double> snr_grid =
        plan.budget_sweep ? std::vector<double>{20.0} : cfg.sweep.snr_db_grid;
    const std::vector<int> budgets =
        plan.budget_sweep ? cfg.sweep.budget_grid : std::vector<int>{cfg.train.n_pilots};

    // dataset, generated once per family
    const std::string data_path = spec.out_dir + "/data_" + plan.name + ".bin";
    if (!std::filesystem::exists(data_path))
        generate_dataset(cfg.frame, plan.task, cfg.sweep.frames, plan.scenario,
                         cfg.train.master_seed, data_path);
    Dataset dataset = load_dataset(data_path, &cfg.frame);
    SplitIndices split = split_indices(static_cast<int>(dataset.frames.size()),
                                       dataset.header.master_seed);

    // resumability: keys already present in the records file
    const std::string records_path = spec.out_dir + "/records.csv";
    std::set<std::string> done;
    std::vector<ExperimentRecord> existing;
    if (std::filesystem::exists(records_path)) {
        existing = parse_records_csv(records_path);
        for (const auto& r : existing) done.insert(format_record(r));
    }
    auto record_key = [&](const std::string& method, double snr, int budget, int seed,
                          const std::string& metric, double value) {
        ExperimentRecord r{plan.name, task_name(plan.task), method, snr, budget,
                           static_cast<uint64_t>(seed), metric, value};
        return r;
    };
    auto cell_complete = [&](const SweepCell& c) {
        for (double snr : snr_grid)
            for (const auto& metric : detail::metrics_for(plan, c.method)) {
                bool found = false;
                for (const auto& r : existing)
                    if (r.experiment == plan.name && r.method == c.method && r.snr_db == snr &&
                        r.n_pilots == c.n_pilots && r.seed == static_cast<uint64_t>(c.seed) &&
                        r.metric == metric) {
                        found = true;
                        break;
                    }
                if (!found) return false;
            }
        return true;
    };

    std::vector<SweepCell> cells;
    for (const auto& method : plan.methods)
        for (int budget : budgets)
            for (int seed = 0; seed < cfg.sweep.seeds; ++seed)
                if (!cell_complete({method, budget, seed})) cells.push_back({method, budget, seed});

    std::mutex io_mutex;
    std::vector<ExperimentRecord> fresh;
    std::atomic<size_t> next_cell{0};

    auto run_cell = [&](const SweepCell& cell) {
        const uint64_t train_seed =
            detail::cell_train_seed(cfg.train.master_seed, cell.method, cell.n_pilots, cell.seed);
        std::vector<ExperimentRecord> out;

        if (detail::is_estimator(cell.method)) {
            for (double snr : snr_grid) {
                EvalResult res = evaluate_estimator(cell.method, dataset, split.test, cell.n_pilots,
                                                    snr, plan.k_paths,
                                                    detail::cell_eval_seed(train_seed, snr));
                for (const auto& [metric, value] : res.metrics)
                    out.push_back(record_key(cell.method, snr, cell.n_pilots, cell.seed, metric, value));
            }
        } else {
            TrainSpec tspec;
            tspec.task = plan.task;
            tspec.method = cell.method;
            tspec.epochs = cfg.train.epochs;
            tspec.batch_size = cfg.train.batch_size;
            tspec.learning_rate = cfg.train.learning_rate;
            tspec.n_pilots = cell.n_pilots;
            tspec.snr_db_train = cfg.train.snr_db_train;
            tspec.snr_db_grid = cfg.sweep.snr_db_grid;
            tspec.seed = train_seed;
            tspec.schedule = {cfg.train.temperature_init, cfg.train.temperature_decay,
                              cfg.train.temperature_min};
            TrainedModel model = train(tspec, dataset);

            if (!model.pattern.empty() && (cell.method == "sems" || cell.method == "mse_recon")) {
                std::string base = spec.out_dir + "/pattern_" + plan.name + "_" + cell.method +
                                   "_np" + std::to_string(cell.n_pilots) + "_s" +
                                   std::to_string(cell.seed);
                write_pattern_csv(model.pattern, base + ".csv");
                write_pattern_svg(model.pattern, base + ".svg");
            }
            for (double snr : snr_grid) {
                EvalResult res = evaluate(model, dataset, split.test, snr,
                                          detail::cell_eval_seed(train_seed, snr));
                for (const auto& [metric, value] : res.metrics)
                    out.push_back(record_key(cell.method, snr, cell.n_pilots, cell.seed, metric, value));
                if (plan.task == TaskKind::Classification && snr == 10.0 && !res.latents.empty()) {
                    std::string lat_path = spec.out_dir + "/latents_" + plan.name + "_" +
                                           cell.method + "_s" + std::to_string(cell.seed) + ".csv";
                    write_latents_csv(res.latents, res.latent_labels, lat_path);
                }
            }
        }
        std::lock_guard<std::mutex> lock(io_mutex);
        append_csv(out, records_path);
        fresh.insert(fresh.end(), out.begin(), out.end());
    };

    const int n_workers = std::max(1, std::min<int>(spec.workers, static_cast<int>(cells.size())));
    if (n_workers <= 1) {
        for (const auto& cell : cells) run_cell(cell);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    size_t i = next_cell.fetch_add(1);
                    if (i >= cells.size()) return;
                    run_cell(cells[i]);
                }
            });
        for (auto& t : pool) t.join();
    }

    // deterministic on-disk order regardless of scheduling
    std::vector<ExperimentRecord> all = existing;
    all.insert(all.end(), fresh.begin(), fresh.end());
    if (!all.empty()) emit_csv(all, records_path);

    std::ofstream meta(spec.out_dir + "/sweep_" + plan.name + "_meta.txt", std::ios::trunc);
    meta << "family=" << plan.name << "\nframes=" << cfg.sweep.frames
         << "\nepochs=" << cfg.train.epochs << "\nbatch_size=" << cfg.train.batch_size
         << "\nlearning_rate=" << cfg.train.learning_rate << "\nseeds=" << cfg.sweep.seeds
         << "\nn_pilots=" << cfg.train.n_pilots << "\nsnr_db_train=" << cfg.train.snr_db_train
         << "\nnote=classification trains at per-batch SNR drawn from the sweep grid\n";
    return fresh;
}

}  // namespace sems
