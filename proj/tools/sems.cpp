#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <string>

#include "sems/dataset.hpp"
#include "sems/records.hpp"
#include "sems/selftest.hpp"
#include "sems/sweep.hpp"
#include "sems/train.hpp"

namespace {

sems::AppConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return sems::AppConfig{};
    return sems::load_app_config(path);
}

sems::ScenarioFlags scenario_from_name(const std::string& name) {
    sems::ScenarioFlags flags;
    if (name == "default") return flags;
    if (name == "no_microdoppler") {
        flags.micro_doppler = false;
        return flags;
    }
    if (name == "clutter") {
        flags.clutter = true;
        return flags;
    }
    if (name == "single_path") {
        flags.single_path = true;
        return flags;
    }
    throw sems::ValidationError("unknown scenario: " + name);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semslab: task-oriented OFDM sensing laboratory"};
    app.require_subcommand(1);

    std::string config_path, task_name = "classification", out_path, data_path, ckpt_path;
    std::string method = "sems", scenario_name = "default", family, out_dir = "out";
    std::string records_path, pattern_path, latent_out;
    int frames = 3000, epochs = -1, n_pilots = -1, k_paths = 1, workers = 1;
    double snr_db = 20.0;
    uint64_t seed = 0;

    auto* gen = app.add_subcommand("gen", "generate a labeled channel dataset");
    gen->add_option("--config", config_path, "INI config file");
    gen->add_option("--task", task_name, "classification|delay");
    gen->add_option("--frames", frames, "frame count");
    gen->add_option("--out", out_path, "output dataset path")->required();
    gen->add_option("--seed", seed, "master seed");
    gen->add_option("--scenario", scenario_name, "default|no_microdoppler|clutter|single_path");

    auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
    train_cmd->add_option("--config", config_path, "INI config file");
    train_cmd->add_option("--task", task_name, "classification|delay");
    train_cmd->add_option("--method", method, "sems|mse_recon|uniform_dl|perfect_csi|svm_uniform|svm_optimized");
    train_cmd->add_option("--data", data_path, "dataset path")->required();
    train_cmd->add_option("--out", ckpt_path, "checkpoint output path")->required();
    train_cmd->add_option("--seed", seed, "training seed");
    train_cmd->add_option("--epochs", epochs, "override epoch count");
    train_cmd->add_option("--n-pilots", n_pilots, "override pilot budget");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or classical estimator");
    eval_cmd->add_option("--config", config_path, "INI config file");
    eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint path (trained models)");
    eval_cmd->add_option("--method", method, "estimator method (omp|up_music|rp_music|op_music)");
    eval_cmd->add_option("--data", data_path, "dataset path")->required();
    eval_cmd->add_option("--snr-db", snr_db, "evaluation SNR in dB");
    eval_cmd->add_option("--seed", seed, "evaluation seed");
    eval_cmd->add_option("--n-pilots", n_pilots, "pilot budget for estimators");
    eval_cmd->add_option("--k-paths", k_paths, "source count for classical estimators");
    eval_cmd->add_option("--latent-out", latent_out, "write latent features CSV here");

    auto* sweep_cmd = app.add_subcommand("sweep", "run an experiment family");
    sweep_cmd->add_option("--family", family, "experiment family")->required();
    sweep_cmd->add_option("--config", config_path, "INI config file");
    sweep_cmd->add_option("--out-dir", out_dir, "output directory");
    sweep_cmd->add_option("--workers", workers, "parallel training cells");

    auto* plot_cmd = app.add_subcommand("plot", "render SVG plots from records");
    plot_cmd->add_option("--records", records_path, "records CSV")->required();
    plot_cmd->add_option("--out-dir", out_dir, "output directory");
    plot_cmd->add_option("--pattern", pattern_path, "also render this pattern CSV as a map");

    auto* selftest_cmd = app.add_subcommand("selftest", "gradient checks and estimator oracles");
    (void)selftest_cmd;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        sems::AppConfig config = load_config_or_default(config_path);
        if (epochs > 0) config.train.epochs = epochs;
        if (n_pilots > 0) config.train.n_pilots = n_pilots;

        if (gen->parsed()) {
            sems::generate_dataset(config.frame, sems::task_from_name(task_name), frames,
                                   scenario_from_name(scenario_name), seed, out_path);
            std::printf("wrote %d frames to %s\n", frames, out_path.c_str());
        } else if (train_cmd->parsed()) {
            sems::Dataset dataset = sems::load_dataset(data_path, &config.frame);
            sems::TrainSpec spec;
            spec.task = sems::task_from_name(task_name);
            spec.method = method;
            spec.epochs = config.train.epochs;
            spec.batch_size = config.train.batch_size;
            spec.learning_rate = config.train.learning_rate;
            spec.n_pilots = config.train.n_pilots;
            spec.snr_db_train = config.train.snr_db_train;
            spec.snr_db_grid = config.sweep.snr_db_grid;
            spec.seed = seed;
            spec.schedule = {config.train.temperature_init, config.train.temperature_decay,
                             config.train.temperature_min};
            sems::TrainedModel model = sems::train(spec, dataset);
            sems::save_model(model, ckpt_path);
            if (!model.pattern.empty()) sems::write_pattern_csv(model.pattern, ckpt_path + ".pattern.csv");
            double final_loss = model.epoch_train_loss.empty() ? 0.0 : model.epoch_train_loss.back();
            std::printf("trained %s (%s); final train loss %.6g; checkpoint %s\n", method.c_str(),
                        task_name.c_str(), final_loss, ckpt_path.c_str());
        } else if (eval_cmd->parsed()) {
            sems::Dataset dataset = sems::load_dataset(data_path, &config.frame);
            sems::SplitIndices split =
                sems::split_indices(static_cast<int>(dataset.frames.size()),
                                    dataset.header.master_seed);
            sems::EvalResult result;
            if (!ckpt_path.empty()) {
                sems::TrainedModel model = sems::load_model(ckpt_path, config.frame);
                result = sems::evaluate(model, dataset, split.test, snr_db, seed);
            } else {
                int budget = n_pilots > 0 ? n_pilots : config.train.n_pilots;
                result = sems::evaluate_estimator(method, dataset, split.test, budget, snr_db,
                                                  k_paths, seed);
            }
            for (const auto& [metric, value] : result.metrics)
                std::printf("%s=%.9g\n", metric.c_str(), value);
            if (!latent_out.empty() && !result.latents.empty())
                sems::write_latents_csv(result.latents, result.latent_labels, latent_out);
        } else if (sweep_cmd->parsed()) {
            sems::SweepSpec spec{family, config, out_dir, workers};
            auto fresh = sems::sweep(spec);
            std::printf("sweep %s: %zu new records in %s/records.csv\n", family.c_str(),
                        fresh.size(), out_dir.c_str());
        } else if (plot_cmd->parsed()) {
            std::filesystem::create_directories(out_dir);
            auto records = sems::parse_records_csv(records_path);
            auto written = sems::emit_plot(records, out_dir);
            if (!pattern_path.empty()) {
                sems::FrameConfig frame = config.frame;
                sems::PilotPattern pattern =
                    sems::read_pattern_csv(pattern_path, frame.n_slots(), frame.n_subcarriers());
                std::string out = out_dir + "/pattern_map.svg";
                sems::write_pattern_svg(pattern, out);
                written.push_back(out);
            }
            for (const auto& path : written) std::printf("wrote %s\n", path.c_str());
        } else if (selftest_cmd->parsed()) {
            int failures = sems::selftest();
            if (failures > 0) {
                std::fprintf(stderr, "selftest: %d failure(s)\n", failures);
                return 3;
            }
            std::printf("selftest: all checks passed\n");
        }
    } catch (const sems::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const sems::MissingArtifactError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const sems::NumericalError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
