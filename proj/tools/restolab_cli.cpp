// Command-line entry point: synthesize data, train, evaluate, run ablations,
// and run the feature-robustness probe. Exit codes: 0 success, 1 usage/config
// error, 2 runtime failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "restolab/config.hpp"
#include "restolab/image_io.hpp"
#include "restolab/metrics.hpp"
#include "restolab/rng.hpp"

namespace fs = std::filesystem;
using namespace restolab;

namespace {

// Exclusive output-directory lock; concurrent commands must target distinct
// directories.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        fs::create_directories(dir);
        if (fs::exists(path_))
            throw std::runtime_error("output dir locked by another run: " + path_.string());
        std::ofstream(path_) << "locked\n";
    }
    ~DirLock() { std::error_code ec; fs::remove(path_, ec); }

private:
    fs::path path_;
};

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::string& config_path) {
    const fs::path out(cfg.output_dir());
    fs::create_directories(out);
    nlohmann::json m;
    m["command"] = command;
    m["config_path"] = config_path;
    m["resolved_config_hash"] = cfg.hash();
    m["output_dir"] = out.string();
    m["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    std::ofstream(out / "manifest.json") << m.dump(2) << "\n";
    std::ofstream(out / "resolved_config.txt") << cfg.resolved();
}

int cmd_synth(const RunConfig& cfg) {
    const auto training = cfg.training();
    const fs::path out(cfg.output_dir());
    const auto stems = list_png_stems(cfg.clean_dir());
    uint64_t idx = 0;
    for (const auto& spec : training.task_mix) {
        const fs::path subdir = out / to_string(spec.kind);
        fs::create_directories(subdir);
        for (const auto& stem : stems) {
            const ImageTensor clean =
                load_png((fs::path(cfg.clean_dir()) / (stem + ".png")).string());
            DegradationSpec s = spec;
            s.seed = derive_seed(training.seed, "synth:" + std::to_string(idx++));
            const ImageTensor degraded = apply_degradation(clean, s);
            save_png((subdir / (stem + "_clean.png")).string(), clean);
            save_png((subdir / (stem + "_" + to_string(spec.kind) + ".png")).string(),
                     degraded);
        }
    }
    std::cout << "synth: wrote " << training.task_mix.size() << " task dirs under "
              << out << "\n";
    return 0;
}

std::vector<SamplePair> build_eval_pairs(const RunConfig& cfg,
                                         const TrainingConfig& training) {
    std::vector<SamplePair> pairs;
    uint64_t idx = 0;
    for (const auto& img : load_png_dir(cfg.eval_dir()))
        for (const auto& spec : training.task_mix) {
            SamplePair p;
            p.clean = img;
            p.spec = spec;
            p.spec.seed = derive_seed(training.seed, "cli_eval:" + std::to_string(idx++));
            p.degraded = apply_degradation(p.clean, p.spec);
            pairs.push_back(std::move(p));
        }
    return pairs;
}

void write_metrics(const fs::path& out, const std::vector<MetricRow>& rows) {
    std::ofstream csv(out / "metrics.csv");
    csv << "task,psnr,ssim,count\n";
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
        csv << r.task << "," << r.psnr << "," << r.ssim << "," << r.count << "\n";
        j.push_back({{"task", r.task}, {"psnr", r.psnr}, {"ssim", r.ssim}, {"count", r.count}});
    }
    std::ofstream(out / "metrics.json") << j.dump(2) << "\n";
}

int cmd_train(const RunConfig& cfg) {
    TrainingConfig training = cfg.training();
    const fs::path out(cfg.output_dir());
    const auto images = load_png_dir(cfg.clean_dir());
    Backbone backbone(training.backbone);
    training.net.guidance_channels = backbone.width();
    RestorationModel model(training.net, training.seed);
    PatchDataset dataset(images, training.task_mix, training.patch_size, training.seed);
    RunLog log = train(training, dataset, model, backbone);
    save_checkpoint((out / "checkpoint.bin").string(), model, training, training.steps);
    std::ofstream(out / "train_log.csv") << log.steps_csv();

    const auto pairs = build_eval_pairs(cfg, training);
    write_metrics(out, evaluate(model, pairs, backbone));
    std::cout << "train: " << training.steps << " steps, checkpoint at "
              << (out / "checkpoint.bin") << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint) {
    TrainingConfig training = cfg.training();
    const fs::path out(cfg.output_dir());
    Backbone backbone(training.backbone);
    training.net.guidance_channels = backbone.width();
    RestorationModel model(training.net, training.seed);
    if (!checkpoint.empty()) load_checkpoint(checkpoint, model);
    const auto pairs = build_eval_pairs(cfg, training);
    write_metrics(out, evaluate(model, pairs, backbone));
    std::cout << "eval: " << pairs.size() << " pairs, metrics under " << out << "\n";
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& which) {
    TrainingConfig training = cfg.training();
    const fs::path out(cfg.output_dir());
    const auto train_images = load_png_dir(cfg.clean_dir());
    const auto eval_images = load_png_dir(cfg.eval_dir());
    if (which == "layers") {
        const auto rows = ablation_layers(training, train_images, eval_images);
        std::ofstream(out / "ablation_layers.csv") << ablation_layers_csv(rows);
        std::cout << ablation_layers_csv(rows);
    } else if (which == "tasks") {
        const auto rows = ablation_task_count(training, train_images, eval_images);
        std::ofstream(out / "ablation_tasks.csv") << ablation_tasks_csv(rows);
        std::cout << ablation_tasks_csv(rows);
    } else {
        throw CLI::ValidationError("--which must be 'layers' or 'tasks'");
    }
    return 0;
}

int cmd_probe(const RunConfig& cfg) {
    const TrainingConfig training = cfg.training();
    const fs::path out(cfg.output_dir());
    const auto images = load_png_dir(cfg.clean_dir());
    const auto sigmas = cfg.probe_sigmas();
    const StabilityReport report =
        stability_probe(images, sigmas, training.backbone, training.seed);
    std::ofstream(out / "probe.csv") << report.to_csv();
    std::ofstream(out / "probe.json") << report.to_json() << "\n";

    // PCA projections of the deep tap for the clean and noisiest versions of
    // the first image
    Backbone backbone(training.backbone);
    const ImageTensor& first = images.front();
    const double sigma_max = *std::max_element(sigmas.begin(), sigmas.end());
    const ImageTensor noisy =
        add_gaussian_noise(first, sigma_max, derive_seed(training.seed, "probe_pca"));
    save_png((out / "pca_clean.png").string(), pca_project(backbone.extract_taps(first).deep));
    save_png((out / "pca_degraded.png").string(),
             pca_project(backbone.extract_taps(noisy).deep));
    std::cout << report.to_csv() << report.to_json() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-task image restoration lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string checkpoint, which = "layers";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "config file")->required();
        sub->add_option("--set", overrides, "override config keys (section.key=value)");
        sub->add_option("-o,--output", "override run.output_dir");
    };
    CLI::App* synth = app.add_subcommand("synth", "synthesize degraded/clean pairs");
    CLI::App* train_cmd = app.add_subcommand("train", "train a restoration model");
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    CLI::App* ablate = app.add_subcommand("ablate", "run ablation harnesses");
    CLI::App* probe = app.add_subcommand("probe", "feature robustness probe");
    for (CLI::App* sub : {synth, train_cmd, eval_cmd, ablate, probe}) add_common(sub);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
    ablate->add_option("--which", which, "layers|tasks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg = RunConfig::from_file(config_path);
        for (const auto& ov : overrides) {
            const auto eq = ov.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("--set expects section.key=value, got " + ov);
            cfg.set(ov.substr(0, eq), ov.substr(eq + 1));
        }
        for (CLI::App* sub : {synth, train_cmd, eval_cmd, ablate, probe}) {
            if (sub->parsed() && sub->count("--output"))
                cfg.set("run.output_dir", sub->get_option("--output")->as<std::string>());
        }
        cfg.training().validate(); // surface config errors before any work

        DirLock lock(cfg.output_dir());
        const std::string command = app.get_subcommands().front()->get_name();
        write_manifest(cfg, command, config_path);

        if (synth->parsed()) return cmd_synth(cfg);
        if (train_cmd->parsed()) return cmd_train(cfg);
        if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint);
        if (ablate->parsed()) return cmd_ablate(cfg, which);
        if (probe->parsed()) return cmd_probe(cfg);
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
