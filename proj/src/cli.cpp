#include "lgvq/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "lgvq/checkpoint.hpp"
#include "lgvq/error.hpp"
#include "lgvq/evaluation.hpp"
#include "lgvq/kernels.hpp"

namespace lgvq::cli {
namespace {

struct Options {
    std::string config;
    std::vector<std::string> sets;
    std::string out = "lgvq_out";
    std::optional<std::uint64_t> seed;
    std::string checkpoint;
    std::string manifest;
};

Overrides collect_overrides(const Options& o) {
    Overrides ov;
    for (const auto& s : o.sets) ov.push_back(parse_override(s));
    if (o.seed) ov.emplace_back("seed", std::to_string(*o.seed));
    if (!o.manifest.empty()) ov.emplace_back("manifest", o.manifest);
    return ov;
}

// Base text is the --config file, else the checkpoint's stored config, else
// defaults.
TrainConfig resolve_config(const Options& o) {
    const auto ov = collect_overrides(o);
    if (!o.config.empty()) return load_config(o.config, ov);
    if (!o.checkpoint.empty()) return parse_config(to_text(checkpoint::read_config(o.checkpoint)), ov);
    return parse_config("", ov);
}

void apply_threads(const TrainConfig& c) {
    if (c.threads > 0) kernels::set_num_threads(c.threads);
}

std::shared_ptr<const Dataset> load_data(const TrainConfig& c) {
    if (c.manifest.empty()) throw ConfigError("no manifest: set manifest in the config or pass --manifest");
    return std::make_shared<const Dataset>(Dataset::load(c.manifest, c.image_size));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
}

int do_train(const Options& o, std::ostream& out) {
    const TrainConfig config = resolve_config(o);
    apply_threads(config);
    auto data = load_data(config);
    std::filesystem::create_directories(o.out);
    save_config(std::filesystem::path(o.out) / "config.cfg", config);

    std::unique_ptr<Trainer> trainer;
    if (!o.checkpoint.empty()) {
        trainer = checkpoint::restore(o.checkpoint, data, &config);
        out << "resumed from " << o.checkpoint << " at step " << trainer->steps_done() << "\n";
    } else {
        std::filesystem::remove(std::filesystem::path(o.out) / "metrics.jsonl");
        trainer = std::make_unique<Trainer>(config, data, resolve_vocabulary(config, *data));
    }
    train_loop(*trainer, o.out, out);
    return kOk;
}

checkpoint::LoadedModel load_for_eval(const Options& o, TrainConfig& config) {
    if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    config = resolve_config(o);
    apply_threads(config);
    return checkpoint::load_model(o.checkpoint, &config);
}

int do_eval(const Options& o, std::ostream& out) {
    TrainConfig config;
    auto loaded = load_for_eval(o, config);
    const auto data = load_data(config);
    const auto report = eval::evaluate(*loaded.model, *data, loaded.step);
    std::filesystem::create_directories(o.out);
    save_config(std::filesystem::path(o.out) / "config.cfg", config);
    write_text(std::filesystem::path(o.out) / "eval_report.json", report.to_json() + "\n");
    write_text(std::filesystem::path(o.out) / "eval_metrics.jsonl", report.to_jsonl());
    out << report.to_json() << "\n";
    return kOk;
}

int do_diagnose(const Options& o, std::ostream& out) {
    TrainConfig config;
    auto loaded = load_for_eval(o, config);
    const auto data = load_data(config);
    std::filesystem::create_directories(o.out);
    save_config(std::filesystem::path(o.out) / "config.cfg", config);
    eval::write_diagnostics(*loaded.model, *data, o.out);
    out << "diagnostics written to " << o.out << "\n";
    return kOk;
}

int do_dump(const Options& o, std::ostream& out) {
    TrainConfig config;
    auto loaded = load_for_eval(o, config);
    std::filesystem::create_directories(o.out);
    save_config(std::filesystem::path(o.out) / "config.cfg", config);
    eval::dump_codebook_images(*loaded.model, o.out);
    out << loaded.model->codebook.size() << " codebook images written to " << o.out << "\n";
    return kOk;
}

}  // namespace

void train_loop(Trainer& trainer, const std::filesystem::path& out_dir, std::ostream& log) {
    const auto& config = trainer.config();
    std::filesystem::create_directories(out_dir);
    std::ofstream metrics(out_dir / "metrics.jsonl", std::ios::app);
    if (!metrics) throw DataError("cannot open " + (out_dir / "metrics.jsonl").string());
    const auto fingerprint = trainer.model().text_encoder->fingerprint();

    while (trainer.steps_done() < config.steps) {
        StepMetrics m;
        try {
            m = trainer.step();
        } catch (const DivergenceError&) {
            checkpoint::save(out_dir / "last_good.ckpt", trainer);
            throw;
        }
        metrics << m.to_json_line() << "\n" << std::flush;
        if (m.step == 1 || m.step % 10 == 0 || m.step == config.steps) {
            log << "step " << m.step << " total " << m.losses.total << " vq " << m.losses.vq << " usage "
                << m.codebook_usage_batch << "\n";
        }
        if (config.checkpoint_every > 0 && m.step % config.checkpoint_every == 0) {
            checkpoint::save(out_dir / ("step_" + std::to_string(m.step) + ".ckpt"), trainer);
        }
    }
    if (trainer.model().text_encoder->fingerprint() != fingerprint) {
        throw Error("text encoder changed during training");
    }
    checkpoint::save(out_dir / "final.ckpt", trainer);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Language-guided VQ codebook learning"};
    app.require_subcommand(1, 1);
    Options o;
    app.add_option("--config", o.config, "config file (key = value lines)");
    app.add_option("--set", o.sets, "override KEY=VALUE, repeatable")->allow_extra_args(false);
    app.add_option("--out", o.out, "output directory");
    app.add_option("--seed", o.seed, "top-level seed");
    app.add_option("--checkpoint", o.checkpoint, "checkpoint to resume or evaluate");
    app.add_option("--manifest", o.manifest, "image-caption manifest (JSONL)");
    auto* train = app.add_subcommand("train", "train a model")->fallthrough();
    auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint")->fallthrough();
    auto* diag = app.add_subcommand("diagnose", "similarity heatmaps and usage histogram")->fallthrough();
    auto* dump = app.add_subcommand("dump-codebook", "decode every codebook entry to an image")->fallthrough();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return kConfigError;
    }

    try {
        if (train->parsed()) return do_train(o, out);
        if (evalc->parsed()) return do_eval(o, out);
        if (diag->parsed()) return do_diagnose(o, out);
        if (dump->parsed()) return do_dump(o, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const DivergenceError& e) {
        err << "divergence: " << e.what() << "\n";
        return kDivergence;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const CheckpointError& e) {
        err << "checkpoint error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "io error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}

}  // namespace lgvq::cli
