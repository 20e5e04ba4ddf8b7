#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "drgnn/config.hpp"
#include "drgnn/datagen.hpp"
#include "drgnn/error.hpp"
#include "drgnn/experiment.hpp"
#include "drgnn/io.hpp"
#include "drgnn/nn.hpp"
#include "drgnn/robust.hpp"
#include "drgnn/verify_suite.hpp"

// Subcommands: gen, train, attack, eval, verify. Exit codes: 0 success,
// 2 usage/config/I-O error, 3 numerical failure.

namespace drgnn::cli {

namespace fs = std::filesystem;

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 2;
inline constexpr int exit_numerical = 3;

// ---------------------------------------------------------------------------
// gen

struct GenOptions {
    fs::path config;
    fs::path out;
    std::optional<std::uint64_t> seed;
};

inline io::DatasetManifest cmd_gen(const GenOptions& opt) {
    auto kv = KeyValueConfig::load(opt.config);
    if (opt.seed) kv.set("seed", std::to_string(*opt.seed));
    const auto cfg = datagen_config(kv);
    const auto data = generate_dataset(cfg);
    return io::save_dataset(opt.out, data, cfg);
}

// ---------------------------------------------------------------------------
// train

enum class TrainMode { robust, erm, mlp6, mlp8 };

inline TrainMode train_mode_from_string(const std::string& s) {
    if (s == "robust") return TrainMode::robust;
    if (s == "erm") return TrainMode::erm;
    if (s == "mlp6") return TrainMode::mlp6;
    if (s == "mlp8") return TrainMode::mlp8;
    throw ConfigError("unknown mode '" + s + "' (expected robust, erm, mlp6 or mlp8)");
}

inline std::string to_string(TrainMode m) {
    switch (m) {
    case TrainMode::robust: return "robust";
    case TrainMode::erm: return "erm";
    case TrainMode::mlp6: return "mlp6";
    case TrainMode::mlp8: return "mlp8";
    }
    return "?";
}

/// Layer stack for a mode. The MLP baselines use single-tap layers, which
/// never touch the graph.
inline std::vector<LayerSpec> layers_for(TrainMode mode, const ModelShape& shape, std::size_t n_features) {
    switch (mode) {
    case TrainMode::mlp6: return make_layer_specs(6, 1, n_features, shape.hidden_features, 1);
    case TrainMode::mlp8: return make_layer_specs(8, 1, n_features, shape.hidden_features, 1);
    default: return make_layer_specs(shape.n_layers, shape.k_taps, n_features, shape.hidden_features, 1);
    }
}

struct TrainOutcome {
    GnnModel model;
    TrainReport report;
    std::uint64_t seed = 0;
};

/// Training on in-memory data; the file-level command wraps this.
inline TrainOutcome train_model(TrainMode mode, const Graph& g, const std::vector<Sample>& train,
                                const RobustConfig& cfg, const ModelShape& shape) {
    if (train.empty()) throw InvalidArgument("train: empty training set");
    const auto specs = layers_for(mode, shape, static_cast<std::size_t>(train.front().features.cols()));
    const auto init = init_model(specs, cfg.seed);
    TrainOutcome out;
    out.seed = cfg.seed;
    if (mode == TrainMode::robust) {
        auto r = robust_train(train, g, init, cfg);
        out.model = std::move(r.model);
        out.report = std::move(r.report);
    } else {
        auto r = erm_train(train, g, init, cfg, to_string(mode));
        out.model = std::move(r.model);
        out.report = std::move(r.report);
    }
    return out;
}

inline nlohmann::json report_json(const TrainReport& r, std::uint64_t seed) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : r.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"objective", e.objective},
                          {"gamma", e.gamma},
                          {"ascent_improvement", e.ascent_improvement},
                          {"mean_cost", e.mean_cost}});
    return {{"mode", r.mode},
            {"seed", seed},
            {"gamma_floor", r.gamma_floor},
            {"final_gamma", r.final_gamma},
            {"final_train_loss", r.final_train_loss},
            {"steps", r.steps},
            {"traces_checked", r.traces_checked},
            {"nonmonotone_traces", r.nonmonotone_traces},
            {"gamma_violations", r.gamma_violations},
            {"checkpoint", "checkpoint.json"},
            {"epochs", epochs}};
}

inline std::string report_csv(const TrainReport& r) {
    std::string out = "epoch,objective,gamma,ascent_improvement,mean_cost\n";
    for (const auto& e : r.epochs)
        out += std::to_string(e.epoch) + "," + io::format_double(e.objective) + "," + io::format_double(e.gamma) + "," +
               io::format_double(e.ascent_improvement) + "," + io::format_double(e.mean_cost) + "\n";
    return out;
}

/// Wall-clock times live apart from the report so that reports stay
/// byte-identical across runs.
inline std::string timing_csv(const TrainReport& r) {
    std::string out = "epoch,seconds\n";
    for (const auto& e : r.epochs) out += std::to_string(e.epoch) + "," + std::to_string(e.seconds) + "\n";
    return out;
}

inline void save_training(const fs::path& dir, const TrainOutcome& t) {
    io::save_checkpoint(dir / "checkpoint.json", t.model, {t.seed, t.report.epochs.size()});
    io::write_text(dir / "report.json", report_json(t.report, t.seed).dump(2) + "\n");
    io::write_text(dir / "report.csv", report_csv(t.report));
    io::write_text(dir / "timing.csv", timing_csv(t.report));
}

struct TrainOptions {
    fs::path config;
    fs::path data;
    fs::path out;
    std::string mode = "robust";
    std::optional<std::uint64_t> seed;
    std::optional<double> rho;
};

inline TrainOutcome cmd_train(const TrainOptions& opt) {
    const auto mode = train_mode_from_string(opt.mode);
    auto kv = KeyValueConfig::load(opt.config);
    if (opt.seed) kv.set("seed", std::to_string(*opt.seed));
    if (opt.rho) kv.set("rho", io::format_double(*opt.rho));
    const auto cfg = robust_config(kv);
    const auto shape = model_shape(kv);
    const auto loaded = io::load_dataset(opt.data);
    auto out = train_model(mode, loaded.data.graph, loaded.data.train(), cfg, shape);
    save_training(opt.out, out);
    return out;
}

// ---------------------------------------------------------------------------
// attack

struct AttackCmdOptions {
    std::optional<fs::path> config;
    fs::path checkpoint;
    fs::path data;
    fs::path out;
    std::optional<double> rho;
    std::optional<double> gamma_attack;
};

inline AttackOptions attack_options(const KeyValueConfig& kv) {
    AttackOptions a;
    a.rho = kv.get_double("rho", a.rho);
    a.gamma = kv.get_optional_double("gamma_attack");
    a.steps = kv.get_uint("attack_steps", a.steps);
    a.step_size = kv.get_double("ascent_step_size", a.step_size);
    a.loss_spec = robust_config(kv).loss_spec;
    a.seed = kv.get_uint("seed", a.seed);
    a.threads = kv.get_uint("threads", a.threads);
    return a;
}

struct AttackOutcome {
    AttackResult attack;
    EvalResult eval;
};

inline AttackOutcome cmd_attack(const AttackCmdOptions& opt) {
    auto kv = opt.config ? KeyValueConfig::load(*opt.config) : KeyValueConfig{};
    if (opt.rho) kv.set("rho", io::format_double(*opt.rho));
    if (opt.gamma_attack) kv.set("gamma_attack", io::format_double(*opt.gamma_attack));
    const auto a = attack_options(kv);
    const auto ck = io::load_checkpoint(opt.checkpoint);
    const auto loaded = io::load_dataset(opt.data);
    const auto test = loaded.data.test();
    AttackOutcome out;
    out.attack = attack(ck.model, loaded.data.graph, test, a);
    out.eval = evaluate(ck.model, loaded.data.graph, out.attack.perturbed, a.threads);
    io::save_samples(opt.out / "perturbed.json", out.attack.perturbed);
    io::write_text(opt.out / "attack_metrics.csv", format_attack_csv(out.eval, out.attack.mean_cost));
    return out;
}

// ---------------------------------------------------------------------------
// eval

struct EvalCmdOptions {
    fs::path checkpoint;
    fs::path data;
    fs::path out;
    std::optional<fs::path> perturbed;
    std::vector<std::size_t> nodes;
};

inline EvalResult cmd_eval(const EvalCmdOptions& opt) {
    const auto ck = io::load_checkpoint(opt.checkpoint);
    const auto loaded = io::load_dataset(opt.data);
    const auto samples = opt.perturbed ? io::load_samples(*opt.perturbed) : loaded.data.test();
    for (auto node : opt.nodes)
        if (node >= loaded.data.graph.n_nodes())
            throw InvalidArgument("eval: node " + std::to_string(node) + " is out of range");
    auto r = evaluate(ck.model, loaded.data.graph, samples);
    const std::string stem = opt.perturbed ? "metrics_perturbed" : "metrics";
    io::write_text(opt.out / (stem + ".csv"), format_eval_csv(r));
    if (!opt.nodes.empty()) io::write_text(opt.out / (stem + "_series.csv"), format_series_csv(r, opt.nodes));
    return r;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyOptions {
    std::optional<fs::path> out;
    std::uint64_t seed = 2021;
};

inline verify::SuiteReport cmd_verify(const VerifyOptions& opt, std::ostream& log) {
    auto report = verify::run_suite(opt.seed);
    log << verify::format_table(report);
    if (opt.out) io::write_text(*opt.out / "verify_report.json", verify::to_json(report).dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Distributionally robust graph neural networks for node regression"};
    app.require_subcommand(1);

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset");
    gen_cmd->add_option("--config", gen.config, "Configuration file")->required();
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--seed", gen.seed, "Override the configured seed");

    TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--config", train.config, "Configuration file")->required();
    train_cmd->add_option("--data", train.data, "Dataset directory")->required();
    train_cmd->add_option("--out", train.out, "Output directory")->required();
    train_cmd->add_option("--mode", train.mode, "robust | erm | mlp6 | mlp8");
    train_cmd->add_option("--seed", train.seed, "Override the configured seed");
    train_cmd->add_option("--rho", train.rho, "Override the Wasserstein radius");

    AttackCmdOptions atk;
    auto* attack_cmd = app.add_subcommand("attack", "Worst-case perturbation of the test split");
    attack_cmd->add_option("--config", atk.config, "Configuration file (loss, steps)");
    attack_cmd->add_option("--checkpoint", atk.checkpoint, "Trained checkpoint")->required();
    attack_cmd->add_option("--data", atk.data, "Dataset directory")->required();
    attack_cmd->add_option("--out", atk.out, "Output directory")->required();
    attack_cmd->add_option("--rho", atk.rho, "Mean transport budget");
    attack_cmd->add_option("--gamma-attack", atk.gamma_attack, "Penalty used by the attack ascent");

    EvalCmdOptions ev;
    std::string perturbed;
    auto* eval_cmd = app.add_subcommand("eval", "Per-node predictions and RMSE on the test split");
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "Trained checkpoint")->required();
    eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
    eval_cmd->add_option("--out", ev.out, "Output directory")->required();
    eval_cmd->add_option("--perturbed", perturbed, "Perturbed samples from `attack`");
    eval_cmd->add_option("--nodes", ev.nodes, "Nodes to export as series")->delimiter(',');

    VerifyOptions ver;
    std::string verify_out;
    auto* verify_cmd = app.add_subcommand("verify", "Run the numerical oracle suite");
    verify_cmd->add_option("--out", verify_out, "Directory for verify_report.json");
    verify_cmd->add_option("--seed", ver.seed, "Seed for random instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*gen_cmd) {
            const auto m = cmd_gen(gen);
            out << "wrote " << m.n_samples << " samples (" << m.train_indices.size() << " train / "
                << m.test_indices.size() << " test) to " << gen.out.string() << "\n";
        } else if (*train_cmd) {
            const auto t = cmd_train(train);
            out << "mode " << t.report.mode << ": final train loss " << t.report.final_train_loss;
            if (t.report.mode == "robust") out << ", gamma " << t.report.final_gamma;
            out << "\n";
        } else if (*attack_cmd) {
            const auto a = cmd_attack(atk);
            out << "attacked " << a.attack.perturbed.size() << " samples, mean cost " << a.attack.mean_cost
                << ", RMSE_unobserved " << a.eval.rmse_unobserved << "\n";
        } else if (*eval_cmd) {
            if (!perturbed.empty()) ev.perturbed = perturbed;
            const auto r = cmd_eval(ev);
            out << "RMSE_unobserved " << r.rmse_unobserved << "\n";
        } else if (*verify_cmd) {
            if (!verify_out.empty()) ver.out = verify_out;
            return cmd_verify(ver, out).all_passed() ? exit_ok : exit_numerical;
        }
    } catch (const NumericalFailure& e) {
        err << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    }
    return exit_ok;
}

} // namespace drgnn::cli
