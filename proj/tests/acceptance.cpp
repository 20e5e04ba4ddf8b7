// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "drgnn/cli.hpp"
#include "drgnn/verify_suite.hpp"

using namespace drgnn;
namespace fs = std::filesystem;

namespace {

// Tolerances and limits.
constexpr double grad_rel_tol = 1e-4;
constexpr double inner_gap_tol = 1e-3;
constexpr double closed_form_tol = 1e-3;
constexpr double limiting_rel_tol = 0.05;
constexpr double clean_rmse_slack = 0.25;
constexpr double c1_seconds = 10.0;
constexpr double c2_seconds = 30.0;
constexpr double c3_seconds = 30.0;
constexpr double c5_seconds = 300.0;
constexpr double c6_seconds = 1800.0;
constexpr std::uint64_t seeds[] = {1, 2, 3, 4, 5};

const char* experiment_config = R"(graph_kind = grid2d
n_nodes = 100
n_samples = 1000
n_features = 2
noise_sigma = 0.05
observed_fraction = 0.5
train_fraction = 0.8
seed = 1
n_layers = 2
k_taps = 2
hidden_features = 8
loss_kind = huber
huber_delta = 1.0
learning_rate = 0.001
batch_size = 32
epochs = 100
rho = 10
ascent_steps = 15
ascent_step_size = 0.1
gamma_floor = 1.0
)";

const char* pipeline_config = R"(graph_kind = grid2d
n_nodes = 16
n_samples = 60
n_features = 2
noise_sigma = 0.05
observed_fraction = 0.5
train_fraction = 0.8
seed = 11
n_layers = 2
k_taps = 2
hidden_features = 4
learning_rate = 0.01
batch_size = 8
epochs = 3
rho = 2
ascent_steps = 10
)";

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
    if (!ok) ++failures;
    std::printf("[%s] criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

void criterion_gradients() {
    const auto t0 = Clock::now();
    const auto c = verify::check_network_gradients(101, 20);
    const double secs = since(t0);
    report(1, "gradient oracle", c.value <= grad_rel_tol && secs < c1_seconds,
           fmt("max rel error %.3g <= %.0e; ", c.value, grad_rel_tol) + c.detail +
               fmt(", %.1f s < %.0f s", secs, c1_seconds));
}

void criterion_inner() {
    const auto t0 = Clock::now();
    const auto grid = verify::check_inner_vs_grid(202, 10);
    LossSpec squared;
    squared.kind = LossKind::squared;
    const auto r = inner_maximize(verify::identity_model(), verify::single_node_graph(),
                                  verify::scalar_sample(1.0, 0.0), 2.0, 0.0, squared, 200, 0.1);
    const double xi_err = std::abs(r.xi(0, 0) - 2.0), psi_err = std::abs(r.value - 2.0);
    const double secs = since(t0);
    const bool ok = grid.passed && grid.value <= inner_gap_tol && xi_err <= closed_form_tol &&
                    psi_err <= closed_form_tol && secs < c2_seconds;
    report(2, "inner-max oracle", ok,
           fmt("grid gap %.3g <= %.0e; closed form |xi*-2| %.2g, |psi*-2| %.2g", grid.value, inner_gap_tol, xi_err,
               psi_err) +
               "; " + grid.detail + fmt(", %.1f s < %.0f s", secs, c2_seconds));
}

void criterion_duality() {
    const auto t0 = Clock::now();
    const auto c = verify::check_weak_duality(303, 50);
    const double secs = since(t0);
    report(3, "weak duality", c.passed && secs < c3_seconds, c.detail + fmt(", %.1f s < %.0f s", secs, c3_seconds));
}

struct SeedResult {
    double clean[4] = {};
    double attacked[4] = {};
    TrainReport robust_report;
};

constexpr cli::TrainMode modes[] = {cli::TrainMode::robust, cli::TrainMode::erm, cli::TrainMode::mlp6,
                                    cli::TrainMode::mlp8};

SeedResult run_seed(std::uint64_t seed) {
    auto kv = KeyValueConfig::parse(experiment_config, "experiment");
    kv.set("seed", std::to_string(seed));
    const auto data = generate_dataset(datagen_config(kv));
    const auto cfg = robust_config(kv);
    const auto shape = model_shape(kv);
    const auto atk = cli::attack_options(kv);
    const auto train = data.train();
    const auto test = data.test();

    SeedResult r;
    for (std::size_t m = 0; m < 4; ++m) {
        const auto t = cli::train_model(modes[m], data.graph, train, cfg, shape);
        r.clean[m] = evaluate(t.model, data.graph, test).rmse_unobserved;
        const auto a = attack(t.model, data.graph, test, atk);
        r.attacked[m] = evaluate(t.model, data.graph, a.perturbed).rmse_unobserved;
        if (modes[m] == cli::TrainMode::robust) r.robust_report = t.report;
        std::printf("  seed %llu %-6s clean %.4f attacked %.4f (mean cost %.6g)\n",
                    static_cast<unsigned long long>(seed), cli::to_string(modes[m]).c_str(), r.clean[m], r.attacked[m],
                    a.mean_cost);
        std::fflush(stdout);
    }
    return r;
}

void criteria_training() {
    const auto t0 = Clock::now();
    double clean[4] = {}, attacked[4] = {};
    std::size_t traces = 0, nonmonotone = 0, steps = 0, violations = 0;
    for (auto seed : seeds) {
        const auto r = run_seed(seed);
        for (std::size_t m = 0; m < 4; ++m) {
            clean[m] += r.clean[m] / std::size(seeds);
            attacked[m] += r.attacked[m] / std::size(seeds);
        }
        traces += r.robust_report.traces_checked;
        nonmonotone += r.robust_report.nonmonotone_traces;
        steps += r.robust_report.steps;
        violations += r.robust_report.gamma_violations;
    }
    const double secs = since(t0);

    report(4, "monotone ascent and gamma feasibility", traces > 0 && nonmonotone == 0 && violations == 0,
           fmt("%.0f/%.0f traces nondecreasing, gamma > floor after %.0f/%.0f steps",
               static_cast<double>(traces - nonmonotone), static_cast<double>(traces),
               static_cast<double>(steps - violations), static_cast<double>(steps)));

    const bool beats = attacked[0] < attacked[1] && attacked[0] < attacked[2] && attacked[0] < attacked[3];
    const bool clean_ok = clean[0] <= (1.0 + clean_rmse_slack) * clean[1];
    report(6, "directional robustness", beats && clean_ok && secs < c6_seconds,
           fmt("attacked RMSE robust %.4f vs erm %.4f, mlp6 %.4f, mlp8 %.4f", attacked[0], attacked[1], attacked[2],
               attacked[3]) +
               fmt("; clean robust %.4f vs erm %.4f (limit x%.2f); %.0f s", clean[0], clean[1], 1.0 + clean_rmse_slack,
                   secs));
}

void criterion_limit() {
    const auto t0 = Clock::now();
    auto kv = KeyValueConfig::parse(experiment_config, "experiment");
    kv.set("rho", "0");
    kv.set("gamma_floor", "1000");
    kv.set("gamma_init", "2000");
    kv.set("ascent_step_size", "0.00025");
    const auto data = generate_dataset(datagen_config(kv));
    const auto cfg = robust_config(kv);
    const auto shape = model_shape(kv);
    const auto train = data.train();
    const auto robust = cli::train_model(cli::TrainMode::robust, data.graph, train, cfg, shape);
    const auto erm = cli::train_model(cli::TrainMode::erm, data.graph, train, cfg, shape);
    const double a = robust.report.final_train_loss, b = erm.report.final_train_loss;
    const double rel = std::abs(a - b) / b;
    const double secs = since(t0);
    report(5, "limiting equivalence", rel <= limiting_rel_tol && secs < c5_seconds,
           fmt("final train loss robust %.6g vs erm %.6g, rel gap %.3g <= %.2f", a, b, rel, limiting_rel_tol) +
               fmt(", %.0f s < %.0f s", secs, c5_seconds));
}

std::vector<std::pair<std::string, std::string>> pipeline(const fs::path& root) {
    fs::remove_all(root);
    fs::create_directories(root);
    const auto cfg = (root / "run.cfg").string();
    io::write_text(cfg, pipeline_config);
    auto call = [&](std::vector<std::string> args) {
        args.insert(args.begin(), "drgnn");
        std::vector<const char*> argv;
        for (const auto& s : args) argv.push_back(s.c_str());
        std::ostringstream out, err;
        const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        if (code != 0) throw std::runtime_error("pipeline step failed: " + err.str());
    };
    const auto p = [&](const std::string& rel) { return (root / rel).string(); };
    call({"gen", "--config", cfg, "--out", p("data")});
    for (const char* mode : {"robust", "erm"}) {
        const std::string m = mode;
        call({"train", "--config", cfg, "--data", p("data"), "--out", p(m), "--mode", m});
        call({"attack", "--config", cfg, "--checkpoint", p(m + "/checkpoint.json"), "--data", p("data"), "--out", p(m)});
        call({"eval", "--checkpoint", p(m + "/checkpoint.json"), "--data", p("data"), "--out", p(m), "--nodes", "0,1"});
        call({"eval", "--checkpoint", p(m + "/checkpoint.json"), "--data", p("data"), "--out", p(m), "--perturbed",
              p(m + "/perturbed.json")});
    }
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().filename() == "timing.csv") continue;
        files.emplace_back(fs::relative(e.path(), root).string(), io::read_text(e.path()));
    }
    std::sort(files.begin(), files.end());
    return files;
}

void criterion_determinism() {
    const auto base = fs::temp_directory_path() / "drgnn_acceptance";
    std::vector<std::pair<std::string, std::string>> a, b;
    try {
        a = pipeline(base / "a");
        b = pipeline(base / "b");
    } catch (const std::exception& e) {
        report(7, "determinism", false, e.what());
        return;
    }
    std::size_t differing = 0;
    const bool same_set = a.size() == b.size();
    for (std::size_t i = 0; same_set && i < a.size(); ++i)
        if (a[i] != b[i]) ++differing;
    fs::remove_all(base);
    report(7, "determinism", same_set && differing == 0 && a.size() >= 15,
           fmt("%.0f files compared byte for byte (checkpoints, reports, CSVs), %.0f differ",
               static_cast<double>(a.size()), static_cast<double>(differing)));
}

} // namespace

int main() {
    criterion_gradients();
    criterion_inner();
    criterion_duality();
    criterion_determinism();
    criterion_limit();
    criteria_training();
    std::printf("%s: %d criterion line(s) failed\n", failures ? "ACCEPTANCE FAILED" : "ACCEPTANCE PASSED", failures);
    return failures ? 1 : 0;
}
