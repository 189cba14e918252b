// fedmim: run, sweep and verify federated training experiments from a config file.
//
// Exit codes: 0 ok, 1 I/O or config error, 2 divergence, 3 verification failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedmim/analysis.hpp"
#include "fedmim/config.hpp"
#include "fedmim/simd.hpp"
#include "fedmim/simulator.hpp"

namespace fs = std::filesystem;
using namespace fedmim;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kDiverged = 2;
constexpr int kVerifyFailed = 3;

constexpr double kResidualTolerance = 1e-9;

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    double corrupt_delta = 0.0;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config, "Config file ([problem], [algorithm], [run])")->required();
    cmd->add_option("-s,--set", c.overrides, "Override, key=value or section.key=value (repeatable)");
    cmd->add_option("-o,--out", c.out, "Output directory (default: [run] out_dir)");
    cmd->add_option("--seed", c.seed, "Master seed override");
    cmd->add_option("-j,--threads", c.threads, "Worker threads for client updates");
}

RunConfig load(const Common& c) {
    std::vector<std::string> overrides = c.overrides;
    if (c.seed) {
        overrides.push_back("seed=" + std::to_string(*c.seed));
    }
    if (c.threads) {
        overrides.push_back("threads=" + std::to_string(*c.threads));
    }
    if (!c.out.empty()) {
        overrides.push_back("out_dir=" + c.out);
    }
    RunConfig cfg = parse_config(c.config, overrides);
    cfg.run.delta_fault = c.corrupt_delta;
    return cfg;
}

void print_summary(const RunRecord& rec) {
    std::printf("status: %s\n", rec.status.c_str());
    std::printf("final_loss: %.17g\n", rec.final_loss);
    if (!rec.rows.empty()) {
        std::printf("final grad_norm_sq: %.17g\n", rec.rows.back().grad_norm_sq);
    }
    if (rec.eta_bound) {
        std::printf("eta_l bound: %.17g (%s)\n", rec.eta_bound->value,
                    rec.eta_bound->satisfied ? "satisfied" : "exceeded");
        if (!rec.eta_bound->satisfied) {
            std::fprintf(stderr, "warning: %s\n", rec.eta_bound->warning.c_str());
        }
    }
}

int write_outputs(const RunRecord& rec) {
    const fs::path dir = rec.config.run.out_dir;
    write_metrics_csv(dir / "metrics.csv", rec.rows);
    write_run_json(dir / "run.json", rec);
    return rec.diverged() ? kDiverged : kOk;
}

int cmd_run(const Common& c) {
    const RunConfig cfg = load(c);
    const RunRecord rec = run_training(cfg);
    print_summary(rec);
    return write_outputs(rec);
}

int cmd_verify(const Common& c) {
    RunConfig cfg = load(c);
    if (cfg.algorithm.name != AlgorithmKind::fedmim) {
        throw ConfigError("verify requires name=fedmim");
    }
    cfg.run.verify = true;
    const RunRecord rec = run_training(cfg);
    print_summary(rec);
    const int written = write_outputs(rec);
    if (written != kOk) {
        return written;
    }
    const double rd = rec.max_residual_delta.value_or(0.0);
    const double ru = rec.max_residual_u.value_or(0.0);
    std::printf("max residual_delta: %.3e\n", rd);
    std::printf("max residual_u: %.3e\n", ru);
    if (rec.c_proxy) {
        std::printf("max ||delta_tilde||^2 / eta_l^2: %.6g\n", *rec.c_proxy);
    }
    if (!(rd <= kResidualTolerance && ru <= kResidualTolerance)) {
        std::fprintf(stderr, "lemma residual exceeded (tolerance %.0e)\n", kResidualTolerance);
        return kVerifyFailed;
    }
    std::printf("lemma residuals within %.0e\n", kResidualTolerance);
    return kOk;
}

std::vector<std::string> split_values(const std::vector<std::string>& raw) {
    std::vector<std::string> out;
    for (const auto& r : raw) {
        std::stringstream ss(r);
        std::string item;
        while (std::getline(ss, item, ';')) {
            if (!item.empty()) {
                out.push_back(item);
            }
        }
    }
    return out;
}

int cmd_sweep(const Common& c, const std::string& axis, const std::vector<std::string>& raw_values) {
    const RunConfig cfg = load(c);
    const auto values = split_values(raw_values);
    const auto runs = run_sweep(cfg, axis, values);
    const fs::path dir = cfg.run.out_dir;
    write_sweep_csv(dir / "sweep.csv", axis, runs);
    nlohmann::json report = nlohmann::json::array();
    bool any_diverged = false;
    for (const auto& run : runs) {
        nlohmann::json j = run_report(run.record);
        j["axis"] = axis;
        j["value"] = run.value;
        report.push_back(std::move(j));
        any_diverged = any_diverged || run.record.diverged();
        const auto hit = rounds_to_threshold(run.record, 1e-4);
        std::printf("%s=%s: %s, final_loss %.6g, rounds to grad_norm_sq<=1e-4: %s\n", axis.c_str(),
                    run.value.c_str(), run.record.status.c_str(), run.record.final_loss,
                    hit ? std::to_string(*hit).c_str() : "not reached");
    }
    fs::create_directories(dir);
    std::FILE* f = std::fopen((dir / "sweep.json").c_str(), "wb");
    if (!f) {
        throw std::runtime_error((dir / "sweep.json").string() + ": cannot open for writing");
    }
    const std::string text = report.dump(2) + "\n";
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
    return any_diverged ? kDiverged : kOk;
}

int cmd_gradcheck(const Common& c, double h, double tol, double spread) {
    const RunConfig cfg = load(c);
    const FederatedProblem problem = build_problem(cfg.problem, cfg.run.seed);
    RngStream rng(cfg.run.seed, {0x9c});
    double worst = 0.0;
    for (std::size_t i = 0; i < problem.num_clients(); ++i) {
        ParamVector x = problem.initial_point;
        for (double& v : x.values()) {
            v += spread * rng.normal();
        }
        const double err = finite_difference_check(*problem.clients[i], x, h);
        std::printf("client %zu: max relative error %.3e\n", i, err);
        worst = std::max(worst, err);
    }
    std::printf("worst: %.3e (tolerance %.1e)\n", worst, tol);
    return worst <= tol ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated optimisation with inertial momentum: simulator and checks"};
    app.require_subcommand(1);

    Common run_opts;
    Common verify_opts;
    Common sweep_opts;
    Common grad_opts;

    auto* run = app.add_subcommand("run", "Train once; writes metrics.csv and run.json");
    add_common(run, run_opts);
    run->add_option("--corrupt-delta", run_opts.corrupt_delta, "Test hook: offset added to stored increments");

    auto* verify = app.add_subcommand("verify", "Train FedMIM with the lemma residual checks");
    add_common(verify, verify_opts);
    verify->add_option("--corrupt-delta", verify_opts.corrupt_delta,
                       "Test hook: offset added to stored increments");

    std::string axis;
    std::vector<std::string> values;
    auto* sweep = app.add_subcommand("sweep", "Run one config across several values of one parameter");
    add_common(sweep, sweep_opts);
    sweep->add_option("--axis", axis, "S, K, eta_l, concentration, alpha, beta, alpha_beta, algorithm or seed")
        ->required();
    sweep->add_option("--values", values, "Values, ';'-separated or repeated")->required();

    double h = 1e-6;
    double tol = 1e-4;
    double spread = 0.1;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every client's gradient");
    add_common(grad, grad_opts);
    grad->add_option("--step", h, "Central-difference step");
    grad->add_option("--tol", tol, "Maximum accepted relative error");
    grad->add_option("--spread", spread, "Std-dev of the random offset from the initial point");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) {
            return cmd_run(run_opts);
        }
        if (*verify) {
            return cmd_verify(verify_opts);
        }
        if (*sweep) {
            return cmd_sweep(sweep_opts, axis, values);
        }
        return cmd_gradcheck(grad_opts, h, tol, spread);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kConfigError;
    }
}
