#pragma once

// Round-by-round orchestration: client sampling, local updates on a worker
// pool, full-batch measurement outside the training path, and the metric
// table / run report writers.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedmim/algorithms.hpp"
#include "fedmim/analysis.hpp"
#include "fedmim/config.hpp"
#include "fedmim/objectives.hpp"
#include "fedmim/rng.hpp"

namespace fedmim {

FederatedProblem build_problem(const ProblemConfig& cfg, std::uint64_t seed);

// S distinct ids drawn uniformly from {0..N-1}, returned sorted.
std::vector<std::size_t> sample_clients(std::size_t N, std::size_t S, RngStream& rng);

struct RunRecord {
    RunConfig config;
    std::vector<MetricRow> rows;
    ParamVector final_model;
    std::string status = "completed";
    std::optional<std::size_t> diverged_round;
    std::vector<double> wall_ms;  // per executed round
    double wall_ms_total = 0.0;
    std::optional<EtaBound> eta_bound;
    std::optional<double> f_star;
    double final_loss = 0.0;
    std::optional<double> max_residual_delta;
    std::optional<double> max_residual_u;
    std::optional<double> c_proxy;
    std::vector<std::size_t> selection_counts;

    bool diverged() const { return diverged_round.has_value(); }
};

RunRecord run_training(const RunConfig& cfg);

// Same as above on a prebuilt problem (lets callers reuse one problem).
RunRecord run_training(const RunConfig& cfg, const FederatedProblem& problem);

struct SweepRun {
    std::string value;
    RunRecord record;
};

// Sweepable axes: S, K, eta_l, concentration, alpha, beta, alpha_beta
// ("a0,a1|b0,b1"), algorithm, seed. Unknown axis -> ConfigError.
std::vector<SweepRun> run_sweep(const RunConfig& base, const std::string& axis, const std::vector<std::string>& values);

// Rounds at which grad_norm_sq first drops to `threshold`, if ever.
std::optional<std::size_t> rounds_to_threshold(const RunRecord& record, double threshold);

inline constexpr const char* kMetricsHeader =
    "round,loss,grad_norm_sq,grad_norm_sq_at_u,consistency,delta_norm_sq,residual_delta,residual_u,eta_l";

std::string format_metrics_csv(const std::vector<MetricRow>& rows);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> parse_metrics_csv(const std::string& text);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

// Combined sweep table: axis,value followed by the metric columns.
void write_sweep_csv(const std::filesystem::path& path, const std::string& axis, const std::vector<SweepRun>& runs);

nlohmann::json run_report(const RunRecord& record);
void write_run_json(const std::filesystem::path& path, const RunRecord& record);

}  // namespace fedmim
