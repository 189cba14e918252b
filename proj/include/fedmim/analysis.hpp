#pragma once

// Measurement and theory checks: local consistency, the auxiliary sequence
// u_t and its update identity, the increment recursion, geometric-rate
// fitting and finite-difference gradient checks.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fedmim/algorithms.hpp"
#include "fedmim/objectives.hpp"
#include "fedmim/vector.hpp"

namespace fedmim {

struct MetricRow {
    std::size_t round = 0;
    double loss = 0.0;
    double grad_norm_sq = 0.0;
    std::optional<double> grad_norm_sq_at_u;
    double consistency = 0.0;
    double delta_norm_sq = 0.0;
    std::optional<double> residual_delta;
    std::optional<double> residual_u;
    double eta_l = 0.0;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

// (1/S) sum_i ||x_{i,K} - x_{t+1}||^2 where x_{t+1} is the mean of the locals.
double local_consistency(std::span<const ParamVector> local_finals, const ParamVector& global_next);

// u_t = x_t - (K/A) sum_j (sum_{s>=j} alpha_s) delta_{t-j},  A = 1 - sum(alpha).
ParamVector compute_u(const ParamVector& x_t, std::span<const ParamVector> deltas, std::span<const double> alpha,
                      std::size_t K);

// ||u_next - (u_prev - (eta_l / S) grad_sum)||_inf
double verify_u_update(const ParamVector& u_prev, const ParamVector& u_next, const ParamVector& grad_sum,
                       double eta_l, std::size_t S, std::size_t K);

// ||delta_next - A * delta_tilde - sum_j alpha_j delta_{t-j}||_inf with
// delta_tilde = eta_l / (S K) * grad_sum.
double verify_delta_recursion(const ParamVector& delta_next, const ParamVector& grad_sum,
                              std::span<const ParamVector> deltas, std::span<const double> alpha, double eta_l,
                              std::size_t S, std::size_t K);

// exp(least-squares slope of log(value) against round). Needs >= 10 points,
// all values positive; the first `skip_fraction` of points is dropped.
double fit_geometric_rate(std::span<const std::pair<double, double>> series, double skip_fraction = 0.0);

// Clips values at `floor`, drops floored points and the first 10% of rounds,
// then fits. Returns nullopt if fewer than 10 points survive.
std::optional<double> fit_gap_rate(std::span<const std::pair<double, double>> series, double floor = 1e-16);

// max_i |central difference_i - g_i| / (|g_i| + 1e-8)
double finite_difference_check(const ClientObjective& obj, const ParamVector& x, double h);

struct RoundResiduals {
    double delta = 0.0;
    double u = 0.0;
    double delta_tilde_norm_sq = 0.0;
};

// Tracks u_t across rounds and checks both identities against the exact
// gradients each round consumed.
class LemmaVerifier {
public:
    LemmaVerifier(const MimHyper& hyper, const RoundState& initial);

    RoundResiduals observe(const RoundState& before, const RoundOutcome& outcome);

    const ParamVector& u() const { return u_; }
    // max_t ||delta_tilde_t||^2 / eta_l^2 so far
    double delta_tilde_ratio_max() const { return ratio_max_; }

private:
    std::vector<double> alpha_;
    std::size_t K_;
    ParamVector u_;
    double ratio_max_ = 0.0;
};

ParamVector sum_grad(std::span<const ClientResult> results);

}  // namespace fedmim
