#pragma once

// Client and server update rules for FedMIM and the FedAvg, FedCM, SCAFFOLD
// and FedAdam baselines, written as pure transitions RoundState -> RoundState.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fedmim/executor.hpp"
#include "fedmim/objectives.hpp"
#include "fedmim/rng.hpp"
#include "fedmim/vector.hpp"

namespace fedmim {

enum class AlgorithmKind { fedavg, fedmim, fedcm, scaffold, fedadam };

std::string_view to_string(AlgorithmKind kind);
std::optional<AlgorithmKind> parse_algorithm(std::string_view name);

// Local-training hyper-parameters shared by every algorithm. alpha/beta are
// the inertial weights over the last J global increments (FedMIM only).
struct MimHyper {
    std::vector<double> alpha{0.6, 0.3};
    std::vector<double> beta{0.9, 0.1};
    double eta_l = 0.1;
    std::size_t K = 10;
    std::size_t S = 1;
    std::size_t batch_size = 10;
    double lr_decay = 0.998;

    std::size_t J() const { return std::max(alpha.size(), beta.size()); }
    double alpha_at(std::size_t j) const { return j < alpha.size() ? alpha[j] : 0.0; }
    double beta_at(std::size_t j) const { return j < beta.size() ? beta[j] : 0.0; }
    // A = 1 - sum(alpha)
    double A() const;
    // rho = sum(beta)
    double rho() const;
    // Scaled learning rate K * eta_l.
    double eta() const { return static_cast<double>(K) * eta_l; }

    // Throws std::invalid_argument on any violated constraint.
    void validate(std::size_t n_clients) const;
};

struct BaselineHyper {
    double fedcm_alpha = 0.1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    double adam_eps = 1e-3;
    double global_lr = 0.1;  // FedAdam server step; the others average with 1.0
};

struct ScaffoldState {
    ParamVector server_c;
    std::vector<ParamVector> client_c;
};

struct AdamState {
    ParamVector m;
    ParamVector v;
    std::size_t steps = 0;
};

struct RoundState {
    ParamVector x;
    // delta_history[j] = delta_{t-j}; pre-history slots are zero.
    std::deque<ParamVector> delta_history;
    std::size_t round = 0;
    double eta_l = 0.0;
    std::variant<std::monostate, ScaffoldState, AdamState> aux;
};

RoundState initial_state(AlgorithmKind kind, const ParamVector& x0, const MimHyper& hyper, std::size_t n_clients);

struct ClientResult {
    std::size_t client_id = 0;
    ParamVector x_final;
    // Sum over the K local steps of the stochastic gradients actually applied.
    ParamVector grad_sum;
    std::optional<ParamVector> aux_update;
};

// Results are ordered by ascending client id.
struct RoundOutcome {
    RoundState state;
    std::vector<ClientResult> clients;
};

struct RoundContext {
    const FederatedProblem& problem;
    std::span<const std::size_t> sampled;
    std::uint64_t seed = 0;
    Executor executor{1};
    // Test hook: added to every component of the newly stored increment.
    double delta_fault = 0.0;
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& objective, std::size_t client, std::size_t iteration);

    std::size_t client() const { return client_; }
    std::size_t iteration() const { return iteration_; }

private:
    std::size_t client_;
    std::size_t iteration_;
};

// Minibatch index stream: shuffles once per epoch and walks through without
// replacement; the last batch of an epoch may be short. Full batch when
// batch_size >= n.
class EpochSampler {
public:
    EpochSampler(std::size_t n, std::size_t batch_size, RngStream& rng);
    std::span<const std::size_t> next();

private:
    std::size_t n_;
    std::size_t batch_;
    RngStream& rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    std::vector<std::size_t> scratch_;
};

// -(x_t - x_prev) / K
ParamVector compute_delta(const ParamVector& x_t, const ParamVector& x_prev, std::size_t K);

// K inertial local steps from x_start with the round's fixed increments
// (deltas[j] = delta_{t-j}):
//   y1 = x_k - sum_j alpha_j delta_{t-j}
//   y2 = x_k - sum_j beta_j delta_{t-j}
//   x_{k+1} = y1 - A * eta_l * g(y2)
ClientResult mim_local_update(const ParamVector& x_start, std::span<const ParamVector> deltas, const MimHyper& hyper,
                              const ClientObjective& obj, RngStream& rng, std::size_t client_id = 0);

RoundOutcome mim_round(const RoundState& state, const RoundContext& ctx, const MimHyper& hyper);
RoundOutcome fedavg_round(const RoundState& state, const RoundContext& ctx, const MimHyper& hyper);
RoundOutcome fedcm_round(const RoundState& state, const RoundContext& ctx, const MimHyper& hyper,
                         const BaselineHyper& base);
RoundOutcome scaffold_round(const RoundState& state, const RoundContext& ctx, const MimHyper& hyper);
RoundOutcome fedadam_round(const RoundState& state, const RoundContext& ctx, const MimHyper& hyper,
                           const BaselineHyper& base);

RoundOutcome run_round(AlgorithmKind kind, const RoundState& state, const RoundContext& ctx, const MimHyper& hyper,
                       const BaselineHyper& base);

// Mean of the clients' final models, reduced in ascending client id order
// whatever the order of `results`.
ParamVector aggregate(std::span<const ClientResult> results);

struct EtaBound {
    double value = 0.0;        // min{1/(4 L K sqrt(A)), 3/(16 K L)}
    double sqrt_term = 0.0;    // 1/(4 L K sqrt(A))
    double linear_term = 0.0;  // 3/(16 K L)
    bool satisfied = false;
    std::string warning;       // empty when satisfied
};

// Local learning-rate condition for the FedMIM convergence guarantee.
// Annotates only; never blocks a run.
EtaBound validate_eta_l(double eta_l, double L, std::size_t K, double A);

}  // namespace fedmim
