#pragma once

// Per-client loss/gradient oracles and the federated problems built from them.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedmim/partition.hpp"
#include "fedmim/rng.hpp"
#include "fedmim/vector.hpp"

namespace fedmim {

// Row-major feature matrix with integer class labels.
struct Dataset {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> features;  // n * d
    std::vector<int> labels;       // n
    std::vector<std::string> feature_names;

    std::span<const double> row(std::size_t s) const { return {features.data() + s * d, d}; }
};

class ClientObjective {
public:
    virtual ~ClientObjective() = default;

    virtual std::string kind() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::size_t sample_count() const = 0;
    virtual double loss(const ParamVector& x) const = 0;
    virtual ParamVector full_gradient(const ParamVector& x) const = 0;

    // Gradient estimate over the given sample indices. A batch covering every
    // sample in ascending order returns full_gradient(x) bit for bit.
    virtual ParamVector batch_gradient(const ParamVector& x, std::span<const std::size_t> batch,
                                       RngStream& rng) const = 0;

    // Draws batch_size distinct samples uniformly; batch_size >= sample_count
    // means the full batch.
    ParamVector stochastic_gradient(const ParamVector& x, std::size_t batch_size, RngStream& rng) const;
};

// f(x) = 1/2 (x - b)^T H (x - b), with optional additive Gaussian gradient
// noise of total variance sigma^2 on any batch smaller than sample_count.
class QuadraticObjective final : public ClientObjective {
public:
    QuadraticObjective(std::vector<double> hessian, ParamVector center, double sigma, std::size_t nominal_samples);

    std::string kind() const override { return "quadratic"; }
    std::size_t dim() const override { return center_.dim(); }
    std::size_t sample_count() const override { return nominal_samples_; }
    double loss(const ParamVector& x) const override;
    ParamVector full_gradient(const ParamVector& x) const override;
    ParamVector batch_gradient(const ParamVector& x, std::span<const std::size_t> batch,
                               RngStream& rng) const override;

    const std::vector<double>& hessian() const { return hessian_; }
    const ParamVector& center() const { return center_; }
    double sigma() const { return sigma_; }

private:
    std::vector<double> hessian_;  // dim * dim, row-major, symmetric
    ParamVector center_;
    double sigma_;
    std::size_t nominal_samples_;
};

// Average of per-sample losses plus (weight_decay / 2) * ||x||^2.
class FiniteSumObjective : public ClientObjective {
public:
    FiniteSumObjective(Dataset data, double weight_decay) : data_(std::move(data)), weight_decay_(weight_decay) {}

    std::size_t sample_count() const override { return data_.n; }
    double loss(const ParamVector& x) const override;
    ParamVector full_gradient(const ParamVector& x) const override;
    ParamVector batch_gradient(const ParamVector& x, std::span<const std::size_t> batch,
                               RngStream& rng) const override;

    const Dataset& data() const { return data_; }
    double weight_decay() const { return weight_decay_; }

protected:
    virtual double sample_loss(const ParamVector& x, std::size_t s) const = 0;
    // grad += gradient of sample s's loss at x
    virtual void accumulate_sample_gradient(const ParamVector& x, std::size_t s, ParamVector& grad) const = 0;

    ParamVector average_gradient(const ParamVector& x, std::span<const std::size_t> batch) const;

    Dataset data_;
    double weight_decay_;
};

// Binary logistic loss log(1 + exp(-y w^T a)) with y in {-1, +1} (label 1 -> +1).
class LogisticObjective final : public FiniteSumObjective {
public:
    using FiniteSumObjective::FiniteSumObjective;

    std::string kind() const override { return "logreg"; }
    std::size_t dim() const override { return data_.d; }

    // 1/4 * lambda_max(A^T A) / n + weight_decay
    double smoothness() const;

protected:
    double sample_loss(const ParamVector& x, std::size_t s) const override;
    void accumulate_sample_gradient(const ParamVector& x, std::size_t s, ParamVector& grad) const override;
};

struct MlpShape {
    std::size_t input = 1;
    std::size_t hidden = 1;
    std::size_t output = 1;

    std::size_t param_count() const { return hidden * input + hidden + output * hidden + output; }
};

// Two-layer tanh network o = W2 tanh(W1 a + b1) + b2 with squared loss
// 1/2 ||o - onehot(label)||^2. Parameter layout: W1 (hidden x input, row-major),
// b1, W2 (output x hidden, row-major), b2.
class MlpObjective final : public FiniteSumObjective {
public:
    MlpObjective(Dataset data, MlpShape shape, double weight_decay);

    std::string kind() const override { return "mlp"; }
    std::size_t dim() const override { return shape_.param_count(); }
    const MlpShape& shape() const { return shape_; }

    // Network output for one input row.
    std::vector<double> forward(const ParamVector& x, std::span<const double> input) const;

protected:
    double sample_loss(const ParamVector& x, std::size_t s) const override;
    void accumulate_sample_gradient(const ParamVector& x, std::size_t s, ParamVector& grad) const override;

private:
    MlpShape shape_;
};

struct DissimilarityBound {
    double G = 0.0;
    double B = 0.0;
};

// Global objective f(x) = (1/N) sum_i f_i(x).
struct FederatedProblem {
    std::string kind;
    std::size_t dim = 0;
    std::vector<std::shared_ptr<const ClientObjective>> clients;
    ParamVector initial_point;
    std::optional<ParamVector> known_optimum;
    std::optional<double> smoothness_L;
    std::optional<double> pl_mu;
    std::optional<DissimilarityBound> dissimilarity;
    // Set for problems built from labelled data.
    std::shared_ptr<const Dataset> data;
    std::optional<Partition> partition;

    std::size_t num_clients() const { return clients.size(); }
    double loss(const ParamVector& x) const;
    ParamVector gradient(const ParamVector& x) const;
};

struct QuadraticOptions {
    std::size_t n_clients = 10;
    std::size_t dim = 10;
    double heterogeneity = 1.0;
    double sigma_l = 0.1;
    double eig_min = 0.1;
    double eig_max = 1.0;
    std::size_t nominal_samples = 100;
};

// Client i: H_i = Q_i diag(eigs) Q_i^T with eigenvalues in [eig_min, eig_max],
// center b_i = c + heterogeneity * z_i (c, z_i standard normal).
FederatedProblem quadratic_problem(const QuadraticOptions& opts, RngStream& rng);

// Builds a quadratic problem from explicit Hessians and centers; computes the
// optimum, L and the PL constant.
FederatedProblem quadratic_problem_from(const std::vector<std::vector<double>>& hessians,
                                        const std::vector<ParamVector>& centers, double sigma_l,
                                        std::size_t nominal_samples = 100);

struct LogregOptions {
    std::size_t n_clients = 10;
    std::size_t dim = 10;
    std::size_t samples_per_client = 50;
    std::optional<double> concentration;  // nullopt = IID
    double weight_decay = 1e-3;
    double separation = 1.0;
};

FederatedProblem logreg_problem(const LogregOptions& opts, RngStream& rng);

// Logistic problem over an existing binary dataset, partitioned with
// dirichlet_partition.
FederatedProblem logreg_problem_from(Dataset data, std::size_t n_clients, std::optional<double> concentration,
                                     double weight_decay, RngStream& rng);

struct MlpOptions {
    std::size_t n_clients = 10;
    MlpShape shape{4, 8, 2};
    std::size_t samples_per_client = 50;
    std::optional<double> concentration;
    double weight_decay = 0.0;
    double separation = 1.5;
    double init_scale = 0.5;
};

FederatedProblem mlp_problem(const MlpOptions& opts, RngStream& rng);

// Gaussian blobs: class c centred at separation * u_c for random unit u_c
// (two classes use +-u), identity covariance. labels[s] gives the class.
Dataset make_blobs(std::span<const int> labels, std::size_t dim, std::size_t classes, double separation,
                   RngStream& rng);

// Fits (1/N) sum ||grad f_i||^2 <= G^2 + B^2 ||grad f||^2.
// When the probes show every client gradient to be affine (and there are at
// least dim+1 of them) the bound is exact for all x: B^2 sits just above the
// asymptotic slope and G^2 is the matching supremum. Otherwise B^2 is the
// least-squares slope over the probes (clamped at 0) and G^2 the smallest
// intercept covering every probe, which need not hold off the probes.
DissimilarityBound estimate_dissimilarity(const FederatedProblem& problem, std::span<const ParamVector> probes);

}  // namespace fedmim
