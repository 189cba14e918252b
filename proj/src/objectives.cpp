#include "fedmim/objectives.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "fedmim/simd.hpp"

namespace fedmim {
namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix to_matrix(const std::vector<double>& rowmajor, std::size_t dim) {
    return Eigen::Map<const Matrix>(rowmajor.data(), static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
}

double largest_eigenvalue(const Matrix& sym) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().maxCoeff();
}

double smallest_eigenvalue(const Matrix& sym) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

double logistic_smoothness(const Dataset& data, double weight_decay) {
    if (data.n == 0) {
        return weight_decay;
    }
    const Eigen::Map<const Matrix> a(data.features.data(), static_cast<Eigen::Index>(data.n),
                                     static_cast<Eigen::Index>(data.d));
    const Matrix gram = a.transpose() * a;
    return 0.25 * largest_eigenvalue(gram) / static_cast<double>(data.n) + weight_decay;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> idx) {
    Dataset out;
    out.n = idx.size();
    out.d = data.d;
    out.feature_names = data.feature_names;
    out.features.reserve(idx.size() * data.d);
    out.labels.reserve(idx.size());
    for (std::size_t s : idx) {
        const auto r = data.row(s);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.labels.push_back(data.labels[s]);
    }
    return out;
}

std::vector<int> labels_from_counts(std::span<const std::size_t> class_totals) {
    std::vector<int> labels;
    for (std::size_t c = 0; c < class_totals.size(); ++c) {
        labels.insert(labels.end(), class_totals[c], static_cast<int>(c));
    }
    return labels;
}

// Draws per-client label mixes and matching class totals so that the labels we
// synthesise exactly meet every client's demand.
struct SyntheticSplit {
    std::vector<int> labels;
    std::vector<std::size_t> sizes;
    std::vector<std::vector<double>> proportions;
};

SyntheticSplit synthetic_split(std::size_t n_clients, std::size_t per_client, std::size_t classes,
                               std::optional<double> concentration, RngStream& rng) {
    SyntheticSplit split;
    split.sizes.assign(n_clients, per_client);
    const std::vector<double> prior(classes, 1.0 / static_cast<double>(classes));
    if (concentration) {
        split.proportions = draw_label_proportions(n_clients, prior, *concentration, rng);
    } else {
        split.proportions.assign(n_clients, prior);
    }
    std::vector<std::size_t> totals(classes, 0);
    for (std::size_t i = 0; i < n_clients; ++i) {
        const auto counts = largest_remainder(split.proportions[i], per_client);
        for (std::size_t c = 0; c < classes; ++c) {
            totals[c] += counts[c];
        }
    }
    split.labels = labels_from_counts(totals);
    return split;
}

FederatedProblem finite_sum_problem(std::string kind, std::shared_ptr<const Dataset> data, Partition part,
                                    const std::function<std::shared_ptr<const ClientObjective>(Dataset)>& make) {
    FederatedProblem p;
    p.kind = std::move(kind);
    for (const auto& idx : part.client_indices) {
        if (idx.empty()) {
            throw PartitionError("a client received no samples");
        }
        p.clients.push_back(make(subset(*data, idx)));
    }
    p.dim = p.clients.front()->dim();
    p.initial_point = ParamVector(p.dim);
    p.data = std::move(data);
    p.partition = std::move(part);
    return p;
}

FederatedProblem finish_logreg(FederatedProblem p, double weight_decay) {
    double L = 0.0;
    for (const auto& c : p.clients) {
        L = std::max(L, static_cast<const LogisticObjective&>(*c).smoothness());
    }
    p.smoothness_L = L;
    if (weight_decay > 0.0) {
        // Each f_i is weight_decay-strongly convex, hence so is f.
        p.pl_mu = weight_decay;
    }
    return p;
}

}  // namespace

ParamVector ClientObjective::stochastic_gradient(const ParamVector& x, std::size_t batch_size,
                                                 RngStream& rng) const {
    const std::size_t n = sample_count();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (batch_size < n) {
        for (std::size_t k = 0; k < batch_size; ++k) {
            std::swap(idx[k], idx[k + rng.uniform_index(n - k)]);
        }
        idx.resize(batch_size);
        std::sort(idx.begin(), idx.end());
    }
    return batch_gradient(x, idx, rng);
}

// ---------------------------------------------------------------- quadratic

QuadraticObjective::QuadraticObjective(std::vector<double> hessian, ParamVector center, double sigma,
                                       std::size_t nominal_samples)
    : hessian_(std::move(hessian)), center_(std::move(center)), sigma_(sigma), nominal_samples_(nominal_samples) {
    if (hessian_.size() != center_.dim() * center_.dim()) {
        throw std::invalid_argument("QuadraticObjective: Hessian must be dim x dim");
    }
    if (sigma_ < 0.0 || nominal_samples_ == 0) {
        throw std::invalid_argument("QuadraticObjective: sigma >= 0 and nominal_samples >= 1 required");
    }
}

double QuadraticObjective::loss(const ParamVector& x) const {
    const ParamVector r = sub(x, center_);
    return 0.5 * dot(r, full_gradient(x));
}

ParamVector QuadraticObjective::full_gradient(const ParamVector& x) const {
    const ParamVector r = sub(x, center_);
    const std::size_t d = dim();
    ParamVector g(d);
    const auto& k = simd::kernels();
    for (std::size_t i = 0; i < d; ++i) {
        g[i] = k.dot(hessian_.data() + i * d, r.data(), d);
    }
    return g;
}

ParamVector QuadraticObjective::batch_gradient(const ParamVector& x, std::span<const std::size_t> batch,
                                               RngStream& rng) const {
    ParamVector g = full_gradient(x);
    if (sigma_ > 0.0 && batch.size() < nominal_samples_) {
        const double per_coord = sigma_ / std::sqrt(static_cast<double>(dim()));
        for (std::size_t i = 0; i < dim(); ++i) {
            g[i] += per_coord * rng.normal();
        }
    }
    return g;
}

// --------------------------------------------------------------- finite sum

double FiniteSumObjective::loss(const ParamVector& x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < data_.n; ++i) {
        s += sample_loss(x, i);
    }
    return s / static_cast<double>(data_.n) + 0.5 * weight_decay_ * l2_norm_sq(x);
}

ParamVector FiniteSumObjective::full_gradient(const ParamVector& x) const {
    std::vector<std::size_t> all(data_.n);
    std::iota(all.begin(), all.end(), 0);
    return average_gradient(x, all);
}

ParamVector FiniteSumObjective::batch_gradient(const ParamVector& x, std::span<const std::size_t> batch,
                                               RngStream&) const {
    return average_gradient(x, batch);
}

ParamVector FiniteSumObjective::average_gradient(const ParamVector& x, std::span<const std::size_t> batch) const {
    if (batch.empty()) {
        throw std::invalid_argument("batch_gradient: empty batch");
    }
    ParamVector g(dim());
    for (std::size_t s : batch) {
        accumulate_sample_gradient(x, s, g);
    }
    simd::kernels().div(g.data(), static_cast<double>(batch.size()), g.data(), g.dim());
    if (weight_decay_ != 0.0) {
        axpy_inplace(weight_decay_, x, g);
    }
    return g;
}

// ----------------------------------------------------------------- logistic

double LogisticObjective::smoothness() const {
    return logistic_smoothness(data_, weight_decay_);
}

double LogisticObjective::sample_loss(const ParamVector& x, std::size_t s) const {
    const double y = data_.labels[s] == 1 ? 1.0 : -1.0;
    const double z = y * simd::kernels().dot(x.data(), data_.row(s).data(), data_.d);
    return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

void LogisticObjective::accumulate_sample_gradient(const ParamVector& x, std::size_t s, ParamVector& grad) const {
    const auto& k = simd::kernels();
    const double y = data_.labels[s] == 1 ? 1.0 : -1.0;
    const double z = y * k.dot(x.data(), data_.row(s).data(), data_.d);
    const double coeff = -y / (1.0 + std::exp(z));
    k.axpy(coeff, data_.row(s).data(), grad.data(), grad.data(), data_.d);
}

// ---------------------------------------------------------------------- mlp

MlpObjective::MlpObjective(Dataset data, MlpShape shape, double weight_decay)
    : FiniteSumObjective(std::move(data), weight_decay), shape_(shape) {
    if (data_.d != shape_.input) {
        throw std::invalid_argument("MlpObjective: feature width does not match input layer");
    }
    for (int l : data_.labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= shape_.output) {
            throw std::invalid_argument("MlpObjective: label outside output layer");
        }
    }
}

std::vector<double> MlpObjective::forward(const ParamVector& x, std::span<const double> input) const {
    const auto& k = simd::kernels();
    const auto [in, hid, out] = shape_;
    const double* w1 = x.data();
    const double* b1 = w1 + hid * in;
    const double* w2 = b1 + hid;
    const double* b2 = w2 + out * hid;
    std::vector<double> h(hid);
    for (std::size_t j = 0; j < hid; ++j) {
        h[j] = std::tanh(k.dot(w1 + j * in, input.data(), in) + b1[j]);
    }
    std::vector<double> o(out);
    for (std::size_t c = 0; c < out; ++c) {
        o[c] = k.dot(w2 + c * hid, h.data(), hid) + b2[c];
    }
    return o;
}

double MlpObjective::sample_loss(const ParamVector& x, std::size_t s) const {
    const auto o = forward(x, data_.row(s));
    double l = 0.0;
    for (std::size_t c = 0; c < o.size(); ++c) {
        const double r = o[c] - (data_.labels[s] == static_cast<int>(c) ? 1.0 : 0.0);
        l += r * r;
    }
    return 0.5 * l;
}

void MlpObjective::accumulate_sample_gradient(const ParamVector& x, std::size_t s, ParamVector& grad) const {
    const auto& k = simd::kernels();
    const auto [in, hid, out] = shape_;
    const auto a = data_.row(s);
    const double* w1 = x.data();
    const double* b1 = w1 + hid * in;
    const double* w2 = b1 + hid;
    const double* b2 = w2 + out * hid;
    double* gw1 = grad.data();
    double* gb1 = gw1 + hid * in;
    double* gw2 = gb1 + hid;
    double* gb2 = gw2 + out * hid;

    std::vector<double> h(hid);
    for (std::size_t j = 0; j < hid; ++j) {
        h[j] = std::tanh(k.dot(w1 + j * in, a.data(), in) + b1[j]);
    }
    std::vector<double> r(out);
    for (std::size_t c = 0; c < out; ++c) {
        r[c] = k.dot(w2 + c * hid, h.data(), hid) + b2[c] - (data_.labels[s] == static_cast<int>(c) ? 1.0 : 0.0);
    }
    std::vector<double> dh(hid, 0.0);
    for (std::size_t c = 0; c < out; ++c) {
        k.axpy(r[c], h.data(), gw2 + c * hid, gw2 + c * hid, hid);
        gb2[c] += r[c];
        k.axpy(r[c], w2 + c * hid, dh.data(), dh.data(), hid);
    }
    for (std::size_t j = 0; j < hid; ++j) {
        const double dz = dh[j] * (1.0 - h[j] * h[j]);
        k.axpy(dz, a.data(), gw1 + j * in, gw1 + j * in, in);
        gb1[j] += dz;
    }
}

// ------------------------------------------------------------------ problem

double FederatedProblem::loss(const ParamVector& x) const {
    double s = 0.0;
    for (const auto& c : clients) {
        s += c->loss(x);
    }
    return s / static_cast<double>(clients.size());
}

ParamVector FederatedProblem::gradient(const ParamVector& x) const {
    ParamVector g(dim);
    for (const auto& c : clients) {
        add_inplace(c->full_gradient(x), g);
    }
    simd::kernels().div(g.data(), static_cast<double>(clients.size()), g.data(), g.dim());
    return g;
}

FederatedProblem quadratic_problem_from(const std::vector<std::vector<double>>& hessians,
                                        const std::vector<ParamVector>& centers, double sigma_l,
                                        std::size_t nominal_samples) {
    if (hessians.empty() || hessians.size() != centers.size()) {
        throw std::invalid_argument("quadratic_problem_from: need one Hessian per center and at least one client");
    }
    const std::size_t d = centers.front().dim();
    FederatedProblem p;
    p.kind = "quadratic";
    p.dim = d;
    p.initial_point = ParamVector(d);

    Matrix h_sum = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    double L = 0.0;
    for (std::size_t i = 0; i < hessians.size(); ++i) {
        const Matrix h = to_matrix(hessians[i], d);
        const Eigen::Map<const Eigen::VectorXd> b(centers[i].data(), static_cast<Eigen::Index>(d));
        assert(smallest_eigenvalue(h) > 0.0 && "client Hessian must be positive definite");
        L = std::max(L, largest_eigenvalue(h));
        h_sum += h;
        rhs += h * b;
        p.clients.push_back(std::make_shared<QuadraticObjective>(hessians[i], centers[i], sigma_l, nominal_samples));
    }
    const Eigen::VectorXd xs = h_sum.ldlt().solve(rhs);
    p.known_optimum = ParamVector(std::vector<double>(xs.data(), xs.data() + xs.size()));
    p.smoothness_L = L;
    p.pl_mu = smallest_eigenvalue(h_sum / static_cast<double>(hessians.size()));
    return p;
}

FederatedProblem quadratic_problem(const QuadraticOptions& opts, RngStream& rng) {
    if (opts.n_clients == 0 || opts.dim == 0) {
        throw std::invalid_argument("quadratic_problem: n_clients and dim must be positive");
    }
    if (!(opts.eig_min > 0.0) || opts.eig_max < opts.eig_min || opts.heterogeneity < 0.0) {
        throw std::invalid_argument("quadratic_problem: need 0 < eig_min <= eig_max and heterogeneity >= 0");
    }
    const auto d = static_cast<Eigen::Index>(opts.dim);
    auto gaussian = [&rng](Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) {
                m(i, j) = rng.normal();
            }
        }
        return m;
    };

    const Matrix common = gaussian(d, 1);
    std::vector<std::vector<double>> hessians;
    std::vector<ParamVector> centers;
    for (std::size_t i = 0; i < opts.n_clients; ++i) {
        const Matrix q = Eigen::HouseholderQR<Matrix>(gaussian(d, d)).householderQ();
        Eigen::VectorXd eig(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            eig(j) = opts.eig_min + (opts.eig_max - opts.eig_min) * rng.uniform01();
        }
        if (d >= 2) {
            eig(0) = opts.eig_min;
            eig(d - 1) = opts.eig_max;
        }
        Matrix h = q * eig.asDiagonal() * q.transpose();
        h = (0.5 * (h + h.transpose())).eval();
        hessians.emplace_back(h.data(), h.data() + h.size());

        const Matrix z = gaussian(d, 1);
        ParamVector b(opts.dim);
        for (Eigen::Index j = 0; j < d; ++j) {
            b[static_cast<std::size_t>(j)] = common(j, 0) + opts.heterogeneity * z(j, 0);
        }
        centers.push_back(std::move(b));
    }
    return quadratic_problem_from(hessians, centers, opts.sigma_l, opts.nominal_samples);
}

Dataset make_blobs(std::span<const int> labels, std::size_t dim, std::size_t classes, double separation,
                   RngStream& rng) {
    std::vector<std::vector<double>> means(classes, std::vector<double>(dim));
    for (std::size_t c = 0; c < classes; ++c) {
        if (classes == 2 && c == 1) {
            for (std::size_t j = 0; j < dim; ++j) {
                means[1][j] = -means[0][j];
            }
            continue;
        }
        double nrm = 0.0;
        for (double& v : means[c]) {
            v = rng.normal();
            nrm += v * v;
        }
        nrm = std::sqrt(nrm);
        for (double& v : means[c]) {
            v *= separation / nrm;
        }
    }
    if (classes == 2) {
        // Label 1 is the positive class.
        std::swap(means[0], means[1]);
    }
    Dataset data;
    data.n = labels.size();
    data.d = dim;
    data.labels.assign(labels.begin(), labels.end());
    data.features.resize(data.n * dim);
    for (std::size_t s = 0; s < data.n; ++s) {
        const auto& m = means[static_cast<std::size_t>(labels[s])];
        for (std::size_t j = 0; j < dim; ++j) {
            data.features[s * dim + j] = m[j] + rng.normal();
        }
    }
    for (std::size_t j = 0; j < dim; ++j) {
        data.feature_names.push_back("x" + std::to_string(j));
    }
    return data;
}

FederatedProblem logreg_problem(const LogregOptions& opts, RngStream& rng) {
    if (opts.n_clients == 0 || opts.dim == 0 || opts.samples_per_client == 0) {
        throw std::invalid_argument("logreg_problem: n_clients, dim and samples_per_client must be positive");
    }
    RngStream mix_rng = rng.child(0);
    RngStream data_rng = rng.child(1);
    RngStream assign_rng = rng.child(2);
    auto split = synthetic_split(opts.n_clients, opts.samples_per_client, 2, opts.concentration, mix_rng);
    auto data = std::make_shared<const Dataset>(make_blobs(split.labels, opts.dim, 2, opts.separation, data_rng));
    Partition part;
    if (opts.concentration) {
        part = assign_by_proportions(data->labels, split.sizes, split.proportions, assign_rng);
    } else {
        part = dirichlet_partition(PartitionSpec{data->labels, opts.n_clients, std::nullopt}, assign_rng);
    }
    const double wd = opts.weight_decay;
    auto p = finite_sum_problem("logreg", data, std::move(part), [wd](Dataset d) {
        return std::make_shared<LogisticObjective>(std::move(d), wd);
    });
    return finish_logreg(std::move(p), wd);
}

FederatedProblem logreg_problem_from(Dataset data, std::size_t n_clients, std::optional<double> concentration,
                                     double weight_decay, RngStream& rng) {
    if (num_classes(data.labels) != 2) {
        throw std::invalid_argument("logistic regression needs exactly two classes, found " +
                                    std::to_string(num_classes(data.labels)));
    }
    auto shared = std::make_shared<const Dataset>(std::move(data));
    auto part = dirichlet_partition(PartitionSpec{shared->labels, n_clients, concentration}, rng);
    auto p = finite_sum_problem("logreg", shared, std::move(part), [weight_decay](Dataset d) {
        return std::make_shared<LogisticObjective>(std::move(d), weight_decay);
    });
    return finish_logreg(std::move(p), weight_decay);
}

FederatedProblem mlp_problem(const MlpOptions& opts, RngStream& rng) {
    const MlpShape shape = opts.shape;
    if (shape.input == 0 || shape.hidden == 0 || shape.output == 0) {
        throw std::invalid_argument("mlp_problem: layer widths must be positive");
    }
    if (opts.n_clients == 0 || opts.samples_per_client == 0) {
        throw std::invalid_argument("mlp_problem: n_clients and samples_per_client must be positive");
    }
    RngStream mix_rng = rng.child(0);
    RngStream data_rng = rng.child(1);
    RngStream assign_rng = rng.child(2);
    RngStream init_rng = rng.child(3);
    const std::size_t classes = std::max<std::size_t>(shape.output, 2);
    auto split = synthetic_split(opts.n_clients, opts.samples_per_client, classes, opts.concentration, mix_rng);
    if (shape.output == 1) {
        // Single output regresses onto label 0 only; keep everything in class 0.
        std::fill(split.labels.begin(), split.labels.end(), 0);
        for (auto& q : split.proportions) {
            q = {1.0, 0.0};
        }
    }
    auto data = std::make_shared<const Dataset>(make_blobs(split.labels, shape.input, classes, opts.separation, data_rng));
    Partition part = assign_by_proportions(data->labels, split.sizes, split.proportions, assign_rng);
    if (!opts.concentration) {
        part.proportions.clear();
    }
    const double wd = opts.weight_decay;
    auto p = finite_sum_problem("mlp", data, std::move(part), [shape, wd](Dataset d) {
        return std::make_shared<MlpObjective>(std::move(d), shape, wd);
    });
    ParamVector init(shape.param_count());
    const double w1_scale = opts.init_scale / std::sqrt(static_cast<double>(shape.input));
    const double w2_scale = opts.init_scale / std::sqrt(static_cast<double>(shape.hidden));
    const std::size_t w1_end = shape.hidden * shape.input;
    const std::size_t w2_begin = w1_end + shape.hidden;
    const std::size_t w2_end = w2_begin + shape.output * shape.hidden;
    for (std::size_t i = 0; i < w1_end; ++i) {
        init[i] = w1_scale * init_rng.normal();
    }
    for (std::size_t i = w2_begin; i < w2_end; ++i) {
        init[i] = w2_scale * init_rng.normal();
    }
    p.initial_point = std::move(init);
    return p;
}

namespace {

using DenseMat = Eigen::MatrixXd;
using DenseVec = Eigen::VectorXd;

// Quadratic forms of the mean squared local and the squared global gradient,
// x' M x + 2 q' x + r, when every client gradient is affine in x.
struct AffineForms {
    DenseMat m_local, m_global;
    DenseVec q_local, q_global;
    double r_local = 0.0, r_global = 0.0;
};

std::optional<AffineForms> affine_forms(const FederatedProblem& problem, std::span<const ParamVector> probes) {
    const std::size_t d = problem.dim;
    const std::size_t P = probes.size();
    if (P < d + 1) {
        return std::nullopt;
    }
    DenseMat X(P, d + 1);
    for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t k = 0; k < d; ++k) {
            X(p, k) = probes[p][k];
        }
        X(p, d) = 1.0;
    }
    const Eigen::ColPivHouseholderQR<DenseMat> qr(X);
    if (static_cast<std::size_t>(qr.rank()) < d + 1) {
        return std::nullopt;
    }
    const double n = static_cast<double>(problem.num_clients());
    AffineForms f;
    f.m_local = DenseMat::Zero(d, d);
    f.q_local = DenseVec::Zero(d);
    DenseMat a_mean = DenseMat::Zero(d, d);
    DenseVec c_mean = DenseVec::Zero(d);
    for (const auto& client : problem.clients) {
        DenseMat G(P, d);
        for (std::size_t p = 0; p < P; ++p) {
            const ParamVector g = client->full_gradient(probes[p]);
            for (std::size_t k = 0; k < d; ++k) {
                G(p, k) = g[k];
            }
        }
        const DenseMat W = qr.solve(G);
        if ((X * W - G).norm() > 1e-9 * (G.norm() + 1.0)) {
            return std::nullopt;
        }
        const DenseMat A = W.topRows(d).transpose();
        const DenseVec c = W.row(d).transpose();
        f.m_local += A.transpose() * A / n;
        f.q_local += A.transpose() * c / n;
        f.r_local += c.squaredNorm() / n;
        a_mean += A / n;
        c_mean += c / n;
    }
    f.m_global = a_mean.transpose() * a_mean;
    f.q_global = a_mean.transpose() * c_mean;
    f.r_global = c_mean.squaredNorm();
    return f;
}

// sup_x of local(x) - b2 * global(x); requires b2 above the pencil's top eigenvalue.
double affine_intercept(const AffineForms& f, double b2) {
    const DenseMat P = f.m_local - b2 * f.m_global;
    const DenseVec q = f.q_local - b2 * f.q_global;
    const DenseVec x = P.ldlt().solve(-q);
    return std::max(0.0, f.r_local - b2 * f.r_global + q.dot(x));
}

std::optional<DissimilarityBound> affine_bound(const AffineForms& f, double typical_global) {
    const Eigen::SelfAdjointEigenSolver<DenseMat> mg(f.m_global);
    const double top = mg.eigenvalues().maxCoeff();
    if (!(top > 0.0) || mg.eigenvalues().minCoeff() <= 1e-12 * top) {
        return std::nullopt;  // some direction leaves the global gradient unchanged
    }
    const Eigen::GeneralizedSelfAdjointEigenSolver<DenseMat> pencil(f.m_local, f.m_global);
    const double slope = std::max(1.0, pencil.eigenvalues().maxCoeff());
    // Any b2 above the asymptotic slope gives a valid pair; take the one
    // that makes the bound tightest at the probes' typical gradient scale.
    double best_b2 = 0.0;
    double best_g2 = 0.0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int k = -120; k <= 20; ++k) {
        const double b2 = slope * (1.0 + std::pow(10.0, k / 10.0));
        const double g2 = affine_intercept(f, b2);
        const double cost = g2 + b2 * typical_global;
        if (cost < best_cost) {
            best_cost = cost;
            best_b2 = b2;
            best_g2 = g2;
        }
    }
    return DissimilarityBound{std::sqrt(best_g2), std::sqrt(best_b2)};
}

}  // namespace

DissimilarityBound estimate_dissimilarity(const FederatedProblem& problem, std::span<const ParamVector> probes) {
    if (probes.size() < 2) {
        throw std::invalid_argument("estimate_dissimilarity: need at least two probe points");
    }
    std::vector<double> local(probes.size());
    std::vector<double> global(probes.size());
    for (std::size_t p = 0; p < probes.size(); ++p) {
        double s = 0.0;
        for (const auto& c : problem.clients) {
            s += l2_norm_sq(c->full_gradient(probes[p]));
        }
        local[p] = s / static_cast<double>(problem.num_clients());
        global[p] = l2_norm_sq(problem.gradient(probes[p]));
    }
    const double n = static_cast<double>(probes.size());
    const double mg = std::accumulate(global.begin(), global.end(), 0.0) / n;
    const double ml = std::accumulate(local.begin(), local.end(), 0.0) / n;

    if (const auto forms = affine_forms(problem, probes)) {
        if (const auto bound = affine_bound(*forms, mg)) {
            return *bound;
        }
    }

    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t p = 0; p < probes.size(); ++p) {
        sxy += (global[p] - mg) * (local[p] - ml);
        sxx += (global[p] - mg) * (global[p] - mg);
    }
    const double b2 = sxx > 0.0 ? std::max(0.0, sxy / sxx) : 0.0;
    double g2 = 0.0;
    for (std::size_t p = 0; p < probes.size(); ++p) {
        g2 = std::max(g2, local[p] - b2 * global[p]);
    }
    return {std::sqrt(g2), std::sqrt(b2)};
}

}  // namespace fedmim
