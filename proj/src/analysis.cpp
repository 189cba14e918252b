#include "fedmim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fedmim {
namespace {

double one_minus_sum(std::span<const double> alpha) {
    return 1.0 - std::accumulate(alpha.begin(), alpha.end(), 0.0);
}

}  // namespace

double local_consistency(std::span<const ParamVector> local_finals, const ParamVector& global_next) {
    if (local_finals.empty()) {
        throw std::invalid_argument("local_consistency: no local models");
    }
    double s = 0.0;
    for (const auto& x : local_finals) {
        s += l2_norm_sq(sub(x, global_next));
    }
    return s / static_cast<double>(local_finals.size());
}

ParamVector compute_u(const ParamVector& x_t, std::span<const ParamVector> deltas, std::span<const double> alpha,
                      std::size_t K) {
    const double A = one_minus_sum(alpha);
    if (!(A > 0.0)) {
        throw std::invalid_argument("compute_u: alpha weights must sum below 1");
    }
    if (deltas.size() < alpha.size()) {
        throw std::invalid_argument("compute_u: need one increment per alpha weight");
    }
    ParamVector correction(x_t.dim());
    for (std::size_t j = 0; j < alpha.size(); ++j) {
        double tail = 0.0;
        for (std::size_t s = j; s < alpha.size(); ++s) {
            tail += alpha[s];
        }
        axpy_inplace(tail, deltas[j], correction);
    }
    return axpy(-static_cast<double>(K) / A, correction, x_t);
}

double verify_u_update(const ParamVector& u_prev, const ParamVector& u_next, const ParamVector& grad_sum,
                       double eta_l, std::size_t S, std::size_t /*K*/) {
    // eta/(S K) with eta = K eta_l reduces to eta_l / S.
    const ParamVector predicted = axpy(-eta_l / static_cast<double>(S), grad_sum, u_prev);
    return max_abs_diff(u_next, predicted);
}

double verify_delta_recursion(const ParamVector& delta_next, const ParamVector& grad_sum,
                              std::span<const ParamVector> deltas, std::span<const double> alpha, double eta_l,
                              std::size_t S, std::size_t K) {
    const double A = one_minus_sum(alpha);
    const double tilde_scale = eta_l / (static_cast<double>(S) * static_cast<double>(K));
    ParamVector predicted = scaled(A * tilde_scale, grad_sum);
    for (std::size_t j = 0; j < alpha.size(); ++j) {
        axpy_inplace(alpha[j], deltas[j], predicted);
    }
    return max_abs_diff(delta_next, predicted);
}

double fit_geometric_rate(std::span<const std::pair<double, double>> series, double skip_fraction) {
    const auto skip = static_cast<std::size_t>(std::floor(skip_fraction * static_cast<double>(series.size())));
    const auto pts = series.subspan(std::min(skip, series.size()));
    if (pts.size() < 10) {
        throw std::invalid_argument("fit_geometric_rate: need at least 10 points");
    }
    double mx = 0.0;
    double my = 0.0;
    for (const auto& [t, v] : pts) {
        if (!(v > 0.0)) {
            throw std::invalid_argument("fit_geometric_rate: values must be positive");
        }
        mx += t;
        my += std::log(v);
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (const auto& [t, v] : pts) {
        sxy += (t - mx) * (std::log(v) - my);
        sxx += (t - mx) * (t - mx);
    }
    if (sxx == 0.0) {
        throw std::invalid_argument("fit_geometric_rate: rounds must not all coincide");
    }
    return std::exp(sxy / sxx);
}

std::optional<double> fit_gap_rate(std::span<const std::pair<double, double>> series, double floor) {
    const auto skip = static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(series.size())));
    std::vector<std::pair<double, double>> kept;
    for (std::size_t i = skip; i < series.size(); ++i) {
        if (series[i].second > floor) {
            kept.push_back(series[i]);
        }
    }
    if (kept.size() < 10) {
        return std::nullopt;
    }
    return fit_geometric_rate(kept);
}

double finite_difference_check(const ClientObjective& obj, const ParamVector& x, double h) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("finite_difference_check: h must be positive");
    }
    const ParamVector g = obj.full_gradient(x);
    double worst = 0.0;
    ParamVector probe = x;
    for (std::size_t i = 0; i < x.dim(); ++i) {
        probe[i] = x[i] + h;
        const double up = obj.loss(probe);
        probe[i] = x[i] - h;
        const double down = obj.loss(probe);
        probe[i] = x[i];
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::fabs(fd - g[i]) / (std::fabs(g[i]) + 1e-8));
    }
    return worst;
}

ParamVector sum_grad(std::span<const ClientResult> results) {
    if (results.empty()) {
        throw std::invalid_argument("sum_grad: no client results");
    }
    std::vector<const ClientResult*> sorted;
    for (const auto& r : results) {
        sorted.push_back(&r);
    }
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ClientResult* a, const ClientResult* b) { return a->client_id < b->client_id; });
    ParamVector total(sorted.front()->grad_sum.dim());
    for (const auto* r : sorted) {
        add_inplace(r->grad_sum, total);
    }
    return total;
}

LemmaVerifier::LemmaVerifier(const MimHyper& hyper, const RoundState& initial) : K_(hyper.K) {
    alpha_.resize(hyper.J());
    for (std::size_t j = 0; j < alpha_.size(); ++j) {
        alpha_[j] = hyper.alpha_at(j);
    }
    const std::vector<ParamVector> hist(initial.delta_history.begin(), initial.delta_history.end());
    u_ = compute_u(initial.x, hist, alpha_, K_);
}

RoundResiduals LemmaVerifier::observe(const RoundState& before, const RoundOutcome& outcome) {
    const std::vector<ParamVector> prev(before.delta_history.begin(), before.delta_history.end());
    const std::vector<ParamVector> next(outcome.state.delta_history.begin(), outcome.state.delta_history.end());
    const ParamVector grads = sum_grad(outcome.clients);
    const std::size_t S = outcome.clients.size();
    const double eta_l = before.eta_l;

    RoundResiduals r;
    r.delta = verify_delta_recursion(next.front(), grads, prev, alpha_, eta_l, S, K_);
    ParamVector u_next = compute_u(outcome.state.x, next, alpha_, K_);
    r.u = verify_u_update(u_, u_next, grads, eta_l, S, K_);
    u_ = std::move(u_next);

    const double tilde_scale = eta_l / (static_cast<double>(S) * static_cast<double>(K_));
    r.delta_tilde_norm_sq = l2_norm_sq(scaled(tilde_scale, grads));
    ratio_max_ = std::max(ratio_max_, r.delta_tilde_norm_sq / (eta_l * eta_l));
    return r;
}

}  // namespace fedmim
