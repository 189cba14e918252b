#include "fedmim/algorithms.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "fedmim/simd.hpp"

namespace fedmim {
namespace {

void check_finite(const ParamVector& x, const ClientObjective& obj, std::size_t client, std::size_t iteration) {
    if (!x.all_finite()) {
        throw DivergenceError(obj.kind(), client, iteration);
    }
}

// Common skeleton: run `local` for every sampled client (possibly in
// parallel) and collect results in ascending client id order.
template <class Local>
std::vector<ClientResult> run_clients(const RoundState& state, const RoundContext& ctx, Local&& local) {
    std::vector<std::size_t> ids(ctx.sampled.begin(), ctx.sampled.end());
    std::sort(ids.begin(), ids.end());
    std::vector<ClientResult> results(ids.size());
    ctx.executor.for_each(ids.size(), [&](std::size_t slot) {
        const std::size_t id = ids[slot];
        if (id >= ctx.problem.num_clients()) {
            throw std::out_of_range("sampled client id " + std::to_string(id) + " out of range");
        }
        RngStream rng = derive_rng(ctx.seed, state.round, id, RngPurpose::batch_sampling);
        results[slot] = local(id, *ctx.problem.clients[id], rng);
        results[slot].client_id = id;
    });
    return results;
}

// Shared bookkeeping once the new global model is known: push the new
// increment, advance the round counter and decay the local learning rate.
RoundState advance(const RoundState& state, ParamVector x_next, const MimHyper& hyper, double delta_fault) {
    RoundState next;
    ParamVector delta = compute_delta(x_next, state.x, hyper.K);
    if (delta_fault != 0.0) {
        for (double& v : delta.values()) {
            v += delta_fault;
        }
    }
    next.delta_history = state.delta_history;
    next.delta_history.push_front(std::move(delta));
    next.delta_history.pop_back();
    next.x = std::move(x_next);
    next.round = state.round + 1;
    next.eta_l = state.eta_l * hyper.lr_decay;
    next.aux = state.aux;
    return next;
}

MimHyper with_current_lr(const MimHyper& hyper, const RoundState& state) {
    MimHyper h = hyper;
    h.eta_l = state.eta_l;
    return h;
}

// Plain local SGD: x_{k+1} = x_k - eta_l * g(x_k).
ClientResult sgd_local_update(const ParamVector& x_start, const MimHyper& hyper, const ClientObjective& obj,
                              RngStream& rng, std::size_t client_id) {
    ClientResult res;
    res.x_final = x_start;
    res.grad_sum = ParamVector(x_start.dim());
    EpochSampler sampler(obj.sample_count(), hyper.batch_size, rng);
    for (std::size_t k = 0; k < hyper.K; ++k) {
        const ParamVector g = obj.batch_gradient(res.x_final, sampler.next(), rng);
        add_inplace(g, res.grad_sum);
        res.x_final = axpy(-hyper.eta_l, g, res.x_final);
        check_finite(res.x_final, obj, client_id, k);
    }
    return res;
}

}  // namespace

std::string_view to_string(AlgorithmKind kind) {
    switch (kind) {
        case AlgorithmKind::fedavg:
            return "fedavg";
        case AlgorithmKind::fedmim:
            return "fedmim";
        case AlgorithmKind::fedcm:
            return "fedcm";
        case AlgorithmKind::scaffold:
            return "scaffold";
        case AlgorithmKind::fedadam:
            return "fedadam";
    }
    return "unknown";
}

std::optional<AlgorithmKind> parse_algorithm(std::string_view name) {
    for (auto k : {AlgorithmKind::fedavg, AlgorithmKind::fedmim, AlgorithmKind::fedcm, AlgorithmKind::scaffold,
                   AlgorithmKind::fedadam}) {
        if (name == to_string(k)) {
            return k;
        }
    }
    return std::nullopt;
}

double MimHyper::A() const {
    return 1.0 - std::accumulate(alpha.begin(), alpha.end(), 0.0);
}

double MimHyper::rho() const {
    return std::accumulate(beta.begin(), beta.end(), 0.0);
}

void MimHyper::validate(std::size_t n_clients) const {
    if (J() == 0) {
        throw std::invalid_argument("alpha/beta must hold at least one weight");
    }
    for (double a : alpha) {
        if (!(a >= 0.0) || !std::isfinite(a)) {
            throw std::invalid_argument("alpha weights must be finite and non-negative");
        }
    }
    if (!(A() > 0.0)) {
        throw std::invalid_argument("alpha weights must sum below 1");
    }
    for (double b : beta) {
        if (!(b >= 0.0) || !std::isfinite(b)) {
            throw std::invalid_argument("beta weights must be finite and non-negative");
        }
    }
    if (!(eta_l > 0.0) || !std::isfinite(eta_l)) {
        throw std::invalid_argument("eta_l must be positive");
    }
    if (K == 0) {
        throw std::invalid_argument("k_local must be at least 1");
    }
    if (S == 0 || S > n_clients) {
        throw std::invalid_argument("s_participate must lie in [1, n_clients]");
    }
    if (batch_size == 0) {
        throw std::invalid_argument("batch_size must be at least 1");
    }
    if (!(lr_decay > 0.0) || lr_decay > 1.0) {
        throw std::invalid_argument("lr_decay must lie in (0, 1]");
    }
}

RoundState initial_state(AlgorithmKind kind, const ParamVector& x0, const MimHyper& hyper, std::size_t n_clients) {
    RoundState s;
    s.x = x0;
    const std::size_t slots = kind == AlgorithmKind::fedmim ? hyper.J() : 1;
    s.delta_history.assign(slots, ParamVector(x0.dim()));
    s.round = 0;
    s.eta_l = hyper.eta_l;
    if (kind == AlgorithmKind::scaffold) {
        s.aux = ScaffoldState{ParamVector(x0.dim()), std::vector<ParamVector>(n_clients, ParamVector(x0.dim()))};
    } else if (kind == AlgorithmKind::fedadam) {
        s.aux = AdamState{ParamVector(x0.dim()), ParamVector(x0.dim()), 0};
    }
    return s;
}

DivergenceError::DivergenceError(const std::string& objective, std::size_t client, std::size_t iteration)
    : std::runtime_error("non-finite iterate (objective " + objective + ", client " + std::to_string(client) +
                         ", local iteration " + std::to_string(iteration) + ")"),
      client_(client),
      iteration_(iteration) {}

EpochSampler::EpochSampler(std::size_t n, std::size_t batch_size, RngStream& rng)
    : n_(n), batch_(batch_size), rng_(rng), order_(n) {
    std::iota(order_.begin(), order_.end(), 0);
    pos_ = n_;  // forces a shuffle on first use
}

std::span<const std::size_t> EpochSampler::next() {
    if (batch_ >= n_) {
        return order_;
    }
    if (pos_ >= n_) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
    }
    const std::size_t take = std::min(batch_, n_ - pos_);
    scratch_.assign(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                    order_.begin() + static_cast<std::ptrdiff_t>(pos_ + take));
    std::sort(scratch_.begin(), scratch_.end());
    pos_ += take;
    return scratch_;
}

ParamVector compute_delta(const ParamVector& x_t, const ParamVector& x_prev, std::size_t K) {
    if (K == 0) {
        throw std::invalid_argument("compute_delta: K must be at least 1");
    }
    ParamVector d = sub(x_prev, x_t);
    simd::kernels().div(d.data(), static_cast<double>(K), d.data(), d.dim());
    return d;
}

ClientResult mim_local_update(const ParamVector& x_start, std::span<const ParamVector> deltas, const MimHyper& hyper,
                              const ClientObjective& obj, RngStream& rng, std::size_t client_id) {
    const std::size_t J = hyper.J();
    if (deltas.size() < J) {
        throw std::invalid_argument("mim_local_update: need one increment per inertial weight");
    }
    // The increments are fixed for the whole round, so both shifts are too.
    ParamVector shift_iterate(x_start.dim());
    ParamVector shift_gradient(x_start.dim());
    for (std::size_t j = 0; j < J; ++j) {
        axpy_inplace(hyper.alpha_at(j), deltas[j], shift_iterate);
        axpy_inplace(hyper.beta_at(j), deltas[j], shift_gradient);
    }
    const double step = hyper.A() * hyper.eta_l;

    ClientResult res;
    res.client_id = client_id;
    res.x_final = x_start;
    res.grad_sum = ParamVector(x_start.dim());
    EpochSampler sampler(obj.sample_count(), hyper.batch_size, rng);
    for (std::size_t k = 0; k < hyper.K; ++k) {
        const ParamVector y1 = sub(res.x_final, shift_iterate);
        const ParamVector y2 = sub(res.x_final, shift_gradient);
        const ParamVector g = obj.batch_gradient(y2, sampler.next(), rng);
        add_inplace(g, res.grad_sum);
        res.x_final = axpy(-step, g, y1);
        check_finite(res.x_final, obj, client_id, k);
    }
    return res;
}

ParamVector aggregate(std::span<const ClientResult> results) {
    std::vector<const ClientResult*> sorted;
    sorted.reserve(results.size());
    for (const auto& r : results) {
        sorted.push_back(&r);
    }
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ClientResult* a, const ClientResult* b) { return a->client_id < b->client_id; });
    std::vector<ParamVector> finals;
    finals.reserve(sorted.size());
    for (const auto* r : sorted) {
        finals.push_back(r->x_final);
    }
    return mean(finals);
}

RoundOutcome mim_round(const RoundState& state, const RoundContext& ctx, const MimHyper& hyper) {
    const MimHyper h = with_current_lr(hyper, state);
    const std::vector<ParamVector> deltas(state.delta_history.begin(), state.delta_history.end());
    auto results = run_clients(state, ctx, [&](std::size_t id, const ClientObjective& obj, RngStream& rng) {
        return mim_local_update(state.x, deltas, h, obj, rng, id);
    });
    ParamVector x_next = aggregate(results);
    return {advance(state, std::move(x_next), hyper, ctx.delta_fault), std::move(results)};
}

RoundOutcome fedavg_round(const RoundState& state, const RoundContext& ctx, const MimHyper& hyper) {
    const MimHyper h = with_current_lr(hyper, state);
    auto results = run_clients(state, ctx, [&](std::size_t id, const ClientObjective& obj, RngStream& rng) {
        return sgd_local_update(state.x, h, obj, rng, id);
    });
    ParamVector x_next = aggregate(results);
    return {advance(state, std::move(x_next), hyper, ctx.delta_fault), std::move(results)};
}

RoundOutcome fedcm_round(const RoundState& state, const RoundContext& ctx, const MimHyper& hyper,
                         const BaselineHyper& base) {
    const MimHyper h = with_current_lr(hyper, state);
    const double a = base.fedcm_alpha;
    // Broadcast momentum: the last global increment per unit learning rate.
    const ParamVector& delta = state.delta_history.front();
    auto results = run_clients(state, ctx, [&](std::size_t id, const ClientObjective& obj, RngStream& rng) {
        ClientResult res;
        res.x_final = state.x;
        res.grad_sum = ParamVector(state.x.dim());
        EpochSampler sampler(obj.sample_count(), h.batch_size, rng);
        for (std::size_t k = 0; k < h.K; ++k) {
            const ParamVector g = obj.batch_gradient(res.x_final, sampler.next(), rng);
            add_inplace(g, res.grad_sum);
            const ParamVector direction = axpy(a / h.eta_l, delta, scaled(1.0 - a, g));
            res.x_final = axpy(-h.eta_l, direction, res.x_final);
            check_finite(res.x_final, obj, id, k);
        }
        return res;
    });
    ParamVector x_next = aggregate(results);
    return {advance(state, std::move(x_next), hyper, ctx.delta_fault), std::move(results)};
}

RoundOutcome scaffold_round(const RoundState& state, const RoundContext& ctx, const MimHyper& hyper) {
    const auto* sc = std::get_if<ScaffoldState>(&state.aux);
    if (sc == nullptr) {
        throw std::logic_error("scaffold_round: state carries no control variates");
    }
    const MimHyper h = with_current_lr(hyper, state);
    const double inv_k_eta = 1.0 / (static_cast<double>(h.K) * h.eta_l);
    auto results = run_clients(state, ctx, [&](std::size_t id, const ClientObjective& obj, RngStream& rng) {
        const ParamVector& ci = sc->client_c.at(id);
        const ParamVector correction = sub(sc->server_c, ci);
        ClientResult res;
        res.x_final = state.x;
        res.grad_sum = ParamVector(state.x.dim());
        EpochSampler sampler(obj.sample_count(), h.batch_size, rng);
        for (std::size_t k = 0; k < h.K; ++k) {
            const ParamVector g = obj.batch_gradient(res.x_final, sampler.next(), rng);
            add_inplace(g, res.grad_sum);
            res.x_final = axpy(-h.eta_l, add(g, correction), res.x_final);
            check_finite(res.x_final, obj, id, k);
        }
        // c_i+ = c_i - c + (x_t - x_{i,K}) / (K eta_l)
        res.aux_update = axpy(inv_k_eta, sub(state.x, res.x_final), sub(ci, sc->server_c));
        return res;
    });
    ParamVector x_next = aggregate(results);
    RoundState next = advance(state, std::move(x_next), hyper, ctx.delta_fault);
    auto& nsc = std::get<ScaffoldState>(next.aux);
    ParamVector c_change(state.x.dim());
    for (const auto& r : results) {
        add_inplace(sub(*r.aux_update, sc->client_c[r.client_id]), c_change);
        nsc.client_c[r.client_id] = *r.aux_update;
    }
    // c += (S/N) * mean change = (1/N) * total change
    axpy_inplace(1.0 / static_cast<double>(ctx.problem.num_clients()), c_change, nsc.server_c);
    return {std::move(next), std::move(results)};
}

RoundOutcome fedadam_round(const RoundState& state, const RoundContext& ctx, const MimHyper& hyper,
                           const BaselineHyper& base) {
    if (std::get_if<AdamState>(&state.aux) == nullptr) {
        throw std::logic_error("fedadam_round: state carries no moment estimates");
    }
    const MimHyper h = with_current_lr(hyper, state);
    auto results = run_clients(state, ctx, [&](std::size_t id, const ClientObjective& obj, RngStream& rng) {
        return sgd_local_update(state.x, h, obj, rng, id);
    });
    const ParamVector pseudo_grad = sub(state.x, aggregate(results));

    AdamState adam = std::get<AdamState>(state.aux);
    adam.steps += 1;
    const double b1 = base.adam_beta1;
    const double b2 = base.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.steps));
    ParamVector x_next = state.x;
    for (std::size_t i = 0; i < x_next.dim(); ++i) {
        const double g = pseudo_grad[i];
        adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * g;
        adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * g * g;
        const double m_hat = c1 > 0.0 ? adam.m[i] / c1 : adam.m[i];
        const double v_hat = c2 > 0.0 ? adam.v[i] / c2 : adam.v[i];
        x_next[i] -= base.global_lr * m_hat / (std::sqrt(v_hat) + base.adam_eps);
    }
    RoundState next = advance(state, std::move(x_next), hyper, ctx.delta_fault);
    next.aux = std::move(adam);
    return {std::move(next), std::move(results)};
}

RoundOutcome run_round(AlgorithmKind kind, const RoundState& state, const RoundContext& ctx, const MimHyper& hyper,
                       const BaselineHyper& base) {
    switch (kind) {
        case AlgorithmKind::fedavg:
            return fedavg_round(state, ctx, hyper);
        case AlgorithmKind::fedmim:
            return mim_round(state, ctx, hyper);
        case AlgorithmKind::fedcm:
            return fedcm_round(state, ctx, hyper, base);
        case AlgorithmKind::scaffold:
            return scaffold_round(state, ctx, hyper);
        case AlgorithmKind::fedadam:
            return fedadam_round(state, ctx, hyper, base);
    }
    throw std::logic_error("run_round: unknown algorithm");
}

EtaBound validate_eta_l(double eta_l, double L, std::size_t K, double A) {
    EtaBound b;
    const double k = static_cast<double>(K);
    b.sqrt_term = 1.0 / (4.0 * L * k * std::sqrt(A));
    b.linear_term = 3.0 / (16.0 * k * L);
    b.value = std::min(b.sqrt_term, b.linear_term);
    b.satisfied = eta_l <= b.value;
    if (!b.satisfied) {
        std::ostringstream os;
        os.precision(17);
        os << "eta_l = " << eta_l << " exceeds the local learning-rate bound " << b.value;
        b.warning = os.str();
    }
    return b;
}

}  // namespace fedmim
