#include "fedmim/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedmim/csv.hpp"

namespace fedmim {
namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

void append_row(std::string& out, const MetricRow& r) {
    out += std::to_string(r.round);
    out += ',';
    out += fmt(r.loss);
    out += ',';
    out += fmt(r.grad_norm_sq);
    out += ',';
    out += fmt(r.grad_norm_sq_at_u);
    out += ',';
    out += fmt(r.consistency);
    out += ',';
    out += fmt(r.delta_norm_sq);
    out += ',';
    out += fmt(r.residual_delta);
    out += ',';
    out += fmt(r.residual_u);
    out += ',';
    out += fmt(r.eta_l);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error(path.string() + ": cannot open for writing");
    }
    out << text;
    if (!out) {
        throw std::runtime_error(path.string() + ": write failed");
    }
}

double parse_field(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("metrics line " + std::to_string(line) + ": bad number '" + s + "'");
    }
}

double run_max(const std::optional<double>& a, double b) { return a ? std::max(*a, b) : b; }

}  // namespace

FederatedProblem build_problem(const ProblemConfig& cfg, std::uint64_t seed) {
    RngStream rng = derive_rng(seed, 0, 0, RngPurpose::data_synthesis);
    switch (cfg.kind) {
        case ProblemKind::quadratic: {
            QuadraticOptions o;
            o.n_clients = cfg.n_clients;
            o.dim = cfg.dim;
            o.heterogeneity = cfg.heterogeneity;
            o.sigma_l = cfg.sigma_l;
            o.eig_min = cfg.eig_min;
            o.eig_max = cfg.eig_max;
            o.nominal_samples = cfg.samples_per_client;
            return quadratic_problem(o, rng);
        }
        case ProblemKind::logreg: {
            LogregOptions o;
            o.n_clients = cfg.n_clients;
            o.dim = cfg.dim;
            o.samples_per_client = cfg.samples_per_client;
            o.concentration = cfg.concentration;
            o.weight_decay = cfg.weight_decay;
            o.separation = cfg.separation;
            return logreg_problem(o, rng);
        }
        case ProblemKind::mlp: {
            MlpOptions o;
            o.n_clients = cfg.n_clients;
            o.shape = MlpShape{cfg.dim, cfg.hidden, cfg.classes};
            o.samples_per_client = cfg.samples_per_client;
            o.concentration = cfg.concentration;
            o.weight_decay = cfg.weight_decay;
            o.separation = cfg.separation;
            return mlp_problem(o, rng);
        }
        case ProblemKind::csv:
            return logreg_problem_from(ingest_csv(cfg.csv_path, cfg.label_column), cfg.n_clients, cfg.concentration,
                                       cfg.weight_decay, rng);
    }
    throw ConfigError("unknown problem kind");
}

std::vector<std::size_t> sample_clients(std::size_t N, std::size_t S, RngStream& rng) {
    if (S == 0 || S > N) {
        throw ConfigError("sample_clients: need 1 <= S <= N (S=" + std::to_string(S) + ", N=" + std::to_string(N) +
                          ")");
    }
    std::vector<std::size_t> ids(N);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    if (S < N) {
        for (std::size_t i = 0; i < S; ++i) {
            const std::size_t j = i + rng.uniform_index(N - i);
            std::swap(ids[i], ids[j]);
        }
        ids.resize(S);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

RunRecord run_training(const RunConfig& cfg) {
    cfg.validate();
    const FederatedProblem problem = build_problem(cfg.problem, cfg.run.seed);
    return run_training(cfg, problem);
}

RunRecord run_training(const RunConfig& cfg, const FederatedProblem& problem) {
    cfg.validate();
    using clock = std::chrono::steady_clock;
    const auto t_start = clock::now();

    const AlgorithmKind kind = cfg.algorithm.name;
    const MimHyper& hyper = cfg.algorithm.hyper;
    const std::size_t N = problem.num_clients();
    if (hyper.S > N) {
        throw ConfigError("s_participate exceeds the number of clients");
    }

    RunRecord rec;
    rec.config = cfg;
    rec.selection_counts.assign(N, 0);
    if (problem.smoothness_L) {
        const double A = kind == AlgorithmKind::fedmim ? hyper.A() : 1.0;
        rec.eta_bound = validate_eta_l(hyper.eta_l, *problem.smoothness_L, hyper.K, A);
    }
    if (problem.known_optimum) {
        rec.f_star = problem.loss(*problem.known_optimum);
    }

    RoundState state = initial_state(kind, problem.initial_point, hyper, N);
    const bool verify = cfg.run.verify && kind == AlgorithmKind::fedmim;
    std::optional<LemmaVerifier> verifier;
    if (verify) {
        verifier.emplace(hyper, state);
    }
    const Executor executor(cfg.run.threads);

    for (std::size_t t = 0; t < cfg.run.rounds; ++t) {
        const auto t_round = clock::now();
        RngStream sampler = derive_rng(cfg.run.seed, state.round, 0, RngPurpose::client_sampling);
        const std::vector<std::size_t> sampled = sample_clients(N, hyper.S, sampler);
        for (std::size_t id : sampled) {
            ++rec.selection_counts[id];
        }
        const RoundContext ctx{problem, sampled, cfg.run.seed, executor, cfg.run.delta_fault};

        RoundOutcome outcome;
        try {
            outcome = run_round(kind, state, ctx, hyper, cfg.algorithm.base);
        } catch (const DivergenceError&) {
            rec.diverged_round = state.round + 1;
            break;
        }
        if (!outcome.state.x.all_finite()) {
            rec.diverged_round = state.round + 1;
            break;
        }

        std::optional<RoundResiduals> residuals;
        if (verifier) {
            residuals = verifier->observe(state, outcome);
            rec.max_residual_delta = run_max(rec.max_residual_delta, residuals->delta);
            rec.max_residual_u = run_max(rec.max_residual_u, residuals->u);
        }
        const double eta_used = state.eta_l;
        state = std::move(outcome.state);

        const bool record = state.round % cfg.run.metric_every == 0 || t + 1 == cfg.run.rounds;
        if (record) {
            MetricRow row;
            row.round = state.round;
            row.loss = problem.loss(state.x);
            row.grad_norm_sq = l2_norm_sq(problem.gradient(state.x));
            if (verifier) {
                row.grad_norm_sq_at_u = l2_norm_sq(problem.gradient(verifier->u()));
                row.residual_delta = residuals->delta;
                row.residual_u = residuals->u;
            }
            std::vector<ParamVector> finals;
            finals.reserve(outcome.clients.size());
            for (const auto& c : outcome.clients) {
                finals.push_back(c.x_final);
            }
            row.consistency = local_consistency(finals, mean(finals));
            row.delta_norm_sq = l2_norm_sq(state.delta_history.front());
            row.eta_l = eta_used;
            const bool finite = std::isfinite(row.loss) && std::isfinite(row.grad_norm_sq) &&
                                std::isfinite(row.consistency) && std::isfinite(row.delta_norm_sq) &&
                                (!row.grad_norm_sq_at_u || std::isfinite(*row.grad_norm_sq_at_u));
            if (!finite) {
                rec.diverged_round = state.round;
                rec.wall_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t_round).count());
                break;
            }
            rec.rows.push_back(row);
        }
        rec.wall_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t_round).count());
    }

    if (rec.diverged_round) {
        rec.status = "diverged at round " + std::to_string(*rec.diverged_round);
    }
    if (verifier) {
        rec.c_proxy = verifier->delta_tilde_ratio_max();
    }
    rec.final_model = state.x;
    rec.final_loss = problem.loss(state.x);
    rec.wall_ms_total = std::chrono::duration<double, std::milli>(clock::now() - t_start).count();
    return rec;
}

std::vector<SweepRun> run_sweep(const RunConfig& base, const std::string& axis, const std::vector<std::string>& values) {
    static const std::map<std::string, std::string> axis_keys{
        {"S", "s_participate"}, {"K", "k_local"},   {"eta_l", "eta_l"},    {"concentration", "concentration"},
        {"alpha", "alpha"},     {"beta", "beta"},   {"algorithm", "name"}, {"seed", "seed"},
        {"alpha_beta", ""},
    };
    const auto it = axis_keys.find(axis);
    if (it == axis_keys.end()) {
        throw ConfigError("unknown sweep axis '" + axis + "'");
    }
    if (values.empty()) {
        throw ConfigError("sweep needs at least one value");
    }
    std::vector<RunConfig> configs;
    for (const auto& v : values) {
        RunConfig cfg = base;
        if (axis == "alpha_beta") {
            const auto bar = v.find('|');
            if (bar == std::string::npos) {
                throw ConfigError("alpha_beta value '" + v + "': expected alpha|beta");
            }
            apply_key(cfg, "alpha", v.substr(0, bar));
            apply_key(cfg, "beta", v.substr(bar + 1));
        } else {
            apply_key(cfg, it->second, v);
        }
        cfg.validate();
        configs.push_back(std::move(cfg));
    }
    // Problems depend only on the problem section and the seed, so runs that
    // share both also share one problem instance.
    std::optional<FederatedProblem> shared;
    if (axis != "concentration" && axis != "seed") {
        shared = build_problem(base.problem, base.run.seed);
    }
    std::vector<SweepRun> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.push_back({values[i], shared ? run_training(configs[i], *shared) : run_training(configs[i])});
    }
    return out;
}

std::optional<std::size_t> rounds_to_threshold(const RunRecord& record, double threshold) {
    for (const auto& r : record.rows) {
        if (r.grad_norm_sq <= threshold) {
            return r.round;
        }
    }
    return std::nullopt;
}

std::string format_metrics_csv(const std::vector<MetricRow>& rows) {
    std::string out = kMetricsHeader;
    out += '\n';
    for (const auto& r : rows) {
        append_row(out, r);
        out += '\n';
    }
    return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
    write_text(path, format_metrics_csv(rows));
}

std::vector<MetricRow> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) {
        throw std::runtime_error("metrics: unexpected header");
    }
    std::vector<MetricRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> f;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            f.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) {
                break;
            }
            start = comma + 1;
        }
        if (f.size() != 9) {
            throw std::runtime_error("metrics line " + std::to_string(line_no) + ": expected 9 fields");
        }
        auto opt = [&](const std::string& s) -> std::optional<double> {
            if (s.empty()) {
                return std::nullopt;
            }
            return parse_field(s, line_no);
        };
        MetricRow r;
        r.round = static_cast<std::size_t>(parse_field(f[0], line_no));
        r.loss = parse_field(f[1], line_no);
        r.grad_norm_sq = parse_field(f[2], line_no);
        r.grad_norm_sq_at_u = opt(f[3]);
        r.consistency = parse_field(f[4], line_no);
        r.delta_norm_sq = parse_field(f[5], line_no);
        r.residual_delta = opt(f[6]);
        r.residual_u = opt(f[7]);
        r.eta_l = parse_field(f[8], line_no);
        rows.push_back(r);
    }
    return rows;
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error(path.string() + ": cannot open");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_metrics_csv(ss.str());
}

void write_sweep_csv(const std::filesystem::path& path, const std::string& axis, const std::vector<SweepRun>& runs) {
    std::string out = "axis,value,";
    out += kMetricsHeader;
    out += '\n';
    for (const auto& run : runs) {
        // values such as "0.6,0.3" are quoted to keep the column count fixed
        const bool quote = run.value.find_first_of(",\"") != std::string::npos;
        std::string value = run.value;
        if (quote) {
            std::string escaped;
            for (char c : value) {
                escaped += c;
                if (c == '"') {
                    escaped += '"';
                }
            }
            value = "\"" + escaped + "\"";
        }
        for (const auto& r : run.record.rows) {
            out += axis + "," + value + ",";
            append_row(out, r);
            out += '\n';
        }
    }
    write_text(path, out);
}

nlohmann::json run_report(const RunRecord& rec) {
    nlohmann::json j;
    j["config"] = to_json(rec.config);
    j["status"] = rec.status;
    if (rec.eta_bound) {
        j["eta_l_bound"] = {
            {"value", rec.eta_bound->value},
            {"satisfied", rec.eta_bound->satisfied},
            {"sqrt_term", rec.eta_bound->sqrt_term},
            {"linear_term", rec.eta_bound->linear_term},
            {"warning", rec.eta_bound->warning},
        };
    } else {
        j["eta_l_bound"] = nullptr;
    }
    j["final_loss"] = std::isfinite(rec.final_loss) ? nlohmann::json(rec.final_loss) : nlohmann::json(nullptr);
    j["wall_ms_total"] = rec.wall_ms_total;
    j["rounds_completed"] = rec.rows.empty() ? 0 : rec.rows.back().round;
    if (rec.f_star) {
        j["f_star"] = *rec.f_star;
    }
    if (rec.max_residual_delta) {
        j["max_residual_delta"] = *rec.max_residual_delta;
        j["max_residual_u"] = *rec.max_residual_u;
    }
    if (rec.c_proxy) {
        j["delta_tilde_ratio_max"] = *rec.c_proxy;
    }
    return j;
}

void write_run_json(const std::filesystem::path& path, const RunRecord& record) {
    write_text(path, run_report(record).dump(2) + "\n");
}

}  // namespace fedmim
