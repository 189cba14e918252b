#include "fedmim/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fedmim {
namespace {

const std::map<std::string, std::string>& key_sections() {
    static const std::map<std::string, std::string> table{
        {"kind", "problem"},          {"n_clients", "problem"},    {"dim", "problem"},
        {"heterogeneity", "problem"}, {"concentration", "problem"}, {"sigma_l", "problem"},
        {"batch_size", "problem"},    {"samples_per_client", "problem"}, {"hidden", "problem"},
        {"classes", "problem"},       {"weight_decay", "problem"}, {"eig_min", "problem"},
        {"eig_max", "problem"},       {"separation", "problem"},   {"csv_path", "problem"},
        {"label_column", "problem"},  {"name", "algorithm"},       {"alpha", "algorithm"},
        {"beta", "algorithm"},        {"eta_l", "algorithm"},      {"k_local", "algorithm"},
        {"s_participate", "algorithm"}, {"lr_decay", "algorithm"}, {"fedcm_alpha", "algorithm"},
        {"adam_beta1", "algorithm"},  {"adam_beta2", "algorithm"}, {"adam_eps", "algorithm"},
        {"global_lr", "algorithm"},   {"rounds", "run"},           {"seed", "run"},
        {"metric_every", "run"},      {"verify", "run"},           {"out_dir", "run"},
        {"threads", "run"},
    };
    return table;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    std::string out = s.substr(b, e - b + 1);
    if (out.size() >= 2 && (out.front() == '"' || out.front() == '\'') && out.back() == out.front()) {
        out = out.substr(1, out.size() - 2);
    }
    return out;
}

double to_double(const std::string& key, const std::string& value) {
    double v = 0.0;
    const std::string t = trim(value);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty() || !std::isfinite(v)) {
        throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
    }
    return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const std::string t = trim(value);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + value + "'");
    }
    return v;
}

bool to_bool(const std::string& key, const std::string& value) {
    const std::string t = trim(value);
    if (t == "true" || t == "1" || t == "yes") {
        return true;
    }
    if (t == "false" || t == "0" || t == "no") {
        return false;
    }
    throw ConfigError("key '" + key + "': expected true|false, got '" + value + "'");
}

struct ParsedFile {
    std::vector<std::pair<std::string, std::string>> entries;  // (section.key, value)
};

ParsedFile parse_ini(std::istream& in, const std::string& origin) {
    ParsedFile out;
    std::string section;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find_first_of("#;");
        const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (t.empty()) {
            continue;
        }
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section header");
            }
            section = trim(t.substr(1, t.size() - 2));
            if (section != "problem" && section != "algorithm" && section != "run") {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        }
        if (section.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": key outside of a section");
        }
        const std::string key = trim(t.substr(0, eq));
        const auto it = key_sections().find(key);
        if (it == key_sections().end() || it->second != section) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "' in [" + section +
                              "]");
        }
        out.entries.emplace_back(section + "." + key, trim(t.substr(eq + 1)));
    }
    return out;
}

RunConfig build(const ParsedFile& file, const std::vector<std::string>& overrides) {
    RunConfig cfg = default_config();
    std::set<std::string> seen;
    for (const auto& [qualified, value] : file.entries) {
        const std::string key = qualified.substr(qualified.find('.') + 1);
        apply_key(cfg, key, value);
        seen.insert(key);
    }
    for (const auto& o : overrides) {
        apply_override(cfg, o);
        const auto eq = o.find('=');
        std::string key = trim(o.substr(0, eq));
        if (const auto dot = key.find('.'); dot != std::string::npos) {
            key = key.substr(dot + 1);
        }
        seen.insert(key);
    }
    for (const char* required : {"kind", "name", "rounds"}) {
        if (!seen.contains(required)) {
            throw ConfigError("missing required key '" + std::string(required) + "' in [" +
                              key_sections().at(required) + "]");
        }
    }
    if (!seen.contains("s_participate")) {
        cfg.algorithm.hyper.S = cfg.problem.n_clients;
    }
    cfg.validate();
    return cfg;
}

std::string format_weights(const std::vector<double>& w) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < w.size(); ++i) {
        os << (i ? "," : "") << w[i];
    }
    return os.str();
}

}  // namespace

std::string_view to_string(ProblemKind kind) {
    switch (kind) {
        case ProblemKind::quadratic:
            return "quadratic";
        case ProblemKind::logreg:
            return "logreg";
        case ProblemKind::mlp:
            return "mlp";
        case ProblemKind::csv:
            return "csv";
    }
    return "unknown";
}

std::vector<double> parse_weights(const std::string& value) {
    std::vector<double> out;
    std::string t = trim(value);
    if (t.empty() || t == "none") {
        return out;
    }
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(to_double("weights", item));
    }
    return out;
}

RunConfig default_config() {
    RunConfig cfg;
    cfg.algorithm.hyper.S = cfg.problem.n_clients;
    return cfg;
}

void apply_key(RunConfig& cfg, const std::string& key, const std::string& raw) {
    const std::string value = trim(raw);
    auto& p = cfg.problem;
    auto& h = cfg.algorithm.hyper;
    auto& b = cfg.algorithm.base;
    auto& r = cfg.run;
    if (key == "kind") {
        if (value == "quadratic") {
            p.kind = ProblemKind::quadratic;
        } else if (value == "logreg") {
            p.kind = ProblemKind::logreg;
        } else if (value == "mlp") {
            p.kind = ProblemKind::mlp;
        } else if (value == "csv") {
            p.kind = ProblemKind::csv;
        } else {
            throw ConfigError("key 'kind': expected quadratic|logreg|mlp|csv, got '" + value + "'");
        }
    } else if (key == "n_clients") {
        p.n_clients = to_uint(key, value);
    } else if (key == "dim") {
        p.dim = to_uint(key, value);
    } else if (key == "heterogeneity") {
        p.heterogeneity = to_double(key, value);
    } else if (key == "concentration") {
        if (value == "iid") {
            p.concentration.reset();
        } else {
            p.concentration = to_double(key, value);
        }
    } else if (key == "sigma_l") {
        p.sigma_l = to_double(key, value);
    } else if (key == "batch_size") {
        h.batch_size = to_uint(key, value);
    } else if (key == "samples_per_client") {
        p.samples_per_client = to_uint(key, value);
    } else if (key == "hidden") {
        p.hidden = to_uint(key, value);
    } else if (key == "classes") {
        p.classes = to_uint(key, value);
    } else if (key == "weight_decay") {
        p.weight_decay = to_double(key, value);
    } else if (key == "eig_min") {
        p.eig_min = to_double(key, value);
    } else if (key == "eig_max") {
        p.eig_max = to_double(key, value);
    } else if (key == "separation") {
        p.separation = to_double(key, value);
    } else if (key == "csv_path") {
        p.csv_path = value;
    } else if (key == "label_column") {
        p.label_column = value;
    } else if (key == "name") {
        const auto kind = parse_algorithm(value);
        if (!kind) {
            throw ConfigError("key 'name': expected fedavg|fedmim|fedcm|scaffold|fedadam, got '" + value + "'");
        }
        cfg.algorithm.name = *kind;
    } else if (key == "alpha") {
        h.alpha = parse_weights(value);
    } else if (key == "beta") {
        h.beta = parse_weights(value);
    } else if (key == "eta_l") {
        h.eta_l = to_double(key, value);
    } else if (key == "k_local") {
        h.K = to_uint(key, value);
    } else if (key == "s_participate") {
        h.S = to_uint(key, value);
    } else if (key == "lr_decay") {
        h.lr_decay = to_double(key, value);
    } else if (key == "fedcm_alpha") {
        b.fedcm_alpha = to_double(key, value);
    } else if (key == "adam_beta1") {
        b.adam_beta1 = to_double(key, value);
    } else if (key == "adam_beta2") {
        b.adam_beta2 = to_double(key, value);
    } else if (key == "adam_eps") {
        b.adam_eps = to_double(key, value);
    } else if (key == "global_lr") {
        b.global_lr = to_double(key, value);
    } else if (key == "rounds") {
        r.rounds = to_uint(key, value);
    } else if (key == "seed") {
        r.seed = to_uint(key, value);
    } else if (key == "metric_every") {
        r.metric_every = to_uint(key, value);
    } else if (key == "verify") {
        r.verify = to_bool(key, value);
    } else if (key == "out_dir") {
        r.out_dir = value;
    } else if (key == "threads") {
        r.threads = to_uint(key, value);
    } else {
        throw ConfigError("unknown key '" + key + "'");
    }
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + assignment + "': expected key=value");
    }
    std::string key = trim(assignment.substr(0, eq));
    if (const auto dot = key.find('.'); dot != std::string::npos) {
        const std::string section = key.substr(0, dot);
        key = key.substr(dot + 1);
        const auto it = key_sections().find(key);
        if (it == key_sections().end() || it->second != section) {
            throw ConfigError("override '" + assignment + "': unknown key");
        }
    }
    if (!key_sections().contains(key)) {
        throw ConfigError("override '" + assignment + "': unknown key '" + key + "'");
    }
    apply_key(cfg, key, assignment.substr(eq + 1));
}

void RunConfig::validate() const {
    const auto& p = problem;
    if (p.n_clients == 0) {
        throw ConfigError("n_clients must be at least 1");
    }
    if (p.kind != ProblemKind::csv && p.dim == 0) {
        throw ConfigError("dim must be at least 1");
    }
    if (p.concentration && !(*p.concentration > 0.0)) {
        throw ConfigError("concentration must be positive or 'iid'");
    }
    if (p.sigma_l < 0.0 || p.heterogeneity < 0.0 || p.weight_decay < 0.0) {
        throw ConfigError("sigma_l, heterogeneity and weight_decay must be non-negative");
    }
    if (p.samples_per_client == 0 || p.hidden == 0 || p.classes == 0) {
        throw ConfigError("samples_per_client, hidden and classes must be positive");
    }
    if (p.kind == ProblemKind::csv && p.csv_path.empty()) {
        throw ConfigError("kind=csv requires csv_path");
    }
    if (!(p.eig_min > 0.0) || p.eig_max < p.eig_min) {
        throw ConfigError("need 0 < eig_min <= eig_max");
    }
    try {
        algorithm.hyper.validate(p.n_clients);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const auto& b = algorithm.base;
    if (b.fedcm_alpha < 0.0 || b.fedcm_alpha >= 1.0) {
        throw ConfigError("fedcm_alpha must lie in [0, 1)");
    }
    if (b.adam_beta1 < 0.0 || b.adam_beta1 >= 1.0 || b.adam_beta2 < 0.0 || b.adam_beta2 >= 1.0) {
        throw ConfigError("adam_beta1 and adam_beta2 must lie in [0, 1)");
    }
    if (!(b.adam_eps > 0.0) || !(b.global_lr > 0.0)) {
        throw ConfigError("adam_eps and global_lr must be positive");
    }
    if (run.rounds == 0) {
        throw ConfigError("rounds must be at least 1");
    }
    if (run.metric_every == 0) {
        throw ConfigError("metric_every must be at least 1");
    }
}

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
    std::istringstream in(text);
    return build(parse_ini(in, "<config>"), overrides);
}

RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path.string() + ": cannot open config file");
    }
    return build(parse_ini(in, path.string()), overrides);
}

nlohmann::json to_json(const RunConfig& cfg) {
    const auto& p = cfg.problem;
    const auto& h = cfg.algorithm.hyper;
    const auto& b = cfg.algorithm.base;
    nlohmann::json j;
    j["problem"] = {
        {"kind", std::string(to_string(p.kind))},
        {"n_clients", p.n_clients},
        {"dim", p.dim},
        {"heterogeneity", p.heterogeneity},
        {"concentration", p.concentration ? nlohmann::json(*p.concentration) : nlohmann::json("iid")},
        {"sigma_l", p.sigma_l},
        {"batch_size", h.batch_size},
        {"samples_per_client", p.samples_per_client},
        {"hidden", p.hidden},
        {"classes", p.classes},
        {"weight_decay", p.weight_decay},
        {"eig_min", p.eig_min},
        {"eig_max", p.eig_max},
        {"separation", p.separation},
        {"csv_path", p.csv_path},
        {"label_column", p.label_column},
    };
    j["algorithm"] = {
        {"name", std::string(to_string(cfg.algorithm.name))},
        {"alpha", format_weights(h.alpha)},
        {"beta", format_weights(h.beta)},
        {"eta_l", h.eta_l},
        {"k_local", h.K},
        {"s_participate", h.S},
        {"lr_decay", h.lr_decay},
        {"fedcm_alpha", b.fedcm_alpha},
        {"adam_beta1", b.adam_beta1},
        {"adam_beta2", b.adam_beta2},
        {"adam_eps", b.adam_eps},
        {"global_lr", b.global_lr},
    };
    j["run"] = {
        {"rounds", cfg.run.rounds},
        {"seed", cfg.run.seed},
        {"metric_every", cfg.run.metric_every},
        {"verify", cfg.run.verify},
        {"out_dir", cfg.run.out_dir},
        {"threads", cfg.run.threads},
    };
    return j;
}

}  // namespace fedmim
