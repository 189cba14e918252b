#pragma once

// Run configuration and its INI-style file format:
//
//   [problem]   kind, n_clients, dim, heterogeneity, concentration, sigma_l,
//               batch_size, samples_per_client, hidden, classes, weight_decay,
//               eig_min, eig_max, separation, csv_path, label_column
//   [algorithm] name, alpha, beta, eta_l, k_local, s_participate, lr_decay,
//               fedcm_alpha, adam_beta1, adam_beta2, adam_eps, global_lr
//   [run]       rounds, seed, metric_every, verify, out_dir, threads
//
// Keys are unique across sections, so overrides may be given as `key=value`
// or `section.key=value`.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedmim/algorithms.hpp"

namespace fedmim {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ProblemKind { quadratic, logreg, mlp, csv };

std::string_view to_string(ProblemKind kind);

struct ProblemConfig {
    ProblemKind kind = ProblemKind::quadratic;
    std::size_t n_clients = 10;
    std::size_t dim = 10;
    double heterogeneity = 1.0;
    std::optional<double> concentration;  // nullopt = iid
    double sigma_l = 0.1;
    std::size_t samples_per_client = 50;
    std::size_t hidden = 8;
    std::size_t classes = 2;
    double weight_decay = 1e-3;
    double eig_min = 0.1;
    double eig_max = 1.0;
    double separation = 1.0;
    std::string csv_path;
    std::string label_column = "label";
};

struct AlgorithmConfig {
    AlgorithmKind name = AlgorithmKind::fedmim;
    MimHyper hyper;
    BaselineHyper base;
};

struct RunSettings {
    std::size_t rounds = 1;
    std::uint64_t seed = 0;
    std::size_t metric_every = 1;
    bool verify = false;
    std::string out_dir = ".";
    std::size_t threads = 1;
    // Test hook for the verifier: offset added to every stored increment.
    double delta_fault = 0.0;
};

struct RunConfig {
    ProblemConfig problem;
    AlgorithmConfig algorithm;
    RunSettings run;

    // Throws ConfigError on any constraint violation.
    void validate() const;
};

// Defaults for every optional key; rounds still has to be set.
RunConfig default_config();

// Parses `path`, applies overrides in order, validates. Missing required keys
// ([problem] kind, [algorithm] name, [run] rounds) are errors.
RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// Same as parse_config on in-memory text.
RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {});

// Applies one `key=value` / `section.key=value` assignment without validating.
void apply_override(RunConfig& cfg, const std::string& assignment);
void apply_key(RunConfig& cfg, const std::string& key, const std::string& value);

// Config echo in the same key space as the file format.
nlohmann::json to_json(const RunConfig& cfg);

std::vector<double> parse_weights(const std::string& value);

}  // namespace fedmim
