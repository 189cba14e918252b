#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fedmim/config.hpp"

using namespace fedmim;

namespace {

const char* kMinimal = R"(
[problem]
kind = quadratic
[algorithm]
name = fedmim
[run]
rounds = 10
)";

}  // namespace

TEST_CASE("minimal config fills defaults") {
    const RunConfig c = parse_config_text(kMinimal);
    CHECK(c.problem.kind == ProblemKind::quadratic);
    CHECK(c.algorithm.name == AlgorithmKind::fedmim);
    CHECK(c.run.rounds == 10);
    CHECK(c.algorithm.hyper.alpha == std::vector<double>{0.6, 0.3});
    CHECK(c.algorithm.hyper.beta == std::vector<double>{0.9, 0.1});
    CHECK(c.algorithm.hyper.lr_decay == 0.998);
    CHECK(c.problem.weight_decay == 1e-3);
    CHECK(c.algorithm.base.fedcm_alpha == 0.1);
    CHECK(c.algorithm.base.global_lr == 0.1);
    CHECK(c.algorithm.hyper.S == c.problem.n_clients);
    CHECK_FALSE(c.problem.concentration.has_value());
}

TEST_CASE("alpha weights summing to one or more are rejected") {
    CHECK_THROWS_WITH_AS(parse_config_text(kMinimal, {"alpha=0.7,0.4"}), "alpha weights must sum below 1",
                         ConfigError);
}

TEST_CASE("overrides take precedence and are echoed") {
    const std::string text = std::string(kMinimal) + "";
    const RunConfig c = parse_config_text(R"(
[problem]
kind = logreg
concentration = 0.1
[algorithm]
name = fedavg
eta_l = 0.1
[run]
rounds = 3
)",
                                          {"eta_l=0.05", "algorithm.k_local=4", "problem.concentration=iid"});
    CHECK(c.algorithm.hyper.eta_l == 0.05);
    CHECK(c.algorithm.hyper.K == 4);
    CHECK_FALSE(c.problem.concentration.has_value());
    CHECK(to_json(c)["algorithm"]["eta_l"] == 0.05);
    CHECK(to_json(c)["problem"]["concentration"] == "iid");
}

TEST_CASE("missing required keys") {
    CHECK_THROWS_WITH_AS(parse_config_text("[problem]\nkind=quadratic\n[algorithm]\nname=fedmim\n"),
                         doctest::Contains("rounds"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[algorithm]\nname=fedmim\n[run]\nrounds=1\n"),
                         doctest::Contains("kind"), ConfigError);
    // a required key may also come from an override
    CHECK_NOTHROW(parse_config_text("[problem]\nkind=quadratic\n[algorithm]\nname=fedmim\n", {"rounds=2"}));
}

TEST_CASE("type and constraint errors") {
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"rounds=ten"}), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"rounds=0"}), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"metric_every=0"}), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"name=fedprox"}), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"kind=images"}), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"verify=maybe"}), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"s_participate=11"}), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"concentration=-1"}), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"kind=csv"}), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"eta_l=nan"}), ConfigError);
}

TEST_CASE("unknown keys and sections are rejected") {
    CHECK_THROWS_WITH_AS(parse_config_text(kMinimal, {"bogus=1"}), doctest::Contains("bogus"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"run.eta_l=0.1"}), ConfigError);
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"noequals"}), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[problem]\nkind=quadratic\nfoo=1\n[algorithm]\nname=fedmim\n[run]\nrounds=1\n"),
                    ConfigError);
    CHECK_THROWS_AS(parse_config_text("[extras]\nx=1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("kind=quadratic\n"), ConfigError);
}

TEST_CASE("comments, quotes and weights") {
    const RunConfig c = parse_config_text(R"(
# leading comment
[problem]
kind = "mlp"   ; trailing comment
hidden = 12
[algorithm]
name = fedmim
alpha = 0.5, 0.2, 0.1
beta = 0.3
[run]
rounds = 2
verify = true
)");
    CHECK(c.problem.kind == ProblemKind::mlp);
    CHECK(c.problem.hidden == 12);
    CHECK(c.algorithm.hyper.alpha == std::vector<double>{0.5, 0.2, 0.1});
    CHECK(c.algorithm.hyper.J() == 3);
    CHECK(c.run.verify);
    CHECK(parse_weights("none").empty());
}

TEST_CASE("config files on disk") {
    const auto path = std::filesystem::temp_directory_path() / "fedmim_config_test.ini";
    std::ofstream(path) << kMinimal;
    CHECK(parse_config(path, {"seed=5"}).run.seed == 5);
    CHECK_THROWS_AS(parse_config("/nonexistent/config.ini"), ConfigError);
}
