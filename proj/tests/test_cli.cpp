#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fedmim/simulator.hpp"

namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path dir = fs::temp_directory_path() / ("fedmim_cli_test_" + std::to_string(::getpid()));
    Scratch() { fs::create_directories(dir); }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
};

const fs::path& workdir() {
    static const Scratch scratch;
    return scratch.dir;
}

fs::path config(const std::string& name, const std::string& text) {
    const fs::path p = workdir() / name;
    std::ofstream(p) << text;
    return p;
}

int cli(const std::string& args) {
    const std::string cmd = std::string(FEDMIM_CLI) + " " + args + " > " + (workdir() / "stdout.txt").string() +
                            " 2> " + (workdir() / "stderr.txt").string();
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) {
        n += c == '\n' ? 1 : 0;
    }
    return n;
}

const char* kQuad =
    "[problem]\nkind = quadratic\nn_clients = 6\n"
    "[algorithm]\nname = fedmim\ns_participate = 6\n"
    "[run]\nrounds = 5\nseed = 42\n";

}  // namespace

TEST_CASE("run writes one row per round plus the header") {
    const fs::path cfg = config("q.ini", kQuad);
    const fs::path out = workdir() / "run5";
    REQUIRE(cli("run -c " + cfg.string() + " -o " + out.string()) == 0);
    const std::string csv = slurp(out / "metrics.csv");
    CHECK(line_count(csv) == 6);
    CHECK(csv.rfind(std::string(fedmim::kMetricsHeader) + "\n", 0) == 0);
    CHECK(fedmim::parse_metrics_csv(csv).size() == 5);

    const auto report = nlohmann::json::parse(slurp(out / "run.json"));
    CHECK(report.at("status") == "completed");
    CHECK(report.at("final_loss").is_number());
    CHECK(report.at("wall_ms_total").is_number());
    CHECK(report.at("eta_l_bound").at("value").get<double>() > 0.0);
    CHECK(report.at("eta_l_bound").at("satisfied").is_boolean());
    CHECK(report.at("config").at("algorithm").at("name") == "fedmim");
}

TEST_CASE("overrides take precedence and are echoed") {
    const fs::path cfg = config("q.ini", kQuad);
    const fs::path out = workdir() / "override";
    REQUIRE(cli("run -c " + cfg.string() + " -o " + out.string() + " -s eta_l=0.05 -s run.rounds=3") == 0);
    const auto report = nlohmann::json::parse(slurp(out / "run.json"));
    CHECK(report.at("config").at("algorithm").at("eta_l").get<double>() == 0.05);
    CHECK(line_count(slurp(out / "metrics.csv")) == 4);
}

TEST_CASE("identical invocations give identical metrics") {
    const fs::path cfg = config("q.ini", kQuad);
    const std::string base = "run -c " + cfg.string() + " -s rounds=40 -s s_participate=3 -o ";
    REQUIRE(cli(base + (workdir() / "d1").string()) == 0);
    REQUIRE(cli(base + (workdir() / "d2").string()) == 0);
    REQUIRE(cli(base + (workdir() / "d3").string() + " -j 4") == 0);
    const std::string a = slurp(workdir() / "d1" / "metrics.csv");
    CHECK(a == slurp(workdir() / "d2" / "metrics.csv"));
    CHECK(a == slurp(workdir() / "d3" / "metrics.csv"));
    REQUIRE(cli(base + (workdir() / "d4").string() + " --seed 7") == 0);
    CHECK(a != slurp(workdir() / "d4" / "metrics.csv"));
}

TEST_CASE("a diverging run exits 2") {
    const fs::path cfg = config("mlp.ini",
                                "[problem]\nkind = mlp\nn_clients = 4\nhidden = 32\n"
                                "[algorithm]\nname = fedmim\ns_participate = 4\neta_l = 10\n"
                                "[run]\nrounds = 50\nseed = 0\n");
    const fs::path out = workdir() / "diverge";
    CHECK(cli("run -c " + cfg.string() + " -o " + out.string()) == 2);
    const auto report = nlohmann::json::parse(slurp(out / "run.json"));
    CHECK(report.at("status").get<std::string>().find("diverged") != std::string::npos);
}

TEST_CASE("verify") {
    const std::string cfg = config("v.ini", kQuad).string();
    SUBCASE("default quadratic passes") {
        CHECK(cli("verify -c " + cfg + " -s rounds=100 -o " + (workdir() / "v1").string()) == 0);
        CHECK(slurp(workdir() / "stdout.txt").find("max residual_u") != std::string::npos);
    }
    SUBCASE("corrupted increments are caught") {
        CHECK(cli("verify -c " + cfg + " -s rounds=20 --corrupt-delta 1e-3 -o " + (workdir() / "v2").string()) == 3);
        CHECK(slurp(workdir() / "stderr.txt").find("lemma residual exceeded") != std::string::npos);
    }
    SUBCASE("zero inertia has residuals at rounding level") {
        const fs::path out = workdir() / "v3";
        CHECK(cli("verify -c " + cfg + " -s rounds=50 -s alpha=0,0 -s beta=0,0 -o " + out.string()) == 0);
        const auto report = nlohmann::json::parse(slurp(out / "run.json"));
        CHECK(report.at("max_residual_delta").get<double>() <= 1e-12);
        CHECK(report.at("max_residual_u").get<double>() <= 1e-12);
    }
    SUBCASE("other algorithms are refused") {
        CHECK(cli("verify -c " + cfg + " -s name=fedavg -o " + (workdir() / "v4").string()) == 1);
    }
}

TEST_CASE("sweep writes a combined table") {
    const fs::path cfg = config("q.ini", kQuad);
    const fs::path out = workdir() / "sweep";
    REQUIRE(cli("sweep -c " + cfg.string() + " --axis algorithm --values 'fedavg;fedmim' -o " + out.string()) == 0);
    const std::string csv = slurp(out / "sweep.csv");
    CHECK(line_count(csv) == 11);
    CHECK(csv.find("algorithm,fedavg,5,") != std::string::npos);
    CHECK(csv.find("algorithm,fedmim,5,") != std::string::npos);
    CHECK(nlohmann::json::parse(slurp(out / "sweep.json")).size() == 2);
    CHECK(cli("sweep -c " + cfg.string() + " --axis nonsense --values 1 -o " + out.string()) == 1);
}

TEST_CASE("gradcheck passes on smooth objectives") {
    const fs::path cfg = config("lr.ini",
                                "[problem]\nkind = logreg\nn_clients = 3\n"
                                "[algorithm]\nname = fedmim\n[run]\nrounds = 1\n");
    CHECK(cli("gradcheck -c " + cfg.string()) == 0);
}

TEST_CASE("configuration errors exit 1") {
    const fs::path good = config("q.ini", kQuad);
    const std::string out = " -o " + (workdir() / "bad").string();
    CHECK(cli("run -c " + (workdir() / "missing.ini").string() + out) == 1);
    CHECK(cli("run -c " + good.string() + " -s alpha=0.7,0.4" + out) == 1);
    CHECK(slurp(workdir() / "stderr.txt").find("alpha weights must sum below 1") != std::string::npos);
    CHECK(cli("run -c " + good.string() + " -s colour=blue" + out) == 1);
    CHECK(cli("run -c " + good.string() + " -s rounds=many" + out) == 1);
    CHECK(cli("run -c " + config("norounds.ini", "[problem]\nkind = quadratic\n[algorithm]\nname = fedmim\n").string() +
              out) == 1);
    CHECK(cli("run" + out) == 1);
    CHECK(cli("frobnicate") == 1);
}
