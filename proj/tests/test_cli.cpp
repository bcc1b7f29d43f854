#include <doctest.h>

#include <unistd.h>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = pbal::cli::main(args, out, err);
    return {code, out.str(), err.str()};
}

class TempDir {
  public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() / ("pbal_cli_test_" + std::to_string(::getpid()) + "_" +
                                             std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] const fs::path& path() const { return path_; }
    [[nodiscard]] std::string str() const { return path_.string(); }

  private:
    fs::path path_;
};

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream f(p);
    std::vector<std::string> lines;
    for (std::string line; std::getline(f, line);) {
        lines.push_back(line);
    }
    return lines;
}

std::vector<std::string> fields(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string item; std::getline(ss, item, ',');) {
        out.push_back(item);
    }
    return out;
}

} // namespace

TEST_CASE("run writes a trace per policy and a summary") {
    TempDir dir;
    const auto r = invoke({"run", "--slots", "300", "--policy", "greedy,naive,proposed", "--out", dir.str()});
    REQUIRE(r.code == 0);
    for (const char* name : {"trace_greedy.csv", "trace_naive.csv", "trace_proposed.csv"}) {
        CAPTURE(name);
        const auto lines = read_lines(dir.path() / name);
        CHECK(lines.size() >= 301);
    }
    const auto summary = read_lines(dir.path() / "summary.csv");
    REQUIRE(summary.size() == 5);
    CHECK(summary[0].rfind("# pbal summary v1", 0) == 0);
    CHECK(summary[1] == "policy,slots,mean_cost,mean_unsatisfied,max_J,min_s,max_s");
    CHECK(fields(summary[2])[0] == "greedy");
    CHECK(fields(summary[4])[1] == "300");
}

TEST_CASE("run with a config file") {
    TempDir dir;
    const fs::path cfg = dir.path() / "cfg.json";
    std::ofstream(cfg) << R"({"V": 0.5, "n_rg": 5, "slots": 100, "policies": ["proposed"]})";
    const auto r = invoke({"run", "--config", cfg.string(), "--out", dir.str()});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir.path() / "trace_proposed.csv"));
    CHECK_FALSE(fs::exists(dir.path() / "trace_greedy.csv"));
}

TEST_CASE("an oversized V is refused with exit code 2") {
    TempDir dir;
    const fs::path cfg = dir.path() / "cfg.json";
    std::ofstream(cfg) << R"({"V": 2.0})";
    const auto r = invoke({"run", "--config", cfg.string(), "--out", dir.str(), "--slots", "10"});
    CHECK(r.code == 2);
    CHECK(r.err.find("V_max") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path() / "summary.csv"));
}

TEST_CASE("usage errors exit with code 2") {
    CHECK(invoke({}).code == 2);
    CHECK(invoke({"frobnicate"}).code == 2);
    CHECK(invoke({"run", "--policy", "clairvoyant"}).code == 2);
    CHECK(invoke({"run", "--config", "/nonexistent/pbal.json"}).code == 2);
    CHECK(invoke({"admm-trace", "--transport", "carrier-pigeon"}).code == 2);
    CHECK(invoke({"sweep", "--slots", "10"}).code == 2);
    CHECK(invoke({"run", "--help"}).code == 0);
}

TEST_CASE("sweep writes one row per value and policy") {
    TempDir dir;
    const auto r = invoke({"sweep", "--parameter", "V", "--values", "0.5,1", "--seeds", "1,2", "--slots", "200",
                           "--policy", "proposed,greedy", "--threads", "1", "--out", dir.str()});
    REQUIRE(r.code == 0);
    const auto lines = read_lines(dir.path() / "sweep_V.csv");
    std::size_t rows = 0;
    for (const auto& l : lines) {
        if (!l.empty() && l[0] != '#' && std::isdigit(static_cast<unsigned char>(l[0]))) {
            ++rows;
        }
    }
    CHECK(rows == 4);
}

TEST_CASE("sweep from a preset honours overrides") {
    TempDir dir;
    const auto r = invoke({"sweep", "--preset", "fig5", "--values", "0.1", "--seeds", "3", "--slots", "100",
                           "--out", dir.str()});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir.path() / "sweep_r.csv"));
}

TEST_CASE("admm-trace is transport independent") {
    TempDir a;
    TempDir b;
    const std::vector<std::string> common{"admm-trace", "--warmup", "50", "--subgradient-iterations", "200"};
    auto args_a = common;
    args_a.insert(args_a.end(), {"--transport", "inproc", "--out", a.str()});
    auto args_b = common;
    args_b.insert(args_b.end(), {"--transport", "socket", "--out", b.str()});
    REQUIRE(invoke(args_a).code == 0);
    REQUIRE(invoke(args_b).code == 0);
    const auto la = read_lines(a.path() / "admm_trace.csv");
    const auto lb = read_lines(b.path() / "admm_trace.csv");
    REQUIRE(la.size() > 3);
    CHECK(la == lb);
    CHECK(la[0].rfind("# pbal admm-trace v1", 0) == 0);
    CHECK(la[1] == "iteration,admm_gap,admm_balance_residual,subgradient_gap,subgradient_balance_residual");

    double last_admm_gap = -1.0;
    for (std::size_t i = 2; i < la.size(); ++i) {
        const auto f = fields(la[i]);
        if (f.size() > 1 && !f[1].empty()) {
            last_admm_gap = std::stod(f[1]);
        }
    }
    CHECK(last_admm_gap >= 0.0);
    CHECK(last_admm_gap <= 1e-6);
}

TEST_CASE("validate prints the derived constants") {
    const auto r = invoke({"validate"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("V_max 1\n") != std::string::npos);
    CHECK(r.out.find("B 18.775\n") != std::string::npos);
    CHECK(r.out.find("J_bound 301\n") != std::string::npos);
    CHECK(r.out.find("beta[0] 35.1\n") != std::string::npos);
    CHECK(r.out.find("s_up[0] 54.2\n") != std::string::npos);
}
