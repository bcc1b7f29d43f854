#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "pbal/admm.hpp"
#include "pbal/config.hpp"
#include "pbal/model.hpp"
#include "pbal/netharness.hpp"
#include "pbal/sim.hpp"
#include "pbal/solvers.hpp"

namespace pbal::cli {

namespace {

namespace fs = std::filesystem;

// Usage or configuration problem; reported with exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config;
    std::string preset;
    std::string policy;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> slots;
    std::string out;
};

struct SweepFlags {
    std::string parameter;
    std::string values;
    std::string seeds;
    std::size_t threads = 0;
};

struct TraceFlags {
    std::string transport = "inproc";
    std::optional<std::size_t> warmup;
    std::size_t subgradient_iterations = 1000;
};

void add_common(CLI::App& cmd, Common& c, bool with_policy) {
    cmd.add_option("--config", c.config, "JSON configuration file");
    cmd.add_option("--preset", c.preset, "Start from a preset: fig3, fig4, fig5, fig6, fig7");
    if (with_policy) {
        cmd.add_option("--policy", c.policy, "Comma-separated policies: proposed,greedy,naive");
    }
    cmd.add_option("--seed", c.seed, "Scenario seed");
    cmd.add_option("--slots", c.slots, "Number of simulated slots");
    cmd.add_option("--out", c.out, "Output directory");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

template <class T, class Parse>
std::vector<T> parse_list(const std::string& s, const char* what, Parse parse) {
    std::vector<T> out;
    for (const auto& item : split_list(s)) {
        try {
            out.push_back(parse(item));
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": cannot parse '" + item + "'");
        }
    }
    if (out.empty()) {
        throw UsageError(std::string(what) + ": empty list");
    }
    return out;
}

RunConfig resolve(const Common& c) {
    RunConfig cfg;
    try {
        if (!c.preset.empty()) {
            cfg = preset(c.preset);
        }
        if (!c.config.empty()) {
            cfg = load_config(c.config, cfg);
        }
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    if (!c.policy.empty()) {
        cfg.policies = parse_list<Policy>(c.policy, "--policy", [](const std::string& s) { return parse_policy(s); });
    }
    if (c.seed) {
        cfg.seed = *c.seed;
        cfg.seeds.clear();
    }
    if (c.slots) {
        cfg.slots = *c.slots;
    }
    if (!c.out.empty()) {
        cfg.out = c.out;
    }
    return cfg;
}

void check(const RunConfig& cfg) {
    try {
        validate(cfg);
    } catch (const ValidationError& e) {
        throw UsageError(std::string("invalid configuration: ") + e.what());
    } catch (const ConfigError& e) {
        throw UsageError(std::string("invalid configuration: ") + e.what());
    }
}

fs::path prepare_out(const RunConfig& cfg) {
    fs::path dir(cfg.out);
    fs::create_directories(dir);
    return dir;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path);
    if (!f) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return f;
}

int cmd_run(const Common& c, std::ostream& out) {
    const RunConfig cfg = resolve(c);
    check(cfg);
    const fs::path dir = prepare_out(cfg);
    const Scenario scenario{cfg.seed, cfg.slots};

    auto summary = open_out(dir / "summary.csv");
    summary << "# pbal summary v1 seed=" << cfg.seed << " slots=" << cfg.slots << '\n';
    summary << "policy,slots,mean_cost,mean_unsatisfied,max_J,min_s,max_s\n";
    summary << std::setprecision(12);
    out << std::left << std::setw(10) << "policy" << std::setw(14) << "mean_cost" << std::setw(14)
        << "unsatisfied" << "max_J\n";
    for (Policy p : cfg.policies) {
        const Trace trace = run(p, scenario, cfg.params);
        const fs::path path = dir / ("trace_" + std::string(to_string(p)) + ".csv");
        auto f = open_out(path);
        write_trace_csv(f, trace);
        const auto& s = trace.summary;
        summary << to_string(p) << ',' << s.slots << ',' << s.mean_cost << ',' << s.mean_unsatisfied << ','
                << s.max_J << ',' << s.min_s << ',' << s.max_s << '\n';
        out << std::left << std::setw(10) << to_string(p) << std::setw(14) << s.mean_cost << std::setw(14)
            << s.mean_unsatisfied << s.max_J << '\n';
    }
    out << "wrote " << cfg.policies.size() << " trace(s) and summary.csv to " << dir.string() << '\n';
    return 0;
}

int cmd_sweep(const Common& c, const SweepFlags& flags, std::ostream& out) {
    RunConfig cfg = resolve(c);
    if (!flags.parameter.empty() || !flags.values.empty()) {
        SweepConfig sw = cfg.sweep.value_or(SweepConfig{});
        if (!flags.parameter.empty()) {
            try {
                sw.parameter = parse_sweep_parameter(flags.parameter);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
        }
        if (!flags.values.empty()) {
            sw.values = parse_list<double>(flags.values, "--values", [](const std::string& s) { return std::stod(s); });
        }
        cfg.sweep = sw;
    }
    if (!flags.seeds.empty()) {
        cfg.seeds = parse_list<std::uint64_t>(flags.seeds, "--seeds",
                                              [](const std::string& s) { return std::stoull(s); });
    }
    if (!cfg.sweep) {
        throw UsageError("sweep: no sweep specified (use --preset, a config 'sweep' key, or --parameter/--values)");
    }
    check(cfg);
    const fs::path dir = prepare_out(cfg);

    SweepSpec spec;
    spec.parameter = cfg.sweep->parameter;
    spec.values = cfg.sweep->values;
    spec.policies = cfg.policies;
    spec.seeds = cfg.sweep_seeds();
    spec.slots = cfg.slots;
    spec.lower_bound = cfg.sweep->lower_bound;
    spec.threads = flags.threads;
    const auto rows = sweep(cfg.params, spec);

    const fs::path path = dir / ("sweep_" + std::string(to_string(spec.parameter)) + ".csv");
    auto f = open_out(path);
    write_sweep_csv(f, spec.parameter, rows);

    out << std::left << std::setw(10) << to_string(spec.parameter) << std::setw(10) << "policy" << std::setw(14)
        << "cost" << std::setw(14) << "unsatisfied" << "lower_bound\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(10) << r.value << std::setw(10) << to_string(r.policy) << std::setw(14)
            << r.mean_cost << std::setw(14) << r.mean_unsatisfied;
        if (spec.lower_bound) {
            out << r.lower_bound;
        }
        out << '\n';
    }
    out << "wrote " << path.string() << '\n';
    return 0;
}

int cmd_admm_trace(const Common& c, const TraceFlags& flags, std::ostream& out) {
    RunConfig cfg = resolve(c);
    if (flags.warmup) {
        cfg.warmup = *flags.warmup;
    }
    net::TransportKind transport{};
    try {
        transport = net::parse_transport(flags.transport);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    check(cfg);
    const fs::path dir = prepare_out(cfg);

    const SlotInstance inst = slot_instance(cfg.params, cfg.seed, cfg.warmup);
    const SeparableProblem& p = inst.problem;
    const Solution exact = solve_dual_bisection(p);

    net::ProtocolOptions popts;
    popts.transport = transport;
    popts.admm.rho = cfg.params.rho;
    const auto proto = net::run_protocol(net::split(p, inst.state.a), popts);
    const auto& admm = proto.admm;

    SubgradientOptions sopts;
    sopts.max_iter = flags.subgradient_iterations;
    const auto sub = run_subgradient(p, sopts);

    const fs::path path = dir / "admm_trace.csv";
    auto f = open_out(path);
    f << "# pbal admm-trace v1 seed=" << cfg.seed << " slot=" << cfg.warmup << " rho=" << cfg.params.rho
      << " optimum=" << std::setprecision(17) << exact.objective << '\n';
    f << "iteration,admm_gap,admm_balance_residual,subgradient_gap,subgradient_balance_residual\n";
    const std::size_t rows = std::max(admm.history.size(), sub.history.size());
    std::vector<double> ks;
    std::vector<double> sub_gaps;
    for (std::size_t k = 0; k < rows; ++k) {
        f << k + 1 << ',';
        if (k < admm.history.size()) {
            f << std::abs(admm.history[k].objective - exact.objective) << ',' << admm.history[k].balance_residual;
        } else {
            f << ',';
        }
        f << ',';
        if (k < sub.history.size()) {
            const double gap = exact.objective - sub.history[k].dual_value;
            f << gap << ',' << sub.history[k].balance_residual;
            ks.push_back(static_cast<double>(k + 1));
            sub_gaps.push_back(gap);
        } else {
            f << ',';
        }
        f << '\n';
    }

    const double admm_gap = admm.history.empty() ? 0.0 : std::abs(admm.history.back().objective - exact.objective);
    out << std::setprecision(6) << "optimum " << exact.objective << " (dual bisection)\n"
        << "admm: " << admm.solution.iterations << " iterations, converged=" << std::boolalpha
        << admm.solution.converged << ", final gap " << admm_gap << ", messages " << proto.counts.total() << " via "
        << net::to_string(transport) << '\n'
        << "subgradient: " << sub.history.size() << " iterations, final gap "
        << (sub_gaps.empty() ? 0.0 : sub_gaps.back()) << ", log-log slope " << loglog_slope(ks, sub_gaps) << '\n'
        << "wrote " << path.string() << '\n';
    return 0;
}

int cmd_validate(const Common& c, std::ostream& out) {
    const RunConfig cfg = resolve(c);
    check(cfg);
    const auto& p = cfg.params;
    out << std::setprecision(10) << "configuration ok\n"
        << "n_rg " << p.n_rg << "\nV " << p.V << "\nV_max " << v_max(p) << "\nB " << drift_constant_B(p)
        << "\nJ_bound " << j_bound(p) << "\nbeta[0] " << beta(p).front() << "\ns_up[0] " << s_up(p).front() << '\n';
    return 0;
}

} // namespace

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"pbal: power balancing with storage, ramping and flexible loads"};
    app.require_subcommand(1);

    Common run_c;
    Common sweep_c;
    Common trace_c;
    Common validate_c;
    SweepFlags sweep_f;
    TraceFlags trace_f;

    auto* run_cmd = app.add_subcommand("run", "Simulate policies and write per-slot traces");
    add_common(*run_cmd, run_c, true);

    auto* sweep_cmd = app.add_subcommand("sweep", "Seed-averaged cost over a parameter sweep");
    add_common(*sweep_cmd, sweep_c, true);
    sweep_cmd->add_option("--parameter", sweep_f.parameter, "V, alpha or r");
    sweep_cmd->add_option("--values", sweep_f.values, "Comma-separated sweep values");
    sweep_cmd->add_option("--seeds", sweep_f.seeds, "Comma-separated seeds to average over");
    sweep_cmd->add_option("--threads", sweep_f.threads, "Worker threads (0 = hardware concurrency)");

    auto* trace_cmd = app.add_subcommand("admm-trace", "ADMM and subgradient gap on one slot's problem");
    add_common(*trace_cmd, trace_c, false);
    trace_cmd->add_option("--transport", trace_f.transport, "inproc or socket")
        ->check(CLI::IsMember({"inproc", "socket"}));
    trace_cmd->add_option("--warmup", trace_f.warmup, "Proposed-policy slots before the traced slot");
    trace_cmd->add_option("--subgradient-iterations", trace_f.subgradient_iterations,
                          "Iterations of the subgradient baseline");

    auto* validate_cmd = app.add_subcommand("validate", "Check a configuration and print derived bounds");
    add_common(*validate_cmd, validate_c, false);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run_cmd->parsed()) {
            return cmd_run(run_c, out);
        }
        if (sweep_cmd->parsed()) {
            return cmd_sweep(sweep_c, sweep_f, out);
        }
        if (trace_cmd->parsed()) {
            return cmd_admm_trace(trace_c, trace_f, out);
        }
        return cmd_validate(validate_c, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace pbal::cli
