#include "pbal/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>

#include "pbal/solvers.hpp"

namespace pbal {

namespace {

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double uniform_in(double lo, double hi, double u) { return lo + (hi - lo) * u; }

ProblemVariant variant_for(Policy p) {
    switch (p) {
    case Policy::proposed:
        return ProblemVariant::proposed;
    case Policy::greedy:
        return ProblemVariant::greedy;
    case Policy::naive:
        return ProblemVariant::unramped;
    }
    throw std::invalid_argument("unknown policy");
}

struct RunningStats {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n = 0;

    void add(double v) {
        sum += v;
        sum_sq += v * v;
        ++n;
    }
    [[nodiscard]] double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    [[nodiscard]] double stderr_of_mean() const {
        if (n < 2) {
            return 0.0;
        }
        const double m = mean();
        const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
        return std::sqrt(var / static_cast<double>(n));
    }
};

} // namespace

std::string_view to_string(Policy p) {
    switch (p) {
    case Policy::proposed:
        return "proposed";
    case Policy::greedy:
        return "greedy";
    case Policy::naive:
        return "naive";
    }
    return "unknown";
}

Policy parse_policy(std::string_view name) {
    if (name == "proposed") {
        return Policy::proposed;
    }
    if (name == "greedy") {
        return Policy::greedy;
    }
    if (name == "naive") {
        return Policy::naive;
    }
    throw std::invalid_argument("unknown policy '" + std::string(name) + "' (expected proposed, greedy or naive)");
}

double counter_uniform(std::uint64_t seed, std::uint64_t slot, Stream stream, std::uint32_t index) {
    const std::uint64_t lane = (static_cast<std::uint64_t>(stream) << 32) | index;
    const std::uint64_t h = splitmix(splitmix(splitmix(seed) ^ slot) ^ splitmix(lane));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

SystemState Scenario::draw(std::size_t slot, const GridParams& params) const {
    SystemState q;
    q.a.resize(params.n_rg);
    for (std::size_t i = 0; i < params.n_rg; ++i) {
        q.a[i] = uniform_in(0.0, params.a_max[i],
                            counter_uniform(seed, slot, Stream::renewable, static_cast<std::uint32_t>(i)));
    }
    const auto& l = params.loads;
    const auto& m = params.market;
    q.l_b = uniform_in(l.l_b_min, l.l_b_max, counter_uniform(seed, slot, Stream::base_load, 0));
    q.l_f = uniform_in(l.l_f_min, l.l_f_max, counter_uniform(seed, slot, Stream::flex_load, 0));
    q.p_b = uniform_in(m.p_b_min, m.p_b_max, counter_uniform(seed, slot, Stream::buy_price, 0));
    q.p_s = uniform_in(m.p_s_min, m.p_s_max, counter_uniform(seed, slot, Stream::sell_price, 0));
    return q;
}

ControlAction naive_step_adjust(ControlAction u, double g_prev, const GridParams& params) {
    const double ramp = params.cg.ramp();
    const double up = g_prev + ramp;
    const double down = g_prev - ramp;
    if (u.g > up) {
        u.e_b += u.g - up;
        u.g = up;
    } else if (u.g < down) {
        u.e_s += down - u.g;
        u.g = down;
    }
    net_market(u);
    return u;
}

StepResult step(Policy policy, const SystemState& q, const OperationalState& op, const GridParams& params) {
    const auto problem = build(variant_for(policy), q, op, params);
    const auto sol = solve_dual_bisection(problem);
    StepResult out;
    out.action = to_action(sol.y, q, problem.index_map);
    if (policy == Policy::naive) {
        out.action = naive_step_adjust(std::move(out.action), op.g_prev, params);
    }
    const auto& u = out.action;
    out.next.s.resize(op.s.size());
    for (std::size_t i = 0; i < op.s.size(); ++i) {
        out.next.s[i] = op.s[i] + u.x[i];
    }
    // l_m lies in [l_b, l_b + l_f] up to rounding.
    out.unsatisfied_fraction = std::clamp((q.l_b + q.l_f - u.l_m) / q.l_f, 0.0, 1.0);
    out.next.J = std::max(op.J - params.loads.alpha, 0.0) + out.unsatisfied_fraction;
    out.next.g_prev = u.g;
    return out;
}

TraceSummary summarize(std::span<const SlotRecord> records) {
    TraceSummary s;
    s.slots = records.size();
    if (records.empty()) {
        return s;
    }
    double cost = 0.0;
    double unsat = 0.0;
    s.min_s = records.front().s_lowest;
    s.max_s = records.front().s_highest;
    for (const auto& r : records) {
        cost += r.cost;
        unsat += r.unsatisfied_fraction;
        s.max_J = std::max(s.max_J, r.J);
        s.min_s = std::min(s.min_s, r.s_lowest);
        s.max_s = std::max(s.max_s, r.s_highest);
    }
    s.mean_cost = cost / static_cast<double>(records.size());
    s.mean_unsatisfied = unsat / static_cast<double>(records.size());
    return s;
}

Trace run(Policy policy, const Scenario& scenario, const GridParams& params, const RunOptions& opts) {
    validate(params);
    Trace trace;
    trace.policy = policy;
    OperationalState op = OperationalState::initial(params);
    validate(op, params);

    TraceSummary& sum = trace.summary;
    sum.min_s = std::numeric_limits<double>::infinity();
    sum.max_s = -std::numeric_limits<double>::infinity();
    if (opts.keep_records) {
        trace.records.reserve(scenario.slots);
    }
    double cost_acc = 0.0;
    double unsat_acc = 0.0;
    for (std::size_t t = 0; t < scenario.slots; ++t) {
        const SystemState q = scenario.draw(t, params);
        StepResult res = step(policy, q, op, params);
        const double cost = slot_cost(res.action, q, params);
        double s_lowest = std::numeric_limits<double>::infinity();
        double s_highest = -std::numeric_limits<double>::infinity();
        for (double s : op.s) {
            s_lowest = std::min(s_lowest, s);
            s_highest = std::max(s_highest, s);
        }
        sum.min_s = std::min(sum.min_s, s_lowest);
        sum.max_s = std::max(sum.max_s, s_highest);
        sum.max_J = std::max(sum.max_J, op.J);
        cost_acc += cost;
        unsat_acc += res.unsatisfied_fraction;
        if (opts.keep_records) {
            const double s_mean =
                op.s.empty() ? 0.0 : std::accumulate(op.s.begin(), op.s.end(), 0.0) / static_cast<double>(op.s.size());
            trace.records.push_back({t, cost, op.J, s_mean, s_lowest, s_highest, res.action.g, res.action.e_b, res.action.e_s,
                                     res.action.l_m, res.unsatisfied_fraction});
        }
        if (opts.observer) {
            opts.observer(SlotView{t, q, op, res.action, res.next, cost});
        }
        op = std::move(res.next);
    }
    sum.slots = scenario.slots;
    if (scenario.slots > 0) {
        sum.mean_cost = cost_acc / static_cast<double>(scenario.slots);
        sum.mean_unsatisfied = unsat_acc / static_cast<double>(scenario.slots);
    } else {
        sum.min_s = 0.0;
        sum.max_s = 0.0;
    }
    return trace;
}

SlotInstance slot_instance(const GridParams& params, std::uint64_t seed, std::size_t slot, Policy policy) {
    const Scenario scenario{seed, slot};
    SlotInstance inst;
    inst.before = OperationalState::initial(params);
    RunOptions opts{false, [&](const SlotView& v) { inst.before = v.after; }};
    (void)run(policy, scenario, params, opts);
    inst.state = scenario.draw(slot, params);
    inst.problem = build_proposed(inst.state, inst.before, params);
    return inst;
}

double lower_bound_estimate(const GridParams& params, const Scenario& scenario) {
    if (!(params.V > 0.0)) {
        throw std::invalid_argument("lower_bound_estimate: V must be positive");
    }
    GridParams relaxed = params;
    relaxed.cg.r = 1.0;
    const auto trace = run(Policy::proposed, scenario, relaxed, RunOptions{false, {}});
    return trace.summary.mean_cost - drift_constant_B(params) / params.V;
}

std::string_view to_string(SweepParameter p) {
    switch (p) {
    case SweepParameter::V:
        return "V";
    case SweepParameter::alpha:
        return "alpha";
    case SweepParameter::r:
        return "r";
    }
    return "unknown";
}

SweepParameter parse_sweep_parameter(std::string_view name) {
    if (name == "V") {
        return SweepParameter::V;
    }
    if (name == "alpha") {
        return SweepParameter::alpha;
    }
    if (name == "r") {
        return SweepParameter::r;
    }
    throw std::invalid_argument("unknown sweep parameter '" + std::string(name) + "' (expected V, alpha or r)");
}

GridParams with_parameter(GridParams params, SweepParameter which, double value) {
    switch (which) {
    case SweepParameter::V:
        params.V = value;
        size_storage_for_v(params);
        break;
    case SweepParameter::alpha:
        params.loads.alpha = value;
        break;
    case SweepParameter::r:
        params.cg.r = value;
        break;
    }
    return params;
}

std::vector<SweepRow> sweep(const GridParams& params, const SweepSpec& spec) {
    // One job per (value, policy-or-bound, seed); results land in fixed slots
    // so the output does not depend on scheduling.
    const std::size_t per_value = spec.policies.size() + (spec.lower_bound ? 1 : 0);
    const std::size_t jobs = spec.values.size() * per_value * spec.seeds.size();
    std::vector<double> results(jobs, 0.0);
    std::vector<double> unsat(jobs, 0.0);
    std::vector<GridParams> configured;
    configured.reserve(spec.values.size());
    for (double v : spec.values) {
        configured.push_back(with_parameter(params, spec.parameter, v));
        validate(configured.back());
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto worker = [&] {
        for (std::size_t job = next++; job < jobs; job = next++) {
            const std::size_t seed_idx = job % spec.seeds.size();
            const std::size_t slot = (job / spec.seeds.size()) % per_value;
            const std::size_t value_idx = job / (spec.seeds.size() * per_value);
            const Scenario scenario{spec.seeds[seed_idx], spec.slots};
            const GridParams& p = configured[value_idx];
            try {
                if (slot < spec.policies.size()) {
                    const auto trace = run(spec.policies[slot], scenario, p, RunOptions{false, {}});
                    results[job] = trace.summary.mean_cost;
                    unsat[job] = trace.summary.mean_unsatisfied;
                } else {
                    results[job] = lower_bound_estimate(p, scenario);
                }
            } catch (...) {
                const std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
    };
    std::size_t threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(jobs, 1));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < threads; ++i) {
            pool.emplace_back(worker);
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }

    std::vector<SweepRow> rows;
    for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
        RunningStats bound;
        if (spec.lower_bound) {
            for (std::size_t si = 0; si < spec.seeds.size(); ++si) {
                bound.add(results[(vi * per_value + spec.policies.size()) * spec.seeds.size() + si]);
            }
        }
        for (std::size_t pi = 0; pi < spec.policies.size(); ++pi) {
            RunningStats cost;
            RunningStats fraction;
            for (std::size_t si = 0; si < spec.seeds.size(); ++si) {
                const std::size_t job = (vi * per_value + pi) * spec.seeds.size() + si;
                cost.add(results[job]);
                fraction.add(unsat[job]);
            }
            SweepRow row;
            row.value = spec.values[vi];
            row.policy = spec.policies[pi];
            row.mean_cost = cost.mean();
            row.cost_stderr = cost.stderr_of_mean();
            row.mean_unsatisfied = fraction.mean();
            row.lower_bound = spec.lower_bound ? bound.mean() : std::numeric_limits<double>::quiet_NaN();
            row.lower_bound_stderr = spec.lower_bound ? bound.stderr_of_mean() : 0.0;
            row.seeds = spec.seeds.size();
            rows.push_back(row);
        }
    }
    return rows;
}

void write_trace_csv(std::ostream& os, const Trace& trace) {
    os << "# pbal trace v1 policy=" << to_string(trace.policy) << '\n';
    os << "slot,cost,J,s_mean,g,e_b,e_s,l_m,unsatisfied_fraction\n";
    os.precision(12);
    for (const auto& r : trace.records) {
        os << r.slot << ',' << r.cost << ',' << r.J << ',' << r.s_mean << ',' << r.g << ',' << r.e_b << ','
           << r.e_s << ',' << r.l_m << ',' << r.unsatisfied_fraction << '\n';
    }
}

void write_sweep_csv(std::ostream& os, SweepParameter parameter, std::span<const SweepRow> rows) {
    os << "# pbal sweep v1 parameter=" << to_string(parameter) << '\n';
    os << "value,policy,cost,cost_stderr,unsatisfied_fraction,lower_bound,lower_bound_stderr,seeds\n";
    os.precision(12);
    for (const auto& r : rows) {
        os << r.value << ',' << to_string(r.policy) << ',' << r.mean_cost << ',' << r.cost_stderr << ','
           << r.mean_unsatisfied << ',' << r.lower_bound << ',' << r.lower_bound_stderr << ',' << r.seeds << '\n';
    }
}

} // namespace pbal
