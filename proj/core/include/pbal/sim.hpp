#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pbal/model.hpp"
#include "pbal/perslot.hpp"

namespace pbal {

enum class Policy { proposed, greedy, naive };

[[nodiscard]] std::string_view to_string(Policy p);
[[nodiscard]] Policy parse_policy(std::string_view name);

/// Independent streams of the scenario generator.
enum class Stream : std::uint32_t { renewable = 0, base_load = 1, flex_load = 2, buy_price = 3, sell_price = 4 };

/// Uniform [0,1) value keyed by (seed, slot, stream, index). Stateless, so
/// adding RGs or skipping slots never shifts other draws.
[[nodiscard]] double counter_uniform(std::uint64_t seed, std::uint64_t slot, Stream stream, std::uint32_t index);

/// i.i.d. uniform system states within the parameter ranges.
struct Scenario {
    std::uint64_t seed = 1;
    std::size_t slots = 50'000;

    [[nodiscard]] SystemState draw(std::size_t slot, const GridParams& params) const;
};

struct StepResult {
    ControlAction action;
    OperationalState next;
    double unsatisfied_fraction = 0.0;
};

/// Undoes a ramping violation of an action computed without the ramp window:
/// the CG is clipped to [g_prev - r g_max, g_prev + r g_max] and the market
/// covers the difference.
[[nodiscard]] ControlAction naive_step_adjust(ControlAction unramped, double g_prev, const GridParams& params);

/// One slot of the closed loop: solve the policy's problem, then advance the
/// storage levels, the virtual queue and the CG history.
[[nodiscard]] StepResult step(Policy policy, const SystemState& q, const OperationalState& op,
                              const GridParams& params);

/// Compact per-slot record; the operational state is the one observed at the
/// start of the slot.
struct SlotRecord {
    std::size_t slot = 0;
    double cost = 0.0;
    double J = 0.0;
    double s_mean = 0.0;
    double s_lowest = 0.0;
    double s_highest = 0.0;
    double g = 0.0;
    double e_b = 0.0;
    double e_s = 0.0;
    double l_m = 0.0;
    double unsatisfied_fraction = 0.0;
};

struct TraceSummary {
    std::size_t slots = 0;
    double mean_cost = 0.0;
    double mean_unsatisfied = 0.0;
    double max_J = 0.0;
    double min_s = 0.0;
    double max_s = 0.0;
};

struct Trace {
    Policy policy = Policy::proposed;
    std::vector<SlotRecord> records;
    TraceSummary summary;
};

/// Everything known about one simulated slot, handed to a SlotObserver.
struct SlotView {
    std::size_t slot;
    const SystemState& state;
    const OperationalState& before;
    const ControlAction& action;
    const OperationalState& after;
    double cost;
};

using SlotObserver = std::function<void(const SlotView&)>;

struct RunOptions {
    bool keep_records = true;
    SlotObserver observer;
};

/// Runs `policy` over the scenario from the configured initial state.
[[nodiscard]] Trace run(Policy policy, const Scenario& scenario, const GridParams& params,
                        const RunOptions& opts = {});

/// The proposed-policy problem of one slot, reached by running `policy` from
/// the initial state for `slot` slots of the seeded scenario.
struct SlotInstance {
    SystemState state;
    OperationalState before;
    SeparableProblem problem;
};

[[nodiscard]] SlotInstance slot_instance(const GridParams& params, std::uint64_t seed, std::size_t slot,
                                         Policy policy = Policy::proposed);

/// Aggregates recomputed from per-slot records.
[[nodiscard]] TraceSummary summarize(std::span<const SlotRecord> records);

/// Relaxed-ramping run cost minus B/V: a lower bound on the optimal
/// long-run cost at any ramping coefficient.
[[nodiscard]] double lower_bound_estimate(const GridParams& params, const Scenario& scenario);

enum class SweepParameter { V, alpha, r };

[[nodiscard]] std::string_view to_string(SweepParameter p);
[[nodiscard]] SweepParameter parse_sweep_parameter(std::string_view name);

/// Returns params with the swept parameter set. V sweeps also resize the
/// storage to s_up at the new V.
[[nodiscard]] GridParams with_parameter(GridParams params, SweepParameter which, double value);

struct SweepRow {
    double value = 0.0;
    Policy policy = Policy::proposed;
    double mean_cost = 0.0;
    /// Standard error of the seed-averaged cost.
    double cost_stderr = 0.0;
    double mean_unsatisfied = 0.0;
    double lower_bound = 0.0;
    double lower_bound_stderr = 0.0;
    std::size_t seeds = 0;
};

struct SweepSpec {
    SweepParameter parameter = SweepParameter::V;
    std::vector<double> values;
    std::vector<Policy> policies{Policy::proposed, Policy::greedy, Policy::naive};
    std::vector<std::uint64_t> seeds{1};
    std::size_t slots = 50'000;
    bool lower_bound = true;
    /// 0 picks std::thread::hardware_concurrency().
    std::size_t threads = 0;
};

/// Seed-averaged time-averaged cost for every (value, policy) pair.
[[nodiscard]] std::vector<SweepRow> sweep(const GridParams& params, const SweepSpec& spec);

void write_trace_csv(std::ostream& os, const Trace& trace);
void write_sweep_csv(std::ostream& os, SweepParameter parameter, std::span<const SweepRow> rows);

} // namespace pbal
