#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pbal/model.hpp"
#include "pbal/sim.hpp"

namespace pbal {

/// Raised for unreadable, malformed or semantically invalid configuration.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct SweepConfig {
    SweepParameter parameter = SweepParameter::V;
    std::vector<double> values;
    /// Include the relaxed-ramping lower bound column.
    bool lower_bound = true;
};

/// Everything a batch command needs. JSON keys match the field names; the
/// grid parameters sit at the top level next to the run keys.
struct RunConfig {
    GridParams params = GridParams::defaults();
    std::vector<Policy> policies{Policy::proposed, Policy::greedy, Policy::naive};
    std::uint64_t seed = 1;
    /// Seeds averaged by sweeps; defaults to {seed}.
    std::vector<std::uint64_t> seeds;
    std::size_t slots = 50'000;
    std::optional<SweepConfig> sweep;
    std::string out = "out";
    /// admm-trace: proposed-policy slots simulated before the traced slot.
    std::size_t warmup = 200;

    [[nodiscard]] std::vector<std::uint64_t> sweep_seeds() const;
};

/// Parses a JSON document. Missing keys keep their defaults, unknown keys are
/// rejected. `base` supplies the defaults (a preset, typically).
[[nodiscard]] RunConfig parse_config(std::string_view json_text, const RunConfig& base = {});
[[nodiscard]] RunConfig load_config(const std::string& path, const RunConfig& base = {});
[[nodiscard]] std::string dump_config(const RunConfig& cfg);

/// Grid parameters only; accepts the same keys as parse_config minus the run keys.
[[nodiscard]] GridParams parse_params(std::string_view json_text);
[[nodiscard]] std::string dump_params(const GridParams& params);

/// fig3 (V sweep), fig4 (alpha sweep), fig5 (r sweep, base loads),
/// fig6 (r sweep, loads 20-40 kWh), fig7 (single-slot solver comparison).
[[nodiscard]] RunConfig preset(std::string_view name);
[[nodiscard]] std::vector<std::string> preset_names();

/// Checks params and the sweep values against their domains.
void validate(const RunConfig& cfg);

} // namespace pbal
