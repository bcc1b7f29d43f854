#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pbal {

/// Thrown when a parameter set or state violates a model invariant. The
/// message names the offending field and the broken constraint.
class ValidationError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// One storage unit co-located with a renewable generator.
///
/// Energies are in kWh per slot; degradation cost D(x) = deg_quad*x^2 +
/// deg_lin*x is in cents. x > 0 charges, x < 0 discharges.
struct StorageParams {
    double x_min = -1.1;
    double x_max = 1.1;
    double s_min = 0.0;
    double s_max = 54.2;
    double deg_quad = 10.0;
    double deg_lin = 0.0;
    /// Initial energy state; defaults to s_min when unset.
    std::optional<double> s_init;

    [[nodiscard]] double degradation(double x) const { return deg_quad * x * x + deg_lin * x; }
    [[nodiscard]] double degradation_slope(double x) const { return 2.0 * deg_quad * x + deg_lin; }
    [[nodiscard]] double slope_min() const { return degradation_slope(x_min); }
    [[nodiscard]] double slope_max() const { return degradation_slope(x_max); }
    [[nodiscard]] double initial_level() const { return s_init.value_or(s_min); }
};

/// Conventional generator. Cost C(g) = gen_quad*g^2 + gen_lin*g (cents).
struct CgParams {
    double g_max = 50.0;
    double r = 0.1;
    double gen_lin = 8.0;
    double gen_quad = 0.0;
    /// Output in the slot before the first simulated one.
    double g_init = 0.0;

    [[nodiscard]] double cost(double g) const { return gen_quad * g * g + gen_lin * g; }
    [[nodiscard]] double slope(double g) const { return 2.0 * gen_quad * g + gen_lin; }
    [[nodiscard]] double slope_max() const { return slope(g_max); }
    [[nodiscard]] double ramp() const { return r * g_max; }
};

/// Price ranges of the external market, cents/kWh.
struct MarketParams {
    double p_b_min = 10.0;
    double p_b_max = 12.0;
    double p_s_min = 4.0;
    double p_s_max = 6.0;
};

struct LoadParams {
    double l_b_min = 5.0;
    double l_b_max = 25.0;
    double l_f_min = 5.0;
    double l_f_max = 25.0;
    /// Long-run bound on the unsatisfied fraction of flexible load.
    double alpha = 0.5;
};

struct GridParams {
    std::size_t n_rg = 30;
    std::vector<StorageParams> storage = std::vector<StorageParams>(30);
    CgParams cg;
    MarketParams market;
    LoadParams loads;
    std::vector<double> a_max = std::vector<double>(30, 1.1);
    double V = 1.0;
    double rho = 5.0;
    /// When set, validate() also requires V <= V_max so the storage bounds
    /// are guaranteed by the controller.
    bool enforce_v_max = true;

    /// Defaults used by the reference experiments: N=30 identical units,
    /// s_max = s_up at V=1.
    static GridParams defaults() { return GridParams{}; }

    /// Resizes per-RG vectors to n, replicating the first entry.
    void resize(std::size_t n);
};

/// Exogenous randomness of one slot.
struct SystemState {
    std::vector<double> a;
    double l_b = 0.0;
    double l_f = 0.0;
    double p_b = 0.0;
    double p_s = 0.0;

    [[nodiscard]] double total_renewable() const;
};

/// Controller memory carried between slots.
struct OperationalState {
    std::vector<double> s;
    double J = 0.0;
    double g_prev = 0.0;

    static OperationalState initial(const GridParams& params);
};

struct ControlAction {
    std::vector<double> b;
    std::vector<double> x;
    double l_m = 0.0;
    double g = 0.0;
    double e_b = 0.0;
    double e_s = 0.0;

    /// g + e_b + sum(b) - e_s - l_m; zero for a balanced action.
    [[nodiscard]] double balance_residual() const;
};

void validate(const GridParams& params);
void validate(const SystemState& q, const GridParams& params);
void validate(const OperationalState& op, const GridParams& params);

/// Storage-level perturbation offsets, one per RG.
[[nodiscard]] std::vector<double> beta(const GridParams& params);

/// Largest V for which the per-slot controller keeps every storage unit
/// within [s_min, s_max]. Throws ValidationError when no positive V exists.
[[nodiscard]] double v_max(const GridParams& params);

/// Constant term of the drift-plus-penalty bound.
[[nodiscard]] double drift_constant_B(const GridParams& params);

/// Storage level bound reached under the controller for an arbitrary V > 0.
[[nodiscard]] std::vector<double> s_up(const GridParams& params);

/// Deterministic upper bound on the virtual queue.
[[nodiscard]] double j_bound(const GridParams& params);

/// Sets every s_max to its s_up value at the current V.
void size_storage_for_v(GridParams& params);

} // namespace pbal
