#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "pbal/perslot.hpp"
#include "pbal/solvers.hpp"

namespace pbal {

/// Iterate of the scalar-dual ADMM for the sharing form.
struct AdmmState {
    std::vector<double> y;
    double d = 0.0;
    std::size_t k = 0;
    /// |mean(y) - balance_rhs / (N+4)|
    double mean_residual = 0.0;
    /// sum(y) - balance_rhs
    double balance_residual = 0.0;
    std::vector<double> objective_trace;
};

/// argmin over [lo, hi] of quad*y^2 + lin*y + (rho/2)(y - v)^2.
[[nodiscard]] double prox(const ScalarTerm& term, double v, double rho);

/// Deterministic start: y_i = clamp(0, lo_i, hi_i), d = 0. Every RG interval
/// contains 0, so a coordinator can form the first signals without being told
/// any private bound.
[[nodiscard]] AdmmState admm_initial_state(const SeparableProblem& p);

/// Signals v_i = y_i - mean(y) - d/rho + rhs/(N+4) sent to every variable owner.
[[nodiscard]] std::vector<double> compute_v(const AdmmState& state, const SeparableProblem& p, double rho);

/// Dual update d + rho * (mean(y_new) - rhs/(N+4)).
[[nodiscard]] double dual_update(double d, std::span<const double> y_new, const SeparableProblem& p, double rho);

/// One synchronous round: prox step for every variable, then the dual update.
[[nodiscard]] AdmmState admm_iterate(const AdmmState& state, const SeparableProblem& p, double rho);

struct AdmmOptions {
    double rho = 5.0;
    double tol = 1e-8;
    std::size_t max_iter = 5000;
    /// Keep every y iterate in AdmmResult::iterates.
    bool record_iterates = false;
};

struct IterationRecord {
    std::size_t iteration = 0;
    double objective = 0.0;
    double balance_residual = 0.0;
};

struct AdmmResult {
    Solution solution;
    AdmmState final_state;
    std::vector<IterationRecord> history;
    std::vector<std::vector<double>> iterates;
};

/// Stopping test shared by the in-process and distributed runs: both the
/// balance residual and the largest per-variable change are within tol.
[[nodiscard]] bool admm_converged(std::span<const double> y_prev, std::span<const double> y_new,
                                  const SeparableProblem& p, double tol);
[[nodiscard]] bool admm_converged(std::span<const double> y_prev, std::span<const double> y_new, double balance_rhs,
                                  double tol);

/// Runs ADMM until admm_converged or max_iter. On exhaustion the iterate with
/// the smallest balance residual is returned with converged = false.
[[nodiscard]] AdmmResult run_admm(const SeparableProblem& p, const AdmmOptions& opts = {});

/// What the coordinator of the sharing form knows: the variable count and
/// the balance target.
struct SharingShape {
    std::size_t size = 0;
    double balance_rhs = 0.0;
};

/// Produces y^{k+1} from the signals v^k; k counts from 0.
using ProxRound = std::function<void(std::span<const double> v, std::size_t k, std::span<double> y_out)>;
using ObjectiveFn = std::function<double(std::span<const double> y)>;

/// The ADMM coordination loop with the prox steps delegated to `round`.
/// run_admm is this loop with local prox calls. `objective` may be empty, in
/// which case objectives are reported as NaN.
[[nodiscard]] AdmmResult run_admm_rounds(std::vector<double> y0, SharingShape shape, const AdmmOptions& opts,
                                         const ProxRound& round, const ObjectiveFn& objective = {});

struct SubgradientOptions {
    /// Step size c / sqrt(k).
    double step_scale = 1.0;
    std::size_t max_iter = 5000;
    double lambda0 = 0.0;
};

struct SubgradientRecord {
    std::size_t iteration = 0;
    double lambda = 0.0;
    /// Dual function value at lambda; never above the primal optimum.
    double dual_value = 0.0;
    double balance_residual = 0.0;
};

struct SubgradientResult {
    Solution solution;
    std::vector<SubgradientRecord> history;
};

/// Interval of multipliers on which the dual function is finite.
struct DualDomain {
    double lo = -kInf;
    double hi = kInf;
};

[[nodiscard]] DualDomain dual_domain(const SeparableProblem& p);

/// q(lambda) = sum_i min_{y in Y_i} [F_i(y) + lambda*y] - lambda*rhs.
[[nodiscard]] double dual_value(const SeparableProblem& p, double lambda);

/// Projected dual subgradient ascent with diminishing steps.
[[nodiscard]] SubgradientResult run_subgradient(const SeparableProblem& p, const SubgradientOptions& opts = {});

/// Writes `iteration,objective_gap,balance_residual` rows; the gap is taken
/// against `optimum`.
void write_residual_csv(std::ostream& os, std::span<const IterationRecord> history, double optimum);

/// Least-squares slope of log(gap) against log(iteration); points with a
/// non-positive gap are skipped.
[[nodiscard]] double loglog_slope(std::span<const double> iterations, std::span<const double> gaps);

} // namespace pbal
