#pragma once

#include <cstddef>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "pbal/perslot.hpp"

namespace pbal {

enum class Method { dual_bisection, grid_oracle, admm, subgradient };

[[nodiscard]] std::string_view to_string(Method m);

struct Solution {
    std::vector<double> y;
    double objective = 0.0;
    double balance_residual = 0.0;
    Method method = Method::dual_bisection;
    /// Balance multiplier, when the method produces one.
    double multiplier = 0.0;
    std::size_t iterations = 0;
    bool converged = true;
};

class SolverError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// One bisection probe: the multiplier and the range of sum(y(lambda)) over
/// the choices left free by linear terms sitting exactly at their breakpoint.
struct BisectionProbe {
    double lambda = 0.0;
    double sum_low = 0.0;
    double sum_high = 0.0;
};

struct BisectionOptions {
    double tol = 1e-9;
    std::size_t max_iter = 400;
    /// When non-null, every probe is appended here.
    std::vector<BisectionProbe>* trace = nullptr;
};

/// Minimiser of F_i(y) + lambda*y over term i's interval. Linear terms at
/// their breakpoint return `at_breakpoint` clamped into the interval.
[[nodiscard]] double term_response(const ScalarTerm& t, double lambda, double at_breakpoint);

/// Exact solver for a SeparableProblem: bisection on the multiplier of the
/// balance equality, then distribution of the remaining residual over the
/// terms that are indifferent at the final multiplier (lowest index first).
[[nodiscard]] Solution solve_dual_bisection(const SeparableProblem& p, const BisectionOptions& opts = {});

/// Half-width of the box that replaces infinite bounds of non-market terms in
/// the grid oracle.
[[nodiscard]] double oracle_box(const SeparableProblem& p);

/// Exhaustive grid search over the non-market variables (n_rg <= 2) with
/// spacing `step`; the market pair absorbs the balance residual. Every grid
/// combination is scored; combinations are grouped by their exact sum so the
/// search runs in time linear in the number of distinct sums.
[[nodiscard]] Solution solve_grid_oracle(const SeparableProblem& p, double step);

} // namespace pbal
