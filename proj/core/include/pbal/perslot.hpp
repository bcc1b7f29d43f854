#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "pbal/model.hpp"

namespace pbal {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// F(y) = quad*y^2 + lin*y restricted to [lo, hi]. Bounds may be infinite.
struct ScalarTerm {
    double quad = 0.0;
    double lin = 0.0;
    double lo = -kInf;
    double hi = kInf;

    [[nodiscard]] double value(double y) const { return quad * y * y + lin * y; }
    [[nodiscard]] bool contains(double y, double tol = 0.0) const { return y >= lo - tol && y <= hi + tol; }
};

/// Positions of the aggregator-owned variables within y. The first n_rg
/// entries always hold the storage decisions x_i.
struct IndexMap {
    std::size_t n_rg = 0;

    [[nodiscard]] std::size_t x(std::size_t i) const { return i; }
    [[nodiscard]] std::size_t l_m() const { return n_rg; }
    [[nodiscard]] std::size_t neg_g() const { return n_rg + 1; }
    [[nodiscard]] std::size_t neg_e_b() const { return n_rg + 2; }
    [[nodiscard]] std::size_t e_s() const { return n_rg + 3; }
    [[nodiscard]] std::size_t size() const { return n_rg + 4; }
};

/// min sum_i F_i(y_i)  s.t.  y_i in [lo_i, hi_i],  sum_i y_i = balance_rhs.
struct SeparableProblem {
    std::vector<ScalarTerm> terms;
    double balance_rhs = 0.0;
    IndexMap index_map;

    [[nodiscard]] std::size_t size() const { return terms.size(); }
};

enum class ProblemVariant { proposed, unramped, greedy };

/// Drift-plus-penalty problem with the ramping window on the CG.
[[nodiscard]] SeparableProblem build_proposed(const SystemState& q, const OperationalState& op,
                                              const GridParams& params);

/// Same as build_proposed with the CG only limited to [0, g_max].
[[nodiscard]] SeparableProblem build_unramped(const SystemState& q, const OperationalState& op,
                                              const GridParams& params);

/// Myopic cost minimisation with per-slot load and storage-level limits.
[[nodiscard]] SeparableProblem build_greedy(const SystemState& q, const OperationalState& op,
                                            const GridParams& params);

[[nodiscard]] SeparableProblem build(ProblemVariant variant, const SystemState& q, const OperationalState& op,
                                     const GridParams& params);

/// Thrown by to_action when y does not balance supply and demand.
class BalanceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Maps a solution vector back to physical decisions. Simultaneous buying
/// and selling is netted out, which keeps the balance and never raises cost.
[[nodiscard]] ControlAction to_action(std::span<const double> y, const SystemState& q, const IndexMap& map,
                                      double tol = 1e-6);

/// Removes min(e_b, e_s) from both market flows.
void net_market(ControlAction& u);

[[nodiscard]] double slot_cost(const ControlAction& u, const SystemState& q, const GridParams& params);

[[nodiscard]] double per_slot_objective(std::span<const double> y, const SeparableProblem& p);

/// Signed violation sum(y) - balance_rhs.
[[nodiscard]] double balance_residual(std::span<const double> y, const SeparableProblem& p);

} // namespace pbal
