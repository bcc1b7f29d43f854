#include "pbal/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace pbal {

std::string_view to_string(Method m) {
    switch (m) {
    case Method::dual_bisection:
        return "dual_bisection";
    case Method::grid_oracle:
        return "grid_oracle";
    case Method::admm:
        return "admm";
    case Method::subgradient:
        return "subgradient";
    }
    return "unknown";
}

double term_response(const ScalarTerm& t, double lambda, double at_breakpoint) {
    if (t.quad > 0.0) {
        return std::clamp((-t.lin - lambda) / (2.0 * t.quad), t.lo, t.hi);
    }
    const double slope = t.lin + lambda;
    if (slope > 0.0) {
        return t.lo;
    }
    if (slope < 0.0) {
        return t.hi;
    }
    return std::clamp(at_breakpoint, t.lo, t.hi);
}

namespace {

double response_sum(const SeparableProblem& p, double lambda, bool high_side) {
    double acc = 0.0;
    for (const auto& t : p.terms) {
        acc += term_response(t, lambda, high_side ? t.hi : t.lo);
    }
    if (std::isnan(acc)) {
        throw SolverError("dual_bisection: problem is unbounded below (opposing half-infinite linear terms)");
    }
    return acc;
}

double initial_bracket(const SeparableProblem& p) {
    double max_lin = 0.0;
    double max_quad = 0.0;
    double max_bound = std::max(1.0, std::abs(p.balance_rhs));
    for (const auto& t : p.terms) {
        max_lin = std::max(max_lin, std::abs(t.lin));
        max_quad = std::max(max_quad, t.quad);
        for (double b : {t.lo, t.hi}) {
            if (std::isfinite(b)) {
                max_bound = std::max(max_bound, std::abs(b));
            }
        }
    }
    return max_lin + 2.0 * max_quad * max_bound + 1.0;
}

// Moves the residual onto variables that are free at the final multiplier:
// linear terms at their breakpoint first, then quadratic terms strictly
// inside their interval (a Newton step along the current KKT piece).
double settle_residual(const SeparableProblem& p, double lambda, std::vector<double>& y, double tol) {
    double residual = p.balance_rhs - std::accumulate(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < p.terms.size() && residual != 0.0; ++i) {
        const auto& t = p.terms[i];
        if (t.quad > 0.0 || t.lin + lambda != 0.0) {
            continue;
        }
        const double target = std::clamp(y[i] + residual, t.lo, t.hi);
        residual -= target - y[i];
        y[i] = target;
    }
    for (int round = 0; round < 64 && std::abs(residual) > 0.1 * tol; ++round) {
        double weight = 0.0;
        for (std::size_t i = 0; i < p.terms.size(); ++i) {
            const auto& t = p.terms[i];
            if (t.quad > 0.0 && y[i] > t.lo && y[i] < t.hi) {
                weight += 0.5 / t.quad;
            }
        }
        if (weight == 0.0) {
            break;
        }
        const double shift = residual / weight;
        for (std::size_t i = 0; i < p.terms.size(); ++i) {
            const auto& t = p.terms[i];
            if (t.quad > 0.0 && y[i] > t.lo && y[i] < t.hi) {
                y[i] = std::clamp(y[i] + shift * 0.5 / t.quad, t.lo, t.hi);
            }
        }
        residual = p.balance_rhs - std::accumulate(y.begin(), y.end(), 0.0);
    }
    return -residual;
}

} // namespace

Solution solve_dual_bisection(const SeparableProblem& p, const BisectionOptions& opts) {
    const double rhs = p.balance_rhs;
    const auto probe = [&](double lambda) {
        BisectionProbe pr{lambda, response_sum(p, lambda, false), response_sum(p, lambda, true)};
        if (opts.trace != nullptr) {
            opts.trace->push_back(pr);
        }
        return pr;
    };

    // Sums are nonincreasing in lambda: low multipliers over-supply.
    double width = initial_bracket(p);
    double a = -width;
    double b = width;
    int widen = 0;
    while (probe(a).sum_high < rhs) {
        a *= 2.0;
        if (++widen > 200) {
            throw SolverError("dual_bisection: infeasible problem (sum of upper bounds below balance)");
        }
    }
    widen = 0;
    while (probe(b).sum_low > rhs) {
        b *= 2.0;
        if (++widen > 200) {
            throw SolverError("dual_bisection: infeasible problem (sum of lower bounds above balance)");
        }
    }

    std::size_t iterations = 0;
    bool found = false;
    double lambda = 0.5 * (a + b);
    for (; iterations < opts.max_iter; ++iterations) {
        const double mid = 0.5 * (a + b);
        if (!(mid > a && mid < b)) {
            break;
        }
        const auto pr = probe(mid);
        if (pr.sum_low > rhs + 0.25 * opts.tol) {
            a = mid;
        } else if (pr.sum_high < rhs - 0.25 * opts.tol) {
            b = mid;
        } else {
            lambda = mid;
            found = true;
            break;
        }
    }
    if (!found) {
        // The root is a jump of the response sum: a linear breakpoint inside
        // the collapsed bracket.
        lambda = 0.5 * (a + b);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& t : p.terms) {
            const double bp = -t.lin;
            if (t.quad == 0.0 && bp >= a && bp <= b && std::abs(bp - lambda) < best) {
                best = std::abs(bp - lambda);
                lambda = bp;
            }
        }
    }

    Solution sol;
    sol.method = Method::dual_bisection;
    sol.multiplier = lambda;
    sol.iterations = iterations;
    sol.y.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        sol.y[i] = term_response(p.terms[i], lambda, 0.0);
    }
    sol.balance_residual = settle_residual(p, lambda, sol.y, opts.tol);
    sol.objective = per_slot_objective(sol.y, p);
    if (!(std::abs(sol.balance_residual) <= opts.tol)) {
        std::ostringstream os;
        os << "dual_bisection: did not converge (balance residual " << sol.balance_residual << ")";
        throw SolverError(os.str());
    }
    return sol;
}

double oracle_box(const SeparableProblem& p) {
    const auto& m = p.index_map;
    double scale = std::abs(p.balance_rhs);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i == m.neg_e_b() || i == m.e_s()) {
            continue;
        }
        double widest = 0.0;
        for (double b : {p.terms[i].lo, p.terms[i].hi}) {
            if (std::isfinite(b)) {
                widest = std::max(widest, std::abs(b));
            }
        }
        scale += widest;
    }
    return 10.0 * std::max(scale, 1.0);
}

Solution solve_grid_oracle(const SeparableProblem& p, double step) {
    const auto& m = p.index_map;
    if (m.n_rg > 2) {
        throw std::invalid_argument("grid_oracle: supports at most 2 RGs");
    }
    if (!(step > 0.0)) {
        throw std::invalid_argument("grid_oracle: step must be positive");
    }
    const double box = oracle_box(p);

    // Each enumerated variable takes lo + k*step (k = 0..count) and, when it
    // is off that lattice, the upper endpoint hi (tracked by a mask bit).
    struct Axis {
        std::size_t index;
        double lo;
        double hi;
        std::size_t count;
        bool extra_hi;
    };
    std::vector<Axis> axes;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i == m.neg_e_b() || i == m.e_s()) {
            continue;
        }
        const auto& t = p.terms[i];
        const double lo = std::max(t.lo, -box);
        const double hi = std::min(t.hi, box);
        const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
        const bool extra = hi - (lo + static_cast<double>(count) * step) > 1e-12;
        axes.push_back({i, lo, hi, count, extra});
    }
    // Widest axes first keeps the number of reachable sums small early on.
    std::stable_sort(axes.begin(), axes.end(), [](const Axis& l, const Axis& r) { return l.count > r.count; });
    std::size_t lattice_span = 1;
    for (const auto& ax : axes) {
        lattice_span += ax.count;
    }
    const std::size_t masks = std::size_t{1} << axes.size();
    const std::size_t states = masks * lattice_span;
    const auto state_of = [&](std::size_t mask, std::size_t k) { return mask * lattice_span + k; };

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> cost(states, inf);
    cost[state_of(0, 0)] = 0.0;
    // choice[layer][state] = (point index, previous state); point index
    // count + 1 stands for the off-lattice hi.
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> choice(axes.size());

    for (std::size_t layer = 0; layer < axes.size(); ++layer) {
        const auto& ax = axes[layer];
        const auto& term = p.terms[ax.index];
        std::vector<double> next(states, inf);
        auto& back = choice[layer];
        back.assign(states, {0, 0});
        std::vector<double> point_cost(ax.count + 2);
        for (std::size_t k = 0; k <= ax.count; ++k) {
            point_cost[k] = term.value(ax.lo + static_cast<double>(k) * step);
        }
        point_cost[ax.count + 1] = term.value(ax.hi);
        for (std::size_t s = 0; s < states; ++s) {
            if (cost[s] == inf) {
                continue;
            }
            const std::size_t mask = s / lattice_span;
            const std::size_t kk = s % lattice_span;
            for (std::size_t k = 0; k <= ax.count; ++k) {
                const std::size_t t = state_of(mask, kk + k);
                const double c = cost[s] + point_cost[k];
                if (c < next[t]) {
                    next[t] = c;
                    back[t] = {k, s};
                }
            }
            if (ax.extra_hi) {
                const std::size_t t = state_of(mask | (std::size_t{1} << layer), kk);
                const double c = cost[s] + point_cost[ax.count + 1];
                if (c < next[t]) {
                    next[t] = c;
                    back[t] = {ax.count + 1, s};
                }
            }
        }
        cost.swap(next);
    }

    double base = 0.0;
    for (const auto& ax : axes) {
        base += ax.lo;
    }
    const auto& eb = p.terms[m.neg_e_b()];
    const auto& es = p.terms[m.e_s()];
    double best = inf;
    std::size_t best_state = 0;
    double best_eb = 0.0;
    double best_es = 0.0;
    for (std::size_t s = 0; s < states; ++s) {
        if (cost[s] == inf) {
            continue;
        }
        const std::size_t mask = s / lattice_span;
        double sum = base + static_cast<double>(s % lattice_span) * step;
        for (std::size_t l = 0; l < axes.size(); ++l) {
            if (mask & (std::size_t{1} << l)) {
                sum += axes[l].hi - axes[l].lo;
            }
        }
        const double residual = p.balance_rhs - sum;
        // Close the balance with one market flow; the other stays at 0.
        const double eb_idle = std::clamp(0.0, eb.lo, eb.hi);
        const double es_idle = std::clamp(0.0, es.lo, es.hi);
        for (int side = 0; side < 2; ++side) {
            double y_eb = eb_idle;
            double y_es = es_idle;
            if (side == 0) {
                y_eb = residual - es_idle;
            } else {
                y_es = residual - eb_idle;
            }
            if (!eb.contains(y_eb) || !es.contains(y_es)) {
                continue;
            }
            const double c = cost[s] + eb.value(y_eb) + es.value(y_es);
            if (c < best) {
                best = c;
                best_state = s;
                best_eb = y_eb;
                best_es = y_es;
            }
        }
    }
    if (best == inf) {
        throw SolverError("grid_oracle: no feasible grid point");
    }

    Solution sol;
    sol.method = Method::grid_oracle;
    sol.y.assign(p.size(), 0.0);
    std::size_t s = best_state;
    for (std::size_t layer = axes.size(); layer-- > 0;) {
        const auto& ax = axes[layer];
        const auto [k, prev] = choice[layer][s];
        sol.y[ax.index] = k == ax.count + 1 ? ax.hi : ax.lo + static_cast<double>(k) * step;
        s = prev;
    }
    sol.y[m.neg_e_b()] = best_eb;
    sol.y[m.e_s()] = best_es;
    sol.objective = per_slot_objective(sol.y, p);
    sol.balance_residual = balance_residual(sol.y, p);
    sol.iterations = states;
    return sol;
}

} // namespace pbal
