#include "pbal/admm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace pbal {

namespace {

double mean(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double share(std::size_t n, double rhs) { return rhs / static_cast<double>(n); }

double sum_residual(std::span<const double> y, double rhs) {
    return std::accumulate(y.begin(), y.end(), 0.0) - rhs;
}

void refresh_residuals(AdmmState& s, double rhs) {
    s.balance_residual = sum_residual(s.y, rhs);
    s.mean_residual = std::abs(mean(s.y) - share(s.y.size(), rhs));
}

std::vector<double> signals(std::span<const double> y, double d, double rhs, double rho) {
    const double offset = -mean(y) - d / rho + share(y.size(), rhs);
    std::vector<double> v(y.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = y[i] + offset;
    }
    return v;
}

double next_dual(double d, std::span<const double> y_new, double rhs, double rho) {
    return d + rho * (mean(y_new) - share(y_new.size(), rhs));
}

} // namespace

double prox(const ScalarTerm& term, double v, double rho) {
    return std::clamp((rho * v - term.lin) / (2.0 * term.quad + rho), term.lo, term.hi);
}

AdmmState admm_initial_state(const SeparableProblem& p) {
    AdmmState s;
    s.y.reserve(p.size());
    for (const auto& t : p.terms) {
        s.y.push_back(std::clamp(0.0, t.lo, t.hi));
    }
    refresh_residuals(s, p.balance_rhs);
    return s;
}

std::vector<double> compute_v(const AdmmState& state, const SeparableProblem& p, double rho) {
    return signals(state.y, state.d, p.balance_rhs, rho);
}

double dual_update(double d, std::span<const double> y_new, const SeparableProblem& p, double rho) {
    return next_dual(d, y_new, p.balance_rhs, rho);
}

AdmmState admm_iterate(const AdmmState& state, const SeparableProblem& p, double rho) {
    const auto v = compute_v(state, p, rho);
    AdmmState next;
    next.y.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        next.y[i] = prox(p.terms[i], v[i], rho);
    }
    next.d = dual_update(state.d, next.y, p, rho);
    next.k = state.k + 1;
    refresh_residuals(next, p.balance_rhs);
    next.objective_trace = state.objective_trace;
    next.objective_trace.push_back(per_slot_objective(next.y, p));
    return next;
}

bool admm_converged(std::span<const double> y_prev, std::span<const double> y_new, double balance_rhs,
                    double tol) {
    double change = 0.0;
    for (std::size_t i = 0; i < y_new.size(); ++i) {
        change = std::max(change, std::abs(y_new[i] - y_prev[i]));
    }
    return change <= tol && std::abs(sum_residual(y_new, balance_rhs)) <= tol;
}

bool admm_converged(std::span<const double> y_prev, std::span<const double> y_new, const SeparableProblem& p,
                    double tol) {
    return admm_converged(y_prev, y_new, p.balance_rhs, tol);
}

AdmmResult run_admm_rounds(std::vector<double> y0, SharingShape shape, const AdmmOptions& opts,
                           const ProxRound& round, const ObjectiveFn& objective) {
    if (y0.size() != shape.size || shape.size == 0) {
        throw std::invalid_argument("admm: initial iterate does not match the problem size");
    }
    const double rhs = shape.balance_rhs;
    const auto eval = [&](std::span<const double> y) {
        return objective ? objective(y) : std::numeric_limits<double>::quiet_NaN();
    };

    AdmmResult out;
    AdmmState state;
    state.y = std::move(y0);
    refresh_residuals(state, rhs);
    std::vector<double> best_y = state.y;
    double best_residual = std::abs(state.balance_residual);
    bool converged = false;
    if (opts.record_iterates) {
        out.iterates.push_back(state.y);
    }
    std::vector<double> y_next(shape.size);
    while (state.k < opts.max_iter) {
        const auto v = signals(state.y, state.d, rhs, opts.rho);
        round(v, state.k, y_next);
        const double d_next = next_dual(state.d, y_next, rhs, opts.rho);
        converged = admm_converged(state.y, y_next, rhs, opts.tol);
        state.y.swap(y_next);
        state.d = d_next;
        ++state.k;
        refresh_residuals(state, rhs);
        const double obj = eval(state.y);
        out.history.push_back({state.k, obj, state.balance_residual});
        state.objective_trace.push_back(obj);
        if (opts.record_iterates) {
            out.iterates.push_back(state.y);
        }
        if (std::abs(state.balance_residual) < best_residual) {
            best_residual = std::abs(state.balance_residual);
            best_y = state.y;
        }
        if (converged) {
            break;
        }
    }

    Solution& sol = out.solution;
    sol.method = Method::admm;
    sol.y = converged ? state.y : best_y;
    sol.objective = eval(sol.y);
    sol.balance_residual = sum_residual(sol.y, rhs);
    sol.multiplier = state.d;
    sol.iterations = state.k;
    sol.converged = converged;
    out.final_state = std::move(state);
    return out;
}

AdmmResult run_admm(const SeparableProblem& p, const AdmmOptions& opts) {
    const auto round = [&](std::span<const double> v, std::size_t, std::span<double> y_out) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            y_out[i] = prox(p.terms[i], v[i], opts.rho);
        }
    };
    const auto objective = [&](std::span<const double> y) { return per_slot_objective(y, p); };
    return run_admm_rounds(admm_initial_state(p).y, {p.size(), p.balance_rhs}, opts, round, objective);
}

DualDomain dual_domain(const SeparableProblem& p) {
    DualDomain dom;
    for (const auto& t : p.terms) {
        if (t.quad > 0.0) {
            continue;
        }
        // Unbounded above: lin + lambda must stay >= 0.
        if (t.hi == kInf) {
            dom.lo = std::max(dom.lo, -t.lin);
        }
        if (t.lo == -kInf) {
            dom.hi = std::min(dom.hi, -t.lin);
        }
    }
    return dom;
}

double dual_value(const SeparableProblem& p, double lambda) {
    double acc = -lambda * p.balance_rhs;
    for (const auto& t : p.terms) {
        const double y = term_response(t, lambda, std::clamp(0.0, t.lo, t.hi));
        if (!std::isfinite(y)) {
            return -kInf;
        }
        acc += t.value(y) + lambda * y;
    }
    return acc;
}

SubgradientResult run_subgradient(const SeparableProblem& p, const SubgradientOptions& opts) {
    const DualDomain dom = dual_domain(p);
    if (dom.lo > dom.hi) {
        throw SolverError("subgradient: dual domain is empty (problem unbounded)");
    }
    SubgradientResult out;
    double lambda = std::clamp(opts.lambda0, dom.lo, dom.hi);
    std::vector<double> y(p.size());
    double best_dual = -kInf;
    double best_lambda = lambda;
    for (std::size_t k = 1; k <= opts.max_iter; ++k) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            const auto& t = p.terms[i];
            y[i] = term_response(t, lambda, std::clamp(0.0, t.lo, t.hi));
        }
        const double g = balance_residual(y, p);
        const double q = dual_value(p, lambda);
        out.history.push_back({k, lambda, q, g});
        if (q > best_dual) {
            best_dual = q;
            best_lambda = lambda;
        }
        lambda = std::clamp(lambda + opts.step_scale / std::sqrt(static_cast<double>(k)) * g, dom.lo, dom.hi);
    }

    Solution& sol = out.solution;
    sol.method = Method::subgradient;
    sol.multiplier = best_lambda;
    sol.y.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& t = p.terms[i];
        sol.y[i] = term_response(t, best_lambda, std::clamp(0.0, t.lo, t.hi));
    }
    sol.objective = per_slot_objective(sol.y, p);
    sol.balance_residual = balance_residual(sol.y, p);
    sol.iterations = opts.max_iter;
    sol.converged = false;
    return out;
}

void write_residual_csv(std::ostream& os, std::span<const IterationRecord> history, double optimum) {
    os << "iteration,objective_gap,balance_residual\n";
    os.precision(17);
    for (const auto& r : history) {
        os << r.iteration << ',' << std::abs(r.objective - optimum) << ',' << r.balance_residual << '\n';
    }
}

double loglog_slope(std::span<const double> iterations, std::span<const double> gaps) {
    double sx = 0.0;
    double sy = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
    double n = 0.0;
    for (std::size_t i = 0; i < iterations.size(); ++i) {
        if (!(gaps[i] > 0.0) || !(iterations[i] > 0.0)) {
            continue;
        }
        const double x = std::log(iterations[i]);
        const double yv = std::log(gaps[i]);
        sx += x;
        sy += yv;
        sxx += x * x;
        sxy += x * yv;
        n += 1.0;
    }
    const double denom = n * sxx - sx * sx;
    return denom > 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
}

} // namespace pbal
