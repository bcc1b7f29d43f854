#pragma once

// Generators and independent reference computations shared by the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "pbal/model.hpp"
#include "pbal/perslot.hpp"
#include "pbal/sim.hpp"

namespace pbal::test {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_); }
    bool coin() { return index(2) == 1; }

  private:
    std::mt19937_64 gen_;
};

/// Random heterogeneous parameters that satisfy every invariant, with V at a
/// random fraction of V_max.
inline GridParams random_params(Rng& rng, std::size_t n) {
    GridParams p = GridParams::defaults();
    p.resize(n);
    p.market.p_s_min = rng.uniform(1.0, 5.0);
    p.market.p_s_max = p.market.p_s_min + rng.uniform(0.0, 3.0);
    p.market.p_b_min = p.market.p_s_max + rng.uniform(0.1, 4.0);
    p.market.p_b_max = p.market.p_b_min + rng.uniform(0.0, 4.0);
    p.cg.g_max = rng.uniform(10.0, 80.0);
    p.cg.r = rng.uniform(0.0, 1.0);
    p.cg.gen_lin = rng.uniform(2.0, 15.0);
    p.cg.gen_quad = rng.coin() ? 0.0 : rng.uniform(0.0, 0.3);
    p.loads.l_b_min = rng.uniform(0.0, 10.0);
    p.loads.l_b_max = p.loads.l_b_min + rng.uniform(0.0, 20.0);
    p.loads.l_f_min = rng.uniform(1.0, 10.0);
    p.loads.l_f_max = p.loads.l_f_min + rng.uniform(0.0, 20.0);
    p.loads.alpha = rng.uniform(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto& st = p.storage[i];
        st.x_min = -rng.uniform(0.2, 3.0);
        st.x_max = rng.uniform(0.2, 3.0);
        st.s_min = rng.uniform(0.0, 5.0);
        st.deg_quad = rng.uniform(0.0, 20.0);
        st.deg_lin = rng.uniform(-2.0, 2.0);
        p.a_max[i] = rng.uniform(0.0, 4.0);
    }
    p.V = rng.uniform(0.05, 3.0);
    size_storage_for_v(p);
    for (auto& st : p.storage) {
        st.s_max += rng.uniform(0.0, 20.0);
    }
    return p;
}

inline SystemState random_state(Rng& rng, const GridParams& p) {
    SystemState q;
    for (double a_max : p.a_max) {
        q.a.push_back(rng.uniform(0.0, a_max));
    }
    q.l_b = rng.uniform(p.loads.l_b_min, p.loads.l_b_max);
    q.l_f = rng.uniform(p.loads.l_f_min, p.loads.l_f_max);
    q.p_b = rng.uniform(p.market.p_b_min, p.market.p_b_max);
    q.p_s = rng.uniform(p.market.p_s_min, p.market.p_s_max);
    return q;
}

inline OperationalState random_op(Rng& rng, const GridParams& p) {
    OperationalState op;
    for (const auto& st : p.storage) {
        op.s.push_back(rng.uniform(st.s_min, st.s_max));
    }
    op.J = rng.uniform(0.0, j_bound(p));
    op.g_prev = rng.uniform(0.0, p.cg.g_max);
    return op;
}

/// Proposed problem of a random slot under default parameters with n RGs.
inline SeparableProblem random_default_problem(Rng& rng, std::size_t n, SystemState* state_out = nullptr) {
    GridParams p = GridParams::defaults();
    p.resize(n);
    const SystemState q = random_state(rng, p);
    const OperationalState op = random_op(rng, p);
    if (state_out != nullptr) {
        *state_out = q;
    }
    return build_proposed(q, op, p);
}

/// Optimality certificate for a separable problem: every y_i minimises
/// F_i(y) + lambda*y over its interval (checked through the one-sided
/// derivatives) and the balance holds.
inline bool satisfies_kkt(const SeparableProblem& p, const std::vector<double>& y, double lambda, double tol) {
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& t = p.terms[i];
        if (!t.contains(y[i], tol)) {
            return false;
        }
        const double slope = 2.0 * t.quad * y[i] + t.lin + lambda;
        const bool at_lo = y[i] <= t.lo + tol;
        const bool at_hi = y[i] >= t.hi - tol;
        if (!at_lo && !at_hi && std::abs(slope) > tol) {
            return false;
        }
        if (at_lo && !at_hi && slope < -tol) {
            return false;
        }
        if (at_hi && !at_lo && slope > tol) {
            return false;
        }
        sum += y[i];
    }
    return std::abs(sum - p.balance_rhs) <= tol * static_cast<double>(p.size());
}

/// The textbook three-update ADMM for the sharing problem with a vector z
/// and a vector dual d, written without the scalar-dual simplification.
struct TextbookAdmm {
    std::vector<double> y;
    std::vector<double> z;
    std::vector<double> d;

    TextbookAdmm(const SeparableProblem& p, std::vector<double> y0) : y(std::move(y0)) {
        const double n = static_cast<double>(p.size());
        const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
        // z0 is the projection of y0 onto the balance hyperplane.
        for (double yi : y) {
            z.push_back(yi - ybar + p.balance_rhs / n);
        }
        d.assign(p.size(), 0.0);
    }

    void iterate(const SeparableProblem& p, double rho) {
        const std::size_t n = p.size();
        // y-update: argmin F_i(y) + (rho/2)(y - z_i + d_i/rho)^2 on [lo, hi].
        for (std::size_t i = 0; i < n; ++i) {
            const auto& t = p.terms[i];
            const double target = z[i] - d[i] / rho;
            const double unconstrained = (rho * target - t.lin) / (2.0 * t.quad + rho);
            y[i] = std::min(std::max(unconstrained, t.lo), t.hi);
        }
        // z-update: project y + d/rho onto sum(z) = rhs.
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = y[i] + d[i] / rho;
        }
        const double excess = (std::accumulate(w.begin(), w.end(), 0.0) - p.balance_rhs) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = w[i] - excess;
        }
        // Dual ascent on y = z.
        for (std::size_t i = 0; i < n; ++i) {
            d[i] += rho * (y[i] - z[i]);
        }
    }
};

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

} // namespace pbal::test
