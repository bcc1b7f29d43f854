#include "pbal/perslot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pbal {

namespace {

// Terms shared by every variant: load, CG and the two market flows. `weight`
// is V for the drift-plus-penalty variants and 1 for greedy.
void append_aggregator_terms(SeparableProblem& p, const SystemState& q, const GridParams& params, double weight,
                             double g_lo, double g_hi) {
    const auto& cg = params.cg;
    // Placeholder for l_m; the caller fills its coefficients.
    p.terms.push_back(ScalarTerm{});
    // y = -g, F(y) = weight * C(-y).
    p.terms.push_back(ScalarTerm{weight * cg.gen_quad, -weight * cg.gen_lin, -g_hi, -g_lo});
    // y = -e_b, F(y) = weight * p_b * e_b.
    p.terms.push_back(ScalarTerm{0.0, -weight * q.p_b, -kInf, 0.0});
    // y = e_s, F(y) = -weight * p_s * e_s.
    p.terms.push_back(ScalarTerm{0.0, -weight * q.p_s, 0.0, kInf});
}

SeparableProblem build_drift_plus_penalty(const SystemState& q, const OperationalState& op,
                                          const GridParams& params, bool ramped) {
    const std::size_t n = params.n_rg;
    SeparableProblem p;
    p.index_map.n_rg = n;
    p.terms.reserve(n + 4);
    const auto b = beta(params);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& st = params.storage[i];
        p.terms.push_back(ScalarTerm{params.V * st.deg_quad, params.V * st.deg_lin + (op.s[i] - b[i]), st.x_min,
                                     std::min(q.a[i], st.x_max)});
    }
    const auto& cg = params.cg;
    double g_lo = 0.0;
    double g_hi = cg.g_max;
    if (ramped) {
        g_lo = std::max(op.g_prev - cg.ramp(), 0.0);
        g_hi = std::min(cg.g_max, op.g_prev + cg.ramp());
    }
    append_aggregator_terms(p, q, params, params.V, g_lo, g_hi);
    p.terms[p.index_map.l_m()] = ScalarTerm{0.0, -op.J / q.l_f, q.l_b, q.l_b + q.l_f};
    p.balance_rhs = q.total_renewable();
    return p;
}

} // namespace

SeparableProblem build_proposed(const SystemState& q, const OperationalState& op, const GridParams& params) {
    return build_drift_plus_penalty(q, op, params, true);
}

SeparableProblem build_unramped(const SystemState& q, const OperationalState& op, const GridParams& params) {
    return build_drift_plus_penalty(q, op, params, false);
}

SeparableProblem build_greedy(const SystemState& q, const OperationalState& op, const GridParams& params) {
    const std::size_t n = params.n_rg;
    SeparableProblem p;
    p.index_map.n_rg = n;
    p.terms.reserve(n + 4);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& st = params.storage[i];
        const double lo = std::max(st.x_min, st.s_min - op.s[i]);
        const double hi = std::min({q.a[i], st.x_max, st.s_max - op.s[i]});
        p.terms.push_back(ScalarTerm{st.deg_quad, st.deg_lin, lo, hi});
    }
    const auto& cg = params.cg;
    append_aggregator_terms(p, q, params, 1.0, std::max(op.g_prev - cg.ramp(), 0.0),
                            std::min(cg.g_max, op.g_prev + cg.ramp()));
    const double alpha = params.loads.alpha;
    p.terms[p.index_map.l_m()] = ScalarTerm{0.0, 0.0, q.l_b + (1.0 - alpha) * q.l_f, q.l_b + q.l_f};
    p.balance_rhs = q.total_renewable();
    return p;
}

SeparableProblem build(ProblemVariant variant, const SystemState& q, const OperationalState& op,
                       const GridParams& params) {
    switch (variant) {
    case ProblemVariant::proposed:
        return build_proposed(q, op, params);
    case ProblemVariant::unramped:
        return build_unramped(q, op, params);
    case ProblemVariant::greedy:
        return build_greedy(q, op, params);
    }
    throw std::invalid_argument("unknown problem variant");
}

void net_market(ControlAction& u) {
    const double common = std::min(u.e_b, u.e_s);
    if (common > 0.0) {
        u.e_b -= common;
        u.e_s -= common;
    }
}

ControlAction to_action(std::span<const double> y, const SystemState& q, const IndexMap& map, double tol) {
    if (y.size() != map.size()) {
        throw std::invalid_argument("to_action: solution length does not match index map");
    }
    ControlAction u;
    u.x.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(map.n_rg));
    u.b.resize(map.n_rg);
    for (std::size_t i = 0; i < map.n_rg; ++i) {
        u.b[i] = q.a[i] - u.x[i];
    }
    u.l_m = y[map.l_m()];
    u.g = -y[map.neg_g()];
    u.e_b = -y[map.neg_e_b()];
    u.e_s = y[map.e_s()];
    net_market(u);
    const double residual = u.balance_residual();
    if (!(std::abs(residual) <= tol)) {
        std::ostringstream os;
        os << "to_action: balance residual " << residual << " exceeds tolerance " << tol;
        throw BalanceError(os.str());
    }
    return u;
}

double slot_cost(const ControlAction& u, const SystemState& q, const GridParams& params) {
    double cost = params.cg.cost(u.g) + q.p_b * u.e_b - q.p_s * u.e_s;
    for (std::size_t i = 0; i < u.x.size(); ++i) {
        cost += params.storage[i].degradation(u.x[i]);
    }
    return cost;
}

double per_slot_objective(std::span<const double> y, const SeparableProblem& p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.terms.size(); ++i) {
        acc += p.terms[i].value(y[i]);
    }
    return acc;
}

double balance_residual(std::span<const double> y, const SeparableProblem& p) {
    return std::accumulate(y.begin(), y.end(), 0.0) - p.balance_rhs;
}

} // namespace pbal
