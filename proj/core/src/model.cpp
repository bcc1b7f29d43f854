#include "pbal/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace pbal {

namespace {

// Relative slack on the V <= V_max check; V_max is often computed from s_max
// values that were themselves derived from V.
constexpr double kVmaxSlack = 1e-12;

[[noreturn]] void fail(const std::string& field, const std::string& what) {
    throw ValidationError(field + ": " + what);
}

void require_finite(double v, const std::string& field) {
    if (!std::isfinite(v)) {
        fail(field, "must be finite");
    }
}

std::string indexed(const char* name, std::size_t i) {
    std::ostringstream os;
    os << name << '[' << i << ']';
    return os.str();
}

void validate_storage(const StorageParams& st, std::size_t i) {
    const auto f = [&](const char* field) { return indexed("storage", i) + "." + field; };
    for (auto [v, name] : {std::pair{st.x_min, "x_min"}, {st.x_max, "x_max"}, {st.s_min, "s_min"},
                           {st.s_max, "s_max"}, {st.deg_quad, "deg_quad"}, {st.deg_lin, "deg_lin"}}) {
        require_finite(v, f(name));
    }
    if (!(st.x_min < 0.0)) {
        fail(f("x_min"), "maximum discharge must be negative");
    }
    if (!(st.x_max > 0.0)) {
        fail(f("x_max"), "maximum charge must be positive");
    }
    if (!(st.s_min <= st.s_max)) {
        fail(f("s_max"), "must be >= s_min");
    }
    if (!(st.deg_quad >= 0.0)) {
        fail(f("deg_quad"), "degradation cost must be convex (deg_quad >= 0)");
    }
    if (st.s_init) {
        require_finite(*st.s_init, f("s_init"));
        if (*st.s_init < st.s_min || *st.s_init > st.s_max) {
            fail(f("s_init"), "initial level must lie in [s_min, s_max]");
        }
    }
}

} // namespace

void GridParams::resize(std::size_t n) {
    const StorageParams st = storage.empty() ? StorageParams{} : storage.front();
    const double a = a_max.empty() ? 1.1 : a_max.front();
    n_rg = n;
    storage.resize(n, st);
    a_max.resize(n, a);
}

double SystemState::total_renewable() const { return std::accumulate(a.begin(), a.end(), 0.0); }

OperationalState OperationalState::initial(const GridParams& params) {
    OperationalState op;
    op.s.reserve(params.n_rg);
    for (const auto& st : params.storage) {
        op.s.push_back(st.initial_level());
    }
    op.J = 0.0;
    op.g_prev = params.cg.g_init;
    return op;
}

double ControlAction::balance_residual() const {
    const double supply = g + e_b + std::accumulate(b.begin(), b.end(), 0.0);
    return supply - e_s - l_m;
}

void validate(const GridParams& params) {
    if (params.storage.size() != params.n_rg) {
        fail("storage", "expected one entry per RG (n_rg)");
    }
    if (params.a_max.size() != params.n_rg) {
        fail("a_max", "expected one entry per RG (n_rg)");
    }
    for (std::size_t i = 0; i < params.n_rg; ++i) {
        validate_storage(params.storage[i], i);
        require_finite(params.a_max[i], indexed("a_max", i));
        if (params.a_max[i] < 0.0) {
            fail(indexed("a_max", i), "must be >= 0");
        }
    }

    const auto& cg = params.cg;
    for (auto [v, name] : {std::pair{cg.g_max, "cg.g_max"}, {cg.r, "cg.r"}, {cg.gen_lin, "cg.gen_lin"},
                           {cg.gen_quad, "cg.gen_quad"}, {cg.g_init, "cg.g_init"}}) {
        require_finite(v, name);
    }
    if (!(cg.g_max > 0.0)) {
        fail("cg.g_max", "must be positive");
    }
    if (cg.r < 0.0 || cg.r > 1.0) {
        fail("cg.r", "ramping coefficient must lie in [0, 1]");
    }
    if (cg.gen_quad < 0.0) {
        fail("cg.gen_quad", "generation cost must be convex (gen_quad >= 0)");
    }
    if (cg.g_init < 0.0 || cg.g_init > cg.g_max) {
        fail("cg.g_init", "must lie in [0, g_max]");
    }

    const auto& m = params.market;
    for (auto [v, name] : {std::pair{m.p_b_min, "market.p_b_min"}, {m.p_b_max, "market.p_b_max"},
                           {m.p_s_min, "market.p_s_min"}, {m.p_s_max, "market.p_s_max"}}) {
        require_finite(v, name);
    }
    if (m.p_b_min > m.p_b_max) {
        fail("market.p_b_max", "must be >= p_b_min");
    }
    if (m.p_s_min > m.p_s_max) {
        fail("market.p_s_max", "must be >= p_s_min");
    }
    if (!(m.p_b_min > m.p_s_max)) {
        fail("market", "price overlap: p_b_min must be strictly greater than p_s_max");
    }

    const auto& l = params.loads;
    for (auto [v, name] : {std::pair{l.l_b_min, "loads.l_b_min"}, {l.l_b_max, "loads.l_b_max"},
                           {l.l_f_min, "loads.l_f_min"}, {l.l_f_max, "loads.l_f_max"}, {l.alpha, "loads.alpha"}}) {
        require_finite(v, name);
    }
    if (!(l.l_f_min > 0.0)) {
        fail("loads.l_f_min", "flexible-load lower bound must be positive");
    }
    if (l.l_f_min > l.l_f_max) {
        fail("loads.l_f_max", "must be >= l_f_min");
    }
    if (l.l_b_min < 0.0 || l.l_b_min > l.l_b_max) {
        fail("loads.l_b_max", "base-load bounds must satisfy 0 <= l_b_min <= l_b_max");
    }
    if (l.alpha < 0.0 || l.alpha > 1.0) {
        fail("loads.alpha", "must lie in [0, 1]");
    }

    require_finite(params.V, "V");
    require_finite(params.rho, "rho");
    if (!(params.V > 0.0)) {
        fail("V", "control weight must be positive");
    }
    if (!(params.rho > 0.0)) {
        fail("rho", "ADMM penalty must be positive");
    }

    if (params.enforce_v_max && params.n_rg > 0) {
        const double vm = v_max(params);
        if (params.V > vm * (1.0 + kVmaxSlack)) {
            std::ostringstream os;
            os << "V=" << params.V << " exceeds V_max=" << vm
               << " (storage range too small for this weight; raise s_max or lower V)";
            fail("V", os.str());
        }
    }
}

void validate(const SystemState& q, const GridParams& params) {
    if (q.a.size() != params.n_rg) {
        fail("a", "expected one renewable amount per RG");
    }
    for (std::size_t i = 0; i < q.a.size(); ++i) {
        if (!(q.a[i] >= 0.0 && q.a[i] <= params.a_max[i])) {
            fail(indexed("a", i), "must lie in [0, a_max]");
        }
    }
    const auto& l = params.loads;
    if (!(q.l_b >= l.l_b_min && q.l_b <= l.l_b_max)) {
        fail("l_b", "outside [l_b_min, l_b_max]");
    }
    if (!(q.l_f >= l.l_f_min && q.l_f <= l.l_f_max)) {
        fail("l_f", "outside [l_f_min, l_f_max]");
    }
    const auto& m = params.market;
    if (!(q.p_b >= m.p_b_min && q.p_b <= m.p_b_max)) {
        fail("p_b", "outside [p_b_min, p_b_max]");
    }
    if (!(q.p_s >= m.p_s_min && q.p_s <= m.p_s_max)) {
        fail("p_s", "outside [p_s_min, p_s_max]");
    }
    if (!(q.p_b > q.p_s)) {
        fail("p_b", "buying price must exceed selling price");
    }
}

void validate(const OperationalState& op, const GridParams& params) {
    if (op.s.size() != params.n_rg) {
        fail("s", "expected one storage level per RG");
    }
    for (std::size_t i = 0; i < op.s.size(); ++i) {
        const auto& st = params.storage[i];
        if (!(op.s[i] >= st.s_min && op.s[i] <= st.s_max)) {
            fail(indexed("s", i), "outside [s_min, s_max]");
        }
    }
    if (!(op.J >= 0.0) || !std::isfinite(op.J)) {
        fail("J", "virtual queue must be finite and >= 0");
    }
    if (!(op.g_prev >= 0.0 && op.g_prev <= params.cg.g_max)) {
        fail("g_prev", "outside [0, g_max]");
    }
}

std::vector<double> beta(const GridParams& params) {
    std::vector<double> out;
    out.reserve(params.storage.size());
    for (const auto& st : params.storage) {
        out.push_back(params.V * (params.market.p_b_max + st.slope_max()) - st.x_min + st.s_min);
    }
    return out;
}

double v_max(const GridParams& params) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& st : params.storage) {
        const double num = st.s_max - st.s_min + st.x_min - st.x_max;
        const double den = params.market.p_b_max - params.market.p_s_min + st.slope_max() - st.slope_min();
        best = std::min(best, num / den);
    }
    if (!(best > 0.0)) {
        throw ValidationError("storage: s_max - s_min must exceed x_max - x_min for a positive V_max");
    }
    return best;
}

double drift_constant_B(const GridParams& params) {
    double acc = 0.5 * (1.0 + params.loads.alpha * params.loads.alpha);
    for (const auto& st : params.storage) {
        acc += 0.5 * std::max(st.x_min * st.x_min, st.x_max * st.x_max);
    }
    return acc;
}

std::vector<double> s_up(const GridParams& params) {
    std::vector<double> out;
    out.reserve(params.storage.size());
    const double price_span = params.market.p_b_max - params.market.p_s_min;
    for (const auto& st : params.storage) {
        out.push_back(params.V * (price_span + st.slope_max() - st.slope_min()) + st.x_max - st.x_min + st.s_min);
    }
    return out;
}

double j_bound(const GridParams& params) {
    return params.V * params.market.p_b_max * params.loads.l_f_max + 1.0;
}

void size_storage_for_v(GridParams& params) {
    const auto up = s_up(params);
    for (std::size_t i = 0; i < params.storage.size(); ++i) {
        params.storage[i].s_max = up[i];
    }
}

} // namespace pbal
