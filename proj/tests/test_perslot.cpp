#include <doctest.h>

#include "pbal/perslot.hpp"
#include "pbal/solvers.hpp"
#include "support.hpp"

using namespace pbal;
using doctest::Approx;

namespace {

SystemState flat_state(std::size_t n, double a = 0.5) { return SystemState{std::vector<double>(n, a), 10.0, 10.0, 11.0, 5.0}; }

} // namespace

TEST_CASE("proposed problem layout") {
    GridParams p;
    SystemState q = flat_state(30);
    q.a[0] = 0.4;
    OperationalState op = OperationalState::initial(p);
    op.s[1] = 12.0;
    const auto prob = build_proposed(q, op, p);
    const auto& m = prob.index_map;

    REQUIRE(prob.size() == 34);
    CHECK(prob.terms[0].hi == Approx(0.4));
    CHECK(prob.terms[0].lo == Approx(-1.1));
    CHECK(prob.terms[0].quad == Approx(10.0));
    CHECK(prob.terms[1].lin == Approx(12.0 - 35.1));
    CHECK(prob.terms[m.neg_g()].lo == Approx(-5.0));
    CHECK(prob.terms[m.neg_g()].hi == Approx(0.0));
    CHECK(prob.terms[m.neg_g()].lin == Approx(-8.0));
    CHECK(prob.terms[m.l_m()].lin == 0.0);
    CHECK(prob.terms[m.l_m()].lo == Approx(10.0));
    CHECK(prob.terms[m.l_m()].hi == Approx(20.0));
    CHECK(prob.terms[m.neg_e_b()].lin == Approx(-11.0));
    CHECK(prob.terms[m.neg_e_b()].lo == -kInf);
    CHECK(prob.terms[m.neg_e_b()].hi == 0.0);
    CHECK(prob.terms[m.e_s()].lin == Approx(-5.0));
    CHECK(prob.terms[m.e_s()].hi == kInf);
    CHECK(prob.balance_rhs == Approx(0.4 + 29 * 0.5));

    op.J = 4.0;
    CHECK(build_proposed(q, op, p).terms[m.l_m()].lin == Approx(-0.4));
}

TEST_CASE("unramped problem only widens the CG interval") {
    GridParams p;
    p.cg.r = 0.0;
    const SystemState q = flat_state(30);
    OperationalState op = OperationalState::initial(p);
    op.g_prev = 50.0;
    const auto ramped = build_proposed(q, op, p);
    const auto free = build_unramped(q, op, p);
    const auto g = ramped.index_map.neg_g();
    CHECK(ramped.terms[g].lo == Approx(-50.0));
    CHECK(ramped.terms[g].hi == Approx(-50.0));
    CHECK(free.terms[g].lo == Approx(-50.0));
    CHECK(free.terms[g].hi == Approx(0.0));
    for (std::size_t i = 0; i < ramped.size(); ++i) {
        if (i == g) {
            continue;
        }
        CHECK(ramped.terms[i].quad == free.terms[i].quad);
        CHECK(ramped.terms[i].lin == free.terms[i].lin);
        CHECK(ramped.terms[i].lo == free.terms[i].lo);
        CHECK(ramped.terms[i].hi == free.terms[i].hi);
    }
}

TEST_CASE("full ramping equals the unramped interval") {
    GridParams p;
    p.cg.r = 1.0;
    const SystemState q = flat_state(30);
    OperationalState op = OperationalState::initial(p);
    const auto g = IndexMap{30}.neg_g();
    CHECK(build_proposed(q, op, p).terms[g].lo == build_unramped(q, op, p).terms[g].lo);
    CHECK(build_proposed(q, op, p).terms[g].hi == build_unramped(q, op, p).terms[g].hi);
}

TEST_CASE("property: ramped CG interval lies inside the unramped one") {
    test::Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const GridParams p = test::random_params(rng, 2);
        const auto q = test::random_state(rng, p);
        const auto op = test::random_op(rng, p);
        const auto g = IndexMap{2}.neg_g();
        const auto ramped = build_proposed(q, op, p).terms[g];
        const auto free = build_unramped(q, op, p).terms[g];
        CHECK(ramped.lo >= free.lo);
        CHECK(ramped.hi <= free.hi);
        CHECK(ramped.lo <= ramped.hi);
        CHECK(-ramped.lo <= op.g_prev + p.cg.ramp() + 1e-12);
        CHECK(-ramped.hi >= op.g_prev - p.cg.ramp() - 1e-12);
    }
}

TEST_CASE("greedy problem") {
    GridParams p;
    const SystemState q = flat_state(30);
    OperationalState op = OperationalState::initial(p);
    op.J = 100.0;
    auto prob = build_greedy(q, op, p);
    const auto& m = prob.index_map;
    CHECK(prob.terms[0].lo == 0.0);
    CHECK(prob.terms[0].hi == Approx(0.5));
    CHECK(prob.terms[0].quad == Approx(10.0));
    CHECK(prob.terms[0].lin == 0.0);
    CHECK(prob.terms[m.l_m()].lin == 0.0);
    CHECK(prob.terms[m.l_m()].lo == Approx(15.0));
    CHECK(prob.terms[m.neg_e_b()].lin == Approx(-11.0));

    op.s[0] = 54.0;
    prob = build_greedy(q, op, p);
    CHECK(prob.terms[0].lo == Approx(-1.1));
    CHECK(prob.terms[0].hi == Approx(0.2));

    p.loads.alpha = 1.0;
    prob = build_greedy(q, op, p);
    CHECK(prob.terms[m.l_m()].lo == Approx(10.0));
    CHECK(prob.terms[m.l_m()].hi == Approx(20.0));
    p.loads.alpha = 0.0;
    prob = build_greedy(q, op, p);
    CHECK(prob.terms[m.l_m()].lo == Approx(20.0));
    CHECK(prob.terms[m.l_m()].hi == Approx(20.0));
}

TEST_CASE("property: every built problem is feasible") {
    test::Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const GridParams p = test::random_params(rng, 1 + rng.index(6));
        const auto q = test::random_state(rng, p);
        const auto op = test::random_op(rng, p);
        for (auto v : {ProblemVariant::proposed, ProblemVariant::unramped, ProblemVariant::greedy}) {
            const auto prob = build(v, q, op, p);
            REQUIRE(prob.size() == p.n_rg + 4);
            double lo = 0.0;
            for (const auto& t : prob.terms) {
                CHECK(t.lo <= t.hi);
                CHECK(t.quad >= 0.0);
                lo += t.lo;
            }
            CHECK(lo <= prob.balance_rhs);
        }
    }
}

TEST_CASE("to_action") {
    const SystemState q{{0.5, 0.5}, 10.0, 10.0, 11.0, 5.0};
    const IndexMap m{2};
    // x = (0.2, -0.1), l_m = 13, g = 5, e_b = 2, e_s = 0: supply 5 + 2 + 0.3 + 0.6 = 7.9
    std::vector<double> y{0.2, -0.1, 7.9 + 0.0, -5.0, -2.0, 0.0};
    const auto u = to_action(y, q, m);
    CHECK(u.b[0] == Approx(0.3));
    CHECK(u.b[1] == Approx(0.6));
    CHECK(u.e_b == Approx(2.0));
    CHECK(u.g == Approx(5.0));
    CHECK(u.balance_residual() == Approx(0.0).epsilon(1e-12));

    y[2] += 1.0;
    CHECK_THROWS_AS((void)to_action(y, q, m), BalanceError);
}

TEST_CASE("netting removes simultaneous trade and lowers cost by the spread") {
    GridParams p;
    p.resize(1);
    const SystemState q{{0.0}, 10.0, 10.0, 11.0, 5.0};
    ControlAction u;
    u.x = {0.0};
    u.b = {0.0};
    u.g = 0.0;
    u.e_b = 3.0;
    u.e_s = 1.0;
    u.l_m = 2.0;
    const double before = slot_cost(u, q, p);
    const double residual = u.balance_residual();
    net_market(u);
    CHECK(u.e_b == Approx(2.0));
    CHECK(u.e_s == 0.0);
    CHECK(u.balance_residual() == Approx(residual));
    CHECK(before - slot_cost(u, q, p) == Approx(q.p_b - q.p_s));
}

TEST_CASE("slot cost") {
    GridParams p;
    p.resize(1);
    const SystemState q{{0.0}, 10.0, 10.0, 11.0, 5.0};
    ControlAction u;
    u.x = {0.0};
    u.b = {0.0};
    CHECK(slot_cost(u, q, p) == 0.0);
    u.g = 10.0;
    CHECK(slot_cost(u, q, p) == Approx(80.0));
    u.x = {1.0};
    CHECK(slot_cost(u, q, p) == Approx(90.0));
}

TEST_CASE("per-slot objective") {
    SeparableProblem prob;
    prob.terms = {ScalarTerm{1.0, -2.0, -5.0, 5.0}};
    CHECK(per_slot_objective(std::vector<double>{0.0}, prob) == 0.0);
    CHECK(per_slot_objective(std::vector<double>{1.0}, prob) == Approx(-1.0));
}

TEST_CASE("property: per-slot objective reconstructs the drift-plus-penalty bound") {
    // V * cost + sum (s_i - beta_i) x_i - (J / l_f) l_m, evaluated on the
    // physical action without netting.
    test::Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const GridParams p = test::random_params(rng, 1 + rng.index(4));
        const auto q = test::random_state(rng, p);
        const auto op = test::random_op(rng, p);
        const auto prob = build_proposed(q, op, p);
        std::vector<double> y(prob.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            const auto& t = prob.terms[i];
            y[i] = std::clamp(rng.uniform(-20.0, 20.0), t.lo, t.hi);
        }
        ControlAction u;
        u.x.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(p.n_rg));
        u.b.assign(p.n_rg, 0.0);
        u.l_m = y[prob.index_map.l_m()];
        u.g = -y[prob.index_map.neg_g()];
        u.e_b = -y[prob.index_map.neg_e_b()];
        u.e_s = y[prob.index_map.e_s()];
        const auto b = beta(p);
        double expected = p.V * slot_cost(u, q, p) - op.J / q.l_f * u.l_m;
        for (std::size_t i = 0; i < p.n_rg; ++i) {
            expected += (op.s[i] - b[i]) * u.x[i];
        }
        CHECK(per_slot_objective(y, prob) == Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("property: solved actions satisfy every per-slot constraint") {
    test::Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const GridParams p = test::random_params(rng, 1 + rng.index(8));
        const auto q = test::random_state(rng, p);
        const auto op = test::random_op(rng, p);
        for (auto v : {ProblemVariant::proposed, ProblemVariant::unramped, ProblemVariant::greedy}) {
            const auto prob = build(v, q, op, p);
            const auto sol = solve_dual_bisection(prob);
            const auto u = to_action(sol.y, q, prob.index_map, 1e-9);
            CHECK(std::abs(u.balance_residual()) <= 1e-9);
            CHECK(u.e_b * u.e_s == 0.0);
            CHECK(u.e_b >= 0.0);
            CHECK(u.e_s >= 0.0);
            CHECK(u.l_m >= q.l_b - 1e-12);
            CHECK(u.l_m <= q.l_b + q.l_f + 1e-12);
            CHECK(u.g >= -1e-12);
            CHECK(u.g <= p.cg.g_max + 1e-12);
            for (std::size_t i = 0; i < p.n_rg; ++i) {
                CHECK(u.b[i] >= -1e-12);
                CHECK(u.x[i] >= p.storage[i].x_min - 1e-12);
                CHECK(u.x[i] <= p.storage[i].x_max + 1e-12);
            }
            if (v != ProblemVariant::unramped) {
                CHECK(std::abs(u.g - op.g_prev) <= p.cg.ramp() + 1e-9);
            }
        }
    }
}

TEST_CASE("property: storage threshold rules hold at the optimum") {
    test::Rng rng(17);
    int low_hits = 0;
    int high_hits = 0;
    for (int trial = 0; trial < 400; ++trial) {
        const GridParams p = test::random_params(rng, 3);
        const auto q = test::random_state(rng, p);
        auto op = test::random_op(rng, p);
        const auto b = beta(p);
        // Push some units into the threshold regions.
        for (std::size_t i = 0; i < p.n_rg; ++i) {
            const auto& st = p.storage[i];
            const double low = -st.x_min + st.s_min;
            const double high = b[i] - p.V * (p.market.p_s_min + st.slope_min());
            const double pick = rng.uniform(0.0, 1.0);
            if (pick < 0.35) {
                op.s[i] = rng.uniform(st.s_min, std::min(low, st.s_max));
            } else if (pick < 0.7 && high < st.s_max) {
                op.s[i] = rng.uniform(std::max(high, st.s_min), st.s_max);
            }
        }
        const auto prob = build_proposed(q, op, p);
        const auto sol = solve_dual_bisection(prob);
        for (std::size_t i = 0; i < p.n_rg; ++i) {
            const auto& st = p.storage[i];
            if (op.s[i] < -st.x_min + st.s_min) {
                ++low_hits;
                CHECK(sol.y[i] == Approx(std::min(q.a[i], st.x_max)).epsilon(1e-9));
            }
            if (op.s[i] > b[i] - p.V * (p.market.p_s_min + st.slope_min())) {
                ++high_hits;
                CHECK(sol.y[i] == Approx(st.x_min).epsilon(1e-9));
            }
        }
    }
    CHECK(low_hits > 50);
    CHECK(high_hits > 50);
}
