#include <doctest.h>

#include <string>

#include "pbal/config.hpp"

using namespace pbal;
using doctest::Approx;

namespace {

std::string error_of(const std::string& json) {
    try {
        (void)parse_config(json);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("empty document yields defaults") {
    const auto cfg = parse_config("{}");
    CHECK(cfg.params.n_rg == 30);
    CHECK(cfg.params.V == 1.0);
    CHECK(cfg.params.storage[7].s_max == Approx(54.2));
    CHECK(cfg.slots == 50'000);
    CHECK(cfg.policies.size() == 3);
    CHECK_FALSE(cfg.sweep);
    CHECK_NOTHROW(validate(cfg));
}

TEST_CASE("keys follow the parameter field names") {
    const auto cfg = parse_config(R"({
        "n_rg": 3,
        "storage": {"s_max": 80, "deg_quad": 5, "s_init": 2},
        "cg": {"g_max": 40, "r": 0.2},
        "market": {"p_b_max": 13},
        "loads": {"alpha": 0.25, "l_f_min": 2},
        "a_max": [1, 2, 3],
        "V": 0.5,
        "rho": 2,
        "enforce_v_max": false,
        "policies": ["greedy"],
        "seed": 42,
        "slots": 100,
        "out": "results",
        "sweep": {"parameter": "alpha", "values": [0.1, 0.9]}
    })");
    const auto& p = cfg.params;
    CHECK(p.n_rg == 3);
    CHECK(p.storage.size() == 3);
    CHECK(p.storage[2].s_max == 80.0);
    CHECK(p.storage[1].deg_quad == 5.0);
    CHECK(*p.storage[0].s_init == 2.0);
    CHECK(p.storage[0].x_max == Approx(1.1));
    CHECK(p.cg.g_max == 40.0);
    CHECK(p.cg.r == 0.2);
    CHECK(p.cg.gen_lin == 8.0);
    CHECK(p.market.p_b_max == 13.0);
    CHECK(p.loads.alpha == 0.25);
    CHECK(p.a_max == std::vector<double>{1, 2, 3});
    CHECK(p.V == 0.5);
    CHECK(p.rho == 2.0);
    CHECK_FALSE(p.enforce_v_max);
    CHECK(cfg.policies == std::vector<Policy>{Policy::greedy});
    CHECK(cfg.seed == 42);
    CHECK(cfg.sweep_seeds() == std::vector<std::uint64_t>{42});
    CHECK(cfg.slots == 100);
    CHECK(cfg.out == "results");
    REQUIRE(cfg.sweep);
    CHECK(cfg.sweep->parameter == SweepParameter::alpha);
    CHECK(cfg.sweep->values == std::vector<double>{0.1, 0.9});
}

TEST_CASE("per-unit storage arrays") {
    const auto cfg = parse_config(R"({"n_rg": 2, "storage": [{"s_max": 60}, {"s_max": 70}]})");
    CHECK(cfg.params.storage[0].s_max == 60.0);
    CHECK(cfg.params.storage[1].s_max == 70.0);
    CHECK(error_of(R"({"n_rg": 2, "storage": [{}]})").find("storage") != std::string::npos);
}

TEST_CASE("malformed and unknown input is rejected") {
    CHECK(error_of("{").find("malformed JSON") != std::string::npos);
    CHECK(error_of("[]").find("expected an object") != std::string::npos);
    CHECK(error_of(R"({"Vmax": 1})").find("Vmax: unknown key") != std::string::npos);
    CHECK(error_of(R"({"cg": {"gmax": 1}})").find("cg.gmax") != std::string::npos);
    CHECK(error_of(R"({"V": "big"})").find("V: expected a number") != std::string::npos);
    CHECK(error_of(R"({"slots": -3})").find("slots") != std::string::npos);
    CHECK(error_of(R"({"policies": ["best"]})").find("policies") != std::string::npos);
    CHECK(error_of(R"({"sweep": {"parameter": "rho"}})").find("sweep.parameter") != std::string::npos);
    CHECK(error_of(R"({"n_rg": 0})").find("n_rg") != std::string::npos);
}

TEST_CASE("semantic validation") {
    auto cfg = parse_config(R"({"V": 2})");
    CHECK_THROWS_AS(validate(cfg), ValidationError);

    cfg = parse_config(R"({"sweep": {"parameter": "r", "values": [0.1, 1.5]}})");
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = parse_config(R"({"sweep": {"parameter": "V", "values": [0.5, 3]}})");
    CHECK_NOTHROW(validate(cfg));
    cfg = parse_config(R"({"sweep": {"parameter": "V", "values": []}})");
    CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("round trip through JSON") {
    RunConfig cfg = preset("fig6");
    cfg.params.storage[4].s_init = 3.5;
    cfg.params.a_max[2] = 0.7;
    const auto back = parse_config(dump_config(cfg));
    CHECK(dump_config(back) == dump_config(cfg));
    CHECK(back.params.loads.l_b_min == 20.0);
    CHECK(*back.params.storage[4].s_init == 3.5);
    CHECK(back.seeds == cfg.seeds);

    const auto params = parse_params(dump_params(cfg.params));
    CHECK(dump_params(params) == dump_params(cfg.params));
    CHECK_THROWS_AS((void)parse_params(R"({"seed": 1})"), ConfigError);
}

TEST_CASE("presets") {
    for (const auto& name : preset_names()) {
        CAPTURE(name);
        const auto cfg = preset(name);
        CHECK_NOTHROW(validate(cfg));
    }
    CHECK(preset("fig3").sweep->parameter == SweepParameter::V);
    CHECK(preset("fig4").sweep->parameter == SweepParameter::alpha);
    CHECK(preset("fig5").sweep->parameter == SweepParameter::r);
    CHECK(preset("fig5").params.loads.l_b_max == 25.0);
    CHECK(preset("fig6").params.loads.l_f_max == 40.0);
    CHECK_FALSE(preset("fig7").sweep);
    CHECK(preset("fig3").sweep_seeds().size() == 10);
    CHECK_THROWS_AS((void)preset("fig8"), ConfigError);

    // A config file refines a preset.
    const auto cfg = parse_config(R"({"slots": 10})", preset("fig6"));
    CHECK(cfg.slots == 10);
    CHECK(cfg.params.loads.l_b_min == 20.0);
}
