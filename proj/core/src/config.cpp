#include "pbal/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace pbal {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
}

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> known) {
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) {
            fail(where.empty() ? key : where + "." + key, "unknown key");
        }
    }
}

void require_object(const json& v, const std::string& where) {
    if (!v.is_object()) {
        fail(where, "expected an object");
    }
}

double number(const json& v, const std::string& where) {
    if (!v.is_number()) {
        fail(where, "expected a number");
    }
    return v.get<double>();
}

template <class T>
T unsigned_int(const json& v, const std::string& where) {
    if (!v.is_number_unsigned()) {
        fail(where, "expected a non-negative integer");
    }
    return v.get<T>();
}

void read(const json& obj, const char* key, double& dst, const std::string& where) {
    if (auto it = obj.find(key); it != obj.end()) {
        dst = number(*it, where + key);
    }
}

StorageParams parse_storage(const json& v, StorageParams st, const std::string& where) {
    require_object(v, where);
    reject_unknown(v, where, {"x_min", "x_max", "s_min", "s_max", "deg_quad", "deg_lin", "s_init"});
    const std::string w = where + ".";
    read(v, "x_min", st.x_min, w);
    read(v, "x_max", st.x_max, w);
    read(v, "s_min", st.s_min, w);
    read(v, "s_max", st.s_max, w);
    read(v, "deg_quad", st.deg_quad, w);
    read(v, "deg_lin", st.deg_lin, w);
    if (auto it = v.find("s_init"); it != v.end()) {
        if (it->is_null()) {
            st.s_init.reset();
        } else {
            st.s_init = number(*it, w + "s_init");
        }
    }
    return st;
}

json storage_json(const StorageParams& st) {
    json j{{"x_min", st.x_min}, {"x_max", st.x_max}, {"s_min", st.s_min},     {"s_max", st.s_max},
           {"deg_quad", st.deg_quad}, {"deg_lin", st.deg_lin}};
    if (st.s_init) {
        j["s_init"] = *st.s_init;
    }
    return j;
}

// Per-RG fields accept one value for every unit or an array of n_rg values.
void apply_params(const json& doc, GridParams& p) {
    if (auto it = doc.find("n_rg"); it != doc.end()) {
        const auto n = unsigned_int<std::size_t>(*it, "n_rg");
        if (n == 0) {
            fail("n_rg", "must be at least 1");
        }
        p.resize(n);
    }
    if (auto it = doc.find("storage"); it != doc.end()) {
        if (it->is_array()) {
            if (it->size() != p.n_rg) {
                fail("storage", "array length must equal n_rg");
            }
            for (std::size_t i = 0; i < p.n_rg; ++i) {
                p.storage[i] = parse_storage((*it)[i], p.storage[i], "storage[" + std::to_string(i) + "]");
            }
        } else {
            for (auto& st : p.storage) {
                st = parse_storage(*it, st, "storage");
            }
        }
    }
    if (auto it = doc.find("a_max"); it != doc.end()) {
        if (it->is_array()) {
            if (it->size() != p.n_rg) {
                fail("a_max", "array length must equal n_rg");
            }
            for (std::size_t i = 0; i < p.n_rg; ++i) {
                p.a_max[i] = number((*it)[i], "a_max[" + std::to_string(i) + "]");
            }
        } else {
            p.a_max.assign(p.n_rg, number(*it, "a_max"));
        }
    }
    if (auto it = doc.find("cg"); it != doc.end()) {
        require_object(*it, "cg");
        reject_unknown(*it, "cg", {"g_max", "r", "gen_lin", "gen_quad", "g_init"});
        read(*it, "g_max", p.cg.g_max, "cg.");
        read(*it, "r", p.cg.r, "cg.");
        read(*it, "gen_lin", p.cg.gen_lin, "cg.");
        read(*it, "gen_quad", p.cg.gen_quad, "cg.");
        read(*it, "g_init", p.cg.g_init, "cg.");
    }
    if (auto it = doc.find("market"); it != doc.end()) {
        require_object(*it, "market");
        reject_unknown(*it, "market", {"p_b_min", "p_b_max", "p_s_min", "p_s_max"});
        read(*it, "p_b_min", p.market.p_b_min, "market.");
        read(*it, "p_b_max", p.market.p_b_max, "market.");
        read(*it, "p_s_min", p.market.p_s_min, "market.");
        read(*it, "p_s_max", p.market.p_s_max, "market.");
    }
    if (auto it = doc.find("loads"); it != doc.end()) {
        require_object(*it, "loads");
        reject_unknown(*it, "loads", {"l_b_min", "l_b_max", "l_f_min", "l_f_max", "alpha"});
        read(*it, "l_b_min", p.loads.l_b_min, "loads.");
        read(*it, "l_b_max", p.loads.l_b_max, "loads.");
        read(*it, "l_f_min", p.loads.l_f_min, "loads.");
        read(*it, "l_f_max", p.loads.l_f_max, "loads.");
        read(*it, "alpha", p.loads.alpha, "loads.");
    }
    read(doc, "V", p.V, "");
    read(doc, "rho", p.rho, "");
    if (auto it = doc.find("enforce_v_max"); it != doc.end()) {
        if (!it->is_boolean()) {
            fail("enforce_v_max", "expected true or false");
        }
        p.enforce_v_max = it->get<bool>();
    }
}

json params_json(const GridParams& p) {
    json storage = json::array();
    for (const auto& st : p.storage) {
        storage.push_back(storage_json(st));
    }
    return json{
        {"n_rg", p.n_rg},
        {"storage", storage},
        {"cg",
         {{"g_max", p.cg.g_max}, {"r", p.cg.r}, {"gen_lin", p.cg.gen_lin}, {"gen_quad", p.cg.gen_quad},
          {"g_init", p.cg.g_init}}},
        {"market",
         {{"p_b_min", p.market.p_b_min},
          {"p_b_max", p.market.p_b_max},
          {"p_s_min", p.market.p_s_min},
          {"p_s_max", p.market.p_s_max}}},
        {"loads",
         {{"l_b_min", p.loads.l_b_min},
          {"l_b_max", p.loads.l_b_max},
          {"l_f_min", p.loads.l_f_min},
          {"l_f_max", p.loads.l_f_max},
          {"alpha", p.loads.alpha}}},
        {"a_max", p.a_max},
        {"V", p.V},
        {"rho", p.rho},
        {"enforce_v_max", p.enforce_v_max},
    };
}

json parse_document(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
}

constexpr std::initializer_list<const char*> kParamKeys = {"n_rg", "storage", "cg",  "market",       "loads",
                                                           "a_max", "V",      "rho", "enforce_v_max"};

} // namespace

std::vector<std::uint64_t> RunConfig::sweep_seeds() const {
    return seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds;
}

GridParams parse_params(std::string_view json_text) {
    const json doc = parse_document(json_text);
    require_object(doc, "config");
    reject_unknown(doc, "", kParamKeys);
    GridParams p = GridParams::defaults();
    apply_params(doc, p);
    return p;
}

std::string dump_params(const GridParams& params) { return params_json(params).dump(2); }

RunConfig parse_config(std::string_view json_text, const RunConfig& base) {
    const json doc = parse_document(json_text);
    require_object(doc, "config");
    reject_unknown(doc, "",
                   {"n_rg", "storage", "cg", "market", "loads", "a_max", "V", "rho", "enforce_v_max", "policies",
                    "seed", "seeds", "slots", "sweep", "out", "warmup"});
    RunConfig cfg = base;
    apply_params(doc, cfg.params);

    if (auto it = doc.find("policies"); it != doc.end()) {
        if (!it->is_array() || it->empty()) {
            fail("policies", "expected a non-empty array of policy names");
        }
        cfg.policies.clear();
        for (const auto& name : *it) {
            if (!name.is_string()) {
                fail("policies", "expected policy names");
            }
            try {
                cfg.policies.push_back(parse_policy(name.get<std::string>()));
            } catch (const std::invalid_argument& e) {
                fail("policies", e.what());
            }
        }
    }
    if (auto it = doc.find("seed"); it != doc.end()) {
        cfg.seed = unsigned_int<std::uint64_t>(*it, "seed");
    }
    if (auto it = doc.find("seeds"); it != doc.end()) {
        if (!it->is_array()) {
            fail("seeds", "expected an array of integers");
        }
        cfg.seeds.clear();
        for (const auto& s : *it) {
            cfg.seeds.push_back(unsigned_int<std::uint64_t>(s, "seeds"));
        }
    }
    if (auto it = doc.find("slots"); it != doc.end()) {
        cfg.slots = unsigned_int<std::size_t>(*it, "slots");
    }
    if (auto it = doc.find("warmup"); it != doc.end()) {
        cfg.warmup = unsigned_int<std::size_t>(*it, "warmup");
    }
    if (auto it = doc.find("out"); it != doc.end()) {
        if (!it->is_string()) {
            fail("out", "expected a directory path");
        }
        cfg.out = it->get<std::string>();
    }
    if (auto it = doc.find("sweep"); it != doc.end()) {
        if (it->is_null()) {
            cfg.sweep.reset();
        } else {
            require_object(*it, "sweep");
            reject_unknown(*it, "sweep", {"parameter", "values", "lower_bound"});
            SweepConfig sw = cfg.sweep.value_or(SweepConfig{});
            if (auto p = it->find("parameter"); p != it->end()) {
                if (!p->is_string()) {
                    fail("sweep.parameter", "expected one of V, alpha, r");
                }
                try {
                    sw.parameter = parse_sweep_parameter(p->get<std::string>());
                } catch (const std::invalid_argument& e) {
                    fail("sweep.parameter", e.what());
                }
            }
            if (auto v = it->find("values"); v != it->end()) {
                if (!v->is_array()) {
                    fail("sweep.values", "expected an array of numbers");
                }
                sw.values.clear();
                for (const auto& x : *v) {
                    sw.values.push_back(number(x, "sweep.values"));
                }
            }
            if (auto lb = it->find("lower_bound"); lb != it->end()) {
                if (!lb->is_boolean()) {
                    fail("sweep.lower_bound", "expected true or false");
                }
                sw.lower_bound = lb->get<bool>();
            }
            cfg.sweep = std::move(sw);
        }
    }
    return cfg;
}

RunConfig load_config(const std::string& path, const RunConfig& base) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path + ": cannot open");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str(), base);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string dump_config(const RunConfig& cfg) {
    json doc = params_json(cfg.params);
    json policies = json::array();
    for (Policy p : cfg.policies) {
        policies.push_back(std::string(to_string(p)));
    }
    doc["policies"] = policies;
    doc["seed"] = cfg.seed;
    doc["seeds"] = cfg.seeds;
    doc["slots"] = cfg.slots;
    doc["out"] = cfg.out;
    doc["warmup"] = cfg.warmup;
    if (cfg.sweep) {
        doc["sweep"] = {{"parameter", std::string(to_string(cfg.sweep->parameter))},
                        {"values", cfg.sweep->values},
                        {"lower_bound", cfg.sweep->lower_bound}};
    }
    return doc.dump(2);
}

std::vector<std::string> preset_names() { return {"fig3", "fig4", "fig5", "fig6", "fig7"}; }

RunConfig preset(std::string_view name) {
    RunConfig cfg;
    cfg.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    if (name == "fig3") {
        cfg.sweep = SweepConfig{SweepParameter::V, {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0}};
    } else if (name == "fig4") {
        cfg.sweep = SweepConfig{SweepParameter::alpha, {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}};
    } else if (name == "fig5") {
        cfg.sweep = SweepConfig{SweepParameter::r, {0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5}};
    } else if (name == "fig6") {
        cfg.params.loads.l_b_min = 20.0;
        cfg.params.loads.l_b_max = 40.0;
        cfg.params.loads.l_f_min = 20.0;
        cfg.params.loads.l_f_max = 40.0;
        cfg.sweep = SweepConfig{SweepParameter::r, {0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5}};
    } else if (name == "fig7") {
        cfg.policies = {Policy::proposed};
        cfg.seeds.clear();
        cfg.seed = 7;
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "' (expected fig3..fig7)");
    }
    if (cfg.sweep) {
        cfg.sweep->lower_bound = cfg.sweep->parameter != SweepParameter::r;
    }
    return cfg;
}

void validate(const RunConfig& cfg) {
    validate(cfg.params);
    if (cfg.policies.empty()) {
        throw ConfigError("policies: at least one policy is required");
    }
    if (cfg.slots == 0) {
        throw ConfigError("slots: must be positive");
    }
    if (!cfg.sweep) {
        return;
    }
    if (cfg.sweep->values.empty()) {
        throw ConfigError("sweep.values: at least one value is required");
    }
    for (double v : cfg.sweep->values) {
        const std::string where = "sweep.values: " + std::string(to_string(cfg.sweep->parameter)) + "=";
        if (!std::isfinite(v)) {
            throw ConfigError(where + "non-finite value");
        }
        switch (cfg.sweep->parameter) {
        case SweepParameter::V:
            if (!(v > 0.0)) {
                throw ConfigError(where + std::to_string(v) + " must be positive");
            }
            break;
        case SweepParameter::alpha:
        case SweepParameter::r:
            if (v < 0.0 || v > 1.0) {
                throw ConfigError(where + std::to_string(v) + " must lie in [0, 1]");
            }
            break;
        }
        // Every swept point must itself be a valid parameter set.
        validate(with_parameter(cfg.params, cfg.sweep->parameter, v));
    }
}

} // namespace pbal
