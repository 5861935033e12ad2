#pragma once

// Run configuration: JSON (comments allowed). Unknown keys are rejected so
// typos fail fast, and every referenced file is loaded before any compute.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fcrbess/bess.hpp"
#include "fcrbess/degradation.hpp"
#include "fcrbess/fcr_controller.hpp"
#include "fcrbess/frequency_data.hpp"
#include "fcrbess/market.hpp"
#include "fcrbess/optimizer.hpp"
#include "fcrbess/sizing.hpp"

namespace fcrbess {

using Json = nlohmann::json;

struct RunConfig {
    std::uint64_t seed = 1;
    int jobs = 1;
    std::string out_dir = "out";

    // Frequency input: a CSV, or the synthetic generator when empty.
    std::string frequency_csv;
    FrequencyCsvOptions frequency_options;
    SynthParams synthetic;
    double synthetic_days = 30.0;

    Problem problem;
    double energy_mwh = 1.6;
    double c_rate = 1.0;
    ControllerParams controller{2.0, 0.45, 0.0, 0.2};
    int simulate_days = 1;
    double c_cell_eur_per_kwh = 300.0;
    SweepSettings sweep;

    std::string source_text;  // canonical dump, hashed into the manifest
};

namespace detail {

inline void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
void get_if(const Json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

// Resolved path of a referenced file, which must exist.
inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return p;
    const std::filesystem::path path(p);
    const std::string out = path.is_absolute() ? p : (base / path).lexically_normal().string();
    if (!std::filesystem::is_regular_file(out)) throw ConfigError("referenced file does not exist: " + out);
    return out;
}

inline std::vector<double> number_list(const Json& j, const std::string& where) {
    // Either a list or {"from", "to", "step"} (inclusive).
    if (j.is_array()) return j.get<std::vector<double>>();
    check_keys(j, where, {"from", "to", "step"});
    const double from = j.at("from").get<double>(), to = j.at("to").get<double>(), step = j.at("step").get<double>();
    if (!(step > 0.0) || to < from) throw ConfigError(where + ": need step > 0 and to >= from");
    std::vector<double> out;
    const auto n = static_cast<long>(std::floor((to - from) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(std::round((from + step * static_cast<double>(i)) * 1e9) / 1e9);
    return out;
}

}  // namespace detail

/// Parses a configuration. Relative paths are resolved against `base_dir`.
inline RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
    Json j;
    try {
        j = Json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    using detail::check_keys;
    using detail::get_if;
    check_keys(j, "config", {"seed", "jobs", "out", "data", "synthetic", "bess", "market_rules", "controller",
                             "scenario", "ageing", "optimizer", "economics", "sweep", "simulate"});
    RunConfig rc;
    rc.source_text = j.dump();
    get_if(j, "seed", rc.seed, "config");
    get_if(j, "jobs", rc.jobs, "config");
    get_if(j, "out", rc.out_dir, "config");

    std::string ocv_csv, inverter_csv, intraday_csv, imbalance_csv;
    if (j.contains("data")) {
        const Json& d = j["data"];
        check_keys(d, "data", {"frequency_csv", "frequency_value_column", "frequency_absolute", "dt_s", "ocv_csv",
                               "inverter_csv", "intraday_csv", "imbalance_csv"});
        get_if(d, "frequency_csv", rc.frequency_csv, "data");
        get_if(d, "frequency_value_column", rc.frequency_options.value_column, "data");
        if (d.contains("frequency_absolute")) rc.frequency_options.absolute = d["frequency_absolute"].get<bool>();
        get_if(d, "dt_s", rc.frequency_options.dt, "data");
        get_if(d, "ocv_csv", ocv_csv, "data");
        get_if(d, "inverter_csv", inverter_csv, "data");
        get_if(d, "intraday_csv", intraday_csv, "data");
        get_if(d, "imbalance_csv", imbalance_csv, "data");
    }
    if (j.contains("synthetic")) {
        const Json& s = j["synthetic"];
        check_keys(s, "synthetic", {"days", "sigma_hz", "tau_s", "excursions_per_day", "excursion_amplitude_hz",
                                    "excursion_duration_s"});
        get_if(s, "days", rc.synthetic_days, "synthetic");
        get_if(s, "sigma_hz", rc.synthetic.sigma_hz, "synthetic");
        get_if(s, "tau_s", rc.synthetic.tau_s, "synthetic");
        get_if(s, "excursions_per_day", rc.synthetic.excursions_per_day, "synthetic");
        get_if(s, "excursion_amplitude_hz", rc.synthetic.excursion_amplitude_hz, "synthetic");
        get_if(s, "excursion_duration_s", rc.synthetic.excursion_duration_s, "synthetic");
    }

    CellParams cell;
    BessConfig bess_template;
    std::optional<double> n_cells;
    if (j.contains("bess")) {
        const Json& b = j["bess"];
        check_keys(b, "bess", {"energy_mwh", "c_rate", "n_cells", "cop", "t_ref_c", "hvac_limit_frac",
                               "hvac_gain_w_per_k", "cell"});
        get_if(b, "energy_mwh", rc.energy_mwh, "bess");
        get_if(b, "c_rate", rc.c_rate, "bess");
        if (b.contains("n_cells")) n_cells = b["n_cells"].get<double>();
        get_if(b, "cop", bess_template.cop, "bess");
        get_if(b, "t_ref_c", bess_template.t_ref_c, "bess");
        get_if(b, "hvac_limit_frac", bess_template.hvac_limit_frac, "bess");
        get_if(b, "hvac_gain_w_per_k", bess_template.hvac_gain_w_per_k, "bess");
        if (b.contains("cell")) {
            const Json& c = b["cell"];
            check_keys(c, "bess.cell", {"capacity_ah", "r0_ohm", "r1_ohm", "c1_farad", "eta_coulomb", "v_nom",
                                        "v_cutoff_charge", "v_cutoff_discharge", "heat_capacity_j_per_k",
                                        "e_rated_wh"});
            get_if(c, "capacity_ah", cell.nominal_capacity_ah, "bess.cell");
            get_if(c, "r0_ohm", cell.r0_ohm, "bess.cell");
            get_if(c, "r1_ohm", cell.r1_ohm, "bess.cell");
            get_if(c, "c1_farad", cell.c1_farad, "bess.cell");
            get_if(c, "eta_coulomb", cell.eta_coulomb, "bess.cell");
            get_if(c, "v_nom", cell.v_nom, "bess.cell");
            get_if(c, "v_cutoff_charge", cell.v_cutoff_charge, "bess.cell");
            get_if(c, "v_cutoff_discharge", cell.v_cutoff_discharge, "bess.cell");
            get_if(c, "heat_capacity_j_per_k", cell.heat_capacity_j_per_k, "bess.cell");
            get_if(c, "e_rated_wh", cell.e_rated_wh, "bess.cell");
        }
    }
    cell.validate();
    BessConfig bess = BessConfig::sized(rc.energy_mwh, rc.c_rate, cell);
    if (n_cells) bess.n_cells = *n_cells;
    bess.cop = bess_template.cop;
    bess.t_ref_c = bess_template.t_ref_c;
    bess.hvac_limit_frac = bess_template.hvac_limit_frac;
    bess.hvac_gain_w_per_k = bess_template.hvac_gain_w_per_k;
    bess.dt_s = rc.frequency_options.dt;
    const std::filesystem::path& base = base_dir;
    if (!ocv_csv.empty()) bess.ocv = OcvCurve::load_csv(detail::resolve(base, ocv_csv));
    if (!inverter_csv.empty()) bess.inverter = InverterCurve::load_csv(detail::resolve(base, inverter_csv));
    bess.validate();

    double r_mw = 1.0;
    std::optional<double> p_rech_max_mw;
    MarketRules rules;
    if (j.contains("market_rules")) {
        const Json& m = j["market_rules"];
        check_keys(m, "market_rules", {"r_mw", "p_rech_max_mw", "delta_f_max_hz", "deadband_hz", "t_recharge_s",
                                       "t_lead_s", "rech_granularity_kw"});
        get_if(m, "r_mw", r_mw, "market_rules");
        if (m.contains("p_rech_max_mw")) p_rech_max_mw = m["p_rech_max_mw"].get<double>();
        get_if(m, "delta_f_max_hz", rules.delta_f_max_hz, "market_rules");
        get_if(m, "deadband_hz", rules.deadband_hz, "market_rules");
        get_if(m, "t_recharge_s", rules.t_recharge_s, "market_rules");
        get_if(m, "t_lead_s", rules.t_lead_s, "market_rules");
        double gran_kw = rules.rech_granularity_w / 1e3;
        get_if(m, "rech_granularity_kw", gran_kw, "market_rules");
        rules.rech_granularity_w = gran_kw * 1e3;
    }
    rules.r_w = r_mw * 1e6;
    rules.p_max_w = bess.p_max_w;
    rules.p_rech_max_w = p_rech_max_mw ? *p_rech_max_mw * 1e6 : bess.p_max_w - rules.r_w;

    if (j.contains("controller")) {
        const Json& c = j["controller"];
        check_keys(c, "controller", {"k_p", "soc_0", "o_d", "db_p"});
        get_if(c, "k_p", rc.controller.k_p, "controller");
        get_if(c, "soc_0", rc.controller.soc_0, "controller");
        get_if(c, "o_d", rc.controller.o_d, "controller");
        get_if(c, "db_p", rc.controller.db_p, "controller");
    }
    rc.controller.validate();

    MarketScenario scenario = price_scenario("moderate");
    if (j.contains("scenario")) {
        const Json& s = j["scenario"];
        check_keys(s, "scenario", {"name", "start_year", "fcr_price_eur_per_mw_week", "intraday_eur_per_mwh",
                                   "imbalance_eur_per_mwh", "concession_ct_per_kwh", "inflation", "discount_rate"});
        std::string name = "moderate";
        int start_year = 2018;
        get_if(s, "name", name, "scenario");
        get_if(s, "start_year", start_year, "scenario");
        if (s.contains("fcr_price_eur_per_mw_week")) {
            scenario.name = name;
            scenario.start_year = start_year;
            scenario.fcr_price_eur_per_mw_week = s["fcr_price_eur_per_mw_week"].get<std::vector<double>>();
        } else {
            scenario = price_scenario(name, start_year);
        }
        if (s.contains("intraday_eur_per_mwh")) scenario.intraday = PriceSeries::constant(s["intraday_eur_per_mwh"].get<double>());
        if (s.contains("imbalance_eur_per_mwh"))
            scenario.imbalance = PriceSeries::constant(s["imbalance_eur_per_mwh"].get<double>());
        if (s.contains("concession_ct_per_kwh")) {
            const double c = s["concession_ct_per_kwh"].get<double>();
            if (c < 0.11 || c > 2.39) throw ConfigError("scenario.concession_ct_per_kwh: outside 0.11 to 2.39");
            scenario.levies = german_levies(c);
        }
        get_if(s, "inflation", scenario.inflation, "scenario");
        get_if(s, "discount_rate", scenario.discount_rate, "scenario");
    }
    if (!intraday_csv.empty()) scenario.intraday = load_price_csv(detail::resolve(base, intraday_csv));
    if (!imbalance_csv.empty()) scenario.imbalance = load_price_csv(detail::resolve(base, imbalance_csv));

    AgeingModelSpec ageing;
    if (j.contains("ageing")) {
        const Json& a = j["ageing"];
        check_keys(a, "ageing", {"alpha_cap", "alpha_res", "beta_cap", "beta_res"});
        auto calendar = [&](const char* key, AgeingModelSpec::Calendar& c) {
            if (!a.contains(key)) return;
            const Json& x = a[key];
            check_keys(x, std::string("ageing.") + key, {"soc_poly", "activation_temperature_k", "reference_temperature_c"});
            get_if(x, "soc_poly", c.soc_poly, key);
            get_if(x, "activation_temperature_k", c.activation_temperature_k, key);
            get_if(x, "reference_temperature_c", c.reference_temperature_c, key);
        };
        auto cycle = [&](const char* key, AgeingModelSpec::Cycle& c) {
            if (!a.contains(key)) return;
            const Json& x = a[key];
            check_keys(x, std::string("ageing.") + key, {"soc_poly", "dod_poly"});
            get_if(x, "soc_poly", c.soc_poly, key);
            get_if(x, "dod_poly", c.dod_poly, key);
        };
        calendar("alpha_cap", ageing.alpha_cap);
        calendar("alpha_res", ageing.alpha_res);
        cycle("beta_cap", ageing.beta_cap);
        cycle("beta_res", ageing.beta_res);
    }

    OptimizerConfig opt;
    if (j.contains("optimizer")) {
        const Json& o = j["optimizer"];
        check_keys(o, "optimizer", {"eps_req", "beta_conf", "n_c", "n_c_prime", "n_D", "n_Y", "n_check_init",
                                    "population_size", "mutation", "crossover", "stop_std_frac", "max_iterations",
                                    "c_p", "check_on_convergence", "box", "x_init", "max_years"});
        get_if(o, "eps_req", opt.eps_req, "optimizer");
        get_if(o, "beta_conf", opt.beta_conf, "optimizer");
        get_if(o, "n_c", opt.n_c, "optimizer");
        get_if(o, "n_c_prime", opt.n_c_prime, "optimizer");
        get_if(o, "n_D", opt.n_D, "optimizer");
        get_if(o, "n_Y", opt.n_Y, "optimizer");
        get_if(o, "n_check_init", opt.n_check_init, "optimizer");
        get_if(o, "population_size", opt.population_size, "optimizer");
        get_if(o, "mutation", opt.de.mutation, "optimizer");
        get_if(o, "crossover", opt.de.crossover, "optimizer");
        get_if(o, "stop_std_frac", opt.stop_std_frac, "optimizer");
        get_if(o, "max_iterations", opt.max_iterations, "optimizer");
        get_if(o, "c_p", opt.c_p, "optimizer");
        get_if(o, "check_on_convergence", opt.check_on_convergence, "optimizer");
        get_if(o, "max_years", opt.max_years, "optimizer");
        if (o.contains("box")) {
            const Json& b = o["box"];
            check_keys(b, "optimizer.box", {"k_p", "soc_0", "o_d", "db_p"});
            const char* names[] = {"k_p", "soc_0", "o_d", "db_p"};
            for (int i = 0; i < 4; ++i) {
                if (!b.contains(names[i])) continue;
                const auto lim = b[names[i]].get<std::vector<double>>();
                if (lim.size() != 2) throw ConfigError(std::string("optimizer.box.") + names[i] + ": need [lower, upper]");
                opt.box.lower[static_cast<std::size_t>(i)] = lim[0];
                opt.box.upper[static_cast<std::size_t>(i)] = lim[1];
            }
        }
        if (o.contains("x_init")) {
            const Json& x = o["x_init"];
            check_keys(x, "optimizer.x_init", {"k_p", "soc_0", "o_d", "db_p"});
            ControllerParams p = rc.controller;
            get_if(x, "k_p", p.k_p, "x_init");
            get_if(x, "soc_0", p.soc_0, "x_init");
            get_if(x, "o_d", p.o_d, "x_init");
            get_if(x, "db_p", p.db_p, "x_init");
            p.validate();
            opt.x_init = p;
        }
    }
    opt.jobs = rc.jobs;
    opt.validate();

    if (j.contains("economics")) {
        const Json& e = j["economics"];
        check_keys(e, "economics", {"c_cell_eur_per_kwh", "cost_levels_eur_per_kwh"});
        get_if(e, "c_cell_eur_per_kwh", rc.c_cell_eur_per_kwh, "economics");
        get_if(e, "cost_levels_eur_per_kwh", rc.sweep.cost_levels_eur_per_kwh, "economics");
    }
    rc.sweep.c_cell_eur_per_kwh = rc.c_cell_eur_per_kwh;
    rc.sweep.energies_mwh = detail::number_list(Json{{"from", 1.0}, {"to", 2.5}, {"step", 0.1}}, "sweep");
    if (j.contains("sweep")) {
        const Json& s = j["sweep"];
        check_keys(s, "sweep", {"energies_mwh", "c_rates", "screen_power_frac", "screen_duration_s", "screen_only"});
        if (s.contains("energies_mwh")) rc.sweep.energies_mwh = detail::number_list(s["energies_mwh"], "sweep.energies_mwh");
        if (s.contains("c_rates")) rc.sweep.c_rates = detail::number_list(s["c_rates"], "sweep.c_rates");
        get_if(s, "screen_power_frac", rc.sweep.screen_power_frac, "sweep");
        get_if(s, "screen_duration_s", rc.sweep.screen_duration_s, "sweep");
        get_if(s, "screen_only", rc.sweep.screen_only, "sweep");
    }
    if (j.contains("simulate")) {
        const Json& s = j["simulate"];
        check_keys(s, "simulate", {"days"});
        get_if(s, "days", rc.simulate_days, "simulate");
    }

    rc.problem.bess = bess;
    rc.problem.rules = rules;
    rc.problem.scenario = scenario;
    rc.problem.ageing = ageing.build();
    rc.problem.opt = opt;
    rc.problem.c_cell_eur = rc.c_cell_eur_per_kwh * rc.energy_mwh * 1000.0;
    if (!rc.frequency_csv.empty()) rc.frequency_csv = detail::resolve(base, rc.frequency_csv);
    if (rc.jobs < 1) throw ConfigError("config: jobs must be >= 1");
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), std::filesystem::path(path).parent_path());
}

/// Frequency data named by the config: the CSV if given, otherwise the
/// synthetic generator seeded from the master seed.
inline FrequencyTrace load_frequency(const RunConfig& rc) {
    if (!rc.frequency_csv.empty()) return load_frequency_csv(rc.frequency_csv, rc.frequency_options);
    return synth_frequency(rc.synthetic, rc.synthetic_days * kDaySeconds, rc.frequency_options.dt,
                           Rng::splitmix(rc.seed ^ 0x5eedf00dULL));
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace fcrbess
