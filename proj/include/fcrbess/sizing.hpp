#pragma once

// Grid over rated energy and C-rate: each point is screened against the
// prequalification rules, then optimised over its lifetime and valued at
// several battery cost levels.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fcrbess/market.hpp"
#include "fcrbess/optimizer.hpp"
#include "fcrbess/parallel.hpp"

namespace fcrbess {

struct SweepSettings {
    std::vector<double> energies_mwh;
    std::vector<double> c_rates{0.6, 0.7, 1.0, 1.5};
    std::vector<double> cost_levels_eur_per_kwh{500.0, 400.0, 300.0};
    double c_cell_eur_per_kwh = 300.0;  // values degradation in the objective
    /// The SoC window must absorb a sustained deviation of this fraction of
    /// r (50 mHz is the largest that never triggers an emergency state) for
    /// screen_duration_s in each direction.
    double screen_power_frac = 0.25;
    double screen_duration_s = 1800.0;
    /// Skip the optimisation and report only the screening verdict.
    bool screen_only = false;
};

struct ScreenResult {
    bool feasible = true;
    std::string reason;
    PenaltyBounds bounds{};
    double window_energy_wh = 0.0;
    double required_window_wh = 0.0;
};

/// Data-independent feasibility: r <= 80% of P_max (which also guarantees
/// P_rech_max >= r/4), the Doppelhoeckertest passes, and the 30-minute SoC
/// window holds a drift of power_frac * r for duration_s in each direction.
inline ScreenResult screen_point(const BessConfig& bess, const MarketRules& rules, double power_frac = 0.25,
                                 double duration_s = 1800.0) {
    ScreenResult s;
    if (rules.r_w > 0.8 * bess.p_max_w * (1.0 + 1e-12)) {
        s.feasible = false;
        s.reason = "r exceeds 80% of rated power";
        return s;
    }
    const DegradationState fresh = DegradationState::fresh(bess.cell);
    try {
        const auto dht = doppelhoeckertest(bess, fresh, rules.r_w);
        s.bounds = {dht.soc_min_30min, dht.soc_max_30min};
        s.window_energy_wh = (dht.soc_max_30min - dht.soc_min_30min) * dht.discharged_energy_wh;
    } catch (const PrequalificationError& e) {
        s.feasible = false;
        s.reason = e.what();
        return s;
    }
    s.required_window_wh = 2.0 * power_frac * rules.r_w * duration_s / 3600.0;
    if (s.window_energy_wh < s.required_window_wh) {
        s.feasible = false;
        s.reason = "30-minute SoC window too narrow for a sustained 50 mHz deviation";
    }
    return s;
}

struct SweepPoint {
    double e_mwh = 0.0;
    double c_rate = 0.0;
    bool feasible = false;
    std::string reason;
    std::string termination;
    int k_max = 0;
    double lifetime_years = 0.0;
    double discounted_net_revenue = 0.0;
    std::vector<double> npv;  // per cost level, EUR
    std::vector<YearResult> years;
    std::string error;
};

/// Problem for one grid point, derived from the template `base`.
inline Problem point_problem(const Problem& base, double e_mwh, double c_rate, double c_cell_eur_per_kwh) {
    Problem pb = base;
    const BessConfig& b = base.bess;
    pb.bess = BessConfig::sized(e_mwh, c_rate, b.cell);
    pb.bess.ocv = b.ocv;
    pb.bess.inverter = b.inverter;
    pb.bess.cop = b.cop;
    pb.bess.t_ref_c = b.t_ref_c;
    pb.bess.hvac_limit_frac = b.hvac_limit_frac;
    pb.bess.hvac_gain_w_per_k = b.hvac_gain_w_per_k;
    pb.bess.dt_s = b.dt_s;
    pb.rules = base.rules;
    pb.rules.p_max_w = pb.bess.p_max_w;
    pb.rules.p_rech_max_w = pb.bess.p_max_w - pb.rules.r_w;
    pb.c_cell_eur = c_cell_eur_per_kwh * e_mwh * 1000.0;
    pb.opt.jobs = 1;
    return pb;
}

inline std::vector<SweepPoint> sizing_sweep(const Problem& base, const SamplePool& pool, const SweepSettings& s,
                                            std::uint64_t seed, int jobs = 1) {
    std::vector<SweepPoint> points;
    for (double c : s.c_rates)
        for (double e : s.energies_mwh) {
            SweepPoint p;
            p.e_mwh = e;
            p.c_rate = c;
            points.push_back(p);
        }
    parallel_for(points.size(), jobs, [&](std::size_t i) {
        SweepPoint& p = points[i];
        const Problem pb = point_problem(base, p.e_mwh, p.c_rate, s.c_cell_eur_per_kwh);
        const double kwh = p.e_mwh * 1000.0;
        const ScreenResult screen = screen_point(pb.bess, pb.rules, s.screen_power_frac, s.screen_duration_s);
        p.feasible = screen.feasible;
        p.reason = screen.reason;
        if (!p.feasible || s.screen_only) {
            // No revenue can be earned: the investment is lost.
            for (double level : s.cost_levels_eur_per_kwh) p.npv.push_back(p.feasible ? std::nan("") : -level * kwh);
            p.termination = p.feasible ? "screened" : "infeasible";
            return;
        }
        try {
            const LifetimeRun run = run_lifetime(pb, pool, seed);
            p.years = run.years;
            p.termination = to_string(run.termination);
            for (double level : s.cost_levels_eur_per_kwh) {
                const LifetimeResult lr = lifetime_revenue(run.years, pb, level * kwh);
                p.npv.push_back(lr.npv);
                p.k_max = lr.k_max;
                p.lifetime_years = lr.lifetime_years;
                p.discounted_net_revenue = lr.discounted_net_revenue;
            }
            if (p.k_max == 0) {
                p.feasible = false;
                p.reason = "no year met the chance constraint";
            }
        } catch (const std::exception& e) {
            // Record and continue with the other points.
            p.error = e.what();
            p.feasible = false;
            p.reason = "error";
            p.npv.assign(s.cost_levels_eur_per_kwh.size(), std::nan(""));
        }
    });
    return points;
}

inline std::string format_eur(double v) {
    if (!std::isfinite(v)) return "nan";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

/// Long format, one row per grid point.
inline void write_sweep_csv(std::ostream& os, const std::vector<SweepPoint>& points, const SweepSettings& s) {
    os << "e_mwh,c_rate,feasible,k_max,lifetime_years,discounted_net_revenue_eur";
    for (double level : s.cost_levels_eur_per_kwh) os << ",npv_eur_at_" << csv::format(level) << "_eur_per_kwh";
    os << ",termination,reason\n";
    for (const auto& p : points) {
        os << csv::format(p.e_mwh) << ',' << csv::format(p.c_rate) << ',' << (p.feasible ? 1 : 0) << ',' << p.k_max
           << ',' << csv::format(p.lifetime_years) << ',' << format_eur(p.discounted_net_revenue);
        for (double v : p.npv) os << ',' << format_eur(v);
        std::string reason = p.error.empty() ? p.reason : p.error;
        std::replace(reason.begin(), reason.end(), ',', ';');
        os << ',' << p.termination << ',' << reason << '\n';
    }
}

/// NPV in kEUR with C-rates as rows and energies as columns, one block per
/// cost level. The highest NPV of each block is marked with '*'.
inline void write_npv_table(std::ostream& os, const std::vector<SweepPoint>& points, const SweepSettings& s) {
    for (std::size_t l = 0; l < s.cost_levels_eur_per_kwh.size(); ++l) {
        const SweepPoint* best = nullptr;
        for (const auto& p : points)
            if (l < p.npv.size() && std::isfinite(p.npv[l]) && (!best || p.npv[l] > best->npv[l])) best = &p;
        os << "cost_eur_per_kwh=" << csv::format(s.cost_levels_eur_per_kwh[l]) << "\nc_rate";
        for (double e : s.energies_mwh) os << ',' << csv::format(e);
        os << '\n';
        for (double c : s.c_rates) {
            os << csv::format(c);
            for (double e : s.energies_mwh) {
                os << ',';
                for (const auto& p : points) {
                    if (p.c_rate == c && p.e_mwh == e && l < p.npv.size()) {
                        char buf[32];
                        std::snprintf(buf, sizeof(buf), "%.0f", p.npv[l] / 1000.0);
                        os << buf << (&p == best ? "*" : "");
                    }
                }
            }
            os << '\n';
        }
    }
}

}  // namespace fcrbess
