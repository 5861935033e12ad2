#pragma once

// FCR delivery, the discretised dead-band P recharge controller with 15-min
// blocks and 5-min lead, opportunistic overdelivery, and the 30-minute
// criterion penalty with emergency-state forgiveness.
//
// Power sign convention follows the BESS: positive consumes from the grid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fcrbess/errors.hpp"

namespace fcrbess {

/// Decision vector x = (K_p, SoC_0, o_d, db_p).
struct ControllerParams {
    double k_p = 2.0;
    double soc_0 = 0.5;
    double o_d = 0.0;
    double db_p = 0.2;

    void validate() const {
        if (!(k_p >= 0.0)) throw ConfigError("controller: k_p must be >= 0");
        if (!(soc_0 > 0.0 && soc_0 < 1.0)) throw ConfigError("controller: soc_0 must lie in (0, 1)");
        if (!(o_d >= 0.0 && o_d <= 0.2)) throw ConfigError("controller: o_d must lie in [0, 0.2]");
        if (!(db_p >= 0.0)) throw ConfigError("controller: db_p must be >= 0");
    }
};

struct MarketRules {
    double r_w = 1.0e6;
    double p_max_w = 1.6e6;  // BESS rating; scales the recharge law
    double delta_f_max_hz = 0.2;
    double deadband_hz = 0.01;
    double t_recharge_s = 900.0;
    double t_lead_s = 300.0;
    double rech_granularity_w = 1.0e5;
    double p_rech_max_w = 0.6e6;

    /// Rules with the largest recharge power the rating allows.
    static MarketRules for_bess(double r_w, double p_max_w) {
        MarketRules m;
        m.r_w = r_w;
        m.p_max_w = p_max_w;
        m.p_rech_max_w = p_max_w - r_w;
        return m;
    }

    void validate() const {
        if (!(r_w > 0.0)) throw ConfigError("market rules: r must be positive");
        if (r_w > 0.8 * p_max_w * (1.0 + 1e-12)) throw ConfigError("market rules: r must not exceed 80% of P_max");
        if (p_rech_max_w > p_max_w - r_w + 1e-6) throw ConfigError("market rules: p_rech_max exceeds P_max - r");
        if (p_rech_max_w < 0.25 * r_w - 1e-6) throw ConfigError("market rules: p_rech_max must be at least 0.25 r");
        if (!(delta_f_max_hz > 0.0 && deadband_hz >= 0.0)) throw ConfigError("market rules: bad frequency limits");
        if (!(rech_granularity_w > 0.0)) throw ConfigError("market rules: recharge granularity must be positive");
        if (!(t_recharge_s > 0.0 && t_lead_s >= 0.0 && t_lead_s < t_recharge_s))
            throw ConfigError("market rules: need 0 <= t_lead < t_recharge");
    }
};

struct PenaltyBounds {
    double soc_min = 0.0;
    double soc_max = 1.0;
};

/// r * df / df_max, saturated at +-r, zero inside the dead band.
inline double fcr_power(const MarketRules& rules, double delta_f) {
    if (std::abs(delta_f) <= rules.deadband_hz) return 0.0;
    return rules.r_w * std::clamp(delta_f / rules.delta_f_max_hz, -1.0, 1.0);
}

/// Dead-banded proportional recharge law. The dead band has total width
/// db_p centred on soc_0. The clipped value is truncated toward zero to a
/// multiple of the granularity.
inline double recharge_setpoint(const ControllerParams& params, const MarketRules& rules, double soc_at_t_set) {
    const double upper = params.soc_0 + params.db_p / 2.0;
    const double lower = params.soc_0 - params.db_p / 2.0;
    double raw = 0.0;
    if (soc_at_t_set > upper) raw = -params.k_p * (soc_at_t_set - upper) * rules.p_max_w;
    else if (soc_at_t_set < lower) raw = -params.k_p * (soc_at_t_set - lower) * rules.p_max_w;
    else return 0.0;
    raw = std::clamp(raw, -rules.p_rech_max_w, rules.p_rech_max_w);
    const double steps = raw / rules.rech_granularity_w;
    // Guard against 1.9999999 for values that are exact multiples on paper.
    const double n = std::trunc(steps + (steps > 0.0 ? 1e-9 : -1e-9));
    const double out = n * rules.rech_granularity_w;
    return std::abs(out) > rules.p_rech_max_w ? (n - (n > 0 ? 1 : -1)) * rules.rech_granularity_w : out;
}

/// o_d * r * df when that moves SoC toward soc_0, else 0. At SoC == soc_0
/// or df == 0 nothing is delivered.
inline double overdelivery_power(const ControllerParams& params, const MarketRules& rules, double delta_f,
                                 double soc) {
    const double fcr = fcr_power(rules, delta_f);
    if (params.o_d == 0.0 || fcr == 0.0) return 0.0;
    const double dev = soc - params.soc_0;
    if (dev == 0.0) return 0.0;
    // dev > 0 needs discharging (fcr < 0), dev < 0 needs charging.
    if ((dev > 0.0) != (fcr < 0.0)) return 0.0;
    return params.o_d * fcr;
}

struct GridPower {
    double p_fcr = 0.0;
    double p_rech = 0.0;
    double p_od = 0.0;
    double p_grid = 0.0;
};

/// p_grid = p_fcr + p_rech + p_od clipped to +-P_max. FCR has priority:
/// overdelivery is reduced first, then recharge.
inline GridPower grid_power(const ControllerParams& params, const MarketRules& rules, double delta_f, double soc,
                            double block_setpoint) {
    GridPower g;
    g.p_fcr = fcr_power(rules, delta_f);
    g.p_rech = block_setpoint;
    g.p_od = overdelivery_power(params, rules, delta_f, soc);
    const double limit = rules.p_max_w;
    double total = g.p_fcr + g.p_rech + g.p_od;
    if (std::abs(total) > limit) {
        const double excess = total > 0.0 ? total - limit : total + limit;  // same sign as total
        // Shrink only components pushing in the direction of the excess.
        auto shrink = [](double& part, double& need) {
            if (need == 0.0 || part == 0.0 || (part > 0.0) != (need > 0.0)) return;
            const double take = std::abs(part) < std::abs(need) ? part : need;
            part -= take;
            need -= take;
        };
        double need = excess;
        shrink(g.p_od, need);
        shrink(g.p_rech, need);
        total = g.p_fcr + g.p_rech + g.p_od;
        if (std::abs(total) > limit) total = std::clamp(total, -limit, limit);
    }
    g.p_grid = total;
    return g;
}

/// Schedules recharge blocks: the setpoint for block m is decided from the
/// SoC at m * t_recharge - t_lead and held for the whole block. Block 0
/// uses the SoC at the start.
class RechargeScheduler {
public:
    RechargeScheduler(const ControllerParams& params, const MarketRules& rules, double dt_s)
        : params_(params), rules_(rules) {
        const double block = rules.t_recharge_s / dt_s;
        const double lead = rules.t_lead_s / dt_s;
        block_steps_ = std::llround(block);
        lead_steps_ = std::llround(lead);
        if (std::abs(block - static_cast<double>(block_steps_)) > 1e-9 ||
            std::abs(lead - static_cast<double>(lead_steps_)) > 1e-9)
            throw ConfigError("scheduler: dt must divide the recharge period and the lead time");
    }

    /// Setpoint for step k given the SoC at the start of that step.
    double setpoint(std::int64_t k, double soc_now) {
        const std::int64_t phase = k % block_steps_;
        if (k == 0) current_ = recharge_setpoint(params_, rules_, soc_now);
        else if (phase == 0) current_ = lead_steps_ > 0 ? pending_ : recharge_setpoint(params_, rules_, soc_now);
        if (lead_steps_ > 0 && phase == block_steps_ - lead_steps_) pending_ = recharge_setpoint(params_, rules_, soc_now);
        return current_;
    }

    std::int64_t block_steps() const { return block_steps_; }

private:
    ControllerParams params_;
    MarketRules rules_;
    std::int64_t block_steps_ = 90;
    std::int64_t lead_steps_ = 30;
    double current_ = 0.0;
    double pending_ = 0.0;
};

/// Streaming emergency-state detector: |df| > 200 mHz, or > 100 mHz for
/// longer than 5 min, or > 50 mHz for longer than 15 min. Durations count
/// consecutive samples of length dt; at trace start only the available
/// prefix is considered.
class EmergencyDetector {
public:
    explicit EmergencyDetector(double dt_s) : dt_(dt_s) {}

    bool update(double delta_f) {
        const double a = std::abs(delta_f);
        run100_ = a > 0.1 ? run100_ + 1 : 0;
        run50_ = a > 0.05 ? run50_ + 1 : 0;
        return a > 0.2 || static_cast<double>(run100_) * dt_ > 300.0 || static_cast<double>(run50_) * dt_ > 900.0;
    }

    void reset() { run100_ = run50_ = 0; }

private:
    double dt_;
    std::int64_t run100_ = 0;
    std::int64_t run50_ = 0;
};

/// Emergency state at the last sample of `history`.
inline bool emergency_state(std::span<const double> history, double dt_s) {
    EmergencyDetector d(dt_s);
    bool state = false;
    for (double v : history) state = d.update(v);
    return state;
}

inline std::vector<std::uint8_t> emergency_trace(std::span<const double> delta_f, double dt_s) {
    EmergencyDetector d(dt_s);
    std::vector<std::uint8_t> out(delta_f.size());
    for (std::size_t i = 0; i < delta_f.size(); ++i) out[i] = d.update(delta_f[i]) ? 1 : 0;
    return out;
}

inline bool out_of_bounds(double soc, const PenaltyBounds& b) { return soc > b.soc_max || soc < b.soc_min; }

/// Fraction of all steps that are out of the 30-minute bounds outside an
/// emergency state.
inline double penalty_metric(std::span<const double> soc_trace, const PenaltyBounds& bounds,
                             std::span<const std::uint8_t> emergency) {
    if (soc_trace.size() != emergency.size()) throw DomainError("penalty_metric: traces differ in length");
    if (soc_trace.empty()) return 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < soc_trace.size(); ++t) {
        if (!emergency[t] && out_of_bounds(soc_trace[t], bounds)) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(soc_trace.size());
}

}  // namespace fcrbess
