#pragma once

// Battery energy storage system built from n_cells identical cells (one
// average cell is simulated and scaled), a DC/AC inverter with a
// power-dependent efficiency, and an HVAC loop holding the cells near T_ref.
//
// Sign convention: p_grid > 0 consumes from the grid, p_bat > 0 charges the
// cells, cell current > 0 charges.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fcrbess/cell_model.hpp"
#include "fcrbess/csv.hpp"
#include "fcrbess/degradation.hpp"
#include "fcrbess/errors.hpp"

namespace fcrbess {

/// One-way inverter efficiency versus |P| / P_rated, piecewise linear,
/// held constant outside the tabulated range.
class InverterCurve {
public:
    struct Point {
        double p_frac;
        double efficiency;
    };

    InverterCurve() : InverterCurve(default_points()) {}

    explicit InverterCurve(std::vector<Point> points) : points_(std::move(points)) {
        if (points_.empty()) throw ConfigError("inverter curve is empty");
        for (std::size_t i = 0; i < points_.size(); ++i) {
            if (!(points_[i].efficiency > 0.0 && points_[i].efficiency <= 1.0))
                throw ConfigError("inverter efficiency must lie in (0, 1]");
            if (points_[i].p_frac < 0.0) throw ConfigError("inverter curve power fraction must be >= 0");
            if (i > 0 && !(points_[i].p_frac > points_[i - 1].p_frac))
                throw ConfigError("inverter curve power fractions must strictly increase");
        }
    }

    static InverterCurve ideal() { return InverterCurve({{0.0, 1.0}}); }

    /// Shape of a 60 kW-class three-phase string inverter: poor below 5 %
    /// load, flat near 98 % above 20 %.
    static std::vector<Point> default_points() {
        return {{0.005, 0.70}, {0.01, 0.80}, {0.02, 0.88}, {0.05, 0.95}, {0.10, 0.97},
                {0.20, 0.980}, {0.50, 0.984}, {0.75, 0.983}, {1.00, 0.981}};
    }

    static InverterCurve load_csv(const std::string& path) {
        const auto table = csv::read_file(path);
        if (table.header.size() != 2) throw DataError(path + ": inverter curve needs two columns (p_frac, efficiency)");
        std::vector<Point> pts;
        for (const auto& row : table.rows) {
            const std::string where = path + ":" + std::to_string(row.line);
            pts.push_back({csv::to_double(row.fields[0], where), csv::to_double(row.fields[1], where)});
        }
        try {
            return InverterCurve(std::move(pts));
        } catch (const ConfigError& e) {
            throw DataError(path + ": " + e.what());
        }
    }

    double efficiency(double p_frac) const {
        p_frac = std::abs(p_frac);
        if (p_frac <= points_.front().p_frac) return points_.front().efficiency;
        if (p_frac >= points_.back().p_frac) return points_.back().efficiency;
        auto it = std::upper_bound(points_.begin(), points_.end(), p_frac,
                                   [](double v, const Point& p) { return v < p.p_frac; });
        const Point& hi = *it;
        const Point& lo = *(it - 1);
        const double w = (p_frac - lo.p_frac) / (hi.p_frac - lo.p_frac);
        return lo.efficiency + w * (hi.efficiency - lo.efficiency);
    }

    std::span<const Point> points() const { return points_; }

private:
    std::vector<Point> points_;
};

struct BessConfig {
    CellParams cell = CellParams::sanyo_ur18650e();
    OcvCurve ocv = OcvCurve::default_nmc();
    InverterCurve inverter;
    double e_rated_wh = 1.6e6;
    double p_max_w = 1.6e6;
    double n_cells = 216802;
    double cop = 2.5;
    double t_ref_c = 25.0;
    double hvac_limit_frac = 0.02;
    /// Proportional HVAC gain in W per K; 0 selects full power at 1 K above T_ref.
    double hvac_gain_w_per_k = 0.0;
    double dt_s = 10.0;

    /// n_cells = round(E / E_cell), P_max = C-rate x E.
    static BessConfig sized(double e_rated_mwh, double c_rate, const CellParams& cell = CellParams::sanyo_ur18650e()) {
        BessConfig c;
        c.cell = cell;
        c.e_rated_wh = e_rated_mwh * 1e6;
        c.p_max_w = c_rate * c.e_rated_wh;
        c.n_cells = std::round(c.e_rated_wh / cell.e_rated_wh);
        return c;
    }

    double hvac_limit_w() const { return hvac_limit_frac * p_max_w; }
    double hvac_gain() const { return hvac_gain_w_per_k > 0.0 ? hvac_gain_w_per_k : hvac_limit_w() / 1.0; }

    void validate() const {
        cell.validate();
        if (!(n_cells >= 1.0)) throw ConfigError("bess: n_cells must be >= 1");
        if (!(p_max_w > 0.0 && e_rated_wh > 0.0)) throw ConfigError("bess: rated power and energy must be positive");
        if (!(cop > 0.0)) throw ConfigError("bess: COP must be positive");
        if (!(hvac_limit_frac >= 0.0)) throw ConfigError("bess: HVAC limit must be >= 0");
        if (!(dt_s > 0.0)) throw ConfigError("bess: dt must be positive");
    }
};

struct BessState {
    CellState cell;
    double accumulated_losses_wh = 0.0;  // grid energy in minus grid energy out
};

struct HvacStep {
    double temperature_c;
    double p_hvac_w;
};

/// HVAC power from the current temperature (proportional cooling, clipped
/// to the limit), then the thermal balance over one step.
inline double hvac_power(const BessConfig& config, double temperature_c) {
    return std::clamp(config.hvac_gain() * (temperature_c - config.t_ref_c), 0.0, config.hvac_limit_w());
}

inline HvacStep step_hvac(const BessConfig& config, double temperature_c, double i_cell,
                          const DegradationState& degr) {
    const double p_hvac = hvac_power(config, temperature_c);
    const double joule = (degr.r0_ohm + degr.r1_ohm) * i_cell * i_cell * config.n_cells;
    const double next =
        temperature_c + (joule - config.cop * p_hvac) / (config.cell.heat_capacity_j_per_k * config.n_cells) * config.dt_s;
    return {next, p_hvac};
}

struct BessStep {
    BessState state;
    double i_cell = 0.0;
    double p_bat_w = 0.0;
    double p_grid_w = 0.0;  // power actually exchanged with the grid
    double p_hvac_w = 0.0;
    double v_bat = 0.0;
    bool clipped = false;  // voltage cut-off or capability limit engaged
};

/// Advances the BESS by one step at requested grid power. `cell` carries the
/// degraded capacity and resistances (see DegradationState::apply).
inline BessStep step_bess(const BessConfig& config, const CellParams& cell, const BessState& state, double p_grid) {
    const double dt = config.dt_s;
    const CellState& cs = state.cell;
    const double p_hvac = hvac_power(config, cs.temperature_c);
    const double eta = config.inverter.efficiency(p_grid / config.p_max_w);
    double p_bat = (p_grid > 0.0 ? eta * p_grid : p_grid / eta) - p_hvac;

    const double ocv = config.ocv.clamped(cs.soc);
    const double v_int = ocv + cs.v_c1;
    double p_cell = p_bat / config.n_cells;
    bool clipped = false;

    const double p_floor = max_discharge_power(cell.r0_ohm, v_int);
    if (p_cell < p_floor) {
        p_cell = p_floor;
        clipped = true;
    }
    double current = current_from_power(cell.r0_ohm, v_int, p_cell);

    // Cut-off voltages.
    const double v_bat = v_int + cell.r0_ohm * current;
    if (current > 0.0 && v_bat > cell.v_cutoff_charge) {
        current = cell.r0_ohm > 0.0 ? std::max(0.0, (cell.v_cutoff_charge - v_int) / cell.r0_ohm) : 0.0;
        clipped = true;
    } else if (current < 0.0 && v_bat < cell.v_cutoff_discharge) {
        current = cell.r0_ohm > 0.0 ? std::min(0.0, (cell.v_cutoff_discharge - v_int) / cell.r0_ohm) : 0.0;
        clipped = true;
    }
    // SoC limits: never count beyond empty or full.
    const double q = cell.capacity_as();
    const double i_full = (1.0 - cs.soc) * q / (cell.eta_coulomb * dt);
    const double i_empty = -cs.soc * q * cell.eta_coulomb / dt;
    if (current > i_full) {
        current = std::max(0.0, i_full);
        clipped = true;
    } else if (current < i_empty) {
        current = std::min(0.0, i_empty);
        clipped = true;
    }

    BessStep out;
    out.i_cell = current;
    out.clipped = clipped;
    out.p_hvac_w = p_hvac;
    if (clipped) {
        p_cell = (v_int + cell.r0_ohm * current) * current;
        p_bat = p_cell * config.n_cells;
        const double to_grid = p_bat + p_hvac;
        out.p_grid_w = to_grid > 0.0 ? to_grid / eta : to_grid * eta;
    } else {
        out.p_grid_w = p_grid;
    }
    out.p_bat_w = p_bat;
    out.v_bat = v_int + cell.r0_ohm * current;

    BessState next = state;
    const double joule = (cell.r0_ohm + cell.r1_ohm) * current * current * config.n_cells;
    next.cell.temperature_c = cs.temperature_c + (joule - config.cop * p_hvac) /
                                                     (config.cell.heat_capacity_j_per_k * config.n_cells) * dt;
    next.cell.v_c1 = step_rc_branch(cell, cs.v_c1, current, dt);
    next.cell.soc = step_soc(cell, cs.soc, current, dt).soc;
    next.accumulated_losses_wh = state.accumulated_losses_wh + out.p_grid_w * dt / 3600.0;
    out.state = next;
    return out;
}

// ---------------------------------------------------------------------------
// Characterisation

struct ConstantPowerPoint {
    double power_w;
    double energy_in_wh;
    double available_energy_wh;  // discharged at the grid side
    double round_trip_efficiency;
};

/// Charges from empty at constant grid power until the charge cut-off, then
/// discharges at the same power until the discharge cut-off.
inline std::vector<ConstantPowerPoint> characterize_constant_power(const BessConfig& config,
                                                                   const DegradationState& degr,
                                                                   std::span<const double> p_levels_w) {
    const CellParams cell = degr.apply(config.cell);
    std::vector<ConstantPowerPoint> out;
    for (double p : p_levels_w) {
        if (!(p > 0.0 && p <= config.p_max_w)) throw DomainError("characterize_constant_power: power outside (0, P_max]");
        BessState state;
        state.cell = {0.0, 0.0, config.t_ref_c};
        // Generous guard: 20x the ideal duration at this power.
        const auto max_steps = static_cast<long>(20.0 * config.e_rated_wh * 3600.0 / (p * config.dt_s)) + 1000;
        double e_in = 0.0;
        for (long k = 0; k < max_steps; ++k) {
            const BessStep s = step_bess(config, cell, state, p);
            e_in += s.p_grid_w * config.dt_s / 3600.0;
            state = s.state;
            if (s.clipped) break;
        }
        double e_out = 0.0;
        for (long k = 0; k < max_steps; ++k) {
            const BessStep s = step_bess(config, cell, state, -p);
            e_out -= s.p_grid_w * config.dt_s / 3600.0;
            state = s.state;
            if (s.clipped) break;
        }
        out.push_back({p, e_in, e_out, e_in > 0.0 ? e_out / e_in : 0.0});
    }
    return out;
}

struct DoppelhoeckerResult {
    double soc_min_30min;
    double soc_max_30min;
    double discharged_energy_wh;  // E_test, grid side
    double charged_energy_wh;     // symmetric charging run
};

namespace detail {

struct EnergyMark {
    double soc;
    double cum_wh;
};

// SoC at which the cumulative energy reaches `target`, linear between marks.
inline double soc_at_energy(std::span<const EnergyMark> marks, double target) {
    for (std::size_t j = 1; j < marks.size(); ++j) {
        if (marks[j].cum_wh >= target) {
            const double span = marks[j].cum_wh - marks[j - 1].cum_wh;
            const double w = span > 0.0 ? (target - marks[j - 1].cum_wh) / span : 1.0;
            return marks[j - 1].soc + w * (marks[j].soc - marks[j - 1].soc);
        }
    }
    return marks.back().soc;
}

}  // namespace detail

/// Prequalification profile: from full, two times 15 min discharge at r with
/// 15 min rest, then discharge at r until empty. The 30-minute SoC bounds are
/// where the remaining dischargeable (chargeable) energy at power r equals
/// r x 0.5 h; the charging side is measured by charging at r from the
/// emptied state until the charge cut-off.
inline DoppelhoeckerResult doppelhoeckertest(const BessConfig& config, const DegradationState& degr, double r_w) {
    if (!(r_w > 0.0)) throw DomainError("doppelhoeckertest: r must be positive");
    if (r_w > 0.8 * config.p_max_w + 1e-9)
        throw PrequalificationError("doppelhoeckertest: r exceeds 80% of the rated power");
    const double block = 900.0;
    const long block_steps = std::lround(block / config.dt_s);
    if (std::abs(block_steps * config.dt_s - block) > 1e-9)
        throw ConfigError("doppelhoeckertest: dt must divide 900 s");

    const CellParams cell = degr.apply(config.cell);
    BessState state;
    state.cell = {1.0, 0.0, config.t_ref_c};
    const double dt_h = config.dt_s / 3600.0;
    const auto guard = static_cast<long>(50.0 * config.e_rated_wh / (r_w * dt_h)) + 1000;

    std::vector<detail::EnergyMark> discharge{{state.cell.soc, 0.0}};
    double e_out = 0.0;
    auto discharge_step = [&]() {
        const BessStep s = step_bess(config, cell, state, -r_w);
        e_out -= s.p_grid_w * dt_h;
        state = s.state;
        discharge.push_back({state.cell.soc, e_out});
        return s.clipped;
    };
    auto rest = [&]() {
        for (long k = 0; k < block_steps; ++k) state = step_bess(config, cell, state, 0.0).state;
        // Self-discharge through the HVAC during rest shows up as SoC drift;
        // keep the mark sequence consistent.
        discharge.push_back({state.cell.soc, e_out});
    };
    for (int hump = 0; hump < 2; ++hump) {
        for (long k = 0; k < block_steps; ++k) {
            if (discharge_step())
                throw PrequalificationError("doppelhoeckertest: cannot sustain " + std::to_string(r_w / 1e6) +
                                            " MW for the 15-min discharge periods");
        }
        rest();
    }
    for (long k = 0; k < guard; ++k) {
        if (discharge_step()) break;
    }

    std::vector<detail::EnergyMark> charge{{state.cell.soc, 0.0}};
    double e_in = 0.0;
    for (long k = 0; k < guard; ++k) {
        const BessStep s = step_bess(config, cell, state, r_w);
        e_in += s.p_grid_w * dt_h;
        state = s.state;
        charge.push_back({state.cell.soc, e_in});
        if (s.clipped) break;
    }

    const double reserve = 0.5 * r_w;  // Wh for 30 min at r
    if (e_out < reserve || e_in < reserve)
        throw PrequalificationError("doppelhoeckertest: usable energy below the 30-minute reserve");
    const double soc_min = detail::soc_at_energy(discharge, e_out - reserve);
    const double soc_max = detail::soc_at_energy(charge, e_in - reserve);
    if (!(soc_min >= 0.0 && soc_min < soc_max && soc_max <= 1.0))
        throw PrequalificationError("doppelhoeckertest: empty 30-minute SoC window");
    return {soc_min, soc_max, e_out, e_in};
}

}  // namespace fcrbess
