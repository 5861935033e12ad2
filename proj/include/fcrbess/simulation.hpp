#pragma once

// Closed-loop simulation of a BESS delivering FCR: controller, block
// scheduler, emergency detection and the BESS dynamics over one or more
// frequency segments run back to back.

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "fcrbess/bess.hpp"
#include "fcrbess/csv.hpp"
#include "fcrbess/fcr_controller.hpp"
#include "fcrbess/frequency_data.hpp"

namespace fcrbess {

struct TraceRow {
    double t;
    double delta_f;
    double p_grid;
    double p_rech;
    double p_od;
    double p_hvac;
    double i_cell;
    double v_bat;
    double soc;
    double temperature;
};

/// Grid energy of one settlement period.
struct BlockEnergy {
    std::int64_t start = 0;  // epoch seconds
    double recharge_wh = 0.0;
    double residual_wh = 0.0;  // (p_grid - p_rech) dt
    double consumed_wh = 0.0;  // max(p_grid, 0) dt
    double injected_wh = 0.0;  // max(-p_grid, 0) dt
};

struct SimOptions {
    bool record_soc = true;
    bool record_blocks = true;
    bool record_trace = false;
    PenaltyBounds bounds{};
    double settlement_s = 900.0;
};

struct SimResult {
    std::vector<double> soc;  // SoC at the start of every step, plus the final value
    std::vector<BlockEnergy> blocks;
    std::vector<TraceRow> trace;
    std::size_t n_steps = 0;
    std::size_t penalty_steps = 0;
    std::size_t emergency_steps = 0;
    std::size_t clipped_steps = 0;
    double grid_in_wh = 0.0;
    double grid_out_wh = 0.0;
    BessState final_state;

    double penalty() const { return n_steps == 0 ? 0.0 : static_cast<double>(penalty_steps) / static_cast<double>(n_steps); }
    double losses_wh() const { return grid_in_wh - grid_out_wh; }
};

inline BessState initial_state(const BessConfig& config, double soc) {
    BessState s;
    s.cell = {soc, 0.0, config.t_ref_c};
    return s;
}

/// Simulates the segments back to back from `start`. `cell` carries the
/// degraded parameters. Emergency detection restarts at each segment since
/// segments need not be contiguous in time.
inline SimResult simulate(const BessConfig& config, const CellParams& cell, const ControllerParams& params,
                          const MarketRules& rules, std::span<const FrequencySample> segments, const SimOptions& opt,
                          const BessState& start) {
    const double dt = config.dt_s;
    RechargeScheduler scheduler(params, rules, dt);
    const auto settle_steps = std::max<std::int64_t>(1, std::llround(opt.settlement_s / dt));
    SimResult res;
    std::size_t total = 0;
    for (const auto& seg : segments) {
        if (std::abs(seg.dt - dt) > 1e-12) throw ConfigError("simulate: frequency step differs from BESS step");
        total += seg.values.size();
    }
    if (opt.record_soc) res.soc.reserve(total + 1);
    if (opt.record_trace) res.trace.reserve(total);
    if (opt.record_blocks) res.blocks.reserve(static_cast<std::size_t>(total / static_cast<std::size_t>(settle_steps)) + 2);

    BessState state = start;
    std::int64_t k = 0;
    for (const auto& seg : segments) {
        EmergencyDetector emergency(dt);
        for (std::size_t j = 0; j < seg.values.size(); ++j, ++k) {
            const double df = seg.values[j];
            const double soc = state.cell.soc;
            const bool emerg = emergency.update(df);
            if (opt.record_soc) res.soc.push_back(soc);
            if (emerg) ++res.emergency_steps;
            else if (out_of_bounds(soc, opt.bounds)) ++res.penalty_steps;

            const double setpoint = scheduler.setpoint(k, soc);
            const GridPower g = grid_power(params, rules, df, soc, setpoint);
            const BessStep step = step_bess(config, cell, state, g.p_grid);
            if (step.clipped) ++res.clipped_steps;
            const double e = step.p_grid_w * dt / 3600.0;
            if (e > 0.0) res.grid_in_wh += e;
            else res.grid_out_wh -= e;
            if (opt.record_blocks) {
                if (k % settle_steps == 0) res.blocks.push_back({seg.timestamp(static_cast<double>(j) * dt), 0, 0, 0, 0});
                BlockEnergy& b = res.blocks.back();
                const double rech_e = g.p_rech * dt / 3600.0;
                b.recharge_wh += rech_e;
                b.residual_wh += e - rech_e;
                if (e > 0.0) b.consumed_wh += e;
                else b.injected_wh -= e;
            }
            if (opt.record_trace) {
                res.trace.push_back({static_cast<double>(k) * dt, df, step.p_grid_w, g.p_rech, g.p_od, step.p_hvac_w,
                                     step.i_cell, step.v_bat, soc, state.cell.temperature_c});
            }
            state = step.state;
        }
    }
    if (opt.record_soc) res.soc.push_back(state.cell.soc);
    res.n_steps = static_cast<std::size_t>(k);
    res.final_state = state;
    return res;
}

inline SimResult simulate(const BessConfig& config, const CellParams& cell, const ControllerParams& params,
                          const MarketRules& rules, std::span<const FrequencySample> segments,
                          const SimOptions& opt = {}) {
    return simulate(config, cell, params, rules, segments, opt, initial_state(config, params.soc_0));
}

/// Penalty fraction of one day sample started at soc_0.
inline double sample_penalty(const BessConfig& config, const CellParams& cell, const ControllerParams& params,
                             const MarketRules& rules, const FrequencySample& sample, const PenaltyBounds& bounds) {
    SimOptions opt;
    opt.record_soc = false;
    opt.record_blocks = false;
    opt.bounds = bounds;
    return simulate(config, cell, params, rules, std::span<const FrequencySample>(&sample, 1), opt).penalty();
}

inline void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows) {
    os << "t,delta_f,p_grid,p_rech,p_od,p_hvac,i_cell,v_bat,soc,temperature\n";
    for (const auto& r : rows) {
        os << csv::format(r.t) << ',' << csv::format(r.delta_f) << ',' << csv::format(r.p_grid) << ','
           << csv::format(r.p_rech) << ',' << csv::format(r.p_od) << ',' << csv::format(r.p_hvac) << ','
           << csv::format(r.i_cell) << ',' << csv::format(r.v_bat) << ',' << csv::format(r.soc) << ','
           << csv::format(r.temperature) << '\n';
    }
}

}  // namespace fcrbess
