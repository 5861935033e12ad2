#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fcrbess/bess.hpp"
#include "fcrbess/rng.hpp"

using namespace fcrbess;

namespace {

// Ideal system: flat 3.6 V OCV, no resistance, no inverter or coulombic
// loss, no HVAC.
BessConfig lossless(double e_wh, double p_max_w) {
    BessConfig c;
    c.cell.r0_ohm = 0.0;
    c.cell.r1_ohm = 0.0;
    c.cell.eta_coulomb = 1.0;
    c.ocv = OcvCurve::linear(3.6, 3.6);
    c.inverter = InverterCurve::ideal();
    c.n_cells = e_wh / (c.cell.nominal_capacity_ah * 3.6);
    c.e_rated_wh = e_wh;
    c.p_max_w = p_max_w;
    c.hvac_limit_frac = 0.0;
    return c;
}

BessConfig reference_100_cells() {
    BessConfig c;
    c.n_cells = 100;
    c.e_rated_wh = 100 * c.cell.e_rated_wh;
    c.p_max_w = 2100.0;
    c.hvac_limit_frac = 42.0 / 2100.0;
    return c;
}

}  // namespace

TEST(Inverter, DefaultShape) {
    const InverterCurve inv;
    EXPECT_NEAR(inv.efficiency(0.01), 0.80, 1e-12);
    EXPECT_NEAR(inv.efficiency(0.05), 0.95, 1e-12);
    EXPECT_NEAR(inv.efficiency(0.2), 0.98, 1e-12);
    EXPECT_NEAR(inv.efficiency(-0.2), 0.98, 1e-12);
    EXPECT_GE(inv.efficiency(0.6), 0.98);
    const auto f = InverterCurve::load_csv(FCRBESS_SOURCE_DIR "/data/inverter_default.csv");
    for (double p : {0.003, 0.015, 0.3, 0.9, 1.0}) EXPECT_DOUBLE_EQ(f.efficiency(p), inv.efficiency(p));
}

TEST(Inverter, RejectsBadCurves) {
    EXPECT_THROW(InverterCurve({{0.1, 1.2}}), ConfigError);
    EXPECT_THROW(InverterCurve({{0.5, 0.9}, {0.2, 0.9}}), ConfigError);
}

TEST(Sizing, CellCountAndPower) {
    const auto c = BessConfig::sized(1.6, 1.0);
    EXPECT_EQ(c.n_cells, std::round(1.6e6 / 7.38));
    EXPECT_DOUBLE_EQ(c.p_max_w, 1.6e6);
    EXPECT_DOUBLE_EQ(BessConfig::sized(2.0, 0.6).p_max_w, 1.2e6);
}

TEST(Hvac, EquilibriumAtReference) {
    const auto c = BessConfig::sized(1.6, 1.0);
    const auto d = DegradationState::fresh(c.cell);
    const auto h = step_hvac(c, c.t_ref_c, 0.0, d);
    EXPECT_EQ(h.p_hvac_w, 0.0);
    EXPECT_EQ(h.temperature_c, c.t_ref_c);
}

TEST(Hvac, SteadyCurrentEquilibrium) {
    const auto c = BessConfig::sized(1.6, 1.0);
    const auto d = DegradationState::fresh(c.cell);
    const double i = 1.0;
    const double p_eq = (c.cell.r0_ohm + c.cell.r1_ohm) * i * i * c.n_cells / c.cop;
    ASSERT_LT(p_eq, c.hvac_limit_w());
    const double t = c.t_ref_c + p_eq / c.hvac_gain();
    const auto h = step_hvac(c, t, i, d);
    EXPECT_NEAR(h.p_hvac_w, p_eq, 1e-9 * p_eq);
    EXPECT_NEAR(h.temperature_c, t, 1e-12);
}

TEST(Hvac, ClipAndRemovableHeat) {
    const auto c = BessConfig::sized(1.6, 1.0);
    EXPECT_DOUBLE_EQ(c.hvac_limit_w(), 32000.0);
    EXPECT_DOUBLE_EQ(hvac_power(c, c.t_ref_c + 50.0), 32000.0);
    EXPECT_DOUBLE_EQ(c.cop * hvac_power(c, c.t_ref_c + 50.0), 80000.0);
    EXPECT_EQ(hvac_power(c, c.t_ref_c - 5.0), 0.0);
}

TEST(StepBess, IdleIsAFixedPoint) {
    const auto c = BessConfig::sized(1.6, 1.0);
    BessState s;
    s.cell = {0.5, 0.0, c.t_ref_c};
    const auto step = step_bess(c, c.cell, s, 0.0);
    EXPECT_EQ(step.state.cell.soc, 0.5);
    EXPECT_EQ(step.state.cell.v_c1, 0.0);
    EXPECT_EQ(step.state.cell.temperature_c, c.t_ref_c);
    EXPECT_EQ(step.i_cell, 0.0);
    EXPECT_FALSE(step.clipped);
}

TEST(StepBess, SignConventionAndRoundTripLoss) {
    const auto c = BessConfig::sized(1.6, 1.0);
    BessState s;
    s.cell = {0.5, 0.0, c.t_ref_c};
    const auto up = step_bess(c, c.cell, s, 1e5);
    EXPECT_GT(up.p_bat_w, 0.0);
    EXPECT_GT(up.i_cell, 0.0);
    EXPECT_GT(up.state.cell.soc, 0.5);
    const auto down = step_bess(c, c.cell, up.state, -1e5);
    EXPECT_LT(down.p_bat_w, 0.0);
    EXPECT_LT(down.state.cell.soc, 0.5);
}

TEST(StepBess, EnergyIdentityPerStep) {
    const auto c = BessConfig::sized(1.6, 1.0);
    Rng rng(4);
    for (int n = 0; n < 10000; ++n) {
        BessState s;
        s.cell = {rng.uniform(0.05, 0.95), rng.uniform(-0.02, 0.02), c.t_ref_c + rng.uniform(0.0, 3.0)};
        const double p = rng.uniform(-c.p_max_w, c.p_max_w);
        const auto step = step_bess(c, c.cell, s, p);
        const double v_int = c.ocv(s.cell.soc) + s.cell.v_c1;
        const double p_cell = (v_int + c.cell.r0_ohm * step.i_cell) * step.i_cell;
        EXPECT_NEAR(p_cell * c.n_cells, step.p_bat_w, 1e-9 * std::max(1.0, std::abs(step.p_bat_w)));
    }
}

TEST(StepBess, LosslessReducesToChargeCounting) {
    const auto c = lossless(1.0e6, 1.0e6);
    const double q_as = c.cell.capacity_as();
    BessState s;
    s.cell = {0.1, 0.0, c.t_ref_c};
    const double p = 3.7e5;
    const int n = 500;
    for (int k = 0; k < n; ++k) {
        const auto step = step_bess(c, c.cell, s, p);
        ASSERT_FALSE(step.clipped);
        s = step.state;
    }
    const double expected = 0.1 + p * n * c.dt_s / (3.6 * q_as * c.n_cells);
    EXPECT_NEAR(s.cell.soc, expected, 1e-9);
}

TEST(StepBess, SocLimitsClipCurrent) {
    const auto c = BessConfig::sized(1.6, 1.0);
    BessState s;
    s.cell = {0.9999, 0.0, c.t_ref_c};
    const auto step = step_bess(c, c.cell, s, c.p_max_w);
    EXPECT_TRUE(step.clipped);
    EXPECT_LE(step.state.cell.soc, 1.0);
    EXPECT_LT(step.p_grid_w, c.p_max_w);
}

TEST(StepBess, ClosedLoopLossesNonNegative) {
    const auto c = BessConfig::sized(1.6, 1.0);
    Rng rng(8);
    BessState s;
    s.cell = {0.5, 0.0, c.t_ref_c};
    double grid = 0.0, cell_side = 0.0;
    const double start = s.cell.soc;
    for (int k = 0; k < 2000; ++k) {
        // Drive back toward the start SoC half of the time.
        const double p = rng.uniform(-4e5, 4e5) + (start - s.cell.soc) * 2e6;
        const auto step = step_bess(c, c.cell, s, p);
        grid += step.p_grid_w * c.dt_s;
        cell_side += step.p_bat_w * c.dt_s;
        s = step.state;
    }
    // Close the loop at low power.
    for (int k = 0; k < 100000 && std::abs(s.cell.soc - start) > 1e-5; ++k) {
        const double p = s.cell.soc < start ? 5e4 : -5e4;
        const auto step = step_bess(c, c.cell, s, p);
        grid += step.p_grid_w * c.dt_s;
        cell_side += step.p_bat_w * c.dt_s;
        s = step.state;
    }
    EXPECT_GT(grid, 0.0);
    EXPECT_GE(grid, cell_side);
}

TEST(Characterization, ReferenceSystemShape) {
    const auto c = reference_100_cells();
    std::vector<double> levels;
    for (int k = 1; k <= 20; ++k) levels.push_back(2100.0 * k / 20.0);
    const auto pts = characterize_constant_power(c, DegradationState::fresh(c.cell), levels);
    ASSERT_EQ(pts.size(), levels.size());
    for (std::size_t k = levels.size() / 2 + 1; k < pts.size(); ++k)
        EXPECT_LE(pts[k].available_energy_wh, pts[k - 1].available_energy_wh);
    double peak = 0.0;
    std::size_t at = 0;
    for (std::size_t k = 0; k < pts.size(); ++k)
        if (pts[k].round_trip_efficiency > peak) peak = pts[k].round_trip_efficiency, at = k;
    EXPECT_GT(at, 0u);
    EXPECT_LT(at, pts.size() - 1);
    EXPECT_THROW(characterize_constant_power(c, DegradationState::fresh(c.cell), std::vector<double>{3000.0}),
                 DomainError);
}

TEST(Doppelhoecker, LosslessBounds) {
    const double e = 1.6e6, r = 1.0e6;
    const auto c = lossless(e, 1.6e6);
    const auto d = doppelhoeckertest(c, DegradationState::fresh(c.cell), r);
    EXPECT_NEAR(d.soc_min_30min, 0.5 * r / e, 1e-9);
    EXPECT_NEAR(d.soc_max_30min, 1.0 - 0.5 * r / e, 1e-9);
    EXPECT_NEAR(d.discharged_energy_wh, e, 1e-6);
}

TEST(Doppelhoecker, ReferencePointPassesAndBoundsWidenWithAge) {
    const auto c = BessConfig::sized(1.6, 1.0);
    auto d0 = DegradationState::fresh(c.cell);
    const auto fresh = doppelhoeckertest(c, d0, 1e6);
    EXPECT_GE(fresh.soc_min_30min, 0.0);
    EXPECT_LT(fresh.soc_min_30min, fresh.soc_max_30min);
    EXPECT_LE(fresh.soc_max_30min, 1.0);
    auto d1 = advance_year(d0, 0.05, 0.03, 0.1, c.cell);
    const auto aged = doppelhoeckertest(c, d1, 1e6);
    EXPECT_GT(aged.soc_min_30min, fresh.soc_min_30min);
    EXPECT_LT(aged.soc_max_30min, fresh.soc_max_30min);
}

TEST(Doppelhoecker, RejectsOversizedReserve) {
    const auto c = BessConfig::sized(1.0, 1.0);
    EXPECT_THROW(doppelhoeckertest(c, DegradationState::fresh(c.cell), 0.9e6), PrequalificationError);
    const auto small = BessConfig::sized(0.4, 2.5);
    EXPECT_THROW(doppelhoeckertest(small, DegradationState::fresh(small.cell), 0.8e6), PrequalificationError);
}
