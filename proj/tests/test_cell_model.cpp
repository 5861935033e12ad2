#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fcrbess/cell_model.hpp"
#include "fcrbess/rng.hpp"

using namespace fcrbess;

namespace {

// Bisection on (V + R0 I) I = p over the physical branch I >= -V / (2 R0).
double bisect_current(double r0, double v, double p) {
    double lo = -v / (2.0 * r0), hi = 1e3;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if ((v + r0 * mid) * mid < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<PulseSample> pulse_profile() {
    std::vector<PulseSample> pulse;
    for (int k = 0; k <= 600; ++k) {
        const double t = k;
        pulse.push_back({t, (t >= 60 && t < 360) ? -2.05 : 0.0, 0.0});
    }
    return pulse;
}

}  // namespace

TEST(OcvCurve, KnotsAndMidpoint) {
    const auto c = OcvCurve::linear(3.0, 4.2);
    EXPECT_DOUBLE_EQ(c(0.0), 3.0);
    EXPECT_DOUBLE_EQ(c(1.0), 4.2);
    EXPECT_NEAR(c(0.5), 3.6, 1e-15);
}

TEST(OcvCurve, MonotoneDefault) {
    const auto c = OcvCurve::default_nmc();
    double prev = c(0.0);
    for (int i = 1; i <= 1000; ++i) {
        const double v = c(i / 1000.0);
        EXPECT_GE(v, prev);
        prev = v;
    }
}

TEST(OcvCurve, RejectsOutOfRangeAndBadKnots) {
    const auto c = OcvCurve::default_nmc();
    EXPECT_THROW(c(-0.01), DomainError);
    EXPECT_THROW(c(1.01), DomainError);
    EXPECT_THROW(OcvCurve({{0.0, 4.0}, {1.0, 3.0}}), ConfigError);
    EXPECT_THROW(OcvCurve({{0.1, 3.0}, {1.0, 4.0}}), ConfigError);
}

TEST(OcvCurve, LoadsShippedFile) {
    const auto c = OcvCurve::load_csv(FCRBESS_SOURCE_DIR "/data/ocv_nmc_default.csv");
    const auto d = OcvCurve::default_nmc();
    for (double s : {0.0, 0.13, 0.5, 0.77, 1.0}) EXPECT_DOUBLE_EQ(c(s), d(s));
}

TEST(CellParams, ShippedDefaults) {
    const auto p = CellParams::sanyo_ur18650e();
    EXPECT_DOUBLE_EQ(p.r0_ohm, 0.0334);
    EXPECT_DOUBLE_EQ(p.r1_ohm, 0.0114);
    EXPECT_DOUBLE_EQ(p.c1_farad, 1867.0);
    EXPECT_DOUBLE_EQ(p.nominal_capacity_ah, 2.05);
    EXPECT_DOUBLE_EQ(p.eta_coulomb, 0.99);
    EXPECT_NEAR(p.e_rated_wh, 2.05 * 3.6, 1e-12);
}

TEST(CurrentFromPower, ZeroPower) { EXPECT_EQ(current_from_power(0.0334, 3.6, 0.0), 0.0); }

TEST(CurrentFromPower, MatchesBisection) {
    const double i = current_from_power(0.0334, 3.6, 7.2);
    EXPECT_NEAR(i, bisect_current(0.0334, 3.6, 7.2), 1e-12);
    EXPECT_NEAR(i, 1.964205379818017, 1e-12);
}

TEST(CurrentFromPower, EnergyIdentityRandom) {
    Rng rng(11);
    for (int n = 0; n < 10000; ++n) {
        const double r0 = rng.uniform(0.005, 0.08);
        const double v = rng.uniform(2.8, 4.3);
        const double p_floor = max_discharge_power(r0, v);
        const double p = rng.uniform(0.95 * p_floor, 30.0);
        const double i = current_from_power(r0, v, p);
        EXPECT_NEAR((v + r0 * i) * i, p, 1e-9 * std::max(1.0, std::abs(p)));
    }
}

TEST(CurrentFromPower, NegativeDiscriminantThrows) {
    const double floor = max_discharge_power(0.0334, 3.6);
    EXPECT_THROW(current_from_power(0.0334, 3.6, floor * 1.01), CapabilityError);
    EXPECT_NO_THROW(current_from_power(0.0334, 3.6, floor));
}

TEST(RcBranch, EquilibriumSteadyStateAndClosedForm) {
    const auto p = CellParams::sanyo_ur18650e();
    EXPECT_EQ(step_rc_branch(p, 0.0, 0.0, 10.0), 0.0);
    EXPECT_NEAR(step_rc_branch(p, 0.0, 2.0, 1e7), p.r1_ohm * 2.0, 1e-15);
    const double tau = 0.0114 * 1867.0;
    EXPECT_NEAR(step_rc_branch(p, 0.0, 2.0, 10.0), 0.0228 * (1.0 - std::exp(-10.0 / tau)), 1e-15);
    EXPECT_NEAR(step_rc_branch(p, 0.0, 2.0, 10.0), 0.008547681088697997, 1e-12);
}

TEST(RcBranch, Contraction) {
    const auto p = CellParams::sanyo_ur18650e();
    Rng rng(3);
    for (int n = 0; n < 1000; ++n) {
        const double v = rng.uniform(-0.1, 0.1), i = rng.uniform(-5, 5), dt = rng.uniform(0.01, 100);
        const double next = step_rc_branch(p, v, i, dt);
        if (v != p.r1_ohm * i) {
            EXPECT_LT(std::abs(next - p.r1_ohm * i), std::abs(v - p.r1_ohm * i));
        }
    }
}

TEST(StepSoc, ZeroCurrentAndFullCharge) {
    const auto p = CellParams::sanyo_ur18650e();
    EXPECT_EQ(step_soc(p, 0.37, 0.0, 10.0).soc, 0.37);
    const auto s = step_soc(p, 0.5, 2.05, 3600.0);
    EXPECT_EQ(s.soc, 1.0);
    EXPECT_TRUE(s.clipped);
}

TEST(StepSoc, RoundTripLosesCharge) {
    const auto p = CellParams::sanyo_ur18650e();
    const double i = 1.5, dt = 600.0;
    const double up = step_soc(p, 0.5, i, dt).soc;
    const double down = step_soc(p, up, -i, dt).soc;
    EXPECT_NEAR(0.5 - down, (1.0 / p.eta_coulomb - p.eta_coulomb) * i * dt / p.capacity_as(), 1e-14);
    EXPECT_LT(down, 0.5);
}

TEST(StepSoc, LinearChargeCounting) {
    CellParams p = CellParams::sanyo_ur18650e();
    p.eta_coulomb = 1.0;
    double soc = 0.2;
    const double i = 0.7, dt = 10.0;
    for (int k = 0; k < 500; ++k) soc = step_soc(p, soc, i, dt).soc;
    EXPECT_NEAR(soc, 0.2 + i * 500 * dt / p.capacity_as(), 1e-9);
}

TEST(PulseFit, NoiselessRecovery) {
    CellParams truth = CellParams::sanyo_ur18650e();
    truth.r0_ohm = 0.041;
    truth.r1_ohm = 0.015;
    truth.c1_farad = 1500.0;
    auto pulse = pulse_profile();
    const auto v = simulate_pulse_response(truth, OcvCurve::default_nmc(), pulse, 0.5);
    for (std::size_t k = 0; k < pulse.size(); ++k) pulse[k].voltage_v = v[k];
    const RcFit fit = fit_rc_from_pulse(pulse, OcvCurve::default_nmc(), 0.5);
    EXPECT_NEAR(fit.r0_ohm / truth.r0_ohm, 1.0, 1e-3);
    EXPECT_NEAR(fit.r1_ohm / truth.r1_ohm, 1.0, 1e-3);
    EXPECT_NEAR(fit.c1_farad / truth.c1_farad, 1.0, 1e-3);
}

TEST(PulseFit, NoisyFitIsLeastSquaresOptimal) {
    // 1 mV noise: the fit must never be worse than the true parameters.
    // The C1 estimate has a spread of about 3% at this noise level.
    const CellParams truth = CellParams::sanyo_ur18650e();
    const auto curve = OcvCurve::default_nmc();
    auto clean = pulse_profile();
    const auto v = simulate_pulse_response(truth, curve, clean, 0.5);
    for (int seed = 0; seed < 100; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed) + 100);
        auto pulse = clean;
        for (std::size_t k = 0; k < pulse.size(); ++k) pulse[k].voltage_v = v[k] + 1e-3 * rng.normal();
        const RcFit fit = fit_rc_from_pulse(pulse, curve, 0.5);
        const auto at_truth = simulate_pulse_response(truth, curve, pulse, 0.5);
        double truth_sq = 0.0;
        for (std::size_t k = 0; k < pulse.size(); ++k)
            truth_sq += (at_truth[k] - pulse[k].voltage_v) * (at_truth[k] - pulse[k].voltage_v);
        EXPECT_LE(fit.residual_norm * fit.residual_norm, truth_sq * (1 + 1e-9)) << "seed " << seed;
        EXPECT_NEAR(fit.r0_ohm / truth.r0_ohm, 1.0, 0.05) << "seed " << seed;
        EXPECT_NEAR(fit.r1_ohm / truth.r1_ohm, 1.0, 0.05) << "seed " << seed;
        EXPECT_NEAR(fit.c1_farad / truth.c1_farad, 1.0, 0.10) << "seed " << seed;
    }
}

TEST(PulseFit, ShippedExampleFile) {
    const auto pulse = load_pulse_csv(FCRBESS_SOURCE_DIR "/data/pulse_example.csv");
    const RcFit fit = fit_rc_from_pulse(pulse, OcvCurve::default_nmc(), 0.5);
    EXPECT_NEAR(fit.r0_ohm, 0.0334, 0.0334 * 0.05);
    EXPECT_NEAR(fit.r1_ohm, 0.0114, 0.0114 * 0.05);
    EXPECT_NEAR(fit.c1_farad, 1867.0, 1867.0 * 0.05);
}

TEST(PulseFit, ConstantCurrentIsUnidentifiable) {
    std::vector<PulseSample> pulse;
    for (int k = 0; k < 10; ++k) pulse.push_back({double(k), 0.0, 3.7});
    EXPECT_THROW(fit_rc_from_pulse(pulse, OcvCurve::default_nmc(), 0.5), FitError);
}
