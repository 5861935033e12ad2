#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fcrbess/simulation.hpp"

using namespace fcrbess;

namespace {

struct Fixture {
    BessConfig bess = BessConfig::sized(1.6, 1.0);
    MarketRules rules = MarketRules::for_bess(1e6, 1.6e6);
    ControllerParams params{2.0, 0.45, 0.0, 0.2};
};

}  // namespace

TEST(Simulate, FlatFrequencyIsIdle) {
    Fixture f;
    FrequencyTrace t;
    t.values.assign(8640, 0.0);
    const auto seg = FrequencySample::whole(t);
    SimOptions opt;
    opt.record_trace = true;
    opt.bounds = {0.3, 0.7};
    const auto sim = simulate(f.bess, f.bess.cell, f.params, f.rules, std::span(&seg, 1), opt);
    EXPECT_EQ(sim.n_steps, 8640u);
    EXPECT_EQ(sim.penalty(), 0.0);
    EXPECT_EQ(sim.grid_in_wh, 0.0);
    EXPECT_EQ(sim.grid_out_wh, 0.0);
    for (const auto& r : sim.trace) {
        ASSERT_EQ(r.p_grid, 0.0);
        ASSERT_EQ(r.p_hvac, 0.0);
        ASSERT_EQ(r.soc, 0.45);
    }
    ASSERT_EQ(sim.soc.size(), 8641u);
    EXPECT_EQ(sim.blocks.size(), 96u);
}

TEST(Simulate, BlockEnergiesAddUp) {
    Fixture f;
    const auto t = synth_frequency({0.03, 300.0, 1.0, 0.12, 600.0}, 2 * kDaySeconds, 10.0, 4);
    const auto seg = FrequencySample::whole(t);
    const auto sim = simulate(f.bess, f.bess.cell, f.params, f.rules, std::span(&seg, 1));
    double in = 0.0, out = 0.0, net = 0.0;
    for (const auto& b : sim.blocks) {
        in += b.consumed_wh;
        out += b.injected_wh;
        net += b.recharge_wh + b.residual_wh;
    }
    EXPECT_NEAR(in, sim.grid_in_wh, 1e-6);
    EXPECT_NEAR(out, sim.grid_out_wh, 1e-6);
    EXPECT_NEAR(net, sim.grid_in_wh - sim.grid_out_wh, 1e-6);
    EXPECT_EQ(sim.blocks.size(), 192u);
    EXPECT_EQ(sim.blocks[1].start - sim.blocks[0].start, 900);
}

TEST(Simulate, RecordedDecompositionHonoursRules) {
    Fixture f;
    f.params.o_d = 0.15;
    const auto t = synth_frequency({0.04, 300.0, 3.0, 0.12, 600.0}, 3 * kDaySeconds, 10.0, 9);
    const auto seg = FrequencySample::whole(t);
    SimOptions opt;
    opt.record_trace = true;
    const auto sim = simulate(f.bess, f.bess.cell, f.params, f.rules, std::span(&seg, 1), opt);
    for (std::size_t k = 0; k < sim.trace.size(); ++k) {
        const auto& r = sim.trace[k];
        ASSERT_LE(std::abs(r.p_grid), f.bess.p_max_w + 1e-6);
        ASSERT_EQ(std::fmod(r.p_rech, 1e5), 0.0);
        if (k % 90 != 0) {
            ASSERT_EQ(r.p_rech, sim.trace[k - 1].p_rech);
        }
        if (r.p_od != 0.0) {
            ASSERT_EQ(r.soc > f.params.soc_0, r.p_od < 0.0);
        }
    }
}

TEST(Simulate, EmergencyDetectionRestartsPerSegment) {
    Fixture f;
    FrequencyTrace t;
    t.values.assign(8640, 0.0);
    for (std::size_t i = 8640 - 20; i < 8640; ++i) t.values[i] = 0.12;  // last 200 s
    FrequencySample a = FrequencySample::whole(t);
    FrequencyTrace u;
    u.values.assign(8640, 0.0);
    for (std::size_t i = 0; i < 20; ++i) u.values[i] = 0.12;  // first 200 s
    FrequencySample b = FrequencySample::whole(u);
    const std::vector<FrequencySample> segs{a, b};
    const auto sim = simulate(f.bess, f.bess.cell, f.params, f.rules, segs);
    EXPECT_EQ(sim.emergency_steps, 0u);  // 400 s only if the two were joined
}

TEST(Simulate, PenaltyMatchesStandaloneMetric) {
    Fixture f;
    const auto t = synth_frequency({0.05, 600.0, 2.0, 0.12, 900.0}, kDaySeconds, 10.0, 13);
    const auto seg = FrequencySample::whole(t);
    SimOptions opt;
    opt.bounds = {0.4, 0.5};
    const auto sim = simulate(f.bess, f.bess.cell, f.params, f.rules, std::span(&seg, 1), opt);
    const std::span<const double> soc(sim.soc.data(), sim.n_steps);
    const auto em = emergency_trace(t.values, t.dt);
    EXPECT_DOUBLE_EQ(sim.penalty(), penalty_metric(soc, opt.bounds, em));
    EXPECT_GT(sim.penalty(), 0.0);
    EXPECT_DOUBLE_EQ(sample_penalty(f.bess, f.bess.cell, f.params, f.rules, seg, opt.bounds), sim.penalty());
}

TEST(Simulate, Deterministic) {
    Fixture f;
    const auto t = synth_frequency({0.03, 300.0, 1.0, 0.12, 600.0}, kDaySeconds, 10.0, 21);
    const auto seg = FrequencySample::whole(t);
    SimOptions opt;
    opt.record_trace = true;
    std::ostringstream a, b;
    write_trace_csv(a, simulate(f.bess, f.bess.cell, f.params, f.rules, std::span(&seg, 1), opt).trace);
    write_trace_csv(b, simulate(f.bess, f.bess.cell, f.params, f.rules, std::span(&seg, 1), opt).trace);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_EQ(a.str().substr(0, 10), "t,delta_f,");
}

TEST(Simulate, RejectsMismatchedStep) {
    Fixture f;
    FrequencyTrace t;
    t.dt = 1.0;
    t.values.assign(100, 0.0);
    const auto seg = FrequencySample::whole(t);
    EXPECT_THROW(simulate(f.bess, f.bess.cell, f.params, f.rules, std::span(&seg, 1)), ConfigError);
}
