#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fcrbess/sizing.hpp"

using namespace fcrbess;

namespace {

Problem base_problem() {
    Problem pb;
    pb.bess = BessConfig::sized(1.6, 1.0);
    pb.rules = MarketRules::for_bess(1e6, 1.6e6);
    pb.scenario = price_scenario("moderate");
    return pb;
}

SweepSettings grid(bool screen_only) {
    SweepSettings s;
    for (int i = 0; i <= 15; ++i) s.energies_mwh.push_back(std::round((1.0 + 0.1 * i) * 10.0) / 10.0);
    s.screen_only = screen_only;
    return s;
}

bool expected_feasible(double e, double c) {
    if (c < 0.8) return e * c >= 1.25 - 1e-9;  // r <= 0.8 P
    return e >= 1.3 - 1e-9;
}

}  // namespace

TEST(Screen, FeasibilityPatternAtOneMegawatt) {
    const auto base = base_problem();
    const FrequencyTrace t = synth_frequency({}, 2 * kDaySeconds, 10.0, 1);
    const SamplePool pool(t);
    const auto s = grid(true);
    const auto pts = sizing_sweep(base, pool, s, 1);
    ASSERT_EQ(pts.size(), s.energies_mwh.size() * s.c_rates.size());
    for (const auto& p : pts) {
        EXPECT_EQ(p.feasible, expected_feasible(p.e_mwh, p.c_rate)) << p.e_mwh << " MWh at " << p.c_rate << "C: " << p.reason;
        ASSERT_EQ(p.npv.size(), s.cost_levels_eur_per_kwh.size());
        for (std::size_t l = 0; l < p.npv.size(); ++l) {
            if (p.feasible) {
                EXPECT_TRUE(std::isnan(p.npv[l]));
            } else {
                EXPECT_EQ(p.npv[l], -(s.cost_levels_eur_per_kwh[l] * (p.e_mwh * 1000.0)));
            }
        }
    }
}

TEST(Screen, ThresholdEdges) {
    const auto base = base_problem();
    const auto at = [&](double e, double c) {
        const Problem pb = point_problem(base, e, c, 300.0);
        return screen_point(pb.bess, pb.rules);
    };
    EXPECT_FALSE(at(2.0, 0.6).feasible);
    EXPECT_EQ(at(2.0, 0.6).reason, "r exceeds 80% of rated power");
    EXPECT_TRUE(at(2.1, 0.6).feasible);
    EXPECT_FALSE(at(1.2, 1.0).feasible);
    EXPECT_TRUE(at(1.3, 1.0).feasible);
    EXPECT_FALSE(at(1.2, 1.5).feasible);
    EXPECT_TRUE(at(1.3, 1.5).feasible);
    const auto ok = at(1.6, 1.0);
    EXPECT_GE(ok.window_energy_wh, ok.required_window_wh);
    EXPECT_DOUBLE_EQ(ok.required_window_wh, 250e3);
}

TEST(PointProblem, ScalesWithGridPoint) {
    auto base = base_problem();
    base.bess.cop = 3.1;
    base.bess.hvac_gain_w_per_k = 77.0;
    const auto pb = point_problem(base, 2.0, 1.5, 400.0);
    EXPECT_DOUBLE_EQ(pb.bess.p_max_w, 3e6);
    EXPECT_DOUBLE_EQ(pb.rules.p_max_w, 3e6);
    EXPECT_DOUBLE_EQ(pb.rules.p_rech_max_w, 2e6);
    EXPECT_DOUBLE_EQ(pb.c_cell_eur, 800e3);
    EXPECT_EQ(pb.bess.cop, 3.1);
    EXPECT_EQ(pb.bess.hvac_gain_w_per_k, 77.0);
}

TEST(Tables, LayoutAndBestMarker) {
    SweepSettings s;
    s.energies_mwh = {1.0, 1.5};
    s.c_rates = {1.0};
    s.cost_levels_eur_per_kwh = {500.0};
    std::vector<SweepPoint> pts(2);
    pts[0].e_mwh = 1.0;
    pts[0].c_rate = 1.0;
    pts[0].npv = {-500e3};
    pts[0].termination = "infeasible";
    pts[0].reason = "a, b";
    pts[1].e_mwh = 1.5;
    pts[1].c_rate = 1.0;
    pts[1].feasible = true;
    pts[1].npv = {123456.0};
    std::ostringstream tab, csv;
    write_npv_table(tab, pts, s);
    EXPECT_EQ(tab.str(), "cost_eur_per_kwh=500\nc_rate,1,1.5\n1,-500,123*\n");
    write_sweep_csv(csv, pts, s);
    EXPECT_NE(csv.str().find("1,1,0,0,0,0.00,-500000.00,infeasible,a; b\n"), std::string::npos) << csv.str();
}
