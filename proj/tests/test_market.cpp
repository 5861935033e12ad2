#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fcrbess/market.hpp"

using namespace fcrbess;

namespace {

MarketScenario bare() {
    MarketScenario s = price_scenario("moderate");
    s.levies.clear();
    s.intraday = PriceSeries::constant(40.0);
    s.imbalance = PriceSeries::constant(0.0);
    return s;
}

SimResult one_block(double recharge_wh, double residual_wh) {
    SimResult sim;
    const double net = recharge_wh + residual_wh;
    sim.blocks.push_back({1514764800, recharge_wh, residual_wh, std::max(net, 0.0), std::max(-net, 0.0)});
    sim.grid_in_wh = std::max(net, 0.0);
    sim.grid_out_wh = std::max(-net, 0.0);
    return sim;
}

}  // namespace

TEST(ElectricityCost, ZeroActivity) {
    const SimResult sim;
    const auto c = electricity_cost(sim, price_scenario("moderate"), 3);
    EXPECT_EQ(c.total(), 0.0);
}

TEST(ElectricityCost, OneEuroRechargeBlock) {
    // +100 kW for 15 min at 40 EUR/MWh.
    const auto c = electricity_cost(one_block(100e3 * 0.25, 0.0), bare(), 0);
    EXPECT_NEAR(c.intraday, 1.0, 1e-12);
    EXPECT_NEAR(c.total(), 1.0, 1e-12);
    const auto later = electricity_cost(one_block(100e3 * 0.25, 0.0), bare(), 2);
    EXPECT_NEAR(later.total(), std::pow(1.017, 2), 1e-12);
}

TEST(ElectricityCost, LeviesDecomposeAdditively) {
    auto s = price_scenario("moderate");
    s.intraday = PriceSeries::constant(40.0);
    s.imbalance = PriceSeries::constant(60.0);
    SimResult sim = one_block(20e3, 5e3);
    sim.grid_in_wh = 30e3;
    sim.grid_out_wh = 10e3;
    const auto c = electricity_cost(sim, s, 0);
    double sum = 0.0;
    for (const auto& [n, v] : c.levies) sum += v;
    EXPECT_NEAR(c.total(), c.intraday + c.imbalance + sum, 1e-12);
    // EEG on losses (20 kWh), par19 on consumption (25 kWh), tax exempt.
    for (const auto& [n, v] : c.levies) {
        if (n == "eeg") {
            EXPECT_NEAR(v, 20.0 * 0.0688, 1e-12);
        }
        if (n == "par19") {
            EXPECT_NEAR(v, 25.0 * 0.0037, 1e-12);
        }
        if (n == "electricity_tax" || n == "network_charges") {
            EXPECT_EQ(v, 0.0);
        }
    }
    s.levies.clear();
    s.intraday = PriceSeries::constant(0.0);
    s.imbalance = PriceSeries::constant(0.0);
    EXPECT_EQ(electricity_cost(sim, s, 0).total(), 0.0);
}

TEST(ElectricityCost, MissingPriceNamesTimestamp) {
    auto s = bare();
    s.intraday = PriceSeries(1514764800 + 86400, 900, {40.0});
    try {
        electricity_cost(one_block(1000.0, 0.0), s, 0);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("2018-01-01T00:00:00Z"), std::string::npos);
    }
}

TEST(PriceCsv, LoadsAndRejectsIrregular) {
    const auto dir = std::filesystem::temp_directory_path() / "fcrbess_price_test";
    std::filesystem::create_directories(dir);
    const auto good = (dir / "good.csv").string();
    {
        std::ofstream os(good);
        os << "timestamp,price_eur_per_mwh\n2018-01-01T00:00:00Z,30\n2018-01-01T00:15:00Z,45.5\n";
    }
    const auto p = load_price_csv(good);
    EXPECT_EQ(p.at(1514764800), 30.0);
    EXPECT_EQ(p.at(1514764800 + 899), 30.0);
    EXPECT_EQ(p.at(1514764800 + 900), 45.5);
    EXPECT_THROW(p.at(1514764800 + 1800), DataError);
    const auto bad = (dir / "bad.csv").string();
    {
        std::ofstream os(bad);
        os << "timestamp,price\n2018-01-01T00:00:00Z,30\n2018-01-01T00:15:00Z,31\n2018-01-01T00:45:00Z,32\n";
    }
    EXPECT_THROW(load_price_csv(bad), DataError);
    std::filesystem::remove_all(dir);
}

TEST(Scenario, PricePaths) {
    const auto m = price_scenario("moderate");
    const auto l = price_scenario("low");
    EXPECT_NEAR(m.fcr_price(2035 - 2018), 1630.0, 1e-9);
    EXPECT_NEAR(l.fcr_price(2035 - 2018), 1000.0, 1e-9);
    for (int k = 1; k < 20; ++k) {
        EXPECT_LT(m.fcr_price(k), m.fcr_price(k - 1));
        EXPECT_LT(l.fcr_price(k), m.fcr_price(k));
    }
    EXPECT_NEAR(m.annual_fcr_revenue(0, 2e6), m.fcr_price(0) * 365.0 / 7.0 * 2.0, 1e-9);
    EXPECT_THROW(price_scenario("high"), ConfigError);
}

TEST(LifetimeFactor, UnitCases) {
    EXPECT_EQ(lifetime_factor(1.0, 0.98, 0.001, 0.002, 0.005), 1.0);
    EXPECT_NEAR(lifetime_factor(0.82, 0.78, 0.001, 0.001, 0.005), 0.5, 1e-12);
    EXPECT_EQ(lifetime_factor(0.79, 0.77, 0.006, 0.007, 0.005), 0.0);
    EXPECT_DOUBLE_EQ(lifetime_factor(0.9, 0.88, 0.003, 0.007, 0.005), 0.5);
    EXPECT_DOUBLE_EQ(lifetime_factor(0.82, 0.78, 0.004, 0.008, 0.005), 0.25);
}

TEST(LifetimeFactor, AlwaysInUnitInterval) {
    for (double cs = 0.7; cs <= 1.0; cs += 0.03)
        for (double ce = 0.7; ce <= cs; ce += 0.03)
            for (double es = 0.0; es <= 0.01; es += 0.002)
                for (double ee = 0.0; ee <= 0.01; ee += 0.002) {
                    const double f = lifetime_factor(cs, ce, es, ee, 0.005);
                    ASSERT_GE(f, 0.0);
                    ASSERT_LE(f, 1.0);
                    if (ce >= 0.8 && ee <= 0.005) {
                        ASSERT_EQ(f, 1.0);
                    }
                }
}

TEST(LifetimeRevenue, NonBindingSumAndPayback) {
    std::vector<YearOutcome> ys;
    for (int k = 0; k < 5; ++k) ys.push_back({k, 100.0, 10.0, 1.0 - 0.02 * k, 0.98 - 0.02 * k, 0.0, 0.0});
    const auto r = lifetime_revenue(ys, 0.017, 0.005, 200.0);
    double want = 0.0;
    for (int k = 0; k < 5; ++k) want += 90.0 / std::pow(1.017, k + 1);
    EXPECT_NEAR(r.discounted_net_revenue, want, 1e-9);
    EXPECT_NEAR(r.npv, want - 200.0, 1e-9);
    EXPECT_EQ(r.k_max, 5);
    EXPECT_DOUBLE_EQ(r.lifetime_years, 5.0);
    ASSERT_TRUE(r.payback_years.has_value());
    EXPECT_GT(*r.payback_years, 2.0);
    EXPECT_LT(*r.payback_years, 3.0);
}

TEST(LifetimeRevenue, DiscountingAndCostMonotone) {
    std::vector<YearOutcome> ys;
    for (int k = 0; k < 8; ++k) ys.push_back({k, 100.0, 5.0, 1.0, 1.0, 0.0, 0.0});
    double prev = INFINITY;
    for (double g = 0.0; g <= 0.1; g += 0.01) {
        const double rev = lifetime_revenue(ys, g, 0.005, 0.0).discounted_net_revenue;
        EXPECT_LT(rev, prev);
        prev = rev;
    }
    const double a = lifetime_revenue(ys, 0.017, 0.005, 1000.0).npv;
    const double b = lifetime_revenue(ys, 0.017, 0.005, 1500.0).npv;
    EXPECT_NEAR(a - b, 500.0, 1e-9);
}
