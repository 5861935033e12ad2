#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fcrbess/config.hpp"

using namespace fcrbess;
namespace fs = std::filesystem;

TEST(Config, ExampleParses) {
    const auto rc = load_run_config(FCRBESS_SOURCE_DIR "/config/example.json");
    EXPECT_NO_THROW(rc.problem.opt.validate());
    EXPECT_NO_THROW(rc.problem.rules.validate());
    EXPECT_EQ(rc.problem.opt.n_c, 10000);
    EXPECT_EQ(rc.problem.opt.population_size, 60u);
    EXPECT_EQ(rc.sweep.energies_mwh.size(), 16u);
    EXPECT_DOUBLE_EQ(rc.problem.c_cell_eur, rc.c_cell_eur_per_kwh * rc.energy_mwh * 1000.0);
    const auto smoke = load_run_config(FCRBESS_SOURCE_DIR "/config/smoke.json");
    EXPECT_EQ(smoke.seed, 7u);
    EXPECT_TRUE(smoke.sweep.screen_only);
}

TEST(Config, DefaultsFollowSizing) {
    const auto rc = parse_run_config(R"({"bess": {"energy_mwh": 2.0, "c_rate": 1.5}})", ".");
    EXPECT_DOUBLE_EQ(rc.problem.bess.p_max_w, 3e6);
    EXPECT_DOUBLE_EQ(rc.problem.rules.p_rech_max_w, 2e6);
    EXPECT_TRUE(rc.frequency_csv.empty());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(parse_run_config(R"({"sed": 1})", "."), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"optimizer": {"n_c": 10, "nc_prime": 5}})", "."), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"seed": "x"})", "."), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"scenario": {"concession_ct_per_kwh": 3.0}})", "."), ConfigError);
    EXPECT_THROW(parse_run_config("{", "."), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"jobs": 0})", "."), ConfigError);
    // Comments are allowed.
    EXPECT_NO_THROW(parse_run_config("{\n// note\n\"seed\": 3\n}", "."));
}

TEST(Config, MissingReferencedFile) {
    try {
        parse_run_config(R"({"data": {"frequency_csv": "nowhere.csv"}})", fs::temp_directory_path());
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("nowhere.csv"), std::string::npos);
    }
}

TEST(Config, NumberRanges) {
    const auto rc = parse_run_config(R"({"sweep": {"energies_mwh": {"from": 1.0, "to": 1.5, "step": 0.1},
                                                   "c_rates": [0.6, 1.0]}})", ".");
    EXPECT_EQ(rc.sweep.energies_mwh, (std::vector<double>{1.0, 1.1, 1.2, 1.3, 1.4, 1.5}));
    EXPECT_EQ(rc.sweep.c_rates, (std::vector<double>{0.6, 1.0}));
    EXPECT_THROW(parse_run_config(R"({"sweep": {"energies_mwh": {"from": 2, "to": 1, "step": 0.1}}})", "."),
                 ConfigError);
}

TEST(Config, SyntheticSourceFollowsSeed) {
    auto a = parse_run_config(R"({"seed": 5, "synthetic": {"days": 2}})", ".");
    auto b = parse_run_config(R"({"seed": 5, "synthetic": {"days": 2}})", ".");
    auto c = parse_run_config(R"({"seed": 6, "synthetic": {"days": 2}})", ".");
    EXPECT_EQ(load_frequency(a).values, load_frequency(b).values);
    EXPECT_NE(load_frequency(a).values, load_frequency(c).values);
    EXPECT_EQ(load_frequency(a).values.size(), 2u * 8640u);
    EXPECT_NE(fnv1a(a.source_text), fnv1a(c.source_text));
}
