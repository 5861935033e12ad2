// fcrbess: simulate, optimise and size FCR battery storage.

#include <boost/version.hpp>
#include <Eigen/Core>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fcrbess/config.hpp"
#include "fcrbess/fcrbess.hpp"
#include "fcrbess/svg.hpp"

namespace fs = std::filesystem;
using namespace fcrbess;
using nlohmann::ordered_json;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kInfeasible = 4 };

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::string out;
    bool svg = false;
};

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Output file under the run directory; parent directories are created.
class OutDir {
public:
    explicit OutDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }
    std::ofstream open(const std::string& name) const {
        std::ofstream os(root_ / name);
        if (!os) throw DataError("cannot write " + (root_ / name).string());
        os.precision(17);
        return os;
    }
    const fs::path& root() const { return root_; }

private:
    fs::path root_;
};

void write_json(const OutDir& out, const std::string& name, const ordered_json& j) { out.open(name) << j.dump(2) << '\n'; }

void write_manifest(const OutDir& out, const std::string& command, const Common& c, std::uint64_t seed, int jobs,
                    const std::string& config_text, const ordered_json& extra = {}) {
    ordered_json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["seed"] = seed;
    m["jobs"] = jobs;
    m["config_path"] = c.config_path;
    m["config_hash_fnv1a64"] = hex64(fnv1a(config_text));
    m["libraries"] = {{"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                      {"cli11", CLI11_VERSION},
                      {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) +
                                    "." + std::to_string(BOOST_VERSION % 100)},
                      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"compiler", __VERSION__}};
    if (!extra.is_null()) m["details"] = extra;
    write_json(out, "manifest.json", m);
}

struct Loaded {
    RunConfig rc;
    std::uint64_t seed;
    int jobs;
    fs::path out;
};

Loaded load(const Common& c) {
    Loaded l{c.config_path.empty() ? parse_run_config("{}", fs::current_path()) : load_run_config(c.config_path), 0, 1,
             {}};
    l.seed = c.seed.value_or(l.rc.seed);
    l.jobs = c.jobs.value_or(l.rc.jobs);
    if (l.jobs < 1) throw ConfigError("--jobs must be >= 1");
    l.rc.problem.opt.jobs = l.jobs;
    l.out = c.out.empty() ? fs::path(l.rc.out_dir) : fs::path(c.out);
    return l;
}

ordered_json params_json(const ControllerParams& p) {
    return {{"k_p", p.k_p}, {"soc_0", p.soc_0}, {"o_d", p.o_d}, {"db_p", p.db_p}};
}

int cmd_simulate(const Common& c) {
    Loaded l = load(c);
    const RunConfig& rc = l.rc;
    const Problem& pb = rc.problem;
    FrequencyTrace trace = load_frequency(rc);
    const auto steps = static_cast<std::size_t>(std::llround(rc.simulate_days * kDaySeconds / trace.dt));
    if (rc.simulate_days < 1) throw ConfigError("simulate.days must be >= 1");
    if (trace.values.size() < steps) throw DataError("frequency data shorter than simulate.days");
    const OutDir out(l.out);

    const DegradationState fresh = DegradationState::fresh(pb.bess.cell);
    std::optional<DoppelhoeckerResult> dht;
    std::string prequalification = "passed";
    try {
        dht = doppelhoeckertest(pb.bess, fresh, pb.rules.r_w);
    } catch (const PrequalificationError& e) {
        prequalification = e.what();
    }
    FrequencySample seg = FrequencySample::whole(trace);
    seg.values = seg.values.first(steps);
    SimOptions opt;
    opt.record_trace = true;
    if (dht) opt.bounds = {dht->soc_min_30min, dht->soc_max_30min};
    const SimResult sim = simulate(pb.bess, pb.bess.cell, rc.controller, pb.rules, std::span(&seg, 1), opt);

    const auto cycles = rainflow(sim.soc, pb.bess.cell.nominal_capacity_ah);
    const DegradationEstimate est = extrapolate_day_samples(sim.soc, rc.simulate_days, pb.ageing, pb.bess.t_ref_c,
                                                            pb.bess.cell.nominal_capacity_ah, 0);
    const ElectricityCost cost = electricity_cost(sim, pb.scenario, 0);

    {
        auto os = out.open("trace.csv");
        write_trace_csv(os, sim.trace);
    }
    {
        // Start-of-step SoC plus the final state: the series the cycles come from.
        auto os = out.open("soc.csv");
        os << "t,soc\n";
        for (std::size_t k = 0; k < sim.soc.size(); ++k)
            os << csv::format(static_cast<double>(k) * pb.bess.dt_s) << ',' << csv::format(sim.soc[k]) << '\n';
    }
    {
        auto os = out.open("cycles.csv");
        write_cycles_csv(os, cycles);
    }
    std::size_t full = 0;
    for (const auto& r : cycles) full += r.weight == CycleWeight::full;
    ordered_json s;
    s["days"] = rc.simulate_days;
    s["controller"] = params_json(rc.controller);
    s["prequalification"] = prequalification;
    if (dht) s["soc_bounds"] = {dht->soc_min_30min, dht->soc_max_30min};
    s["n_steps"] = sim.n_steps;
    s["throughput_ah_per_cell"] = cycles.empty() ? 0.0 : cycles.back().q_cum;
    s["cycles"] = {{"records", cycles.size()}, {"full", full}, {"half", cycles.size() - full}};
    s["penalty_fraction"] = sim.penalty();
    s["emergency_steps"] = sim.emergency_steps;
    s["clipped_steps"] = sim.clipped_steps;
    s["grid_in_kwh"] = sim.grid_in_wh / 1e3;
    s["grid_out_kwh"] = sim.grid_out_wh / 1e3;
    s["losses_kwh"] = sim.losses_wh() / 1e3;
    ordered_json levies;
    for (const auto& [name, v] : cost.levies) levies[name] = v;
    s["electricity_cost_eur"] = {{"intraday", cost.intraday}, {"imbalance", cost.imbalance}, {"levies", levies},
                                 {"total", cost.total()}};
    s["annualised_degradation"] = {{"cycle_loss", est.cycle_loss},
                                   {"calendar_loss", est.calendar_loss},
                                   {"resistance_growth", est.resistance_growth()}};
    write_json(out, "summary.json", s);
    if (c.svg) {
        svg::Series soc{"SoC", {}, {}}, pg{"p_grid / p_max", {}, {}};
        for (const auto& r : sim.trace) {
            soc.x.push_back(r.t / 3600.0);
            soc.y.push_back(r.soc);
            pg.x.push_back(r.t / 3600.0);
            pg.y.push_back(r.p_grid / pb.bess.p_max_w);
        }
        auto os = out.open("trace.svg");
        svg::line_chart(os, "Simulated operation", "hours", {soc, pg});
    }
    write_manifest(out, "simulate", c, l.seed, l.jobs, rc.source_text);
    std::cout << "simulated " << sim.n_steps << " steps, penalty fraction " << sim.penalty() << ", results in "
              << out.root().string() << '\n';
    return dht ? kOk : kInfeasible;
}

ordered_json year_json(const YearResult& y) {
    return {{"year_k", y.year_k},
            {"feasible", y.feasible},
            {"note", y.note},
            {"x_hat", params_json(y.x_hat)},
            {"objective", y.objective},
            {"penalty_branch", y.penalty_branch},
            {"soc_bounds", {y.bounds.soc_min, y.bounds.soc_max}},
            {"eps_k", y.eps_k},
            {"m_prime", y.m_prime},
            {"capacity_before", y.capacity_before},
            {"capacity_after", y.capacity_after},
            {"r0_after_ohm", y.r0_after},
            {"r1_after_ohm", y.r1_after},
            {"cycle_loss", y.cycle_loss},
            {"calendar_loss", y.calendar_loss},
            {"resistance_growth", y.res_growth},
            {"expected_electricity_cost_eur", y.expected_elec_cost},
            {"expected_degradation_cost_eur", y.expected_degr_cost},
            {"fcr_revenue_eur", y.fcr_revenue},
            {"iterations", y.iterations},
            {"penalty_set_size", y.penalty_set_size}};
}

void write_log_csv(std::ostream& os, const std::vector<YearResult>& years) {
    os << "year_k,iteration,best,mean,stddev,penalty_set_size,check_m\n";
    for (const auto& y : years)
        for (const auto& r : y.log)
            os << r.year_k << ',' << r.iteration << ',' << csv::format(r.best) << ',' << csv::format(r.mean) << ','
               << csv::format(r.stddev) << ',' << r.penalty_set_size << ',' << r.check_m << '\n';
}

int cmd_optimize(const Common& c) {
    Loaded l = load(c);
    const RunConfig& rc = l.rc;
    const Problem& pb = rc.problem;
    const SamplePool pool(load_frequency(rc));
    const OutDir out(l.out);
    const LifetimeRun run = run_lifetime(pb, pool, l.seed, [](const YearResult& y) {
        std::cerr << "year " << y.year_k << ": " << (y.feasible ? "feasible" : "infeasible") << ", eps " << y.eps_k
                  << ", capacity " << y.capacity_after << ", " << y.iterations << " iterations\n";
    });
    const LifetimeResult life = lifetime_revenue(run.years, pb, pb.c_cell_eur);

    ordered_json years = ordered_json::array();
    for (const auto& y : run.years) years.push_back(year_json(y));
    write_json(out, "years.json", years);
    {
        auto os = out.open("log.csv");
        write_log_csv(os, run.years);
    }
    ordered_json lj;
    lj["termination"] = to_string(run.termination);
    lj["k_max"] = life.k_max;
    lj["lifetime_years"] = life.lifetime_years;
    lj["discounted_net_revenue_eur"] = life.discounted_net_revenue;
    lj["cost_bess_eur"] = life.cost_bess;
    lj["npv_eur"] = life.npv;
    lj["payback_years"] = life.payback_years ? ordered_json(*life.payback_years) : ordered_json(nullptr);
    ordered_json per = ordered_json::array();
    for (const auto& y : life.years)
        per.push_back({{"year_k", y.year_k}, {"factor", y.factor}, {"discounted_net_eur", y.discounted_net}});
    lj["years"] = per;
    write_json(out, "lifetime.json", lj);
    if (c.svg && !run.years.empty()) {
        svg::Series cap{"capacity", {}, {}}, eps{"eps x 100", {}, {}};
        for (const auto& y : run.years) {
            cap.x.push_back(y.year_k + 1);
            cap.y.push_back(y.capacity_after);
            eps.x.push_back(y.year_k + 1);
            eps.y.push_back(100.0 * y.eps_k);
        }
        auto os = out.open("lifetime.svg");
        svg::line_chart(os, "Capacity and violation bound per year", "year", {cap, eps});
    }
    write_manifest(out, "optimize", c, l.seed, l.jobs, rc.source_text, {{"termination", to_string(run.termination)}});
    std::cout << "termination " << to_string(run.termination) << ", k_max " << life.k_max << ", lifetime "
              << life.lifetime_years << " years, NPV " << life.npv << " EUR\n";
    return run.termination == Termination::infeasible ? kInfeasible : kOk;
}

int cmd_sweep(const Common& c) {
    Loaded l = load(c);
    const RunConfig& rc = l.rc;
    if (rc.sweep.energies_mwh.empty() || rc.sweep.c_rates.empty()) throw ConfigError("sweep grid is empty");
    const SamplePool pool(load_frequency(rc));
    const OutDir out(l.out);
    const auto points = sizing_sweep(rc.problem, pool, rc.sweep, l.seed, l.jobs);
    {
        auto os = out.open("sweep.csv");
        write_sweep_csv(os, points, rc.sweep);
    }
    {
        auto os = out.open("npv_table.csv");
        write_npv_table(os, points, rc.sweep);
    }
    ordered_json best = ordered_json::array();
    for (std::size_t k = 0; k < rc.sweep.cost_levels_eur_per_kwh.size(); ++k) {
        const SweepPoint* b = nullptr;
        for (const auto& p : points)
            if (k < p.npv.size() && std::isfinite(p.npv[k]) && (!b || p.npv[k] > b->npv[k])) b = &p;
        ordered_json e{{"cost_eur_per_kwh", rc.sweep.cost_levels_eur_per_kwh[k]}};
        if (b) e.update({{"e_mwh", b->e_mwh}, {"c_rate", b->c_rate}, {"npv_eur", b->npv[k]}});
        best.push_back(e);
    }
    std::size_t errors = 0;
    for (const auto& p : points) errors += !p.error.empty();
    write_json(out, "summary.json", {{"points", points.size()}, {"errors", errors}, {"best", best}});
    write_manifest(out, "sweep", c, l.seed, l.jobs, rc.source_text);
    std::cout << points.size() << " grid points, " << errors << " errors, results in " << out.root().string() << '\n';
    return kOk;
}

int cmd_rainflow(const Common& c, const std::string& input, const std::string& column, std::optional<double> cap) {
    Loaded l = load(c);
    const csv::Table t = csv::read_file(input);
    if (t.header.empty()) throw DataError(input + ": empty");
    const int col = column.empty() ? static_cast<int>(t.header.size()) - 1 : t.column(column);
    if (col < 0) throw DataError(input + ": no column '" + column + "'");
    std::vector<double> soc;
    for (const auto& r : t.rows) {
        if (static_cast<std::size_t>(col) >= r.fields.size())
            throw DataError(input + ":" + std::to_string(r.line) + ": missing field");
        soc.push_back(csv::to_double(r.fields[static_cast<std::size_t>(col)], input + ":" + std::to_string(r.line)));
    }
    const double capacity = cap.value_or(l.rc.problem.bess.cell.nominal_capacity_ah);
    const auto cycles = rainflow(soc, capacity);
    const OutDir out(l.out);
    {
        auto os = out.open("cycles.csv");
        write_cycles_csv(os, cycles);
    }
    write_manifest(out, "rainflow", c, l.seed, l.jobs, l.rc.source_text, {{"input", input}});
    std::cout << cycles.size() << " cycle records\n";
    return kOk;
}

int cmd_check_bound(const Common& c, std::int64_t m, std::int64_t n, double beta) {
    Loaded l = load(c);
    const double bound = chance_upper_bound(m, n, beta);
    const OutDir out(l.out);
    write_json(out, "bound.json", {{"m", m}, {"n", n}, {"beta", beta}, {"bound", bound}});
    write_manifest(out, "check-bound", c, l.seed, l.jobs, l.rc.source_text);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", bound);
    std::cout << buf << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation, stochastic optimisation and sizing of battery storage for frequency containment reserve"};
    app.require_subcommand(1);
    Common c;
    std::uint64_t seed = 0;
    int jobs = 0;
    app.add_option("--config", c.config_path, "JSON configuration (comments allowed)")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
    auto* jobs_opt = app.add_option("--jobs", jobs, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
    app.add_option("--out", c.out, "Output directory (overrides the config)");
    app.add_flag("--svg", c.svg, "Also write SVG charts");

    auto* sim = app.add_subcommand("simulate", "Simulate fixed controller parameters over the first days of data");
    auto* opt = app.add_subcommand("optimize", "Optimise the controller year by year over the lifetime");
    auto* sweep = app.add_subcommand("sweep", "Lifetime NPV over a grid of energies and C-rates");
    auto* rf = app.add_subcommand("rainflow", "Cycle records of a SoC trace");
    std::string rf_input, rf_column;
    std::optional<double> rf_capacity;
    rf->add_option("input", rf_input, "CSV with a SoC column")->required()->check(CLI::ExistingFile);
    rf->add_option("--column", rf_column, "SoC column name (default: last column)");
    rf->add_option("--capacity-ah", rf_capacity, "Cell capacity for the throughput column");
    auto* cb = app.add_subcommand("check-bound", "Binomial upper bound on the violation probability");
    std::int64_t m = 0, n = 0;
    double beta = 0.001;
    cb->add_option("--m", m, "Violations observed")->required();
    cb->add_option("--n", n, "Samples")->required();
    cb->add_option("--beta", beta, "Confidence parameter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }
    if (*seed_opt) c.seed = seed;
    if (*jobs_opt) c.jobs = jobs;

    try {
        if (*sim) return cmd_simulate(c);
        if (*opt) return cmd_optimize(c);
        if (*sweep) return cmd_sweep(c);
        if (*rf) return cmd_rainflow(c, rf_input, rf_column, rf_capacity);
        if (*cb) return cmd_check_bound(c, m, n, beta);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const DomainError& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kConfigError;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kOk;
}
