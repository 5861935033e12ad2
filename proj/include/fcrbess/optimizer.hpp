#pragma once

// Yearly chance-constrained tuning of the recharge controller: the SAA
// objective over day samples with a penalty set, an a-posteriori binomial
// bound on the violation probability, differential evolution, and the
// multi-year driver that ages the battery between years.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "fcrbess/bess.hpp"
#include "fcrbess/degradation.hpp"
#include "fcrbess/fcr_controller.hpp"
#include "fcrbess/frequency_data.hpp"
#include "fcrbess/market.hpp"
#include "fcrbess/parallel.hpp"
#include "fcrbess/rng.hpp"
#include "fcrbess/simulation.hpp"

namespace fcrbess {

// ---------------------------------------------------------------------------
// Binomial chance bound

/// P(X <= m) for X ~ Binomial(n, rho), summed in log space.
inline double binomial_cdf(std::int64_t m, std::int64_t n, double rho) {
    if (m < 0) return 0.0;
    if (m >= n) return 1.0;
    if (rho <= 0.0) return 1.0;
    if (rho >= 1.0) return 0.0;
    const double lr = std::log(rho);
    const double lq = std::log1p(-rho);
    const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
    double sum = 0.0;
    for (std::int64_t i = 0; i <= m; ++i) {
        const double di = static_cast<double>(i);
        const double lt = lgn - std::lgamma(di + 1.0) - std::lgamma(static_cast<double>(n - i) + 1.0) + di * lr +
                          static_cast<double>(n - i) * lq;
        sum += std::exp(lt);
    }
    return std::min(sum, 1.0);
}

/// sup{rho in [0, 1] : BinomCDF(m; rho, n) >= beta} by bisection (the CDF
/// decreases in rho).
inline double chance_upper_bound(std::int64_t m, std::int64_t n, double beta) {
    if (n <= 0 || m < 0 || m > n) throw DomainError("chance_upper_bound: need 0 <= m <= n, n > 0");
    if (!(beta > 0.0 && beta < 1.0)) throw DomainError("chance_upper_bound: beta must lie in (0, 1)");
    if (m == n) return 1.0;
    double lo = 0.0;
    double hi = 1.0;
    while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        if (binomial_cdf(m, n, mid) >= beta) lo = mid;
        else hi = mid;
    }
    return lo;
}

/// Largest m whose bound does not exceed eps_req, or -1 if even m = 0 fails.
inline std::int64_t max_violations(std::int64_t n, double beta, double eps_req) {
    if (chance_upper_bound(0, n, beta) > eps_req) return -1;
    std::int64_t lo = 0;  // bound(lo) <= eps
    std::int64_t hi = n;  // bound(hi) = 1 > eps unless eps >= 1
    if (eps_req >= 1.0) return n;
    while (hi - lo > 1) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        if (chance_upper_bound(mid, n, beta) <= eps_req) lo = mid;
        else hi = mid;
    }
    return lo;
}

// ---------------------------------------------------------------------------
// Differential evolution (best/1/bin)

struct Box {
    std::vector<double> lower;
    std::vector<double> upper;

    std::size_t dim() const { return lower.size(); }
    bool contains(std::span<const double> x) const {
        for (std::size_t j = 0; j < dim(); ++j)
            if (x[j] < lower[j] || x[j] > upper[j]) return false;
        return true;
    }
    void validate() const {
        if (lower.size() != upper.size() || lower.empty()) throw ConfigError("box: bounds differ in dimension");
        for (std::size_t j = 0; j < dim(); ++j)
            if (!(lower[j] <= upper[j])) throw ConfigError("box: lower bound above upper bound");
    }
};

struct Member {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
};

using Population = std::vector<Member>;

/// Evaluates a batch of points; the batch form lets callers parallelise.
using BatchObjective = std::function<std::vector<double>(const std::vector<std::vector<double>>&)>;

struct DeSettings {
    double mutation = 0.7;   // F
    double crossover = 0.9;  // CR
};

inline Population init_population(const Box& box, std::size_t size, Rng& rng,
                                  const std::optional<std::vector<double>>& seed_point = std::nullopt) {
    box.validate();
    if (size < 4) throw ConfigError("differential evolution: population must have at least 4 members");
    Population pop(size);
    for (std::size_t i = 0; i < size; ++i) {
        pop[i].x.resize(box.dim());
        for (std::size_t j = 0; j < box.dim(); ++j) pop[i].x[j] = rng.uniform(box.lower[j], box.upper[j]);
    }
    if (seed_point) {
        if (seed_point->size() != box.dim()) throw ConfigError("differential evolution: seed point dimension");
        pop[0].x = *seed_point;
        for (std::size_t j = 0; j < box.dim(); ++j) pop[0].x[j] = std::clamp(pop[0].x[j], box.lower[j], box.upper[j]);
    }
    return pop;
}

inline void evaluate_population(Population& pop, const BatchObjective& objective) {
    std::vector<std::vector<double>> xs;
    xs.reserve(pop.size());
    for (const auto& m : pop) xs.push_back(m.x);
    const auto fs = objective(xs);
    for (std::size_t i = 0; i < pop.size(); ++i) pop[i].f = fs[i];
}

inline std::size_t best_index(const Population& pop) {
    std::size_t b = 0;
    for (std::size_t i = 1; i < pop.size(); ++i)
        if (pop[i].f < pop[b].f) b = i;
    return b;
}

/// One generation: every member i gets the trial best + F (x_r1 - x_r2)
/// with r1 != r2 != i, binomial crossover, repair into the box, and
/// replaces the target if not worse. Trials are drawn before any
/// evaluation, so the result does not depend on evaluation order.
inline Member differential_evolution_step(Population& pop, const Box& box, const BatchObjective& objective, Rng& rng,
                                          const DeSettings& s = {}) {
    const std::size_t n = pop.size();
    const std::size_t d = box.dim();
    const std::size_t b = best_index(pop);
    std::vector<std::vector<double>> trials(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r1, r2;
        do {
            r1 = rng.below(n);
        } while (r1 == i);
        do {
            r2 = rng.below(n);
        } while (r2 == i || r2 == r1);
        const std::size_t j_rand = rng.below(d);
        for (std::size_t j = 0; j < d; ++j) {
            const bool take = j == j_rand || rng.uniform() < s.crossover;
            if (!take) {
                trials[i][j] = pop[i].x[j];
                continue;
            }
            const double base = pop[b].x[j];
            double v = base + s.mutation * (pop[r1].x[j] - pop[r2].x[j]);
            // Out of range: a uniform point between the base and the bound it
            // crossed. Clamping would stack members on the bound.
            if (v < box.lower[j]) v = base + rng.uniform() * (box.lower[j] - base);
            else if (v > box.upper[j]) v = base + rng.uniform() * (box.upper[j] - base);
            trials[i][j] = std::clamp(v, box.lower[j], box.upper[j]);
        }
    }
    const auto fs = objective(trials);
    for (std::size_t i = 0; i < n; ++i) {
        if (fs[i] <= pop[i].f) {
            pop[i].x = std::move(trials[i]);
            pop[i].f = fs[i];
        }
    }
    return pop[best_index(pop)];
}

struct PopulationStats {
    double mean;
    double stddev;
};

inline PopulationStats population_stats(const Population& pop) {
    double mean = 0.0;
    for (const auto& m : pop) mean += m.f;
    mean /= static_cast<double>(pop.size());
    double var = 0.0;
    for (const auto& m : pop) var += (m.f - mean) * (m.f - mean);
    var /= static_cast<double>(pop.size() > 1 ? pop.size() - 1 : 1);
    return {mean, std::sqrt(var)};
}

/// std(f) <= frac * |mean(f)|.
inline bool de_converged(const Population& pop, double stop_std_frac) {
    const auto s = population_stats(pop);
    if (!std::isfinite(s.mean)) return false;
    return s.stddev <= stop_std_frac * std::abs(s.mean);
}

// ---------------------------------------------------------------------------
// Problem definition

inline ControllerParams to_params(std::span<const double> x) { return {x[0], x[1], x[2], x[3]}; }
inline std::vector<double> to_vector(const ControllerParams& p) { return {p.k_p, p.soc_0, p.o_d, p.db_p}; }

struct OptimizerConfig {
    double eps_req = 0.005;
    double beta_conf = 0.001;
    std::int64_t n_c = 10000;
    std::int64_t n_c_prime = 50000;
    std::size_t n_D = 50;
    std::size_t n_Y = 3;
    int n_check_init = 10;
    std::size_t population_size = 60;
    DeSettings de{};
    double stop_std_frac = 5e-4;
    int max_iterations = 1000;
    /// Penalty weight; 0 selects 1e4 x the annual FCR revenue.
    double c_p = 0.0;
    /// Re-check the chance bound when DE converges at an unchecked best.
    bool check_on_convergence = true;
    Box box{{0.0, 0.3, 0.0, 0.0}, {10.0, 0.7, 0.2, 0.4}};
    std::optional<ControllerParams> x_init;
    int max_years = 30;
    int jobs = 1;

    void validate() const {
        if (!(eps_req > 0.0 && eps_req < 1.0)) throw ConfigError("optimizer: eps_req must lie in (0, 1)");
        if (!(beta_conf > 0.0 && beta_conf < 1.0)) throw ConfigError("optimizer: beta must lie in (0, 1)");
        if (n_c < 1 || n_c_prime <= n_c) throw ConfigError("optimizer: need n_c >= 1 and n_c_prime > n_c");
        if (n_D < 1) throw ConfigError("optimizer: n_D must be >= 1");
        if (n_Y < 1) throw ConfigError("optimizer: n_Y must be >= 1");
        if (n_check_init < 1) throw ConfigError("optimizer: n_check_init must be >= 1");
        if (!(stop_std_frac > 0.0)) throw ConfigError("optimizer: stop_std_frac must be positive");
        if (max_iterations < 1) throw ConfigError("optimizer: max_iterations must be >= 1");
        box.validate();
        if (box.dim() != 4) throw ConfigError("optimizer: box must have 4 dimensions (k_p, soc_0, o_d, db_p)");
        if (box.lower[2] < 0.0 || box.upper[2] > 0.2) throw ConfigError("optimizer: o_d bounds must lie in [0, 0.2]");
        if (box.lower[1] <= 0.0 || box.upper[1] >= 1.0) throw ConfigError("optimizer: soc_0 bounds must lie in (0, 1)");
        if (box.lower[0] < 0.0 || box.lower[3] < 0.0) throw ConfigError("optimizer: k_p and db_p must be >= 0");
    }
};

/// The configured box with the SoC set-point range narrowed to the year's
/// penalty bounds; a set-point outside them violates from the first step.
inline Box year_box(const Box& box, const PenaltyBounds& bounds) {
    Box b = box;
    b.lower[1] = std::max(b.lower[1], bounds.soc_min);
    b.upper[1] = std::min(b.upper[1], bounds.soc_max);
    return b;
}

struct Problem {
    BessConfig bess;
    MarketRules rules;
    MarketScenario scenario;
    AgeingCoefficients ageing = AgeingModelSpec{}.build();
    OptimizerConfig opt;
    double c_cell_eur = 300.0 * 1600.0;  // cell replacement cost
    double eol_capacity = 0.8;

    double c_p(int year_k) const {
        return opt.c_p > 0.0 ? opt.c_p : 1e4 * scenario.annual_fcr_revenue(year_k, rules.r_w);
    }
};

struct ObjectiveValue {
    double value = 0.0;
    bool penalty_branch = false;
    double max_penalty = 0.0;
    double fcr_revenue = 0.0;
    double elec_cost = 0.0;
    double cycle_loss = 0.0;
    double calendar_loss = 0.0;
    double degradation_cost = 0.0;
};

/// Year context shared by all objective evaluations of one year.
struct YearContext {
    DegradationState degr;
    CellParams cell;
    PenaltyBounds bounds;
};

/// SAA value over day samples run back to back: annual FCR revenue against
/// annualised electricity cost and degradation valued at
/// loss / (1 - C_eol) x c_cell. With n_days = 365 this is the direct
/// one-year evaluation.
inline ObjectiveValue saa_value(const Problem& pb, const YearContext& ctx, const ControllerParams& x,
                                std::span<const FrequencySample> days) {
    if (days.empty()) throw DomainError("saa_value: no day samples");
    ObjectiveValue v;
    SimOptions opt;
    opt.bounds = ctx.bounds;
    const SimResult sim = simulate(pb.bess, ctx.cell, x, pb.rules, days, opt);
    const int k = ctx.degr.year_k;
    const auto n_days = static_cast<int>(days.size());
    const double scale = 365.0 / n_days;
    v.fcr_revenue = pb.scenario.annual_fcr_revenue(k, pb.rules.r_w);
    v.elec_cost = scale * electricity_cost(sim, pb.scenario, k).total();
    const DegradationEstimate est =
        extrapolate_day_samples(sim.soc, n_days, pb.ageing, pb.bess.t_ref_c, ctx.cell.nominal_capacity_ah, k);
    v.cycle_loss = est.cycle_loss;
    v.calendar_loss = est.calendar_loss;
    v.degradation_cost = est.capacity_loss() / (1.0 - pb.eol_capacity) * pb.c_cell_eur;
    v.value = -v.fcr_revenue + v.elec_cost + v.degradation_cost;
    return v;
}

/// Largest penalty of x over the penalty set.
inline double max_penalty(const Problem& pb, const YearContext& ctx, const ControllerParams& x,
                          std::span<const FrequencySample> P) {
    double max_p = 0.0;
    for (const auto& s : P) {
        try {
            max_p = std::max(max_p, sample_penalty(pb.bess, ctx.cell, x, pb.rules, s, ctx.bounds));
        } catch (const std::exception& e) {
            throw std::runtime_error("penalty sample " + std::to_string(s.id) + ": " + e.what());
        }
    }
    return max_p;
}

/// g(x, D, P): the SAA value when no sample in P has a penalty, otherwise
/// c_p times the largest penalty in P.
inline ObjectiveValue objective(const Problem& pb, const YearContext& ctx, const ControllerParams& x,
                                std::span<const FrequencySample> D, std::span<const FrequencySample> P) {
    const double max_p = max_penalty(pb, ctx, x, P);
    if (max_p > 0.0) {
        ObjectiveValue v;
        v.penalty_branch = true;
        v.max_penalty = max_p;
        v.value = pb.c_p(ctx.degr.year_k) * max_p;
        return v;
    }
    return saa_value(pb, ctx, x, D);
}

/// Penalties of x on each sample (parallel over samples).
inline std::vector<double> sample_penalties(const Problem& pb, const YearContext& ctx, const ControllerParams& x,
                                            std::span<const FrequencySample> samples) {
    std::vector<double> p(samples.size());
    parallel_for(samples.size(), pb.opt.jobs, [&](std::size_t i) {
        p[i] = sample_penalty(pb.bess, ctx.cell, x, pb.rules, samples[i], ctx.bounds);
    });
    return p;
}

struct PenaltyCheck {
    std::int64_t m = 0;
    double bound = 0.0;
    bool pass = true;
    std::optional<FrequencySample> added;
};

/// Draws n_c samples, counts violations and, if the bound exceeds eps_req,
/// returns the sample with the (m_max + 1)-th largest penalty: sorting
/// ascending by (penalty, sample id, draw order), position n_c - m_max.
inline PenaltyCheck grow_penalty_set(const Problem& pb, const YearContext& ctx, const ControllerParams& x,
                                     const SamplePool& pool, std::int64_t m_max, Rng& rng) {
    const auto n_c = static_cast<std::size_t>(pb.opt.n_c);
    const auto samples = draw_day_samples(pool, n_c, rng);
    const auto p = sample_penalties(pb, ctx, x, samples);
    PenaltyCheck out;
    out.m = std::count_if(p.begin(), p.end(), [](double v) { return v > 0.0; });
    out.bound = chance_upper_bound(out.m, pb.opt.n_c, pb.opt.beta_conf);
    out.pass = out.bound <= pb.opt.eps_req;
    if (!out.pass) {
        std::vector<std::size_t> order(n_c);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (p[a] != p[b]) return p[a] < p[b];
            return samples[a].id < samples[b].id;
        });
        const auto j_star = static_cast<std::size_t>(pb.opt.n_c - m_max);  // 1-based
        out.added = samples[order[j_star - 1]];
    }
    return out;
}

/// When to run the chance-constraint check: every n_check generations, with
/// n_check reset to its initial value when the penalty set grows and
/// increased by half (rounded down) after a passing check.
class CheckSchedule {
public:
    explicit CheckSchedule(int n_check_init) : init_(n_check_init), interval_(n_check_init) {}

    /// Call once per generation; true when a check is due.
    bool tick(bool converged, bool check_on_convergence) {
        ++since_;
        return since_ == interval_ || (converged && check_on_convergence);
    }
    void passed() {
        since_ = 0;
        interval_ += interval_ / 2;
    }
    void grew() {
        since_ = 0;
        interval_ = init_;
    }
    int interval() const { return interval_; }

private:
    int init_;
    int interval_;
    int since_ = 0;
};

struct LogRow {
    int year_k;
    int iteration;
    double best;
    double mean;
    double stddev;
    std::size_t penalty_set_size;
    std::int64_t check_m;  // -1 when no check ran
};

struct YearResult {
    int year_k = 0;
    bool feasible = true;
    std::string note;
    ControllerParams x_hat{};
    double objective = 0.0;
    bool penalty_branch = false;
    PenaltyBounds bounds{};
    double eps_k = 1.0;
    std::int64_t m_prime = 0;
    double capacity_before = 1.0;
    double capacity_after = 1.0;
    double r0_after = 0.0;
    double r1_after = 0.0;
    double cycle_loss = 0.0;
    double calendar_loss = 0.0;
    double res_growth = 0.0;
    double expected_elec_cost = 0.0;
    double expected_degr_cost = 0.0;
    double fcr_revenue = 0.0;
    int iterations = 0;
    std::size_t penalty_set_size = 0;
    std::vector<LogRow> log;
};

struct SampleSets {
    std::vector<FrequencySample> D;
    std::vector<FrequencySample> P;
    std::vector<std::vector<FrequencySample>> Y;

    static SampleSets draw(const SamplePool& pool, const OptimizerConfig& cfg, Rng& rng) {
        SampleSets s;
        s.D = draw_day_samples(pool, cfg.n_D, rng);
        for (std::size_t y = 0; y < cfg.n_Y; ++y) s.Y.push_back(pool.draw_year(rng));
        return s;
    }
};

/// Mean one-year losses and electricity cost of x over the year samples.
struct YearEvaluation {
    double cycle_loss = 0.0;
    double calendar_loss = 0.0;
    double res_growth = 0.0;
    double elec_cost = 0.0;
};

inline YearEvaluation evaluate_years(const Problem& pb, const YearContext& ctx, const ControllerParams& x,
                                     const std::vector<std::vector<FrequencySample>>& years) {
    std::vector<YearEvaluation> per(years.size());
    parallel_for(years.size(), pb.opt.jobs, [&](std::size_t y) {
        SimOptions opt;
        opt.bounds = ctx.bounds;
        const SimResult sim = simulate(pb.bess, ctx.cell, x, pb.rules, years[y], opt);
        const auto n_days = static_cast<int>(std::lround(static_cast<double>(sim.n_steps) * pb.bess.dt_s / kDaySeconds));
        const DegradationEstimate est = extrapolate_day_samples(sim.soc, std::max(n_days, 1), pb.ageing,
                                                                pb.bess.t_ref_c, ctx.cell.nominal_capacity_ah,
                                                                ctx.degr.year_k);
        per[y] = {est.cycle_loss, est.calendar_loss, est.resistance_growth(),
                  electricity_cost(sim, pb.scenario, ctx.degr.year_k).total() * 365.0 / std::max(n_days, 1)};
    });
    YearEvaluation mean;
    for (const auto& e : per) {
        mean.cycle_loss += e.cycle_loss / static_cast<double>(per.size());
        mean.calendar_loss += e.calendar_loss / static_cast<double>(per.size());
        mean.res_growth += e.res_growth / static_cast<double>(per.size());
        mean.elec_cost += e.elec_cost / static_cast<double>(per.size());
    }
    return mean;
}

/// One pass of the outer loop body: DE with penalty-set growth until the
/// population converges, the bound on n_c' fresh samples, and the ageing
/// over the year samples.
inline YearResult optimize_year(const Problem& pb, const DegradationState& degr, SampleSets& sets,
                                const SamplePool& pool, Rng& rng) {
    pb.opt.validate();
    YearResult yr;
    yr.year_k = degr.year_k;
    yr.capacity_before = degr.capacity;
    yr.fcr_revenue = pb.scenario.annual_fcr_revenue(degr.year_k, pb.rules.r_w);

    YearContext ctx{degr, degr.apply(pb.bess.cell), {}};
    try {
        const auto dht = doppelhoeckertest(pb.bess, degr, pb.rules.r_w);
        ctx.bounds = {dht.soc_min_30min, dht.soc_max_30min};
    } catch (const PrequalificationError& e) {
        yr.feasible = false;
        yr.note = e.what();
        yr.capacity_after = degr.capacity;
        return yr;
    }
    yr.bounds = ctx.bounds;
    const std::int64_t m_max = max_violations(pb.opt.n_c, pb.opt.beta_conf, pb.opt.eps_req);
    if (m_max < 0) throw ConfigError("optimizer: n_c too small to certify eps_req at this confidence");

    sets.P.clear();
    const BatchObjective batch = [&](const std::vector<std::vector<double>>& xs) {
        std::vector<double> fs(xs.size());
        parallel_for(xs.size(), pb.opt.jobs,
                     [&](std::size_t i) { fs[i] = objective(pb, ctx, to_params(xs[i]), sets.D, sets.P).value; });
        return fs;
    };

    std::optional<std::vector<double>> seed;
    if (pb.opt.x_init) seed = to_vector(*pb.opt.x_init);
    const Box box = year_box(pb.opt.box, ctx.bounds);
    if (!(box.lower[1] < box.upper[1])) {
        yr.feasible = false;
        yr.note = "SoC set-point range does not overlap the penalty bounds";
        yr.capacity_after = degr.capacity;
        return yr;
    }
    Population pop = init_population(box, pb.opt.population_size, rng, seed);
    evaluate_population(pop, batch);

    CheckSchedule schedule(pb.opt.n_check_init);
    int i = 0;
    while (true) {
        ++i;
        const Member best = differential_evolution_step(pop, box, batch, rng, pb.opt.de);
        // A population still paying the penalty has not settled, however flat
        // the penalty term makes its spread look.
        const bool converged = de_converged(pop, pb.opt.stop_std_frac) &&
                               max_penalty(pb, ctx, to_params(best.x), sets.P) == 0.0;
        const bool due = schedule.tick(converged, pb.opt.check_on_convergence);
        std::int64_t logged_m = -1;
        bool grew = false;
        bool stalled = false;
        if (due) {
            const PenaltyCheck check = grow_penalty_set(pb, ctx, to_params(best.x), pool, m_max, rng);
            logged_m = check.m;
            if (!check.pass) {
                sets.P.push_back(*check.added);
                schedule.grew();
                evaluate_population(pop, batch);
                grew = true;
                // Every member pays the same penalty: further samples cannot
                // rank the population any more.
                const auto st = population_stats(pop);
                const auto& lead = pop[best_index(pop)].x;
                stalled = st.stddev <= 1e-12 * std::abs(st.mean) && max_penalty(pb, ctx, to_params(lead), sets.P) > 0.0;
            } else {
                schedule.passed();
            }
        }
        const auto stats = population_stats(pop);
        yr.log.push_back({degr.year_k, i, pop[best_index(pop)].f, stats.mean, stats.stddev, sets.P.size(), logged_m});
        if (converged && !grew) break;
        if (stalled) {
            yr.note = "population stalled on a penalty plateau";
            break;
        }
        if (i >= pb.opt.max_iterations) {
            yr.note = "iteration limit reached";
            break;
        }
    }
    yr.iterations = i;
    yr.penalty_set_size = sets.P.size();
    const Member& best = pop[best_index(pop)];
    yr.x_hat = to_params(best.x);
    const ObjectiveValue ov = objective(pb, ctx, yr.x_hat, sets.D, sets.P);
    yr.objective = ov.value;
    yr.penalty_branch = ov.penalty_branch;

    const auto wide = draw_day_samples(pool, static_cast<std::size_t>(pb.opt.n_c_prime), rng);
    const auto p = sample_penalties(pb, ctx, yr.x_hat, wide);
    yr.m_prime = std::count_if(p.begin(), p.end(), [](double v) { return v > 0.0; });
    yr.eps_k = chance_upper_bound(yr.m_prime, pb.opt.n_c_prime, pb.opt.beta_conf);
    yr.feasible = yr.eps_k <= pb.opt.eps_req;
    if (!yr.feasible && yr.note.empty()) yr.note = "violation bound above eps_req";

    if (sets.Y.empty()) {
        for (std::size_t y = 0; y < pb.opt.n_Y; ++y) sets.Y.push_back(pool.draw_year(rng));
    }
    const YearEvaluation ye = evaluate_years(pb, ctx, yr.x_hat, sets.Y);
    yr.cycle_loss = ye.cycle_loss;
    yr.calendar_loss = ye.calendar_loss;
    yr.res_growth = ye.res_growth;
    yr.expected_elec_cost = ye.elec_cost;
    yr.expected_degr_cost = (ye.cycle_loss + ye.calendar_loss) / (1.0 - pb.eol_capacity) * pb.c_cell_eur;
    const DegradationState next = advance_year(degr, ye.cycle_loss, ye.calendar_loss, ye.res_growth, pb.bess.cell);
    yr.capacity_after = next.capacity;
    yr.r0_after = next.r0_ohm;
    yr.r1_after = next.r1_ohm;
    return yr;
}

enum class Termination { degraded, infeasible, year_limit };

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::degraded: return "degraded";
        case Termination::infeasible: return "infeasible";
        case Termination::year_limit: return "year_limit";
    }
    return "?";
}

struct LifetimeRun {
    std::vector<YearResult> years;
    Termination termination = Termination::year_limit;
};

/// Outer loop: optimise year after year while C^k >= C_eol and the
/// previous year's bound met eps_req. D and Y stay fixed for the run.
inline LifetimeRun run_lifetime(const Problem& pb, const SamplePool& pool, std::uint64_t seed,
                                const std::function<void(const YearResult&)>& on_year = {}) {
    pb.opt.validate();
    pb.rules.validate();
    Rng rng(seed);
    SampleSets sets = SampleSets::draw(pool, pb.opt, rng);
    DegradationState degr = DegradationState::fresh(pb.bess.cell);
    LifetimeRun run;
    double eps_prev = 0.0;
    while (degr.capacity >= pb.eol_capacity && eps_prev <= pb.opt.eps_req) {
        if (static_cast<int>(run.years.size()) >= pb.opt.max_years) {
            run.termination = Termination::year_limit;
            return run;
        }
        YearResult yr = optimize_year(pb, degr, sets, pool, rng);
        if (on_year) on_year(yr);
        run.years.push_back(yr);
        if (!yr.feasible) {
            run.termination = Termination::infeasible;
            return run;
        }
        eps_prev = yr.eps_k;
        degr.year_k += 1;
        degr.capacity = yr.capacity_after;
        degr.r0_ohm = yr.r0_after;
        degr.r1_ohm = yr.r1_after;
    }
    run.termination = degr.capacity < pb.eol_capacity ? Termination::degraded : Termination::infeasible;
    return run;
}

/// Per-year cash-flow inputs for the discounted revenue.
inline std::vector<YearOutcome> to_outcomes(std::span<const YearResult> years) {
    std::vector<YearOutcome> out;
    for (std::size_t j = 0; j < years.size(); ++j) {
        const auto& y = years[j];
        const double eps_next = j + 1 < years.size() ? years[j + 1].eps_k : y.eps_k;
        out.push_back({y.year_k, y.fcr_revenue, y.expected_elec_cost, y.capacity_before, y.capacity_after, y.eps_k,
                       eps_next});
    }
    return out;
}

inline LifetimeResult lifetime_revenue(std::span<const YearResult> years, const Problem& pb, double cost_bess) {
    const auto outcomes = to_outcomes(years);
    return lifetime_revenue(outcomes, pb.scenario.discount_rate, pb.opt.eps_req, cost_bess);
}

// ---------------------------------------------------------------------------
// SAA optimality gap

/// One-sided 100(1 - beta)% upper confidence bound on the SAA gap:
/// mean(G) + s(G) t_{1-beta, n_g-1} / sqrt(n_g).
inline double saa_gap_bound(std::span<const double> gaps, double beta) {
    const auto n = gaps.size();
    if (n < 2) throw DomainError("saa_gap_bound: need at least two batches");
    const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double g : gaps) var += (g - mean) * (g - mean);
    const double s = std::sqrt(var / static_cast<double>(n - 1));
    if (s == 0.0) return mean;
    const boost::math::students_t dist(static_cast<double>(n - 1));
    const double t = boost::math::quantile(boost::math::complement(dist, beta));
    return mean + s * t / std::sqrt(static_cast<double>(n));
}

struct GapEstimate {
    std::vector<double> gaps;
    double bound = 0.0;
};

/// G_i = mean_Y g(x_hat) - min_x mean_Y g(x) over n_g batches of n_Y year
/// samples. The inner minimum is a DE run with `inner_iterations`
/// generations seeded with x_hat, so G_i >= 0; heuristic suboptimality of
/// the inner run makes the estimate conservative.
inline GapEstimate estimate_saa_gap(const Problem& pb, const YearContext& ctx, const ControllerParams& x_hat,
                                    const SamplePool& pool, std::size_t n_g, std::size_t n_Y, int inner_iterations,
                                    double beta, Rng& rng) {
    GapEstimate out;
    for (std::size_t g = 0; g < n_g; ++g) {
        std::vector<std::vector<FrequencySample>> batch;
        for (std::size_t y = 0; y < n_Y; ++y) batch.push_back(pool.draw_year(rng));
        auto batch_value = [&](const ControllerParams& x) {
            double acc = 0.0;
            for (const auto& year : batch) acc += saa_value(pb, ctx, x, year).value;
            return acc / static_cast<double>(batch.size());
        };
        const BatchObjective obj = [&](const std::vector<std::vector<double>>& xs) {
            std::vector<double> fs(xs.size());
            parallel_for(xs.size(), pb.opt.jobs, [&](std::size_t i) { fs[i] = batch_value(to_params(xs[i])); });
            return fs;
        };
        const Box box = year_box(pb.opt.box, ctx.bounds);
        Population pop = init_population(box, pb.opt.population_size, rng, to_vector(x_hat));
        evaluate_population(pop, obj);
        const double at_hat = pop[0].f;
        for (int it = 0; it < inner_iterations && !de_converged(pop, pb.opt.stop_std_frac); ++it)
            differential_evolution_step(pop, box, obj, rng, pb.opt.de);
        out.gaps.push_back(at_hat - pop[best_index(pop)].f);
    }
    out.bound = saa_gap_bound(out.gaps, beta);
    return out;
}

}  // namespace fcrbess
