#pragma once

// FCR price paths, German electricity cost (intraday and imbalance
// settlement plus levies), discounted lifetime revenue, NPV and payback.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcrbess/csv.hpp"
#include "fcrbess/errors.hpp"
#include "fcrbess/simulation.hpp"

namespace fcrbess {

/// Regularly spaced price series in EUR/MWh.
class PriceSeries {
public:
    PriceSeries() = default;
    PriceSeries(std::int64_t start, std::int64_t step_s, std::vector<double> eur_per_mwh)
        : start_(start), step_(step_s), values_(std::move(eur_per_mwh)) {
        if (step_ <= 0) throw ConfigError("price series: step must be positive");
    }

    static PriceSeries constant(double eur_per_mwh) {
        PriceSeries p;
        p.constant_ = eur_per_mwh;
        return p;
    }

    double at(std::int64_t t) const {
        if (constant_) return *constant_;
        if (values_.empty() || t < start_) missing(t);
        const auto idx = static_cast<std::size_t>((t - start_) / step_);
        if (idx >= values_.size()) missing(t);
        return values_[idx];
    }

    bool is_constant() const { return constant_.has_value(); }

private:
    [[noreturn]] static void missing(std::int64_t t) {
        throw DataError("no price for " + csv::format_timestamp(t));
    }

    std::int64_t start_ = 0;
    std::int64_t step_ = 900;
    std::vector<double> values_;
    std::optional<double> constant_;
};

/// CSV with columns (timestamp, price). Spacing is taken from the first two
/// rows and must be uniform.
inline PriceSeries load_price_csv(const std::string& path) {
    const auto table = csv::read_file(path);
    if (table.header.size() < 2) throw DataError(path + ": need (timestamp, price) columns");
    if (table.rows.empty()) throw DataError(path + ": no prices");
    std::vector<std::int64_t> ts;
    std::vector<double> values;
    for (const auto& row : table.rows) {
        const std::string where = path + ":" + std::to_string(row.line);
        ts.push_back(csv::parse_timestamp(row.fields[0], where));
        values.push_back(csv::to_double(row.fields[1], where));
    }
    const std::int64_t step = ts.size() > 1 ? ts[1] - ts[0] : 900;
    if (step <= 0) throw DataError(path + ": timestamps not increasing");
    for (std::size_t i = 1; i < ts.size(); ++i) {
        if (ts[i] - ts[i - 1] != step)
            throw DataError(path + ":" + std::to_string(table.rows[i].line) + ": irregular spacing at " +
                            csv::format_timestamp(ts[i]));
    }
    return PriceSeries(ts.front(), step, std::move(values));
}

enum class LevyBase { consumption, losses, exempt };

struct Levy {
    std::string name;
    double rate_ct_per_kwh;
    LevyBase base;
};

/// Levies and charges for a storage system in Germany. The concession fee
/// ranges 0.11 to 2.39 ct/kWh depending on the municipality.
inline std::vector<Levy> german_levies(double concession_ct_per_kwh = 0.11) {
    return {
        {"eeg", 6.88, LevyBase::losses},
        {"kwk", 0.4438, LevyBase::losses},
        {"par19", 0.370, LevyBase::consumption},
        {"concession", concession_ct_per_kwh, LevyBase::consumption},
        {"offshore", 0.037, LevyBase::consumption},
        {"interruptible_load", 0.011, LevyBase::consumption},
        {"network_charges", 0.0, LevyBase::exempt},
        {"electricity_tax", 2.05, LevyBase::exempt},
    };
}

struct MarketScenario {
    std::string name = "moderate";
    int start_year = 2018;
    std::vector<double> fcr_price_eur_per_mw_week;  // index = operational year
    PriceSeries intraday = PriceSeries::constant(35.0);
    PriceSeries imbalance = PriceSeries::constant(35.0);
    std::vector<Levy> levies = german_levies();
    double inflation = 0.017;
    double discount_rate = 0.017;

    double fcr_price(int year_k) const {
        if (fcr_price_eur_per_mw_week.empty()) throw ConfigError("scenario: empty FCR price path");
        const auto i = std::min<std::size_t>(static_cast<std::size_t>(std::max(year_k, 0)),
                                             fcr_price_eur_per_mw_week.size() - 1);
        return fcr_price_eur_per_mw_week[i];
    }

    /// Annual FCR revenue for capacity r.
    double annual_fcr_revenue(int year_k, double r_w) const { return fcr_price(year_k) * 365.0 / 7.0 * r_w / 1e6; }
};

/// Exponential decline from `from` (in the reference year 2017) to `to` in
/// 2035, sampled per operational year starting at `start_year`.
inline std::vector<double> exponential_price_path(double from, double to, int start_year, int n_years) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n_years));
    for (int k = 0; k < n_years; ++k) {
        const double x = (start_year + k - 2017) / (2035.0 - 2017.0);
        out.push_back(from * std::pow(to / from, x));
    }
    return out;
}

inline MarketScenario price_scenario(const std::string& name, int start_year = 2018, int n_years = 30) {
    MarketScenario s;
    s.name = name;
    s.start_year = start_year;
    if (name == "moderate") s.fcr_price_eur_per_mw_week = exponential_price_path(2500.0, 1630.0, start_year, n_years);
    else if (name == "low") s.fcr_price_eur_per_mw_week = exponential_price_path(2500.0, 1000.0, start_year, n_years);
    else throw ConfigError("unknown price scenario '" + name + "' (moderate, low, or give a custom path)");
    return s;
}

struct ElectricityCost {
    double intraday = 0.0;
    double imbalance = 0.0;
    std::vector<std::pair<std::string, double>> levies;

    double levy_total() const {
        double s = 0.0;
        for (const auto& [n, v] : levies) s += v;
        return s;
    }
    double total() const { return intraday + imbalance + levy_total(); }
};

/// Cost of the grid energy in a simulation, in year_k money. Recharge
/// blocks settle at the intraday price, the rest of each block at the
/// imbalance price. Loss-based levies use grid-in minus grid-out (not below
/// zero).
inline ElectricityCost electricity_cost(const SimResult& sim, const MarketScenario& scenario, int year_k = 0) {
    ElectricityCost c;
    double consumed = 0.0;
    for (const auto& b : sim.blocks) {
        if (b.recharge_wh != 0.0) c.intraday += b.recharge_wh * scenario.intraday.at(b.start) / 1e6;
        if (b.residual_wh != 0.0) c.imbalance += b.residual_wh * scenario.imbalance.at(b.start) / 1e6;
        consumed += b.consumed_wh;
    }
    const double losses = std::max(0.0, sim.grid_in_wh - sim.grid_out_wh);
    const double infl = std::pow(1.0 + scenario.inflation, year_k);
    c.intraday *= infl;
    c.imbalance *= infl;
    for (const auto& l : scenario.levies) {
        double base = 0.0;
        if (l.base == LevyBase::consumption) base = consumed;
        else if (l.base == LevyBase::losses) base = losses;
        c.levies.emplace_back(l.name, base / 1000.0 * l.rate_ct_per_kwh / 100.0 * infl);
    }
    return c;
}

/// Fraction of operational year k that counts toward revenue. Each
/// criterion contributes 1 while met at the end of the year, 0 if already
/// violated at its start, and the linear crossing point otherwise.
inline double lifetime_factor(double c_start, double c_end, double eps_start, double eps_end, double eps_req,
                              double c_eol = 0.8) {
    double fc = 1.0;
    if (c_end < c_eol) fc = c_start < c_eol ? 0.0 : (c_start - c_eol) / (c_start - c_end);
    double fe = 1.0;
    if (eps_end > eps_req) fe = eps_start > eps_req ? 0.0 : (eps_req - eps_start) / (eps_end - eps_start);
    return std::max(std::min({fc, fe, 1.0}), 0.0);
}

struct YearOutcome {
    int year_k = 0;
    double fcr_revenue = 0.0;
    double elec_cost = 0.0;
    double capacity_start = 1.0;
    double capacity_end = 1.0;
    double eps_start = 0.0;
    double eps_end = 0.0;  // epsilon of the following year, or of this year if last
};

struct LifetimeYear {
    int year_k;
    double fcr_revenue;
    double elec_cost;
    double factor;
    double discounted_net;
    double capacity_end;
    double eps;
};

struct LifetimeResult {
    std::vector<LifetimeYear> years;
    int k_max = 0;
    double lifetime_years = 0.0;
    double discounted_net_revenue = 0.0;
    double cost_bess = 0.0;
    double npv = 0.0;
    std::optional<double> payback_years;
};

/// Discounted net revenue over the lifetime, NPV and payback period.
inline LifetimeResult lifetime_revenue(std::span<const YearOutcome> years, double discount_rate, double eps_req,
                                       double cost_bess) {
    LifetimeResult out;
    out.cost_bess = cost_bess;
    double cum = 0.0;
    for (const auto& y : years) {
        const double f = lifetime_factor(y.capacity_start, y.capacity_end, y.eps_start, y.eps_end, eps_req);
        const double net = (y.fcr_revenue - y.elec_cost) / std::pow(1.0 + discount_rate, y.year_k + 1) * f;
        if (!out.payback_years && net > 0.0 && cum + net >= cost_bess) {
            out.payback_years = y.year_k + (cost_bess - cum) / net * f;
        }
        cum += net;
        if (f > 0.0) ++out.k_max;
        out.lifetime_years += f;
        out.years.push_back({y.year_k, y.fcr_revenue, y.elec_cost, f, net, y.capacity_end, y.eps_start});
    }
    if (cost_bess <= 0.0) out.payback_years = 0.0;
    out.discounted_net_revenue = cum;
    out.npv = cum - cost_bess;
    return out;
}

}  // namespace fcrbess
