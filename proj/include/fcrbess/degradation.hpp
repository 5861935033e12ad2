#pragma once

// Semi-empirical calendar and cycle ageing:
//
//   C = 1 - alpha_cap(SoC_cal, T) t^0.75 - beta_cap(SoC_cyc, DoD) sqrt(Q)
//   R = 1 + alpha_res(SoC_cal, T) t^0.75 + beta_res(SoC_cyc, DoD) Q
//
// t in days, Q in Ah of cell throughput. Cycles come from rainflow counting
// of the SoC trace.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fcrbess/cell_model.hpp"
#include "fcrbess/csv.hpp"

namespace fcrbess {

enum class CycleWeight { half, full };

struct CycleRecord {
    double soc_av;  // midpoint of the two extrema
    double dod;     // percent
    double q_cum;   // Ah, cumulative after this cycle
    CycleWeight weight;
};

/// Turning points of a trace. Endpoints are kept; plateaus collapse to
/// their first sample.
inline std::vector<double> extract_extrema(std::span<const double> trace) {
    std::vector<double> dedup;
    dedup.reserve(trace.size());
    for (double v : trace) {
        if (dedup.empty() || v != dedup.back()) dedup.push_back(v);
    }
    if (dedup.size() < 2) return {};
    std::vector<double> out;
    out.push_back(dedup.front());
    for (std::size_t i = 1; i + 1 < dedup.size(); ++i) {
        const double prev = dedup[i - 1], cur = dedup[i], next = dedup[i + 1];
        if ((cur > prev && cur > next) || (cur < prev && cur < next)) out.push_back(cur);
    }
    out.push_back(dedup.back());
    return out;
}

/// Rainflow counting on a SoC trace. `capacity_ah` converts SoC swings into
/// throughput: a half cycle adds DoD * C / 2, a full cycle DoD * C.
inline std::vector<CycleRecord> rainflow(std::span<const double> soc_trace, double capacity_ah) {
    std::vector<double> nu = extract_extrema(soc_trace);
    std::vector<CycleRecord> out;
    if (nu.size() < 2) return out;

    double q = 0.0;
    auto emit = [&](double a, double b, CycleWeight w) {
        const double swing = std::abs(a - b);
        q += w == CycleWeight::full ? swing * capacity_ah : swing * capacity_ah / 2.0;
        out.push_back({(a + b) / 2.0, swing * 100.0, q, w});
    };

    // 0-based translation: s is the start point, i the newest point of the
    // three under inspection.
    std::size_t s = 0;
    std::size_t i = 2;
    while (i < nu.size()) {
        while (i < s + 2) ++i;
        if (i >= nu.size()) break;
        const double d1 = std::abs(nu[i - 2] - nu[i - 1]);
        const double d2 = std::abs(nu[i - 1] - nu[i]);
        if (d2 >= d1) {
            if (i - 2 == s) {
                emit(nu[i - 2], nu[i - 1], CycleWeight::half);
                ++s;  // start point discarded
            } else {
                emit(nu[i - 2], nu[i - 1], CycleWeight::full);
                nu.erase(nu.begin() + static_cast<std::ptrdiff_t>(i - 2), nu.begin() + static_cast<std::ptrdiff_t>(i));
                i -= 2;
            }
        } else {
            ++i;
        }
    }
    for (std::size_t k = s + 1; k < nu.size(); ++k) emit(nu[k - 1], nu[k], CycleWeight::half);
    return out;
}

inline void write_cycles_csv(std::ostream& os, std::span<const CycleRecord> records) {
    os << "soc_av,dod,q_cum,weight\n";
    for (const auto& r : records) {
        os << csv::format(r.soc_av) << ',' << csv::format(r.dod) << ',' << csv::format(r.q_cum) << ','
           << (r.weight == CycleWeight::full ? "full" : "half") << '\n';
    }
}

/// Ageing factor functions. Calendar factors take (SoC_av, T in degC),
/// cycle factors take (SoC_av, DoD in percent). All must be >= 0.
struct AgeingCoefficients {
    std::function<double(double, double)> alpha_cap;
    std::function<double(double, double)> alpha_res;
    std::function<double(double, double)> beta_cap;
    std::function<double(double, double)> beta_res;

    static AgeingCoefficients constant(double a_cap, double a_res, double b_cap, double b_res) {
        return {[=](double, double) { return a_cap; }, [=](double, double) { return a_res; },
                [=](double, double) { return b_cap; }, [=](double, double) { return b_res; }};
    }
};

inline double polyval(std::span<const double> coeffs, double x) {
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
    return acc;
}

/// Configurable functional form: calendar factors are a polynomial in SoC
/// scaled by an Arrhenius term in temperature; cycle factors are a
/// polynomial in SoC plus a polynomial in DoD (as a fraction). Coefficient
/// arrays are in ascending powers. Negative evaluations clamp to zero.
struct AgeingModelSpec {
    struct Calendar {
        std::vector<double> soc_poly;
        double activation_temperature_k = 6000.0;  // E_a / R
        double reference_temperature_c = 25.0;
    };
    struct Cycle {
        std::vector<double> soc_poly;
        std::vector<double> dod_poly;
    };
    Calendar alpha_cap{{3.0e-4, 2.0e-4}};
    Calendar alpha_res{{3.0e-4, 2.0e-4}};
    Cycle beta_cap{{1.0e-4, -1.0e-4, 1.5e-4}, {0.0, 2.0e-3}};
    Cycle beta_res{{5.0e-6}, {0.0, 5.0e-5}};

    AgeingCoefficients build() const {
        auto calendar = [](Calendar c) {
            return [c](double soc, double temp_c) {
                const double tk = temp_c + 273.15;
                const double tref = c.reference_temperature_c + 273.15;
                const double arrhenius = std::exp(-c.activation_temperature_k * (1.0 / tk - 1.0 / tref));
                return std::max(0.0, polyval(c.soc_poly, soc)) * arrhenius;
            };
        };
        auto cycle = [](Cycle c) {
            return [c](double soc, double dod_percent) {
                return std::max(0.0, polyval(c.soc_poly, soc) + polyval(c.dod_poly, dod_percent / 100.0));
            };
        };
        return {calendar(alpha_cap), calendar(alpha_res), cycle(beta_cap), cycle(beta_res)};
    }
};

/// Capacity fade from a cycle list, sum of beta_cap * (sqrt(s Q_i) - sqrt(s Q_{i-1})).
/// `throughput_scale` s extrapolates a partial-year trace to a full year.
inline double cycle_capacity_loss(std::span<const CycleRecord> records, const AgeingCoefficients& coeffs,
                                  double throughput_scale = 1.0) {
    double loss = 0.0;
    double prev = 0.0;
    for (const auto& r : records) {
        const double q = throughput_scale * r.q_cum;
        loss += coeffs.beta_cap(r.soc_av, r.dod) * (std::sqrt(q) - std::sqrt(prev));
        prev = q;
    }
    return loss;
}

/// Relative resistance growth from cycling (linear in throughput).
inline double cycle_resistance_growth(std::span<const CycleRecord> records, const AgeingCoefficients& coeffs,
                                      double throughput_scale = 1.0) {
    double growth = 0.0;
    double prev = 0.0;
    for (const auto& r : records) {
        const double q = throughput_scale * r.q_cum;
        growth += coeffs.beta_res(r.soc_av, r.dod) * (q - prev);
        prev = q;
    }
    return growth;
}

/// Increment of the t^0.75 law over operational year k (t in days).
inline double calendar_time_increment(int year_k) {
    return std::pow(365.0 * (year_k + 1), 0.75) - std::pow(365.0 * year_k, 0.75);
}

inline double calendar_loss(double soc_av_cal, double temperature_c, int year_k, const AgeingCoefficients& coeffs) {
    return coeffs.alpha_cap(soc_av_cal, temperature_c) * calendar_time_increment(year_k);
}

inline double calendar_resistance_growth(double soc_av_cal, double temperature_c, int year_k,
                                         const AgeingCoefficients& coeffs) {
    return coeffs.alpha_res(soc_av_cal, temperature_c) * calendar_time_increment(year_k);
}

struct DegradationEstimate {
    double cycle_loss = 0.0;
    double calendar_loss = 0.0;
    double cycle_res_growth = 0.0;
    double calendar_res_growth = 0.0;
    std::size_t n_cycles = 0;

    double capacity_loss() const { return cycle_loss + calendar_loss; }
    double resistance_growth() const { return cycle_res_growth + calendar_res_growth; }
};

/// One-year degradation estimated from n_days concatenated day samples:
/// throughput scaled by 365 / n_days, calendar SoC = mean of the trace.
/// With n_days = 365 this is the direct one-year computation.
inline DegradationEstimate extrapolate_day_samples(std::span<const double> soc_trace, int n_days,
                                                   const AgeingCoefficients& coeffs, double temperature_c,
                                                   double capacity_ah, int year_k) {
    if (n_days < 1) throw DomainError("extrapolate_day_samples: n_days must be >= 1");
    const auto records = rainflow(soc_trace, capacity_ah);
    const double scale = 365.0 / n_days;
    DegradationEstimate est;
    est.n_cycles = records.size();
    est.cycle_loss = cycle_capacity_loss(records, coeffs, scale);
    est.cycle_res_growth = cycle_resistance_growth(records, coeffs, scale);
    const double soc_mean =
        soc_trace.empty() ? 0.5 : std::accumulate(soc_trace.begin(), soc_trace.end(), 0.0) / soc_trace.size();
    est.calendar_loss = calendar_loss(soc_mean, temperature_c, year_k, coeffs);
    est.calendar_res_growth = calendar_resistance_growth(soc_mean, temperature_c, year_k, coeffs);
    return est;
}

/// Remaining capacity and resistances at the start of operational year k.
struct DegradationState {
    int year_k = 0;
    double capacity = 1.0;  // fraction of initial
    double r0_ohm = 0.0;
    double r1_ohm = 0.0;

    static DegradationState fresh(const CellParams& cell) { return {0, 1.0, cell.r0_ohm, cell.r1_ohm}; }

    /// Cell parameters with the degraded capacity and resistances applied.
    CellParams apply(const CellParams& initial) const {
        CellParams p = initial;
        p.nominal_capacity_ah = initial.nominal_capacity_ah * capacity;
        p.r0_ohm = r0_ohm;
        p.r1_ohm = r1_ohm;
        return p;
    }
};

/// Moves to year k+1. Resistance growth is relative to the initial values.
inline DegradationState advance_year(const DegradationState& state, double cycle_loss, double calendar_loss,
                                     double res_growth, const CellParams& initial) {
    if (cycle_loss < 0.0 || calendar_loss < 0.0 || res_growth < 0.0)
        throw DomainError("advance_year: losses must be non-negative");
    DegradationState next = state;
    next.year_k = state.year_k + 1;
    next.capacity = state.capacity - cycle_loss - calendar_loss;
    next.r0_ohm = state.r0_ohm + res_growth * initial.r0_ohm;
    next.r1_ohm = state.r1_ohm + res_growth * initial.r1_ohm;
    return next;
}

}  // namespace fcrbess
