#pragma once

// Grid-frequency series: CSV ingest with resampling to the simulation step,
// the pool of one-day samples starting at every quarter hour, seeded iid
// draws, and a synthetic mean-reverting generator.

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fcrbess/csv.hpp"
#include "fcrbess/errors.hpp"
#include "fcrbess/rng.hpp"

namespace fcrbess {

inline constexpr double kNominalFrequencyHz = 50.0;
inline constexpr double kDaySeconds = 86400.0;
inline constexpr double kQuarterHourSeconds = 900.0;

/// Owned, uniformly spaced series of deviations from 50 Hz.
struct FrequencyTrace {
    std::int64_t start = 0;  // epoch seconds of values[0]
    double dt = 10.0;
    std::vector<double> values;

    double duration_s() const { return dt * static_cast<double>(values.size()); }
};

/// Non-owning view of a window of a trace. Time wraps inside the source
/// period so that samples taken across the end of the data carry the
/// timestamps of the data they actually contain.
struct FrequencySample {
    std::size_t id = 0;
    std::int64_t start = 0;
    double dt = 10.0;
    std::span<const double> values;
    std::int64_t period_start = 0;
    std::int64_t period_s = 0;  // 0 means no wrap

    std::int64_t timestamp(double offset_s) const {
        const auto off = static_cast<std::int64_t>(std::floor(offset_s));
        if (period_s <= 0) return start + off;
        std::int64_t rel = (start - period_start + off) % period_s;
        if (rel < 0) rel += period_s;
        return period_start + rel;
    }

    static FrequencySample whole(const FrequencyTrace& trace) {
        return {0, trace.start, trace.dt, trace.values, trace.start, 0};
    }
};

struct FrequencyCsvOptions {
    double dt = 10.0;
    std::string timestamp_column = "timestamp";
    /// Value column; empty picks the second column. Its header decides the
    /// meaning: names containing "delta" are deviations, otherwise absolute
    /// frequency in Hz.
    std::string value_column;
    std::optional<bool> absolute;  // overrides the header heuristic
};

/// Loads a frequency CSV and averages it into buckets of `dt`. The native
/// step is taken from the first two rows; any other spacing is rejected.
inline FrequencyTrace load_frequency_csv(const std::string& path, const FrequencyCsvOptions& opt = {}) {
    const csv::Table table = csv::read_file(path);
    const int ts_col = table.column(opt.timestamp_column);
    if (ts_col < 0) throw DataError(path + ": no '" + opt.timestamp_column + "' column");
    int val_col = -1;
    if (!opt.value_column.empty()) {
        val_col = table.column(opt.value_column);
        if (val_col < 0) throw DataError(path + ": no '" + opt.value_column + "' column");
    } else {
        for (std::size_t i = 0; i < table.header.size(); ++i) {
            if (static_cast<int>(i) != ts_col) {
                val_col = static_cast<int>(i);
                break;
            }
        }
        if (val_col < 0) throw DataError(path + ": no value column");
    }
    const std::string& name = table.header[static_cast<std::size_t>(val_col)];
    const bool absolute = opt.absolute.value_or(name.find("delta") == std::string::npos);
    if (table.rows.size() < 2) throw DataError(path + ": need at least two samples");

    std::vector<std::int64_t> ts;
    std::vector<double> vals;
    ts.reserve(table.rows.size());
    vals.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        const std::string where = path + ":" + std::to_string(row.line);
        ts.push_back(csv::parse_timestamp(row.fields[static_cast<std::size_t>(ts_col)], where));
        const double v = csv::to_double(row.fields[static_cast<std::size_t>(val_col)], where);
        vals.push_back(absolute ? v - kNominalFrequencyHz : v);
    }
    const std::int64_t native = ts[1] - ts[0];
    if (native <= 0) throw DataError(path + ":" + std::to_string(table.rows[1].line) + ": timestamps not increasing");
    for (std::size_t i = 1; i < ts.size(); ++i) {
        const std::int64_t d = ts[i] - ts[i - 1];
        const std::string where = path + ":" + std::to_string(table.rows[i].line);
        if (d <= 0) throw DataError(where + ": timestamps not increasing");
        if (d != native)
            throw DataError(where + ": gap of " + std::to_string(d) + " s between " + csv::format_timestamp(ts[i - 1]) +
                            " and " + csv::format_timestamp(ts[i]) + " (expected " + std::to_string(native) + " s)");
    }
    const double ratio = opt.dt / static_cast<double>(native);
    const auto per_bucket = static_cast<std::size_t>(std::llround(ratio));
    if (per_bucket < 1 || std::abs(ratio - static_cast<double>(per_bucket)) > 1e-9)
        throw DataError(path + ": dt " + csv::format(opt.dt) + " s is not a multiple of the native step " +
                        std::to_string(native) + " s");

    FrequencyTrace out;
    out.start = ts.front();
    out.dt = opt.dt;
    const std::size_t n = vals.size() / per_bucket;  // trailing partial bucket dropped
    out.values.resize(n);
    for (std::size_t b = 0; b < n; ++b) {
        double acc = 0.0;
        for (std::size_t j = 0; j < per_bucket; ++j) acc += vals[b * per_bucket + j];
        out.values[b] = acc / static_cast<double>(per_bucket);
    }
    return out;
}

inline void export_frequency_csv(std::ostream& os, const FrequencyTrace& trace) {
    os << "timestamp,delta_f_hz\n";
    for (std::size_t i = 0; i < trace.values.size(); ++i) {
        const auto t = trace.start + static_cast<std::int64_t>(std::llround(trace.dt * static_cast<double>(i)));
        os << csv::format_timestamp(t) << ',' << csv::format(trace.values[i]) << '\n';
    }
}

/// One-day windows starting at every quarter hour of the source. Windows
/// that run past the end wrap around to the start, so a source of N days
/// gives 96 N samples.
class SamplePool {
public:
    explicit SamplePool(FrequencyTrace trace) : trace_(std::move(trace)) {
        const double steps_day = kDaySeconds / trace_.dt;
        const double steps_qh = kQuarterHourSeconds / trace_.dt;
        day_steps_ = static_cast<std::size_t>(std::llround(steps_day));
        qh_steps_ = static_cast<std::size_t>(std::llround(steps_qh));
        if (std::abs(steps_qh - static_cast<double>(qh_steps_)) > 1e-9 || qh_steps_ == 0)
            throw ConfigError("sample pool: dt must divide 15 minutes");
        const std::size_t n = trace_.values.size();
        if (n < day_steps_) throw DataError("sample pool: source shorter than one day");
        n_samples_ = n / qh_steps_;
        length_ = n_samples_ * qh_steps_;
        extended_.reserve(length_ + day_steps_);
        extended_.assign(trace_.values.begin(), trace_.values.begin() + static_cast<std::ptrdiff_t>(length_));
        for (std::size_t i = 0; i < day_steps_; ++i) extended_.push_back(extended_[i % length_]);
    }

    std::size_t size() const { return n_samples_; }
    std::size_t day_steps() const { return day_steps_; }
    double dt() const { return trace_.dt; }
    const FrequencyTrace& source() const { return trace_; }

    FrequencySample sample(std::size_t id) const {
        if (id >= n_samples_) throw DomainError("sample pool: sample id out of range");
        const std::size_t offset = id * qh_steps_;
        return window(id, offset, day_steps_);
    }

    /// Whole years available in the source (365-day blocks).
    std::size_t n_years() const { return length_ / (365 * day_steps_); }

    /// 365 days of contiguous data: one of the whole years if there are any,
    /// otherwise 365 iid day samples.
    std::vector<FrequencySample> draw_year(Rng& rng) const {
        if (n_years() > 0) {
            const std::size_t y = rng.below(n_years());
            const std::size_t year_steps = 365 * day_steps_;
            std::vector<FrequencySample> out;
            // Split into days so callers can treat both forms alike.
            for (std::size_t d = 0; d < 365; ++d) {
                const std::size_t offset = y * year_steps + d * day_steps_;
                out.push_back(window(offset / qh_steps_, offset, day_steps_));
            }
            return out;
        }
        std::vector<FrequencySample> out;
        out.reserve(365);
        for (int d = 0; d < 365; ++d) out.push_back(sample(rng.below(n_samples_)));
        return out;
    }

private:
    FrequencySample window(std::size_t id, std::size_t offset, std::size_t steps) const {
        FrequencySample s;
        s.id = id;
        s.dt = trace_.dt;
        s.start = trace_.start + static_cast<std::int64_t>(std::llround(static_cast<double>(offset) * trace_.dt));
        s.values = std::span<const double>(extended_.data() + offset, steps);
        s.period_start = trace_.start;
        s.period_s = static_cast<std::int64_t>(std::llround(static_cast<double>(length_) * trace_.dt));
        return s;
    }

    FrequencyTrace trace_;
    std::vector<double> extended_;
    std::size_t day_steps_ = 0;
    std::size_t qh_steps_ = 0;
    std::size_t n_samples_ = 0;
    std::size_t length_ = 0;
};

/// Uniform draws with replacement.
inline std::vector<FrequencySample> draw_day_samples(const SamplePool& pool, std::size_t n, Rng& rng) {
    if (pool.size() == 0) throw DomainError("draw_day_samples: empty pool");
    std::vector<FrequencySample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool.sample(rng.below(pool.size())));
    return out;
}

inline std::vector<FrequencySample> draw_day_samples(const SamplePool& pool, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    return draw_day_samples(pool, n, rng);
}

/// Ornstein-Uhlenbeck noise with stationary standard deviation sigma and
/// correlation time tau, plus rare excursions: Poisson arrivals, each a
/// plateau of random sign and fixed amplitude lasting `excursion_duration_s`.
struct SynthParams {
    double sigma_hz = 0.02;
    double tau_s = 300.0;
    double excursions_per_day = 0.0;
    double excursion_amplitude_hz = 0.12;
    double excursion_duration_s = 600.0;
};

inline FrequencyTrace synth_frequency(const SynthParams& params, double duration_s, double dt, std::uint64_t seed,
                                      std::int64_t start = 1420070400 /* 2015-01-01 */) {
    if (!(dt > 0.0 && duration_s >= 0.0)) throw DomainError("synth_frequency: bad duration or dt");
    if (params.sigma_hz < 0.0 || params.excursions_per_day < 0.0)
        throw DomainError("synth_frequency: negative noise or excursion rate");
    Rng rng(seed);
    FrequencyTrace out;
    out.start = start;
    out.dt = dt;
    const auto n = static_cast<std::size_t>(std::llround(duration_s / dt));
    out.values.resize(n, 0.0);

    if (params.sigma_hz > 0.0) {
        if (!(params.tau_s > 0.0)) throw DomainError("synth_frequency: tau must be positive");
        const double a = std::exp(-dt / params.tau_s);
        const double b = params.sigma_hz * std::sqrt(1.0 - a * a);
        double x = params.sigma_hz * rng.normal();  // stationary start
        for (std::size_t i = 0; i < n; ++i) {
            out.values[i] = x;
            x = a * x + b * rng.normal();
        }
    }
    if (params.excursions_per_day > 0.0) {
        const double rate = params.excursions_per_day / kDaySeconds;
        const auto len = static_cast<std::size_t>(std::ceil(params.excursion_duration_s / dt));
        double t = rng.exponential(rate);
        while (t < duration_s) {
            const auto first = static_cast<std::size_t>(t / dt);
            const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            for (std::size_t i = first; i < std::min(n, first + len); ++i)
                out.values[i] += sign * params.excursion_amplitude_hz;
            t += rng.exponential(rate);
        }
    }
    return out;
}

}  // namespace fcrbess
