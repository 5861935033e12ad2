#pragma once

// First-order RC equivalent circuit of one Li-ion cell:
//
//   V_bat = V_OC(SoC) + V_C1 + R0 * I
//
// with V_C1 the voltage over the parallel R1/C1 branch. Current is positive
// when charging. All functions are pure; CellState is a caller-owned value.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fcrbess/csv.hpp"
#include "fcrbess/errors.hpp"

namespace fcrbess {

struct CellParams {
    double nominal_capacity_ah = 2.05;
    double r0_ohm = 0.0334;
    double r1_ohm = 0.0114;
    double c1_farad = 1867.0;
    double eta_coulomb = 0.99;
    double v_nom = 3.6;
    double v_cutoff_charge = 4.2;
    double v_cutoff_discharge = 2.75;
    double heat_capacity_j_per_k = 40.05;
    double e_rated_wh = 7.38;

    /// Fitted Sanyo UR18650E NMC cell.
    static CellParams sanyo_ur18650e() { return CellParams{}; }

    double capacity_as() const { return nominal_capacity_ah * 3600.0; }
    double tau_s() const { return r1_ohm * c1_farad; }

    void validate() const {
        if (!(nominal_capacity_ah > 0.0)) throw ConfigError("cell: nominal capacity must be positive");
        if (!(r0_ohm > 0.0 && r1_ohm > 0.0 && c1_farad > 0.0))
            throw ConfigError("cell: R0, R1 and C1 must be positive");
        if (!(eta_coulomb > 0.0 && eta_coulomb <= 1.0)) throw ConfigError("cell: coulombic efficiency outside (0, 1]");
        if (!(v_cutoff_discharge < v_nom && v_nom < v_cutoff_charge))
            throw ConfigError("cell: need V_cutoff_discharge < V_nom < V_cutoff_charge");
        if (!(heat_capacity_j_per_k > 0.0)) throw ConfigError("cell: heat capacity must be positive");
        if (std::abs(e_rated_wh - nominal_capacity_ah * v_nom) > 0.005 * e_rated_wh)
            throw ConfigError("cell: E_rated differs from C x V_nom by more than 0.5%");
    }
};

/// Open-circuit voltage as a piecewise-linear function of SoC.
class OcvCurve {
public:
    struct Point {
        double soc;
        double volts;
    };

    OcvCurve() = default;

    /// Knots must cover [0, 1] with strictly increasing SoC. Voltages must be
    /// non-decreasing; shipped NMC data is strictly increasing, a flat curve is
    /// accepted so that lossless reference models can be expressed.
    explicit OcvCurve(std::vector<Point> points) : points_(std::move(points)) {
        if (points_.size() < 2) throw ConfigError("OCV curve needs at least two knots");
        if (points_.front().soc != 0.0 || points_.back().soc != 1.0)
            throw ConfigError("OCV curve must cover SoC 0 to 1");
        for (std::size_t i = 1; i < points_.size(); ++i) {
            if (!(points_[i].soc > points_[i - 1].soc)) throw ConfigError("OCV curve SoC knots must strictly increase");
            if (points_[i].volts < points_[i - 1].volts) throw ConfigError("OCV curve must be monotone in SoC");
        }
    }

    std::span<const Point> points() const { return points_; }

    double operator()(double soc) const {
        if (!(soc >= 0.0 && soc <= 1.0)) throw DomainError("ocv_lookup: SoC outside [0, 1]: " + std::to_string(soc));
        return interpolate(soc);
    }

    /// Same as operator() but clamps SoC into [0, 1] instead of throwing.
    double clamped(double soc) const { return interpolate(std::clamp(soc, 0.0, 1.0)); }

    static OcvCurve linear(double v0, double v1) { return OcvCurve({{0.0, v0}, {1.0, v1}}); }

    /// Generic NMC/graphite curve, used when no measured table is configured.
    static OcvCurve default_nmc() {
        return OcvCurve({{0.00, 3.000}, {0.05, 3.400}, {0.10, 3.500}, {0.20, 3.580}, {0.30, 3.630},
                         {0.40, 3.680}, {0.50, 3.740}, {0.60, 3.820}, {0.70, 3.900}, {0.80, 3.980},
                         {0.90, 4.060}, {1.00, 4.170}});
    }

    /// Two-column CSV: soc, volts.
    static OcvCurve load_csv(const std::string& path) {
        const auto table = csv::read_file(path);
        if (table.header.size() != 2) throw DataError(path + ": OCV curve needs two columns (soc, volts)");
        std::vector<Point> pts;
        for (const auto& row : table.rows) {
            const std::string where = path + ":" + std::to_string(row.line);
            pts.push_back({csv::to_double(row.fields[0], where), csv::to_double(row.fields[1], where)});
        }
        try {
            return OcvCurve(std::move(pts));
        } catch (const ConfigError& e) {
            throw DataError(path + ": " + e.what());
        }
    }

private:
    double interpolate(double soc) const {
        auto it = std::upper_bound(points_.begin(), points_.end(), soc,
                                   [](double s, const Point& p) { return s < p.soc; });
        if (it == points_.end()) return points_.back().volts;
        if (it == points_.begin()) return points_.front().volts;
        const Point& hi = *it;
        const Point& lo = *(it - 1);
        const double w = (soc - lo.soc) / (hi.soc - lo.soc);
        return lo.volts + w * (hi.volts - lo.volts);
    }

    std::vector<Point> points_;
};

struct CellState {
    double soc = 0.5;
    double v_c1 = 0.0;
    double temperature_c = 25.0;
};

inline double ocv_lookup(const OcvCurve& curve, double soc) { return curve(soc); }

/// Most negative cell power the quadratic admits for the given internal
/// voltage V_OC + V_C1.
inline double max_discharge_power(double r0, double internal_voltage) {
    if (r0 <= 0.0) return -std::numeric_limits<double>::infinity();
    return -internal_voltage * internal_voltage / (4.0 * r0);
}

/// Solves (V + R0 I) I = p for the physical root. `internal_voltage` is
/// V_OC + V_C1. Throws CapabilityError when the discriminant is negative.
inline double current_from_power(double r0, double internal_voltage, double p_cell) {
    if (p_cell == 0.0) return 0.0;
    if (r0 == 0.0) {
        if (internal_voltage <= 0.0) throw CapabilityError("current_from_power: non-positive internal voltage");
        return p_cell / internal_voltage;
    }
    const double disc = internal_voltage * internal_voltage + 4.0 * r0 * p_cell;
    if (disc < 0.0) {
        throw CapabilityError("current_from_power: requested " + std::to_string(p_cell) +
                              " W exceeds the cell discharge capability of " +
                              std::to_string(max_discharge_power(r0, internal_voltage)) + " W");
    }
    const double root = std::sqrt(disc);
    // Rationalised form of (-V + sqrt(disc)) / (2 R0); avoids cancellation
    // for small |p| when V > 0.
    if (internal_voltage > 0.0) return 2.0 * p_cell / (internal_voltage + root);
    return (-internal_voltage + root) / (2.0 * r0);
}

inline double current_from_power(const CellParams& params, const OcvCurve& curve, const CellState& state,
                                 double p_cell) {
    return current_from_power(params.r0_ohm, curve(state.soc) + state.v_c1, p_cell);
}

/// Exact discretisation of the parallel RC branch over dt with constant
/// current: relaxes towards R1 * I with time constant R1 * C1.
inline double step_rc_branch(const CellParams& params, double v_c1, double current, double dt) {
    const double target = params.r1_ohm * current;
    const double tau = params.tau_s();
    if (tau <= 0.0) return target;
    const double decay = std::exp(-dt / tau);
    return v_c1 * decay + (1.0 - decay) * target;
}

struct SocStep {
    double soc;
    bool clipped;
};

/// Coulomb counting with asymmetric coulombic efficiency. Result clipped to
/// [0, 1]; `clipped` reports saturation.
inline SocStep step_soc(const CellParams& params, double soc, double current, double dt) {
    const double q = params.capacity_as();
    double next = soc;
    if (current > 0.0) {
        next += params.eta_coulomb * current * dt / q;
    } else if (current < 0.0) {
        next += current * dt / (params.eta_coulomb * q);
    }
    if (next > 1.0) return {1.0, true};
    if (next < 0.0) return {0.0, true};
    return {next, false};
}

inline double terminal_voltage(const CellParams& params, double ocv, const CellState& state, double current) {
    return ocv + state.v_c1 + params.r0_ohm * current;
}

// ---------------------------------------------------------------------------
// Pulse-test parameter identification

struct PulseSample {
    double t_s;
    double current_a;
    double voltage_v;
};

struct RcFit {
    double r0_ohm;
    double r1_ohm;
    double c1_farad;
    double residual_norm;  // sqrt of the sum of squared voltage residuals
    int iterations;
};

/// Model voltage response to a current profile. The current of sample k is
/// held until sample k+1. The cell starts relaxed (V_C1 = 0) at `initial_soc`.
inline std::vector<double> simulate_pulse_response(const CellParams& params, const OcvCurve& curve,
                                                   std::span<const PulseSample> pulse, double initial_soc) {
    std::vector<double> out;
    out.reserve(pulse.size());
    CellState state{initial_soc, 0.0, 25.0};
    for (std::size_t k = 0; k < pulse.size(); ++k) {
        const double current = pulse[k].current_a;
        out.push_back(curve.clamped(state.soc) + state.v_c1 + params.r0_ohm * current);
        if (k + 1 < pulse.size()) {
            const double dt = pulse[k + 1].t_s - pulse[k].t_s;
            state.v_c1 = step_rc_branch(params, state.v_c1, current, dt);
            state.soc = step_soc(params, state.soc, current, dt).soc;
        }
    }
    return out;
}

/// Least-squares fit of R0, R1 and C1 to a measured pulse response
/// (Levenberg-Marquardt in log-parameters, several starting time constants).
/// `base` supplies capacity and coulombic efficiency for the SoC drift.
inline RcFit fit_rc_from_pulse(std::span<const PulseSample> pulse, const OcvCurve& curve, double initial_soc,
                               const CellParams& base = CellParams::sanyo_ur18650e()) {
    if (pulse.size() < 4) throw FitError("fit_rc_from_pulse: pulse too short");
    for (std::size_t k = 1; k < pulse.size(); ++k) {
        if (!(pulse[k].t_s > pulse[k - 1].t_s)) throw FitError("fit_rc_from_pulse: time stamps must increase");
    }

    // First current step gives R0 from the instantaneous voltage jump.
    std::size_t step_at = 0;
    for (std::size_t k = 1; k < pulse.size(); ++k) {
        if (pulse[k].current_a != pulse[k - 1].current_a) {
            step_at = k;
            break;
        }
    }
    if (step_at == 0) throw FitError("fit_rc_from_pulse: constant current, R0/R1/C1 not identifiable");
    const double di = pulse[step_at].current_a - pulse[step_at - 1].current_a;
    const double r0_guess = std::max(std::abs((pulse[step_at].voltage_v - pulse[step_at - 1].voltage_v) / di), 1e-5);

    // The rest of the segment shows the R1 drift; its duration bounds tau.
    std::size_t seg_end = step_at;
    while (seg_end + 1 < pulse.size() && pulse[seg_end + 1].current_a == pulse[step_at].current_a) ++seg_end;
    const double seg_duration = std::max(pulse[seg_end].t_s - pulse[step_at].t_s, pulse[1].t_s - pulse[0].t_s);
    double r1_guess = std::abs((pulse[seg_end].voltage_v - pulse[step_at].voltage_v) / pulse[step_at].current_a);
    if (!(r1_guess > 0.1 * r0_guess) || !std::isfinite(r1_guess)) r1_guess = 0.5 * r0_guess;

    std::vector<double> measured(pulse.size());
    for (std::size_t k = 0; k < pulse.size(); ++k) measured[k] = pulse[k].voltage_v;

    auto residuals = [&](const Eigen::Vector3d& theta) {
        CellParams p = base;
        p.r0_ohm = std::exp(theta[0]);
        p.r1_ohm = std::exp(theta[1]);
        p.c1_farad = std::exp(theta[2]);
        const auto model = simulate_pulse_response(p, curve, pulse, initial_soc);
        Eigen::VectorXd r(static_cast<Eigen::Index>(pulse.size()));
        for (std::size_t k = 0; k < pulse.size(); ++k) r[static_cast<Eigen::Index>(k)] = model[k] - measured[k];
        return r;
    };

    RcFit best{0, 0, 0, std::numeric_limits<double>::infinity(), 0};
    for (double tau_frac : {0.05, 0.2, 0.6}) {
        const double tau_guess = tau_frac * seg_duration;
        Eigen::Vector3d theta(std::log(r0_guess), std::log(r1_guess), std::log(tau_guess / r1_guess));
        Eigen::VectorXd r = residuals(theta);
        double cost = r.squaredNorm();
        double lambda = 1e-3;
        int it = 0;
        bool converged = false;
        for (; it < 200 && !converged; ++it) {
            Eigen::MatrixXd jac(r.size(), 3);
            for (int j = 0; j < 3; ++j) {
                const double h = 1e-6;
                Eigen::Vector3d tp = theta, tm = theta;
                tp[j] += h;
                tm[j] -= h;
                jac.col(j) = (residuals(tp) - residuals(tm)) / (2.0 * h);
            }
            const Eigen::Matrix3d jtj = jac.transpose() * jac;
            const Eigen::Vector3d grad = jac.transpose() * r;
            bool improved = false;
            while (lambda < 1e12) {
                Eigen::Matrix3d a = jtj;
                for (int j = 0; j < 3; ++j) a(j, j) += lambda * std::max(jtj(j, j), 1e-12);
                const Eigen::Vector3d delta = a.ldlt().solve(-grad);
                const Eigen::Vector3d trial = theta + delta;
                const Eigen::VectorXd rt = residuals(trial);
                const double ct = rt.squaredNorm();
                if (std::isfinite(ct) && ct < cost) {
                    const double rel = (cost - ct) / std::max(cost, 1e-300);
                    theta = trial;
                    r = rt;
                    cost = ct;
                    lambda = std::max(lambda / 10.0, 1e-12);
                    improved = true;
                    converged = rel < 1e-14 || delta.cwiseAbs().maxCoeff() < 1e-12;
                    break;
                }
                lambda *= 10.0;
            }
            if (!improved) break;
        }
        if (cost < best.residual_norm * best.residual_norm || !std::isfinite(best.residual_norm)) {
            best = RcFit{std::exp(theta[0]), std::exp(theta[1]), std::exp(theta[2]), std::sqrt(cost), it};
        }
    }
    if (!std::isfinite(best.residual_norm)) throw FitError("fit_rc_from_pulse: optimisation diverged");
    return best;
}

/// Three-column CSV: t_s, current_a, voltage_v.
inline std::vector<PulseSample> load_pulse_csv(const std::string& path) {
    const auto table = csv::read_file(path);
    if (table.header.size() != 3) throw DataError(path + ": pulse data needs columns t_s, current_a, voltage_v");
    std::vector<PulseSample> out;
    for (const auto& row : table.rows) {
        const std::string where = path + ":" + std::to_string(row.line);
        out.push_back({csv::to_double(row.fields[0], where), csv::to_double(row.fields[1], where),
                       csv::to_double(row.fields[2], where)});
    }
    return out;
}

}  // namespace fcrbess
