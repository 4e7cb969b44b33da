#pragma once

// Fit of PDC output power against pump power, P_PDC = A·sinh²(B√P), and the
// single-mode parametric gain G = B√P derived from it.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "opg/error.hpp"
#include "opg/levenberg_marquardt.hpp"

namespace opg {

struct GainPoint {
    double pump_mw = 0.0;
    double pdc_power = 0.0;
    std::optional<double> pdc_power_err;
};

struct GainDataset {
    std::vector<GainPoint> points;
    std::string label;

    void validate() const {
        if (points.size() < 4) throw ValidationError("gain fit needs at least 4 points, got " + std::to_string(points.size()));
        const bool with_err = points.front().pdc_power_err.has_value();
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto& p = points[i];
            if (!(p.pump_mw > 0.0)) throw ValidationError("pump power must be > 0");
            if (i > 0 && !(p.pump_mw > points[i - 1].pump_mw))
                throw ValidationError("pump powers must be strictly increasing");
            if (!(p.pdc_power >= 0.0) || !std::isfinite(p.pdc_power))
                throw ValidationError("PDC power must be finite and >= 0");
            if (p.pdc_power_err.has_value() != with_err)
                throw ValidationError("either every point or no point carries an uncertainty");
            if (with_err && !(*p.pdc_power_err > 0.0)) throw ValidationError("PDC power uncertainty must be > 0");
        }
    }
};

/// Points with pump power ≤ max_pump_mw, for staying inside the undepleted
/// pump regime.
inline GainDataset truncate_dataset(GainDataset data, double max_pump_mw) {
    std::erase_if(data.points, [&](const GainPoint& p) { return p.pump_mw > max_pump_mw; });
    return data;
}

inline double evaluate_gain_model(double A, double B, double pump_mw) {
    if (!(pump_mw >= 0.0)) throw DomainError("pump power must be >= 0");
    const double s = std::sinh(B * std::sqrt(pump_mw));
    return A * s * s;
}

struct GainAt {
    double pump_mw;
    double G;
    double sigma_G;
};

struct GainFit {
    double A = 0.0;
    double B = 0.0;  ///< mW^(-1/2)
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();  ///< of (A, B)
    double residual_rms = 0.0;
    int iterations = 0;
    std::vector<GainAt> G_table;
    std::vector<std::string> warnings;

    double sigma_A() const { return std::sqrt(covariance(0, 0)); }
    double sigma_B() const { return std::sqrt(covariance(1, 1)); }

    /// G = B√P with σ_G = √P·σ_B.
    GainAt gain_at(double pump_mw) const {
        const double r = std::sqrt(pump_mw);
        return {pump_mw, B * r, r * sigma_B()};
    }
};

struct GainFitOptions {
    std::optional<double> A0;
    std::optional<double> B0;
    /// Pump powers for G_table; the largest measured power is always added.
    std::vector<double> report_powers;
};

namespace detail {

/// B₀ from the log-slope of the two strongest points (sinh² ≈ e^{2B√P}/4),
/// A₀ from the weakest nonzero point.
inline std::pair<double, double> gain_initial_guess(const GainDataset& data) {
    const auto& pts = data.points;
    const auto& hi = pts[pts.size() - 1];
    const auto& lo = pts[pts.size() - 2];
    double B0 = 0.0;
    if (hi.pdc_power > 0.0 && lo.pdc_power > 0.0)
        B0 = (std::log(hi.pdc_power) - std::log(lo.pdc_power)) / (2.0 * (std::sqrt(hi.pump_mw) - std::sqrt(lo.pump_mw)));
    if (!(B0 > 0.0) || !std::isfinite(B0)) B0 = 1.0 / std::sqrt(hi.pump_mw);
    const auto weakest = std::find_if(pts.begin(), pts.end(), [](const GainPoint& p) { return p.pdc_power > 0.0; });
    const double s = std::sinh(B0 * std::sqrt(weakest->pump_mw));
    double A0 = weakest->pdc_power / (s * s);
    if (!(A0 > 0.0) || !std::isfinite(A0)) A0 = 1.0;
    return {A0, B0};
}

}  // namespace detail

/// Weighted least squares in (ln A, ln B) so both parameters stay positive.
/// Weights are 1/err when uncertainties are given, else uniform; the
/// covariance is then scaled by the reduced χ².
inline GainFit fit_gain(const GainDataset& data, const GainFitOptions& options = {}) {
    data.validate();
    const auto& pts = data.points;
    const bool with_err = pts.front().pdc_power_err.has_value();
    if (std::all_of(pts.begin(), pts.end(), [](const GainPoint& p) { return p.pdc_power == 0.0; }))
        throw DegenerateInputError("all PDC powers are zero: no signal to fit");

    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::VectorXd sqrtP(n), y(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = pts[static_cast<std::size_t>(i)];
        sqrtP[i] = std::sqrt(p.pump_mw);
        y[i] = p.pdc_power;
        w[i] = with_err ? 1.0 / *p.pdc_power_err : 1.0;
    }

    auto [A0, B0] = detail::gain_initial_guess(data);
    if (options.A0) A0 = *options.A0;
    if (options.B0) B0 = *options.B0;
    if (!(A0 > 0.0 && B0 > 0.0)) throw ValidationError("initial A and B must be > 0");

    // Scale residuals so the solver sees O(1) numbers whatever the power units.
    const double scale = 1.0 / std::max((w.array() * y.array()).abs().maxCoeff(), 1e-300);

    auto residual = [&](const Eigen::VectorXd& p) {
        const double A = std::exp(p[0]), B = std::exp(p[1]);
        Eigen::VectorXd r(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double s = std::sinh(B * sqrtP[i]);
            r[i] = scale * w[i] * (A * s * s - y[i]);
        }
        return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& p) {
        const double A = std::exp(p[0]), B = std::exp(p[1]);
        Eigen::MatrixXd J(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double x = B * sqrtP[i];
            const double s = std::sinh(x);
            J(i, 0) = scale * w[i] * A * s * s;
            J(i, 1) = scale * w[i] * A * std::sinh(2.0 * x) * x;
        }
        return J;
    };

    LmOptions lm;
    lm.max_iterations = 200;
    lm.step_tolerance = 1e-9;
    const LmResult res = levenberg_marquardt(residual, Eigen::Vector2d(std::log(A0), std::log(B0)), lm, jacobian);
    const double final_rms = std::sqrt(2.0 * res.cost / static_cast<double>(n)) / scale;
    if (!res.converged || !res.params.allFinite()) {
        std::ostringstream os;
        os << "gain fit did not converge after " << res.iterations << " iterations (weighted residual rms "
           << final_rms << ")";
        throw ConvergenceError(os.str(), final_rms, static_cast<std::size_t>(res.iterations));
    }

    GainFit fit;
    fit.A = std::exp(res.params[0]);
    fit.B = std::exp(res.params[1]);
    fit.iterations = res.iterations;

    // d/d(ln A) = A d/dA, so divide the columns back out; undo the residual scale.
    Eigen::MatrixXd J = res.jacobian / scale;
    J.col(0) /= fit.A;
    J.col(1) /= fit.B;
    Eigen::Matrix2d info = J.transpose() * J;
    double variance_scale = 1.0;
    if (!with_err) variance_scale = n > 2 ? (2.0 * res.cost / (scale * scale)) / static_cast<double>(n - 2) : 0.0;
    Eigen::FullPivLU<Eigen::Matrix2d> lu(info);
    fit.covariance = lu.isInvertible() ? Eigen::Matrix2d(lu.inverse() * variance_scale)
                                       : Eigen::Matrix2d::Constant(std::numeric_limits<double>::infinity());

    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = evaluate_gain_model(fit.A, fit.B, pts[static_cast<std::size_t>(i)].pump_mw) - y[i];
        ss += d * d;
    }
    fit.residual_rms = std::sqrt(ss / static_cast<double>(n));

    const auto& top = pts.back();
    const double top_dev = std::abs(evaluate_gain_model(fit.A, fit.B, top.pump_mw) - top.pdc_power);
    const double top_sigma = with_err ? *top.pdc_power_err : fit.residual_rms;
    if (top_sigma > 0.0 && top_dev > 3.0 * top_sigma)
        fit.warnings.push_back("highest-power point deviates by more than 3 sigma from the fit; the pump may be depleted");

    std::vector<double> powers = options.report_powers;
    if (std::find(powers.begin(), powers.end(), top.pump_mw) == powers.end()) powers.push_back(top.pump_mw);
    for (double P : powers) fit.G_table.push_back(fit.gain_at(P));
    return fit;
}

}  // namespace opg
