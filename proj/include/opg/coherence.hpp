#pragma once

// Gaussian Schell-model coherence: fitting from a beam profile and
// double-slit visibilities, coherent-mode (Mercer) decomposition and
// spatial mode counting.
//
// The cross-spectral density used throughout is
//
//   G(x, x') = exp[−(x² + x'²)/(4a²)] · exp[−(x − x')²/(2b²)],
//
// so G(x, x) = exp(−x²/(2a²)) is the intensity profile with standard
// deviation a, and the normalized degree of coherence between slits a
// distance d apart is exp(−d²/(2b²)). Written in sum/difference form the
// same kernel is exp[−(x + x')²/(2A²)]·exp[−(x − x')²/(2B²)] with A = 2a and
// 1/B² = 1/(4a²) + 1/b²; see sum_difference_widths().

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "opg/error.hpp"
#include "opg/levenberg_marquardt.hpp"

namespace opg {

enum class Axis { Horizontal, Vertical };

inline const char* axis_name(Axis axis) { return axis == Axis::Horizontal ? "horizontal" : "vertical"; }

struct SchellModel {
    double a_mm = 1.0;  ///< intensity-profile standard deviation
    /// Coherence width; +∞ for a fully coherent beam.
    double b_mm = std::numeric_limits<double>::infinity();
    Axis axis = Axis::Horizontal;
    std::string filter_label;

    bool fully_coherent() const { return std::isinf(b_mm); }

    void validate() const {
        if (!(a_mm > 0.0) || !std::isfinite(a_mm)) throw ValidationError("Schell model needs a > 0");
        if (!(b_mm > 0.0)) throw ValidationError("Schell model needs b > 0");
    }

    double kernel(double x1, double x2) const {
        const double d = x1 - x2;
        const double coh = fully_coherent() ? 1.0 : std::exp(-d * d / (2.0 * b_mm * b_mm));
        return std::exp(-(x1 * x1 + x2 * x2) / (4.0 * a_mm * a_mm)) * coh;
    }

    /// Slit spacing at which the point-slit visibility drops to 50 %.
    double coherence_radius_mm() const { return b_mm * std::sqrt(2.0 * std::numbers::ln2); }
};

struct SumDifferenceWidths {
    double sum_width;   ///< A in exp[−(x + x')²/(2A²)]
    double diff_width;  ///< B in exp[−(x − x')²/(2B²)]
};

inline SumDifferenceWidths sum_difference_widths(const SchellModel& m) {
    const double inv_b2 = m.fully_coherent() ? 0.0 : 1.0 / (m.b_mm * m.b_mm);
    return {2.0 * m.a_mm, 1.0 / std::sqrt(1.0 / (4.0 * m.a_mm * m.a_mm) + inv_b2)};
}

/// Inverse of sum_difference_widths(). The kernel is positive semidefinite
/// only for diff_width ≤ sum_width (equality is the coherent beam).
inline SchellModel from_sum_difference_widths(SumDifferenceWidths w, Axis axis = Axis::Horizontal) {
    if (!(w.sum_width > 0.0 && w.diff_width > 0.0) || w.diff_width > w.sum_width)
        throw ValidationError("sum/difference widths must satisfy 0 < diff_width <= sum_width");
    SchellModel m;
    m.axis = axis;
    m.a_mm = 0.5 * w.sum_width;
    const double inv_b2 = 1.0 / (w.diff_width * w.diff_width) - 1.0 / (w.sum_width * w.sum_width);
    m.b_mm = inv_b2 > 0.0 ? 1.0 / std::sqrt(inv_b2) : std::numeric_limits<double>::infinity();
    return m;
}

/// Ratio q of consecutive coherent-mode weights, s_n = (1 − q)·qⁿ.
inline double schell_mode_ratio(const SchellModel& m) {
    if (m.fully_coherent()) return 0.0;
    const double alpha = 1.0 / (4.0 * m.a_mm * m.a_mm);
    const double beta = 1.0 / (2.0 * m.b_mm * m.b_mm);
    const double c = std::sqrt(alpha * alpha + 2.0 * alpha * beta);
    return beta / (alpha + beta + c);
}

/// Participation ratio (Σs)²/Σs²; invariant under rescaling and zero padding.
inline double mode_number(const Eigen::Ref<const Eigen::VectorXd>& eigenvalues) {
    const double sum = eigenvalues.sum();
    const double sq = eigenvalues.squaredNorm();
    if (!(sq > 0.0)) throw DegenerateInputError("mode number of an all-zero spectrum");
    return sum * sum / sq;
}

/// Closed form of mode_number for the geometric spectrum, (1 + q)/(1 − q).
inline double geometric_mode_number(double q) { return (1.0 + q) / (1.0 - q); }

inline double total_modes(double mx, double my) {
    constexpr double slack = 1e-9;
    if (!(mx >= 1.0 - slack && my >= 1.0 - slack)) throw DomainError("per-axis mode numbers must be >= 1");
    return mx * my;
}

struct NystromOptions {
    int points = 800;
    /// Sampling interval is [−half_width·a, half_width·a].
    double half_width = 5.0;
};

/// Eigenvalues (descending, normalized by the discrete trace) of the kernel
/// integral operator, by Nyström discretization with trapezoidal weights.
inline Eigen::VectorXd nystrom_eigenvalues(const SchellModel& m, const NystromOptions& opt = {}) {
    m.validate();
    const int n = opt.points;
    if (n < 2) throw ValidationError("Nystrom discretization needs at least two points");
    const double L = opt.half_width * m.a_mm;
    const double h = 2.0 * L / (n - 1);
    Eigen::VectorXd x(n), sw(n);
    for (int i = 0; i < n; ++i) {
        x[i] = -L + h * i;
        sw[i] = std::sqrt((i == 0 || i == n - 1) ? 0.5 * h : h);
    }
    Eigen::MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) K(i, j) = K(j, i) = sw[i] * m.kernel(x[i], x[j]) * sw[j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericalError("Nystrom eigensolve failed");
    Eigen::VectorXd ev = eig.eigenvalues().reverse();
    const double trace = K.diagonal().sum();
    return ev / trace;
}

struct ModeCount {
    Eigen::VectorXd eigenvalues;          ///< analytic s_n, n < requested count
    Eigen::VectorXd numeric_eigenvalues;  ///< Nyström s_n, same count
    double q = 0.0;
    double max_discrepancy = 0.0;  ///< over the first 10 eigenvalues
    double M_axis = 1.0;
};

inline constexpr double kMercerAgreement = 1e-4;

/// Coherent-mode weights from the closed-form geometric law, verified
/// against a Nyström eigensolve of the sampled kernel.
inline ModeCount mercer_modes(const SchellModel& m, int n_modes = 10, const NystromOptions& opt = {}) {
    m.validate();
    if (n_modes < 1) throw ValidationError("need at least one mode");
    ModeCount out;
    out.q = schell_mode_ratio(m);
    out.eigenvalues.resize(n_modes);
    for (int k = 0; k < n_modes; ++k) out.eigenvalues[k] = (1.0 - out.q) * std::pow(out.q, k);
    const Eigen::VectorXd numeric = nystrom_eigenvalues(m, opt);
    const int count = static_cast<int>(std::min<Eigen::Index>(n_modes, numeric.size()));
    out.numeric_eigenvalues = numeric.head(count);
    const int check = std::min({10, n_modes, count});
    for (int k = 0; k < check; ++k)
        out.max_discrepancy = std::max(out.max_discrepancy, std::abs(out.eigenvalues[k] - numeric[k]));
    if (out.max_discrepancy > kMercerAgreement) {
        std::ostringstream os;
        os << "analytic and Nystrom coherent-mode weights disagree by " << out.max_discrepancy << " (a = " << m.a_mm
           << " mm, b = " << m.b_mm << " mm)";
        throw ConsistencyError(os.str());
    }
    out.M_axis = geometric_mode_number(out.q);
    return out;
}

/// Normalized coherent mode φ_n(x) of the kernel: a Hermite–Gaussian of
/// width set by c = √(α² + 2αβ), α = 1/(4a²), β = 1/(2b²). With the
/// weights s_n, G(x, x') = a√(2π)·Σ s_n φ_n(x) φ_n(x').
inline double coherent_mode(const SchellModel& m, int n, double x) {
    m.validate();
    if (n < 0) throw ValidationError("mode index must be >= 0");
    const double alpha = 1.0 / (4.0 * m.a_mm * m.a_mm);
    const double beta = m.fully_coherent() ? 0.0 : 1.0 / (2.0 * m.b_mm * m.b_mm);
    const double c = std::sqrt(alpha * alpha + 2.0 * alpha * beta);
    const double u = x * std::sqrt(2.0 * c);
    // Normalized Hermite functions by their stable three-term recurrence.
    double prev = 0.0;
    double h = std::exp(-0.5 * u * u) / std::sqrt(std::sqrt(std::numbers::pi));
    for (int k = 0; k < n; ++k) {
        const double next = std::sqrt(2.0 / (k + 1)) * u * h - std::sqrt(static_cast<double>(k) / (k + 1)) * prev;
        prev = h;
        h = next;
    }
    return std::sqrt(std::sqrt(2.0 * c)) * h;
}

namespace detail {

/// Gauss–Legendre nodes and weights on [−1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= n; ++k) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[static_cast<std::size_t>(i)] = -z;
        x[static_cast<std::size_t>(n - 1 - i)] = z;
        w[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(n - 1 - i)] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return {x, w};
}

}  // namespace detail

inline constexpr int kSlitQuadraturePoints = 32;

/// Fringe visibility for two slits centred at ∓spacing/2. With a nonzero
/// slit width the kernel is averaged over both apertures,
/// V = |J₁₂|/√(J₁₁J₂₂) with J_jk = ∫_j∫_k G.
inline double visibility_from_model(const SchellModel& m, double spacing_mm, double slit_width_mm = 0.0) {
    m.validate();
    if (!(spacing_mm >= 0.0)) throw ValidationError("slit spacing must be >= 0");
    if (slit_width_mm < 0.0) throw ValidationError("slit width must be >= 0");
    if (slit_width_mm == 0.0) {
        if (m.fully_coherent()) return 1.0;
        return std::exp(-spacing_mm * spacing_mm / (2.0 * m.b_mm * m.b_mm));
    }
    if (!(spacing_mm > slit_width_mm)) throw ValidationError("slit spacing must exceed the slit width");
    static const auto rule = detail::gauss_legendre(kSlitQuadraturePoints);
    const auto& [t, w] = rule;
    const double half = 0.5 * slit_width_mm;
    auto aperture_integral = [&](double c1, double c2) {
        double acc = 0.0;
        for (int i = 0; i < kSlitQuadraturePoints; ++i)
            for (int j = 0; j < kSlitQuadraturePoints; ++j)
                acc += w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(j)] *
                       m.kernel(c1 + half * t[static_cast<std::size_t>(i)], c2 + half * t[static_cast<std::size_t>(j)]);
        return acc;
    };
    const double c = 0.5 * spacing_mm;
    const double j12 = aperture_integral(-c, c);
    const double j11 = aperture_integral(-c, -c);
    const double j22 = aperture_integral(c, c);
    return std::abs(j12) / std::sqrt(j11 * j22);
}

struct ProfilePoint {
    double x_mm;
    double intensity;
};

struct VisibilityPoint {
    double spacing_mm;
    double visibility;
};

struct VisibilityDataset {
    std::vector<VisibilityPoint> points;
    double slit_width_mm = 0.0;
    Axis axis = Axis::Horizontal;

    void validate() const {
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto& p = points[i];
            if (!(p.spacing_mm > 0.0)) throw ValidationError("slit spacings must be > 0");
            if (i > 0 && !(p.spacing_mm > points[i - 1].spacing_mm))
                throw ValidationError("slit spacings must be increasing");
            if (!(p.visibility >= 0.0 && p.visibility <= 1.0)) throw ValidationError("visibility must lie in [0, 1]");
            if (slit_width_mm > 0.0 && !(p.spacing_mm > slit_width_mm))
                throw ValidationError("slit spacing must exceed the slit width");
        }
    }
};

struct SchellFit {
    SchellModel model;
    double profile_center_mm = 0.0;
    double profile_amplitude = 0.0;
    double r2_profile = 0.0;
    /// NaN when the visibilities carry no variance (coherent limit).
    double r2_visibility = std::numeric_limits<double>::quiet_NaN();
};

inline constexpr double kMinRSquared = 0.9;

namespace detail {

inline double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& residual) {
    const double mean = y.mean();
    const double ss_tot = (y.array() - mean).square().sum();
    if (ss_tot <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return 1.0 - residual.squaredNorm() / ss_tot;
}

}  // namespace detail

/// Gaussian fit of the intensity profile gives a; a fit of the visibilities
/// with visibility_from_model (using the dataset's slit width) gives b.
inline SchellFit fit_schell(const std::vector<ProfilePoint>& profile, const VisibilityDataset& visibility,
                            std::string filter_label = {}) {
    if (profile.size() < 5) throw ValidationError("Schell fit needs at least 5 profile points");
    if (visibility.points.size() < 3) throw ValidationError("Schell fit needs at least 3 visibility points");
    visibility.validate();
    const std::string axis = axis_name(visibility.axis);

    const auto np = static_cast<Eigen::Index>(profile.size());
    Eigen::VectorXd px(np), py(np);
    for (Eigen::Index i = 0; i < np; ++i) {
        px[i] = profile[static_cast<std::size_t>(i)].x_mm;
        py[i] = profile[static_cast<std::size_t>(i)].intensity;
    }
    const double total = py.sum();
    if (!(py.maxCoeff() > 0.0) || !(total > 0.0)) throw ValidationError(axis + " profile has no positive intensity");
    const double mean = (px.array() * py.array()).sum() / total;
    const double var = ((px.array() - mean).square() * py.array()).sum() / total;
    const double span = px.maxCoeff() - px.minCoeff();
    const double a0 = var > 0.0 ? std::sqrt(var) : 0.25 * span;

    auto profile_residual = [&](const Eigen::VectorXd& p) {
        const double amp = std::exp(p[0]), x0 = p[1], a = std::exp(p[2]);
        return Eigen::VectorXd((amp * (-(px.array() - x0).square() / (2.0 * a * a)).exp() - py.array()).matrix());
    };
    const LmResult pfit = levenberg_marquardt(profile_residual, Eigen::Vector3d(std::log(py.maxCoeff()), mean, std::log(a0)));

    SchellFit out;
    out.profile_amplitude = std::exp(pfit.params[0]);
    out.profile_center_mm = pfit.params[1];
    out.model.a_mm = std::exp(pfit.params[2]);
    out.model.axis = visibility.axis;
    out.model.filter_label = std::move(filter_label);
    out.r2_profile = detail::r_squared(py, pfit.residuals);
    if (!(out.r2_profile >= kMinRSquared)) {
        std::ostringstream os;
        os << axis << " beam profile is not Gaussian: R^2 = " << out.r2_profile;
        throw FitQualityError(os.str(), out.r2_profile);
    }

    const auto nv = static_cast<Eigen::Index>(visibility.points.size());
    Eigen::VectorXd d(nv), v(nv);
    for (Eigen::Index i = 0; i < nv; ++i) {
        d[i] = visibility.points[static_cast<std::size_t>(i)].spacing_mm;
        v[i] = visibility.points[static_cast<std::size_t>(i)].visibility;
    }
    const double max_spacing = d.maxCoeff();

    // Fully coherent: no measurable decay anywhere.
    if (v.minCoeff() >= 0.999) {
        out.model.b_mm = std::numeric_limits<double>::infinity();
        return out;
    }

    // Seed b from the point closest to V = 0.5 using the point-slit law.
    Eigen::Index seed = 0;
    (v.array() - 0.5).abs().minCoeff(&seed);
    const double vs = std::clamp(v[seed], 1e-6, 0.999);
    const double b0 = d[seed] / std::sqrt(2.0 * std::log(1.0 / vs));

    SchellModel trial = out.model;
    auto vis_residual = [&](const Eigen::VectorXd& p) {
        trial.b_mm = std::exp(p[0]);
        Eigen::VectorXd r(nv);
        for (Eigen::Index i = 0; i < nv; ++i) r[i] = visibility_from_model(trial, d[i], visibility.slit_width_mm) - v[i];
        return r;
    };
    LmOptions lm;
    lm.step_tolerance = 1e-12;
    const LmResult vfit = levenberg_marquardt(vis_residual, Eigen::VectorXd::Constant(1, std::log(b0)), lm);
    const double b = std::exp(vfit.params[0]);
    if (b > 1e3 * max_spacing) {
        out.model.b_mm = std::numeric_limits<double>::infinity();
        return out;
    }
    out.model.b_mm = b;
    out.r2_visibility = detail::r_squared(v, vfit.residuals);
    if (std::isfinite(out.r2_visibility) && out.r2_visibility < kMinRSquared) {
        std::ostringstream os;
        os << axis << " visibility does not follow a Gaussian decay: R^2 = " << out.r2_visibility;
        throw FitQualityError(os.str(), out.r2_visibility);
    }
    return out;
}

}  // namespace opg
