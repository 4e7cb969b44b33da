#pragma once

// Walk-off corrected two-photon amplitude of type-I PDC in the walk-off
// plane, and the low-gain wavelength-angular spectrum built from it.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "opg/dispersion.hpp"
#include "opg/error.hpp"
#include "opg/parallel.hpp"
#include "opg/spectrum.hpp"

namespace opg {

/// How a quoted beam FWHM maps onto σ_x, the standard deviation of the
/// Gaussian pump field profile.
enum class WaistConvention {
    /// FWHM of the intensity profile: σ_field = FWHM / (2√ln 2).
    IntensityFwhm,
    /// FWHM read as describing the Gaussian directly: σ = FWHM / (2√(2 ln 2)).
    GaussianFwhm,
};

inline double sigma_from_fwhm(double fwhm, WaistConvention convention) {
    return convention == WaistConvention::IntensityFwhm ? fwhm / (2.0 * std::sqrt(std::numbers::ln2))
                                                        : fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
}

inline double fwhm_from_sigma(double sigma, WaistConvention convention) {
    return sigma / sigma_from_fwhm(1.0, convention);
}

struct PumpConfig {
    double lambda_p_um = 0.355;
    /// Field-profile standard deviation; the source of truth for the width.
    double sigma_x_um = 78.0;
    WaistConvention convention = WaistConvention::IntensityFwhm;
    double power_mw = 1.0;
    double pulse_ps = 18.0;
    double rep_rate_hz = 1000.0;

    static PumpConfig from_fwhm(double lambda_p_um, double waist_fwhm_um,
                                WaistConvention convention = WaistConvention::IntensityFwhm) {
        PumpConfig p;
        p.lambda_p_um = lambda_p_um;
        p.sigma_x_um = sigma_from_fwhm(waist_fwhm_um, convention);
        p.convention = convention;
        return p;
    }

    double waist_fwhm_um() const { return fwhm_from_sigma(sigma_x_um, convention); }

    void validate() const {
        if (!(lambda_p_um > 0.0 && sigma_x_um > 0.0 && power_mw > 0.0 && pulse_ps > 0.0 && rep_rate_hz > 0.0))
            throw ValidationError("pump parameters must all be positive");
    }
};

/// Wavevectors and scales of one fixed-signal-wavelength slice.
struct SliceGeometry {
    double lambda_s_um = 0.0;
    double lambda_i_um = 0.0;
    double k_p = 0.0;  ///< rad/µm
    double k_s = 0.0;
    double k_i = 0.0;
    double n_s = 1.0;  ///< signal index, for the external-angle mapping
    /// Signed walk-off; ρ > 0 tilts the pump Poynting vector toward +θ_s.
    double rho_rad = 0.0;
    double sigma_x_um = 0.0;
    double length_um = 0.0;
};

struct TpaOptions {
    /// When false the amplitude is evaluated with ρ = 0.
    bool walkoff = true;
    /// Minimum idler samples per slice.
    int idler_points = 512;
    /// Factor on the idler density required to resolve the amplitude.
    double idler_oversample = 1.0;
    /// Idler margin beyond the transverse-matched image of the signal grid,
    /// in units of 1/(σ_x k_i).
    double idler_margin = 5.0;
};

inline SliceGeometry slice_geometry(double lambda_s_um, const PumpConfig& pump, const CrystalConfig& crystal,
                                    const TpaOptions& options = {}) {
    SliceGeometry g;
    g.lambda_s_um = lambda_s_um;
    g.lambda_i_um = idler_wavelength(pump.lambda_p_um, lambda_s_um);
    g.n_s = index_ordinary(crystal, lambda_s_um);
    g.k_p = wavenumber(index_extraordinary(crystal, pump.lambda_p_um, crystal.theta_pm_rad), pump.lambda_p_um);
    g.k_s = wavenumber(g.n_s, lambda_s_um);
    g.k_i = wavenumber(index_ordinary(crystal, g.lambda_i_um), g.lambda_i_um);
    g.rho_rad = options.walkoff ? walkoff_angle(crystal, pump.lambda_p_um, crystal.theta_pm_rad) : 0.0;
    g.sigma_x_um = pump.sigma_x_um;
    g.length_um = crystal.interaction_length_mm() * 1e3;
    return g;
}

/// sin(u)/u with a series branch near zero.
inline double sinc(double u) {
    if (std::abs(u) < 1e-4) return 1.0 - u * u / 6.0;
    return std::sin(u) / u;
}

/// F(θ_s, θ_i) = exp(−Δk_x²σ²/2)·sinc[(Δk_z − Δk_x tan ρ)·L/2] with
/// Δk_x = k_s sin θ_s + k_i sin θ_i and Δk_z = k_p − k_s cos θ_s − k_i cos θ_i.
/// Both angles are internal and share one transverse axis; transverse matching
/// puts the idler on the opposite side of the pump. The walk-off term enters
/// with a minus sign because a pump envelope drifting toward +x shifts the
/// longitudinal mismatch by −Δk_x tan ρ.
inline double tpa_value(double theta_s, double theta_i, const SliceGeometry& g) {
    const double dkx = g.k_s * std::sin(theta_s) + g.k_i * std::sin(theta_i);
    const double dkz = g.k_p - g.k_s * std::cos(theta_s) - g.k_i * std::cos(theta_i);
    const double gauss = std::exp(-0.5 * dkx * dkx * g.sigma_x_um * g.sigma_x_um);
    return gauss * sinc((dkz - dkx * std::tan(g.rho_rad)) * 0.5 * g.length_um);
}

inline double tpa_value(double theta_s, double theta_i, double lambda_s_um, const PumpConfig& pump,
                        const CrystalConfig& crystal, const TpaOptions& options = {}) {
    return tpa_value(theta_s, theta_i, slice_geometry(lambda_s_um, pump, crystal, options));
}

inline constexpr double kMaxIdlerPoints = 16384;
/// Signal rows whose |F| bound stays below this value do not widen the idler
/// grid. F peaks at 1 on the phase-matched locus, so this is |F|² < 4·10⁻⁴.
inline constexpr double kIdlerRowThreshold = 2e-2;

/// Uniformly spaced, strictly increasing samples.
class UniformAxis {
public:
    UniformAxis() = default;

    UniformAxis(double first, double last, int count) {
        if (count < 1) throw ValidationError("an angular axis needs at least one sample");
        if (count > 1 && !(last > first)) throw ValidationError("angular axis must be strictly increasing");
        values_.resize(count);
        for (int j = 0; j < count; ++j)
            values_[j] = count == 1 ? first : first + (last - first) * static_cast<double>(j) / (count - 1);
        step_ = count == 1 ? 1.0 : (last - first) / (count - 1);
    }

    /// Validates uniform spacing of caller-provided samples.
    static UniformAxis from_samples(const Eigen::VectorXd& samples) {
        const auto n = samples.size();
        if (n < 1) throw ValidationError("an angular axis needs at least one sample");
        UniformAxis axis;
        axis.values_ = samples;
        axis.step_ = n == 1 ? 1.0 : (samples[n - 1] - samples[0]) / static_cast<double>(n - 1);
        for (Eigen::Index j = 1; j < n; ++j) {
            const double d = samples[j] - samples[j - 1];
            if (!(d > 0.0) || std::abs(d - axis.step_) > 1e-9 * std::abs(axis.step_))
                throw ValidationError("angular axis must be uniform and strictly increasing");
        }
        return axis;
    }

    const Eigen::VectorXd& values() const { return values_; }
    Eigen::Index size() const { return values_.size(); }
    double step() const { return step_; }
    double operator[](Eigen::Index j) const { return values_[j]; }

private:
    Eigen::VectorXd values_;
    double step_ = 1.0;
};

struct AngularGrid {
    UniformAxis theta_s;  ///< internal signal angles (rad)
    UniformAxis theta_i;  ///< internal idler angles (rad)
    double lambda_s_um = 0.0;
};

/// |Δk_x|·σ_x beyond which the Gaussian envelope (< e^{-40.5}) is stored as
/// an exact zero.
inline constexpr double kEnvelopeCutoff = 9.0;

struct TpaGrid {
    AngularGrid grid;
    Eigen::MatrixXd values;  ///< rows θ_s, columns θ_i
    SliceGeometry geometry;
    /// Per row, the half-open column range [first, second) outside which the
    /// row is zero.
    std::vector<std::pair<Eigen::Index, Eigen::Index>> support;

    double max_abs() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }
};

/// Columns whose |Δk_x| can be within kEnvelopeCutoff/σ_x of zero for signal
/// angle theta_s, widened by one sample on each side.
inline std::pair<Eigen::Index, Eigen::Index> envelope_support(double theta_s, const UniformAxis& theta_i,
                                                              const SliceGeometry& g) {
    const Eigen::Index n = theta_i.size();
    if (n == 1) return {0, 1};
    const double reach = kEnvelopeCutoff / g.sigma_x_um;
    const double centre = g.k_s * std::sin(theta_s);
    const double s_lo = (-reach - centre) / g.k_i;
    const double s_hi = (reach - centre) / g.k_i;
    if (!(s_lo <= 1.0 && s_hi >= -1.0)) return {0, 0};
    const double th_lo = s_lo <= -1.0 ? -std::numbers::pi / 2 : std::asin(s_lo);
    const double th_hi = s_hi >= 1.0 ? std::numbers::pi / 2 : std::asin(s_hi);
    const double x0 = theta_i[0], h = theta_i.step();
    const double f = std::floor((th_lo - x0) / h) - 1.0;
    const double e = std::ceil((th_hi - x0) / h) + 2.0;
    const auto clampi = [&](double v) { return static_cast<Eigen::Index>(std::clamp(v, 0.0, static_cast<double>(n))); };
    return {clampi(f), clampi(e)};
}

/// Element-wise amplitude on a grid, parallel over rows. Cells outside each
/// row's envelope support hold exact zeros.
inline TpaGrid build_tpa_grid(const AngularGrid& grid, const SliceGeometry& geometry, Execution exec = {}) {
    const auto ns = grid.theta_s.size();
    TpaGrid out{grid, Eigen::MatrixXd::Zero(ns, grid.theta_i.size()), geometry, {}};
    out.support.resize(static_cast<std::size_t>(ns));
    parallel_for(static_cast<std::size_t>(ns), exec, [&](std::size_t r) {
        const auto row = static_cast<Eigen::Index>(r);
        const auto [first, end] = envelope_support(grid.theta_s[row], grid.theta_i, geometry);
        out.support[r] = {first, end};
        for (Eigen::Index c = first; c < end; ++c) {
            const double v = tpa_value(grid.theta_s[row], grid.theta_i[c], geometry);
            if (!std::isfinite(v)) {
                std::ostringstream os;
                os << "non-finite amplitude at theta_s = " << grid.theta_s[row] << ", theta_i = " << grid.theta_i[c]
                   << " (lambda_s = " << grid.lambda_s_um << " um)";
                throw NumericalError(os.str());
            }
            out.values(row, c) = v;
        }
    });
    return out;
}

inline TpaGrid build_tpa_grid(const AngularGrid& grid, const PumpConfig& pump, const CrystalConfig& crystal,
                              const TpaOptions& options = {}, Execution exec = {}) {
    return build_tpa_grid(grid, slice_geometry(grid.lambda_s_um, pump, crystal, options), exec);
}

/// Internal signal grid for a slice from external angles (degrees), and a
/// uniform idler grid around the transverse-matched images of the signal
/// angles that can carry appreciable amplitude. The idler
/// step resolves both the Gaussian envelope and the sinc oscillation, so
/// options.idler_points is a minimum.
inline AngularGrid slice_grid(std::span<const double> theta_ext_deg, const SliceGeometry& g,
                              const TpaOptions& options = {}) {
    if (theta_ext_deg.empty()) throw ValidationError("empty angle band");
    if (options.idler_points < 1) throw ValidationError("idler_points must be >= 1");
    const auto ns = static_cast<Eigen::Index>(theta_ext_deg.size());
    Eigen::VectorXd ts(ns);
    for (Eigen::Index j = 0; j < ns; ++j) ts[j] = internal_angle(radians(theta_ext_deg[static_cast<std::size_t>(j)]), g.n_s);

    const double tan_rho = std::tan(g.rho_rad);
    const double half_l = 0.5 * g.length_um;
    auto sinc_arg = [&](double th_s, double th_i) {
        const double dkx = g.k_s * std::sin(th_s) + g.k_i * std::sin(th_i);
        const double dkz = g.k_p - g.k_s * std::cos(th_s) - g.k_i * std::cos(th_i);
        return (dkz - dkx * tan_rho) * half_l;
    };

    struct Window {
        double lo, hi;
        double bound;  ///< largest envelope·min(1, 1/|u|) seen on the probes
        double at;     ///< idler angle where it was seen
    };
    std::vector<Window> windows(static_cast<std::size_t>(ns));
    double max_bound = 0.0;
    for (Eigen::Index j = 0; j < ns; ++j) {
        const double image = -std::asin(std::clamp(g.k_s * std::sin(ts[j]) / g.k_i, -1.0, 1.0));
        const double half = options.idler_margin / (g.sigma_x_um * g.k_i * std::max(std::cos(image), 1e-3));
        Window w{image - half, image + half, 0.0, image};
        // A sign change of u between probes counts as u = 0.
        constexpr int probes = 64;
        double prev_u = 0.0, prev_gauss = 0.0, prev_th = w.lo;
        for (int k = 0; k <= probes; ++k) {
            const double th = w.lo + (w.hi - w.lo) * k / probes;
            const double dkx = g.k_s * std::sin(ts[j]) + g.k_i * std::sin(th);
            const double gauss = std::exp(-0.5 * dkx * dkx * g.sigma_x_um * g.sigma_x_um);
            const double u = sinc_arg(ts[j], th);
            double b = gauss * std::min(1.0, 1.0 / std::abs(u));
            double at = th;
            if (k > 0 && u * prev_u <= 0.0 && std::max(gauss, prev_gauss) > b) {
                b = std::max(gauss, prev_gauss);
                at = gauss > prev_gauss ? th : prev_th;
            }
            if (b > w.bound) {
                w.bound = b;
                w.at = at;
            }
            prev_u = u;
            prev_gauss = gauss;
            prev_th = th;
        }
        max_bound = std::max(max_bound, w.bound);
        windows[static_cast<std::size_t>(j)] = w;
    }

    double lo = HUGE_VAL, hi = -HUGE_VAL, du_max = 0.0, gauss_min = HUGE_VAL;
    for (Eigen::Index j = 0; j < ns; ++j) {
        const auto& w = windows[static_cast<std::size_t>(j)];
        // A dark slice keeps only its brightest rows.
        if (w.bound < std::min(kIdlerRowThreshold, 0.5 * max_bound)) continue;
        lo = std::min(lo, w.lo);
        hi = std::max(hi, w.hi);
        // Sinc phase rate and envelope width where this row is brightest.
        du_max = std::max(du_max, half_l * g.k_i * std::abs(std::sin(w.at) - std::cos(w.at) * tan_rho));
        gauss_min = std::min(gauss_min, 1.0 / (g.sigma_x_um * g.k_i * std::cos(w.at)));
    }
    lo = std::max(lo, -std::numbers::pi / 2 + 1e-6);
    hi = std::min(hi, std::numbers::pi / 2 - 1e-6);

    // Steps of 0.4 in the sinc argument and σ/6 of the Gaussian envelope.
    const double step = std::min(du_max > 0.0 ? 0.4 / du_max : HUGE_VAL, gauss_min / 6.0);
    const double needed = std::ceil((hi - lo) / step) + 1.0;
    if (needed * options.idler_oversample > kMaxIdlerPoints) {
        std::ostringstream os;
        os << "idler grid at lambda_s = " << g.lambda_s_um << " um would need " << needed << " points";
        throw CoverageError(os.str());
    }
    const int ni = std::max(options.idler_points, static_cast<int>(std::ceil(needed * options.idler_oversample)));
    return AngularGrid{UniformAxis::from_samples(ts), UniformAxis(lo, hi, ni), g.lambda_s_um};
}

inline constexpr double kCoverageTolerance = 1e-3;

/// Throws CoverageError when |F|² on the idler boundary exceeds 10⁻³ of the
/// slice maximum. Slices that never phase-match (max |F| < 1) are held to
/// 10⁻³ of the unit peak instead, which their tails always meet.
inline void check_idler_coverage(const TpaGrid& tpa) {
    const auto& v = tpa.values;
    if (v.cols() < 2) return;
    const double peak = v.cwiseAbs2().maxCoeff();
    const double edge = std::max(v.col(0).cwiseAbs2().maxCoeff(), v.col(v.cols() - 1).cwiseAbs2().maxCoeff());
    if (peak > 0.0 && edge > kCoverageTolerance * std::max(peak, 1.0)) {
        std::ostringstream os;
        os << "idler grid does not cover the amplitude at lambda_s = " << tpa.grid.lambda_s_um
           << " um: boundary |F|^2 is " << edge / peak << " of the maximum";
        throw CoverageError(os.str());
    }
}

/// Trapezoidal ∫|F(θ_s, θ_i)|² dθ_i for each signal angle, summed in index order.
inline Eigen::VectorXd integrate_over_idler(const TpaGrid& tpa) {
    const auto& v = tpa.values;
    const auto ni = v.cols();
    Eigen::VectorXd out(v.rows());
    const double h = tpa.grid.theta_i.step();
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const auto [first, end] = tpa.support.empty() ? std::pair<Eigen::Index, Eigen::Index>{0, ni}
                                                      : tpa.support[static_cast<std::size_t>(r)];
        double acc = 0.0;
        for (Eigen::Index c = first; c < end; ++c) {
            const double w = (ni > 1 && (c == 0 || c == ni - 1)) ? 0.5 * h : h;
            acc += w * v(r, c) * v(r, c);
        }
        out[r] = acc;
    }
    return out;
}

/// I(λ_s, θ_s) = ∫|F|² dθ_i per wavelength slice. Rows follow lambda_s_um,
/// columns follow theta_ext_deg (external signal angles, degrees).
inline SpectrumMap low_gain_spectrum(std::span<const double> lambda_s_um, std::span<const double> theta_ext_deg,
                                     const PumpConfig& pump, const CrystalConfig& crystal,
                                     const TpaOptions& options = {}, Execution exec = {}) {
    if (lambda_s_um.empty()) throw ValidationError("empty wavelength band");
    if (theta_ext_deg.empty()) throw ValidationError("empty angle band");
    SpectrumMap map(std::vector<double>(lambda_s_um.begin(), lambda_s_um.end()),
                    std::vector<double>(theta_ext_deg.begin(), theta_ext_deg.end()));
    parallel_for(lambda_s_um.size(), exec, [&](std::size_t k) {
        const SliceGeometry g = slice_geometry(lambda_s_um[k], pump, crystal, options);
        const TpaGrid tpa = build_tpa_grid(slice_grid(theta_ext_deg, g, options), g, Execution{1});
        check_idler_coverage(tpa);
        map.intensity.row(static_cast<Eigen::Index>(k)) = integrate_over_idler(tpa).transpose();
    });
    return map;
}

}  // namespace opg
