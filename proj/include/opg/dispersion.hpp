#pragma once

// Refractive indices, walk-off and phase matching for a negative uniaxial
// crystal in type-I (e -> o + o) geometry.
//
// Units: wavelengths in µm, wavenumbers in rad/µm, lengths in mm unless a
// name says otherwise, angles in radians.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

#include "opg/error.hpp"

namespace opg {

enum class Polarization { Ordinary, Extraordinary };

/// n²(λ) = A + B/(λ² − C) − D·λ², λ in µm.
struct Sellmeier {
    double A = 1.0;
    double B = 0.0;
    double C = 0.0;
    double D = 0.0;

    double index_squared(double lambda_um) const {
        const double l2 = lambda_um * lambda_um;
        return A + B / (l2 - C) - D * l2;
    }
};

struct TransparencyWindow {
    double min_um = 0.0;
    double max_um = 0.0;

    bool contains(double lambda_um) const { return lambda_um >= min_um && lambda_um <= max_um; }
};

struct CrystalConfig {
    std::string name;
    Sellmeier sellmeier_o;
    Sellmeier sellmeier_e;
    TransparencyWindow window{0.19, 3.5};
    double length_mm = 10.0;
    /// Angle between the pump wavevector and the optic axis.
    double theta_pm_rad = 0.5;
    /// Interaction length actually used in the amplitude. Unset means the
    /// full crystal length, or the group-velocity-limited length when the
    /// caller resolves it with resolve_effective_length_mm().
    std::optional<double> effective_length_mm;

    double interaction_length_mm() const { return effective_length_mm.value_or(length_mm); }

    /// Throws ValidationError when an invariant does not hold.
    void validate() const;
};

namespace detail {

inline void require_in_window(const CrystalConfig& crystal, double lambda_um) {
    if (!(std::isfinite(lambda_um) && crystal.window.contains(lambda_um))) {
        std::ostringstream os;
        os << "wavelength " << lambda_um << " um is outside the transparency window ["
           << crystal.window.min_um << ", " << crystal.window.max_um << "] um of " << crystal.name;
        throw DomainError(os.str());
    }
}

inline double checked_index(const Sellmeier& s, double lambda_um, const char* which) {
    const double n2 = s.index_squared(lambda_um);
    if (!(n2 > 1.0) || !std::isfinite(n2)) {
        std::ostringstream os;
        os << which << " Sellmeier set gives n^2 = " << n2 << " at " << lambda_um << " um";
        throw DomainError(os.str());
    }
    return std::sqrt(n2);
}

}  // namespace detail

inline double index_ordinary(const CrystalConfig& crystal, double lambda_um) {
    detail::require_in_window(crystal, lambda_um);
    return detail::checked_index(crystal.sellmeier_o, lambda_um, "ordinary");
}

/// Extraordinary index for propagation perpendicular to the optic axis.
inline double index_principal_extraordinary(const CrystalConfig& crystal, double lambda_um) {
    detail::require_in_window(crystal, lambda_um);
    return detail::checked_index(crystal.sellmeier_e, lambda_um, "extraordinary");
}

/// Index of the extraordinary wave whose wavevector makes angle theta with
/// the optic axis: 1/n² = cos²θ/n_o² + sin²θ/n_e².
inline double index_extraordinary(const CrystalConfig& crystal, double lambda_um, double theta_rad) {
    const double no = index_ordinary(crystal, lambda_um);
    const double ne = index_principal_extraordinary(crystal, lambda_um);
    const double c = std::cos(theta_rad);
    const double s = std::sin(theta_rad);
    return 1.0 / std::sqrt(c * c / (no * no) + s * s / (ne * ne));
}

inline double refractive_index(const CrystalConfig& crystal, double lambda_um, Polarization pol,
                               double theta_rad) {
    return pol == Polarization::Ordinary ? index_ordinary(crystal, lambda_um)
                                         : index_extraordinary(crystal, lambda_um, theta_rad);
}

/// Poynting-vector walk-off of the extraordinary wave,
/// tan ρ = (n(θ)²/2)·sin 2θ·(1/n_e² − 1/n_o²). Positive for a negative
/// crystal with 0 < θ < π/2.
inline double walkoff_angle(const CrystalConfig& crystal, double lambda_um, double theta_rad) {
    const double no = index_ordinary(crystal, lambda_um);
    const double ne = index_principal_extraordinary(crystal, lambda_um);
    const double n = index_extraordinary(crystal, lambda_um, theta_rad);
    return std::atan(0.5 * n * n * std::sin(2.0 * theta_rad) * (1.0 / (ne * ne) - 1.0 / (no * no)));
}

/// k = 2πn/λ in rad/µm.
inline double wavenumber(double index, double lambda_um) { return 2.0 * std::numbers::pi * index / lambda_um; }

/// Energy conservation 1/λ_i = 1/λ_p − 1/λ_s.
inline double idler_wavelength(double lambda_p_um, double lambda_s_um) {
    if (!(lambda_s_um > lambda_p_um) || !(lambda_p_um > 0.0)) {
        std::ostringstream os;
        os << "signal wavelength " << lambda_s_um << " um must exceed pump wavelength " << lambda_p_um
           << " um";
        throw DomainError(os.str());
    }
    return 1.0 / (1.0 / lambda_p_um - 1.0 / lambda_s_um);
}

/// Small-angle Snell refraction at the exit face, θ_ext = n·θ_int.
inline double internal_angle(double theta_ext_rad, double index) { return theta_ext_rad / index; }
inline double external_angle(double theta_int_rad, double index) { return theta_int_rad * index; }

inline double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }
inline double radians(double deg) { return deg * std::numbers::pi / 180.0; }

/// Δk_z = k_p − k_s cos θ_s − k_i cos θ_i (rad/µm) for a signal at internal
/// angle theta_s_int with the idler angle chosen so that Δk_x = 0.
inline double longitudinal_mismatch(const CrystalConfig& crystal, double lambda_p_um, double lambda_s_um,
                                    double theta_s_int, double theta_pm_rad) {
    const double lambda_i = idler_wavelength(lambda_p_um, lambda_s_um);
    const double kp = wavenumber(index_extraordinary(crystal, lambda_p_um, theta_pm_rad), lambda_p_um);
    const double ks = wavenumber(index_ordinary(crystal, lambda_s_um), lambda_s_um);
    const double ki = wavenumber(index_ordinary(crystal, lambda_i), lambda_i);
    const double sin_i = -ks * std::sin(theta_s_int) / ki;
    if (std::abs(sin_i) >= 1.0) throw DomainError("no idler direction cancels the signal transverse wavevector");
    const double cos_i = std::sqrt(1.0 - sin_i * sin_i);
    return kp - ks * std::cos(theta_s_int) - ki * cos_i;
}

inline constexpr double kPhaseMatchBracketLo = 0.01;
inline constexpr double kPhaseMatchBracketHi = 1.55;

/// Crystal angle at which a signal emitted at external angle theta_s_ext is
/// phase matched (Δk_z = Δk_x = 0). Bisection over (0.01, 1.55) rad.
inline double phase_matching_angle(const CrystalConfig& crystal, double lambda_p_um, double lambda_s_um,
                                   double theta_s_ext_rad) {
    idler_wavelength(lambda_p_um, lambda_s_um);
    const double theta_s = internal_angle(theta_s_ext_rad, index_ordinary(crystal, lambda_s_um));
    auto residual = [&](double theta) {
        return longitudinal_mismatch(crystal, lambda_p_um, lambda_s_um, theta_s, theta);
    };

    double lo = kPhaseMatchBracketLo;
    double hi = kPhaseMatchBracketHi;
    double f_lo = residual(lo);
    const double f_hi = residual(hi);
    if (f_lo * f_hi > 0.0) {
        std::ostringstream os;
        os << "unphasematchable: dk_z has the same sign at theta = " << lo << " rad (" << f_lo
           << " rad/um) and theta = " << hi << " rad (" << f_hi << " rad/um)";
        throw UnphasematchableError(os.str(), f_lo, f_hi);
    }
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = residual(mid);
        if (f_lo * f_mid <= 0.0) {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Crystal angle for which the signal is phase matched along the pump
/// Poynting vector, i.e. at internal angle θ_s = ρ(θ). Fixed-point iteration
/// on phase_matching_angle.
inline double phase_matching_angle_along_walkoff(const CrystalConfig& crystal, double lambda_p_um,
                                                 double lambda_s_um) {
    const double ns = index_ordinary(crystal, lambda_s_um);
    double theta = phase_matching_angle(crystal, lambda_p_um, lambda_s_um, 0.0);
    for (int it = 0; it < 50; ++it) {
        const double rho = walkoff_angle(crystal, lambda_p_um, theta);
        const double next = phase_matching_angle(crystal, lambda_p_um, lambda_s_um, external_angle(rho, ns));
        if (std::abs(next - theta) < 1e-13) return next;
        theta = next;
    }
    throw NumericalError("walk-off phase-matching iteration did not settle");
}

inline constexpr double kSpeedOfLightUmPerPs = 299.792458;
inline constexpr double kGroupIndexStepUm = 1e-4;

/// n_g = n − λ·dn/dλ, centered difference with a 0.1 nm step.
inline double group_index(const CrystalConfig& crystal, double lambda_um, Polarization pol, double theta_rad) {
    const double h = kGroupIndexStepUm;
    detail::require_in_window(crystal, lambda_um);
    const double n = refractive_index(crystal, lambda_um, pol, theta_rad);
    const double np = refractive_index(crystal, lambda_um + h, pol, theta_rad);
    const double nm = refractive_index(crystal, lambda_um - h, pol, theta_rad);
    return n - lambda_um * (np - nm) / (2.0 * h);
}

struct Beam {
    double lambda_um;
    Polarization pol;
    double theta_rad;
};

/// Group delay accumulated between two beams over length_mm, in ps.
inline double group_delay_ps(const CrystalConfig& crystal, const Beam& a, const Beam& b, double length_mm) {
    if (!(length_mm >= 0.0)) throw DomainError("length must be nonnegative");
    const double nga = group_index(crystal, a.lambda_um, a.pol, a.theta_rad);
    const double ngb = group_index(crystal, b.lambda_um, b.pol, b.theta_rad);
    return length_mm * 1e3 * std::abs(nga - ngb) / kSpeedOfLightUmPerPs;
}

/// Length over which an extraordinary pump and an ordinary signal separate
/// by the pump pulse duration.
inline double walkoff_limited_length_mm(const CrystalConfig& crystal, double lambda_p_um, double lambda_s_um,
                                        double pulse_ps) {
    const double per_mm = group_delay_ps(crystal, {lambda_p_um, Polarization::Extraordinary, crystal.theta_pm_rad},
                                         {lambda_s_um, Polarization::Ordinary, 0.0}, 1.0);
    if (per_mm <= 0.0) return std::numeric_limits<double>::infinity();
    return pulse_ps / per_mm;
}

/// Explicit effective length if set, else min(L, walk-off-limited length).
inline double resolve_effective_length_mm(const CrystalConfig& crystal, double lambda_p_um, double lambda_s_um,
                                          double pulse_ps) {
    if (crystal.effective_length_mm) return *crystal.effective_length_mm;
    return std::min(crystal.length_mm, walkoff_limited_length_mm(crystal, lambda_p_um, lambda_s_um, pulse_ps));
}

inline void CrystalConfig::validate() const {
    if (!(length_mm > 0.0)) throw ValidationError("crystal length_mm must be > 0");
    if (effective_length_mm && !(*effective_length_mm > 0.0 && *effective_length_mm <= length_mm))
        throw ValidationError("effective_length_mm must lie in (0, length_mm]");
    if (!(theta_pm_rad > 0.0 && theta_pm_rad < std::numbers::pi / 2))
        throw ValidationError("theta_pm must lie in (0, pi/2)");
    if (!(window.min_um > 0.0 && window.max_um > window.min_um))
        throw ValidationError("transparency window must satisfy 0 < min < max");
    constexpr int kProbe = 256;
    for (int i = 0; i <= kProbe; ++i) {
        const double l = window.min_um + (window.max_um - window.min_um) * i / kProbe;
        for (const Sellmeier* s : {&sellmeier_o, &sellmeier_e}) {
            const double n2 = s->index_squared(l);
            if (!(n2 > 1.0) || !std::isfinite(n2)) {
                std::ostringstream os;
                os << "Sellmeier coefficients of " << name << " give n <= 1 at " << l << " um";
                throw ValidationError(os.str());
            }
        }
    }
}

}  // namespace opg
