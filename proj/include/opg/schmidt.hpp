#pragma once

// Schmidt decomposition of the two-photon amplitude and the high-gain
// redistribution of its eigenvalues, λ'_n ∝ sinh²(Γ√λ_n).

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <sstream>
#include <vector>

#include "opg/error.hpp"
#include "opg/parallel.hpp"
#include "opg/spectrum.hpp"
#include "opg/tpa.hpp"

namespace opg {

/// Participation ratio (Σp)²/Σp², the effective number of occupied modes.
inline double participation_ratio(const Eigen::Ref<const Eigen::VectorXd>& weights) {
    const double sum = weights.sum();
    const double sq = weights.squaredNorm();
    if (!(sq > 0.0)) throw DegenerateInputError("participation ratio of an all-zero distribution");
    return sum * sum / sq;
}

/// log(sinh x) for x ≥ 0 without overflow; −∞ at 0.
inline double log_sinh(double x) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    if (x < 20.0) return std::log(std::sinh(x));
    return x + std::log1p(-std::exp(-2.0 * x)) - std::numbers::ln2;
}

struct SchmidtSpectrum {
    /// Nonincreasing, Σ = 1 over the retained modes' parent decomposition.
    Eigen::VectorXd eigenvalues;
    /// Columns are u_n sampled on theta_s, orthonormal under the grid weight.
    Eigen::MatrixXd modes_signal;
    /// Columns are v_n sampled on theta_i.
    Eigen::MatrixXd modes_idler;
    UniformAxis theta_s;
    UniformAxis theta_i;
    /// ‖F‖ = (∫∫|F|²)^½, so F = norm·Σ√λ_n u_n v_n.
    double norm = 0.0;
    /// Σ λ_n over the retained modes.
    double captured_weight = 1.0;

    double gain_gamma = 0.0;
    /// λ'_n, normalized to Σ = 1; equal to eigenvalues when Γ = 0.
    Eigen::VectorXd amplified_eigenvalues;
    /// log Σ_n sinh²(Γ√λ_n); −∞ when Γ = 0.
    double log_amplified_weight = -std::numeric_limits<double>::infinity();

    Eigen::Index mode_count() const { return eigenvalues.size(); }

    /// F ≈ norm·Σ_{n<count} √λ'_n u_n v_n (amplified weights when Γ > 0).
    Eigen::MatrixXd reconstruct(Eigen::Index count = -1) const {
        const Eigen::Index m = count < 0 ? mode_count() : std::min(count, mode_count());
        const Eigen::VectorXd w = amplified_eigenvalues.head(m).cwiseSqrt() * norm;
        return modes_signal.leftCols(m) * w.asDiagonal() * modes_idler.leftCols(m).transpose();
    }
};

inline constexpr double kDefaultMinCapturedWeight = 0.999;

/// SVD of the quadrature-weighted amplitude √(Δθ_s Δθ_i)·F. Keeps at most
/// n_modes pairs (n_modes ≤ 0 keeps all) and throws when they carry less than
/// min_captured_weight of Σλ_n.
inline SchmidtSpectrum schmidt_decompose(const TpaGrid& tpa, Eigen::Index n_modes = 64,
                                         double min_captured_weight = kDefaultMinCapturedWeight) {
    const auto& F = tpa.values;
    if (F.size() == 0 || !F.allFinite()) throw DegenerateInputError("amplitude grid is empty or non-finite");
    if (F.cwiseAbs().maxCoeff() == 0.0) throw DegenerateInputError("amplitude is identically zero");

    const double ds = tpa.grid.theta_s.step();
    const double di = tpa.grid.theta_i.step();
    const double w = std::sqrt(ds * di);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(F * w, Eigen::ComputeThinU | Eigen::ComputeThinV);

    const Eigen::VectorXd s2 = svd.singularValues().cwiseAbs2();
    const double total = s2.sum();
    const Eigen::Index full = s2.size();
    const Eigen::Index keep = n_modes <= 0 ? full : std::min(n_modes, full);

    SchmidtSpectrum out;
    out.theta_s = tpa.grid.theta_s;
    out.theta_i = tpa.grid.theta_i;
    out.norm = std::sqrt(total);
    out.eigenvalues = s2.head(keep) / total;
    out.captured_weight = out.eigenvalues.sum();
    if (out.captured_weight < min_captured_weight) {
        std::ostringstream os;
        os << keep << " Schmidt modes capture only " << out.captured_weight << " of the weight (need "
           << min_captured_weight << ")";
        throw NumericalError(os.str());
    }
    out.modes_signal = svd.matrixU().leftCols(keep) / std::sqrt(ds);
    out.modes_idler = svd.matrixV().leftCols(keep) / std::sqrt(di);

    // Sign convention: the largest-magnitude sample of every u_n is positive.
    for (Eigen::Index n = 0; n < keep; ++n) {
        Eigen::Index j = 0;
        out.modes_signal.col(n).cwiseAbs().maxCoeff(&j);
        if (out.modes_signal(j, n) < 0.0) {
            out.modes_signal.col(n) *= -1.0;
            out.modes_idler.col(n) *= -1.0;
        }
    }
    out.amplified_eigenvalues = out.eigenvalues;
    return out;
}

/// Per-mode amplified weights sinh²(Γ√λ_n)/Γ², reducing to λ_n at Γ = 0.
/// Returned as logarithms so large gains do not overflow.
inline Eigen::VectorXd log_gain_weights(const Eigen::Ref<const Eigen::VectorXd>& eigenvalues, double gamma) {
    Eigen::VectorXd out(eigenvalues.size());
    for (Eigen::Index n = 0; n < eigenvalues.size(); ++n) {
        const double lam = std::max(eigenvalues[n], 0.0);
        if (gamma == 0.0) {
            out[n] = lam > 0.0 ? std::log(lam) : -std::numeric_limits<double>::infinity();
        } else {
            out[n] = 2.0 * (log_sinh(gamma * std::sqrt(lam)) - std::log(gamma));
        }
    }
    return out;
}

/// λ'_n = sinh²(Γ√λ_n) / Σ_m sinh²(Γ√λ_m). The modes are left unchanged.
inline SchmidtSpectrum amplify_eigenvalues(SchmidtSpectrum spectrum, double gamma) {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("gain Gamma must be a finite value >= 0");
    spectrum.gain_gamma = gamma;
    if (gamma == 0.0) {
        spectrum.amplified_eigenvalues = spectrum.eigenvalues;
        spectrum.log_amplified_weight = -std::numeric_limits<double>::infinity();
        return spectrum;
    }
    Eigen::VectorXd logs(spectrum.eigenvalues.size());
    for (Eigen::Index n = 0; n < logs.size(); ++n)
        logs[n] = 2.0 * log_sinh(gamma * std::sqrt(std::max(spectrum.eigenvalues[n], 0.0)));
    const double top = logs.maxCoeff();
    Eigen::VectorXd rel = (logs.array() - top).exp();
    const double sum = rel.sum();
    spectrum.amplified_eigenvalues = rel / sum;
    spectrum.log_amplified_weight = top + std::log(sum);
    return spectrum;
}

/// K = 1/Σλ_n² of the (amplified, when Γ > 0) eigenvalues.
inline double effective_mode_number(const SchmidtSpectrum& spectrum) {
    return 1.0 / spectrum.amplified_eigenvalues.squaredNorm();
}

/// Schmidt eigenpairs of one slice through the signal-side Gram matrix
/// W·Wᵀ (W the weighted amplitude): eigenvalues s_n² (descending, clamped at
/// 0) and the corresponding unit-norm columns of U.
struct GramSpectrum {
    Eigen::VectorXd s2;
    Eigen::MatrixXd u;
};

/// W·Wᵀ·Δθ_s·Δθ_i, skipping row pairs whose supports do not overlap.
inline Eigen::MatrixXd weighted_gram(const TpaGrid& tpa) {
    const double w2 = tpa.grid.theta_s.step() * tpa.grid.theta_i.step();
    const Eigen::Index n = tpa.values.rows();
    const Eigen::Index ni = tpa.values.cols();
    const Eigen::MatrixXd cols = tpa.values.transpose();  // row j of F is column j here
    auto support = [&](Eigen::Index j) {
        return tpa.support.empty() ? std::pair<Eigen::Index, Eigen::Index>{0, ni}
                                   : tpa.support[static_cast<std::size_t>(j)];
    };
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto [fj, ej] = support(j);
        for (Eigen::Index k = 0; k <= j; ++k) {
            const auto [fk, ek] = support(k);
            const Eigen::Index lo = std::max(fj, fk), hi = std::min(ej, ek);
            if (hi <= lo) continue;
            const double v = cols.col(j).segment(lo, hi - lo).dot(cols.col(k).segment(lo, hi - lo)) * w2;
            gram(j, k) = v;
            gram(k, j) = v;
        }
    }
    return gram;
}

inline GramSpectrum gram_spectrum(const TpaGrid& tpa) {
    const Eigen::MatrixXd gram = weighted_gram(tpa);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw NumericalError("Gram eigensolve failed");
    const Eigen::Index n = gram.rows();
    GramSpectrum out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
    for (Eigen::Index k = 0; k < n; ++k) {
        out.s2[k] = std::max(eig.eigenvalues()[n - 1 - k], 0.0);
        out.u.col(k) = eig.eigenvectors().col(n - 1 - k);
    }
    return out;
}

/// Signal intensity ∫|F'|² dθ_i of the amplified amplitude for each Γ:
/// I_Γ(θ_s) = ‖F‖²·Σ_n sinh²(Γ√λ_n)/Γ² · |u_n(θ_s)|². Dividing by Γ² keeps
/// slices comparable and makes Γ → 0 reproduce the low-gain intensity.
inline std::vector<Eigen::VectorXd> amplified_slice_intensity(const TpaGrid& tpa, std::span<const double> gammas) {
    for (double g : gammas)
        if (!(g >= 0.0) || !std::isfinite(g)) throw DomainError("gain Gamma must be a finite value >= 0");
    std::vector<Eigen::VectorXd> out;
    out.reserve(gammas.size());
    if (tpa.values.cwiseAbs().maxCoeff() == 0.0) {
        for (std::size_t k = 0; k < gammas.size(); ++k) out.push_back(Eigen::VectorXd::Zero(tpa.values.rows()));
        return out;
    }
    const GramSpectrum gs = gram_spectrum(tpa);
    const double total = gs.s2.sum();
    const Eigen::VectorXd lam = gs.s2 / total;
    const Eigen::MatrixXd u2 = gs.u.cwiseAbs2() / tpa.grid.theta_s.step();
    for (double gamma : gammas) {
        const Eigen::VectorXd logw = log_gain_weights(lam, gamma);
        Eigen::VectorXd weights(lam.size());
        for (Eigen::Index n = 0; n < lam.size(); ++n) weights[n] = total * std::exp(logw[n]);
        if (!weights.allFinite()) throw NumericalError("amplified weight overflows double precision");
        out.push_back(u2 * weights);
    }
    return out;
}

/// High-gain wavelength-angular maps, one per Γ, sharing a single
/// decomposition per slice.
inline std::vector<SpectrumMap> high_gain_spectra(std::span<const double> lambda_s_um,
                                                  std::span<const double> theta_ext_deg, const PumpConfig& pump,
                                                  const CrystalConfig& crystal, std::span<const double> gammas,
                                                  const TpaOptions& options = {}, Execution exec = {}) {
    if (lambda_s_um.empty()) throw ValidationError("empty wavelength band");
    if (theta_ext_deg.empty()) throw ValidationError("empty angle band");
    if (gammas.empty()) throw ValidationError("no gain values requested");
    std::vector<SpectrumMap> maps;
    for (std::size_t k = 0; k < gammas.size(); ++k)
        maps.emplace_back(std::vector<double>(lambda_s_um.begin(), lambda_s_um.end()),
                          std::vector<double>(theta_ext_deg.begin(), theta_ext_deg.end()));
    parallel_for(lambda_s_um.size(), exec, [&](std::size_t k) {
        const SliceGeometry g = slice_geometry(lambda_s_um[k], pump, crystal, options);
        const TpaGrid tpa = build_tpa_grid(slice_grid(theta_ext_deg, g, options), g, Execution{1});
        check_idler_coverage(tpa);
        const auto rows = amplified_slice_intensity(tpa, gammas);
        for (std::size_t m = 0; m < gammas.size(); ++m)
            maps[m].intensity.row(static_cast<Eigen::Index>(k)) = rows[m].transpose();
    });
    return maps;
}

inline SpectrumMap high_gain_spectrum(std::span<const double> lambda_s_um, std::span<const double> theta_ext_deg,
                                      const PumpConfig& pump, const CrystalConfig& crystal, double gamma,
                                      const TpaOptions& options = {}, Execution exec = {}) {
    const double g[] = {gamma};
    return std::move(high_gain_spectra(lambda_s_um, theta_ext_deg, pump, crystal, g, options, exec).front());
}

}  // namespace opg
