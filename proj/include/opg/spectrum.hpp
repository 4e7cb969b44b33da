#pragma once

// Wavelength-angular intensity maps and the analyses run on them.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "opg/error.hpp"

namespace opg {

struct SpectrumMap {
    std::vector<double> lambda_um;      ///< row coordinates
    std::vector<double> theta_ext_deg;  ///< column coordinates
    Eigen::MatrixXd intensity;

    SpectrumMap() = default;
    SpectrumMap(std::vector<double> lambdas, std::vector<double> thetas)
        : lambda_um(std::move(lambdas)),
          theta_ext_deg(std::move(thetas)),
          intensity(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(lambda_um.size()),
                                          static_cast<Eigen::Index>(theta_ext_deg.size()))) {}

    Eigen::Index rows() const { return intensity.rows(); }
    Eigen::Index cols() const { return intensity.cols(); }
};

enum class Normalization {
    None,
    /// Whole map scaled to a maximum of 1.
    Global,
    /// Wavelengths below and above degeneracy (2λ_p) scaled separately, so
    /// the idler-side and signal-side parts each peak at 1.
    PerBranch,
    /// Every wavelength row scaled to a maximum of 1.
    PerWavelength,
};

inline void normalize(SpectrumMap& map, Normalization mode, double lambda_p_um = 0.0) {
    auto scale_rows = [&](auto&& pick) {
        double peak = 0.0;
        for (Eigen::Index r = 0; r < map.rows(); ++r)
            if (pick(r)) peak = std::max(peak, map.intensity.row(r).maxCoeff());
        if (peak <= 0.0) return;
        for (Eigen::Index r = 0; r < map.rows(); ++r)
            if (pick(r)) map.intensity.row(r) /= peak;
    };
    switch (mode) {
        case Normalization::None:
            return;
        case Normalization::Global:
            scale_rows([](Eigen::Index) { return true; });
            return;
        case Normalization::PerBranch: {
            if (!(lambda_p_um > 0.0)) throw ValidationError("per-branch normalization needs the pump wavelength");
            const double degenerate = 2.0 * lambda_p_um;
            scale_rows([&](Eigen::Index r) { return map.lambda_um[static_cast<std::size_t>(r)] < degenerate; });
            scale_rows([&](Eigen::Index r) { return map.lambda_um[static_cast<std::size_t>(r)] >= degenerate; });
            return;
        }
        case Normalization::PerWavelength:
            for (Eigen::Index r = 0; r < map.rows(); ++r) {
                const double peak = map.intensity.row(r).maxCoeff();
                if (peak > 0.0) map.intensity.row(r) /= peak;
            }
            return;
    }
}

/// Sub-sample peak position from a 3-point parabola through (j−1, j, j+1).
inline double parabolic_peak(const std::vector<double>& x, const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Index j) {
    if (j <= 0 || j >= y.size() - 1) return x[static_cast<std::size_t>(j)];
    const double ym = y[j - 1], y0 = y[j], yp = y[j + 1];
    const double denom = ym - 2.0 * y0 + yp;
    if (denom >= 0.0) return x[static_cast<std::size_t>(j)];
    const double delta = 0.5 * (ym - yp) / denom;
    const double step = x[static_cast<std::size_t>(j + 1)] - x[static_cast<std::size_t>(j)];
    return x[static_cast<std::size_t>(j)] + delta * step;
}

struct RidgePoint {
    double lambda_um;
    double theta_peak_deg;
    double peak;
};

struct LinearFit {
    double slope;
    double intercept;
};

struct Ridge {
    std::vector<RidgePoint> points;
    /// dθ/dλ (deg/µm) over the requested band.
    std::optional<LinearFit> chirp;
    std::vector<std::string> warnings;
};

inline LinearFit least_squares_line(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i];
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0) throw NumericalError("line fit needs at least two distinct abscissae");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

/// Per-wavelength emission maximum with parabolic refinement; the angular
/// chirp dθ/dλ is fitted over [band.first, band.second] when given.
inline Ridge spectral_ridge(const SpectrumMap& map, std::optional<std::pair<double, double>> band = std::nullopt) {
    if (map.rows() == 0 || map.cols() == 0) throw ValidationError("empty spectrum");
    Ridge ridge;
    for (Eigen::Index r = 0; r < map.rows(); ++r) {
        const auto row = map.intensity.row(r).transpose();
        Eigen::Index j = 0;
        const double peak = row.maxCoeff(&j);
        if (peak == row.minCoeff()) {
            ridge.warnings.push_back("flat slice at lambda = " + std::to_string(map.lambda_um[static_cast<std::size_t>(r)]) +
                                     " um skipped");
            continue;
        }
        ridge.points.push_back({map.lambda_um[static_cast<std::size_t>(r)], parabolic_peak(map.theta_ext_deg, row, j), peak});
    }
    if (band) {
        std::vector<double> xs, ys;
        for (const auto& p : ridge.points)
            if (p.lambda_um >= band->first && p.lambda_um <= band->second) {
                xs.push_back(p.lambda_um);
                ys.push_back(p.theta_peak_deg);
            }
        if (xs.size() >= 2) ridge.chirp = least_squares_line(xs, ys);
        else ridge.warnings.push_back("fewer than two ridge points inside the chirp band");
    }
    return ridge;
}

namespace detail {

inline double crossing(double x0, double y0, double x1, double y1, double level) {
    if (y1 == y0) return x0;
    return x0 + (level - y0) * (x1 - x0) / (y1 - y0);
}

}  // namespace detail

/// Full width at half maximum: distance between the outermost half-maximum
/// crossings, linearly interpolated. For a multi-peaked profile this spans
/// every lobe that reaches half of the maximum.
inline double half_max_width(const std::vector<double>& x, const Eigen::Ref<const Eigen::VectorXd>& y) {
    const Eigen::Index n = y.size();
    if (n < 2) return 0.0;
    const double level = 0.5 * y.maxCoeff();
    Eigen::Index first = 0, last = n - 1;
    while (first < n && y[first] < level) ++first;
    while (last >= 0 && y[last] < level) --last;
    const auto X = [&](Eigen::Index i) { return x[static_cast<std::size_t>(i)]; };
    const double left = first > 0 ? detail::crossing(X(first - 1), y[first - 1], X(first), y[first], level) : X(0);
    const double right = last < n - 1 ? detail::crossing(X(last), y[last], X(last + 1), y[last + 1], level) : X(n - 1);
    return right - left;
}

/// Width of the single lobe containing the maximum, at half its height.
inline double peak_lobe_width(const std::vector<double>& x, const Eigen::Ref<const Eigen::VectorXd>& y) {
    const Eigen::Index n = y.size();
    if (n < 2) return 0.0;
    Eigen::Index j = 0;
    const double level = 0.5 * y.maxCoeff(&j);
    Eigen::Index a = j, b = j;
    while (a > 0 && y[a - 1] >= level) --a;
    while (b < n - 1 && y[b + 1] >= level) ++b;
    const auto X = [&](Eigen::Index i) { return x[static_cast<std::size_t>(i)]; };
    const double left = a > 0 ? detail::crossing(X(a - 1), y[a - 1], X(a), y[a], level) : X(0);
    const double right = b < n - 1 ? detail::crossing(X(b), y[b], X(b + 1), y[b + 1], level) : X(n - 1);
    return right - left;
}

/// Peak height, position and half-maximum lobe width of one emission branch.
struct BranchStats {
    double peak = 0.0;
    double theta_peak_deg = 0.0;
    double width_deg = 0.0;
};

/// Splits an angular profile at split_deg into the lower (θ < split) and
/// upper (θ ≥ split) branches and measures each one separately.
inline std::pair<BranchStats, BranchStats> branch_stats(const std::vector<double>& theta_deg,
                                                        const Eigen::Ref<const Eigen::VectorXd>& y,
                                                        double split_deg = 0.0) {
    auto measure = [&](bool upper) {
        std::vector<double> x;
        std::vector<double> v;
        for (std::size_t j = 0; j < theta_deg.size(); ++j)
            if ((theta_deg[j] >= split_deg) == upper) {
                x.push_back(theta_deg[j]);
                v.push_back(y[static_cast<Eigen::Index>(j)]);
            }
        if (x.size() < 2) throw ValidationError("branch has fewer than two samples");
        const Eigen::Map<const Eigen::VectorXd> vm(v.data(), static_cast<Eigen::Index>(v.size()));
        Eigen::Index j = 0;
        BranchStats b;
        b.peak = vm.maxCoeff(&j);
        b.theta_peak_deg = x[static_cast<std::size_t>(j)];
        b.width_deg = peak_lobe_width(x, vm);
        return b;
    };
    return {measure(false), measure(true)};
}

struct Region {
    std::size_t cells = 0;
    double lambda_min_um = 0, lambda_max_um = 0;
    double theta_min_deg = 0, theta_max_deg = 0;
    /// Fraction of the map's total intensity inside the region.
    double energy_fraction = 0;
};

/// Connected components of the cells with intensity ≥ threshold·max, largest
/// energy first. Cells in one row are linked to their column neighbours;
/// cells in adjacent rows are linked when their angles differ by at most
/// link_deg (0 links only the same column). A nonzero link_deg keeps a
/// steeply chirped ridge in one piece when it moves several columns per row.
inline std::vector<Region> bright_regions(const SpectrumMap& map, double threshold, double link_deg = 0.0) {
    const Eigen::Index R = map.rows(), C = map.cols();
    std::vector<Region> out;
    if (R == 0 || C == 0) return out;
    const double level = threshold * map.intensity.maxCoeff();
    const double total = map.intensity.sum();
    std::vector<int> label(static_cast<std::size_t>(R * C), -1);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> stack;
    for (Eigen::Index r0 = 0; r0 < R; ++r0)
        for (Eigen::Index c0 = 0; c0 < C; ++c0) {
            if (label[static_cast<std::size_t>(r0 * C + c0)] >= 0 || map.intensity(r0, c0) < level) continue;
            const int id = static_cast<int>(out.size());
            Region reg;
            reg.lambda_min_um = reg.lambda_max_um = map.lambda_um[static_cast<std::size_t>(r0)];
            reg.theta_min_deg = reg.theta_max_deg = map.theta_ext_deg[static_cast<std::size_t>(c0)];
            double energy = 0.0;
            stack.assign(1, {r0, c0});
            label[static_cast<std::size_t>(r0 * C + c0)] = id;
            while (!stack.empty()) {
                const auto [r, c] = stack.back();
                stack.pop_back();
                ++reg.cells;
                energy += map.intensity(r, c);
                const double l = map.lambda_um[static_cast<std::size_t>(r)];
                const double t = map.theta_ext_deg[static_cast<std::size_t>(c)];
                reg.lambda_min_um = std::min(reg.lambda_min_um, l);
                reg.lambda_max_um = std::max(reg.lambda_max_um, l);
                reg.theta_min_deg = std::min(reg.theta_min_deg, t);
                reg.theta_max_deg = std::max(reg.theta_max_deg, t);
                auto visit = [&](Eigen::Index rr, Eigen::Index cc) {
                    if (rr < 0 || rr >= R || cc < 0 || cc >= C) return;
                    auto& lab = label[static_cast<std::size_t>(rr * C + cc)];
                    if (lab >= 0 || map.intensity(rr, cc) < level) return;
                    lab = id;
                    stack.emplace_back(rr, cc);
                };
                visit(r, c - 1);
                visit(r, c + 1);
                for (const Eigen::Index rr : {r - 1, r + 1}) {
                    if (rr < 0 || rr >= R) continue;
                    for (Eigen::Index cc = 0; cc < C; ++cc)
                        if (std::abs(map.theta_ext_deg[static_cast<std::size_t>(cc)] - t) <= link_deg || cc == c)
                            visit(rr, cc);
                }
            }
            reg.energy_fraction = total > 0.0 ? energy / total : 0.0;
            out.push_back(reg);
        }
    std::sort(out.begin(), out.end(), [](const Region& a, const Region& b) { return a.energy_fraction > b.energy_fraction; });
    return out;
}

}  // namespace opg
