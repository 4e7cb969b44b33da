#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "opg/schmidt.hpp"
#include "test_support.hpp"

using namespace opg;
using opg::testing::bbo;

namespace {

TpaGrid sampled(const UniformAxis& ts, const UniformAxis& ti, auto&& f) {
    TpaGrid t;
    t.grid = AngularGrid{ts, ti, 1.0};
    t.values.resize(ts.size(), ti.size());
    for (Eigen::Index r = 0; r < ts.size(); ++r)
        for (Eigen::Index c = 0; c < ti.size(); ++c) t.values(r, c) = f(ts[r], ti[c]);
    return t;
}

TpaGrid double_gaussian(double a, double b, int n) {
    const double span = 6.0 * std::max(a, b);
    const UniformAxis axis(-span, span, n);
    return sampled(axis, axis, [&](double s, double i) {
        return std::exp(-(s + i) * (s + i) / (4 * a * a)) * std::exp(-(s - i) * (s - i) / (4 * b * b));
    });
}

// Schmidt number through a dense symmetric eigensolve of the weighted Gram
// matrix, independent of the SVD route.
double dense_oracle_k(const TpaGrid& t) {
    const Eigen::MatrixXd w = t.values * std::sqrt(t.grid.theta_s.step() * t.grid.theta_i.step());
    const Eigen::MatrixXd gram = w * w.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0) / eig.eigenvalues().cwiseMax(0.0).sum();
    return 1.0 / lam.squaredNorm();
}

// A bright slice of the fig1 scenario configuration.
TpaGrid fig1_slice(double lambda_s = 1.6, int ns = 256) {
    const auto c = bbo();
    const auto pump = PumpConfig::from_fwhm(0.355, 130.0);
    const auto g = slice_geometry(lambda_s, pump, c);
    std::vector<double> th(static_cast<std::size_t>(ns));
    for (int j = 0; j < ns; ++j) th[static_cast<std::size_t>(j)] = -16.0 + 32.0 * j / (ns - 1);
    return build_tpa_grid(slice_grid(th, g), g);
}

SchmidtSpectrum with_eigenvalues(std::vector<double> v) {
    SchmidtSpectrum s;
    s.eigenvalues = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    s.amplified_eigenvalues = s.eigenvalues;
    return s;
}

}  // namespace

TEST(Schmidt, SeparableInputIsRankOne) {
    const UniformAxis ts(-1, 1, 80), ti(-2, 2, 120);
    const auto t = sampled(ts, ti, [](double s, double i) { return std::exp(-s * s) * (1 + i * i) * std::exp(-i * i); });
    const auto s = schmidt_decompose(t);
    EXPECT_NEAR(s.eigenvalues[0], 1.0, 1e-12);
    for (Eigen::Index n = 1; n < s.mode_count(); ++n) EXPECT_LT(s.eigenvalues[n], 1e-10);
    EXPECT_NEAR(effective_mode_number(s), 1.0, 1e-9);
}

TEST(Schmidt, DoubleGaussianSchmidtNumber) {
    const double a = 1.0, b = 0.3;
    const double analytic = 0.5 * (a / b + b / a);
    const auto big = double_gaussian(a, b, 1024);
    EXPECT_NEAR(dense_oracle_k(big), analytic, 1e-3 * analytic);
    const auto t = double_gaussian(a, b, 400);
    const auto s = schmidt_decompose(t);
    EXPECT_NEAR(effective_mode_number(s), analytic, 1e-3 * analytic);
    // Symmetric under a ↔ b.
    EXPECT_NEAR(effective_mode_number(schmidt_decompose(double_gaussian(b, a, 400))), analytic, 1e-3 * analytic);
}

TEST(Schmidt, Invariants) {
    const auto t = fig1_slice();
    const auto s = schmidt_decompose(t, 0);
    EXPECT_NEAR(s.eigenvalues.sum(), 1.0, 1e-10);
    for (Eigen::Index n = 1; n < s.mode_count(); ++n) ASSERT_LE(s.eigenvalues[n], s.eigenvalues[n - 1]);
    const double ds = t.grid.theta_s.step(), di = t.grid.theta_i.step();
    const Eigen::MatrixXd gu = s.modes_signal.leftCols(20).transpose() * s.modes_signal.leftCols(20) * ds;
    const Eigen::MatrixXd gv = s.modes_idler.leftCols(20).transpose() * s.modes_idler.leftCols(20) * di;
    EXPECT_LT((gu - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((gv - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff(), 1e-8);
    // Largest-magnitude sample of each signal mode is positive.
    for (Eigen::Index n = 0; n < 20; ++n) {
        Eigen::Index j = 0;
        s.modes_signal.col(n).cwiseAbs().maxCoeff(&j);
        EXPECT_GT(s.modes_signal(j, n), 0.0);
    }
}

TEST(Schmidt, FullRankReconstruction) {
    const auto t = fig1_slice();
    const auto s = schmidt_decompose(t, 0);
    const double peak = t.values.cwiseAbs().maxCoeff();
    EXPECT_LT((s.reconstruct() - t.values).cwiseAbs().maxCoeff(), 1e-6 * peak);
}

TEST(Schmidt, ResidualDecreasesWithModeCount) {
    const auto t = fig1_slice(1.6, 128);
    const auto s = schmidt_decompose(t, 0);
    double prev = HUGE_VAL;
    for (Eigen::Index m : {1, 2, 4, 8, 16, 32, 64, 128}) {
        const double r = (s.reconstruct(m) - t.values).norm();
        EXPECT_LE(r, prev + 1e-12) << m;
        prev = r;
    }
}

TEST(Schmidt, Errors) {
    const UniformAxis ax(-1, 1, 16);
    EXPECT_THROW(schmidt_decompose(sampled(ax, ax, [](double, double) { return 0.0; })), DegenerateInputError);
    const auto t = double_gaussian(1.0, 0.1, 200);
    EXPECT_THROW(schmidt_decompose(t, 2), NumericalError);
    const auto s = schmidt_decompose(t);
    EXPECT_THROW(amplify_eigenvalues(s, -1.0), DomainError);
    EXPECT_THROW(amplify_eigenvalues(s, std::nan("")), DomainError);
}

TEST(Schmidt, SmallGainLimit) {
    const auto s = schmidt_decompose(fig1_slice(), 0);
    const auto a = amplify_eigenvalues(s, 1e-6);
    EXPECT_LT((a.amplified_eigenvalues - s.eigenvalues / s.eigenvalues.sum()).cwiseAbs().maxCoeff(), 1e-8);
    const auto z = amplify_eigenvalues(s, 0.0);
    EXPECT_TRUE((z.amplified_eigenvalues.array() == s.eigenvalues.array()).all());
}

TEST(Schmidt, EqualEigenvaluesStayEqual) {
    const auto s = amplify_eigenvalues(with_eigenvalues({0.3, 0.3, 0.2, 0.2}), 7.0);
    EXPECT_DOUBLE_EQ(s.amplified_eigenvalues[0], s.amplified_eigenvalues[1]);
    EXPECT_DOUBLE_EQ(s.amplified_eigenvalues[2], s.amplified_eigenvalues[3]);
    EXPECT_NEAR(s.amplified_eigenvalues.sum(), 1.0, 1e-12);
}

TEST(Schmidt, OrderPreservedOnRandomSpectra) {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + static_cast<int>(u(rng) * 30);
        Eigen::VectorXd v(n);
        for (int k = 0; k < n; ++k) v[k] = std::pow(u(rng), 3.0);
        v /= v.sum();
        const double gamma = 60.0 * u(rng);
        const auto s = amplify_eigenvalues(with_eigenvalues(std::vector<double>(v.data(), v.data() + n)), gamma);
        ASSERT_NEAR(s.amplified_eigenvalues.sum(), 1.0, 1e-10);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (v[i] >= v[j]) { ASSERT_GE(s.amplified_eigenvalues[i], s.amplified_eigenvalues[j]) << trial; }
    }
}

TEST(Schmidt, HugeGainDoesNotOverflow) {
    const auto s = amplify_eigenvalues(with_eigenvalues({0.9, 0.1}), 5000.0);
    EXPECT_TRUE(s.amplified_eigenvalues.allFinite());
    EXPECT_NEAR(s.amplified_eigenvalues[0], 1.0, 1e-12);
    EXPECT_TRUE(std::isfinite(s.log_amplified_weight));
}

TEST(Schmidt, EffectiveModeNumberBasics) {
    EXPECT_DOUBLE_EQ(effective_mode_number(with_eigenvalues({1.0})), 1.0);
    EXPECT_NEAR(effective_mode_number(with_eigenvalues({0.25, 0.25, 0.25, 0.25})), 4.0, 1e-12);
    EXPECT_NEAR(effective_mode_number(with_eigenvalues({1.0, 0.0, 0.0})), 1.0, 1e-12);
}

TEST(Schmidt, Fig1SliceMatchesDenseOracle) {
    const auto t = fig1_slice();
    const double k = effective_mode_number(schmidt_decompose(t, 0));
    EXPECT_NEAR(k, dense_oracle_k(t), 1e-3 * k);
}

TEST(Schmidt, GainReducesModeNumber) {
    const auto s = schmidt_decompose(fig1_slice(), 0);
    const double k0 = effective_mode_number(s);
    EXPECT_LT(effective_mode_number(amplify_eigenvalues(s, 50.0)), k0);
    double prev = HUGE_VAL;
    for (int i = 0; i <= 12; ++i) {
        const double k = effective_mode_number(amplify_eigenvalues(s, 5.0 * i));
        EXPECT_LE(k, prev * (1 + 1e-12)) << i;
        prev = k;
    }
}

TEST(Schmidt, GramRouteMatchesSvd) {
    const auto t = fig1_slice();
    const auto s = schmidt_decompose(t, 0);
    const auto g = gram_spectrum(t);
    const Eigen::VectorXd lam = g.s2 / g.s2.sum();
    EXPECT_LT((lam.head(20) - s.eigenvalues.head(20)).cwiseAbs().maxCoeff(), 1e-10);
    // Banded Gram equals the dense product.
    const Eigen::MatrixXd dense = t.values * t.values.transpose() * t.grid.theta_s.step() * t.grid.theta_i.step();
    EXPECT_LT((weighted_gram(t) - dense).cwiseAbs().maxCoeff(), 1e-14 * dense.cwiseAbs().maxCoeff());
}

TEST(Schmidt, AmplifiedIntensityLimitsAndMonotonicity) {
    const auto t = fig1_slice();
    const Eigen::VectorXd low = integrate_over_idler(t);
    const double gammas[] = {1e-6, 1.0, 5.0, 20.0, 50.0};
    const auto rows = amplified_slice_intensity(t, gammas);
    EXPECT_LT((rows[0] - low).cwiseAbs().maxCoeff(), 1e-4 * low.maxCoeff());
    for (std::size_t k = 1; k < rows.size(); ++k)
        for (Eigen::Index j = 0; j < low.size(); ++j) ASSERT_GE(rows[k][j], rows[k - 1][j] * (1 - 1e-9));
    const double bad[] = {-1.0};
    EXPECT_THROW(amplified_slice_intensity(t, bad), DomainError);
}

TEST(Schmidt, HighGainMapLowGainLimit) {
    const auto c = bbo();
    const auto pump = PumpConfig::from_fwhm(0.355, 130.0);
    std::vector<double> th, ls{0.45, 1.0, 1.55, 1.6, 1.65};
    for (int j = 0; j < 161; ++j) th.push_back(-16.0 + 0.2 * j);
    const auto low = low_gain_spectrum(ls, th, pump, c);
    const auto high = high_gain_spectrum(ls, th, pump, c, 1e-6);
    EXPECT_LT((low.intensity - high.intensity).cwiseAbs().maxCoeff(), 1e-4 * low.intensity.maxCoeff());
    EXPECT_THROW(high_gain_spectrum(ls, th, pump, c, -2.0), DomainError);
}

TEST(Schmidt, HighGainPeakNondecreasingInGamma) {
    const auto c = bbo();
    const auto pump = PumpConfig::from_fwhm(0.355, 130.0);
    std::vector<double> th, ls{1.55, 1.6};
    for (int j = 0; j < 161; ++j) th.push_back(-16.0 + 0.2 * j);
    const double gammas[] = {0.0, 10.0, 25.0, 50.0};
    const auto maps = high_gain_spectra(ls, th, pump, c, gammas);
    for (std::size_t k = 1; k < maps.size(); ++k)
        EXPECT_GE(maps[k].intensity.maxCoeff(), maps[k - 1].intensity.maxCoeff());
}

TEST(Schmidt, HighGainWorkerInvariance) {
    const auto c = bbo();
    const auto pump = PumpConfig::from_fwhm(0.355, 130.0);
    std::vector<double> th, ls{0.45, 1.55, 1.6, 1.65};
    for (int j = 0; j < 121; ++j) th.push_back(-12.0 + 0.2 * j);
    const double gammas[] = {0.001, 50.0};
    const auto a = high_gain_spectra(ls, th, pump, c, gammas, {}, Execution{1});
    const auto b = high_gain_spectra(ls, th, pump, c, gammas, {}, Execution{4});
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_TRUE((a[k].intensity.array() == b[k].intensity.array()).all());
}
