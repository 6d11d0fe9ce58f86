#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fhlab/linear_spde.hpp"
#include "fhlab/stats.hpp"

using namespace fhlab;

TEST(Linear, PairingClosedFormMatchesQuadrature) {
    const Grid g = make_grid(1023);
    const ModeSet m = dirichlet_eigenpairs(g, 6);
    for (int k = 1; k <= 6; ++k)
        for (int j = 1; j <= 6; ++j)
            EXPECT_NEAR(sine_derivative_pairing(k, j), inner(g, m[k - 1].derivative_values, m[j - 1].values), g.h * g.h * 40.0 * (j * j + k * k)) << k << "," << j;
    // antisymmetric
    EXPECT_DOUBLE_EQ(sine_derivative_pairing(1, 2), -sine_derivative_pairing(2, 1));
    EXPECT_NEAR(sine_derivative_pairing(1, 2), 8.0 / 3.0, 1e-15);
}

TEST(Linear, QuadratureModelAgrees) {
    const Grid g = make_grid(1023);
    const LinearModel a = make_linear_model(1.3, 0.7, 0.9, 5, 7);
    const LinearModel b = make_linear_model_quadrature(1.3, 0.7, 0.9, 5, 7, g);
    EXPECT_LT((a.A - b.A).cwiseAbs().maxCoeff() / a.A.cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_LT((a.B - b.B).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Linear, ZeroNoiseGivesZeroPath) {
    const LinearModel m = make_linear_model(1.0, 0.3, 0.0, 8, 16);
    const auto tr = solve_linear_fluctuation(m, 0.05, 1e-4, 7);
    for (const auto& c : tr.coefficients)
        for (double x : c) EXPECT_EQ(x, 0.0);
}

TEST(Linear, DoublingCDoublesPath) {
    const LinearModel m1 = make_linear_model(1.0, 0.3, 0.5, 6, 12);
    const LinearModel m2 = make_linear_model(1.0, 0.3, 1.0, 6, 12);
    LinearSolveOptions o;
    o.factorize_extra_modes = false;
    const auto a = solve_linear_fluctuation(m1, 0.05, 1e-4, 7, 0, {}, 0, o);
    const auto b = solve_linear_fluctuation(m2, 0.05, 1e-4, 7, 0, {}, 0, o);
    for (std::size_t f = 0; f < a.coefficients.size(); ++f)
        for (int k = 0; k < 6; ++k) EXPECT_NEAR(b.coefficients[f][k], 2.0 * a.coefficients[f][k], 1e-13);
}

TEST(Linear, ScalarOUVarianceMatchesMonteCarlo) {
    const LinearModel m = make_linear_model(0.5, 0.0, 1.0, 4, 32);
    const double T = 0.2, dt = 1e-3;
    LinearSolveOptions o;
    o.save_stride = 0;
    const int n = 4000;
    std::vector<double> v1(n), v2(n);
    for (int j = 0; j < n; ++j) {
        const auto tr = solve_linear_fluctuation(m, T, dt, 11, j, {}, 0, o);
        v1[j] = tr.coefficients.back()[0];
        v2[j] = tr.coefficients.back()[1];
    }
    for (auto [v, k] : {std::pair{&v1, 1}, std::pair{&v2, 2}}) {
        const auto s = summarize(*v);
        const double exact = scalar_ou_variance(m, k, T);
        const double se = exact * std::sqrt(2.0 / (n - 1));
        // Euler bias is O(dt mu) and far below 4 standard errors here
        EXPECT_NEAR(s.variance(), exact, 4 * se) << "mode " << k;
    }
}

TEST(Linear, LyapunovOracle) {
    const LinearModel d = make_linear_model(0.8, 0.0, 1.0, 5, 20);
    const Eigen::MatrixXd V = stationary_covariance_oracle(d);
    for (int k = 1; k <= 5; ++k) {
        const double mu = 0.8 * dirichlet_eigenvalue(k);
        EXPECT_NEAR(V(k - 1, k - 1), d.B.row(k - 1).squaredNorm() / (2 * mu), 1e-12);
    }
    const LinearModel c = make_linear_model(0.8, 2.0, 1.0, 6, 20);
    const Eigen::MatrixXd W = stationary_covariance_oracle(c);
    EXPECT_LT((c.A * W + W * c.A.transpose() + c.B * c.B.transpose()).norm(), 1e-9);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    LinearModel bad = c;
    bad.A(0, 0) = 5.0;
    EXPECT_THROW(stationary_covariance_oracle(bad), DomainError);
}

TEST(Linear, SharedIncrementsAndErrors) {
    const LinearModel m = make_linear_model(1.0, 0.0, 1.0, 4, 8);
    const auto tg = make_time_grid(0.01, 1e-3);
    std::vector<double> inc(tg.n_steps * 8, 0.0);
    // all driving modes shared and zero: path stays at zero
    const auto tr = solve_linear_fluctuation(m, 0.01, 1e-3, 1, 0, inc, 8);
    for (double x : tr.coefficients.back()) EXPECT_EQ(x, 0.0);
    EXPECT_THROW(solve_linear_fluctuation(m, 0.01, 1e-3, 1, 0, std::vector<double>(5, 0.0), 8), ConfigError);
    EXPECT_THROW(solve_linear_fluctuation(m, 0.01, 1e-1, 1), ConfigError);
    EXPECT_THROW(make_linear_model(0.0, 0.0, 1.0, 4, 4), DomainError);
}

TEST(Linear, FactorizedExtraModesHaveSameCovariance) {
    const LinearModel m = make_linear_model(1.0, 0.0, 1.0, 3, 40);
    const Eigen::MatrixXd Q = m.B * m.B.transpose();
    const Eigen::MatrixXd L = psd_factor(Q);
    EXPECT_LT((L * L.transpose() - Q).norm(), 1e-10);
}
