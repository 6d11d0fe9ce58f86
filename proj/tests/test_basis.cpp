#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fhlab/basis.hpp"
#include "fhlab/stats.hpp"

using namespace fhlab;

constexpr double pi = std::numbers::pi;

TEST(Grid, NodesAndSpacing) {
    const Grid g = make_grid(7, 2.0);
    EXPECT_EQ(g.size(), 9u);
    EXPECT_DOUBLE_EQ(g.h, 0.25);
    EXPECT_EQ(g.nodes.front(), 0.0);
    EXPECT_EQ(g.nodes.back(), 2.0);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_GT(g.nodes[i], g.nodes[i - 1]);
    EXPECT_NEAR(g.h * 8.0, 2.0, 1e-15);
    EXPECT_THROW(make_grid(0), ConfigError);
}

TEST(Eigenpairs, OrthonormalAndExactEigenvalues) {
    const Grid g = make_grid(512);
    const ModeSet m = dirichlet_eigenpairs(g, 32);
    for (int j = 0; j < 32; ++j) {
        EXPECT_EQ(m[j].values.front(), 0.0);
        EXPECT_EQ(m[j].values.back(), 0.0);
        EXPECT_EQ(m[j].eigenvalue, ((j + 1) * pi) * ((j + 1) * pi));
        for (int k = 0; k < 32; ++k) EXPECT_NEAR(inner(g, m[j].values, m[k].values), j == k ? 1.0 : 0.0, 1e-8);
    }
}

TEST(Eigenpairs, ClosedFormE1E2) {
    const Grid g = make_grid(64);
    const ModeSet m = dirichlet_eigenpairs(g, 2);
    EXPECT_LT(std::abs(inner(g, m[0].values, m[1].values)), 1e-10);
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_NEAR(m[0].values[i], std::sqrt(2.0) * std::sin(pi * g.nodes[i]), 1e-14);
        EXPECT_NEAR(m[1].derivative_values[i], std::sqrt(2.0) * 2 * pi * std::cos(2 * pi * g.nodes[i]), 1e-12);
    }
}

TEST(Eigenpairs, Errors) {
    const Grid g = make_grid(16);
    EXPECT_THROW(dirichlet_eigenpairs(g, 0), DomainError);
    try {
        dirichlet_eigenpairs(g, 17);
        FAIL();
    } catch (const ResolutionError& e) {
        EXPECT_NE(std::string(e.what()).find("16"), std::string::npos);
    }
}

TEST(Eigenpairs, ScaledInterval) {
    const Grid g = make_grid(200, 3.0);
    const ModeSet m = dirichlet_eigenpairs(g, 4);
    EXPECT_DOUBLE_EQ(m[2].eigenvalue, std::pow(3 * pi / 3.0, 2));
    EXPECT_NEAR(inner(g, m[3].values, m[3].values), 1.0, 1e-10);
}

TEST(HsNorm, EigenfunctionHasClosedForm) {
    const Grid g = make_grid(256);
    const ModeSet m = dirichlet_eigenpairs(g, 32);
    for (int k : {1, 3, 10}) {
        for (double s : {0.5, 1.0, 2.0}) {
            const auto n = hs_dual_norm(g, m[k - 1].values, s, m);
            EXPECT_NEAR(n.value, std::pow(m[k - 1].eigenvalue, -s / 2), 1e-10);
            EXPECT_EQ(n.k_spec, 32u);
        }
    }
    EXPECT_THROW(hs_dual_norm(g, m[0].values, -1.0, m), DomainError);
    const std::vector<double> c{0.0, 2.0};
    // sqrt(4 / lambda_2) = 1 / pi
    EXPECT_NEAR(hs_norm_from_coefficients(c, 1.0), 1.0 / pi, 1e-15);
}

TEST(Spectral, RoundTripIsProjection) {
    const Grid g = make_grid(128);
    const ModeSet m = dirichlet_eigenpairs(g, 12);
    Field u(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) u[i] = 0.3 * m[1].values[i] - 1.2 * m[6].values[i];
    const Field back = reconstruct(project(g, u, m), m);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(back[i], u[i], 1e-12);
}

TEST(NoiseSummaries, DivergenceIdentityAndSigns) {
    const Grid g = make_grid(128);
    for (int K : {1, 4, 16}) {
        const NoiseSummaries s = noise_summaries(dirichlet_eigenpairs(g, K));
        EXPECT_EQ(s.K, K);
        for (std::size_t i = 0; i < g.size(); ++i) {
            EXPECT_GE(s.F1[i], 0.0);
            EXPECT_GE(s.F3[i], 0.0);
            EXPECT_NEAR(s.divF2[i], s.F3[i] - s.lambda_e2[i], 1e-12 * std::max(1.0, s.F3[i]));
        }
    }
}

TEST(NoiseSummaries, SingleModeSupNorms) {
    const Grid g = make_grid(127);
    const NoiseSummaries s = noise_summaries(dirichlet_eigenpairs(g, 1));
    EXPECT_NEAR(s.sup_F3, 2 * pi * pi, 1e-12);
    EXPECT_NEAR(s.sup_F1, 2.0, 1e-12);  // x = 1/2 is a node
    EXPECT_NEAR(s.sup_F2, pi, 1e-12);   // pi sin(2 pi x), x = 1/4 is a node
}

TEST(NoiseSummaries, SupNormsNondecreasingInK) {
    const Grid g = make_grid(256);
    NoiseSummaries prev = noise_summaries(dirichlet_eigenpairs(g, 1));
    for (int K = 2; K <= 32; K *= 2) {
        const NoiseSummaries s = noise_summaries(dirichlet_eigenpairs(g, K));
        EXPECT_GE(s.sup_F1, prev.sup_F1);
        EXPECT_GE(s.sup_F2, prev.sup_F2);
        EXPECT_GE(s.sup_F3, prev.sup_F3);
        EXPECT_GE(s.sup_divF2, prev.sup_divF2);
        prev = s;
    }
}

TEST(NoiseSummaries, MismatchedGridsRejected) {
    ModeSet a = dirichlet_eigenpairs(make_grid(16), 2);
    const ModeSet b = dirichlet_eigenpairs(make_grid(32), 2);
    a.push_back(b[0]);
    EXPECT_THROW(noise_summaries(a), ConfigError);
}

TEST(TailSum, ClosedFormAndDecay) {
    const TailSum t = tail_sum(1, 2.0);
    EXPECT_NEAR(t.value, 1.0 / 6.0, 1e-9);
    EXPECT_GE(t.upper_bound, t.value);
    EXPECT_THROW(tail_sum(1, 1.5), DomainError);
    std::vector<LogLogPoint> pts;
    for (long K : {4, 8, 16, 32, 64, 128}) pts.push_back({double(K), tail_sum(K, 2.0).value, 0.0});
    EXPECT_NEAR(fit_loglog(pts).slope, -1.0, 0.05);
}

TEST(TailSum, NonincreasingInK) {
    double prev = tail_sum(1, 2.5).value;
    for (long K = 2; K < 50; ++K) {
        const double v = tail_sum(K, 2.5).value;
        EXPECT_LT(v, prev);
        prev = v;
    }
}

TEST(Budget, ScalesLinearlyInEps) {
    const NoiseSummaries s = noise_summaries(dirichlet_eigenpairs(make_grid(64), 4));
    EXPECT_NEAR(scaling_budget(2e-3, s), 2.0 * scaling_budget(1e-3, s), 1e-12 * scaling_budget(2e-3, s));
    EXPECT_EQ(scaling_budget(0.0, s), 0.0);
}

TEST(NoiseIncrement, BoundaryZeroAndCovariance) {
    const Grid g = make_grid(15);
    const ModeSet m = dirichlet_eigenpairs(g, 5);
    RandomStream rng(11, 0, channel::test);
    const double dt = 0.01;
    const int n = 20000;
    const std::size_t a = 4, b = 7;
    RunningStats sa, sb;
    std::vector<double> xa, xb;
    for (int i = 0; i < n; ++i) {
        const Field w = sample_noise_increment(m, dt, rng);
        ASSERT_EQ(w.front(), 0.0);
        ASSERT_EQ(w.back(), 0.0);
        xa.push_back(w[a]);
        xb.push_back(w[b]);
    }
    double expect = 0;
    for (const auto& e : m) expect += dt * e.values[a] * e.values[b];
    const double cov = sample_covariance(xa, xb);
    const double va = sample_covariance(xa, xa), vb = sample_covariance(xb, xb);
    const double se = std::sqrt((va * vb + expect * expect) / n);
    EXPECT_NEAR(cov, expect, 4 * se);
}
