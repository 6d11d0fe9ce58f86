#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "fhlab/stats.hpp"
#include "fhlab/zrp.hpp"

using namespace fhlab;

TEST(ZRP, PeriodicConservesParticles) {
    ZRPConfig c;
    c.n_sites = 20;
    c.periodic = true;
    c.reservoir_left = c.reservoir_right = 0.0;
    c.rate = {RateFamily::constant, 2.0};
    c.initial.assign(20, 3);
    c.T_macro = 0.05;
    c.n_snapshots = 5;
    const auto tr = zrp_simulate(c, 3);
    for (const auto& s : tr.snapshots) {
        std::int64_t n = 0;
        for (auto k : s) n += k;
        EXPECT_EQ(n, 60);
    }
    EXPECT_GT(tr.bulk_jumps, 0u);
    EXPECT_EQ(tr.absorptions(), 0u);
    EXPECT_EQ(tr.snapshots.size(), 6u);
}

TEST(ZRP, BookkeepingWithReservoirs) {
    ZRPConfig c;
    c.n_sites = 16;
    c.rate = {RateFamily::power, 1.5};
    c.reservoir_left = 2.0;
    c.reservoir_right = 0.1;
    c.T_macro = 0.1;
    const auto tr = zrp_simulate(c, 8, 2);
    EXPECT_EQ(tr.final_count, tr.initial_count + std::int64_t(tr.injections()) - std::int64_t(tr.absorptions()));
    EXPECT_GT(tr.injections_left, tr.injections_right);
}

// One site between two absorbing ends with linear rates is an M/M/infinity
// queue: from empty, the occupation at micro time t is Poisson(r (1 - e^{-t})).
TEST(ZRP, SingleSitePoissonLaw) {
    ZRPConfig c;
    c.n_sites = 1;
    c.reservoir_left = c.reservoir_right = 0.75;
    c.T_macro = 0.75;  // micro time 3 with h = 1/2
    const double mean = 1.5 * (1.0 - std::exp(-3.0));
    const int n = 4000, bins = 6;
    std::vector<double> obs(bins, 0.0);
    for (int j = 0; j < n; ++j) {
        const auto k = zrp_simulate(c, 99, j).snapshots.back()[0];
        obs[std::min<std::int64_t>(k, bins - 1)] += 1.0;
    }
    const boost::math::poisson_distribution<> pd(mean);
    double chi2 = 0.0, tail = 1.0;
    for (int b = 0; b < bins; ++b) {
        const double p = b < bins - 1 ? boost::math::pdf(pd, b) : tail;
        tail -= p;
        const double e = n * p;
        chi2 += (obs[b] - e) * (obs[b] - e) / e;
    }
    const boost::math::chi_squared_distribution<> cd(bins - 1);
    EXPECT_LT(chi2, boost::math::quantile(cd, 0.999));
}

TEST(ZRP, FlatStateKeepsDensity) {
    ZRPConfig c;
    c.n_sites = 40;
    c.reservoir_left = c.reservoir_right = 1.0;  // Phi(2) / 2 for linear rates
    c.initial.assign(40, 2);
    c.T_macro = 0.05;
    RunningStats d;
    for (int j = 0; j < 100; ++j) {
        const auto tr = zrp_simulate(c, 1, j);
        d.add(zrp_fields(tr, [](double) { return 1.0; }, 0.0).mass / (40 * tr.spacing));
    }
    EXPECT_NEAR(d.mean(), 2.0, 4 * d.stderr_mean() + 1e-3);
}

TEST(ZRP, FieldsPairing) {
    ZRPTrajectory tr;
    tr.spacing = 0.25;
    tr.snapshots = {{1, 2, 3}};
    const auto f = zrp_fields(tr, [](double x) { return x; }, 0.0);
    EXPECT_NEAR(f.empirical[0], 0.25 * (0.25 * 1 + 0.5 * 2 + 0.75 * 3), 1e-15);
    EXPECT_NEAR(f.mass, 1.5, 1e-15);
    // rho_bar = 1: subtract int_0^1 x dx = 1/2, scale by h^{-1/2}
    const auto g = zrp_fields(tr, [](double x) { return x; }, 1.0);
    EXPECT_NEAR(g.fluctuation[0], (f.empirical[0] - 0.5) / 0.5, 1e-12);
}

TEST(ZRP, GrandCanonicalPhi) {
    EXPECT_DOUBLE_EQ(grand_canonical_phi({RateFamily::linear, 1.0}, 1.7), 1.7);
    EXPECT_NEAR(grand_canonical_phi({RateFamily::constant, 2.0}, 1.0), 1.0, 1e-15);
    // power with gamma = 1 reduces to linear
    EXPECT_NEAR(grand_canonical_phi({RateFamily::power, 1.0}, 2.5), 2.5, 1e-9);
    const double a = grand_canonical_phi({RateFamily::power, 2.0}, 1.0), b = grand_canonical_phi({RateFamily::power, 2.0}, 2.0);
    EXPECT_GT(b, a);
    EXPECT_THROW(grand_canonical_phi({RateFamily::linear, 1.0}, -1.0), DomainError);
}

TEST(ZRP, ConfigValidation) {
    ZRPConfig c;
    c.periodic = true;
    EXPECT_THROW(c.validate(), ConfigError);
    ZRPConfig d;
    d.initial = {1, 2};
    EXPECT_THROW(d.validate(), ConfigError);
    ZRPConfig e;
    e.rate = {RateFamily::power, -1.0};
    EXPECT_THROW(e.validate(), ConfigError);
    EXPECT_THROW(parse_rate_family("quadratic"), ConfigError);
    ZRPConfig f;
    f.n_sites = 2;
    f.reservoir_left = 1e6;
    f.occupancy_cap = 10;
    f.T_macro = 1.0;
    EXPECT_THROW(zrp_simulate(f, 1), DivergenceError);
}
