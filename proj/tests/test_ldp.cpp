#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fhlab/ldp.hpp"

using namespace fhlab;

namespace {
OptimizerConfig small_opt() {
    OptimizerConfig o;
    o.n_interior = 16;
    o.n_x_coarse = 5;
    o.n_t_coarse = 3;
    o.T = 0.05;
    o.max_iter = 15;
    return o;
}
Field bump(const Grid& g, double M, double a) {
    Field r(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) r[i] = M + a * std::sin(std::numbers::pi * g.nodes[i]);
    r.front() = r.back() = M;
    return r;
}
}  // namespace

TEST(Rate, HydrodynamicTargetCostsNothing) {
    const auto set = power_law_set(2.0, SigmaKind::phi_sqrt);
    const auto opt = small_opt();
    const Grid g = make_grid(opt.n_interior);
    const auto bd = BoundaryData::from_density(set, 1.0);
    const Field rho0 = bump(g, 1.0, 0.3);
    const double dt = skeleton_dt(set, g, rho0, rho0, opt);
    const Field target = solve_hydro(set, rho0, g, bd, opt.T, dt).final_frame();
    const auto r = evaluate_rate_upper(target, set, rho0, bd, opt);
    EXPECT_LE(r.I_upper, 1e-6);
    EXPECT_GE(r.I_upper, 0.0);
    EXPECT_LT(r.mismatch, 1e-6);
}

TEST(Rate, NontrivialTargetPositiveAndReached) {
    const auto set = power_law_set(1.0, SigmaKind::phi_sqrt);
    const auto opt = small_opt();
    const Grid g = make_grid(opt.n_interior);
    const auto bd = BoundaryData::from_density(set, 1.0);
    const auto r = evaluate_rate_upper(bump(g, 1.0, 0.1), set, Field(g.size(), 1.0), bd, opt);
    EXPECT_GT(r.I_upper, 0.0);
    EXPECT_LT(r.mismatch, 1e-2);
    ASSERT_EQ(r.mismatch_per_level.size(), opt.penalties.size());
    // penalty continuation tightens the constraint
    EXPECT_LE(r.mismatch_per_level.back(), r.mismatch_per_level.front() + 1e-12);
}

TEST(Rate, GaussianRateQuadraticInAmplitude) {
    // affine forward map: the minimal energy scales with the squared amplitude
    const auto opt = small_opt();
    const Grid g = make_grid(opt.n_interior);
    const LinearModel lin = make_linear_model(1.0, 0.0, 1.0, 8, 1);
    const Field flat(g.size(), 1.0);
    const auto r1 = gaussian_rate(bump(g, 1.0, 0.05), lin, 1.0, flat, opt);
    const auto r2 = gaussian_rate(bump(g, 1.0, 0.1), lin, 1.0, flat, opt);
    EXPECT_GT(r1.I_upper, 0.0);
    EXPECT_NEAR(r2.I_upper / r1.I_upper, 4.0, 1e-3);
}

TEST(Rate, ConfigErrors) {
    auto o = small_opt();
    o.penalties = {1e3, 1e2};
    EXPECT_THROW(o.validate(), ConfigError);
    o = small_opt();
    o.n_x_coarse = 1;
    EXPECT_THROW(o.validate(), ConfigError);
    const auto set = power_law_set(1.0, SigmaKind::phi_sqrt);
    const auto opt = small_opt();
    const Grid g = make_grid(opt.n_interior);
    Field bad(g.size(), 1.0);
    bad.front() = 2.0;
    EXPECT_THROW(evaluate_rate_upper(bad, set, Field(g.size(), 1.0), BoundaryData::from_density(set, 1.0), opt), ConfigError);
}
