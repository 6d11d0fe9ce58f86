#pragma once

// Upper bounds on the rate function
//   I(rho) = 1/2 inf { |g|^2 : skeleton solution with control g hits rho at T }
// by penalised minimisation of J(g) = 1/2 |g|^2 + lambda |rho_g(T) - target|^2
// over controls on a coarse space-time grid, with a continuation ladder in
// lambda. The Gaussian rate uses the linearised forward map, which makes
// each penalised subproblem an exact least-squares solve.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "fhlab/basis.hpp"
#include "fhlab/errors.hpp"
#include "fhlab/linear_spde.hpp"
#include "fhlab/nonlinearity.hpp"
#include "fhlab/parallel.hpp"
#include "fhlab/pde.hpp"

namespace fhlab {

enum class DescentMode { gauss_newton, steepest };

struct OptimizerConfig {
    std::size_t n_x_coarse = 8;
    std::size_t n_t_coarse = 8;
    std::vector<double> penalties{1e2, 1e3, 1e4, 1e5, 1e6};
    int max_iter = 25;  // per penalty level
    DescentMode mode = DescentMode::gauss_newton;
    double fd_step = 1e-6;
    double armijo_c1 = 1e-4;
    double backtrack = 0.5;
    int max_backtracks = 40;
    double rel_tol = 1e-12;  // stop a level when J decreases by less than this fraction
    // forward solver
    std::size_t n_interior = 32;
    double T = 0.1;
    double dt = 0.0;  // 0: 0.9 of the stability bound at the initial state
    unsigned workers = 1;

    void validate() const {
        if (n_x_coarse < 2 || n_t_coarse < 1) throw ConfigError("control grid needs n_x >= 2 and n_t >= 1");
        if (penalties.empty()) throw ConfigError("penalty ladder is empty");
        for (std::size_t i = 0; i < penalties.size(); ++i) {
            if (!(penalties[i] > 0.0)) throw ConfigError("penalties must be positive");
            if (i > 0 && !(penalties[i] > penalties[i - 1])) throw ConfigError("penalty ladder must be increasing");
        }
        if (max_iter < 1) throw ConfigError("max_iter must be positive");
    }
};

struct IterationRecord {
    double penalty = 0.0;
    int iteration = 0;
    double objective = 0.0;
    double energy = 0.0;
    double mismatch = 0.0;
    double step = 0.0;
};

struct RateResult {
    double I_upper = 0.0;
    double mismatch = 0.0;  // |rho_{g*}(T) - target|_{L^2}
    Control g;
    std::vector<IterationRecord> log;
    std::vector<double> mismatch_per_level;  // at the accepted iterate of each penalty level
    bool stalled = false;
    std::string note;
};

namespace detail {

inline Eigen::VectorXd control_to_vector(const Control& g) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(g.n_time() * g.n_x()));
    for (std::size_t s = 0; s < g.n_time(); ++s)
        for (std::size_t i = 0; i < g.n_x(); ++i) v[static_cast<Eigen::Index>(s * g.n_x() + i)] = g.slices[s][i];
    return v;
}

inline void vector_to_control(const Eigen::VectorXd& v, Control& g) {
    for (std::size_t s = 0; s < g.n_time(); ++s)
        for (std::size_t i = 0; i < g.n_x(); ++i) g.slices[s][i] = v[static_cast<Eigen::Index>(s * g.n_x() + i)];
}

// Diagonal Q with control_energy(g) = 1/2 theta^T Q theta.
inline Eigen::VectorXd energy_weights(const Control& g) {
    const double hx = g.length / static_cast<double>(g.n_x() - 1);
    Eigen::VectorXd q(static_cast<Eigen::Index>(g.n_time() * g.n_x()));
    for (std::size_t s = 0; s < g.n_time(); ++s)
        for (std::size_t i = 0; i < g.n_x(); ++i)
            q[static_cast<Eigen::Index>(s * g.n_x() + i)] = g.dt_ctrl * hx * ((i == 0 || i + 1 == g.n_x()) ? 0.5 : 1.0);
    return q;
}

// Trapezoid weights of the L^2 mismatch on the solver grid.
inline Eigen::VectorXd mismatch_weights(const Grid& grid) {
    Eigen::VectorXd w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.size()), grid.h);
    w[0] = w[w.size() - 1] = 0.5 * grid.h;
    return w;
}

inline void check_target(const Grid& grid, const Field& target, const BoundaryData& bd) {
    if (target.size() != grid.size()) throw ConfigError("target does not match the solver grid");
    const double tol = 1e-12 * std::max(1.0, std::abs(bd.rho_boundary));
    if (std::abs(target.front() - bd.rho_boundary) > tol || std::abs(target.back() - bd.rho_boundary) > tol)
        throw ConfigError("target boundary entries must equal the boundary density");
}

// Penalty continuation shared by both rates. `residual(theta)` returns the
// nodal residual rho(T) - target; `jacobian(theta, r)` its derivative.
template <class Residual, class Jacobian>
RateResult penalty_descent(const OptimizerConfig& opt, Control g, const Grid& grid, Residual residual, Jacobian jacobian) {
    const Eigen::VectorXd q = energy_weights(g);
    const Eigen::VectorXd w = mismatch_weights(grid);
    Eigen::VectorXd theta = control_to_vector(g);
    RateResult res;

    const auto objective = [&](const Eigen::VectorXd& th, const Eigen::VectorXd& r, double lam) {
        return 0.5 * th.dot(q.cwiseProduct(th)) + lam * r.dot(w.cwiseProduct(r));
    };
    Eigen::VectorXd r = residual(theta);
    for (double lam : opt.penalties) {
        double J = objective(theta, r, lam);
        bool moved = false, failed = false;
        for (int it = 0; it < opt.max_iter; ++it) {
            const Eigen::MatrixXd Jr = jacobian(theta, r);
            const Eigen::VectorXd grad = q.cwiseProduct(theta) + 2.0 * lam * Jr.transpose() * w.cwiseProduct(r);
            if (grad.norm() <= 1e-14 * std::max(1.0, J)) break;
            Eigen::VectorXd d;
            if (opt.mode == DescentMode::gauss_newton) {
                Eigen::MatrixXd H = 2.0 * lam * Jr.transpose() * w.asDiagonal() * Jr;
                H.diagonal() += q;
                d = -H.ldlt().solve(grad);
            } else {
                d = -grad;
            }
            double slope = grad.dot(d);
            if (!(slope < 0.0)) {
                d = -grad;
                slope = -grad.squaredNorm();
            }
            double step = 1.0;
            if (opt.mode == DescentMode::steepest) step = 1.0 / std::max(1.0, grad.norm());
            bool accepted = false;
            Eigen::VectorXd th_new, r_new;
            double J_new = J;
            for (int bt = 0; bt <= opt.max_backtracks; ++bt) {
                th_new = theta + step * d;
                r_new = residual(th_new);
                J_new = objective(th_new, r_new, lam);
                if (J_new <= J + opt.armijo_c1 * step * slope) {
                    accepted = true;
                    break;
                }
                step *= opt.backtrack;
            }
            if (!accepted) {
                if (!moved) failed = true;
                break;
            }
            moved = true;
            const double dec = J - J_new;
            theta = th_new;
            r = r_new;
            J = J_new;
            res.log.push_back({lam, it, J, 0.5 * theta.dot(q.cwiseProduct(theta)), std::sqrt(r.dot(w.cwiseProduct(r))), step});
            if (dec <= opt.rel_tol * std::max(J, 1e-300)) break;
        }
        if (failed && J > 0.0) {
            // no descent at all from this level's start point
            const Eigen::VectorXd gr = q.cwiseProduct(theta) + 2.0 * lam * jacobian(theta, r).transpose() * w.cwiseProduct(r);
            if (gr.norm() > 1e-8 * std::max(1.0, J)) res.stalled = true;
        }
        res.mismatch_per_level.push_back(std::sqrt(r.dot(w.cwiseProduct(r))));
    }
    vector_to_control(theta, g);
    res.g = g;
    res.I_upper = 0.5 * theta.dot(q.cwiseProduct(theta));
    res.mismatch = std::sqrt(r.dot(w.cwiseProduct(r)));
    if (res.stalled) res.note = "optimizer stalled: no descent direction accepted at some penalty level";
    return res;
}

}  // namespace detail

inline double skeleton_dt(const NonlinearitySet& set, const Grid& grid, const Field& rho0, const Field& target,
                          const OptimizerConfig& opt) {
    if (opt.dt > 0.0) return opt.dt;
    double top = 0.0;
    for (double r : rho0) top = std::max(top, std::abs(r));
    for (double r : target) top = std::max(top, std::abs(r));
    // margin for controlled excursions above the data range
    const double denom = std::max(set.dphi_ext(2.0 * top), set.dphi_ext(0.0)) + 1e-300;
    return 0.9 * 0.25 * grid.h * grid.h / denom;
}

inline RateResult evaluate_rate_upper(const Field& target, const NonlinearitySet& set, const Field& rho0, const BoundaryData& bd,
                                      const OptimizerConfig& opt) {
    opt.validate();
    const Grid grid = make_grid(opt.n_interior);
    detail::check_target(grid, target, bd);
    check_initial(grid, rho0, bd);
    const double dt = skeleton_dt(set, grid, rho0, target, opt);
    Control g = Control::zeros(opt.n_t_coarse, opt.n_x_coarse, opt.T, grid.length);
    const Eigen::Map<const Eigen::VectorXd> tgt(target.data(), static_cast<Eigen::Index>(target.size()));

    const auto residual = [&](const Eigen::VectorXd& th) {
        Control c = g;
        detail::vector_to_control(th, c);
        const FieldTrajectory tr = solve_skeleton(set, c, rho0, grid, bd, opt.T, dt);
        const Field& fin = tr.final_frame();
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(fin.data(), static_cast<Eigen::Index>(fin.size())) - tgt);
    };
    const auto jacobian = [&](const Eigen::VectorXd& th, const Eigen::VectorXd& r0) {
        Eigen::MatrixXd Jr(r0.size(), th.size());
        parallel_for(static_cast<std::size_t>(th.size()), opt.workers, [&](std::size_t p) {
            Eigen::VectorXd tp = th;
            const double d = opt.fd_step * std::max(1.0, std::abs(th[static_cast<Eigen::Index>(p)]));
            tp[static_cast<Eigen::Index>(p)] += d;
            Jr.col(static_cast<Eigen::Index>(p)) = (residual(tp) - r0) / d;
        });
        return Jr;
    };
    return detail::penalty_descent(opt, g, grid, residual, jacobian);
}

// Linearised forward map around rho_bar: w = rho - rho_bar solves
//   d_t w = a w'' - b w' - c d_x g,   w(0) = rho0 - rho_bar,
// in K_lin sine modes, exact in time for piecewise-constant control slices.
inline RateResult gaussian_rate(const Field& target, const LinearModel& lin, double rho_bar, const Field& rho0,
                                const OptimizerConfig& opt) {
    opt.validate();
    const Grid grid = make_grid(opt.n_interior, lin.length);
    BoundaryData bd{0.0, rho_bar};
    detail::check_target(grid, target, bd);
    if (lin.K_lin > static_cast<int>(grid.n_interior)) throw ResolutionError("K_lin exceeds the solver grid resolution");
    const ModeSet modes = dirichlet_eigenpairs(grid, lin.K_lin);
    Control g = Control::zeros(opt.n_t_coarse, opt.n_x_coarse, opt.T, grid.length);
    const auto nx = static_cast<Eigen::Index>(opt.n_x_coarse);
    const auto nt = static_cast<Eigen::Index>(opt.n_t_coarse);
    const auto K = static_cast<Eigen::Index>(lin.K_lin);
    const auto nn = static_cast<Eigen::Index>(grid.size());

    // forcing per unit coarse coefficient: F(j, i) = c <e_j', phi_i>, phi_i the hat functions
    Eigen::MatrixXd F(K, nx);
    {
        Control hat = Control::zeros(1, opt.n_x_coarse, opt.T, grid.length);
        for (Eigen::Index i = 0; i < nx; ++i) {
            std::fill(hat.slices[0].begin(), hat.slices[0].end(), 0.0);
            hat.slices[0][static_cast<std::size_t>(i)] = 1.0;
            const Control fine = refine(hat, grid);
            for (Eigen::Index j = 0; j < K; ++j)
                F(j, i) = lin.c * inner(grid, modes[static_cast<std::size_t>(j)].derivative_values, fine.slices[0]);
        }
    }
    const double tau = g.dt_ctrl;
    const Eigen::MatrixXd E_tau = (lin.A * tau).exp();
    // int_0^tau exp(A s) ds = A^{-1}(exp(A tau) - I)
    const Eigen::MatrixXd Phi_tau = lin.A.partialPivLu().solve(E_tau - Eigen::MatrixXd::Identity(K, K));
    // w(T) = E_T w0 + sum_s exp(A (T - t_{s+1})) Phi_tau F theta_s
    Eigen::MatrixXd G(K, nx * nt);
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(K, K);  // exp(A (T - t_{s+1}))
    for (Eigen::Index s = nt - 1; s >= 0; --s) {
        G.block(0, s * nx, K, nx) = P * Phi_tau * F;
        P = P * E_tau;
    }
    Eigen::VectorXd w0(K);
    {
        Field dev(rho0.size());
        for (std::size_t i = 0; i < dev.size(); ++i) dev[i] = rho0[i] - rho_bar;
        for (Eigen::Index j = 0; j < K; ++j) w0[j] = inner(grid, dev, modes[static_cast<std::size_t>(j)].values);
    }
    const Eigen::VectorXd wT0 = P * w0;  // P = exp(A T) after the loop
    Eigen::MatrixXd Ephi(nn, K);
    for (Eigen::Index j = 0; j < K; ++j)
        for (Eigen::Index i = 0; i < nn; ++i) Ephi(i, j) = modes[static_cast<std::size_t>(j)].values[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd R = Ephi * G;  // nodal response per coefficient
    Eigen::VectorXd r0(nn);
    const Eigen::VectorXd base = Ephi * wT0;
    for (Eigen::Index i = 0; i < nn; ++i) r0[i] = rho_bar + base[i] - target[static_cast<std::size_t>(i)];

    const auto residual = [&](const Eigen::VectorXd& th) { return Eigen::VectorXd(R * th + r0); };
    const auto jacobian = [&](const Eigen::VectorXd&, const Eigen::VectorXd&) { return R; };
    // The residual is affine, so one Gauss-Newton step per level is the exact minimiser.
    return detail::penalty_descent(opt, g, grid, residual, jacobian);
}

}  // namespace fhlab
