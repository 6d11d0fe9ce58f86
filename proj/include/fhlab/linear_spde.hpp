#pragma once

// Spectral Galerkin solver for the linearised fluctuation equation with
// constant coefficients around rho_bar = M,
//
//   dv = (a v'' - b v') dt - c d_x dW,     v(0) = 0,  v = 0 on the boundary,
//
// with a = Phi'(M), b = nu'(M), c = sigma(M). In the sine basis
//   dv_j = sum_k A_jk v_k dt + sum_m B_jm dB^m,
//   A_jk = -a lambda_j delta_jk - b <e_j, e_k'>,   B_jm = c <e_j', e_m>.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fhlab/basis.hpp"
#include "fhlab/errors.hpp"
#include "fhlab/pde.hpp"
#include "fhlab/rng.hpp"

namespace fhlab {

// <e_k', e_j> on (0, L), closed form.
inline double sine_derivative_pairing(int k, int j, double length = 1.0) {
    if (j == k || ((j + k) % 2 == 0)) return 0.0;
    const double dj = j, dk = k;
    return (2.0 * dk / length) * 2.0 * dj / (dj * dj - dk * dk);
}

struct LinearModel {
    double a = 1.0;
    double b = 0.0;
    double c = 1.0;
    int K_lin = 16;
    int K_drive = 64;
    double length = 1.0;
    Eigen::MatrixXd A;  // K_lin x K_lin
    Eigen::MatrixXd B;  // K_lin x K_drive
};

inline LinearModel make_linear_model(double a, double b, double c, int K_lin, int K_drive, double length = 1.0) {
    if (!(a > 0.0)) throw DomainError("linear model needs a = Phi'(M) > 0");
    if (c < 0.0) throw DomainError("linear model needs c = sigma(M) >= 0");
    if (K_lin < 1 || K_drive < 1) throw ConfigError("K_lin and K_drive must be positive");
    LinearModel m{a, b, c, K_lin, K_drive, length, Eigen::MatrixXd::Zero(K_lin, K_lin), Eigen::MatrixXd::Zero(K_lin, K_drive)};
    for (int j = 1; j <= K_lin; ++j) {
        m.A(j - 1, j - 1) = -a * dirichlet_eigenvalue(j, length);
        if (b != 0.0)
            for (int k = 1; k <= K_lin; ++k)
                // <e_j, e_k'> = -<e_j', e_k>
                if (k != j) m.A(j - 1, k - 1) += b * sine_derivative_pairing(j, k, length);
        for (int mm = 1; mm <= K_drive; ++mm) m.B(j - 1, mm - 1) = c * sine_derivative_pairing(j, mm, length);
    }
    return m;
}

// Same matrices from trapezoid quadrature on a grid; used to validate the closed form.
inline LinearModel make_linear_model_quadrature(double a, double b, double c, int K_lin, int K_drive, const Grid& grid) {
    LinearModel m = make_linear_model(a, b, c, K_lin, K_drive, grid.length);
    const ModeSet modes = dirichlet_eigenpairs(grid, std::max(K_lin, K_drive));
    for (int j = 0; j < K_lin; ++j) {
        for (int k = 0; k < K_lin; ++k)
            m.A(j, k) = (j == k ? -a * modes[j].eigenvalue : 0.0) - b * inner(grid, modes[j].values, modes[k].derivative_values);
        for (int mm = 0; mm < K_drive; ++mm) m.B(j, mm) = c * inner(grid, modes[j].derivative_values, modes[mm].values);
    }
    return m;
}

struct SpectralTrajectory {
    int K_lin = 0;
    double length = 1.0;
    std::vector<double> save_times;
    std::vector<std::vector<double>> coefficients;  // one K_lin vector per save time
    std::uint64_t seed = 0;
    std::uint64_t trajectory_index = 0;
    double dt = 0.0;
};

inline Field reconstruct_frame(const SpectralTrajectory& tr, std::size_t frame, const ModeSet& modes) {
    SpectralVector v;
    v.coefficients.assign(tr.coefficients[frame].begin(),
                          tr.coefficients[frame].begin() + std::min<std::ptrdiff_t>(tr.K_lin, static_cast<std::ptrdiff_t>(modes.size())));
    return reconstruct(v, modes);
}

// sum_i dt_i * |v(t_i)|_{H^{-s}}^2 by the trapezoid rule in time.
inline double l2_hs_squared(const SpectralTrajectory& tr, double s) {
    double acc = 0.0;
    for (std::size_t f = 0; f + 1 < tr.save_times.size(); ++f) {
        const double n0 = hs_norm_from_coefficients(tr.coefficients[f], s, tr.length);
        const double n1 = hs_norm_from_coefficients(tr.coefficients[f + 1], s, tr.length);
        acc += 0.5 * (tr.save_times[f + 1] - tr.save_times[f]) * (n0 * n0 + n1 * n1);
    }
    return acc;
}

// Symmetric square root factor L with L L^T = S (S positive semidefinite up to rounding).
inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
    Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal();
}

struct LinearSolveOptions {
    std::size_t save_stride = 1;
    // Driving modes beyond the shared ones enter only through B_extra dB_extra,
    // a Gaussian vector with covariance dt B_extra B_extra^T; it is drawn from
    // K_lin normals through a factor of that matrix.
    bool factorize_extra_modes = true;
};

// Euler-Maruyama. `shared_increments` (step-major, n_steps x K_shared)
// replaces dB^1..dB^{K_shared}; the remaining driving modes are independent.
inline SpectralTrajectory solve_linear_fluctuation(const LinearModel& model, double T, double dt, std::uint64_t seed,
                                                   std::uint64_t trajectory_index = 0,
                                                   std::span<const double> shared_increments = {}, int K_shared = 0,
                                                   const LinearSolveOptions& opt = {}) {
    const double bound = 1.0 / (2.0 * model.a * dirichlet_eigenvalue(model.K_lin, model.length));
    const TimeGrid tg = make_time_grid(T, dt);
    if (tg.dt > bound * (1.0 + 1e-12))
        throw ConfigError("linear stability requires dt <= " + std::to_string(bound) + ", got " + std::to_string(tg.dt));
    const int K = model.K_lin;
    const bool shared = !shared_increments.empty();
    if (shared) {
        if (K_shared < 1 || K_shared > model.K_drive) throw ConfigError("K_shared must lie in [1, K_drive]");
        if (shared_increments.size() != tg.n_steps * static_cast<std::size_t>(K_shared))
            throw ConfigError("shared increments have the wrong length for this time grid");
    } else {
        K_shared = 0;
    }
    const int n_extra = model.K_drive - K_shared;

    const Eigen::MatrixXd Bs = model.B.leftCols(K_shared);
    const Eigen::MatrixXd Be = model.B.rightCols(n_extra);
    Eigen::MatrixXd Le;
    if (opt.factorize_extra_modes && n_extra > 0) Le = psd_factor(Be * Be.transpose());

    RandomStream rng(seed, trajectory_index, shared ? channel::linear_extra : channel::linear_all);
    const double sqdt = std::sqrt(tg.dt);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(K), z, dv(K);
    const int n_draw = n_extra == 0 ? 0 : (opt.factorize_extra_modes ? K : n_extra);
    z.resize(n_draw);
    // A is diagonal when b = 0; skip the dense product then.
    const bool diagonal = model.b == 0.0;
    const Eigen::VectorXd Adiag = model.A.diagonal();

    SpectralTrajectory tr;
    tr.K_lin = K;
    tr.length = model.length;
    tr.seed = seed;
    tr.trajectory_index = trajectory_index;
    tr.dt = tg.dt;
    tr.save_times.push_back(0.0);
    tr.coefficients.emplace_back(K, 0.0);
    for (std::size_t step = 0; step < tg.n_steps; ++step) {
        if (diagonal)
            dv = Adiag.cwiseProduct(v) * tg.dt;
        else
            dv.noalias() = model.A * v * tg.dt;
        if (shared) {
            const Eigen::Map<const Eigen::VectorXd> db(shared_increments.data() + step * static_cast<std::size_t>(K_shared), K_shared);
            dv.noalias() += Bs * db;
        }
        if (n_draw > 0) {
            for (int i = 0; i < n_draw; ++i) z[i] = sqdt * rng.normal();
            if (opt.factorize_extra_modes)
                dv.noalias() += Le * z;
            else
                dv.noalias() += Be * z;
        }
        v += dv;
        const bool last = step + 1 == tg.n_steps;
        if (last || (opt.save_stride > 0 && (step + 1) % opt.save_stride == 0)) {
            tr.save_times.push_back(static_cast<double>(step + 1) * tg.dt);
            tr.coefficients.emplace_back(v.data(), v.data() + K);
        }
    }
    return tr;
}

// Solves A V + V A^T + B B^T = 0 through the vectorised Kronecker system.
inline Eigen::MatrixXd stationary_covariance_oracle(const LinearModel& model) {
    const Eigen::Index K = model.A.rows();
    Eigen::EigenSolver<Eigen::MatrixXd> es(model.A, false);
    if (es.eigenvalues().real().maxCoeff() >= 0.0) throw DomainError("drift matrix is not Hurwitz");
    const Eigen::MatrixXd Q = model.B * model.B.transpose();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(K, K);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(K * K, K * K);
    // column-major vec: vec(A V) = (I kron A) vec V, vec(V A^T) = (A kron I) vec V
    for (Eigen::Index i = 0; i < K; ++i)
        for (Eigen::Index j = 0; j < K; ++j) {
            M.block(i * K, j * K, K, K) += I(i, j) * model.A;
            M.block(i * K, j * K, K, K) += model.A(i, j) * I;
        }
    const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(Q.data(), K * K);
    const Eigen::VectorXd x = M.partialPivLu().solve(rhs);
    Eigen::MatrixXd V = Eigen::Map<const Eigen::MatrixXd>(x.data(), K, K);
    return 0.5 * (V + V.transpose());
}

// Var v_k(T) for the decoupled (b = 0) model: q_k / (2 a lambda_k) (1 - exp(-2 a lambda_k T)).
inline double scalar_ou_variance(const LinearModel& model, int k, double T) {
    const double mu = model.a * dirichlet_eigenvalue(k, model.length);
    const double q = model.B.row(k - 1).squaredNorm();
    return q / (2.0 * mu) * (1.0 - std::exp(-2.0 * mu * T));
}

}  // namespace fhlab
