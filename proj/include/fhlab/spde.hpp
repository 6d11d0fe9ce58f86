#pragma once

// Euler-Maruyama for the Ito form of the regularised conservative SPDE
//
//   d rho = [Lap Phi(rho) + alpha Lap rho - d_x nu(rho) - d_x(sigma_n(rho) P_K g)] dt
//           - sqrt(eps) d_x(sigma_n(rho) dxi^K)
//           + (eps/2) d_x(F1 sigma_n'(rho)^2 d_x rho + sigma_n(rho) sigma_n'(rho) F2) dt
//
// on the same conservative stencil as the deterministic solver. The noise
// flux at an interface is the interface mean of sigma_n times the interface
// mean of the nodal increment.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fhlab/basis.hpp"
#include "fhlab/nonlinearity.hpp"
#include "fhlab/pde.hpp"
#include "fhlab/rng.hpp"

namespace fhlab {

struct SPDEConfig {
    double eps = 0.0;
    int K = 1;
    int n_mollify = 100;
    double alpha = 0.0;
    double dt = 1e-5;
    double T = 0.1;
    std::size_t save_stride = 0;  // 0: initial and final frame only
    double c_cfl = 0.25;
    std::optional<Control> control;
    bool project_control = true;
    bool retain_increments = false;
    bool record_step_diagnostics = false;
};

struct StepDiagnostics {
    double min_value = 0.0;  // over interior nodes and all steps
    double max_value = 0.0;
    std::vector<double> mass_at_saves;
    std::vector<double> step_min, step_max, step_mass;  // filled on request
};

struct TrajectoryResult {
    FieldTrajectory trajectory;
    std::uint64_t seed = 0;
    std::uint64_t trajectory_index = 0;
    std::vector<double> increments;  // n_steps * K, step-major, when retained
    int K = 0;
    StepDiagnostics diagnostics;
};

inline double stochastic_dt_bound(const NonlinearitySet& set, std::span<const double> rho, double h, double alpha, double eps,
                                  const NoiseSummaries& sums, const MollifiedSigma& sn, double c_cfl = 0.25) {
    const double s = sn.sup_derivative();
    const double denom = max_dphi(set, rho) + alpha + 0.5 * eps * sums.sup_F1 * s * s;
    return denom > 0.0 ? c_cfl * h * h / denom : std::numeric_limits<double>::infinity();
}

// P_K g: each time slice replaced by sum_{k<=K} <g, e_k> e_k on the grid of the modes.
inline Control project_control(const Control& g, const ModeSet& modes) {
    check_same_grid(modes);
    const Grid grid = make_grid(modes.front().grid_n_interior, modes.front().grid_length);
    Control fine = refine(g, grid);
    for (auto& slice : fine.slices) {
        const SpectralVector c = project(grid, slice, modes);
        slice = reconstruct(c, modes);
    }
    return fine;
}

// One Euler-Maruyama step. `noise_inc` is the nodal increment
// sum_k e_k dB^k over this step; `g_slice` the nodal control, if any.
inline Field ito_step(const Field& state, const SPDEConfig& cfg, const NonlinearitySet& set, const MollifiedSigma& sn,
                      const NoiseSummaries& sums, const Grid& grid, std::span<const double> noise_inc,
                      std::span<const double> g_slice = {}) {
    FluxStepper stepper(set, grid, cfg.alpha);
    Field out(state.size());
    StepSources src;
    if (cfg.eps > 0.0) {
        src.noise = noise_inc.data();
        src.sqrt_eps = std::sqrt(cfg.eps);
        src.F1 = sums.F1.data();
        src.F2 = sums.F2.data();
        src.eps = cfg.eps;
    }
    if (!g_slice.empty()) src.control = g_slice.data();
    stepper.step(state, out, cfg.dt, src, [&sn](double r) { return sn(r); }, [&sn](double r) { return sn.derivative(r); });
    return out;
}

namespace detail {

inline TrajectoryResult run_spde(const SPDEConfig& cfg, const NonlinearitySet& set, const MollifiedSigma& sn,
                                 const ModeSet& modes, const NoiseSummaries& sums, const Grid& grid, const Field& rho0,
                                 const BoundaryData& bd, std::uint64_t seed, std::uint64_t traj_index,
                                 std::span<const double> replay) {
    if (cfg.eps < 0.0) throw ConfigError("eps must be nonnegative");
    if (static_cast<int>(modes.size()) != cfg.K || sums.K != cfg.K) throw ConfigError("mode count does not match K");
    if (modes.front().values.size() != grid.size()) throw ConfigError("modes and grid differ");
    check_initial(grid, rho0, bd);
    const TimeGrid tg = make_time_grid(cfg.T, cfg.dt);
    const std::size_t K = modes.size();
    if (!replay.empty() && replay.size() != tg.n_steps * K) throw ConfigError("replayed increments have the wrong length");

    std::optional<Control> ctrl;
    if (cfg.control) ctrl = cfg.project_control ? project_control(*cfg.control, modes) : refine(*cfg.control, grid);

    TrajectoryResult res;
    res.seed = seed;
    res.trajectory_index = traj_index;
    res.K = cfg.K;
    auto& traj = res.trajectory;
    traj.grid = grid;
    traj.rho_boundary = bd.rho_boundary;
    traj.meta = {tg.dt, "euler-maruyama/ito/flux-form", seed};

    RandomStream rng(seed, traj_index, channel::spde_noise);
    FluxStepper stepper(set, grid, cfg.alpha);
    Field cur = rho0, next(rho0.size()), noise(rho0.size(), 0.0);
    cur.front() = cur.back() = bd.rho_boundary;
    std::vector<double> inc(K);
    if (cfg.retain_increments) res.increments.reserve(tg.n_steps * K);

    auto& diag = res.diagnostics;
    diag.min_value = diag.max_value = cur[1];
    const auto track = [&](const Field& f) {
        for (std::size_t i = 1; i + 1 < f.size(); ++i) {
            diag.min_value = std::min(diag.min_value, f[i]);
            diag.max_value = std::max(diag.max_value, f[i]);
        }
    };
    track(cur);
    traj.save_times.push_back(0.0);
    traj.frames.push_back(cur);
    diag.mass_at_saves.push_back(discrete_mass(grid, cur));

    const double sqrt_eps = std::sqrt(cfg.eps);
    const double sqrt_dt = std::sqrt(tg.dt);
    const auto sig = [&sn](double r) { return sn(r); };
    const auto dsig = [&sn](double r) { return sn.derivative(r); };
    for (std::size_t step = 0; step < tg.n_steps; ++step) {
        const double bound = stochastic_dt_bound(set, cur, grid.h, cfg.alpha, cfg.eps, sums, sn, cfg.c_cfl);
        if (tg.dt > bound * (1.0 + 1e-12))
            throw ConfigError("time step " + std::to_string(tg.dt) + " violates the stochastic stability bound " +
                              std::to_string(bound) + " at step " + std::to_string(step));
        if (replay.empty())
            for (std::size_t k = 0; k < K; ++k) inc[k] = sqrt_dt * rng.normal();
        else
            std::copy_n(replay.begin() + static_cast<std::ptrdiff_t>(step * K), K, inc.begin());
        if (cfg.retain_increments) res.increments.insert(res.increments.end(), inc.begin(), inc.end());

        StepSources src;
        if (cfg.eps > 0.0) {
            noise_from_increments(modes, inc, noise);
            src.noise = noise.data();
            src.sqrt_eps = sqrt_eps;
            src.F1 = sums.F1.data();
            src.F2 = sums.F2.data();
            src.eps = cfg.eps;
        }
        if (ctrl) {
            const double t_mid = (static_cast<double>(step) + 0.5) * tg.dt;
            src.control = ctrl->slices[ctrl->slice_at(t_mid)].data();
        }
        stepper.step(cur, next, tg.dt, src, sig, dsig);
        if (!all_finite(next)) throw DivergenceError("non-finite value in SPDE step", step, cur);
        std::swap(cur, next);
        track(cur);
        if (cfg.record_step_diagnostics) {
            double lo = cur[1], hi = cur[1];
            for (std::size_t i = 1; i + 1 < cur.size(); ++i) {
                lo = std::min(lo, cur[i]);
                hi = std::max(hi, cur[i]);
            }
            diag.step_min.push_back(lo);
            diag.step_max.push_back(hi);
            diag.step_mass.push_back(discrete_mass(grid, cur));
        }
        const bool last = step + 1 == tg.n_steps;
        if (last || (cfg.save_stride > 0 && (step + 1) % cfg.save_stride == 0)) {
            traj.save_times.push_back(static_cast<double>(step + 1) * tg.dt);
            traj.frames.push_back(cur);
            diag.mass_at_saves.push_back(discrete_mass(grid, cur));
        }
    }
    return res;
}

}  // namespace detail

// Full trajectory; a deterministic function of the inputs, seed and
// trajectory index (the stream identifier of the counter-based generator).
inline TrajectoryResult simulate(const SPDEConfig& cfg, const NonlinearitySet& set, const MollifiedSigma& sn,
                                 const ModeSet& modes, const NoiseSummaries& sums, const Grid& grid, const Field& rho0,
                                 const BoundaryData& bd, std::uint64_t seed, std::uint64_t trajectory_index = 0) {
    return detail::run_spde(cfg, set, sn, modes, sums, grid, rho0, bd, seed, trajectory_index, {});
}

// Re-runs a trajectory from retained increments.
inline TrajectoryResult replay(const SPDEConfig& cfg, const NonlinearitySet& set, const MollifiedSigma& sn,
                               const ModeSet& modes, const NoiseSummaries& sums, const Grid& grid, const Field& rho0,
                               const BoundaryData& bd, std::span<const double> increments) {
    if (increments.empty()) throw ConfigError("no increments to replay");
    return detail::run_spde(cfg, set, sn, modes, sums, grid, rho0, bd, 0, 0, increments);
}

}  // namespace fhlab
