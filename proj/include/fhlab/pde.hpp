#pragma once

// Conservative finite-difference stepping for the hydrodynamic limit and the
// controlled skeleton equation. All divergence terms are written as interface
// fluxes, so the discrete mass change in a step is exactly the net flux
// through the two boundary interfaces.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fhlab/basis.hpp"
#include "fhlab/errors.hpp"
#include "fhlab/nonlinearity.hpp"

namespace fhlab {

struct BoundaryData {
    double fbar = 0.0;
    double rho_boundary = 0.0;

    static BoundaryData from_fbar(const NonlinearitySet& set, double fbar) {
        if (fbar < 0.0) throw DomainError("boundary value fbar must be nonnegative");
        return {fbar, set.phi_inverse(fbar)};
    }
    static BoundaryData from_density(const NonlinearitySet& set, double rho) { return {set.phi(rho), rho}; }
};

struct TrajectoryMeta {
    double dt = 0.0;
    std::string scheme;
    std::optional<std::uint64_t> seed;
};

struct FieldTrajectory {
    Grid grid;
    double rho_boundary = 0.0;
    std::vector<double> save_times;
    std::vector<Field> frames;
    TrajectoryMeta meta;

    const Field& final_frame() const { return frames.back(); }
};

// Piecewise constant in time (slice j covers [j dt_ctrl, (j+1) dt_ctrl)),
// sampled on n_x uniform points spanning [0, length] in space and linearly
// interpolated between them.
struct Control {
    double length = 1.0;
    double dt_ctrl = 0.0;
    std::vector<Field> slices;

    std::size_t n_time() const { return slices.size(); }
    std::size_t n_x() const { return slices.empty() ? 0 : slices.front().size(); }

    static Control zeros(std::size_t n_time, std::size_t n_x, double T, double length = 1.0) {
        Control c;
        c.length = length;
        c.dt_ctrl = T / static_cast<double>(n_time);
        c.slices.assign(n_time, Field(n_x, 0.0));
        return c;
    }

    std::size_t slice_at(double t) const {
        const auto j = static_cast<std::size_t>(std::max(0.0, std::floor(t / dt_ctrl)));
        return std::min(j, n_time() - 1);
    }

    void validate() const {
        if (slices.empty() || n_x() < 2) throw ConfigError("control needs at least one time slice and two spatial points");
        if (!(dt_ctrl > 0.0)) throw ConfigError("control time step must be positive");
        for (const auto& s : slices) {
            if (s.size() != n_x()) throw ConfigError("control slices have inconsistent sizes");
            for (double v : s)
                if (!std::isfinite(v)) throw ConfigError("control contains non-finite values");
        }
    }
};

// Linear interpolation of a control onto the solver grid.
inline Control refine(const Control& g, const Grid& grid) {
    g.validate();
    if (std::abs(g.length - grid.length) > 1e-12 * grid.length) throw ConfigError("control and grid lengths differ");
    Control out;
    out.length = g.length;
    out.dt_ctrl = g.dt_ctrl;
    if (g.n_x() == grid.size()) {
        out.slices = g.slices;
        return out;
    }
    const double hc = g.length / static_cast<double>(g.n_x() - 1);
    out.slices.assign(g.n_time(), Field(grid.size(), 0.0));
    for (std::size_t j = 0; j < g.n_time(); ++j)
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double pos = grid.nodes[i] / hc;
            const auto c = std::min(static_cast<std::size_t>(pos), g.n_x() - 2);
            const double w = pos - static_cast<double>(c);
            out.slices[j][i] = (1.0 - w) * g.slices[j][c] + w * g.slices[j][c + 1];
        }
    return out;
}

// 1/2 int int g^2 dx dt: trapezoid in space, exact in time for piecewise
// constant slices.
inline double control_energy(const Control& g) {
    if (g.slices.empty()) return 0.0;
    const double hx = g.length / static_cast<double>(g.n_x() - 1);
    double e = 0.0;
    Field sq(g.n_x());
    for (const auto& s : g.slices) {
        for (std::size_t i = 0; i < s.size(); ++i) sq[i] = s[i] * s[i];
        e += g.dt_ctrl * trapezoid(sq, hx);
    }
    return 0.5 * e;
}

// Per-step inputs beyond the deterministic drift. Null pointers switch a term off.
struct StepSources {
    const double* noise = nullptr;    // nodal noise increment sum_k e_k dB^k
    double sqrt_eps = 0.0;
    const double* control = nullptr;  // nodal control values at this time
    const double* F1 = nullptr;       // correction term fields
    const double* F2 = nullptr;
    double eps = 0.0;
};

struct StepFluxBalance {
    double left = 0.0;   // dt * flux through the x = 0 interface (rightward positive)
    double right = 0.0;  // dt * flux through the x = L interface
};

// One explicit conservative step. `sig`/`dsig` evaluate the diffusion
// coefficient used by the noise, control and correction fluxes.
class FluxStepper {
public:
    FluxStepper(const NonlinearitySet& set, const Grid& grid, double alpha)
        : set_(set), h_(grid.h), alpha_(alpha), n_(grid.size()) {
        phi_.resize(n_);
        sig_.resize(n_);
        corr_d_.resize(n_);
        corr_a_.resize(n_);
        flux_.resize(n_ - 1);
    }

    template <class Sig, class DSig>
    StepFluxBalance step(std::span<const double> rho, std::span<double> out, double dt, const StepSources& src, Sig sig,
                         DSig dsig) {
        const std::size_t n = n_;
        const bool need_sigma = src.noise || src.control || src.F1;
        for (std::size_t i = 0; i < n; ++i) phi_[i] = set_.phi_ext(rho[i]);
        if (need_sigma)
            for (std::size_t i = 0; i < n; ++i) sig_[i] = rho[i] > 0.0 ? sig(rho[i]) : 0.0;
        if (src.F1) {
            for (std::size_t i = 0; i < n; ++i) {
                const double ds = rho[i] > 0.0 ? dsig(rho[i]) : 0.0;
                corr_d_[i] = src.F1[i] * ds * ds;
                corr_a_[i] = sig_[i] * ds * src.F2[i];
            }
        }
        const double inv_h = 1.0 / h_;
        const bool has_nu = set_.nu_slope != 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            double f = -(phi_[i + 1] - phi_[i]) * inv_h;
            if (alpha_ != 0.0) f -= alpha_ * (rho[i + 1] - rho[i]) * inv_h;
            if (has_nu) f += 0.5 * (set_.nu(rho[i]) + set_.nu(rho[i + 1]));
            if (src.control) f += 0.5 * (sig_[i] + sig_[i + 1]) * 0.5 * (src.control[i] + src.control[i + 1]);
            if (src.F1) {
                const double d = 0.5 * (corr_d_[i] + corr_d_[i + 1]);
                const double a = 0.5 * (corr_a_[i] + corr_a_[i + 1]);
                f -= 0.5 * src.eps * (d * (rho[i + 1] - rho[i]) * inv_h + a);
            }
            f *= dt;
            if (src.noise) f += src.sqrt_eps * 0.5 * (sig_[i] + sig_[i + 1]) * 0.5 * (src.noise[i] + src.noise[i + 1]);
            flux_[i] = f;
        }
        out[0] = rho[0];
        out[n - 1] = rho[n - 1];
        for (std::size_t i = 1; i + 1 < n; ++i) out[i] = rho[i] - (flux_[i] - flux_[i - 1]) * inv_h;
        return {flux_.front(), flux_.back()};
    }

    std::span<const double> last_fluxes() const { return flux_; }

private:
    const NonlinearitySet& set_;
    double h_;
    double alpha_;
    std::size_t n_;
    std::vector<double> phi_, sig_, corr_d_, corr_a_, flux_;
};

inline double max_dphi(const NonlinearitySet& set, std::span<const double> rho) {
    double m = 0.0;
    for (double r : rho) m = std::max(m, set.dphi_ext(r));
    return m;
}

inline double deterministic_dt_bound(const NonlinearitySet& set, std::span<const double> rho, double h, double alpha,
                                     double c_cfl = 0.25) {
    const double denom = max_dphi(set, rho) + alpha;
    return denom > 0.0 ? c_cfl * h * h / denom : std::numeric_limits<double>::infinity();
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

struct TimeGrid {
    std::size_t n_steps = 0;
    double dt = 0.0;
};

// Largest step <= dt_max that divides T evenly.
inline TimeGrid make_time_grid(double T, double dt_max) {
    if (!(T > 0.0)) throw ConfigError("time horizon must be positive");
    if (!(dt_max > 0.0)) throw ConfigError("time step must be positive");
    const auto n = static_cast<std::size_t>(std::ceil(T / dt_max - 1e-9));
    return {std::max<std::size_t>(n, 1), T / static_cast<double>(std::max<std::size_t>(n, 1))};
}

inline void check_initial(const Grid& grid, std::span<const double> rho0, const BoundaryData& bd, bool allow_negative = false) {
    if (rho0.size() != grid.size()) throw ConfigError("initial field does not match the grid size");
    if (std::abs(rho0.front() - bd.rho_boundary) > 1e-12 * std::max(1.0, std::abs(bd.rho_boundary)) ||
        std::abs(rho0.back() - bd.rho_boundary) > 1e-12 * std::max(1.0, std::abs(bd.rho_boundary)))
        throw ConfigError("initial field boundary entries must equal the boundary density");
    if (!allow_negative)
        for (double r : rho0)
            if (r < 0.0) throw DomainError("initial density must be nonnegative");
}

struct DeterministicOptions {
    double c_cfl = 0.25;
    std::size_t save_stride = 0;  // 0: save only the initial and final frames
};

namespace detail {

inline FieldTrajectory run_deterministic(const NonlinearitySet& set, const Control* g, const Field& rho0, const Grid& grid,
                                         const BoundaryData& bd, double T, double dt, double alpha,
                                         const DeterministicOptions& opt, const char* scheme) {
    check_initial(grid, rho0, bd);
    const TimeGrid tg = make_time_grid(T, dt);
    Control refined;
    if (g) refined = refine(*g, grid);

    FieldTrajectory traj;
    traj.grid = grid;
    traj.rho_boundary = bd.rho_boundary;
    traj.meta.dt = tg.dt;
    traj.meta.scheme = scheme;

    FluxStepper stepper(set, grid, alpha);
    Field cur = rho0, next(rho0.size());
    cur.front() = cur.back() = bd.rho_boundary;
    traj.save_times.push_back(0.0);
    traj.frames.push_back(cur);
    const auto sig = [&set](double r) { return set.sigma(r); };
    const auto dsig = [&set](double r) { return set.dsigma(r); };
    for (std::size_t step = 0; step < tg.n_steps; ++step) {
        const double bound = deterministic_dt_bound(set, cur, grid.h, alpha, opt.c_cfl);
        if (tg.dt > bound * (1.0 + 1e-12))
            throw ConfigError("time step " + std::to_string(tg.dt) + " violates the stability bound " + std::to_string(bound));
        StepSources src;
        if (g) {
            const double t_mid = (static_cast<double>(step) + 0.5) * tg.dt;
            src.control = refined.slices[refined.slice_at(t_mid)].data();
        }
        stepper.step(cur, next, tg.dt, src, sig, dsig);
        if (!all_finite(next)) throw DivergenceError("non-finite value in deterministic solve", step, cur);
        std::swap(cur, next);
        const bool last = step + 1 == tg.n_steps;
        if (last || (opt.save_stride > 0 && (step + 1) % opt.save_stride == 0)) {
            traj.save_times.push_back(static_cast<double>(step + 1) * tg.dt);
            traj.frames.push_back(cur);
        }
    }
    return traj;
}

}  // namespace detail

// d_t rho = Laplacian Phi(rho) + alpha Laplacian rho - d_x nu(rho), explicit Euler.
inline FieldTrajectory solve_hydro(const NonlinearitySet& set, const Field& rho0, const Grid& grid, const BoundaryData& bd,
                                   double T, double dt, double alpha = 0.0, const DeterministicOptions& opt = {}) {
    return detail::run_deterministic(set, nullptr, rho0, grid, bd, T, dt, alpha, opt, "explicit-euler/flux-form");
}

// d_t rho = Laplacian Phi(rho) - d_x (sigma(rho) g + nu(rho)).
inline FieldTrajectory solve_skeleton(const NonlinearitySet& set, const Control& g, const Field& rho0, const Grid& grid,
                                      const BoundaryData& bd, double T, double dt, const DeterministicOptions& opt = {}) {
    return detail::run_deterministic(set, &g, rho0, grid, bd, T, dt, 0.0, opt, "explicit-euler/flux-form");
}

inline double discrete_mass(const Grid& grid, std::span<const double> rho) {
    double s = 0.0;
    for (std::size_t i = 1; i + 1 < rho.size(); ++i) s += rho[i];
    return grid.h * s;
}

}  // namespace fhlab
