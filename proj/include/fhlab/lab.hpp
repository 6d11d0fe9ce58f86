#pragma once

// Monte Carlo experiments around the constant steady state rho_bar = M:
// law-of-large-numbers rates, the L^infinity negative-part estimate and the
// coupled central-limit error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fhlab/basis.hpp"
#include "fhlab/linear_spde.hpp"
#include "fhlab/nonlinearity.hpp"
#include "fhlab/parallel.hpp"
#include "fhlab/pde.hpp"
#include "fhlab/spde.hpp"
#include "fhlab/stats.hpp"

namespace fhlab {

// v = eps^{-1/2} (rho - rho_bar), frame by frame.
inline FieldTrajectory fluctuation_field(const FieldTrajectory& traj, double rho_bar, double eps) {
    if (!(eps > 0.0)) throw DomainError("fluctuation field needs eps > 0");
    FieldTrajectory out = traj;
    const double s = 1.0 / std::sqrt(eps);
    for (auto& f : out.frames)
        for (double& x : f) x = s * (x - rho_bar);
    out.rho_boundary = s * (traj.rho_boundary - rho_bar);
    return out;
}

struct TrajectoryNorms {
    double lp_spacetime = 0.0;     // (int_0^T int_U |u|^p)^{1/p}
    double sup_lp_in_time = 0.0;   // max over frames of |u(t)|_{L^p}
    std::optional<double> l2_hs;   // (int_0^T |u(t)|_{H^{-s}}^2 dt)^{1/2}
};

// Trapezoid rule in space and over the saved times.
inline TrajectoryNorms trajectory_norms(const FieldTrajectory& traj, double p, std::optional<double> s = {},
                                        const ModeSet* modes = nullptr) {
    if (p < 1.0) throw DomainError("trajectory_norms needs p >= 1");
    TrajectoryNorms r;
    const double h = traj.grid.h;
    std::vector<double> lp(traj.frames.size()), hs(traj.frames.size(), 0.0);
    Field tmp;
    std::optional<ModeSet> own;
    if (s) {
        if (!modes) {
            own = dirichlet_eigenpairs(traj.grid, static_cast<int>(traj.grid.n_interior));
            modes = &*own;
        }
    }
    for (std::size_t f = 0; f < traj.frames.size(); ++f) {
        const auto& u = traj.frames[f];
        tmp.resize(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) tmp[i] = p == 2.0 ? u[i] * u[i] : std::pow(std::abs(u[i]), p);
        lp[f] = trapezoid(tmp, h);
        r.sup_lp_in_time = std::max(r.sup_lp_in_time, std::pow(lp[f], 1.0 / p));
        if (s) {
            const double n = hs_dual_norm(traj.grid, u, *s, *modes).value;
            hs[f] = n * n;
        }
    }
    double acc = 0.0, acc_hs = 0.0;
    for (std::size_t f = 0; f + 1 < traj.frames.size(); ++f) {
        const double dt = traj.save_times[f + 1] - traj.save_times[f];
        acc += 0.5 * dt * (lp[f] + lp[f + 1]);
        acc_hs += 0.5 * dt * (hs[f] + hs[f + 1]);
    }
    r.lp_spacetime = std::pow(acc, 1.0 / p);
    if (s) r.l2_hs = std::sqrt(acc_hs);
    return r;
}

struct SchedulePoint {
    double eps = 0.0;
    int K = 1;
    double budget = 0.0;
    std::size_t n_interior = 128;
    std::size_t n_traj = 2;
    std::uint64_t seed_base = 0;
};

struct PointEstimate {
    double eps = 0.0;
    int K = 0;
    double budget = 0.0;
    double x = 0.0;  // regressor used for the fit
    double estimate = 0.0;
    double stderr_ = 0.0;
    std::size_t n_traj = 0;
    double dt = 0.0;
    std::map<std::string, double> extra;
};

struct RateReport {
    std::string name;
    std::vector<PointEstimate> points;
    std::optional<LogLogFit> fit;
    bool admissible = false;  // budget strictly decreasing along the schedule
    std::map<std::string, double> summary;
    std::vector<std::string> notes;
};

inline bool budget_strictly_decreasing(const std::vector<SchedulePoint>& plan) {
    for (std::size_t i = 1; i < plan.size(); ++i)
        if (!(plan[i].budget < plan[i - 1].budget)) return false;
    return true;
}

// Shared model description for the SPDE-based experiments.
struct LabSettings {
    NonlinearitySet set = power_law_set(1.0, SigmaKind::phi_sqrt);
    double M = 1.0;
    int n_mollify = 100;
    double alpha = 0.0;
    double T = 0.25;
    double c_cfl = 0.25;
    double dt_safety = 0.9;     // fraction of the stability bound actually used
    std::size_t n_saves = 50;   // frames used for the time integrals
    unsigned workers = 1;
    double length = 1.0;
};

inline std::uint64_t mix_seed(std::uint64_t x) {
    // splitmix64 finaliser
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Fills the budget and per-point seed of a plan.
inline std::vector<SchedulePoint> prepare_plan(std::vector<SchedulePoint> plan, std::uint64_t master_seed, double length = 1.0) {
    for (std::size_t i = 0; i < plan.size(); ++i) {
        auto& p = plan[i];
        if (p.n_traj < 2) throw ConfigError("each schedule point needs at least 2 trajectories");
        const Grid g = make_grid(p.n_interior, length);
        p.budget = scaling_budget(p.eps, noise_summaries(dirichlet_eigenpairs(g, p.K)));
        if (!std::isfinite(p.budget)) throw ConfigError("non-finite budget");
        p.seed_base = mix_seed(master_seed ^ mix_seed(i));
    }
    return plan;
}

// Everything the per-point runs share.
struct PointSetup {
    Grid grid;
    ModeSet modes;
    NoiseSummaries sums;
    MollifiedSigma sn;
    BoundaryData bd;
    Field rho0;
    SPDEConfig cfg;
};

inline PointSetup setup_point(const SchedulePoint& pt, const LabSettings& st, double extra_dt_bound = 0.0) {
    PointSetup s;
    s.grid = make_grid(pt.n_interior, st.length);
    s.modes = dirichlet_eigenpairs(s.grid, pt.K);
    s.sums = noise_summaries(s.modes);
    s.sn = MollifiedSigma(st.set, st.n_mollify);
    s.bd = BoundaryData::from_density(st.set, st.M);
    s.rho0.assign(s.grid.size(), st.M);
    auto& c = s.cfg;
    c.eps = pt.eps;
    c.K = pt.K;
    c.n_mollify = st.n_mollify;
    c.alpha = st.alpha;
    c.T = st.T;
    c.c_cfl = st.c_cfl;
    // Phi' is evaluated at 2M as a margin for nonlinear Phi; exact when m = 1.
    const double sd = s.sn.sup_derivative();
    const double denom = std::max(st.set.dphi(st.M), st.set.dphi(2.0 * st.M)) + st.alpha + 0.5 * pt.eps * s.sums.sup_F1 * sd * sd;
    double dt = st.dt_safety * st.c_cfl * s.grid.h * s.grid.h / denom;
    if (extra_dt_bound > 0.0) dt = std::min(dt, extra_dt_bound);
    // round so that the number of steps is a multiple of n_saves
    const std::size_t n_saves = std::max<std::size_t>(st.n_saves, 1);
    std::size_t n_steps = static_cast<std::size_t>(std::ceil(st.T / dt));
    n_steps = ((n_steps + n_saves - 1) / n_saves) * n_saves;
    c.dt = st.T / static_cast<double>(n_steps);
    c.save_stride = n_steps / n_saves;
    return s;
}

// Per-trajectory summaries for the LLN / L^infinity sweeps.
struct SweepSample {
    double l2p = 0.0;       // int int (rho - M)^2
    double l4p = 0.0;       // int int (rho - M)^4
    double neg_sup = 0.0;   // sup (rho - M)_-, over every step
    double below_half = 0;  // 1 if min rho < M/2
};

struct SweepPoint {
    SchedulePoint point;
    double dt = 0.0;
    double linf_regressor = 0.0;  // eps (sup F3 + sup div F2)
    std::vector<SweepSample> samples;
};

inline std::string format_eta(double eta) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", eta);
    return buf;
}

inline std::vector<SweepPoint> run_mean_field_sweep(const std::vector<SchedulePoint>& plan, const LabSettings& st) {
    std::vector<SweepPoint> out;
    for (const auto& pt : plan) {
        const PointSetup s = setup_point(pt, st);
        SweepPoint sp;
        sp.point = pt;
        sp.dt = s.cfg.dt;
        sp.linf_regressor = pt.eps * (s.sums.sup_F3 + s.sums.sup_divF2);
        sp.samples.resize(pt.n_traj);
        parallel_for(pt.n_traj, st.workers, [&](std::size_t j) {
            const TrajectoryResult r = simulate(s.cfg, st.set, s.sn, s.modes, s.sums, s.grid, s.rho0, s.bd, pt.seed_base, j);
            FieldTrajectory dev = r.trajectory;
            for (auto& f : dev.frames)
                for (double& x : f) x -= st.M;
            const TrajectoryNorms n2 = trajectory_norms(dev, 2.0);
            const TrajectoryNorms n4 = trajectory_norms(dev, 4.0);
            SweepSample smp;
            smp.l2p = n2.lp_spacetime * n2.lp_spacetime;
            smp.l4p = std::pow(n4.lp_spacetime, 4.0);
            smp.neg_sup = std::max(0.0, st.M - r.diagnostics.min_value);
            smp.below_half = r.diagnostics.min_value < 0.5 * st.M ? 1.0 : 0.0;
            sp.samples[j] = smp;
        });
        out.push_back(std::move(sp));
    }
    return out;
}

namespace detail {

template <class Get>
RateReport sweep_report(const std::string& name, const std::vector<SweepPoint>& sweep, Get get, bool use_linf_x) {
    RateReport rep;
    rep.name = name;
    std::vector<SchedulePoint> plan;
    std::vector<LogLogPoint> pts;
    bool fittable = true;
    for (const auto& sp : sweep) {
        plan.push_back(sp.point);
        std::vector<double> ys;
        double freq = 0.0;
        for (const auto& smp : sp.samples) {
            ys.push_back(get(smp));
            freq += smp.below_half;
        }
        const RunningStats rs = summarize(ys);
        PointEstimate pe;
        pe.eps = sp.point.eps;
        pe.K = sp.point.K;
        pe.budget = sp.point.budget;
        pe.x = use_linf_x ? sp.linf_regressor : sp.point.eps;
        pe.estimate = rs.mean();
        pe.stderr_ = rs.stderr_mean();
        pe.n_traj = rs.count();
        pe.dt = sp.dt;
        pe.extra["freq_min_below_half_M"] = freq / static_cast<double>(sp.samples.size());
        if (!(pe.estimate > 0.0)) fittable = false;
        pts.push_back({pe.x, pe.estimate, pe.stderr_});
        rep.points.push_back(pe);
    }
    rep.admissible = budget_strictly_decreasing(plan);
    if (!rep.admissible) rep.notes.push_back("budget is not strictly decreasing along the schedule");
    if (pts.size() >= 3 && fittable)
        rep.fit = fit_loglog(pts);
    else
        rep.notes.push_back(fittable ? "fewer than 3 points: slope not reported" : "estimate at noise floor: slope undefined");
    return rep;
}

}  // namespace detail

// E int_0^T int_U |rho - M|^p for p = 2 or 4, regressed on eps.
inline RateReport lln_report(const std::vector<SweepPoint>& sweep, int p) {
    if (p != 2 && p != 4) throw DomainError("lln_report supports p = 2 and p = 4");
    return detail::sweep_report(
        "lln_p" + std::to_string(p), sweep, [p](const SweepSample& s) { return p == 2 ? s.l2p : s.l4p; }, false);
}

// E sup (rho - M)_-, regressed on eps (sup F3 + sup div F2).
inline RateReport linf_report(const std::vector<SweepPoint>& sweep) {
    RateReport rep = detail::sweep_report("linf", sweep, [](const SweepSample& s) { return s.neg_sup; }, true);
    bool nonincreasing = true;
    for (std::size_t i = 1; i < rep.points.size(); ++i)
        if (rep.points[i].extra.at("freq_min_below_half_M") > rep.points[i - 1].extra.at("freq_min_below_half_M"))
            nonincreasing = false;
    rep.summary["freq_below_half_nonincreasing"] = nonincreasing ? 1.0 : 0.0;
    return rep;
}

inline RateReport run_lln_experiment(const std::vector<SchedulePoint>& plan, int p, const LabSettings& st) {
    return lln_report(run_mean_field_sweep(plan, st), p);
}

inline RateReport run_linf_experiment(const std::vector<SchedulePoint>& plan, const LabSettings& st) {
    return linf_report(run_mean_field_sweep(plan, st));
}

struct CLTOptions {
    double s = 2.0;
    int K_drive_factor = 4;  // linear reference driven by K_drive = factor * K modes
    int K_lin = 32;
    std::vector<double> etas{0.1, 0.05};
    double z = 1.96;  // two-sided 95% for the decrease test
};

// Coupled error E int_0^T |v^{eps,K} - v|_{H^{-s}}^2 dt: the linear reference
// reuses the nonlinear run's Brownian increments for modes 1..K.
inline RateReport run_clt_experiment(const std::vector<SchedulePoint>& plan, const LabSettings& st, const CLTOptions& opt = {}) {
    if (!(opt.s > 1.5)) throw DomainError("CLT experiment needs s > (d+2)/2 = 1.5");
    RateReport rep;
    rep.name = "clt";
    rep.admissible = budget_strictly_decreasing(plan);
    if (!rep.admissible) rep.notes.push_back("budget is not strictly decreasing along the schedule");
    const double a = st.set.dphi(st.M);
    const double b = st.set.dnu(st.M);
    const double c = st.set.sigma(st.M);
    std::vector<double> errs_all;
    for (const auto& pt : plan) {
        const int K_drive = opt.K_drive_factor * pt.K;
        if (opt.K_lin > static_cast<int>(pt.n_interior)) throw ResolutionError("K_lin exceeds the grid resolution");
        const LinearModel lin = make_linear_model(a, b, c, opt.K_lin, K_drive, st.length);
        const double lin_bound = 1.0 / (2.0 * a * dirichlet_eigenvalue(opt.K_lin, st.length));
        PointSetup s = setup_point(pt, st, 0.999 * lin_bound);
        s.cfg.retain_increments = true;
        const ModeSet proj = dirichlet_eigenpairs(s.grid, opt.K_lin);
        std::vector<double> errs(pt.n_traj);
        parallel_for(pt.n_traj, st.workers, [&](std::size_t j) {
            const TrajectoryResult r = simulate(s.cfg, st.set, s.sn, s.modes, s.sums, s.grid, s.rho0, s.bd, pt.seed_base, j);
            LinearSolveOptions lo;
            lo.save_stride = s.cfg.save_stride;
            const SpectralTrajectory v =
                solve_linear_fluctuation(lin, s.cfg.T, s.cfg.dt, pt.seed_base, j, r.increments, pt.K, lo);
            const FieldTrajectory ve = fluctuation_field(r.trajectory, st.M, pt.eps);
            std::vector<double> e2(ve.frames.size());
            for (std::size_t f = 0; f < ve.frames.size(); ++f) {
                double acc = 0.0;
                for (int k = 0; k < opt.K_lin; ++k) {
                    const double d = inner(s.grid, ve.frames[f], proj[k].values) - v.coefficients[f][k];
                    acc += std::pow(proj[k].eigenvalue, -opt.s) * d * d;
                }
                e2[f] = acc;
            }
            double tot = 0.0;
            for (std::size_t f = 0; f + 1 < e2.size(); ++f)
                tot += 0.5 * (ve.save_times[f + 1] - ve.save_times[f]) * (e2[f] + e2[f + 1]);
            errs[j] = tot;
        });
        const RunningStats rs = summarize(errs);
        PointEstimate pe;
        pe.eps = pt.eps;
        pe.K = pt.K;
        pe.budget = pt.budget;
        pe.x = pt.budget;
        pe.estimate = rs.mean();
        pe.stderr_ = rs.stderr_mean();
        pe.n_traj = rs.count();
        pe.dt = s.cfg.dt;
        pe.extra["K_drive"] = K_drive;
        pe.extra["K_lin"] = opt.K_lin;
        pe.extra["tail_sum_Kdrive"] = tail_sum(K_drive + 1, opt.s, 1, st.length).value;
        for (double eta : opt.etas) {
            double n_exc = 0;
            for (double e : errs) n_exc += e > eta ? 1.0 : 0.0;
            pe.extra["exceed_" + format_eta(eta)] = n_exc / static_cast<double>(errs.size());
        }
        rep.points.push_back(pe);
    }
    // decrease between consecutive points must exceed z combined standard errors
    bool strictly = rep.points.size() >= 2;
    bool exceed_ok = true;
    for (std::size_t i = 1; i < rep.points.size(); ++i) {
        const auto& p0 = rep.points[i - 1];
        const auto& p1 = rep.points[i];
        const double se = std::sqrt(p0.stderr_ * p0.stderr_ + p1.stderr_ * p1.stderr_);
        if (!(p0.estimate - p1.estimate > opt.z * se)) strictly = false;
        for (double eta : opt.etas) {
            const std::string key = "exceed_" + format_eta(eta);
            if (p1.extra.at(key) > p0.extra.at(key)) exceed_ok = false;
        }
    }
    rep.summary["strictly_decreasing"] = strictly ? 1.0 : 0.0;
    rep.summary["exceedance_nonincreasing"] = exceed_ok ? 1.0 : 0.0;
    std::vector<LogLogPoint> pts;
    bool positive = true;
    for (const auto& pe : rep.points) {
        pts.push_back({pe.x, pe.estimate, pe.stderr_});
        positive = positive && pe.estimate > 0.0;
    }
    if (pts.size() >= 3 && positive) rep.fit = fit_loglog(pts);
    return rep;
}

}  // namespace fhlab
