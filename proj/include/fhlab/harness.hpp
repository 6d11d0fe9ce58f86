#pragma once

// Experiment orchestration: strict JSON configs, seeding, and the output
// files (manifest, result CSV/JSON, plot CSV) for every experiment kind.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fhlab/audit.hpp"
#include "fhlab/basis.hpp"
#include "fhlab/io.hpp"
#include "fhlab/lab.hpp"
#include "fhlab/ldp.hpp"
#include "fhlab/linear_spde.hpp"
#include "fhlab/nonlinearity.hpp"
#include "fhlab/parallel.hpp"
#include "fhlab/pde.hpp"
#include "fhlab/spde.hpp"
#include "fhlab/stats.hpp"
#include "fhlab/version.hpp"
#include "fhlab/zrp.hpp"

namespace fhlab {

using json = nlohmann::ordered_json;

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> k{"hydro", "simulate", "lln", "clt", "linf", "zrp", "zrp-compare", "rate", "audit"};
    return k;
}

// A config object that rejects keys it does not know.
class Section {
public:
    Section(const json& j, std::string name, std::set<std::string> allowed) : name_(std::move(name)) {
        if (j.is_null()) {
            j_ = json::object();
            return;
        }
        if (!j.is_object()) throw ConfigError("configuration section '" + name_ + "' must be an object");
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!allowed.count(it.key()))
                throw ConfigError("unknown configuration key '" + it.key() + "'" + (name_.empty() ? "" : " in section '" + name_ + "'"));
        j_ = j;
    }

    bool has(const std::string& k) const { return j_.contains(k); }
    const json& raw(const std::string& k) const { return j_.at(k); }

    template <class T>
    T get(const std::string& k, T def) const {
        if (!j_.contains(k)) return def;
        return as<T>(k);
    }
    template <class T>
    T require(const std::string& k) const {
        if (!j_.contains(k)) throw ConfigError("missing configuration key '" + k + "'" + where());
        return as<T>(k);
    }
    Section sub(const std::string& k, std::set<std::string> allowed) const {
        return Section(j_.contains(k) ? j_.at(k) : json(), k, std::move(allowed));
    }

private:
    std::string where() const { return name_.empty() ? "" : " in section '" + name_ + "'"; }
    template <class T>
    T as(const std::string& k) const {
        try {
            return j_.at(k).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("configuration key '" + k + "'" + where() + " has the wrong type");
        }
    }
    std::string name_;
    json j_;
};

struct RunOptions {
    std::optional<std::uint64_t> seed;  // overrides the config
    unsigned workers = 1;
    bool strict = false;
    std::filesystem::path out_dir = "out";
};

struct RunOutcome {
    int exit_code = 0;
    std::vector<std::string> files;  // relative to out_dir, manifest last
    std::vector<std::string> messages;
    json summary;
};

namespace harness_detail {

struct Model {
    NonlinearitySet set;
    double M = 1.0;
    std::optional<double> fbar;
    int n_mollify = 100;
    double alpha = 0.0;
};

inline Model parse_model(const Section& top) {
    const Section s = top.sub("model", {"m", "sigma", "nu_slope", "M", "fbar", "n_mollify", "alpha"});
    Model m;
    m.set = power_law_set(s.get<double>("m", 1.0), parse_sigma_kind(s.get<std::string>("sigma", "phi_sqrt")),
                          s.get<double>("nu_slope", 0.0));
    m.M = s.get<double>("M", 1.0);
    if (s.has("fbar")) {
        m.fbar = s.require<double>("fbar");
        // with constant data the steady state is Phi^{-1}(fbar)
        m.M = m.set.phi_inverse(*m.fbar);
    }
    if (!(m.M > 0.0)) throw ConfigError("model M must be positive");
    m.n_mollify = s.get<int>("n_mollify", 100);
    m.alpha = s.get<double>("alpha", 0.0);
    if (m.alpha < 0.0) throw ConfigError("alpha must be nonnegative");
    return m;
}

struct GridSpec {
    std::size_t n_interior = 128;
    double length = 1.0;
};

inline GridSpec parse_grid(const Section& top) {
    const Section s = top.sub("grid", {"n_interior", "length"});
    GridSpec g{s.get<std::size_t>("n_interior", 128), s.get<double>("length", 1.0)};
    if (g.n_interior < 1) throw ConfigError("grid n_interior must be positive");
    if (!(g.length > 0.0)) throw ConfigError("grid length must be positive");
    return g;
}

struct TimeSpec {
    double T = 0.25;
    std::optional<double> dt;
    double c_cfl = 0.25;
    std::size_t n_saves = 50;
    double dt_safety = 0.9;
};

inline TimeSpec parse_time(const Section& top) {
    const Section s = top.sub("time", {"T", "dt", "c_cfl", "n_saves", "dt_safety"});
    TimeSpec t;
    t.T = s.get<double>("T", 0.25);
    if (s.has("dt")) t.dt = s.require<double>("dt");
    t.c_cfl = s.get<double>("c_cfl", 0.25);
    t.n_saves = s.get<std::size_t>("n_saves", 50);
    t.dt_safety = s.get<double>("dt_safety", 0.9);
    if (!(t.T > 0.0)) throw ConfigError("time T must be positive");
    if (!(t.c_cfl > 0.0 && t.c_cfl <= 0.5)) throw ConfigError("c_cfl must lie in (0, 0.5]");
    if (!(t.dt_safety > 0.0 && t.dt_safety <= 1.0)) throw ConfigError("dt_safety must lie in (0, 1]");
    return t;
}

// Largest K with eps K^{d+2} < tau (d = 1).
inline int k_from_rule(double eps, double tau, int K_max) {
    int K = 0;
    while (K < K_max && eps * std::pow(static_cast<double>(K + 1), 3.0) < tau) ++K;
    if (K < 1) throw ConfigError("K rule admits no K >= 1 for eps = " + fmt(eps));
    return K;
}

inline std::vector<SchedulePoint> parse_schedule(const Section& top, const GridSpec& g, std::uint64_t seed) {
    const Section s = top.sub("schedule", {"eps", "K", "K_rule", "tau", "K_max", "n_traj"});
    const auto eps = s.require<std::vector<double>>("eps");
    if (eps.empty()) throw ConfigError("schedule eps list is empty");
    const auto n_traj = s.get<std::size_t>("n_traj", 20);
    std::vector<int> Ks;
    if (s.has("K_rule")) {
        if (s.has("K")) throw ConfigError("give either schedule K or K_rule, not both");
        const auto rule = s.require<std::string>("K_rule");
        if (rule != "eps*K^{d+2}<tau") throw ConfigError("unknown K_rule '" + rule + "'");
        const double tau = s.require<double>("tau");
        const int K_max = s.get<int>("K_max", static_cast<int>(g.n_interior));
        for (double e : eps) Ks.push_back(k_from_rule(e, tau, K_max));
    } else if (s.has("K") && s.raw("K").is_array()) {
        Ks = s.require<std::vector<int>>("K");
        if (Ks.size() != eps.size()) throw ConfigError("schedule K and eps lists differ in length");
    } else {
        Ks.assign(eps.size(), s.get<int>("K", 8));
    }
    std::vector<SchedulePoint> plan;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0.0)) throw ConfigError("schedule eps must be positive");
        if (Ks[i] < 1 || static_cast<std::size_t>(Ks[i]) > g.n_interior)
            throw ConfigError("schedule K = " + std::to_string(Ks[i]) + " outside [1, n_interior]");
        SchedulePoint p;
        p.eps = eps[i];
        p.K = Ks[i];
        p.n_interior = g.n_interior;
        p.n_traj = n_traj;
        plan.push_back(p);
    }
    return prepare_plan(plan, seed, g.length);
}

inline LabSettings lab_settings(const Model& m, const GridSpec& g, const TimeSpec& t, unsigned workers) {
    LabSettings st;
    st.set = m.set;
    st.M = m.M;
    st.n_mollify = m.n_mollify;
    st.alpha = m.alpha;
    st.T = t.T;
    st.c_cfl = t.c_cfl;
    st.dt_safety = t.dt_safety;
    st.n_saves = t.n_saves;
    st.workers = workers;
    st.length = g.length;
    return st;
}

class Outputs {
public:
    explicit Outputs(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }
    void text(const std::string& name, const std::string& content) {
        write_text(dir_ / name, content);
        files_.push_back(name);
    }
    void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }
    const std::vector<std::string>& files() const { return files_; }
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> files_;
};

inline json report_json(const RateReport& r) {
    json j;
    j["name"] = r.name;
    j["admissible"] = r.admissible;
    json pts = json::array();
    for (const auto& p : r.points) {
        json q{{"eps", p.eps}, {"K", p.K}, {"budget", p.budget}, {"x", p.x}, {"estimate", p.estimate},
               {"stderr", p.stderr_}, {"n_traj", p.n_traj}, {"dt", p.dt}};
        for (const auto& [k, v] : p.extra) q[k] = v;
        pts.push_back(q);
    }
    j["points"] = pts;
    if (r.fit)
        j["fit"] = {{"slope", r.fit->slope}, {"intercept", r.fit->intercept}, {"r_squared", r.fit->r_squared},
                    {"slope_stderr", r.fit->slope_stderr}};
    else
        j["fit"] = nullptr;
    json sm = json::object();
    for (const auto& [k, v] : r.summary) sm[k] = v;
    j["summary"] = sm;
    j["notes"] = r.notes;
    return j;
}

inline std::string report_csv(const RateReport& r) {
    CsvWriter w({"eps", "K", "budget", "estimate", "stderr", "n_traj"});
    for (const auto& p : r.points) w.row(p.eps, p.K, p.budget, p.estimate, p.stderr_, p.n_traj);
    return w.str();
}

inline void plot_rows(CsvWriter& w, const RateReport& r) {
    for (const auto& p : r.points) w.row(p.x, p.estimate, p.stderr_, r.name);
}

inline CsvWriter plot_writer() { return CsvWriter({"x", "y", "y_err", "series"}); }

inline Field initial_profile(const Section& s, const Grid& grid, double M) {
    const auto kind = s.get<std::string>("initial", "constant");
    const double amp = s.get<double>("amplitude", 0.0);
    Field r(grid.size(), M);
    if (kind == "constant") return r;
    if (kind == "bump") {
        for (std::size_t i = 0; i < grid.size(); ++i) r[i] = M + amp * std::sin(std::numbers::pi * grid.nodes[i] / grid.length);
        r.front() = r.back() = M;
        return r;
    }
    throw ConfigError("unknown initial profile '" + kind + "' (expected constant or bump)");
}

inline std::string field_csv(const FieldTrajectory& tr) {
    CsvWriter w({"t", "x", "rho"});
    for (std::size_t f = 0; f < tr.frames.size(); ++f)
        for (std::size_t i = 0; i < tr.frames[f].size(); ++i) w.row(tr.save_times[f], tr.grid.nodes[i], tr.frames[f][i]);
    return w.str();
}

// ---- kinds ----

inline void run_hydro(const Section& top, Outputs& out, RunOutcome& oc) {
    const Model m = parse_model(top);
    const GridSpec gs = parse_grid(top);
    const TimeSpec ts = parse_time(top);
    const Section s = top.sub("simulate", {"initial", "amplitude"});
    const Grid grid = make_grid(gs.n_interior, gs.length);
    const BoundaryData bd = BoundaryData::from_density(m.set, m.M);
    const Field rho0 = initial_profile(s, grid, m.M);
    const double dt = ts.dt.value_or(ts.dt_safety * deterministic_dt_bound(m.set, rho0, grid.h, m.alpha, ts.c_cfl) * 0.5);
    const auto n_steps = make_time_grid(ts.T, dt).n_steps;
    DeterministicOptions opt{ts.c_cfl, std::max<std::size_t>(1, n_steps / std::max<std::size_t>(ts.n_saves, 1))};
    const FieldTrajectory tr = solve_hydro(m.set, rho0, grid, bd, ts.T, dt, m.alpha, opt);
    out.text("hydro_frames.bin", encode_frames(tr));
    out.text("hydro_fields.csv", field_csv(tr));
    CsvWriter p = plot_writer();
    for (std::size_t i = 0; i < grid.size(); ++i) p.row(grid.nodes[i], tr.final_frame()[i], 0.0, "rho_T");
    out.text("plot.csv", p.str());
    oc.summary = {{"dt", tr.meta.dt}, {"mass_initial", discrete_mass(grid, tr.frames.front())},
                  {"mass_final", discrete_mass(grid, tr.final_frame())}, {"scheme", tr.meta.scheme}};
    out.json_file("result.json", oc.summary);
}

inline void run_simulate(const Section& top, std::uint64_t seed, Outputs& out, RunOutcome& oc) {
    const Model m = parse_model(top);
    const GridSpec gs = parse_grid(top);
    const TimeSpec ts = parse_time(top);
    const Section s = top.sub("simulate", {"initial", "amplitude", "eps", "K", "retain_increments", "trajectory_index"});
    SchedulePoint pt;
    pt.eps = s.require<double>("eps");
    pt.K = s.get<int>("K", 8);
    pt.n_interior = gs.n_interior;
    const LabSettings st = lab_settings(m, gs, ts, 1);
    PointSetup ps = setup_point(pt, st);
    if (ts.dt) ps.cfg.dt = *ts.dt;
    ps.cfg.retain_increments = s.get<bool>("retain_increments", false);
    const Field rho0 = initial_profile(s, ps.grid, m.M);
    const auto idx = s.get<std::uint64_t>("trajectory_index", 0);
    const TrajectoryResult r = simulate(ps.cfg, m.set, ps.sn, ps.modes, ps.sums, ps.grid, rho0, ps.bd, seed, idx);
    out.text("trajectory_frames.bin", encode_frames(r.trajectory));
    out.text("trajectory_fields.csv", field_csv(r.trajectory));
    if (ps.cfg.retain_increments) out.text("increments.bin", encode_increments(r.increments, static_cast<std::uint32_t>(pt.K)));
    CsvWriter p = plot_writer();
    for (std::size_t i = 0; i < ps.grid.size(); ++i) p.row(ps.grid.nodes[i], r.trajectory.final_frame()[i], 0.0, "rho_T");
    out.text("plot.csv", p.str());
    oc.summary = {{"eps", pt.eps},
                  {"K", pt.K},
                  {"budget", scaling_budget(pt.eps, ps.sums)},
                  {"dt", r.trajectory.meta.dt},
                  {"min", r.diagnostics.min_value},
                  {"max", r.diagnostics.max_value},
                  {"mass", r.diagnostics.mass_at_saves},
                  {"seed", seed},
                  {"trajectory_index", idx}};
    out.json_file("result.json", oc.summary);
}

inline bool run_sweep_kind(const std::string& kind, const Section& top, std::uint64_t seed, unsigned workers, Outputs& out,
                           RunOutcome& oc) {
    const Model m = parse_model(top);
    const GridSpec gs = parse_grid(top);
    const TimeSpec ts = parse_time(top);
    const auto plan = parse_schedule(top, gs, seed);
    const LabSettings st = lab_settings(m, gs, ts, workers);
    std::vector<RateReport> reps;
    if (kind == "clt") {
        const Section c = top.sub("clt", {"s", "K_drive_factor", "K_lin", "etas", "z"});
        CLTOptions o;
        o.s = c.get<double>("s", 2.0);
        o.K_drive_factor = c.get<int>("K_drive_factor", 4);
        o.K_lin = c.get<int>("K_lin", 32);
        o.etas = c.get<std::vector<double>>("etas", {0.1, 0.05});
        o.z = c.get<double>("z", 1.96);
        reps.push_back(run_clt_experiment(plan, st, o));
    } else {
        const Section l = top.sub("lln", {"p"});
        const auto sweep = run_mean_field_sweep(plan, st);
        if (kind == "lln") {
            for (int p : l.get<std::vector<int>>("p", {2, 4})) reps.push_back(lln_report(sweep, p));
        } else {
            reps.push_back(linf_report(sweep));
        }
    }
    json all = json::array();
    CsvWriter plot = plot_writer();
    bool admissible = true;
    for (const auto& r : reps) {
        out.text(r.name + ".csv", report_csv(r));
        all.push_back(report_json(r));
        plot_rows(plot, r);
        admissible = admissible && r.admissible;
    }
    out.json_file("report.json", all);
    out.text("plot.csv", plot.str());
    oc.summary = all;
    return admissible;
}

inline void run_zrp_kind(const Section& top, std::uint64_t seed, unsigned workers, Outputs& out, RunOutcome& oc, bool compare) {
    const Section z = top.sub("zrp", {"n_sites", "family", "param", "M", "T_macro", "n_runs", "n_snapshots", "periodic",
                                      "initial", "K_lin", "K_drive", "dt_linear", "n_linear_paths", "occupancy_cap"});
    ZRPConfig cfg;
    cfg.n_sites = z.get<std::size_t>("n_sites", 64);
    cfg.rate.family = parse_rate_family(z.get<std::string>("family", "linear"));
    cfg.rate.param = z.get<double>("param", 1.0);
    cfg.T_macro = z.get<double>("T_macro", 0.25);
    cfg.periodic = z.get<bool>("periodic", false);
    cfg.n_snapshots = z.get<std::size_t>("n_snapshots", 4);
    cfg.occupancy_cap = z.get<std::int64_t>("occupancy_cap", 1'000'000);
    const double M = z.get<double>("M", 1.0);
    const double phiM = grand_canonical_phi(cfg.rate, M);
    if (!cfg.periodic) cfg.reservoir_left = cfg.reservoir_right = 0.5 * phiM;
    const auto init = z.get<std::string>("initial", "flat");
    if (init == "flat") {
        if (std::abs(M - std::round(M)) > 0) throw ConfigError("flat initial occupancy needs an integer M");
        cfg.initial.assign(cfg.n_sites, static_cast<std::int64_t>(std::llround(M)));
    } else if (init != "zero") {
        throw ConfigError("unknown zrp initial '" + init + "' (expected flat or zero)");
    }
    cfg.validate();
    const auto n_runs = z.get<std::size_t>("n_runs", 100);
    if (n_runs < 2) throw ConfigError("zrp n_runs must be at least 2");
    const std::uint64_t zseed = mix_seed(seed ^ 0x5A5250ull);

    const double L = 1.0;
    const auto psi = [L](double x) { return std::sqrt(2.0 / L) * std::sin(std::numbers::pi * x / L); };
    std::vector<ZRPTrajectory> runs(n_runs);
    parallel_for(n_runs, workers, [&](std::size_t j) { runs[j] = zrp_simulate(cfg, zseed, j); });

    CsvWriter snaps({"t_macro", "site", "occupancy"});
    for (std::size_t f = 0; f < runs[0].snapshots.size(); ++f)
        for (std::size_t x = 0; x < cfg.n_sites; ++x) snaps.row(runs[0].times[f], x + 1, runs[0].snapshots[f][x]);
    out.text("zrp_snapshots.csv", snaps.str());

    std::vector<double> fl(n_runs), density(n_runs);
    bool bookkeeping = true;
    std::uint64_t inj = 0, abs = 0, bulk = 0;
    for (std::size_t j = 0; j < n_runs; ++j) {
        const ZRPFields f = zrp_fields(runs[j], psi, M, L);
        fl[j] = f.fluctuation.back();
        density[j] = f.mass / (static_cast<double>(cfg.n_sites) * runs[j].spacing);
        bookkeeping = bookkeeping && runs[j].final_count == runs[j].initial_count + static_cast<std::int64_t>(runs[j].injections()) -
                                                                   static_cast<std::int64_t>(runs[j].absorptions());
        inj += runs[j].injections();
        abs += runs[j].absorptions();
        bulk += runs[j].bulk_jumps;
    }
    const RunningStats fs = summarize(fl), ds = summarize(density);
    // standard error of a sample variance, normal approximation
    const auto var_se = [](const RunningStats& s) { return s.variance() * std::sqrt(2.0 / static_cast<double>(s.count() - 1)); };
    json res{{"time_convention", "h = 1/(N+1), site x at x h, microscopic time t/h^2; SPDE reference with a = Phi'(M)/2"},
             {"n_sites", cfg.n_sites},
             {"family", to_string(cfg.rate.family)},
             {"Phi_M", phiM},
             {"reservoir_rate", cfg.reservoir_left},
             {"n_runs", n_runs},
             {"mean_density", ds.mean()},
             {"mean_density_stderr", ds.stderr_mean()},
             {"var_fluctuation_e1", fs.variance()},
             {"var_fluctuation_e1_stderr", var_se(fs)},
             {"bookkeeping_exact", bookkeeping},
             {"injections", inj},
             {"absorptions", abs},
             {"bulk_jumps", bulk}};
    CsvWriter plot = plot_writer();
    plot.row(cfg.T_macro, fs.variance(), var_se(fs), "zrp_var_e1");
    if (compare) {
        // linearised reference: a = Phi'(M)/2, c = sigma(M) with sigma = sqrt(Phi)
        const double h = 1e-6 * std::max(1.0, M);
        const double dphi = (grand_canonical_phi(cfg.rate, M + h) - grand_canonical_phi(cfg.rate, std::max(0.0, M - h))) /
                            (M + h - std::max(0.0, M - h));
        const int K_lin = z.get<int>("K_lin", 8);
        const int K_drive = z.get<int>("K_drive", 256);
        const LinearModel lin = make_linear_model(0.5 * dphi, 0.0, std::sqrt(phiM), K_lin, K_drive, L);
        const double dt = z.get<double>("dt_linear", 1e-4);
        const auto n_lin = z.get<std::size_t>("n_linear_paths", n_runs);
        const std::uint64_t lseed = mix_seed(seed ^ 0x4C494Eull);
        std::vector<double> v1(n_lin);
        LinearSolveOptions lo;
        lo.save_stride = 0;
        parallel_for(n_lin, workers, [&](std::size_t j) {
            v1[j] = solve_linear_fluctuation(lin, cfg.T_macro, dt, lseed, j, {}, 0, lo).coefficients.back()[0];
        });
        const RunningStats vs = summarize(v1);
        const double exact = scalar_ou_variance(lin, 1, cfg.T_macro);
        const double zlo = fs.variance() - 1.96 * var_se(fs), zhi = fs.variance() + 1.96 * var_se(fs);
        const double llo = vs.variance() - 1.96 * var_se(vs), lhi = vs.variance() + 1.96 * var_se(vs);
        res["var_linear_e1"] = vs.variance();
        res["var_linear_e1_stderr"] = var_se(vs);
        res["var_linear_e1_exact"] = exact;
        res["linear_a"] = lin.a;
        res["linear_c"] = lin.c;
        res["K_lin"] = K_lin;
        res["K_drive"] = K_drive;
        res["cis_overlap"] = zlo <= lhi && llo <= zhi;
        plot.row(cfg.T_macro, vs.variance(), var_se(vs), "linear_var_e1");
        CsvWriter r({"series", "variance", "stderr", "n"});
        r.row(std::string("zrp"), fs.variance(), var_se(fs), fs.count());
        r.row(std::string("linear"), vs.variance(), var_se(vs), vs.count());
        out.text("zrp_compare.csv", r.str());
    }
    out.text("plot.csv", plot.str());
    out.json_file("result.json", res);
    oc.summary = res;
}

inline OptimizerConfig parse_optimizer(const Section& r, unsigned workers) {
    OptimizerConfig o;
    o.n_x_coarse = r.get<std::size_t>("n_x_coarse", 8);
    o.n_t_coarse = r.get<std::size_t>("n_t_coarse", 8);
    o.penalties = r.get<std::vector<double>>("penalties", o.penalties);
    o.max_iter = r.get<int>("max_iter", o.max_iter);
    const auto mode = r.get<std::string>("mode", "gauss_newton");
    if (mode == "gauss_newton")
        o.mode = DescentMode::gauss_newton;
    else if (mode == "steepest")
        o.mode = DescentMode::steepest;
    else
        throw ConfigError("unknown optimizer mode '" + mode + "'");
    o.n_interior = r.get<std::size_t>("n_interior", 32);
    o.T = r.get<double>("T", 0.1);
    o.workers = workers;
    o.validate();
    return o;
}

inline json rate_json(const RateResult& r) {
    json g = json::array();
    for (const auto& s : r.g.slices) g.push_back(s);
    return {{"I_upper", r.I_upper}, {"mismatch", r.mismatch}, {"stalled", r.stalled},
            {"mismatch_per_level", r.mismatch_per_level}, {"iterations", r.log.size()}, {"g", g}, {"note", r.note}};
}

inline std::string rate_log_csv(const RateResult& r, const std::string& label) {
    CsvWriter w({"run", "penalty", "iteration", "objective", "energy", "mismatch", "step"});
    for (const auto& l : r.log) w.row(label, l.penalty, l.iteration, l.objective, l.energy, l.mismatch, l.step);
    return w.str();
}

inline void run_rate_kind(const Section& top, unsigned workers, Outputs& out, RunOutcome& oc) {
    const Model m = parse_model(top);
    const Section r = top.sub("rate", {"target", "amplitudes", "g0_amplitude", "n_x_coarse", "n_t_coarse", "penalties",
                                       "max_iter", "mode", "n_interior", "T", "K_lin"});
    const OptimizerConfig opt = parse_optimizer(r, workers);
    const Grid grid = make_grid(opt.n_interior);
    const BoundaryData bd = BoundaryData::from_density(m.set, m.M);
    const Field rho_flat(grid.size(), m.M);
    const auto target_kind = r.get<std::string>("target", "hydro");
    json res = json::object();
    std::string log;
    CsvWriter plot = plot_writer();
    if (target_kind == "hydro" || target_kind == "roundtrip") {
        // a nonconstant start so the hydrodynamic path is not trivial
        Field rho0(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) rho0[i] = m.M + 0.3 * m.M * std::sin(std::numbers::pi * grid.nodes[i]);
        rho0.front() = rho0.back() = m.M;
        Field target;
        double g0_energy = 0.0;
        if (target_kind == "hydro") {
            target = solve_hydro(m.set, rho0, grid, bd, opt.T, skeleton_dt(m.set, grid, rho0, rho0, opt)).final_frame();
        } else {
            const double a0 = r.get<double>("g0_amplitude", 1.0);
            Control g0 = Control::zeros(opt.n_t_coarse, opt.n_x_coarse, opt.T, grid.length);
            for (std::size_t s = 0; s < g0.n_time(); ++s)
                for (std::size_t i = 0; i < g0.n_x(); ++i) {
                    const double x = static_cast<double>(i) / static_cast<double>(g0.n_x() - 1);
                    g0.slices[s][i] = a0 * std::cos(std::numbers::pi * x) * (1.0 + 0.5 * static_cast<double>(s) / static_cast<double>(g0.n_time()));
                }
            g0_energy = control_energy(g0);
            target = solve_skeleton(m.set, g0, rho0, grid, bd, opt.T, skeleton_dt(m.set, grid, rho0, rho0, opt)).final_frame();
            res["g0_energy"] = g0_energy;
        }
        const RateResult rr = evaluate_rate_upper(target, m.set, rho0, bd, opt);
        res["target"] = target_kind;
        res["result"] = rate_json(rr);
        log += rate_log_csv(rr, target_kind);
        plot.row(0.0, rr.I_upper, 0.0, target_kind + "_I_upper");
        if (target_kind == "roundtrip") plot.row(0.0, g0_energy, 0.0, "roundtrip_g0_energy");
    } else if (target_kind == "gaussian_sweep") {
        const auto amps = r.get<std::vector<double>>("amplitudes", {0.2, 0.1, 0.05});
        const LinearModel lin = make_linear_model(m.set.dphi(m.M), m.set.dnu(m.M), m.set.sigma(m.M), r.get<int>("K_lin", 16),
                                                  1, grid.length);
        json rows = json::array();
        CsvWriter w({"amplitude", "I_upper", "I_gauss", "rel_gap", "mismatch", "mismatch_gauss"});
        for (double a : amps) {
            Field target(grid.size());
            for (std::size_t i = 0; i < grid.size(); ++i) target[i] = m.M + a * m.M * std::sin(std::numbers::pi * grid.nodes[i]);
            target.front() = target.back() = m.M;
            const RateResult ri = evaluate_rate_upper(target, m.set, rho_flat, bd, opt);
            const RateResult rg = gaussian_rate(target, lin, m.M, rho_flat, opt);
            const double gap = std::abs(ri.I_upper - rg.I_upper) / rg.I_upper;
            rows.push_back({{"amplitude", a}, {"I_upper", ri.I_upper}, {"I_gauss", rg.I_upper}, {"rel_gap", gap},
                            {"mismatch", ri.mismatch}, {"mismatch_gauss", rg.mismatch}, {"stalled", ri.stalled || rg.stalled}});
            w.row(a, ri.I_upper, rg.I_upper, gap, ri.mismatch, rg.mismatch);
            plot.row(a, gap, 0.0, "rel_gap");
            log += rate_log_csv(ri, "nonlinear_a" + fmt(a));
            log += rate_log_csv(rg, "gaussian_a" + fmt(a));
        }
        res["target"] = target_kind;
        res["sweep"] = rows;
        out.text("rate_sweep.csv", w.str());
    } else {
        throw ConfigError("unknown rate target '" + target_kind + "' (expected hydro, roundtrip or gaussian_sweep)");
    }
    out.text("rate_log.csv", log);
    out.text("plot.csv", plot.str());
    out.json_file("result.json", res);
    oc.summary = res;
}

inline bool run_audit_kind(const Section& top, Outputs& out, RunOutcome& oc) {
    const Model m = parse_model(top);
    const Section a = top.sub("audit", {"p", "xi_min", "xi_max", "samples", "K", "n_interior"});
    AuditOptions o;
    o.rho_bar = m.M;
    o.p = a.get<double>("p", 4.0);
    o.xi_min = a.get<double>("xi_min", 1e-6);
    o.xi_max = a.get<double>("xi_max", 1e4);
    o.samples = a.get<int>("samples", 121);
    const MollifiedSigma sn(m.set, m.n_mollify);
    const Grid g = make_grid(a.get<std::size_t>("n_interior", 128));
    const NoiseSummaries sums = noise_summaries(dirichlet_eigenpairs(g, a.get<int>("K", 8)));
    const AuditReport rep = assumption_audit(m.set, &sn, &sums, o);
    json cl = json::array();
    CsvWriter w({"clause", "passed", "constant", "exponent", "statement"});
    for (const auto& c : rep.clauses) {
        json j{{"name", c.name}, {"statement", c.statement}, {"passed", c.passed}, {"constant", c.constant}, {"note", c.note}};
        j["exponent"] = c.exponent ? json(*c.exponent) : json(nullptr);
        cl.push_back(j);
        w.row(c.name, std::string(c.passed ? "true" : "false"), c.constant, c.exponent ? fmt(*c.exponent) : std::string(""),
              "\"" + c.statement + "\"");
    }
    json res{{"label", rep.label}, {"all_passed", rep.all_passed()}, {"clauses", cl}};
    out.text("audit.csv", w.str());
    out.json_file("result.json", res);
    oc.summary = res;
    return rep.all_passed();
}

}  // namespace harness_detail

inline json parse_config_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
}

// Runs one experiment and writes its files. Throws ConfigError /
// DivergenceError; admissibility failures set exit_code 4 in strict mode.
inline RunOutcome run_experiment(const std::string& kind, const json& config, const RunOptions& ro) {
    using namespace harness_detail;
    const auto& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) throw ConfigError("unknown experiment kind '" + kind + "'");
    const auto t0 = std::chrono::steady_clock::now();
    const Section top(config, "",
                      {"kind", "seed", "model", "grid", "time", "schedule", "simulate", "lln", "clt", "zrp", "rate", "audit"});
    if (top.has("kind") && top.require<std::string>("kind") != kind)
        throw ConfigError("config kind '" + top.require<std::string>("kind") + "' does not match requested kind '" + kind + "'");
    const std::uint64_t seed = ro.seed.value_or(top.get<std::uint64_t>("seed", 0));

    RunOutcome oc;
    Outputs out(ro.out_dir);
    bool ok = true;
    if (kind == "hydro")
        run_hydro(top, out, oc);
    else if (kind == "simulate")
        run_simulate(top, seed, out, oc);
    else if (kind == "lln" || kind == "linf" || kind == "clt") {
        ok = run_sweep_kind(kind, top, seed, ro.workers, out, oc);
        if (!ok) oc.messages.push_back("schedule is not admissible: budget not strictly decreasing");
    } else if (kind == "zrp" || kind == "zrp-compare")
        run_zrp_kind(top, seed, ro.workers, out, oc, kind == "zrp-compare");
    else if (kind == "rate")
        run_rate_kind(top, ro.workers, out, oc);
    else if (kind == "audit") {
        ok = run_audit_kind(top, out, oc);
        if (!ok) oc.messages.push_back("assumption audit has failing clauses");
    }
    if (!ok && ro.strict) oc.exit_code = 4;

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json manifest{{"kind", kind},
                  {"library", "fhlab"},
                  {"library_version", FHLAB_VERSION},
                  {"seed", seed},
                  {"strict", ro.strict},
                  {"config", config},
                  {"files", out.files()},
                  {"wall_time_seconds", wall}};
    out.json_file("manifest.json", manifest);
    oc.files = out.files();
    return oc;
}

}  // namespace fhlab
