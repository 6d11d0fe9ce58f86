// End-to-end acceptance run: one PASS/FAIL line per criterion.
// Usage: acceptance [out_dir]   (default ./acceptance_out)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "fhlab/harness.hpp"

using namespace fhlab;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

const double pi = std::numbers::pi;
fs::path g_out = "acceptance_out";

std::string num(double x) {
    char b[64];
    std::snprintf(b, sizeof b, "%.4g", x);
    return b;
}

json load_config(const std::string& name) { return parse_config_text(read_text(fs::path(FHLAB_SOURCE_DIR) / "configs" / (name + ".json"))); }

// runs configs/<name>.json, caching the outcome per worker count
std::map<std::pair<std::string, unsigned>, RunOutcome> g_runs;
const RunOutcome& run_config(const std::string& name, unsigned workers) {
    const auto key = std::make_pair(name, workers);
    if (auto it = g_runs.find(key); it != g_runs.end()) return it->second;
    const json cfg = load_config(name);
    RunOptions ro;
    ro.workers = workers;
    ro.out_dir = g_out / ("w" + std::to_string(workers)) / name;
    fs::remove_all(ro.out_dir);
    return g_runs[key] = run_experiment(cfg.at("kind").get<std::string>(), cfg, ro);
}

json report_named(const RunOutcome& oc, const std::string& name) {
    for (const auto& r : oc.summary)
        if (r["name"] == name) return r;
    throw std::runtime_error("report " + name + " missing");
}

// ---- 1 ----
Verdict eigenbasis() {
    const Grid g = make_grid(512);
    const ModeSet m = dirichlet_eigenpairs(g, 32);
    double orth = 0.0, lam = 0.0, hs = 0.0;
    for (int j = 0; j < 32; ++j) {
        for (int k = 0; k < 32; ++k) orth = std::max(orth, std::abs(inner(g, m[j].values, m[k].values) - (j == k)));
        lam = std::max(lam, std::abs(m[j].eigenvalue - std::pow((j + 1) * pi, 2)) / m[j].eigenvalue);
        for (double s : {0.5, 1.0, 2.0})
            hs = std::max(hs, std::abs(hs_dual_norm(g, m[j].values, s, m).value - std::pow(m[j].eigenvalue, -s / 2)));
    }
    return {orth <= 1e-8 && lam <= 1e-15 && hs <= 1e-10,
            "max|<e_j,e_k>-delta|=" + num(orth) + " rel lambda err=" + num(lam) + " H^-s err=" + num(hs)};
}

// ---- 2 ----
Verdict noise() {
    const Grid g = make_grid(128);
    double div_err = 0.0;
    for (int K : {1, 8, 32}) {
        const NoiseSummaries s = noise_summaries(dirichlet_eigenpairs(g, K));
        for (std::size_t i = 0; i < g.size(); ++i)
            div_err = std::max(div_err, std::abs(s.divF2[i] - (s.F3[i] - s.lambda_e2[i])) / std::max(1.0, s.F3[i]));
    }
    const Grid gc = make_grid(15);
    const ModeSet m = dirichlet_eigenpairs(gc, 5);
    const double dt = 0.01;
    const std::size_t n = gc.size(), draws = 100000;
    std::vector<double> acc(n * n, 0.0);
    RandomStream rng(2, 0, channel::test);
    Field inc(m.size()), w(n);
    for (std::size_t d = 0; d < draws; ++d) {
        sample_noise_increment(m, dt, rng, inc, w);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) acc[i * n + j] += w[i] * w[j];
    }
    const auto C = [&](std::size_t i, std::size_t j) {
        double c = 0.0;
        for (const auto& e : m) c += e.values[i] * e.values[j];
        return dt * c;
    };
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i)
        for (std::size_t j = 1; j + 1 < n; ++j) {
            const double se = std::sqrt((C(i, i) * C(j, j) + C(i, j) * C(i, j)) / draws);
            worst = std::max(worst, std::abs(acc[i * n + j] / draws - C(i, j)) / se);
        }
    return {div_err <= 1e-13 && worst <= 4.0, "divF2 identity err=" + num(div_err) + ", worst covariance z=" + num(worst)};
}

// ---- 3 ----
Verdict tail() {
    const double t1 = tail_sum(1, 2.0).value;
    std::vector<LogLogPoint> pts;
    for (long K : {4, 8, 16, 32, 64, 128, 256}) pts.push_back({double(K), tail_sum(K, 2.0).value, 0.0});
    const double slope = fit_loglog(pts).slope;
    return {std::abs(t1 - 1.0 / 6.0) <= 1e-9 && std::abs(slope + 1.0) <= 0.05,
            "T_2(1)-1/6=" + num(t1 - 1.0 / 6.0) + ", decay exponent=" + num(slope)};
}

// ---- 4 ----
Verdict constant_fixed_point() {
    double worst = 0.0;
    int cases = 0;
    for (double mm : {0.5, 1.0, 2.0, 3.0})
        for (SigmaKind sk : {SigmaKind::phi_sqrt, SigmaKind::smooth, SigmaKind::zero})
            for (double M : {0.5, 1.0, 2.0}) {
                const auto set = power_law_set(mm, sk);
                const Grid g = make_grid(16);
                const Field rho0(g.size(), M);
                const auto bd = BoundaryData::from_density(set, M);
                const double dt = 0.9 * deterministic_dt_bound(set, rho0, g.h, 0.0);
                const auto dev = [&](const Field& f) {
                    double e = 0.0;
                    for (double x : f) e = std::max(e, std::abs(x - M));
                    return e;
                };
                worst = std::max(worst, dev(solve_hydro(set, rho0, g, bd, 1.0, dt).final_frame()));
                worst = std::max(worst, dev(solve_skeleton(set, Control::zeros(4, 5, 1.0), rho0, g, bd, 1.0, dt).final_frame()));
                const MollifiedSigma sn(set, 100);
                const ModeSet modes = dirichlet_eigenpairs(g, 4);
                const NoiseSummaries sums = noise_summaries(modes);
                SPDEConfig cfg;
                cfg.eps = 0.0;
                cfg.K = 4;
                cfg.T = 1.0;
                cfg.dt = 0.9 * stochastic_dt_bound(set, rho0, g.h, 0.0, 0.0, sums, sn);
                worst = std::max(worst, dev(simulate(cfg, set, sn, modes, sums, g, rho0, bd, 1).trajectory.final_frame()));
                ++cases;
            }
    return {worst <= 1e-12, std::to_string(cases) + " (Phi, sigma, M) cases x 3 solvers, max deviation=" + num(worst)};
}

// ---- 5 ----
Verdict hand_step() {
    const auto set = power_law_set(2.0, SigmaKind::smooth, 0.3);
    const MollifiedSigma sn(set, 100);
    const Grid g = make_grid(3);
    const ModeSet modes = dirichlet_eigenpairs(g, 2);
    const NoiseSummaries sums = noise_summaries(modes);
    SPDEConfig cfg;
    cfg.eps = 0.04;
    cfg.K = 2;
    cfg.alpha = 0.2;
    cfg.dt = 1e-3;
    const Field rho{1.0, 1.2, 0.9, 1.1, 1.0};
    const Field w{0.0, 0.03, -0.02, 0.05, 0.0};
    const Field ctrl{0.5, -0.25, 1.0, 0.75, -0.5};
    const Field out = ito_step(rho, cfg, set, sn, sums, g, w, ctrl);
    const double h = 0.25, dt = cfg.dt, eps = cfg.eps, alpha = cfg.alpha;
    const auto sig = [](double x) { return x / std::sqrt(1 + x); };
    const auto dsig = [](double x) { return (1 + 0.5 * x) / std::pow(1 + x, 1.5); };
    const double offset = sig(0.01) - dsig(0.01) * 0.01;
    double F[4];
    for (int i = 0; i < 4; ++i) {
        const double r0 = rho[i], r1 = rho[i + 1], s0 = sig(r0) - offset, s1 = sig(r1) - offset, d0 = dsig(r0), d1 = dsig(r1);
        double f = -(r1 * r1 - r0 * r0) / h - alpha * (r1 - r0) / h + 0.5 * (0.3 * r0 + 0.3 * r1) +
                   0.5 * (s0 + s1) * 0.5 * (ctrl[i] + ctrl[i + 1]);
        f -= 0.5 * eps *
             (0.5 * (sums.F1[i] * d0 * d0 + sums.F1[i + 1] * d1 * d1) * (r1 - r0) / h +
              0.5 * (s0 * d0 * sums.F2[i] + s1 * d1 * sums.F2[i + 1]));
        F[i] = dt * f + std::sqrt(eps) * 0.5 * (s0 + s1) * 0.5 * (w[i] + w[i + 1]);
    }
    double err = std::abs(out[0] - 1.0) + std::abs(out[4] - 1.0);
    for (int i = 1; i <= 3; ++i) err = std::max(err, std::abs(out[i] - (rho[i] - (F[i] - F[i - 1]) / h)));
    return {err <= 1e-14, "max nodal difference=" + num(err)};
}

Verdict slope_check(const json& rep, double target, double tol) {
    if (rep["fit"].is_null()) return {false, "no fit"};
    const double s = rep["fit"]["slope"].get<double>();
    return {std::abs(s - target) <= tol, "slope=" + num(s) + " +- " + num(rep["fit"]["slope_stderr"].get<double>()) +
                                             " (target " + num(target) + " +- " + num(tol) + ")"};
}

// ---- 6, 7, 8 ----
Verdict lln_p2() { return slope_check(report_named(run_config("lln", 1), "lln_p2"), 1.0, 0.2); }
Verdict lln_p4() { return slope_check(report_named(run_config("lln", 1), "lln_p4"), 2.0, 0.3); }
Verdict linf() {
    const json r = report_named(run_config("linf", 1), "linf");
    if (r["fit"].is_null()) return {false, "no fit"};
    const double s = r["fit"]["slope"].get<double>(), se = r["fit"]["slope_stderr"].get<double>();
    const bool mono = r["summary"]["freq_below_half_nonincreasing"].get<double>() == 1.0;
    std::string freqs;
    for (const auto& p : r["points"]) freqs += num(p["freq_min_below_half_M"].get<double>()) + " ";
    return {s - 1.96 * se > 0.0 && mono, "gamma=" + num(s) + " CI [" + num(s - 1.96 * se) + ", " + num(s + 1.96 * se) +
                                             "], freq(min<M/2)= " + freqs + (mono ? "(nonincreasing)" : "(increases)")};
}

// ---- 9 ----
Verdict clt() {
    const json r = report_named(run_config("clt", 1), "clt");
    bool ratio_ok = true;
    std::string est;
    for (std::size_t i = 0; i < r["points"].size(); ++i) {
        const auto& p = r["points"][i];
        est += num(p["estimate"].get<double>()) + "+-" + num(p["stderr"].get<double>()) + " ";
        if (i > 0 && !(r["points"][i - 1]["budget"].get<double>() >= 4.0 * p["budget"].get<double>())) ratio_ok = false;
    }
    const bool dec = r["summary"]["strictly_decreasing"].get<double>() == 1.0;
    const bool exc = r["summary"]["exceedance_nonincreasing"].get<double>() == 1.0;
    return {r["admissible"].get<bool>() && ratio_ok && dec && exc && r["points"].size() == 3,
            "errors " + est + (dec ? "strictly decreasing" : "NOT decreasing") + (exc ? ", exceedance nonincreasing" : ", exceedance increases") +
                (ratio_ok ? ", budget ratio >= 4" : ", budget ratio < 4")};
}

// ---- 10 ----
struct LinearMC {
    Eigen::MatrixXd V;
    std::vector<std::vector<double>> finals;
};
LinearMC linear_mc(unsigned workers, std::size_t paths) {
    const LinearModel m = make_linear_model(1.0, 0.5, 1.0, 16, 32);
    LinearSolveOptions lo;
    lo.save_stride = 0;
    LinearMC r;
    r.finals.resize(paths);
    parallel_for(paths, workers, [&](std::size_t j) { r.finals[j] = solve_linear_fluctuation(m, 1.0, 2.5e-5, 101, j, {}, 0, lo).coefficients.back(); });
    r.V = Eigen::MatrixXd::Zero(16, 16);
    for (const auto& f : r.finals) {
        const Eigen::Map<const Eigen::VectorXd> v(f.data(), 16);
        r.V += v * v.transpose();
    }
    r.V /= static_cast<double>(paths);
    return r;
}
LinearMC g_linear;
Verdict linear_oracle() {
    const LinearModel m = make_linear_model(1.0, 0.5, 1.0, 16, 32);
    const Eigen::MatrixXd S = stationary_covariance_oracle(m);
    g_linear = linear_mc(1, 2000);
    double worst = 0.0;
    for (int j = 0; j < 16; ++j)
        for (int k = 0; k < 16; ++k) {
            const double se = std::sqrt((S(j, j) * S(k, k) + S(j, k) * S(j, k)) / 2000.0);
            worst = std::max(worst, std::abs(g_linear.V(j, k) - S(j, k)) / se);
        }
    return {worst <= 5.0, "K_lin=16, K_drive=32, b=0.5, dt=2.5e-5, 2000 paths: worst entry |z|=" + num(worst)};
}

// ---- 11 ----
Verdict zrp() {
    const json r = run_config("zrp_compare", 1).summary;
    return {r["cis_overlap"].get<bool>(),
            "Var<e1, m^N>=" + num(r["var_fluctuation_e1"].get<double>()) + "+-" + num(r["var_fluctuation_e1_stderr"].get<double>()) +
                ", Var<e1, v>=" + num(r["var_linear_e1"].get<double>()) + "+-" + num(r["var_linear_e1_stderr"].get<double>()) +
                " (exact " + num(r["var_linear_e1_exact"].get<double>()) + "); convention: " + r["time_convention"].get<std::string>()};
}

// ---- 12 ----
Verdict rate() {
    const json h = run_config("rate_hydro", 1).summary;
    const json rt = run_config("rate_roundtrip", 1).summary;
    const json gs = run_config("rate_gaussian", 1).summary;
    const double ih = h["result"]["I_upper"].get<double>();
    const double ir = rt["result"]["I_upper"].get<double>(), e0 = rt["g0_energy"].get<double>();
    bool dec = true;
    std::string gaps;
    for (std::size_t i = 0; i < gs["sweep"].size(); ++i) {
        const double gap = gs["sweep"][i]["rel_gap"].get<double>();
        gaps += num(gap) + " ";
        if (i > 0 && !(gap < gs["sweep"][i - 1]["rel_gap"].get<double>())) dec = false;
    }
    return {ih <= 1e-6 && ir <= 1.1 * e0 && dec, "I(hydro)=" + num(ih) + ", roundtrip I=" + num(ir) + " vs 1/2|g0|^2=" + num(e0) +
                                                     ", Gaussian gaps " + gaps + (dec ? "(decreasing)" : "(not decreasing)")};
}

// ---- 13 ----
std::string strip_wall_time(const std::string& s) {
    const auto p = s.find("\"wall_time_seconds\"");
    return p == std::string::npos ? s : s.substr(0, p);
}
Verdict reproducibility() {
    std::size_t files = 0;
    std::vector<std::string> diffs;
    for (const char* name : {"hydro", "simulate", "lln", "linf", "clt", "zrp_compare", "rate_hydro", "rate_roundtrip", "rate_gaussian"}) {
        const RunOutcome& a = run_config(name, 1);
        const RunOutcome& b = run_config(name, 4);
        const fs::path da = g_out / "w1" / name, db = g_out / "w4" / name;
        if (a.files != b.files) diffs.push_back(std::string(name) + ": file lists differ");
        for (const auto& f : a.files) {
            std::string x = read_text(da / f), y = read_text(db / f);
            if (f == "manifest.json") {
                x = strip_wall_time(x);
                y = strip_wall_time(y);
            }
            ++files;
            if (x != y) diffs.push_back(std::string(name) + "/" + f);
        }
        // a second run at the same worker count
        const json cfg = load_config(name);
        RunOptions ro;
        ro.out_dir = g_out / "rerun" / name;
        if (std::string(name) == "hydro" || std::string(name) == "simulate" || std::string(name).rfind("rate", 0) == 0) {
            fs::remove_all(ro.out_dir);
            run_experiment(cfg.at("kind").get<std::string>(), cfg, ro);
            for (const auto& f : a.files) {
                if (f == "manifest.json") continue;
                ++files;
                if (read_text(da / f) != read_text(ro.out_dir / f)) diffs.push_back(std::string(name) + "/" + f + " (rerun)");
            }
        }
    }
    // the linear oracle: per-path finals at 4 workers for a prefix of the paths
    const LinearMC l4 = linear_mc(4, 200);
    for (std::size_t j = 0; j < 200; ++j)
        if (l4.finals[j] != g_linear.finals[j]) {
            diffs.push_back("linear oracle path " + std::to_string(j));
            break;
        }
    std::string d = std::to_string(files) + " files compared across workers 1 and 4 and reruns";
    for (const auto& x : diffs) d += "; differs: " + x;
    return {diffs.empty(), d};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_out = argv[1];
    fs::create_directories(g_out);
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"eigenbasis exactness", eigenbasis},
        {"noise identities", noise},
        {"tail sum", tail},
        {"constant fixed point", constant_fixed_point},
        {"hand-oracle Ito step", hand_step},
        {"LLN rate p=2", lln_p2},
        {"LLN rate p=4", lln_p4},
        {"L^inf estimate", linf},
        {"CLT decay", clt},
        {"linear SPDE oracle", linear_oracle},
        {"ZRP cross-validation", zrp},
        {"rate function", rate},
        {"reproducibility", reproducibility},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %2zu %-22s %s  %s  [%.1f s]\n", i + 1, criteria[i].first.c_str(), v.pass ? "PASS" : "FAIL",
                    v.detail.c_str(), sec);
        std::fflush(stdout);
        failed += v.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
