#pragma once

// Numerical audit of the structural assumptions on Phi, sigma, nu.
// Each clause is an inequality f(xi) <= c g(xi) checked on a log-spaced
// sample of (0, inf). The fitted constant is max f/g; the clause passes when
// log(f/g) has nonpositive slope in log xi at both ends of the sample (the
// ratio does not grow toward 0 or toward infinity). Advisory only.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fhlab/basis.hpp"
#include "fhlab/nonlinearity.hpp"
#include "fhlab/stats.hpp"

namespace fhlab {

struct AuditClause {
    std::string name;
    std::string statement;
    bool passed = false;
    double constant = 0.0;
    std::optional<double> exponent;  // fitted beta, q or gamma where the clause has one
    std::string note;
};

struct AuditReport {
    std::string label;
    std::vector<AuditClause> clauses;

    bool all_passed() const {
        return std::all_of(clauses.begin(), clauses.end(), [](const AuditClause& c) { return c.passed; });
    }
    const AuditClause* find(const std::string& name) const {
        for (const auto& c : clauses)
            if (c.name == name) return &c;
        return nullptr;
    }
};

struct AuditOptions {
    double rho_bar = 1.0;
    double p = 4.0;
    double xi_min = 1e-6;
    double xi_max = 1e4;
    int samples = 121;
    double slope_tolerance = 0.02;
};

namespace detail {

struct RatioFit {
    double constant = 0.0;
    double lower_slope = 0.0;  // d log(f/g) / d log xi on the small-xi end
    double upper_slope = 0.0;  // same on the large-xi end
    bool finite = true;
};

inline RatioFit fit_ratio(const std::vector<double>& xs, const std::vector<double>& f, const std::vector<double>& g) {
    RatioFit r;
    std::vector<double> lo_x, lo_y, hi_x, hi_y;
    const std::size_t n = xs.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(f[i]) || !std::isfinite(g[i])) {
            r.finite = false;
            continue;
        }
        if (f[i] == 0.0) continue;
        if (g[i] <= 0.0) {
            r.finite = false;
            continue;
        }
        const double ratio = f[i] / g[i];
        r.constant = std::max(r.constant, ratio);
        const double lx = std::log(xs[i]), ly = std::log(ratio);
        if (i < n / 4) {
            lo_x.push_back(lx);
            lo_y.push_back(ly);
        }
        if (i >= n - n / 4) {
            hi_x.push_back(lx);
            hi_y.push_back(ly);
        }
    }
    r.lower_slope = lo_x.size() >= 2 ? ols_slope(lo_x, lo_y) : 0.0;
    r.upper_slope = hi_x.size() >= 2 ? ols_slope(hi_x, hi_y) : 0.0;
    return r;
}

inline AuditClause ratio_clause(std::string name, std::string statement, const std::vector<double>& xs,
                                const std::vector<double>& f, const std::vector<double>& g, double tol) {
    const RatioFit fit = fit_ratio(xs, f, g);
    AuditClause c;
    c.name = std::move(name);
    c.statement = std::move(statement);
    c.constant = fit.constant;
    c.passed = fit.finite && fit.upper_slope <= tol && fit.lower_slope >= -tol;
    c.note = "ratio slopes: small-xi " + std::to_string(fit.lower_slope) + ", large-xi " + std::to_string(fit.upper_slope);
    return c;
}

// Slope of log f against log x over the upper quarter of the sample.
inline double tail_exponent(const std::vector<double>& x, const std::vector<double>& f) {
    std::vector<double> lx, ly;
    for (std::size_t i = x.size() - x.size() / 4; i < x.size(); ++i)
        if (f[i] > 0.0 && x[i] > 0.0 && std::isfinite(f[i])) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(f[i]));
        }
    return lx.size() >= 2 ? ols_slope(lx, ly) : 0.0;
}

}  // namespace detail

inline AuditReport assumption_audit(const NonlinearitySet& set, const MollifiedSigma* mollified = nullptr,
                                    const NoiseSummaries* noise = nullptr, const AuditOptions& opt = {}) {
    AuditReport rep;
    rep.label = set.label;
    const int n = opt.samples;
    std::vector<double> xs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = opt.xi_min * std::pow(opt.xi_max / opt.xi_min, double(i) / (n - 1));
    const auto map = [&](auto fn) {
        std::vector<double> out(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) out[i] = fn(xs[i]);
        return out;
    };
    const double tol = opt.slope_tolerance;

    {
        AuditClause c;
        c.name = "phi_strictly_increasing";
        c.statement = "Phi(0) = 0 and Phi' > 0 on (0, inf)";
        bool ok = set.phi(0.0) == 0.0;
        double prev = set.phi(0.0);
        for (double x : xs) {
            ok = ok && set.dphi(x) > 0.0 && set.phi(x) > prev;
            prev = set.phi(x);
        }
        c.passed = ok;
        c.constant = 0.0;
        rep.clauses.push_back(c);
    }
    rep.clauses.push_back(detail::ratio_clause("phi_growth", "Phi(xi) <= c (1 + xi^m)", xs, map([&](double x) { return set.phi(x); }),
                                               map([&](double x) { return 1.0 + std::pow(x, set.m); }), tol));
    rep.clauses.push_back(detail::ratio_clause("dphi_growth", "Phi'(xi) <= c (1 + xi + Phi(xi))", xs,
                                               map([&](double x) { return set.dphi(x); }),
                                               map([&](double x) { return 1.0 + x + set.phi(x); }), tol));
    rep.clauses.push_back(detail::ratio_clause("sigma_below_phi_sqrt", "|sigma(xi)| <= c Phi(xi)^{1/2}", xs,
                                               map([&](double x) { return std::abs(set.sigma(x)); }),
                                               map([&](double x) { return std::sqrt(set.phi(x)); }), tol));
    rep.clauses.push_back(detail::ratio_clause(
        "nu_sigma_growth", "nu^2 + (sigma sigma')^2 <= c (1 + xi + Phi)", xs, map([&](double x) {
            const double ss = set.sigma(x) * set.dsigma(x);
            return set.nu(x) * set.nu(x) + ss * ss;
        }),
        map([&](double x) { return 1.0 + x + set.phi(x); }), tol));
    {
        // limsup sigma^2 / xi as xi -> 0+
        AuditClause c;
        c.name = "sigma_sq_linear_at_zero";
        c.statement = "limsup_{xi->0+} sigma^2(xi)/xi <= c";
        std::vector<double> lx, ly;
        double last = 0.0;
        bool finite = true;
        for (int i = 0; i <= 20; ++i) {
            const double x = 1e-4 * std::pow(1e-6, i / 20.0);  // 1e-4 down to 1e-10
            const double r = set.sigma(x) * set.sigma(x) / x;
            finite = finite && std::isfinite(r);
            last = r;
            if (r > 0.0) {
                lx.push_back(std::log(x));
                ly.push_back(std::log(r));
            }
        }
        const double slope = lx.size() >= 2 ? ols_slope(lx, ly) : 0.0;
        c.constant = last;
        c.passed = finite && slope >= -tol;
        c.note = "sigma^2/xi at xi=1e-10: " + std::to_string(last);
        rep.clauses.push_back(c);
    }
    {
        std::vector<double> running(xs.size());
        double mx = set.sigma(0.0) * set.sigma(0.0);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            mx = std::max(mx, set.sigma(xs[i]) * set.sigma(xs[i]));
            running[i] = mx;
        }
        rep.clauses.push_back(detail::ratio_clause("sigma_sq_oscillation", "sup_{[0,xi]} sigma^2 <= c (1 + xi + sigma^2(xi))",
                                                   xs, running, map([&](double x) { return 1.0 + x + set.sigma(x) * set.sigma(x); }),
                                                   tol));
    }
    {
        const auto lhs = map([&](double x) { return std::abs(set.d2phi(x)) + std::abs(set.d2nu(x)); });
        const double beta = std::max(0.0, detail::tail_exponent(xs, lhs));
        auto c = detail::ratio_clause("second_derivative_growth", "|Phi''| + |nu''| <= c (1 + xi^beta)", xs, lhs,
                                      map([&](double x) { return 1.0 + std::pow(x, beta); }), tol);
        c.exponent = beta;
        rep.clauses.push_back(c);
    }
    {
        // (xi - rho)^{p-2} sigma^2 + Theta_{sigma,p} <= c (1 + Theta_{Phi,p}^q), q in (0, 2)
        const AuxEvaluator aux(set, opt.p, opt.rho_bar, opt.xi_max * 1.01);
        std::vector<double> tx, lhs, rhs_base;
        for (double x : xs) {
            if (x <= 2.0 * opt.rho_bar) continue;
            tx.push_back(x);
            lhs.push_back(std::pow(x - opt.rho_bar, opt.p - 2.0) * set.sigma(x) * set.sigma(x) + aux.theta_sigma(x));
            rhs_base.push_back(std::abs(aux.theta_phi(x)));
        }
        AuditClause c;
        c.name = "theta_sigma_below_theta_phi";
        c.statement = "(xi-rho)^{p-2} sigma^2 + Theta_{sigma,p} <= c (1 + Theta_{Phi,p}^q), q < 2";
        std::vector<double> l1, l2;
        for (std::size_t i = tx.size() - tx.size() / 3; i < tx.size(); ++i)
            if (lhs[i] > 0.0 && rhs_base[i] > 0.0) {
                l1.push_back(std::log(rhs_base[i]));
                l2.push_back(std::log(lhs[i]));
            }
        const double q = l1.size() >= 2 ? std::max(0.0, ols_slope(l1, l2)) : 0.0;
        double cmax = 0.0;
        for (std::size_t i = 0; i < tx.size(); ++i) cmax = std::max(cmax, lhs[i] / (1.0 + std::pow(rhs_base[i], q)));
        c.exponent = q;
        c.constant = cmax;
        c.passed = q < 2.0;
        c.note = "p = " + std::to_string(opt.p) + ", rho_bar = " + std::to_string(opt.rho_bar);
        rep.clauses.push_back(c);

        std::vector<double> lhs3;
        for (double x : tx) {
            const double quot = aux.theta_sigma(x) / std::pow(x - opt.rho_bar, opt.p - 2.0);
            lhs3.push_back(std::pow(std::abs(set.sigma(x)), opt.p) + std::pow(std::max(quot, 0.0), opt.p / 2.0));
        }
        const double gamma = std::max(0.0, detail::tail_exponent(tx, lhs3));
        std::vector<double> rhs3;
        for (double x : tx) rhs3.push_back(1.0 + std::pow(x, gamma));
        auto c3 = detail::ratio_clause("sigma_p_growth", "sigma^p + (Theta_{sigma,p}/(xi-rho)^{p-2})^{p/2} <= c (1 + xi^gamma)",
                                       tx, lhs3, rhs3, tol);
        c3.exponent = gamma;
        rep.clauses.push_back(c3);
    }
    if (set.nu_slope == 0.0) {
        AuditClause c;
        c.name = "nu_conditions";
        c.statement = "nu-dependent conditions";
        c.passed = true;
        c.note = "nu = 0: satisfied vacuously";
        rep.clauses.push_back(c);
    }
    if (mollified) {
        AuditClause c;
        c.name = "mollified_sigma";
        c.statement = "sigma_n(0) = 0, sigma_n' continuous with support in [0, 2n]";
        const double cap = mollified->support_cap();
        bool ok = (*mollified)(0.0) == 0.0;
        for (double x : {cap * 1.0000001, cap * 1.5, cap * 10.0}) ok = ok && mollified->derivative(x) == 0.0;
        c.passed = ok;
        c.constant = mollified->sup_derivative();
        c.note = "n = " + std::to_string(mollified->n()) + ", sup |sigma_n'| = " + std::to_string(mollified->sup_derivative());
        rep.clauses.push_back(c);
    }
    if (noise) {
        AuditClause c;
        c.name = "noise_stationarity";
        c.statement = "F1 constant on U (stationary noise in the square-root case)";
        double lo = 1e300, hi = -1e300;
        for (std::size_t i = 1; i + 1 < noise->F1.size(); ++i) {
            lo = std::min(lo, noise->F1[i]);
            hi = std::max(hi, noise->F1[i]);
        }
        c.constant = hi - lo;
        c.passed = hi - lo <= 1e-12 * std::max(1.0, hi);
        c.note = "plain sine basis without stationary mollification; interior F1 range [" + std::to_string(lo) + ", " +
                 std::to_string(hi) + "]";
        rep.clauses.push_back(c);
    }
    return rep;
}

}  // namespace fhlab
