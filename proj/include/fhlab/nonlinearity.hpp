#pragma once

// Nonlinearities Phi, sigma, nu of the conservative SPDE, the smoothed
// diffusion coefficient sigma_n, and the antiderivative tables used by the
// energy estimates.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "fhlab/errors.hpp"

namespace fhlab {

enum class SigmaKind { phi_sqrt, smooth, zero, custom };

inline SigmaKind parse_sigma_kind(const std::string& s) {
    if (s == "phi_sqrt") return SigmaKind::phi_sqrt;
    if (s == "smooth") return SigmaKind::smooth;
    if (s == "zero") return SigmaKind::zero;
    throw ConfigError("unknown sigma kind '" + s + "' (expected phi_sqrt, smooth or zero)");
}

inline std::string to_string(SigmaKind k) {
    switch (k) {
        case SigmaKind::phi_sqrt: return "phi_sqrt";
        case SigmaKind::smooth: return "smooth";
        case SigmaKind::zero: return "zero";
        case SigmaKind::custom: return "custom";
    }
    return "custom";
}

// nu(xi) = nu_slope * xi for the shipped families (d = 1, scalar flux).
struct NonlinearitySet {
    double m = 1.0;
    SigmaKind sigma_kind = SigmaKind::phi_sqrt;
    double nu_slope = 0.0;
    std::string label;

    // Escape hatch for user-supplied Phi/sigma; used when set.
    struct Custom {
        std::function<double(double)> phi, dphi, d2phi, sigma, dsigma;
    };
    std::optional<Custom> custom;

    // --- on [0, inf) ---
    double phi(double x) const {
        if (custom) return custom->phi(x);
        if (m == 1.0) return x;
        if (m == 2.0) return x * x;
        return std::pow(x, m);
    }
    double dphi(double x) const {
        if (custom) return custom->dphi(x);
        if (m == 1.0) return 1.0;
        if (m == 2.0) return 2.0 * x;
        return m * std::pow(x, m - 1.0);
    }
    double d2phi(double x) const {
        if (custom) return custom->d2phi(x);
        if (m == 1.0) return 0.0;
        if (m == 2.0) return 2.0;
        return m * (m - 1.0) * std::pow(x, m - 2.0);
    }
    double sigma(double x) const {
        switch (sigma_kind) {
            case SigmaKind::phi_sqrt: return m == 1.0 ? std::sqrt(x) : std::pow(x, 0.5 * m);
            case SigmaKind::smooth: return x / std::sqrt(1.0 + x);
            case SigmaKind::zero: return 0.0;
            case SigmaKind::custom: return custom->sigma(x);
        }
        return 0.0;
    }
    double dsigma(double x) const {
        switch (sigma_kind) {
            case SigmaKind::phi_sqrt: return 0.5 * m * std::pow(x, 0.5 * m - 1.0);
            case SigmaKind::smooth: return (1.0 + 0.5 * x) / std::pow(1.0 + x, 1.5);
            case SigmaKind::zero: return 0.0;
            case SigmaKind::custom: return custom->dsigma(x);
        }
        return 0.0;
    }
    double nu(double x) const { return nu_slope * x; }
    double dnu(double) const { return nu_slope; }
    double d2nu(double) const { return 0.0; }

    // --- extension to the whole line used by the steppers ---
    // Phi odd, sigma zero on the negative half line.
    double phi_ext(double x) const { return x >= 0.0 ? phi(x) : -phi(-x); }
    double dphi_ext(double x) const { return dphi(std::abs(x)); }

    double phi_inverse(double f) const {
        if (!custom) return f >= 0.0 ? std::pow(f, 1.0 / m) : -std::pow(-f, 1.0 / m);
        // bisection on a monotone Phi
        double lo = 0.0, hi = 1.0;
        const double target = std::abs(f);
        while (phi(hi) < target) hi *= 2.0;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            (phi(mid) < target ? lo : hi) = mid;
        }
        const double r = 0.5 * (lo + hi);
        return f >= 0.0 ? r : -r;
    }
};

inline NonlinearitySet power_law_set(double m, SigmaKind sigma_kind, double nu_slope = 0.0) {
    if (!(m > 0.0)) throw DomainError("power law exponent m must be positive");
    if (sigma_kind == SigmaKind::custom) throw ConfigError("use a custom set for user-supplied sigma");
    NonlinearitySet s;
    s.m = m;
    s.sigma_kind = sigma_kind;
    s.nu_slope = nu_slope;
    s.label = "Phi=xi^" + std::to_string(m) + ", sigma=" + to_string(sigma_kind) +
              (nu_slope != 0.0 ? ", nu=" + std::to_string(nu_slope) + "*xi" : ", nu=0");
    return s;
}

namespace detail {

// C^infinity step: 1 on (-inf, 0], 0 on [1, inf).
inline double smooth_step_down(double t) {
    if (t <= 0.0) return 1.0;
    if (t >= 1.0) return 0.0;
    const double a = std::exp(-1.0 / (1.0 - t));
    const double b = std::exp(-1.0 / t);
    return a / (a + b);
}

template <class F>
double integrate(F f, double a, double b) {
    if (a == b) return 0.0;
    if (a > b) return -integrate(f, b, a);
    if (a == 0.0) {
        thread_local boost::math::quadrature::tanh_sinh<double> ts;
        return ts.integrate(f, a, b, 1e-10);
    }
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 8, 1e-12);
}

}  // namespace detail

// sigma_n(xi) = int_0^xi sigma'(clamp(u, 1/n, n)) chi_n(u) du, with chi_n a
// smooth cutoff equal to 1 on [0, n] and 0 on [2n, inf).
class MollifiedSigma {
public:
    MollifiedSigma() = default;

    MollifiedSigma(const NonlinearitySet& set, int n) : set_(set), n_(n) {
        if (n < 1) throw DomainError("mollification level n must be >= 1");
        lo_ = 1.0 / n;
        hi_ = static_cast<double>(n);
        if (set.sigma_kind == SigmaKind::zero) {
            zero_ = true;
            return;
        }
        slope_lo_ = set.dsigma(lo_);
        slope_hi_ = set.dsigma(hi_);
        offset_ = set.sigma(lo_) - slope_lo_ * lo_;
        value_at_hi_ = set.sigma(hi_) - offset_;
        cap_integral_ = cutoff_integral(2.0 * hi_);
        // sup |sigma_n'|: dense log-spaced scan plus the kinks
        double sup = std::max(std::abs(slope_lo_), std::abs(slope_hi_));
        for (int i = 0; i <= 2000; ++i) {
            const double x = lo_ * std::pow(2.0 * hi_ / lo_, i / 2000.0);
            sup = std::max(sup, std::abs(derivative(x)));
        }
        sup_derivative_ = sup;
    }

    int n() const { return n_; }
    double support_cap() const { return 2.0 * hi_; }
    double sup_derivative() const { return sup_derivative_; }

    double operator()(double x) const {
        if (zero_ || x <= 0.0) return 0.0;
        if (x <= lo_) return slope_lo_ * x;
        if (x <= hi_) return set_.sigma(x) - offset_;
        if (x >= 2.0 * hi_) return value_at_hi_ + slope_hi_ * cap_integral_;
        return value_at_hi_ + slope_hi_ * cutoff_integral(x);
    }

    double derivative(double x) const {
        if (zero_ || x < 0.0) return 0.0;
        if (x <= lo_) return slope_lo_;
        if (x <= hi_) return set_.dsigma(x);
        return slope_hi_ * detail::smooth_step_down((x - hi_) / hi_);
    }

private:
    double cutoff_integral(double x) const {
        const double h = hi_;
        return boost::math::quadrature::gauss<double, 30>::integrate(
            [h](double u) { return detail::smooth_step_down((u - h) / h); }, h, x);
    }

    NonlinearitySet set_;
    int n_ = 0;
    bool zero_ = false;
    double lo_ = 0, hi_ = 0, slope_lo_ = 0, slope_hi_ = 0, offset_ = 0, value_at_hi_ = 0, cap_integral_ = 0;
    double sup_derivative_ = 0;
};

inline MollifiedSigma mollified_sigma(const NonlinearitySet& set, int n) { return MollifiedSigma(set, n); }

// Theta_{Phi,p}, Theta_{sigma,p} and the entropy Psi_Phi(xi) = int_0^xi log Phi,
// tabulated by cumulative quadrature on [0, xi_max].
// Theta'_{Phi,p} = (xi - a)^{(p-2)/2} Phi'(xi)^{1/2},
// Theta'_{sigma,p} = (xi - a)^{p-2} sigma sigma', with a = 0 and Theta(0) = 0
// for p = 2, a = rho_bar and Theta(rho_bar) = 0 for p > 2. Powers of negative
// bases are taken sign-preserving.
class AuxEvaluator {
public:
    AuxEvaluator(const NonlinearitySet& set, double p, double anchor, double xi_max = 1e4, int n_table = 400)
        : set_(set), p_(p) {
        if (!(p >= 2.0)) throw DomainError("auxiliary functions need p >= 2");
        if (p > 2.0 && !(anchor > 0.0)) throw DomainError("anchor rho_bar must be positive for p > 2");
        if (!(xi_max > 0.0)) throw DomainError("tabulation range must be positive");
        anchor_ = p == 2.0 ? 0.0 : anchor;
        table_.push_back(0.0);
        for (int i = 0; i <= n_table; ++i) table_.push_back(1e-6 * std::pow(xi_max / 1e-6, double(i) / n_table));
        if (anchor_ > 0.0) table_.push_back(anchor_);
        std::sort(table_.begin(), table_.end());
        table_.erase(std::unique(table_.begin(), table_.end()), table_.end());
        xi_max_ = table_.back();

        const auto build = [&](auto integrand, std::vector<double>& out, double zero_at) {
            out.assign(table_.size(), 0.0);
            std::vector<double> cumulative(table_.size(), 0.0);
            for (std::size_t i = 1; i < table_.size(); ++i)
                cumulative[i] = cumulative[i - 1] + detail::integrate(integrand, table_[i - 1], table_[i]);
            const double shift = interpolate_cumulative(cumulative, zero_at, integrand);
            for (std::size_t i = 0; i < table_.size(); ++i) out[i] = cumulative[i] - shift;
        };
        build([this](double u) { return theta_phi_integrand(u); }, theta_phi_, anchor_);
        build([this](double u) { return theta_sigma_integrand(u); }, theta_sigma_, anchor_);
        build([this](double u) { return log_phi(u); }, entropy_, 0.0);
    }

    double p() const { return p_; }
    double anchor() const { return anchor_; }
    const std::vector<double>& table() const { return table_; }

    double theta_phi_integrand(double u) const { return signed_pow(u - anchor_, 0.5 * (p_ - 2.0)) * std::sqrt(set_.dphi(u)); }
    double theta_sigma_integrand(double u) const {
        return signed_pow(u - anchor_, p_ - 2.0) * set_.sigma(u) * set_.dsigma(u);
    }

    double theta_phi(double x) const { return eval(theta_phi_, x, [this](double u) { return theta_phi_integrand(u); }); }
    double theta_sigma(double x) const {
        return eval(theta_sigma_, x, [this](double u) { return theta_sigma_integrand(u); });
    }
    double entropy(double x) const { return eval(entropy_, x, [this](double u) { return log_phi(u); }); }

    // clamped so quadrature nodes that underflow Phi stay finite
    double log_phi(double u) const { return std::log(std::max(set_.phi(u), std::numeric_limits<double>::min())); }

private:
    static double signed_pow(double b, double e) {
        if (e == 0.0) return 1.0;
        return b >= 0.0 ? std::pow(b, e) : -std::pow(-b, e);
    }

    template <class F>
    double interpolate_cumulative(const std::vector<double>& cum, double x, F f) const {
        auto it = std::upper_bound(table_.begin(), table_.end(), x);
        const std::size_t j = static_cast<std::size_t>(std::distance(table_.begin(), it)) - 1;
        return cum[j] + detail::integrate(f, table_[j], x);
    }

    template <class F>
    double eval(const std::vector<double>& tab, double x, F f) const {
        if (x < 0.0) throw DomainError("auxiliary functions are defined on [0, inf) only");
        if (x > xi_max_) throw DomainError("argument beyond the tabulated range");
        auto it = std::upper_bound(table_.begin(), table_.end(), x);
        const std::size_t j = static_cast<std::size_t>(std::distance(table_.begin(), it)) - 1;
        if (table_[j] == x) return tab[j];
        return tab[j] + detail::integrate(f, table_[j], x);
    }

    NonlinearitySet set_;
    double p_;
    double anchor_ = 0.0;
    double xi_max_ = 0.0;
    std::vector<double> table_;
    std::vector<double> theta_phi_, theta_sigma_, entropy_;
};

inline AuxEvaluator aux_theta(const NonlinearitySet& set, double p, double anchor, double xi_max = 1e4) {
    return AuxEvaluator(set, p, anchor, xi_max);
}

}  // namespace fhlab
