#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "fhlab/errors.hpp"

namespace fhlab {

// Welford accumulator with Chan's merge rule.
class RunningStats {
public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }

    void merge(const RunningStats& o) {
        if (o.n_ == 0) return;
        if (n_ == 0) {
            *this = o;
            return;
        }
        const double n = static_cast<double>(n_ + o.n_);
        const double d = o.mean_ - mean_;
        mean_ += d * static_cast<double>(o.n_) / n;
        m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
        n_ += o.n_;
    }

    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double stderr_mean() const { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

// Reduces values in index order, so the result never depends on which worker
// produced which sample.
inline RunningStats summarize(std::span<const double> xs) {
    RunningStats s;
    for (double x : xs) s.add(x);
    return s;
}

// Unbiased sample covariance of two equally long series.
inline double sample_covariance(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += (a[i] - ma) * (b[i] - mb);
    return s / static_cast<double>(n - 1);
}

struct LogLogPoint {
    double x = 0.0;
    double y = 0.0;
    double y_stderr = 0.0;
};

struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_stderr = 0.0;
};

// Weighted least squares on (log x, log y). The weight of a point is the
// inverse squared relative standard error (the delta-method variance of
// log y); if any point carries no error estimate all weights are equal and
// the slope error comes from the residuals.
inline LogLogFit fit_loglog(std::span<const LogLogPoint> pts) {
    if (pts.size() < 3) throw ArityError("log-log fit needs at least 3 points");
    bool weighted = true;
    for (const auto& p : pts) {
        if (!(p.x > 0.0) || !(p.y > 0.0)) throw DomainError("log-log fit needs positive x and y");
        if (!(p.y_stderr > 0.0)) weighted = false;
    }
    const std::size_t n = pts.size();
    std::vector<double> lx(n), ly(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
        lx[i] = std::log(pts[i].x);
        ly[i] = std::log(pts[i].y);
        const double rel = pts[i].y_stderr / pts[i].y;
        w[i] = weighted ? 1.0 / (rel * rel) : 1.0;
    }
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += w[i];
        sx += w[i] * lx[i];
        sy += w[i] * ly[i];
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += w[i] * (lx[i] - mx) * (lx[i] - mx);
        sxy += w[i] * (lx[i] - mx) * (ly[i] - my);
        syy += w[i] * (ly[i] - my) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) throw DomainError("log-log fit needs at least two distinct x values");
    LogLogFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss_res = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ly[i] - (f.intercept + f.slope * lx[i]);
        ss_res += w[i] * r * r;
    }
    f.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    if (weighted)
        f.slope_stderr = std::sqrt(1.0 / sxx);
    else
        f.slope_stderr = n > 2 ? std::sqrt(ss_res / static_cast<double>(n - 2) / sxx) : 0.0;
    return f;
}

// Ordinary least squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace fhlab
