#pragma once

// Uniform 1D grid on [0, L], the Dirichlet Laplacian eigenbasis
// e_k(x) = sqrt(2/L) sin(k pi x / L), lambda_k = (k pi / L)^2, and the
// quadratic summaries of the truncated noise xi^K = sum_{k<=K} e_k B^k.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "fhlab/errors.hpp"
#include "fhlab/rng.hpp"

namespace fhlab {

using Field = std::vector<double>;

struct Grid {
    double length = 1.0;
    std::size_t n_interior = 0;
    double h = 0.0;
    std::vector<double> nodes;  // n_interior + 2 entries, boundary included

    std::size_t size() const { return nodes.size(); }
    bool same_as(const Grid& other) const { return n_interior == other.n_interior && length == other.length; }
};

inline Grid make_grid(std::size_t n_interior, double length = 1.0) {
    if (n_interior == 0) throw ConfigError("grid needs at least one interior node");
    if (!(length > 0.0)) throw ConfigError("grid length must be positive");
    Grid g;
    g.length = length;
    g.n_interior = n_interior;
    g.h = length / static_cast<double>(n_interior + 1);
    g.nodes.resize(n_interior + 2);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) g.nodes[i] = length * static_cast<double>(i) / static_cast<double>(n_interior + 1);
    g.nodes.back() = length;
    return g;
}

// Trapezoid rule over all grid nodes.
inline double trapezoid(std::span<const double> f, double h) {
    if (f.empty()) return 0.0;
    double s = 0.5 * (f.front() + f.back());
    for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
    return h * s;
}

inline double inner(const Grid& grid, std::span<const double> u, std::span<const double> v) {
    double s = 0.5 * (u.front() * v.front() + u.back() * v.back());
    for (std::size_t i = 1; i + 1 < u.size(); ++i) s += u[i] * v[i];
    return grid.h * s;
}

struct EigenMode {
    int index = 0;
    double eigenvalue = 0.0;
    Field values;             // e_k at every node, exactly zero at both ends
    Field derivative_values;  // e_k' at every node
    std::size_t grid_n_interior = 0;
    double grid_length = 0.0;
};

using ModeSet = std::vector<EigenMode>;

inline double dirichlet_eigenvalue(int k, double length = 1.0) {
    const double w = static_cast<double>(k) * std::numbers::pi / length;
    return w * w;
}

inline ModeSet dirichlet_eigenpairs(const Grid& grid, int K) {
    if (K < 1) throw DomainError("number of modes must be at least 1");
    if (static_cast<std::size_t>(K) > grid.n_interior)
        throw ResolutionError("requested " + std::to_string(K) + " modes but the grid Nyquist limit is n_interior = " +
                              std::to_string(grid.n_interior));
    const std::size_t n = grid.size();
    const long period = 2 * static_cast<long>(grid.n_interior + 1);
    const double amp = std::sqrt(2.0 / grid.length);
    ModeSet modes;
    modes.reserve(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k) {
        EigenMode m;
        m.index = k;
        m.eigenvalue = dirichlet_eigenvalue(k, grid.length);
        m.grid_n_interior = grid.n_interior;
        m.grid_length = grid.length;
        m.values.assign(n, 0.0);
        m.derivative_values.assign(n, 0.0);
        const double wave = static_cast<double>(k) * std::numbers::pi / grid.length;
        for (std::size_t i = 0; i < n; ++i) {
            // phase k*i/(n_interior+1) reduced mod 2 before multiplying by pi
            const long r = (static_cast<long>(k) * static_cast<long>(i)) % period;
            const double phase = std::numbers::pi * static_cast<double>(r) / static_cast<double>(grid.n_interior + 1);
            m.values[i] = amp * std::sin(phase);
            m.derivative_values[i] = amp * wave * std::cos(phase);
        }
        m.values.front() = 0.0;
        m.values.back() = 0.0;
        modes.push_back(std::move(m));
    }
    return modes;
}

struct NoiseSummaries {
    int K = 0;
    Field F1, F2, F3, divF2;
    Field lambda_e2;  // sum_k lambda_k e_k^2, kept for the divergence identity
    double sup_F1 = 0.0, sup_F2 = 0.0, sup_F3 = 0.0, sup_divF2 = 0.0;
};

inline double sup_abs(std::span<const double> f) {
    double m = 0.0;
    for (double v : f) m = std::max(m, std::abs(v));
    return m;
}

inline void check_same_grid(const ModeSet& modes) {
    if (modes.empty()) throw ConfigError("empty mode list");
    for (const auto& m : modes)
        if (m.grid_n_interior != modes.front().grid_n_interior || m.grid_length != modes.front().grid_length ||
            m.values.size() != modes.front().values.size())
            throw ConfigError("modes come from different grids");
}

inline NoiseSummaries noise_summaries(const ModeSet& modes) {
    check_same_grid(modes);
    const std::size_t n = modes.front().values.size();
    NoiseSummaries s;
    s.K = static_cast<int>(modes.size());
    s.F1.assign(n, 0.0);
    s.F2.assign(n, 0.0);
    s.F3.assign(n, 0.0);
    s.lambda_e2.assign(n, 0.0);
    for (const auto& m : modes) {
        for (std::size_t i = 0; i < n; ++i) {
            const double e = m.values[i];
            const double de = m.derivative_values[i];
            s.F1[i] += e * e;
            s.F2[i] += e * de;
            s.F3[i] += de * de;
            s.lambda_e2[i] += m.eigenvalue * e * e;
        }
    }
    s.divF2.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.divF2[i] = s.F3[i] - s.lambda_e2[i];
    s.sup_F1 = sup_abs(s.F1);
    s.sup_F2 = sup_abs(s.F2);
    s.sup_F3 = sup_abs(s.F3);
    s.sup_divF2 = sup_abs(s.divF2);
    return s;
}

struct TailSum {
    double value = 0.0;
    double upper_bound = 0.0;
};

// T_s(K) = sum_{k>=K} ||e_k||^2_{H^{-s+1}} = sum_{k>=K} lambda_k^{-(s-1)}.
// Direct summation up to a cutoff, then an Euler-Maclaurin remainder for the
// value and the integral bound  sum_{k>=M} k^-a <= M^-a + M^{1-a}/(a-1).
inline TailSum tail_sum(long K, double s, int d = 1, double length = 1.0) {
    if (d != 1) throw DomainError("tail_sum is implemented for d = 1 only");
    if (!(s > (d + 2) / 2.0)) throw DomainError("tail sum diverges unless s > (d+2)/2");
    if (K < 1) throw DomainError("tail sum needs K >= 1");
    const double a = 2.0 * (s - 1.0);
    const long cutoff = K < 1'000'000 ? K + 2000 : K;
    double partial = 0.0;
    for (long k = cutoff - 1; k >= K; --k) partial += std::pow(static_cast<double>(k), -a);
    const double M = static_cast<double>(cutoff);
    const double em = std::pow(M, 1.0 - a) / (a - 1.0) + 0.5 * std::pow(M, -a) + a / 12.0 * std::pow(M, -a - 1.0) -
                      a * (a + 1.0) * (a + 2.0) / 720.0 * std::pow(M, -a - 3.0);
    const double bound = std::pow(M, -a) + std::pow(M, 1.0 - a) / (a - 1.0);
    const double scale = std::pow(length / std::numbers::pi, a);
    return {scale * (partial + em), scale * (partial + bound)};
}

// S = eps (|F1|^2 + |F2|^2 + |F3|^2 + |div F2|^2), sup norms.
inline double scaling_budget(double eps, const NoiseSummaries& s) {
    return eps * (s.sup_F1 * s.sup_F1 + s.sup_F2 * s.sup_F2 + s.sup_F3 * s.sup_F3 + s.sup_divF2 * s.sup_divF2);
}

// Draws dB^k ~ N(0, dt) for k <= K into `increments` and writes
// sum_k e_k(x_i) dB^k into `out`.
inline void sample_noise_increment(const ModeSet& modes, double dt, RandomStream& rng, std::span<double> increments,
                                   std::span<double> out) {
    const double sd = std::sqrt(dt);
    for (std::size_t k = 0; k < modes.size(); ++k) increments[k] = sd * rng.normal();
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < modes.size(); ++k) {
        const double b = increments[k];
        const auto& e = modes[k].values;
        for (std::size_t i = 1; i + 1 < out.size(); ++i) out[i] += e[i] * b;
    }
}

inline Field sample_noise_increment(const ModeSet& modes, double dt, RandomStream& rng) {
    Field inc(modes.size());
    Field out(modes.front().values.size());
    sample_noise_increment(modes, dt, rng, inc, out);
    return out;
}

// Nodal field from given Brownian increments.
inline void noise_from_increments(const ModeSet& modes, std::span<const double> increments, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < modes.size(); ++k) {
        const auto& e = modes[k].values;
        for (std::size_t i = 1; i + 1 < out.size(); ++i) out[i] += e[i] * increments[k];
    }
}

struct SpectralVector {
    std::vector<double> coefficients;  // c_k = <u, e_k>, k = 1..K_spec
    std::size_t k_spec() const { return coefficients.size(); }
};

inline SpectralVector project(const Grid& grid, std::span<const double> u, const ModeSet& modes) {
    SpectralVector v;
    v.coefficients.reserve(modes.size());
    for (const auto& m : modes) v.coefficients.push_back(inner(grid, u, m.values));
    return v;
}

inline Field reconstruct(const SpectralVector& v, const ModeSet& modes) {
    Field out(modes.front().values.size(), 0.0);
    for (std::size_t k = 0; k < v.coefficients.size(); ++k)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += v.coefficients[k] * modes[k].values[i];
    return out;
}

struct HsNorm {
    double value = 0.0;
    std::size_t k_spec = 0;
};

// (sum_k lambda_k^{-s} <u, e_k>^2)^{1/2}, truncated at the supplied modes.
inline HsNorm hs_dual_norm(const Grid& grid, std::span<const double> u, double s, const ModeSet& modes) {
    if (s < 0.0) throw DomainError("hs_dual_norm needs s >= 0");
    double acc = 0.0;
    for (const auto& m : modes) {
        const double c = inner(grid, u, m.values);
        acc += std::pow(m.eigenvalue, -s) * c * c;
    }
    return {std::sqrt(acc), modes.size()};
}

inline double hs_norm_from_coefficients(std::span<const double> coeffs, double s, double length = 1.0) {
    double acc = 0.0;
    for (std::size_t k = 0; k < coeffs.size(); ++k)
        acc += std::pow(dirichlet_eigenvalue(static_cast<int>(k + 1), length), -s) * coeffs[k] * coeffs[k];
    return std::sqrt(acc);
}

}  // namespace fhlab
