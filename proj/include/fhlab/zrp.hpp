#pragma once

// Zero range process on {1..N} with reservoirs at both ends, exact
// continuous-time simulation. A site holding k particles fires at rate r(k)
// and moves one particle to a uniformly chosen neighbour; a jump off either
// end is absorbed. Reservoirs inject into sites 1 and N.
//
// Scaling convention: lattice spacing h = 1/(N+1), site x sits at x h, and a
// macroscopic time t corresponds to microscopic time t / h^2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fhlab/errors.hpp"
#include "fhlab/rng.hpp"

namespace fhlab {

enum class RateFamily { linear, constant, power };

inline RateFamily parse_rate_family(const std::string& s) {
    if (s == "linear") return RateFamily::linear;
    if (s == "constant") return RateFamily::constant;
    if (s == "power") return RateFamily::power;
    throw ConfigError("unknown jump-rate family '" + s + "' (expected linear, constant or power)");
}

inline std::string to_string(RateFamily f) {
    switch (f) {
        case RateFamily::linear: return "linear";
        case RateFamily::constant: return "constant";
        case RateFamily::power: return "power";
    }
    return "?";
}

// r(k) = k, r(k) = c 1{k>0}, r(k) = k^gamma.
struct JumpRate {
    RateFamily family = RateFamily::linear;
    double param = 1.0;

    double operator()(std::int64_t k) const {
        if (k <= 0) return 0.0;
        switch (family) {
            case RateFamily::linear: return static_cast<double>(k);
            case RateFamily::constant: return param;
            case RateFamily::power: return std::pow(static_cast<double>(k), param);
        }
        return 0.0;
    }
};

struct ZRPConfig {
    std::size_t n_sites = 64;
    JumpRate rate;
    double reservoir_left = 0.5;
    double reservoir_right = 0.5;
    double T_macro = 0.25;
    std::vector<std::int64_t> initial;  // empty: all zero
    bool periodic = false;
    std::size_t n_snapshots = 1;        // equally spaced in (0, T_macro], plus t = 0
    std::int64_t occupancy_cap = 1'000'000;

    double spacing() const { return 1.0 / static_cast<double>(n_sites + 1); }
    double micro_horizon() const {
        const double h = spacing();
        return T_macro / (h * h);
    }
    void validate() const {
        if (n_sites == 0) throw ConfigError("zrp needs at least one site");
        if (reservoir_left < 0.0 || reservoir_right < 0.0) throw ConfigError("reservoir rates must be nonnegative");
        if (!(T_macro > 0.0)) throw ConfigError("T_macro must be positive");
        if (!initial.empty() && initial.size() != n_sites) throw ConfigError("initial occupancies must have n_sites entries");
        for (auto k : initial)
            if (k < 0) throw ConfigError("initial occupancies must be nonnegative");
        if (!(rate.param > 0.0) && rate.family != RateFamily::linear) throw ConfigError("jump-rate parameter must be positive");
        if (rate(0) != 0.0) throw ConfigError("jump rate must vanish at k = 0");
        for (std::int64_t k = 1; k < 64; ++k)
            if (rate(k) < rate(k - 1)) throw ConfigError("jump rate must be nondecreasing");
        if (periodic && (reservoir_left > 0.0 || reservoir_right > 0.0))
            throw ConfigError("periodic lattice takes no reservoirs");
    }
};

struct ZRPTrajectory {
    std::vector<double> times;  // macroscopic
    std::vector<std::vector<std::int64_t>> snapshots;
    std::uint64_t bulk_jumps = 0;
    std::uint64_t absorptions_left = 0, absorptions_right = 0;
    std::uint64_t injections_left = 0, injections_right = 0;
    std::int64_t initial_count = 0, final_count = 0;
    std::uint64_t seed = 0, trajectory_index = 0;
    double spacing = 0.0;

    std::uint64_t absorptions() const { return absorptions_left + absorptions_right; }
    std::uint64_t injections() const { return injections_left + injections_right; }
};

namespace detail {

// Binary indexed tree of nonnegative rates with prefix search.
class RateTree {
public:
    explicit RateTree(std::size_t n) : n_(n), tree_(n + 1, 0.0), val_(n, 0.0) {
        top_ = 1;
        while (top_ * 2 <= n_) top_ *= 2;
    }
    void set(std::size_t i, double v) {
        const double d = v - val_[i];
        val_[i] = v;
        for (std::size_t j = i + 1; j <= n_; j += j & (~j + 1)) tree_[j] += d;
    }
    double value(std::size_t i) const { return val_[i]; }
    double total() const {
        double s = 0.0;
        for (std::size_t j = n_; j > 0; j -= j & (~j + 1)) s += tree_[j];
        return s;
    }
    // Smallest i with prefix sum over [0, i] > u.
    std::size_t find(double u) const {
        std::size_t pos = 0;
        for (std::size_t step = top_; step > 0; step >>= 1) {
            if (pos + step <= n_ && tree_[pos + step] <= u) {
                pos += step;
                u -= tree_[pos];
            }
        }
        return std::min(pos, n_ - 1);
    }
    // Drops accumulated rounding.
    void rebuild() {
        std::fill(tree_.begin(), tree_.end(), 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = i + 1; j <= n_; j += j & (~j + 1)) tree_[j] += val_[i];
        }
    }

private:
    std::size_t n_, top_;
    std::vector<double> tree_, val_;
};

}  // namespace detail

inline ZRPTrajectory zrp_simulate(const ZRPConfig& cfg, std::uint64_t seed, std::uint64_t trajectory_index = 0) {
    cfg.validate();
    const std::size_t N = cfg.n_sites;
    std::vector<std::int64_t> eta = cfg.initial.empty() ? std::vector<std::int64_t>(N, 0) : cfg.initial;

    // slots 0..N-1: sites, N: left reservoir, N+1: right reservoir
    detail::RateTree tree(N + 2);
    for (std::size_t x = 0; x < N; ++x) tree.set(x, cfg.rate(eta[x]));
    tree.set(N, cfg.reservoir_left);
    tree.set(N + 1, cfg.reservoir_right);

    ZRPTrajectory tr;
    tr.seed = seed;
    tr.trajectory_index = trajectory_index;
    tr.spacing = cfg.spacing();
    for (auto k : eta) tr.initial_count += k;

    const double h2 = tr.spacing * tr.spacing;
    const std::size_t n_snap = std::max<std::size_t>(cfg.n_snapshots, 1);
    std::vector<double> snap_micro(n_snap);
    for (std::size_t j = 0; j < n_snap; ++j)
        snap_micro[j] = cfg.T_macro * static_cast<double>(j + 1) / static_cast<double>(n_snap) / h2;
    tr.times.push_back(0.0);
    tr.snapshots.push_back(eta);

    RandomStream rng(seed, trajectory_index, channel::zrp);
    double t = 0.0;
    std::size_t next_snap = 0;
    std::uint64_t since_rebuild = 0;
    const auto update = [&](std::size_t x) {
        if (eta[x] > cfg.occupancy_cap)
            throw DivergenceError("zrp occupancy exceeded the cap at site " + std::to_string(x + 1), tr.bulk_jumps);
        tree.set(x, cfg.rate(eta[x]));
    };
    while (next_snap < n_snap) {
        const double R = tree.total();
        const double wait = R > 0.0 ? rng.exponential(R) : std::numeric_limits<double>::infinity();
        // record every snapshot time passed before the next event
        while (next_snap < n_snap && t + wait > snap_micro[next_snap]) {
            tr.times.push_back(cfg.T_macro * static_cast<double>(next_snap + 1) / static_cast<double>(n_snap));
            tr.snapshots.push_back(eta);
            ++next_snap;
        }
        if (next_snap >= n_snap) break;
        t += wait;
        std::size_t slot = tree.find(rng.uniform() * R);
        // rounding can land on an empty slot; step to a live one
        while (tree.value(slot) <= 0.0) slot = (slot + 1) % (N + 2);
        if (slot == N) {
            ++eta[0];
            ++tr.injections_left;
            update(0);
        } else if (slot == N + 1) {
            ++eta[N - 1];
            ++tr.injections_right;
            update(N - 1);
        } else {
            const bool right = rng.uniform() < 0.5;
            --eta[slot];
            update(slot);
            if (cfg.periodic) {
                const std::size_t to = right ? (slot + 1) % N : (slot + N - 1) % N;
                ++eta[to];
                update(to);
                ++tr.bulk_jumps;
            } else if (!right && slot == 0) {
                ++tr.absorptions_left;
            } else if (right && slot == N - 1) {
                ++tr.absorptions_right;
            } else {
                const std::size_t to = right ? slot + 1 : slot - 1;
                ++eta[to];
                update(to);
                ++tr.bulk_jumps;
            }
        }
        if (++since_rebuild == 4096) {
            tree.rebuild();
            since_rebuild = 0;
        }
    }
    for (auto k : eta) tr.final_count += k;
    return tr;
}

struct ZRPFields {
    double mass = 0.0;                  // h sum eta
    std::vector<double> empirical;      // <psi, mu^N> per snapshot
    std::vector<double> fluctuation;    // h^{-1/2} (<psi, mu^N> - int psi rho_bar)
};

inline ZRPFields zrp_fields(const ZRPTrajectory& tr, const std::function<double(double)>& psi, double rho_bar,
                            double length = 1.0) {
    ZRPFields out;
    const double h = tr.spacing;
    const double ipsi = rho_bar == 0.0 ? 0.0 : boost::math::quadrature::gauss_kronrod<double, 31>::integrate(psi, 0.0, length, 15, 1e-13);
    const std::size_t N = tr.snapshots.front().size();
    std::vector<double> w(N);
    for (std::size_t x = 0; x < N; ++x) w[x] = psi(static_cast<double>(x + 1) * h);
    for (const auto& snap : tr.snapshots) {
        double s = 0.0;
        for (std::size_t x = 0; x < N; ++x) s += w[x] * static_cast<double>(snap[x]);
        const double pair = h * s;
        out.empirical.push_back(pair);
        out.fluctuation.push_back((pair - ipsi * rho_bar) / std::sqrt(h));
    }
    double m = 0.0;
    for (auto k : tr.snapshots.back()) m += static_cast<double>(k);
    out.mass = h * m;
    return out;
}

// Mean jump rate under the product invariant measure with density rho:
// P(k) ∝ phi^k / (r(1)...r(k)), Phi(rho) = phi solving E[k] = rho.
inline double grand_canonical_phi(const JumpRate& r, double rho) {
    if (rho < 0.0) throw DomainError("density must be nonnegative");
    if (rho == 0.0) return 0.0;
    if (r.family == RateFamily::linear) return rho;
    if (r.family == RateFamily::constant) return r.param * rho / (1.0 + rho);
    const auto density = [&r](double phi) {
        // log weights for numerical safety
        double lw = 0.0, z = 1.0, m = 0.0;
        for (std::int64_t k = 1; k < 100000; ++k) {
            lw += std::log(phi) - std::log(r(k));
            const double w = std::exp(lw);
            z += w;
            m += static_cast<double>(k) * w;
            if (k > 10 && w < 1e-18 * z) break;
        }
        return m / z;
    };
    // radius of convergence is infinite for growing power rates
    double lo = 0.0, hi = std::max(1.0, rho);
    while (density(hi) < rho) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (density(mid) < rho ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace fhlab
