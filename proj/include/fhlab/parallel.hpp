#pragma once

// Index-parallel loop. Tasks write into slots owned by their index, so the
// caller's reduction order (and therefore every result bit) does not depend
// on the worker count.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fhlab/errors.hpp"

namespace fhlab {

// --workers wins, then FHLAB_WORKERS, then 1.
inline unsigned resolve_workers(std::optional<unsigned> requested) {
    if (requested) return std::max(1u, *requested);
    if (const char* env = std::getenv("FHLAB_WORKERS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        throw ConfigError(std::string("FHLAB_WORKERS must be a positive integer, got '") + env + "'");
    }
    return 1;
}

template <class F>
void parallel_for(std::size_t n, unsigned workers, F&& body) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t failed_at = n;
    std::exception_ptr err;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                // keep the failure with the smallest index so the error is reproducible too
                std::lock_guard lk(mu);
                if (i < failed_at) {
                    failed_at = i;
                    err = std::current_exception();
                }
            }
        }
    };
    const unsigned nt = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::vector<std::thread> pool;
    pool.reserve(nt - 1);
    for (unsigned t = 1; t < nt; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace fhlab
