#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace mssp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

using Rng = std::mt19937_64;

/// Input failed validation (bad instance, bad options). CLI exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An iteration or size cap was exceeded. CLI exit code 3.
struct CapExceededError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A stage problem was infeasible: the instance does not have relatively
/// complete recourse (or the master point is outside the recourse domain).
struct RecourseInfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The LP solver could not meet its residual contract after refinement.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline bool nearly_equal(double a, double b, double tol) {
    if (std::isinf(a) || std::isinf(b)) return a == b;
    return std::abs(a - b) <= tol;
}

/// FNV-1a 64-bit, used for instance hashes in reproducibility headers.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Runs fn(i) for i in [0, count). Results must be written to per-index
/// slots so the outcome is independent of the thread count.
template <typename Fn>
void parallel_for(int count, int workers, Fn&& fn) {
    if (count <= 0) return;
    if (workers <= 1 || count == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    int n_threads = std::min(workers, count);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_threads));
    std::atomic_int next{0};
    for (int t = 0; t < n_threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

inline int default_workers() {
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace mssp
