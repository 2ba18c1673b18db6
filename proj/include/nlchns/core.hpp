#pragma once

// Shared plumbing: error types, compensated summation, the thread cap.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nlchns {

/// Invalid input or configuration (CLI exit code 2).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A step, solve or quadrature that could not be completed (CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a singular function.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Thrown when a requested step violates the explicit stability guard.
class CflError : public NumericalError {
public:
    CflError(const std::string& what, double suggested) : NumericalError(what), suggested_dt(suggested) {}
    double suggested_dt;
};

/// Kahan–Babuška (Neumaier) accumulator. Summation order is the call order,
/// so results are deterministic for a fixed loop order.
class KahanSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    KahanSum& operator+=(double x) noexcept {
        add(x);
        return *this;
    }
    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double kahan_sum(std::span<const double> v) {
    KahanSum s;
    for (double x : v) s.add(x);
    return s.value();
}

inline double kahan_dot(std::span<const double> a, std::span<const double> b) {
    KahanSum s;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) s.add(a[i] * b[i]);
    return s.value();
}

inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

/// Thread cap from NLCHNS_THREADS (unset or invalid: hardware concurrency).
inline unsigned thread_cap() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("NLCHNS_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) return static_cast<unsigned>(std::min<long>(v, hw));
    }
    return hw;
}

/// Runs fn(i) for i in [0, n). Only for loops whose iterations write disjoint
/// outputs; results never depend on the thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned threads = std::min<std::size_t>(thread_cap(), std::max<std::size_t>(1, n / 4096));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
}

inline constexpr double kPi = 3.14159265358979323846264338327950288;

}  // namespace nlchns
