#pragma once

// Thin RAII layer over FFTW. Plans are created once (FFTW_ESTIMATE, so they
// are deterministic) under a global lock; execution uses the new-array
// interface on fftw_malloc'ed scratch so a plan can be shared read-only.

#include <fftw3.h>

#include <complex>
#include <cstring>
#include <memory>
#include <mutex>

#include "nlchns/core.hpp"

namespace nlchns::fft {

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

template <class T>
using Buffer = std::unique_ptr<T[], FftwFree>;

inline Buffer<double> alloc_real(std::size_t n) {
    auto* p = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    if (!p) throw std::bad_alloc();
    std::memset(p, 0, sizeof(double) * n);
    return Buffer<double>(p);
}

inline Buffer<fftw_complex> alloc_complex(std::size_t n) {
    auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (!p) throw std::bad_alloc();
    std::memset(p, 0, sizeof(fftw_complex) * n);
    return Buffer<fftw_complex>(p);
}

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const noexcept {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(p);
    }
};
using Plan = std::unique_ptr<fftw_plan_s, PlanDeleter>;

/// Real 2D transform pair on a rows x cols array (row-major, cols fastest).
class RealFft2D {
public:
    RealFft2D(int rows, int cols) : rows_(rows), cols_(cols) {
        auto r = alloc_real(real_size());
        auto c = alloc_complex(complex_size());
        std::lock_guard lock(planner_mutex());
        forward_.reset(fftw_plan_dft_r2c_2d(rows, cols, r.get(), c.get(), FFTW_ESTIMATE));
        inverse_.reset(fftw_plan_dft_c2r_2d(rows, cols, c.get(), r.get(), FFTW_ESTIMATE));
        if (!forward_ || !inverse_) throw NumericalError("fftw: plan creation failed");
    }

    [[nodiscard]] int rows() const noexcept { return rows_; }
    [[nodiscard]] int cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t real_size() const noexcept { return static_cast<std::size_t>(rows_) * cols_; }
    [[nodiscard]] std::size_t complex_size() const noexcept {
        return static_cast<std::size_t>(rows_) * (cols_ / 2 + 1);
    }

    void forward(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(forward_.get(), in, out); }
    /// Unnormalized inverse; destroys the input.
    void inverse(fftw_complex* in, double* out) const { fftw_execute_dft_c2r(inverse_.get(), in, out); }

private:
    int rows_;
    int cols_;
    Plan forward_;
    Plan inverse_;
};

/// DCT-II / DCT-III pair (FFTW REDFT10 / REDFT01) on a rows x cols array.
class CosineTransform2D {
public:
    CosineTransform2D(int rows, int cols) : rows_(rows), cols_(cols) {
        auto a = alloc_real(size());
        auto b = alloc_real(size());
        std::lock_guard lock(planner_mutex());
        forward_.reset(fftw_plan_r2r_2d(rows, cols, a.get(), b.get(), FFTW_REDFT10, FFTW_REDFT10, FFTW_ESTIMATE));
        inverse_.reset(fftw_plan_r2r_2d(rows, cols, a.get(), b.get(), FFTW_REDFT01, FFTW_REDFT01, FFTW_ESTIMATE));
        if (!forward_ || !inverse_) throw NumericalError("fftw: plan creation failed");
    }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(rows_) * cols_; }
    void forward(double* in, double* out) const { fftw_execute_r2r(forward_.get(), in, out); }
    /// Unnormalized: inverse(forward(x)) = 4*rows*cols*x.
    void inverse(double* in, double* out) const { fftw_execute_r2r(inverse_.get(), in, out); }

private:
    int rows_;
    int cols_;
    Plan forward_;
    Plan inverse_;
};

}  // namespace nlchns::fft
