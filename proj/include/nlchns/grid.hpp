#pragma once

// Uniform rectangular grid, cell and face fields, and the conservative
// finite-volume gradient/divergence pair with no-flux walls.
//
// Layout: cell (i, j) with i along x, j along y, stored at j*nx + i.
// x-faces (i, j), i = 0..nx, sit at x = i*hx; stored at j*(nx+1) + i.
// y-faces (i, j), j = 0..ny, sit at y = j*hy; stored at j*nx + i.
// Faces on the boundary carry zero normal component for every flux and
// velocity produced here.

#include <cmath>
#include <cstddef>
#include <vector>

#include "nlchns/core.hpp"

namespace nlchns {

struct Grid2D {
    int nx = 0;
    int ny = 0;
    double Lx = 1.0;
    double Ly = 1.0;

    Grid2D() = default;
    Grid2D(int nx_, int ny_, double Lx_ = 1.0, double Ly_ = 1.0) : nx(nx_), ny(ny_), Lx(Lx_), Ly(Ly_) {
        validate();
    }

    void validate() const {
        if (nx < 4 || ny < 4) throw ValidationError("grid: nx and ny must be >= 4");
        if (!(Lx > 0.0) || !(Ly > 0.0) || !std::isfinite(Lx) || !std::isfinite(Ly))
            throw ValidationError("grid: Lx and Ly must be positive and finite");
    }

    [[nodiscard]] double hx() const noexcept { return Lx / nx; }
    [[nodiscard]] double hy() const noexcept { return Ly / ny; }
    [[nodiscard]] double cell_volume() const noexcept { return hx() * hy(); }
    [[nodiscard]] double area() const noexcept { return Lx * Ly; }
    [[nodiscard]] std::size_t cells() const noexcept { return static_cast<std::size_t>(nx) * ny; }
    [[nodiscard]] std::size_t xfaces() const noexcept { return static_cast<std::size_t>(nx + 1) * ny; }
    [[nodiscard]] std::size_t yfaces() const noexcept { return static_cast<std::size_t>(nx) * (ny + 1); }

    [[nodiscard]] std::size_t cell(int i, int j) const noexcept { return static_cast<std::size_t>(j) * nx + i; }
    [[nodiscard]] std::size_t xface(int i, int j) const noexcept {
        return static_cast<std::size_t>(j) * (nx + 1) + i;
    }
    [[nodiscard]] std::size_t yface(int i, int j) const noexcept { return static_cast<std::size_t>(j) * nx + i; }

    [[nodiscard]] double xc(int i) const noexcept { return (i + 0.5) * hx(); }
    [[nodiscard]] double yc(int j) const noexcept { return (j + 0.5) * hy(); }

    friend bool operator==(const Grid2D& a, const Grid2D& b) noexcept {
        return a.nx == b.nx && a.ny == b.ny && a.Lx == b.Lx && a.Ly == b.Ly;
    }
};

inline void require_same_grid(const Grid2D& a, const Grid2D& b, const char* what) {
    if (!(a == b)) throw ValidationError(std::string(what) + ": grid mismatch");
}

/// Cell-centered scalar field.
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(const Grid2D& g, double value = 0.0) : grid_(g), data_(g.cells(), value) {}

    [[nodiscard]] const Grid2D& grid() const noexcept { return grid_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    double& operator[](std::size_t k) noexcept { return data_[k]; }
    double operator[](std::size_t k) const noexcept { return data_[k]; }
    double& operator()(int i, int j) noexcept { return data_[grid_.cell(i, j)]; }
    double operator()(int i, int j) const noexcept { return data_[grid_.cell(i, j)]; }
    [[nodiscard]] std::span<double> values() noexcept { return data_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return data_; }
    [[nodiscard]] std::vector<double>& raw() noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& raw() const noexcept { return data_; }

    [[nodiscard]] double sum() const { return kahan_sum(data_); }
    [[nodiscard]] double mean() const { return sum() / static_cast<double>(data_.size()); }
    [[nodiscard]] double integral() const { return sum() * grid_.cell_volume(); }
    [[nodiscard]] double max_abs() const { return nlchns::max_abs(data_); }
    [[nodiscard]] double min() const { return *std::min_element(data_.begin(), data_.end()); }
    [[nodiscard]] double max() const { return *std::max_element(data_.begin(), data_.end()); }
    [[nodiscard]] bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    ScalarField& operator+=(const ScalarField& o) {
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o) {
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }
    ScalarField& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }
    friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
    friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
    friend ScalarField operator*(double s, ScalarField a) { return a *= s; }

private:
    Grid2D grid_;
    std::vector<double> data_;
};

/// Normal components on cell faces: x on vertical faces, y on horizontal faces.
/// Doubles as the MAC velocity (StaggeredVelocity) and as any face flux.
class FaceField {
public:
    FaceField() = default;
    explicit FaceField(const Grid2D& g) : grid_(g), x_(g.xfaces(), 0.0), y_(g.yfaces(), 0.0) {}

    [[nodiscard]] const Grid2D& grid() const noexcept { return grid_; }
    std::vector<double>& x() noexcept { return x_; }
    std::vector<double>& y() noexcept { return y_; }
    [[nodiscard]] const std::vector<double>& x() const noexcept { return x_; }
    [[nodiscard]] const std::vector<double>& y() const noexcept { return y_; }
    double& xf(int i, int j) noexcept { return x_[grid_.xface(i, j)]; }
    double& yf(int i, int j) noexcept { return y_[grid_.yface(i, j)]; }
    [[nodiscard]] double xf(int i, int j) const noexcept { return x_[grid_.xface(i, j)]; }
    [[nodiscard]] double yf(int i, int j) const noexcept { return y_[grid_.yface(i, j)]; }

    /// Max over all face components.
    [[nodiscard]] double max_abs() const { return std::max(nlchns::max_abs(x_), nlchns::max_abs(y_)); }
    [[nodiscard]] bool all_finite() const {
        auto fin = [](double v) { return std::isfinite(v); };
        return std::all_of(x_.begin(), x_.end(), fin) && std::all_of(y_.begin(), y_.end(), fin);
    }

    void zero_boundary_normal() {
        for (int j = 0; j < grid_.ny; ++j) {
            xf(0, j) = 0.0;
            xf(grid_.nx, j) = 0.0;
        }
        for (int i = 0; i < grid_.nx; ++i) {
            yf(i, 0) = 0.0;
            yf(i, grid_.ny) = 0.0;
        }
    }
    [[nodiscard]] double boundary_normal_max() const {
        double m = 0.0;
        for (int j = 0; j < grid_.ny; ++j) m = std::max({m, std::abs(xf(0, j)), std::abs(xf(grid_.nx, j))});
        for (int i = 0; i < grid_.nx; ++i) m = std::max({m, std::abs(yf(i, 0)), std::abs(yf(i, grid_.ny))});
        return m;
    }

    FaceField& operator+=(const FaceField& o) {
        for (std::size_t k = 0; k < x_.size(); ++k) x_[k] += o.x_[k];
        for (std::size_t k = 0; k < y_.size(); ++k) y_[k] += o.y_[k];
        return *this;
    }
    FaceField& operator-=(const FaceField& o) {
        for (std::size_t k = 0; k < x_.size(); ++k) x_[k] -= o.x_[k];
        for (std::size_t k = 0; k < y_.size(); ++k) y_[k] -= o.y_[k];
        return *this;
    }
    FaceField& operator*=(double s) {
        for (double& v : x_) v *= s;
        for (double& v : y_) v *= s;
        return *this;
    }
    friend FaceField operator+(FaceField a, const FaceField& b) { return a += b; }
    friend FaceField operator-(FaceField a, const FaceField& b) { return a -= b; }
    friend FaceField operator*(double s, FaceField a) { return a *= s; }

private:
    Grid2D grid_;
    std::vector<double> x_;
    std::vector<double> y_;
};

using StaggeredVelocity = FaceField;

/// Cell inner product sum f g |cell|.
inline double inner(const ScalarField& f, const ScalarField& g) {
    require_same_grid(f.grid(), g.grid(), "inner");
    return kahan_dot(f.values(), g.values()) * f.grid().cell_volume();
}

inline double l2_norm(const ScalarField& f) { return std::sqrt(std::max(0.0, inner(f, f))); }

/// Face inner product; every face carries weight hx*hy.
inline double inner(const FaceField& F, const FaceField& G) {
    require_same_grid(F.grid(), G.grid(), "inner");
    KahanSum s;
    for (std::size_t k = 0; k < F.x().size(); ++k) s.add(F.x()[k] * G.x()[k]);
    for (std::size_t k = 0; k < F.y().size(); ++k) s.add(F.y()[k] * G.y()[k]);
    return s.value() * F.grid().cell_volume();
}

inline double l2_norm(const FaceField& F) { return std::sqrt(std::max(0.0, inner(F, F))); }

/// Two-point face gradient; boundary faces are zero (no flux).
inline FaceField grad(const ScalarField& f) {
    const Grid2D& g = f.grid();
    FaceField G(g);
    const double ihx = 1.0 / g.hx(), ihy = 1.0 / g.hy();
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) G.xf(i, j) = (f(i, j) - f(i - 1, j)) * ihx;
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) G.yf(i, j) = (f(i, j) - f(i, j - 1)) * ihy;
    return G;
}

/// Conservative divergence: net face flux divided by the cell volume.
inline ScalarField div(const FaceField& F) {
    const Grid2D& g = F.grid();
    ScalarField d(g);
    const double ihx = 1.0 / g.hx(), ihy = 1.0 / g.hy();
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            d(i, j) = (F.xf(i + 1, j) - F.xf(i, j)) * ihx + (F.yf(i, j + 1) - F.yf(i, j)) * ihy;
    return d;
}

/// Arithmetic mean of the two adjacent cells on interior faces; boundary
/// faces take the single adjacent cell value.
inline FaceField face_average(const ScalarField& f) {
    const Grid2D& g = f.grid();
    FaceField A(g);
    for (int j = 0; j < g.ny; ++j) {
        A.xf(0, j) = f(0, j);
        A.xf(g.nx, j) = f(g.nx - 1, j);
        for (int i = 1; i < g.nx; ++i) A.xf(i, j) = 0.5 * (f(i, j) + f(i - 1, j));
    }
    for (int i = 0; i < g.nx; ++i) {
        A.yf(i, 0) = f(i, 0);
        A.yf(i, g.ny) = f(i, g.ny - 1);
    }
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) A.yf(i, j) = 0.5 * (f(i, j) + f(i, j - 1));
    return A;
}

/// Face values of a cell-centered vector field (vx, vy): the x-component is
/// averaged onto x-faces and the y-component onto y-faces.
inline FaceField face_average(const ScalarField& vx, const ScalarField& vy) {
    FaceField A = face_average(vx);
    FaceField B = face_average(vy);
    A.y() = B.y();
    return A;
}

/// Pointwise product of two face fields.
inline FaceField hadamard(const FaceField& A, const FaceField& B) {
    FaceField C(A.grid());
    for (std::size_t k = 0; k < C.x().size(); ++k) C.x()[k] = A.x()[k] * B.x()[k];
    for (std::size_t k = 0; k < C.y().size(); ++k) C.y()[k] = A.y()[k] * B.y()[k];
    return C;
}

/// Field with every value set by fn(x, y) at cell centers.
template <class Fn>
ScalarField sample_cells(const Grid2D& g, Fn&& fn) {
    ScalarField f(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) f(i, j) = fn(g.xc(i), g.yc(j));
    return f;
}

}  // namespace nlchns
