#pragma once

// Interaction kernels on a rectangle: cell-averaged lattice tables, the
// zero-extension convolution J*f and (grad J)*f by padded FFT, the ambient
// field a = J*chi_Omega with its gradient, and the constants a*, a_*, b.

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nlchns/fft.hpp"
#include "nlchns/grid.hpp"
#include "nlchns/quadrature.hpp"

namespace nlchns {

enum class KernelFamily { gaussian, log2d, truncated_power, table };

/// How lattice entries are formed from the continuous kernel.
enum class KernelQuadrature {
    cell_average,  ///< average over the offset cell (2x2 Gauss; exact closed form for log2d)
    point          ///< value at the offset (singular origin cell still averaged)
};

struct KernelTableEntry {
    int dx;
    int dy;
    double value;
};

/// J(x) = amplitude * scale^4 * profile(scale * x), with
///   gaussian:         exp(-|z|^2 / width^2)
///   log2d:            -strength * log(|z| / core_radius)   (positive inside the core)
///   truncated_power:  (1 - |z|^2 / cutoff^2)_+^exponent
///   table:            values on integer lattice offsets (scale and quadrature ignored).
struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian;
    double amplitude = 1.0;
    double scale = 1.0;
    double width = 0.1;
    double strength = 1.0;
    double core_radius = 1.0;
    double exponent = 2.0;
    double cutoff = 0.1;
    std::vector<KernelTableEntry> table;
    KernelQuadrature quadrature = KernelQuadrature::cell_average;

    static KernelSpec gaussian(double width, double amplitude = 1.0, double scale = 1.0) {
        KernelSpec s;
        s.family = KernelFamily::gaussian;
        s.width = width;
        s.amplitude = amplitude;
        s.scale = scale;
        return s;
    }
    static KernelSpec log2d(double strength, double core_radius = 1.0, double amplitude = 1.0) {
        KernelSpec s;
        s.family = KernelFamily::log2d;
        s.strength = strength;
        s.core_radius = core_radius;
        s.amplitude = amplitude;
        return s;
    }
    static KernelSpec truncated_power(double exponent, double cutoff, double amplitude = 1.0, double scale = 1.0) {
        KernelSpec s;
        s.family = KernelFamily::truncated_power;
        s.exponent = exponent;
        s.cutoff = cutoff;
        s.amplitude = amplitude;
        s.scale = scale;
        return s;
    }

    void validate() const {
        auto pos = [](double v) { return std::isfinite(v) && v > 0.0; };
        if (!(std::isfinite(amplitude) && amplitude >= 0.0)) throw ValidationError("kernel: amplitude must be >= 0");
        if (!pos(scale)) throw ValidationError("kernel: scale must be positive");
        switch (family) {
            case KernelFamily::gaussian:
                if (!pos(width)) throw ValidationError("kernel: gaussian width must be positive");
                break;
            case KernelFamily::log2d:
                if (!pos(strength)) throw ValidationError("kernel: log2d strength must be positive");
                if (!pos(core_radius)) throw ValidationError("kernel: log2d core_radius must be positive");
                break;
            case KernelFamily::truncated_power:
                if (!pos(exponent)) throw ValidationError("kernel: exponent must be positive");
                if (!pos(cutoff)) throw ValidationError("kernel: cutoff must be positive");
                break;
            case KernelFamily::table:
                break;
        }
    }
};

inline const char* to_string(KernelFamily f) {
    switch (f) {
        case KernelFamily::gaussian: return "gaussian";
        case KernelFamily::log2d: return "log2d";
        case KernelFamily::truncated_power: return "truncated_power";
        case KernelFamily::table: return "table";
    }
    return "?";
}

/// Reads "dx,dy,value" lines (integer lattice offsets); '#' comments and a
/// non-numeric header line are skipped.
inline std::vector<KernelTableEntry> read_kernel_table(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("kernel table: cannot open '" + path + "'");
    std::vector<KernelTableEntry> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        for (char& c : line)
            if (c == ',' || c == ';' || c == '\t') c = ' ';
        std::istringstream ls(line);
        KernelTableEntry e{};
        if (!(ls >> e.dx >> e.dy >> e.value)) {
            if (out.empty() && lineno == 1) continue;
            throw ValidationError("kernel table: malformed line " + std::to_string(lineno) + " in '" + path + "'");
        }
        out.push_back(e);
    }
    return out;
}

namespace kernel_detail {

// Antiderivative of log(x^2+y^2) in x and y.
inline double log_area_primitive(double x, double y) {
    double r = x * x + y * y;
    double v = (r > 0.0) ? x * y * (std::log(r) - 3.0) : 0.0;
    if (x != 0.0) v += x * x * std::atan(y / x);
    if (y != 0.0) v += y * y * std::atan(x / y);
    return v;
}

// Antiderivative of log(x^2+y^2) in y at fixed x.
inline double log_line_primitive(double x, double y) {
    double r = x * x + y * y;
    double v = (y != 0.0 && r > 0.0) ? y * std::log(r) : 0.0;
    v -= 2.0 * y;
    if (x != 0.0) v += 2.0 * x * std::atan(y / x);
    return v;
}

// Unit-amplitude, unit-scale profile and its gradient.
struct Profile {
    const KernelSpec& s;

    [[nodiscard]] double value(double x, double y) const {
        const double r2 = x * x + y * y;
        switch (s.family) {
            case KernelFamily::gaussian: return std::exp(-r2 / (s.width * s.width));
            case KernelFamily::log2d: return -s.strength * (0.5 * std::log(r2) - std::log(s.core_radius));
            case KernelFamily::truncated_power: {
                const double t = 1.0 - r2 / (s.cutoff * s.cutoff);
                return t > 0.0 ? std::pow(t, s.exponent) : 0.0;
            }
            case KernelFamily::table: break;
        }
        return 0.0;
    }

    [[nodiscard]] std::array<double, 2> gradient(double x, double y) const {
        const double r2 = x * x + y * y;
        double d = 0.0;  // d profile / d(r^2)
        switch (s.family) {
            case KernelFamily::gaussian: {
                const double w2 = s.width * s.width;
                d = -std::exp(-r2 / w2) / w2;
                break;
            }
            case KernelFamily::log2d: d = -s.strength * 0.5 / r2; break;
            case KernelFamily::truncated_power: {
                const double c2 = s.cutoff * s.cutoff;
                const double t = 1.0 - r2 / c2;
                d = t > 0.0 ? -s.exponent * std::pow(t, s.exponent - 1.0) / c2 : 0.0;
                break;
            }
            case KernelFamily::table: break;
        }
        return {2.0 * x * d, 2.0 * y * d};
    }

    // Average over [x0,x1]x[y0,y1] of the unit-scale profile.
    [[nodiscard]] double cell_average(double x0, double x1, double y0, double y1) const {
        const double area = (x1 - x0) * (y1 - y0);
        if (s.family == KernelFamily::log2d) {
            const double I = log_area_primitive(x1, y1) - log_area_primitive(x0, y1) - log_area_primitive(x1, y0) +
                             log_area_primitive(x0, y0);
            return -s.strength * (0.5 * I / area - std::log(s.core_radius));
        }
        return gauss2x2([this](double x, double y) { return value(x, y); }, x0, x1, y0, y1);
    }

    [[nodiscard]] std::array<double, 2> gradient_cell_average(double x0, double x1, double y0, double y1) const {
        const double area = (x1 - x0) * (y1 - y0);
        if (s.family == KernelFamily::log2d) {
            // Averages of d/dx and d/dy reduce to edge integrals of log(x^2+y^2).
            const double ex = (log_line_primitive(x1, y1) - log_line_primitive(x1, y0)) -
                              (log_line_primitive(x0, y1) - log_line_primitive(x0, y0));
            const double ey = (log_line_primitive(y1, x1) - log_line_primitive(y1, x0)) -
                              (log_line_primitive(y0, x1) - log_line_primitive(y0, x0));
            return {-s.strength * 0.5 * ex / area, -s.strength * 0.5 * ey / area};
        }
        return {gauss2x2([this](double x, double y) { return gradient(x, y)[0]; }, x0, x1, y0, y1),
                gauss2x2([this](double x, double y) { return gradient(x, y)[1]; }, x0, x1, y0, y1)};
    }

    template <class F>
    static double gauss2x2(F&& f, double x0, double x1, double y0, double y1) {
        const double g = 0.5 / std::sqrt(3.0);
        const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
        const double dx = (x1 - x0) * g, dy = (y1 - y0) * g;
        return 0.25 * (f(cx - dx, cy - dy) + f(cx + dx, cy - dy) + f(cx - dx, cy + dy) + f(cx + dx, cy + dy));
    }
};

}  // namespace kernel_detail

/// Immutable discrete kernel bound to one grid.
class DiscreteKernel {
public:
    [[nodiscard]] const Grid2D& grid() const noexcept { return grid_; }
    [[nodiscard]] const KernelSpec& spec() const noexcept { return spec_; }

    /// Cell-averaged J at lattice offset (di, dj), |di| < nx, |dj| < ny.
    [[nodiscard]] double cell_avg(int di, int dj) const { return table_[lattice_index(di, dj)]; }
    [[nodiscard]] double grad_avg_x(int di, int dj) const { return gx_table_[lattice_index(di, dj)]; }
    [[nodiscard]] double grad_avg_y(int di, int dj) const { return gy_table_[lattice_index(di, dj)]; }

    [[nodiscard]] const ScalarField& a() const noexcept { return a_; }
    /// Cell-centered components of grad a = (grad J)*chi_Omega.
    [[nodiscard]] const ScalarField& grad_a_x() const noexcept { return grad_a_x_; }
    [[nodiscard]] const ScalarField& grad_a_y() const noexcept { return grad_a_y_; }
    /// grad a interpolated to faces.
    [[nodiscard]] const FaceField& grad_a() const noexcept { return grad_a_faces_; }

    [[nodiscard]] double a_star() const noexcept { return a_star_; }
    [[nodiscard]] double a_low() const noexcept { return a_low_; }
    [[nodiscard]] double a_max() const noexcept { return a_max_; }
    [[nodiscard]] double b_const() const noexcept { return b_const_; }
    /// Largest |J(d) - J(-d)| over the lattice (0 for analytic families).
    [[nodiscard]] double evenness_defect() const noexcept { return evenness_defect_; }
    [[nodiscard]] bool nonnegative() const noexcept { return nonnegative_; }
    [[nodiscard]] bool a_nonnegative() const noexcept { return a_low_ >= 0.0; }

    /// (J*f)(x) = sum_y J_avg(x - y) f(y) |cell|, zero extension outside the domain.
    [[nodiscard]] ScalarField convolve(const ScalarField& f) const {
        require_same_grid(grid_, f.grid(), "convolve");
        ScalarField out(grid_);
        apply(f, fft_J_, out);
        return out;
    }

    /// Cell-centered components of (grad J)*f.
    [[nodiscard]] std::pair<ScalarField, ScalarField> convolve_grad_cells(const ScalarField& f) const {
        require_same_grid(grid_, f.grid(), "convolve_grad");
        ScalarField gx(grid_), gy(grid_);
        apply(f, fft_gx_, gx);
        apply(f, fft_gy_, gy);
        return {std::move(gx), std::move(gy)};
    }

    /// (grad J)*f interpolated to faces.
    [[nodiscard]] FaceField convolve_grad(const ScalarField& f) const {
        auto [gx, gy] = convolve_grad_cells(f);
        return face_average(gx, gy);
    }

    friend DiscreteKernel build_kernel(const KernelSpec& spec, const Grid2D& grid);

private:
    using Spectrum = std::vector<std::array<double, 2>>;

    DiscreteKernel(const KernelSpec& spec, const Grid2D& g)
        : grid_(g), spec_(spec), px_(2 * g.nx), py_(2 * g.ny), fft_(py_, px_) {}

    [[nodiscard]] std::size_t lattice_index(int di, int dj) const {
        return static_cast<std::size_t>(dj + grid_.ny - 1) * (2 * grid_.nx - 1) + (di + grid_.nx - 1);
    }

    Spectrum transform_table(const std::vector<double>& t) const {
        auto buf = fft::alloc_real(fft_.real_size());
        auto spec = fft::alloc_complex(fft_.complex_size());
        const double w = grid_.cell_volume() / (static_cast<double>(px_) * py_);
        for (int q = 0; q < py_; ++q) {
            const int dj = (q < grid_.ny) ? q : q - py_;
            if (q == grid_.ny) continue;
            for (int p = 0; p < px_; ++p) {
                const int di = (p < grid_.nx) ? p : p - px_;
                if (p == grid_.nx) continue;
                buf[static_cast<std::size_t>(q) * px_ + p] = t[lattice_index(di, dj)] * w;
            }
        }
        fft_.forward(buf.get(), spec.get());
        Spectrum out(fft_.complex_size());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = {spec[k][0], spec[k][1]};
        return out;
    }

    void apply(const ScalarField& f, const Spectrum& K, ScalarField& out) const {
        auto buf = fft::alloc_real(fft_.real_size());
        auto spec = fft::alloc_complex(fft_.complex_size());
        for (int j = 0; j < grid_.ny; ++j)
            for (int i = 0; i < grid_.nx; ++i) buf[static_cast<std::size_t>(j) * px_ + i] = f(i, j);
        fft_.forward(buf.get(), spec.get());
        for (std::size_t k = 0; k < K.size(); ++k) {
            const double re = spec[k][0] * K[k][0] - spec[k][1] * K[k][1];
            const double im = spec[k][0] * K[k][1] + spec[k][1] * K[k][0];
            spec[k][0] = re;
            spec[k][1] = im;
        }
        fft_.inverse(spec.get(), buf.get());
        for (int j = 0; j < grid_.ny; ++j)
            for (int i = 0; i < grid_.nx; ++i) out(i, j) = buf[static_cast<std::size_t>(j) * px_ + i];
    }

    Grid2D grid_;
    KernelSpec spec_;
    int px_;
    int py_;
    fft::RealFft2D fft_;
    std::vector<double> table_, gx_table_, gy_table_;
    Spectrum fft_J_, fft_gx_, fft_gy_;
    ScalarField a_, grad_a_x_, grad_a_y_;
    FaceField grad_a_faces_;
    double a_star_ = 0.0, a_low_ = 0.0, a_max_ = 0.0, b_const_ = 0.0, evenness_defect_ = 0.0;
    bool nonnegative_ = true;
};

inline DiscreteKernel build_kernel(const KernelSpec& spec, const Grid2D& grid) {
    spec.validate();
    grid.validate();
    DiscreteKernel k(spec, grid);
    const int nx = grid.nx, ny = grid.ny;
    const std::size_t lattice = static_cast<std::size_t>(2 * nx - 1) * (2 * ny - 1);
    k.table_.assign(lattice, 0.0);
    k.gx_table_.assign(lattice, 0.0);
    k.gy_table_.assign(lattice, 0.0);
    const double hx = grid.hx(), hy = grid.hy();

    if (spec.family == KernelFamily::table) {
        std::map<std::pair<int, int>, double> entries;
        for (const auto& e : spec.table) {
            if (std::abs(e.dx) >= nx || std::abs(e.dy) >= ny)
                throw ValidationError("kernel table: offset outside the padded lattice");
            if (!std::isfinite(e.value)) throw ValidationError("kernel table: non-finite value");
            entries[{e.dx, e.dy}] = e.value * spec.amplitude;
        }
        for (const auto& [key, v] : entries) {
            auto it = entries.find({-key.first, -key.second});
            const double mirror = it == entries.end() ? 0.0 : it->second;
            if (std::abs(v - mirror) > 1e-12 * std::max(1.0, std::abs(v)))
                throw ValidationError("kernel table: not even at offset (" + std::to_string(key.first) + "," +
                                      std::to_string(key.second) + ")");
            k.table_[k.lattice_index(key.first, key.second)] = v;
        }
        // Symmetrize exactly and take centered differences for grad J.
        for (int dj = 0; dj < ny; ++dj)
            for (int di = -(nx - 1); di < nx; ++di) {
                const double v = 0.5 * (k.table_[k.lattice_index(di, dj)] + k.table_[k.lattice_index(-di, -dj)]);
                k.evenness_defect_ = std::max(
                    k.evenness_defect_, std::abs(k.table_[k.lattice_index(di, dj)] - k.table_[k.lattice_index(-di, -dj)]));
                k.table_[k.lattice_index(di, dj)] = v;
                k.table_[k.lattice_index(-di, -dj)] = v;
            }
        auto at = [&](int di, int dj) {
            if (std::abs(di) >= nx || std::abs(dj) >= ny) return 0.0;
            return k.table_[k.lattice_index(di, dj)];
        };
        for (int dj = -(ny - 1); dj < ny; ++dj)
            for (int di = -(nx - 1); di < nx; ++di) {
                k.gx_table_[k.lattice_index(di, dj)] = (at(di + 1, dj) - at(di - 1, dj)) / (2.0 * hx);
                k.gy_table_[k.lattice_index(di, dj)] = (at(di, dj + 1) - at(di, dj - 1)) / (2.0 * hy);
            }
    } else if (spec.amplitude > 0.0) {
        const kernel_detail::Profile prof{spec};
        const double m = spec.scale;
        const double m4 = spec.amplitude * m * m * m * m;
        const double m5 = m4 * m;
        const bool point = spec.quadrature == KernelQuadrature::point;
        // Entries are computed on the nonnegative quadrant and mirrored so the
        // lattice tables are exactly even (J) and odd (grad J).
        std::vector<std::array<double, 3>> quad(static_cast<std::size_t>(nx) * ny);
        parallel_for(quad.size(), [&](std::size_t idx) {
            const int di = static_cast<int>(idx % nx);
            const int dj = static_cast<int>(idx / nx);
            const double x0 = (di - 0.5) * hx * m, x1 = (di + 0.5) * hx * m;
            const double y0 = (dj - 0.5) * hy * m, y1 = (dj + 0.5) * hy * m;
            double v;
            std::array<double, 2> gr;
            const bool origin = di == 0 && dj == 0;
            if (point && !origin) {
                v = prof.value(di * hx * m, dj * hy * m);
                gr = prof.gradient(di * hx * m, dj * hy * m);
            } else if (point && origin && spec.family != KernelFamily::log2d) {
                v = prof.value(0.0, 0.0);
                gr = {0.0, 0.0};
            } else {
                v = prof.cell_average(x0, x1, y0, y1);
                gr = prof.gradient_cell_average(x0, x1, y0, y1);
            }
            quad[idx] = {v * m4, gr[0] * m5, gr[1] * m5};
        });
        for (int dj = -(ny - 1); dj < ny; ++dj)
            for (int di = -(nx - 1); di < nx; ++di) {
                const auto& q = quad[static_cast<std::size_t>(std::abs(dj)) * nx + std::abs(di)];
                const std::size_t li = k.lattice_index(di, dj);
                k.table_[li] = q[0];
                k.gx_table_[li] = di == 0 ? 0.0 : (di > 0 ? q[1] : -q[1]);
                k.gy_table_[li] = dj == 0 ? 0.0 : (dj > 0 ? q[2] : -q[2]);
            }
    }

    for (std::size_t li = 0; li < lattice; ++li) {
        if (!std::isfinite(k.table_[li]) || !std::isfinite(k.gx_table_[li]) || !std::isfinite(k.gy_table_[li]))
            throw NumericalError("kernel: non-finite quadrature value");
        if (k.table_[li] < 0.0) k.nonnegative_ = false;
    }

    k.fft_J_ = k.transform_table(k.table_);
    k.fft_gx_ = k.transform_table(k.gx_table_);
    k.fft_gy_ = k.transform_table(k.gy_table_);

    ScalarField chi(grid, 1.0);
    k.a_ = k.convolve(chi);
    auto [gax, gay] = k.convolve_grad_cells(chi);
    k.grad_a_x_ = std::move(gax);
    k.grad_a_y_ = std::move(gay);
    k.grad_a_faces_ = face_average(k.grad_a_x_, k.grad_a_y_);

    k.a_low_ = k.a_.min();
    k.a_max_ = k.a_.max();
    // sup_x sum |J| and sup_x sum |grad J| through the same padded operator.
    if (k.nonnegative_) {
        k.a_star_ = k.a_max_;
    } else {
        std::vector<double> absJ(lattice);
        for (std::size_t li = 0; li < lattice; ++li) absJ[li] = std::abs(k.table_[li]);
        ScalarField s(grid);
        k.apply(chi, k.transform_table(absJ), s);
        k.a_star_ = std::max(s.max(), k.a_max_);
    }
    {
        std::vector<double> absG(lattice);
        for (std::size_t li = 0; li < lattice; ++li) absG[li] = std::hypot(k.gx_table_[li], k.gy_table_[li]);
        ScalarField s(grid);
        k.apply(chi, k.transform_table(absG), s);
        k.b_const_ = std::max(0.0, s.max());
    }
    if (!k.a_.all_finite() || !std::isfinite(k.b_const_)) throw NumericalError("kernel: non-finite ambient field");
    return k;
}

/// sigma = (2/d) * integral over R^d of J(z)|z|^2 (d = 2) at unit scale.
inline double local_limit_sigma(const KernelSpec& spec) {
    spec.validate();
    if (spec.amplitude == 0.0) return 0.0;
    KernelSpec unit = spec;
    unit.scale = 1.0;
    const kernel_detail::Profile prof{unit};
    double radial = 0.0;
    switch (spec.family) {
        case KernelFamily::gaussian:
            radial = integrate([&](double r) { return prof.value(r, 0.0) * r * r * r; }, 0.0,
                               std::numeric_limits<double>::infinity());
            break;
        case KernelFamily::truncated_power:
            radial = integrate([&](double r) { return prof.value(r, 0.0) * r * r * r; }, 0.0, spec.cutoff);
            break;
        case KernelFamily::log2d:
            throw NumericalError("local_limit_sigma: log2d kernel has a divergent second moment");
        case KernelFamily::table:
            throw ValidationError("local_limit_sigma: table kernels have no continuous family");
    }
    if (!std::isfinite(radial)) throw NumericalError("local_limit_sigma: second-moment quadrature failed");
    return spec.amplitude * 2.0 * kPi * radial;
}

}  // namespace nlchns
