#pragma once

// Binary cell-field snapshots.
//
//   offset  size  content
//   0       4     magic "NLCH"
//   4       4     uint32 format version (1)
//   8       4     uint32 nx
//   12      4     uint32 ny
//   16      8     float64 Lx
//   24      8     float64 Ly
//   32      8*nx*ny float64 cell values, row-major (index j*nx + i)
//
// All multi-byte values little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>

#include "nlchns/grid.hpp"

namespace nlchns::snapshot {

inline constexpr std::array<char, 4> kMagic{'N', 'L', 'C', 'H'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 32;

namespace detail {
template <class T>
void put_le(std::ostream& os, T value) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U u = std::bit_cast<U>(value);
    unsigned char bytes[sizeof(T)];
    for (std::size_t k = 0; k < sizeof(T); ++k) bytes[k] = static_cast<unsigned char>((u >> (8 * k)) & 0xFFu);
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    unsigned char bytes[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ValidationError("snapshot: truncated file");
    U u = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) u |= static_cast<U>(bytes[k]) << (8 * k);
    return std::bit_cast<T>(u);
}
}  // namespace detail

inline void write(std::ostream& os, const ScalarField& f) {
    const Grid2D& g = f.grid();
    os.write(kMagic.data(), 4);
    detail::put_le<std::uint32_t>(os, kVersion);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.nx));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.ny));
    detail::put_le<double>(os, g.Lx);
    detail::put_le<double>(os, g.Ly);
    for (std::size_t k = 0; k < f.size(); ++k) detail::put_le<double>(os, f[k]);
}

inline void write(const std::string& path, const ScalarField& f) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("snapshot: cannot open '" + path + "' for writing");
    write(os, f);
    if (!os) throw NumericalError("snapshot: write failed for '" + path + "'");
}

inline ScalarField read(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || magic != kMagic) throw ValidationError("snapshot: bad magic");
    const auto version = detail::get_le<std::uint32_t>(is);
    if (version != kVersion) throw ValidationError("snapshot: unsupported version " + std::to_string(version));
    const auto nx = detail::get_le<std::uint32_t>(is);
    const auto ny = detail::get_le<std::uint32_t>(is);
    const auto Lx = detail::get_le<double>(is);
    const auto Ly = detail::get_le<double>(is);
    if (nx > (1u << 16) || ny > (1u << 16)) throw ValidationError("snapshot: implausible grid size");
    Grid2D g(static_cast<int>(nx), static_cast<int>(ny), Lx, Ly);
    ScalarField f(g);
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = detail::get_le<double>(is);
    return f;
}

inline ScalarField read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("snapshot: cannot open '" + path + "'");
    return read(is);
}

/// CSV dump: i,j,x,y,value with 17 significant digits (round-trips exactly).
inline void dump_csv(std::ostream& os, const ScalarField& f) {
    const Grid2D& g = f.grid();
    os << "i,j,x,y,value\n" << std::setprecision(17);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) os << i << ',' << j << ',' << g.xc(i) << ',' << g.yc(j) << ',' << f(i, j) << '\n';
}

}  // namespace nlchns::snapshot
