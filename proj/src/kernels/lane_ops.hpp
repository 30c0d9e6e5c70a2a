#pragma once

// Internal per-lane arithmetic shared by the scalar reference kernels and the
// SIMD tail handling. Both sides must execute exactly this operation order so
// that variants agree bitwise.

#include <cmath>
#include <cstdint>
#include <limits>

namespace qg::kernels::detail {

inline void rk4_lane(double q0, double qm, double q1, double h, double h2, double h6,
                     double& y_io, double& v_io) {
    const double y = y_io, v = v_io;
    const double k1y = v;
    const double k1v = q0 * y;
    const double y2 = y + h2 * k1y, v2 = v + h2 * k1v;
    const double k2y = v2;
    const double k2v = qm * y2;
    const double y3 = y + h2 * k2y, v3 = v + h2 * k2v;
    const double k3y = v3;
    const double k3v = qm * y3;
    const double y4 = y + h * k3y, v4 = v + h * k3v;
    const double k4y = v4;
    const double k4v = q1 * y4;
    y_io = y + h6 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    v_io = v + h6 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
}

inline std::int64_t sturm_count_one(const double* diag, const double* off, std::size_t n,
                                    double x, double pivmin) {
    std::int64_t cnt = 0;
    double q = diag[0] - x;
    if (std::fabs(q) < pivmin) q = -pivmin;
    if (q < 0.0) ++cnt;
    for (std::size_t i = 1; i < n; ++i) {
        q = (diag[i] - x) - (off[i - 1] * off[i - 1]) / q;
        if (std::fabs(q) < pivmin) q = -pivmin;
        if (q < 0.0) ++cnt;
    }
    return cnt;
}

inline double sturm_pivmin(const double* off, std::size_t n) {
    double emax2 = 1.0;
    for (std::size_t i = 0; i + 1 < n; ++i) emax2 = std::fmax(emax2, off[i] * off[i]);
    return std::numeric_limits<double>::min() * emax2;
}

inline void philox4x32_10(std::uint32_t c[4], std::uint32_t key0, std::uint32_t key1) {
    constexpr std::uint32_t M0 = 0xD2511F53u;
    constexpr std::uint32_t M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u;
    constexpr std::uint32_t W1 = 0xBB67AE85u;
    std::uint32_t k0 = key0, k1 = key1;
    for (int r = 0; r < 10; ++r) {
        if (r > 0) {
            k0 += W0;
            k1 += W1;
        }
        const std::uint64_t p0 = std::uint64_t(M0) * c[0];
        const std::uint64_t p1 = std::uint64_t(M1) * c[2];
        const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
        const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
        const std::uint32_t r0 = hi1 ^ c[1] ^ k0;
        const std::uint32_t r2 = hi0 ^ c[3] ^ k1;
        c[0] = r0;
        c[1] = lo1;
        c[2] = r2;
        c[3] = lo0;
    }
}

inline double philox_uniform_one(std::uint64_t key, std::uint64_t stream, std::uint64_t code) {
    std::uint32_t c[4] = {std::uint32_t(code), std::uint32_t(code >> 32),
                          std::uint32_t(stream), std::uint32_t(stream >> 32)};
    philox4x32_10(c, std::uint32_t(key), std::uint32_t(key >> 32));
    const std::uint64_t bits = (std::uint64_t(c[1]) << 32) | c[0];
    return double(bits >> 11) * 0x1.0p-53;
}

} // namespace qg::kernels::detail
