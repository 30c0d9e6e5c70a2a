#include <cmath>
#include <cstdint>

#include "qg/kernels/kernels.hpp"
#include "lane_ops.hpp"

// Scalar reference kernels. SIMD variants must agree with these bit for bit
// (except for state left behind on the overflow error path).

namespace qg::kernels {

namespace {

void philox_uniform_scalar(std::uint64_t key, std::uint64_t stream,
                           const std::uint64_t* codes, std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = detail::philox_uniform_one(key, stream, codes[i]);
}

int edge_propagate_scalar(const double* u_half, std::size_t steps, double h,
                          const double* energies, EdgeBatch st, EdgeTrace trace) {
    const std::size_t lanes = st.lanes;
    const double h2 = h * 0.5;
    const double h6 = h / 6.0;

    auto store_trace = [&](std::size_t row) {
        if (trace.phi)
            for (std::size_t l = 0; l < lanes; ++l) trace.phi[row * lanes + l] = st.phi[l];
        if (trace.dphi)
            for (std::size_t l = 0; l < lanes; ++l) trace.dphi[row * lanes + l] = st.dphi[l];
        if (trace.theta)
            for (std::size_t l = 0; l < lanes; ++l) trace.theta[row * lanes + l] = st.theta[l];
        if (trace.dtheta)
            for (std::size_t l = 0; l < lanes; ++l) trace.dtheta[row * lanes + l] = st.dtheta[l];
    };

    store_trace(0);
    for (std::size_t i = 0; i < steps; ++i) {
        const double u0 = u_half[2 * i];
        const double um = u_half[2 * i + 1];
        const double u1 = u_half[2 * i + 2];
        int overflow = 0;
        for (std::size_t l = 0; l < lanes; ++l) {
            const double q0 = u0 - energies[l];
            const double qm = um - energies[l];
            const double q1 = u1 - energies[l];
            detail::rk4_lane(q0, qm, q1, h, h2, h6, st.phi[l], st.dphi[l]);
            detail::rk4_lane(q0, qm, q1, h, h2, h6, st.theta[l], st.dtheta[l]);
            if (std::fabs(st.phi[l]) > 1e300 || std::fabs(st.dphi[l]) > 1e300 ||
                std::fabs(st.theta[l]) > 1e300 || std::fabs(st.dtheta[l]) > 1e300)
                overflow = 1;
        }
        store_trace(i + 1);
        if (overflow) return 1;
    }
    return 0;
}

void sturm_counts_scalar(const double* diag, const double* off, std::size_t n,
                         const double* shifts, std::size_t m, std::int64_t* counts) {
    const double pivmin = detail::sturm_pivmin(off, n);
    for (std::size_t j = 0; j < m; ++j)
        counts[j] = detail::sturm_count_one(diag, off, n, shifts[j], pivmin);
}

} // namespace

const Dispatch& scalar_dispatch() {
    static const Dispatch table{philox_uniform_scalar, edge_propagate_scalar, sturm_counts_scalar};
    return table;
}

} // namespace qg::kernels
