#include <cmath>
#include <cstdint>
#include <immintrin.h>

#include "qg/kernels/kernels.hpp"
#include "lane_ops.hpp"

// AVX2 variants. Four 64-bit lanes per vector; remainder lanes fall through
// to the shared per-lane helpers, which are exactly the scalar reference.

namespace qg::kernels {

namespace {

const __m256i kLow32 = _mm256_set1_epi64x(0xFFFFFFFFll);

inline __m256i mask32(__m256i v) { return _mm256_and_si256(v, kLow32); }

void philox_uniform_avx2(std::uint64_t key, std::uint64_t stream,
                         const std::uint64_t* codes, std::size_t n, double* out) {
    const __m256i m0 = _mm256_set1_epi64x(0xD2511F53ll);
    const __m256i m1 = _mm256_set1_epi64x(0xCD9E8D57ll);
    const __m256i w0 = _mm256_set1_epi64x(0x9E3779B9ll);
    const __m256i w1 = _mm256_set1_epi64x(0xBB67AE85ll);
    const __m256i k0_init = _mm256_set1_epi64x(std::int64_t(key & 0xFFFFFFFFull));
    const __m256i k1_init = _mm256_set1_epi64x(std::int64_t(key >> 32));
    const __m256i s0 = _mm256_set1_epi64x(std::int64_t(stream & 0xFFFFFFFFull));
    const __m256i s1 = _mm256_set1_epi64x(std::int64_t(stream >> 32));

    std::size_t i = 0;
    alignas(32) std::uint64_t buf[4];
    for (; i + 4 <= n; i += 4) {
        const __m256i code = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(codes + i));
        __m256i c0 = mask32(code);
        __m256i c1 = _mm256_srli_epi64(code, 32);
        __m256i c2 = s0, c3 = s1;
        __m256i k0 = k0_init, k1 = k1_init;
        for (int r = 0; r < 10; ++r) {
            if (r > 0) {
                k0 = mask32(_mm256_add_epi64(k0, w0));
                k1 = mask32(_mm256_add_epi64(k1, w1));
            }
            const __m256i p0 = _mm256_mul_epu32(c0, m0);
            const __m256i p1 = _mm256_mul_epu32(c2, m1);
            const __m256i hi0 = _mm256_srli_epi64(p0, 32);
            const __m256i lo0 = mask32(p0);
            const __m256i hi1 = _mm256_srli_epi64(p1, 32);
            const __m256i lo1 = mask32(p1);
            const __m256i r0 = _mm256_xor_si256(_mm256_xor_si256(hi1, c1), k0);
            const __m256i r2 = _mm256_xor_si256(_mm256_xor_si256(hi0, c3), k1);
            c0 = r0;
            c1 = lo1;
            c2 = r2;
            c3 = lo0;
        }
        const __m256i bits = _mm256_or_si256(_mm256_slli_epi64(c1, 32), c0);
        _mm256_store_si256(reinterpret_cast<__m256i*>(buf), _mm256_srli_epi64(bits, 11));
        out[i + 0] = double(buf[0]) * 0x1.0p-53;
        out[i + 1] = double(buf[1]) * 0x1.0p-53;
        out[i + 2] = double(buf[2]) * 0x1.0p-53;
        out[i + 3] = double(buf[3]) * 0x1.0p-53;
    }
    for (; i < n; ++i) out[i] = detail::philox_uniform_one(key, stream, codes[i]);
}

inline __m256d rk4_vec(__m256d q0, __m256d qm, __m256d q1, __m256d hv, __m256d h2v, __m256d h6v,
                       __m256d& y, __m256d& v) {
    const __m256d two = _mm256_set1_pd(2.0);
    const __m256d k1y = v;
    const __m256d k1v = _mm256_mul_pd(q0, y);
    const __m256d y2 = _mm256_add_pd(y, _mm256_mul_pd(h2v, k1y));
    const __m256d v2 = _mm256_add_pd(v, _mm256_mul_pd(h2v, k1v));
    const __m256d k2y = v2;
    const __m256d k2v = _mm256_mul_pd(qm, y2);
    const __m256d y3 = _mm256_add_pd(y, _mm256_mul_pd(h2v, k2y));
    const __m256d v3 = _mm256_add_pd(v, _mm256_mul_pd(h2v, k2v));
    const __m256d k3y = v3;
    const __m256d k3v = _mm256_mul_pd(qm, y3);
    const __m256d y4 = _mm256_add_pd(y, _mm256_mul_pd(hv, k3y));
    const __m256d v4 = _mm256_add_pd(v, _mm256_mul_pd(hv, k3v));
    const __m256d k4y = v4;
    const __m256d k4v = _mm256_mul_pd(q1, y4);
    // Same left-to-right association as the scalar reference.
    __m256d sy = _mm256_add_pd(
        _mm256_add_pd(_mm256_add_pd(k1y, _mm256_mul_pd(two, k2y)), _mm256_mul_pd(two, k3y)), k4y);
    __m256d sv = _mm256_add_pd(
        _mm256_add_pd(_mm256_add_pd(k1v, _mm256_mul_pd(two, k2v)), _mm256_mul_pd(two, k3v)), k4v);
    y = _mm256_add_pd(y, _mm256_mul_pd(h6v, sy));
    v = _mm256_add_pd(v, _mm256_mul_pd(h6v, sv));
    return y;
}

int edge_propagate_avx2(const double* u_half, std::size_t steps, double h,
                        const double* energies, EdgeBatch st, EdgeTrace trace) {
    const std::size_t lanes = st.lanes;
    const std::size_t blocks = lanes / 4;
    const double h2 = h * 0.5;
    const double h6 = h / 6.0;
    const __m256d hv = _mm256_set1_pd(h);
    const __m256d h2v = _mm256_set1_pd(h2);
    const __m256d h6v = _mm256_set1_pd(h6);
    const __m256d limit = _mm256_set1_pd(1e300);
    const __m256d absmask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7FFFFFFFFFFFFFFFll));

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
        const __m256d u0v = _mm256_set1_pd(u0);
        const __m256d umv = _mm256_set1_pd(um);
        const __m256d u1v = _mm256_set1_pd(u1);
        int overflow = 0;
        for (std::size_t b = 0; b < blocks; ++b) {
            const std::size_t l = 4 * b;
            const __m256d ev = _mm256_loadu_pd(energies + l);
            const __m256d q0 = _mm256_sub_pd(u0v, ev);
            const __m256d qm = _mm256_sub_pd(umv, ev);
            const __m256d q1 = _mm256_sub_pd(u1v, ev);
            __m256d y = _mm256_loadu_pd(st.phi + l);
            __m256d v = _mm256_loadu_pd(st.dphi + l);
            rk4_vec(q0, qm, q1, hv, h2v, h6v, y, v);
            _mm256_storeu_pd(st.phi + l, y);
            _mm256_storeu_pd(st.dphi + l, v);
            __m256d big = _mm256_cmp_pd(_mm256_and_pd(y, absmask), limit, _CMP_GT_OQ);
            big = _mm256_or_pd(big, _mm256_cmp_pd(_mm256_and_pd(v, absmask), limit, _CMP_GT_OQ));
            __m256d z = _mm256_loadu_pd(st.theta + l);
            __m256d w = _mm256_loadu_pd(st.dtheta + l);
            rk4_vec(q0, qm, q1, hv, h2v, h6v, z, w);
            _mm256_storeu_pd(st.theta + l, z);
            _mm256_storeu_pd(st.dtheta + l, w);
            big = _mm256_or_pd(big, _mm256_cmp_pd(_mm256_and_pd(z, absmask), limit, _CMP_GT_OQ));
            big = _mm256_or_pd(big, _mm256_cmp_pd(_mm256_and_pd(w, absmask), limit, _CMP_GT_OQ));
            if (_mm256_movemask_pd(big)) overflow = 1;
        }
        for (std::size_t l = 4 * blocks; l < lanes; ++l) {
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

void sturm_counts_avx2(const double* diag, const double* off, std::size_t n,
                       const double* shifts, std::size_t m, std::int64_t* counts) {
    const double pivmin = detail::sturm_pivmin(off, n);
    const __m256d pivminv = _mm256_set1_pd(pivmin);
    const __m256d neg_pivminv = _mm256_set1_pd(-pivmin);
    const __m256d zero = _mm256_setzero_pd();
    const __m256d absmask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7FFFFFFFFFFFFFFFll));
    const __m256i one = _mm256_set1_epi64x(1);

    std::size_t j = 0;
    for (; j + 4 <= m; j += 4) {
        const __m256d x = _mm256_loadu_pd(shifts + j);
        __m256i cnt = _mm256_setzero_si256();
        __m256d q = _mm256_sub_pd(_mm256_set1_pd(diag[0]), x);
        __m256d small = _mm256_cmp_pd(_mm256_and_pd(q, absmask), pivminv, _CMP_LT_OQ);
        q = _mm256_blendv_pd(q, neg_pivminv, small);
        __m256d neg = _mm256_cmp_pd(q, zero, _CMP_LT_OQ);
        cnt = _mm256_add_epi64(cnt, _mm256_and_si256(_mm256_castpd_si256(neg), one));
        for (std::size_t i = 1; i < n; ++i) {
            const __m256d di = _mm256_set1_pd(diag[i]);
            const __m256d e2 = _mm256_set1_pd(off[i - 1] * off[i - 1]);
            q = _mm256_sub_pd(_mm256_sub_pd(di, x), _mm256_div_pd(e2, q));
            small = _mm256_cmp_pd(_mm256_and_pd(q, absmask), pivminv, _CMP_LT_OQ);
            q = _mm256_blendv_pd(q, neg_pivminv, small);
            neg = _mm256_cmp_pd(q, zero, _CMP_LT_OQ);
            cnt = _mm256_add_epi64(cnt, _mm256_and_si256(_mm256_castpd_si256(neg), one));
        }
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(counts + j), cnt);
    }
    for (; j < m; ++j) counts[j] = detail::sturm_count_one(diag, off, n, shifts[j], pivmin);
}

} // namespace

const Dispatch& avx2_dispatch() {
    static const Dispatch table{philox_uniform_avx2, edge_propagate_avx2, sturm_counts_avx2};
    return table;
}

} // namespace qg::kernels
