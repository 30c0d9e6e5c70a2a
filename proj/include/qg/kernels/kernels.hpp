#pragma once

#include <cstddef>
#include <cstdint>

namespace qg::kernels {

enum class Isa { scalar, avx2 };

/// In/out state of the batched second-order propagator, one slot per energy
/// lane. Two fundamental solutions are advanced together.
struct EdgeBatch {
    double* phi;    ///< solution with phi(0)=0, phi'(0)=1
    double* dphi;
    double* theta;  ///< solution with theta(0)=1, theta'(0)=0
    double* dtheta;
    std::size_t lanes;
};

/// Optional per-step storage, layout [step * lanes + lane], (steps+1) rows.
/// Null pointers skip the corresponding trace.
struct EdgeTrace {
    double* phi = nullptr;
    double* dphi = nullptr;
    double* theta = nullptr;
    double* dtheta = nullptr;
};

struct Dispatch {
    /// Philox4x32-10 stream: out[i] = uniform [0,1) keyed by
    /// (key, stream, codes[i]). Bit-determined by its arguments.
    void (*philox_uniform)(std::uint64_t key, std::uint64_t stream,
                           const std::uint64_t* codes, std::size_t n, double* out);

    /// Classical RK4 for y'' = (u(t) - E) y over `steps` fixed steps of size h,
    /// batched across energies. u_half holds u at all half-step points
    /// (2*steps+1 values). Returns nonzero if any lane exceeded 1e300.
    int (*edge_propagate)(const double* u_half, std::size_t steps, double h,
                          const double* energies, EdgeBatch state, EdgeTrace trace);

    /// counts[j] = number of eigenvalues of the symmetric tridiagonal matrix
    /// (diag, off) strictly below shifts[j], by Sturm/LDL pivot counting.
    void (*sturm_counts)(const double* diag, const double* off, std::size_t n,
                         const double* shifts, std::size_t m, std::int64_t* counts);
};

/// ISA selected at first use: AVX2 when the CPU supports it, else scalar.
/// QG_KERNELS=scalar|avx2 in the environment overrides detection.
Isa active_isa();
void force_isa(Isa isa); // testing hook
const char* isa_name(Isa isa);

const Dispatch& dispatch();
const Dispatch& dispatch_for(Isa isa);
bool isa_available(Isa isa);

} // namespace qg::kernels
