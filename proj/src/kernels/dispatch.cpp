#include <cstdlib>
#include <cstring>

#include "qg/kernels/kernels.hpp"

namespace qg::kernels {

const Dispatch& scalar_dispatch();
#ifdef QG_HAVE_AVX2
const Dispatch& avx2_dispatch();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(QG_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

Isa detect() {
    if (const char* env = std::getenv("QG_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
        if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Isa::avx2;
    }
    return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

Isa& current() {
    static Isa isa = detect();
    return isa;
}

} // namespace

Isa active_isa() { return current(); }

void force_isa(Isa isa) {
    if (isa == Isa::avx2 && !cpu_has_avx2()) return;
    current() = isa;
}

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) { return isa == Isa::scalar || cpu_has_avx2(); }

const Dispatch& dispatch_for(Isa isa) {
#ifdef QG_HAVE_AVX2
    if (isa == Isa::avx2 && cpu_has_avx2()) return avx2_dispatch();
#else
    (void)isa;
#endif
    return scalar_dispatch();
}

const Dispatch& dispatch() { return dispatch_for(current()); }

} // namespace qg::kernels
