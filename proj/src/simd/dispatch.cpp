#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "tables.hpp"

namespace fedmim::simd {
namespace {

std::atomic<const KernelTable*>& active_slot() {
    static std::atomic<const KernelTable*> slot{&kernels_for(detect_best())};
    return slot;
}

}  // namespace

bool isa_supported(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
            return __builtin_cpu_supports("avx2");
#else
            return false;
#endif
        case Isa::neon:
#if defined(__aarch64__)
            return true;
#else
            return false;
#endif
    }
    return false;
}

Isa detect_best() {
    if (const char* env = std::getenv("FEDMIM_SIMD"); env != nullptr) {
        const std::string want(env);
        for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
            if (want == isa_name(isa) && isa_supported(isa)) {
                return isa;
            }
        }
    }
    if (isa_supported(Isa::avx2)) {
        return Isa::avx2;
    }
    if (isa_supported(Isa::neon)) {
        return Isa::neon;
    }
    return Isa::scalar;
}

const KernelTable& kernels_for(Isa isa) {
    if (!isa_supported(isa)) {
        throw std::invalid_argument("simd: ISA not supported on this CPU: " + std::string(isa_name(isa)));
    }
    switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
        case Isa::avx2:
            return detail::avx2_table();
#endif
#if defined(__aarch64__)
        case Isa::neon:
            return detail::neon_table();
#endif
        default:
            return detail::scalar_table();
    }
}

const KernelTable& kernels() {
    return *active_slot().load(std::memory_order_acquire);
}

void force_isa(Isa isa) {
    active_slot().store(&kernels_for(isa), std::memory_order_release);
}

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return "scalar";
        case Isa::avx2:
            return "avx2";
        case Isa::neon:
            return "neon";
    }
    return "unknown";
}

}  // namespace fedmim::simd
