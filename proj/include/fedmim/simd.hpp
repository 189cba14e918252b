#pragma once

// Dense double-precision kernels with a scalar reference implementation and
// SIMD variants selected at runtime.
//
// Elementwise kernels (axpy, scale, add, sub, div) are bit-identical across
// ISAs. Reductions (dot, sum_sq) use lane-parallel accumulators in the SIMD
// variants and may differ from the scalar reference in the last bits;
// max_abs_diff is exact everywhere. The active table is fixed per process
// unless force_isa() is called, so results are reproducible within a run.

#include <cstddef>
#include <string_view>

namespace fedmim::simd {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
    Isa isa;
    const char* name;
    // out = a * x + y
    void (*axpy)(double a, const double* x, const double* y, double* out, std::size_t n);
    // out = a * x
    void (*scale)(double a, const double* x, double* out, std::size_t n);
    // out = x / d
    void (*div)(const double* x, double d, double* out, std::size_t n);
    void (*add)(const double* x, const double* y, double* out, std::size_t n);
    void (*sub)(const double* x, const double* y, double* out, std::size_t n);
    double (*dot)(const double* x, const double* y, std::size_t n);
    double (*sum_sq)(const double* x, std::size_t n);
    double (*max_abs_diff)(const double* x, const double* y, std::size_t n);
};

bool isa_supported(Isa isa);

// Best ISA available on this CPU, honouring FEDMIM_SIMD=scalar|avx2|neon.
Isa detect_best();

const KernelTable& kernels_for(Isa isa);

// Active table used by ParamVector operations.
const KernelTable& kernels();

// Switches the active table. Throws std::invalid_argument if unsupported.
void force_isa(Isa isa);

std::string_view isa_name(Isa isa);

}  // namespace fedmim::simd
