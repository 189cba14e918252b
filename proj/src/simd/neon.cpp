#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

#include "tables.hpp"

namespace fedmim::simd::detail {
namespace {

void axpy(double a, const double* x, const double* y, double* out, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        // vmulq + vaddq rather than vfmaq: keeps rounding identical to scalar.
        vst1q_f64(out + i, vaddq_f64(vmulq_f64(va, vld1q_f64(x + i)), vld1q_f64(y + i)));
    }
    for (; i < n; ++i) {
        out[i] = a * x[i] + y[i];
    }
}

void scale(double a, const double* x, double* out, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) {
        out[i] = a * x[i];
    }
}

void div(const double* x, double d, double* out, std::size_t n) {
    const float64x2_t vd = vdupq_n_f64(d);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vdivq_f64(vld1q_f64(x + i), vd));
    }
    for (; i < n; ++i) {
        out[i] = x[i] / d;
    }
}

void add(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    }
    for (; i < n; ++i) {
        out[i] = x[i] + y[i];
    }
}

void sub(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    }
    for (; i < n; ++i) {
        out[i] = x[i] - y[i];
    }
}

double dot(const double* x, const double* y, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vaddq_f64(acc0, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
        acc1 = vaddq_f64(acc1, vmulq_f64(vld1q_f64(x + i + 2), vld1q_f64(y + i + 2)));
    }
    double s = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) {
        s += x[i] * y[i];
    }
    return s;
}

double sum_sq(const double* x, std::size_t n) {
    return dot(x, x, n);
}

double max_abs_diff(const double* x, const double* y, std::size_t n) {
    double r = 0.0;
    std::size_t i = 0;
    float64x2_t m = vdupq_n_f64(0.0);
    bool nan_seen = false;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t d = vabdq_f64(vld1q_f64(x + i), vld1q_f64(y + i));
        nan_seen |= vminvq_u64(vceqq_f64(d, d)) == 0;
        m = vmaxnmq_f64(m, d);
    }
    if (nan_seen) {
        return std::nan("");
    }
    r = vmaxnmvq_f64(m);
    for (; i < n; ++i) {
        const double d = std::fabs(x[i] - y[i]);
        if (d > r || std::isnan(d)) {
            r = d;
        }
    }
    return r;
}

}  // namespace

const KernelTable& neon_table() {
    static const KernelTable table{Isa::neon, "neon", axpy, scale, div, add, sub,
                                   dot, sum_sq, max_abs_diff};
    return table;
}

}  // namespace fedmim::simd::detail

#endif
