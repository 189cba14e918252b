// Built with -mavx2 (no FMA, so elementwise rounding matches the scalar path).
// Only reached through the dispatcher after a CPUID check.

#include <immintrin.h>

#include <cmath>

#include "tables.hpp"

namespace fedmim::simd::detail {
namespace {

void axpy(double a, const double* x, const double* y, double* out, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d vx = _mm256_loadu_pd(x + i);
        const __m256d vy = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_mul_pd(va, vx), vy));
    }
    for (; i < n; ++i) {
        out[i] = a * x[i] + y[i];
    }
}

void scale(double a, const double* x, double* out, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) {
        out[i] = a * x[i];
    }
}

void div(const double* x, double d, double* out, std::size_t n) {
    const __m256d vd = _mm256_set1_pd(d);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_div_pd(_mm256_loadu_pd(x + i), vd));
    }
    for (; i < n; ++i) {
        out[i] = x[i] / d;
    }
}

void add(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) {
        out[i] = x[i] + y[i];
    }
}

void sub(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) {
        out[i] = x[i] - y[i];
    }
}

double hsum(__m256d v) {
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, v);
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

double dot(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) {
        s += x[i] * y[i];
    }
    return s;
}

double sum_sq(const double* x, std::size_t n) {
    return dot(x, x, n);
}

double max_abs_diff(const double* x, const double* y, std::size_t n) {
    const __m256d sign_mask = _mm256_set1_pd(-0.0);
    __m256d m = _mm256_setzero_pd();
    __m256d nan_seen = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_andnot_pd(sign_mask, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        nan_seen = _mm256_or_pd(nan_seen, _mm256_cmp_pd(d, d, _CMP_UNORD_Q));
        m = _mm256_max_pd(m, d);
    }
    if (_mm256_movemask_pd(nan_seen) != 0) {
        return std::nan("");
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, m);
    double r = lanes[0];
    for (int k = 1; k < 4; ++k) {
        r = lanes[k] > r ? lanes[k] : r;
    }
    for (; i < n; ++i) {
        const double d = std::fabs(x[i] - y[i]);
        if (d > r || std::isnan(d)) {
            r = d;
        }
    }
    return r;
}

}  // namespace

const KernelTable& avx2_table() {
    static const KernelTable table{Isa::avx2, "avx2", axpy, scale, div, add, sub,
                                   dot, sum_sq, max_abs_diff};
    return table;
}

}  // namespace fedmim::simd::detail
