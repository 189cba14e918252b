#include <cmath>

#include "tables.hpp"

namespace fedmim::simd::detail {
namespace {

void axpy(double a, const double* x, const double* y, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = a * x[i] + y[i];
    }
}

void scale(double a, const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = a * x[i];
    }
}

void div(const double* x, double d, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = x[i] / d;
    }
}

void add(const double* x, const double* y, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = x[i] + y[i];
    }
}

void sub(const double* x, const double* y, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = x[i] - y[i];
    }
}

double dot(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += x[i] * y[i];
    }
    return s;
}

double sum_sq(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += x[i] * x[i];
    }
    return s;
}

double max_abs_diff(const double* x, const double* y, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = std::fabs(x[i] - y[i]);
        if (d > m || std::isnan(d)) {
            m = d;
        }
    }
    return m;
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{Isa::scalar, "scalar", axpy, scale, div, add, sub,
                                   dot, sum_sq, max_abs_diff};
    return table;
}

}  // namespace fedmim::simd::detail
