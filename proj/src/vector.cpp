#include "fedmim/vector.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fedmim/simd.hpp"

namespace fedmim {
namespace {

void require_same_dim(const ParamVector& x, const ParamVector& y, const char* op) {
    if (x.dim() != y.dim()) {
        throw std::invalid_argument(std::string(op) + ": dimension mismatch (" + std::to_string(x.dim()) +
                                    " vs " + std::to_string(y.dim()) + ")");
    }
}

}  // namespace

bool ParamVector::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
    require_same_dim(x, y, "axpy");
    ParamVector out(x.dim());
    simd::kernels().axpy(a, x.data(), y.data(), out.data(), x.dim());
    return out;
}

ParamVector scaled(double a, const ParamVector& x) {
    ParamVector out(x.dim());
    simd::kernels().scale(a, x.data(), out.data(), x.dim());
    return out;
}

ParamVector add(const ParamVector& x, const ParamVector& y) {
    require_same_dim(x, y, "add");
    ParamVector out(x.dim());
    simd::kernels().add(x.data(), y.data(), out.data(), x.dim());
    return out;
}

ParamVector sub(const ParamVector& x, const ParamVector& y) {
    require_same_dim(x, y, "sub");
    ParamVector out(x.dim());
    simd::kernels().sub(x.data(), y.data(), out.data(), x.dim());
    return out;
}

void axpy_inplace(double a, const ParamVector& x, ParamVector& y) {
    require_same_dim(x, y, "axpy_inplace");
    simd::kernels().axpy(a, x.data(), y.data(), y.data(), x.dim());
}

void add_inplace(const ParamVector& x, ParamVector& y) {
    require_same_dim(x, y, "add_inplace");
    simd::kernels().add(x.data(), y.data(), y.data(), x.dim());
}

double dot(const ParamVector& x, const ParamVector& y) {
    require_same_dim(x, y, "dot");
    return simd::kernels().dot(x.data(), y.data(), x.dim());
}

double l2_norm_sq(const ParamVector& x) {
    return simd::kernels().sum_sq(x.data(), x.dim());
}

double max_abs_diff(const ParamVector& x, const ParamVector& y) {
    require_same_dim(x, y, "max_abs_diff");
    return simd::kernels().max_abs_diff(x.data(), y.data(), x.dim());
}

namespace {

// Fixed-shape pairwise summation: the tree depends only on the count, so the
// result is reproducible and exact for 2^k identical copies.
ParamVector pairwise_sum(std::span<const ParamVector> vs) {
    if (vs.size() == 1) {
        return vs.front();
    }
    const std::size_t half = vs.size() / 2;
    ParamVector left = pairwise_sum(vs.first(half));
    add_inplace(pairwise_sum(vs.subspan(half)), left);
    return left;
}

}  // namespace

ParamVector mean(std::span<const ParamVector> vs) {
    if (vs.empty()) {
        throw std::invalid_argument("mean: empty list");
    }
    ParamVector acc = pairwise_sum(vs);
    simd::kernels().div(acc.data(), static_cast<double>(vs.size()), acc.data(), acc.dim());
    return acc;
}

}  // namespace fedmim
