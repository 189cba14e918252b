#pragma once

// Dense parameter vectors. Every model, gradient, momentum and increment in
// the simulator is a ParamVector; arithmetic goes through the runtime-selected
// SIMD kernel table.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace fedmim {

class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
    explicit ParamVector(std::vector<double> data) : data_(std::move(data)) {}
    ParamVector(std::initializer_list<double> values) : data_(values) {}

    std::size_t dim() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    std::span<const double> values() const { return data_; }
    std::span<double> values() { return data_; }
    const double* data() const { return data_.data(); }
    double* data() { return data_.data(); }

    bool all_finite() const;

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

private:
    std::vector<double> data_;
};

// Returns a * x + y. Throws std::invalid_argument on dimension mismatch.
ParamVector axpy(double a, const ParamVector& x, const ParamVector& y);
ParamVector scaled(double a, const ParamVector& x);
ParamVector add(const ParamVector& x, const ParamVector& y);
ParamVector sub(const ParamVector& x, const ParamVector& y);

// y += a * x
void axpy_inplace(double a, const ParamVector& x, ParamVector& y);
// y += x
void add_inplace(const ParamVector& x, ParamVector& y);

double dot(const ParamVector& x, const ParamVector& y);
double l2_norm_sq(const ParamVector& x);
double max_abs_diff(const ParamVector& x, const ParamVector& y);

// Arithmetic mean, summed in list order then divided by the count. Callers
// fix the order (ascending client id) so the result bits are reproducible.
// Throws std::invalid_argument for an empty list.
ParamVector mean(std::span<const ParamVector> vs);

}  // namespace fedmim
