#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "fedmim/simd.hpp"

using namespace fedmim::simd;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& g) {
    std::normal_distribution<double> nd(0.0, 3.0);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = nd(g);
    }
    return v;
}

std::vector<Isa> supported_simd() {
    std::vector<Isa> out;
    for (Isa isa : {Isa::avx2, Isa::neon}) {
        if (isa_supported(isa)) {
            out.push_back(isa);
        }
    }
    return out;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("scalar table is always available") {
    CHECK(isa_supported(Isa::scalar));
    CHECK(kernels_for(Isa::scalar).isa == Isa::scalar);
    CHECK(isa_name(Isa::avx2) == "avx2");
}

TEST_CASE("unsupported isa is rejected") {
    for (Isa isa : {Isa::avx2, Isa::neon}) {
        if (!isa_supported(isa)) {
            CHECK_THROWS_AS(kernels_for(isa), std::invalid_argument);
            CHECK_THROWS_AS(force_isa(isa), std::invalid_argument);
        }
    }
}

TEST_CASE("elementwise kernels match the scalar reference bit for bit") {
    const auto& ref = kernels_for(Isa::scalar);
    std::mt19937_64 g(11);
    for (Isa isa : supported_simd()) {
        const auto& k = kernels_for(isa);
        // odd lengths exercise the tails
        for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 17u, 64u, 1001u}) {
            const auto x = random_vec(n, g);
            const auto y = random_vec(n, g);
            std::vector<double> a(n), b(n);
            ref.axpy(-1.7, x.data(), y.data(), a.data(), n);
            k.axpy(-1.7, x.data(), y.data(), b.data(), n);
            CHECK(same_bits(a, b));
            ref.scale(0.3, x.data(), a.data(), n);
            k.scale(0.3, x.data(), b.data(), n);
            CHECK(same_bits(a, b));
            ref.div(x.data(), 7.0, a.data(), n);
            k.div(x.data(), 7.0, b.data(), n);
            CHECK(same_bits(a, b));
            ref.add(x.data(), y.data(), a.data(), n);
            k.add(x.data(), y.data(), b.data(), n);
            CHECK(same_bits(a, b));
            ref.sub(x.data(), y.data(), a.data(), n);
            k.sub(x.data(), y.data(), b.data(), n);
            CHECK(same_bits(a, b));
            CHECK(ref.max_abs_diff(x.data(), y.data(), n) == k.max_abs_diff(x.data(), y.data(), n));
        }
    }
}

TEST_CASE("reductions agree with the scalar reference to rounding") {
    const auto& ref = kernels_for(Isa::scalar);
    std::mt19937_64 g(12);
    for (Isa isa : supported_simd()) {
        const auto& k = kernels_for(isa);
        for (std::size_t n : {1u, 5u, 16u, 333u, 4096u}) {
            const auto x = random_vec(n, g);
            const auto y = random_vec(n, g);
            double abs_sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                abs_sum += std::fabs(x[i] * y[i]);
            }
            CHECK(std::fabs(ref.dot(x.data(), y.data(), n) - k.dot(x.data(), y.data(), n)) <=
                  1e-14 * abs_sum + 1e-300);
            const double s = ref.sum_sq(x.data(), n);
            CHECK(std::fabs(s - k.sum_sq(x.data(), n)) <= 1e-14 * s);
        }
    }
}

TEST_CASE("max_abs_diff propagates NaN in every table") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> x{1.0, 2.0, nan, 4.0, 5.0, 6.0};
    std::vector<double> y(6, 0.0);
    CHECK(std::isnan(kernels_for(Isa::scalar).max_abs_diff(x.data(), y.data(), 6)));
    for (Isa isa : supported_simd()) {
        CHECK(std::isnan(kernels_for(isa).max_abs_diff(x.data(), y.data(), 6)));
    }
}

TEST_CASE("force_isa switches the active table") {
    const Isa before = kernels().isa;
    force_isa(Isa::scalar);
    CHECK(kernels().isa == Isa::scalar);
    force_isa(before);
    CHECK(kernels().isa == before);
}
