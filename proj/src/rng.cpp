#include "fedmim/rng.hpp"

namespace fedmim {
namespace {

std::uint64_t seed_from_path(std::uint64_t master, const std::vector<std::uint64_t>& path) {
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t p : path) {
        h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    }
    return h;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t master_seed, std::vector<std::uint64_t> path)
    : master_(master_seed), path_(std::move(path)), engine_(seed_from_path(master_, path_)) {}

RngStream RngStream::child(std::uint64_t tag) const {
    auto p = path_;
    p.push_back(tag);
    return RngStream(master_, std::move(p));
}

double RngStream::uniform01() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double RngStream::normal() {
    return std::normal_distribution<double>(0.0, 1.0)(engine_);
}

std::size_t RngStream::uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

RngStream derive_rng(std::uint64_t master, std::uint64_t round, std::uint64_t client, std::uint64_t purpose) {
    return RngStream(master, {round, client, purpose});
}

RngStream derive_rng(std::uint64_t master, std::uint64_t round, std::uint64_t client, RngPurpose purpose) {
    return derive_rng(master, round, client, static_cast<std::uint64_t>(purpose));
}

}  // namespace fedmim
