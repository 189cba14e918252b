#pragma once

// Path-keyed random streams. A stream is fully determined by a master seed
// and a path of integers (round, client, purpose, ...), so the draws a client
// sees do not depend on which thread runs it or in what order.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fedmim {

enum class RngPurpose : std::uint64_t {
    client_sampling = 0,
    batch_sampling = 1,
    data_synthesis = 2,
};

std::uint64_t splitmix64(std::uint64_t x);

class RngStream {
public:
    using result_type = std::mt19937_64::result_type;

    RngStream(std::uint64_t master_seed, std::vector<std::uint64_t> path);

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    // Independent sub-stream with `tag` appended to the path.
    RngStream child(std::uint64_t tag) const;

    double uniform01();
    double normal();
    std::size_t uniform_index(std::size_t n);

    std::uint64_t master_seed() const { return master_; }
    const std::vector<std::uint64_t>& path() const { return path_; }

private:
    std::uint64_t master_;
    std::vector<std::uint64_t> path_;
    std::mt19937_64 engine_;
};

RngStream derive_rng(std::uint64_t master, std::uint64_t round, std::uint64_t client, RngPurpose purpose);
RngStream derive_rng(std::uint64_t master, std::uint64_t round, std::uint64_t client, std::uint64_t purpose);

}  // namespace fedmim
