#pragma once

// Label-skewed client partitioning. Each client draws its label mix from a
// Dirichlet distribution centred on the global class prior; clients hold equal
// sample counts. Smaller concentration means more skew.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedmim/rng.hpp"

namespace fedmim {

class PartitionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PartitionSpec {
    std::vector<int> labels;  // class ids 0..C-1
    std::size_t num_clients = 1;
    std::optional<double> concentration;  // nullopt = IID split
};

struct Partition {
    std::vector<std::vector<std::size_t>> client_indices;  // ascending per client
    // proportions[i][c]: label mix drawn for client i. Empty for IID splits.
    std::vector<std::vector<double>> proportions;
};

// Integer apportionment of `total` by `weights` (Hamilton / largest remainder).
// Ties go to the lower index. Sum of the result is exactly `total`.
std::vector<std::size_t> largest_remainder(std::span<const double> weights, std::size_t total);

// Splits n samples over num_clients as evenly as possible, extras to low ids.
std::vector<std::size_t> equal_sizes(std::size_t n, std::size_t num_clients);

// q_i ~ Dirichlet(concentration * class_prior) for each client.
std::vector<std::vector<double>> draw_label_proportions(std::size_t num_clients, std::span<const double> class_prior,
                                                        double concentration, RngStream& rng);

// Assigns samples to clients so client i holds sizes[i] samples with class
// counts largest_remainder(proportions[i], sizes[i]). When a class pool runs
// dry the shortfall is filled from the classes the client weights most.
Partition assign_by_proportions(std::span<const int> labels, std::span<const std::size_t> sizes,
                                const std::vector<std::vector<double>>& proportions, RngStream& rng);

// Redraws up to 10 times if some client ends up empty, then throws PartitionError.
Partition dirichlet_partition(const PartitionSpec& spec, RngStream& rng);

std::size_t num_classes(std::span<const int> labels);

}  // namespace fedmim
