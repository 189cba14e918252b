#include "fedmim/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace fedmim {

std::size_t num_classes(std::span<const int> labels) {
    int hi = -1;
    for (int l : labels) {
        if (l < 0) {
            throw PartitionError("negative class label " + std::to_string(l));
        }
        hi = std::max(hi, l);
    }
    return static_cast<std::size_t>(hi + 1);
}

std::vector<std::size_t> largest_remainder(std::span<const double> weights, std::size_t total) {
    std::vector<std::size_t> out(weights.size(), 0);
    if (weights.empty()) {
        return out;
    }
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(wsum > 0.0)) {
        throw std::invalid_argument("largest_remainder: weights must have positive sum");
    }
    std::vector<double> frac(weights.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double quota = weights[i] / wsum * static_cast<double>(total);
        const double fl = std::floor(quota);
        out[i] = static_cast<std::size_t>(fl);
        frac[i] = quota - fl;
        assigned += out[i];
    }
    // Guard against floors overshooting through rounding.
    while (assigned > total) {
        auto it = std::max_element(out.begin(), out.end());
        --*it;
        --assigned;
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size()) {
        ++out[order[k]];
        ++assigned;
    }
    return out;
}

std::vector<std::size_t> equal_sizes(std::size_t n, std::size_t num_clients) {
    std::vector<std::size_t> sizes(num_clients, n / num_clients);
    for (std::size_t i = 0; i < n % num_clients; ++i) {
        ++sizes[i];
    }
    return sizes;
}

std::vector<std::vector<double>> draw_label_proportions(std::size_t num_clients, std::span<const double> class_prior,
                                                        double concentration, RngStream& rng) {
    if (!(concentration > 0.0)) {
        throw std::invalid_argument("Dirichlet concentration must be positive");
    }
    std::vector<std::vector<double>> q(num_clients, std::vector<double>(class_prior.size(), 0.0));
    for (std::size_t i = 0; i < num_clients; ++i) {
        double total = 0.0;
        for (std::size_t c = 0; c < class_prior.size(); ++c) {
            if (class_prior[c] <= 0.0) {
                continue;
            }
            q[i][c] = std::gamma_distribution<double>(concentration * class_prior[c], 1.0)(rng);
            total += q[i][c];
        }
        if (total > 0.0) {
            for (double& v : q[i]) {
                v /= total;
            }
        } else {
            // Every gamma draw underflowed: fall back to a one-hot mix drawn from the prior.
            std::discrete_distribution<std::size_t> pick(class_prior.begin(), class_prior.end());
            q[i][pick(rng)] = 1.0;
        }
    }
    return q;
}

Partition assign_by_proportions(std::span<const int> labels, std::span<const std::size_t> sizes,
                                const std::vector<std::vector<double>>& proportions, RngStream& rng) {
    const std::size_t n_clients = sizes.size();
    const std::size_t n_cls = num_classes(labels);
    if (proportions.size() != n_clients) {
        throw std::invalid_argument("assign_by_proportions: one proportion row per client required");
    }
    if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != labels.size()) {
        throw std::invalid_argument("assign_by_proportions: client sizes must sum to the sample count");
    }

    std::vector<std::vector<std::size_t>> pools(n_cls);
    for (std::size_t s = 0; s < labels.size(); ++s) {
        pools[static_cast<std::size_t>(labels[s])].push_back(s);
    }
    for (auto& pool : pools) {
        std::shuffle(pool.begin(), pool.end(), rng);
    }
    std::vector<std::size_t> cursor(n_cls, 0);
    auto remaining = [&](std::size_t c) { return pools[c].size() - cursor[c]; };

    Partition part;
    part.client_indices.resize(n_clients);
    part.proportions = proportions;

    std::vector<std::size_t> shortfall(n_clients, 0);
    for (std::size_t i = 0; i < n_clients; ++i) {
        if (proportions[i].size() != n_cls) {
            throw std::invalid_argument("assign_by_proportions: proportion row has wrong class count");
        }
        const auto want = largest_remainder(proportions[i], sizes[i]);
        for (std::size_t c = 0; c < n_cls; ++c) {
            const std::size_t take = std::min(want[c], remaining(c));
            for (std::size_t k = 0; k < take; ++k) {
                part.client_indices[i].push_back(pools[c][cursor[c]++]);
            }
            shortfall[i] += want[c] - take;
        }
    }
    for (std::size_t i = 0; i < n_clients; ++i) {
        std::vector<std::size_t> order(n_cls);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return proportions[i][a] > proportions[i][b]; });
        for (std::size_t c : order) {
            while (shortfall[i] > 0 && remaining(c) > 0) {
                part.client_indices[i].push_back(pools[c][cursor[c]++]);
                --shortfall[i];
            }
        }
    }
    for (auto& idx : part.client_indices) {
        std::sort(idx.begin(), idx.end());
    }
    return part;
}

Partition dirichlet_partition(const PartitionSpec& spec, RngStream& rng) {
    if (spec.num_clients == 0) {
        throw PartitionError("num_clients must be at least 1");
    }
    const std::size_t n = spec.labels.size();
    const auto sizes = equal_sizes(n, spec.num_clients);

    if (!spec.concentration) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Partition part;
        part.client_indices.resize(spec.num_clients);
        std::size_t pos = 0;
        for (std::size_t i = 0; i < spec.num_clients; ++i) {
            part.client_indices[i].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                                          perm.begin() + static_cast<std::ptrdiff_t>(pos + sizes[i]));
            std::sort(part.client_indices[i].begin(), part.client_indices[i].end());
            pos += sizes[i];
        }
        if (n < spec.num_clients) {
            throw PartitionError("client " + std::to_string(n) + " received no samples");
        }
        return part;
    }

    const std::size_t n_cls = num_classes(spec.labels);
    std::vector<double> prior(n_cls, 0.0);
    for (int l : spec.labels) {
        prior[static_cast<std::size_t>(l)] += 1.0 / static_cast<double>(n);
    }

    constexpr int kMaxRetries = 10;
    for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
        auto q = draw_label_proportions(spec.num_clients, prior, *spec.concentration, rng);
        auto part = assign_by_proportions(spec.labels, sizes, q, rng);
        const auto empty = std::find_if(part.client_indices.begin(), part.client_indices.end(),
                                        [](const auto& idx) { return idx.empty(); });
        if (empty == part.client_indices.end()) {
            return part;
        }
        if (attempt == kMaxRetries) {
            throw PartitionError("client " + std::to_string(empty - part.client_indices.begin()) +
                                 " received no samples after " + std::to_string(kMaxRetries) + " retries");
        }
    }
    throw PartitionError("unreachable");
}

}  // namespace fedmim
