#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pyramid/errors.hpp"

namespace pyramid {

/// Undirected vertex-weighted graph on vertices 0..n-1.
struct WeightedGraph {
    std::size_t n = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    std::vector<double> weights;  // size n, all >= 0
};

/// Number of edges crossing partitions under `parts`.
std::size_t cut_size(const WeightedGraph& g, const std::vector<std::uint32_t>& parts);

/// Balanced edge-cut partitioning into w parts: greedy region growing from
/// spread seeds plus refined random starts, each improved by single-vertex
/// move refinement until no move reduces the cut within the balance cap
/// weight(p) <= (1 + epsilon) * total / w.
///
/// Every part is non-empty and within the cap on success. Throws
/// BalanceInfeasibleError when no start can be balanced (in particular when
/// a single vertex outweighs the cap).
std::vector<std::uint32_t> partition_graph(const WeightedGraph& g, std::size_t w,
                                           double epsilon, std::uint64_t seed);

}  // namespace pyramid
