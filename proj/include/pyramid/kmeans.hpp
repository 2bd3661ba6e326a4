#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pyramid/metric.hpp"

namespace pyramid {

struct KmeansResult {
    std::size_t m = 0;
    std::size_t dim = 0;
    std::vector<float> centers;       // m x dim, row major
    std::vector<std::uint32_t> assignment;  // per input point, best center
    double objective = 0.0;           // within-cluster sum of squared distances

    std::span<const float> center(std::size_t c) const {
        return {centers.data() + c * dim, dim};
    }
};

/// Lloyd iterations from k-means++ seeding. Empty clusters are re-seeded
/// to the point farthest from its current center. Deterministic given seed.
KmeansResult kmeans(std::span<const float> points, std::size_t n, std::size_t dim,
                    std::size_t m, int iters, std::uint64_t seed);

/// Spherical variant: assignment by max dot product, centers are normalized
/// cluster means so every center has unit norm. Callers pass unit-norm points.
KmeansResult spherical_kmeans(std::span<const float> points, std::size_t n, std::size_t dim,
                              std::size_t m, int iters, std::uint64_t seed);

/// weight[c] = number of sample points whose best center is c under `metric`.
std::vector<double> weight_centers(const KmeansResult& centers, std::span<const float> sample,
                                   std::size_t n, MetricKind metric);

}  // namespace pyramid
