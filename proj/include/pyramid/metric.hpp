#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pyramid/errors.hpp"

namespace pyramid {

/// Similarity kinds. All of them are "larger is more similar":
/// Euclidean is exposed as negative distance so one graph-walk engine
/// serves every kind. Angular assumes pre-normalized data and is a
/// plain dot product at query time.
enum class MetricKind : std::uint8_t {
    EuclideanNeg = 0,
    Angular = 1,
    InnerProduct = 2,
};

std::string to_string(MetricKind m);
MetricKind metric_from_string(const std::string& s);

/// Similarity between q and x. Accumulates in double, stores in float.
/// Throws DimensionError on mismatched dimensions.
double score(MetricKind metric, std::span<const float> q, std::span<const float> x);

double l2_norm(std::span<const float> x);

/// x / ||x||. Throws ZeroNormError when ||x|| == 0.
std::vector<float> normalize(std::span<const float> x);

/// In-place variant used when normalizing whole datasets.
void normalize_in_place(std::span<float> x);

}  // namespace pyramid
