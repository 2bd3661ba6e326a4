#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pyramid/metric.hpp"
#include "pyramid/types.hpp"
#include "pyramid/vecio.hpp"

namespace pyramid {

/// Exact top-k per query under a stated metric, ids sorted by descending
/// score with ties broken by lower id.
struct GroundTruth {
    std::size_t k = 0;
    std::vector<QueryResult> entries;
};

GroundTruth ground_truth(const Dataset& dataset, const Dataset& queries, std::size_t k,
                         MetricKind metric);

/// k'/k where k' = |result ids  ∩ truth top-k ids|.
double precision(const QueryResult& result, const QueryResult& truth, std::size_t k);

/// Global top-k over the union of partial results; duplicate ids keep their
/// best score, ties broken by lower id.
QueryResult merge_partials(const std::vector<QueryResult>& partials, std::size_t k);

/// Per-norm-percentile-bucket share of exact top-k MIPS results (no dedup
/// across queries). buckets[0] = lowest norms, buckets.back() = highest.
std::vector<double> mips_norm_bias(const Dataset& dataset, const Dataset& queries,
                                   std::size_t k, std::size_t buckets);

}  // namespace pyramid
