#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "pyramid/coordinator.hpp"
#include "pyramid/eval.hpp"
#include "pyramid/index.hpp"
#include "pyramid/vecio.hpp"

namespace pyramid {

struct BenchOptions {
    std::size_t K = 1;
    int k = 10;
    int search_l = 100;
    int concurrency = 1;
    double duration_s = 0;  // 0 = exactly one pass over the query set
    int timeout_ms = 100;   // cluster gather timeout per query
};

struct BenchReport {
    std::size_t queries = 0;
    std::size_t failed = 0;
    double precision_mean = 0;    // NaN-free: 0 when no ground truth given
    double access_rate_mean = 0;  // mean routed shards / w
    double throughput_qps = 0;
    double latency_p50_ms = 0;
    double latency_p90_ms = 0;
    double distance_computations_per_query = 0;  // 0 in cluster mode (not measured)
    std::map<std::string, std::string> config;   // echo of the run parameters

    void write_keyvalue(std::ostream& os) const;
    /// One-row CSV with a header, machine readable.
    void write_csv(const std::filesystem::path& path) const;
};

/// Replays the query set against an in-process index with `concurrency`
/// worker threads; precision requires ground truth for the same metric/k.
BenchReport run_benchmark_local(const PyramidIndex& index, const Dataset& queries,
                                const GroundTruth* truth, const BenchOptions& opts);

/// Same measurement against a live cluster through one coordinator.
BenchReport run_benchmark_cluster(Coordinator& coordinator, const Dataset& queries,
                                  const GroundTruth* truth, const BenchOptions& opts);

}  // namespace pyramid
