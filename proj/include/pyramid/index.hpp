#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pyramid/hnsw.hpp"
#include "pyramid/kmeans.hpp"
#include "pyramid/metric.hpp"
#include "pyramid/partition.hpp"
#include "pyramid/vecio.hpp"

namespace pyramid {

struct IndexParams {
    std::size_t n_prime = 0;   // sample size
    std::size_t m = 0;         // meta-HNSW size (kmeans centers)
    std::size_t w = 1;         // shard count
    double epsilon = 0.05;     // balance slack
    int kmeans_iters = 25;
    std::size_t r = 0;         // MIPS replication factor
    std::uint64_t seed = 0;
    int M = 16;
    int M0 = 32;
    int build_l = 100;
    int assign_l = 50;  // meta search factor during assignment / routing
};

/// Meta-HNSW over kmeans centers plus the balanced partition of its bottom
/// layer. Center ids are 0..m-1. Immutable after build.
struct MetaIndex {
    HnswGraph meta_graph;
    std::vector<std::uint32_t> partition_of;  // center id -> partition in [0, w)
    std::vector<double> center_weights;
    std::size_t w = 0;
};

struct Shard {
    std::uint32_t shard_id = 0;
    std::vector<ItemId> item_ids;  // sorted ascending
    HnswGraph sub_hnsw;            // indexes exactly item_ids
};

/// Uniform sample of n_prime row indices without replacement.
std::vector<std::size_t> sample_dataset(std::size_t n, std::size_t n_prime,
                                        std::uint64_t seed);

/// Balanced edge-cut partition of the meta graph's bottom layer; optional
/// weight override replaces the kmeans-count weights (hot-item weighting).
std::vector<std::uint32_t> partition_bottom_layer(const HnswGraph& meta_graph,
                                                  const std::vector<double>& center_weights,
                                                  std::size_t w, double epsilon,
                                                  std::uint64_t seed);

/// Shard of each dataset row: the partition of its top-1 meta neighbor.
std::vector<std::uint32_t> assign_items(const Dataset& dataset, const MetaIndex& meta,
                                        int assign_l);

/// Exact brute-force top-r inner-product items per meta center.
std::vector<std::vector<ItemId>> top_r_mips(const KmeansResult& centers,
                                            const Dataset& dataset, std::size_t r);

/// A built two-level index: naive indexes carry no meta graph and fan out
/// to every shard.
class PyramidIndex {
public:
    MetricKind metric = MetricKind::EuclideanNeg;
    std::size_t dim = 0;
    bool has_meta = false;
    MetaIndex meta;
    std::vector<Shard> shards;
    IndexParams params;

    std::size_t w() const { return shards.size(); }

    /// Shards worth contacting for q: partitions of the top-K meta
    /// neighbors (every shard for naive indexes). Sorted, non-empty.
    std::vector<std::uint32_t> route(std::span<const float> q, std::size_t K,
                                     int meta_l = 0) const;

    /// In-process scatter-gather over the routed shards.
    QueryResult search(std::span<const float> q, std::size_t K, const SearchParams& p,
                       SearchStats* stats = nullptr, std::size_t* shards_touched = nullptr) const;

    void save(const std::filesystem::path& dir) const;
    static PyramidIndex load(const std::filesystem::path& dir);
    /// Manifest + meta graph only (no shard data); enough to route().
    static PyramidIndex load_meta(const std::filesystem::path& dir);
    static std::map<std::string, std::string> read_manifest(const std::filesystem::path& dir);
};

PyramidIndex build_index(const Dataset& dataset, MetricKind metric, const IndexParams& params);
PyramidIndex build_index_mips(const Dataset& dataset, const IndexParams& params);
PyramidIndex build_index_naive(const Dataset& dataset, MetricKind metric,
                               const IndexParams& params);

}  // namespace pyramid
