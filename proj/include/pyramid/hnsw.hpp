#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "pyramid/metric.hpp"
#include "pyramid/types.hpp"

namespace pyramid {

struct SearchParams {
    int l = 100;          // beam width for the bottom layer
    int k = 10;           // result count
    std::size_t max_evals = 0;  // 0 = unlimited similarity computations
};

struct SearchStats {
    std::size_t score_evals = 0;
};

struct Candidate {
    ItemId id;
    double score;
};

/// Returns floor(-ln(uniform_draw) * level_norm); the layer a new item
/// reaches under the exponential layer distribution.
int draw_level(double uniform_draw, double level_norm);

/// Multi-layer proximity graph. Layer 0 holds every item; upper layers
/// hold exponentially thinning subsets used for coarse navigation.
///
/// Build mutates the graph (single writer). Once construction is done
/// the graph is immutable and searches may run concurrently.
class HnswGraph {
public:
    HnswGraph() = default;
    HnswGraph(MetricKind metric, std::size_t dim, int M = 16, int M0 = 32);

    /// Inserts one item. Layers are drawn from `rng`; neighbor search uses
    /// beam width `build_l`. Throws DuplicateIdError / DimensionError.
    void insert(ItemId id, std::span<const float> x, int build_l, std::mt19937_64& rng);

    /// Sequential-insert construction, deterministic given `seed`.
    static HnswGraph build(const std::vector<ItemId>& ids, const std::vector<float>& data,
                           std::size_t dim, MetricKind metric, int M = 16, int M0 = 32,
                           int build_l = 100, std::uint64_t seed = 0);

    /// Greedy descent through the upper layers, then a beam of width p.l on
    /// layer 0; returns the top p.k hits sorted best-first.
    QueryResult search(std::span<const float> q, const SearchParams& p,
                       SearchStats* stats = nullptr) const;

    /// One-layer graph walk from the given entry candidates. Exposed for
    /// tests and for callers that drive the descent themselves.
    std::vector<Candidate> search_level(int level, std::span<const float> q,
                                        std::span<const Candidate> entries, int factor) const;

    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    std::size_t dim() const { return dim_; }
    MetricKind metric() const { return metric_; }
    int max_layer() const { return max_layer_; }
    int degree_cap(int layer) const { return layer == 0 ? M0_ : M_; }
    int m() const { return M_; }
    int m0() const { return M0_; }

    bool contains(ItemId id) const { return index_of_.count(id) != 0; }
    ItemId entry_id() const;
    int level_of(ItemId id) const;
    std::span<const float> vector_of(ItemId id) const;
    std::vector<ItemId> ids() const;
    std::vector<ItemId> neighbors_of(ItemId id, int layer) const;
    std::vector<ItemId> layer_ids(int layer) const;

    /// Bottom-layer adjacency as (u, v) pairs with u < v, for partitioning.
    std::vector<std::pair<ItemId, ItemId>> bottom_layer_edges() const;

    void save(const std::filesystem::path& path) const;
    static HnswGraph load(const std::filesystem::path& path);
    void save(std::ostream& os) const;
    static HnswGraph load(std::istream& is);

    /// Re-checks the structural invariants; throws FormatError on violation.
    void validate() const;

private:
    struct Node {
        ItemId id;
        // links[t] = out-neighbors (internal indices) at layer t; size() - 1
        // is the node's top layer.
        std::vector<std::vector<std::uint32_t>> links;
    };

    struct Scratch;

    std::uint32_t must_index(ItemId id) const;
    std::span<const float> vec(std::uint32_t idx) const {
        return {data_.data() + std::size_t(idx) * dim_, dim_};
    }
    double scored(std::uint32_t idx, std::span<const float> q, Scratch& s) const;
    void walk_level(int level, std::span<const float> q, std::vector<Candidate>& beam,
                    int factor, Scratch& s) const;
    void prune_node(std::uint32_t idx, int layer);

    MetricKind metric_ = MetricKind::EuclideanNeg;
    std::size_t dim_ = 0;
    int M_ = 16;
    int M0_ = 32;
    double level_norm_ = 0.0;
    int max_layer_ = 0;
    std::uint32_t entry_ = 0;
    std::vector<Node> nodes_;
    std::vector<float> data_;
    std::unordered_map<ItemId, std::uint32_t> index_of_;
};

}  // namespace pyramid
