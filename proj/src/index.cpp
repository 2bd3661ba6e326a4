#include "pyramid/index.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "pyramid/eval.hpp"
#include "pyramid/parallel.hpp"

namespace pyramid {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed ^ (tag * 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("truncated index file", 0);
    return v;
}

Dataset normalized_copy(const Dataset& ds) {
    Dataset out = ds;
    for (std::size_t i = 0; i < out.count; ++i) normalize_in_place(out.row(i));
    return out;
}

std::vector<Shard> build_shards(const Dataset& vectors_source,
                                const std::vector<std::vector<ItemId>>& ids_per_shard,
                                MetricKind metric, const IndexParams& p) {
    std::vector<Shard> shards(ids_per_shard.size());
    parallel_for(ids_per_shard.size(), [&](std::size_t s) {
        Shard& shard = shards[s];
        shard.shard_id = std::uint32_t(s);
        shard.item_ids = ids_per_shard[s];
        std::sort(shard.item_ids.begin(), shard.item_ids.end());
        if (shard.item_ids.empty()) {
            shard.sub_hnsw = HnswGraph(metric, vectors_source.dim, p.M, p.M0);
            return;
        }
        std::vector<float> vecs;
        vecs.reserve(shard.item_ids.size() * vectors_source.dim);
        for (ItemId id : shard.item_ids) {
            const auto r = vectors_source.row(std::size_t(id));
            vecs.insert(vecs.end(), r.begin(), r.end());
        }
        shard.sub_hnsw =
            HnswGraph::build(shard.item_ids, vecs, vectors_source.dim, metric, p.M, p.M0,
                             p.build_l, derive_seed(p.seed, 100 + s));
    });
    return shards;
}

MetaIndex build_meta(const KmeansResult& km, const std::vector<double>& weights,
                     MetricKind meta_metric, const IndexParams& p) {
    std::vector<ItemId> center_ids(km.m);
    std::iota(center_ids.begin(), center_ids.end(), 0);
    MetaIndex meta;
    meta.meta_graph = HnswGraph::build(center_ids, km.centers, km.dim, meta_metric, p.M, p.M0,
                                       p.build_l, derive_seed(p.seed, 1));
    meta.center_weights = weights;
    meta.w = p.w;
    meta.partition_of =
        partition_bottom_layer(meta.meta_graph, weights, p.w, p.epsilon, derive_seed(p.seed, 2));
    return meta;
}

void check_params(const Dataset& dataset, const IndexParams& p) {
    if (dataset.count == 0) throw EmptyInputError("build_index: empty dataset");
    if (p.w < 1 || p.m < p.w) throw ConfigError("build_index: need m >= w >= 1");
    if (p.n_prime < p.m) throw ConfigError("build_index: need n_prime >= m");
    if (p.epsilon <= 0.0) throw ConfigError("build_index: epsilon must be positive");
}

}  // namespace

std::vector<std::size_t> sample_dataset(std::size_t n, std::size_t n_prime,
                                        std::uint64_t seed) {
    if (n_prime > n) throw SampleTooLargeError("sample_dataset: n_prime > |dataset|");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    // partial Fisher-Yates: the first n_prime entries are the sample
    for (std::size_t i = 0; i < n_prime; ++i) {
        const std::size_t j = i + std::size_t(rng() % (n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n_prime);
    return idx;
}

std::vector<std::uint32_t> partition_bottom_layer(const HnswGraph& meta_graph,
                                                  const std::vector<double>& center_weights,
                                                  std::size_t w, double epsilon,
                                                  std::uint64_t seed) {
    WeightedGraph g;
    g.n = meta_graph.size();
    g.weights = center_weights;
    for (auto [a, b] : meta_graph.bottom_layer_edges())
        g.edges.emplace_back(std::uint32_t(a), std::uint32_t(b));
    return partition_graph(g, w, epsilon, seed);
}

std::vector<std::uint32_t> assign_items(const Dataset& dataset, const MetaIndex& meta,
                                        int assign_l) {
    if (dataset.dim != meta.meta_graph.dim())
        throw DimensionError("assign_items: dimension mismatch");
    std::vector<std::uint32_t> out(dataset.count);
    parallel_for(dataset.count, [&](std::size_t i) {
        const auto res = meta.meta_graph.search(dataset.row(i), {assign_l, 1, 0});
        out[i] = meta.partition_of[std::size_t(res.front().id)];
    });
    return out;
}

std::vector<std::vector<ItemId>> top_r_mips(const KmeansResult& centers, const Dataset& dataset,
                                            std::size_t r) {
    const std::size_t rr = std::min(r, dataset.count);
    std::vector<std::vector<ItemId>> out(centers.m);
    if (rr == 0) return out;
    parallel_for(centers.m, [&](std::size_t c) {
        QueryResult all;
        all.reserve(dataset.count);
        const auto cv = centers.center(c);
        for (std::size_t i = 0; i < dataset.count; ++i)
            all.push_back({ItemId(i), score(MetricKind::InnerProduct, cv, dataset.row(i))});
        std::partial_sort(all.begin(), all.begin() + std::ptrdiff_t(rr), all.end(), better_hit);
        for (std::size_t i = 0; i < rr; ++i) out[c].push_back(all[i].id);
    });
    return out;
}

PyramidIndex build_index(const Dataset& dataset, MetricKind metric, const IndexParams& params) {
    if (metric == MetricKind::InnerProduct)
        throw ConfigError("build_index: use build_index_mips for inner product");
    check_params(dataset, params);

    const Dataset working = metric == MetricKind::Angular ? normalized_copy(dataset) : dataset;
    const auto sample_idx = sample_dataset(working.count, params.n_prime, params.seed);
    std::vector<float> sample;
    sample.reserve(sample_idx.size() * working.dim);
    for (std::size_t i : sample_idx) {
        const auto r = working.row(i);
        sample.insert(sample.end(), r.begin(), r.end());
    }

    const auto km = kmeans(sample, sample_idx.size(), working.dim, params.m,
                           params.kmeans_iters, derive_seed(params.seed, 0));
    const auto weights =
        weight_centers(km, sample, sample_idx.size(), MetricKind::EuclideanNeg);

    PyramidIndex index;
    index.metric = metric;
    index.dim = working.dim;
    index.params = params;
    index.has_meta = true;
    index.meta = build_meta(km, weights, MetricKind::EuclideanNeg, params);

    const auto assignment = assign_items(working, index.meta, params.assign_l);
    std::vector<std::vector<ItemId>> ids(params.w);
    for (std::size_t i = 0; i < working.count; ++i)
        ids[assignment[i]].push_back(ItemId(i));
    index.shards = build_shards(working, ids, metric, params);
    return index;
}

PyramidIndex build_index_mips(const Dataset& dataset, const IndexParams& params) {
    check_params(dataset, params);

    const auto sample_idx = sample_dataset(dataset.count, params.n_prime, params.seed);
    std::vector<float> sample;
    sample.reserve(sample_idx.size() * dataset.dim);
    for (std::size_t i : sample_idx) {
        auto nrm = normalize(dataset.row(i));
        sample.insert(sample.end(), nrm.begin(), nrm.end());
    }

    const auto km = spherical_kmeans(sample, sample_idx.size(), dataset.dim, params.m,
                                     params.kmeans_iters, derive_seed(params.seed, 0));
    const auto weights =
        weight_centers(km, sample, sample_idx.size(), MetricKind::InnerProduct);

    PyramidIndex index;
    index.metric = MetricKind::InnerProduct;
    index.dim = dataset.dim;
    index.params = params;
    index.has_meta = true;
    index.meta = build_meta(km, weights, MetricKind::InnerProduct, params);

    // items assigned from the original (unnormalized) dataset
    const auto assignment = assign_items(dataset, index.meta, params.assign_l);
    std::vector<std::vector<ItemId>> ids(params.w);
    for (std::size_t i = 0; i < dataset.count; ++i)
        ids[assignment[i]].push_back(ItemId(i));

    // replicate each center's exact top-r MIPS items into its shard
    const auto replicas = top_r_mips(km, dataset, params.r);
    for (std::size_t c = 0; c < replicas.size(); ++c) {
        auto& shard_ids = ids[index.meta.partition_of[c]];
        shard_ids.insert(shard_ids.end(), replicas[c].begin(), replicas[c].end());
    }
    for (auto& shard_ids : ids) {
        std::sort(shard_ids.begin(), shard_ids.end());
        shard_ids.erase(std::unique(shard_ids.begin(), shard_ids.end()), shard_ids.end());
    }
    index.shards = build_shards(dataset, ids, MetricKind::InnerProduct, params);
    return index;
}

PyramidIndex build_index_naive(const Dataset& dataset, MetricKind metric,
                               const IndexParams& params) {
    if (dataset.count == 0) throw EmptyInputError("build_index_naive: empty dataset");
    const Dataset working = metric == MetricKind::Angular ? normalized_copy(dataset) : dataset;

    std::vector<std::size_t> perm(working.count);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(params.seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<std::vector<ItemId>> ids(params.w);
    for (std::size_t j = 0; j < perm.size(); ++j) ids[j % params.w].push_back(ItemId(perm[j]));

    PyramidIndex index;
    index.metric = metric;
    index.dim = working.dim;
    index.params = params;
    index.has_meta = false;
    index.shards = build_shards(working, ids, metric, params);
    return index;
}

std::vector<std::uint32_t> PyramidIndex::route(std::span<const float> q, std::size_t K,
                                               int meta_l) const {
    if (!has_meta) {
        std::vector<std::uint32_t> all(shards.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    std::vector<float> qn;
    if (metric == MetricKind::Angular) {
        qn = normalize(q);
        q = qn;
    }
    K = std::clamp<std::size_t>(K, 1, meta.meta_graph.size());
    const int l = meta_l > 0 ? meta_l : std::max<int>(int(K), params.assign_l);
    const auto top = meta.meta_graph.search(q, {l, int(K), 0});
    std::set<std::uint32_t> parts;
    for (const auto& hit : top) parts.insert(meta.partition_of[std::size_t(hit.id)]);
    return {parts.begin(), parts.end()};
}

QueryResult PyramidIndex::search(std::span<const float> q, std::size_t K,
                                 const SearchParams& p, SearchStats* stats,
                                 std::size_t* shards_touched) const {
    std::vector<float> qn;
    if (metric == MetricKind::Angular) {
        qn = normalize(q);
        q = qn;
    }
    SearchStats meta_stats;
    std::vector<std::uint32_t> routed;
    if (has_meta) {
        const int l = std::max<int>(int(K), params.assign_l);
        const auto top = meta.meta_graph.search(q, {l, int(K), 0}, &meta_stats);
        std::set<std::uint32_t> parts;
        for (const auto& hit : top) parts.insert(meta.partition_of[std::size_t(hit.id)]);
        routed.assign(parts.begin(), parts.end());
    } else {
        routed.resize(shards.size());
        std::iota(routed.begin(), routed.end(), 0);
    }

    std::vector<QueryResult> partials;
    std::size_t shard_evals = 0;
    for (std::uint32_t s : routed) {
        if (shards[s].sub_hnsw.empty()) continue;
        SearchStats st;
        partials.push_back(shards[s].sub_hnsw.search(q, p, &st));
        shard_evals += st.score_evals;
    }
    if (stats) stats->score_evals = meta_stats.score_evals + shard_evals;
    if (shards_touched) *shards_touched = routed.size();
    return merge_partials(partials, std::size_t(p.k));
}

void PyramidIndex::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);

    std::ofstream man(dir / "manifest");
    if (!man) throw FormatError("cannot write manifest", 0);
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    man << "kind=" << (has_meta ? "pyramid" : "naive") << "\n"
        << "metric=" << to_string(metric) << "\n"
        << "dim=" << dim << "\n"
        << "w=" << shards.size() << "\n"
        << "m=" << (has_meta ? meta.meta_graph.size() : 0) << "\n"
        << "n_prime=" << params.n_prime << "\n"
        << "r=" << params.r << "\n"
        << "seed=" << params.seed << "\n"
        << "epsilon=" << params.epsilon << "\n"
        << "kmeans_iters=" << params.kmeans_iters << "\n"
        << "M=" << params.M << "\n"
        << "M0=" << params.M0 << "\n"
        << "build_l=" << params.build_l << "\n"
        << "assign_l=" << params.assign_l << "\n"
        << "built_at=" << now << "\n";
    for (const auto& s : shards)
        man << "shard_" << s.shard_id << "_count=" << s.item_ids.size() << "\n";

    if (has_meta) {
        std::ofstream os(dir / "meta.idx", std::ios::binary | std::ios::trunc);
        if (!os) throw FormatError("cannot write meta.idx", 0);
        meta.meta_graph.save(os);
        write_pod(os, std::uint32_t(meta.w));
        write_pod(os, std::uint64_t(meta.partition_of.size()));
        for (std::size_t c = 0; c < meta.partition_of.size(); ++c) {
            write_pod(os, std::uint64_t(c));
            write_pod(os, meta.partition_of[c]);
            write_pod(os, meta.center_weights[c]);
        }
    }
    for (const auto& s : shards)
        s.sub_hnsw.save(dir / ("shard_" + std::to_string(s.shard_id) + ".idx"));
}

std::map<std::string, std::string> PyramidIndex::read_manifest(
    const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest");
    if (!is) throw FormatError("cannot read manifest in " + dir.string(), 0);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

PyramidIndex PyramidIndex::load_meta(const std::filesystem::path& dir) {
    const auto kv = read_manifest(dir);
    PyramidIndex index;
    index.metric = metric_from_string(kv.at("metric"));
    index.dim = std::stoull(kv.at("dim"));
    index.has_meta = kv.at("kind") == "pyramid";
    index.params.n_prime = std::stoull(kv.at("n_prime"));
    index.params.r = std::stoull(kv.at("r"));
    index.params.seed = std::stoull(kv.at("seed"));
    index.params.epsilon = std::stod(kv.at("epsilon"));
    index.params.kmeans_iters = std::stoi(kv.at("kmeans_iters"));
    index.params.M = std::stoi(kv.at("M"));
    index.params.M0 = std::stoi(kv.at("M0"));
    index.params.build_l = std::stoi(kv.at("build_l"));
    index.params.assign_l = std::stoi(kv.at("assign_l"));
    index.params.m = std::stoull(kv.at("m"));
    const std::size_t w = std::stoull(kv.at("w"));
    index.params.w = w;

    if (index.has_meta) {
        std::ifstream is(dir / "meta.idx", std::ios::binary);
        if (!is) throw FormatError("cannot read meta.idx", 0);
        index.meta.meta_graph = HnswGraph::load(is);
        index.meta.w = read_pod<std::uint32_t>(is);
        const auto m = read_pod<std::uint64_t>(is);
        index.meta.partition_of.resize(m);
        index.meta.center_weights.resize(m);
        for (std::uint64_t c = 0; c < m; ++c) {
            const auto cid = read_pod<std::uint64_t>(is);
            if (cid != c) throw FormatError("meta.idx: center ids out of order", 0);
            index.meta.partition_of[c] = read_pod<std::uint32_t>(is);
            index.meta.center_weights[c] = read_pod<double>(is);
        }
        for (std::uint32_t p : index.meta.partition_of)
            if (p >= w) throw FormatError("meta.idx: partition id out of range", 0);
    }

    index.shards.resize(w);
    for (std::size_t s = 0; s < w; ++s) index.shards[s].shard_id = std::uint32_t(s);
    return index;
}

PyramidIndex PyramidIndex::load(const std::filesystem::path& dir) {
    PyramidIndex index = load_meta(dir);
    for (Shard& shard : index.shards) {
        shard.sub_hnsw =
            HnswGraph::load(dir / ("shard_" + std::to_string(shard.shard_id) + ".idx"));
        shard.item_ids = shard.sub_hnsw.ids();
        std::sort(shard.item_ids.begin(), shard.item_ids.end());
    }
    return index;
}

}  // namespace pyramid
