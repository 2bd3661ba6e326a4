#include "pyramid/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <queue>

namespace pyramid {

namespace {

constexpr std::uint32_t kMagic = 0x70797267;  // "gryp"
constexpr std::uint32_t kVersion = 1;

// Uniform draw in (0, 1].
double unit_draw(std::mt19937_64& rng) {
    return double((rng() >> 11) + 1) * 0x1.0p-53;
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, std::size_t& off) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("truncated graph file", off);
    off += sizeof(T);
    return v;
}

}  // namespace

int draw_level(double uniform_draw, double level_norm) {
    if (uniform_draw <= 0.0 || uniform_draw > 1.0 || level_norm < 0.0) return 0;
    return int(std::floor(-std::log(uniform_draw) * level_norm));
}

struct HnswGraph::Scratch {
    explicit Scratch(std::size_t n, std::size_t max_evals_)
        : mark(n, -1), cache(n, 0.0), have(n, 0), max_evals(max_evals_) {}

    std::vector<int> mark;
    std::vector<double> cache;
    std::vector<std::uint8_t> have;
    int pass = -1;
    std::size_t evals = 0;
    std::size_t max_evals = 0;

    bool exhausted() const { return max_evals != 0 && evals >= max_evals; }
};

HnswGraph::HnswGraph(MetricKind metric, std::size_t dim, int M, int M0)
    : metric_(metric), dim_(dim), M_(M), M0_(M0), level_norm_(1.0 / std::log(double(M))) {}

double HnswGraph::scored(std::uint32_t idx, std::span<const float> q, Scratch& s) const {
    if (s.have[idx]) return s.cache[idx];
    s.evals++;
    const double v = score(metric_, q, vec(idx));
    s.cache[idx] = v;
    s.have[idx] = 1;
    return v;
}

void HnswGraph::walk_level(int level, std::span<const float> q, std::vector<Candidate>& beam,
                           int factor, Scratch& s) const {
    // Candidates in `beam` carry internal indices in .id here.
    s.pass++;
    const auto better = [this](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return nodes_[a.id].id < nodes_[b.id].id;
    };
    // top of `cands` = best unexpanded candidate
    const auto cand_less = [&better](const Candidate& a, const Candidate& b) {
        return better(b, a);
    };
    // top of `best` = worst retained result
    const auto best_less = better;
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(cand_less)> cands(cand_less);
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(best_less)> best(best_less);

    for (const Candidate& c : beam) {
        s.mark[c.id] = s.pass;
        cands.push(c);
        best.push(c);
    }
    while (best.size() > std::size_t(factor)) best.pop();

    while (!cands.empty() && !s.exhausted()) {
        const Candidate cur = cands.top();
        if (cur.score < best.top().score) break;
        cands.pop();
        for (std::uint32_t nb : nodes_[std::uint32_t(cur.id)].links[level]) {
            if (s.mark[nb] == s.pass) continue;
            s.mark[nb] = s.pass;
            if (s.exhausted()) break;
            const double sc = scored(nb, q, s);
            if (best.size() == std::size_t(factor) && sc < best.top().score) continue;
            cands.push({nb, sc});
            best.push({nb, sc});
            if (best.size() > std::size_t(factor)) best.pop();
        }
    }

    beam.clear();
    while (!best.empty()) {
        beam.push_back(best.top());
        best.pop();
    }
    std::reverse(beam.begin(), beam.end());  // best first
}

std::vector<Candidate> HnswGraph::search_level(int level, std::span<const float> q,
                                               std::span<const Candidate> entries,
                                               int factor) const {
    if (q.size() != dim_) throw DimensionError("search_level: query dimension mismatch");
    Scratch s(nodes_.size(), 0);
    std::vector<Candidate> beam;
    for (const Candidate& c : entries) {
        auto it = index_of_.find(c.id);
        if (it == index_of_.end() || int(nodes_[it->second].links.size()) <= level)
            throw InvalidEntryError("search_level: entry vertex absent at level " +
                                    std::to_string(level));
        beam.push_back({it->second, scored(it->second, q, s)});
    }
    walk_level(level, q, beam, factor, s);
    for (Candidate& c : beam) c.id = nodes_[std::uint32_t(c.id)].id;
    return beam;
}

QueryResult HnswGraph::search(std::span<const float> q, const SearchParams& p,
                              SearchStats* stats) const {
    if (nodes_.empty()) throw EmptyIndexError("search on empty index");
    if (q.size() != dim_) throw DimensionError("search: query dimension mismatch");

    Scratch s(nodes_.size(), p.max_evals);
    std::vector<Candidate> beam{{entry_, scored(entry_, q, s)}};
    for (int t = max_layer_; t >= 1; --t) {
        walk_level(t, q, beam, 1, s);
        beam.resize(1);  // keep only the best candidate between layers
    }
    walk_level(0, q, beam, std::max(p.l, 1), s);

    QueryResult out;
    out.reserve(beam.size());
    for (const Candidate& c : beam) out.push_back({nodes_[std::uint32_t(c.id)].id, c.score});
    std::sort(out.begin(), out.end(), better_hit);
    if (out.size() > std::size_t(p.k)) out.resize(std::size_t(p.k));
    if (stats) stats->score_evals = s.evals;
    return out;
}

void HnswGraph::prune_node(std::uint32_t idx, int layer) {
    auto& links = nodes_[idx].links[layer];
    const std::size_t cap = std::size_t(degree_cap(layer));
    if (links.size() <= cap) return;
    const auto self = vec(idx);
    std::vector<Candidate> scoredn;
    scoredn.reserve(links.size());
    for (std::uint32_t nb : links) scoredn.push_back({nb, score(metric_, self, vec(nb))});
    std::sort(scoredn.begin(), scoredn.end(), [this](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return nodes_[a.id].id < nodes_[b.id].id;
    });
    links.clear();
    for (std::size_t i = 0; i < cap; ++i) links.push_back(std::uint32_t(scoredn[i].id));
}

void HnswGraph::insert(ItemId id, std::span<const float> x, int build_l, std::mt19937_64& rng) {
    if (dim_ == 0) dim_ = x.size();
    if (x.size() != dim_) throw DimensionError("insert: vector dimension mismatch");
    if (index_of_.count(id)) throw DuplicateIdError("insert: duplicate id " + std::to_string(id));

    const int u = draw_level(unit_draw(rng), level_norm_);
    const std::uint32_t idx = std::uint32_t(nodes_.size());
    data_.insert(data_.end(), x.begin(), x.end());

    if (nodes_.empty()) {
        Node node{id, {}};
        node.links.resize(std::size_t(u) + 1);
        nodes_.push_back(std::move(node));
        index_of_.emplace(id, idx);
        entry_ = idx;
        max_layer_ = u;
        return;
    }

    Scratch s(nodes_.size(), 0);
    std::vector<Candidate> beam{{entry_, scored(entry_, x, s)}};
    for (int t = max_layer_; t > u; --t) {
        walk_level(t, x, beam, 1, s);
        beam.resize(1);
    }

    std::vector<std::vector<std::uint32_t>> chosen(std::size_t(u) + 1);
    for (int t = std::min(u, max_layer_); t >= 0; --t) {
        walk_level(t, x, beam, build_l, s);
        const std::size_t cap = std::size_t(degree_cap(t));
        for (std::size_t i = 0; i < beam.size() && i < cap; ++i)
            chosen[std::size_t(t)].push_back(std::uint32_t(beam[i].id));
        // the full result set seeds the next layer down, as in classic HNSW
        // construction; collapsing to one entry loses cluster bridges
    }

    Node node{id, std::move(chosen)};
    nodes_.push_back(std::move(node));
    index_of_.emplace(id, idx);

    for (int t = 0; t <= std::min(u, max_layer_); ++t) {
        for (std::uint32_t nb : nodes_[idx].links[std::size_t(t)]) {
            nodes_[nb].links[std::size_t(t)].push_back(idx);
            prune_node(nb, t);
        }
    }
    if (u > max_layer_) {
        entry_ = idx;
        max_layer_ = u;
    }
}

HnswGraph HnswGraph::build(const std::vector<ItemId>& ids, const std::vector<float>& data,
                           std::size_t dim, MetricKind metric, int M, int M0, int build_l,
                           std::uint64_t seed) {
    if (ids.empty()) throw EmptyInputError("build: empty input");
    if (dim == 0 || data.size() != ids.size() * dim)
        throw DimensionError("build: data size does not match ids x dim");
    HnswGraph g(metric, dim, M, M0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < ids.size(); ++i)
        g.insert(ids[i], {data.data() + i * dim, dim}, build_l, rng);
    return g;
}

ItemId HnswGraph::entry_id() const {
    if (nodes_.empty()) throw EmptyIndexError("entry_id on empty index");
    return nodes_[entry_].id;
}

std::uint32_t HnswGraph::must_index(ItemId id) const {
    auto it = index_of_.find(id);
    if (it == index_of_.end())
        throw NotFoundError("unknown vertex id " + std::to_string(id));
    return it->second;
}

int HnswGraph::level_of(ItemId id) const {
    return int(nodes_[must_index(id)].links.size()) - 1;
}

std::span<const float> HnswGraph::vector_of(ItemId id) const { return vec(must_index(id)); }

std::vector<ItemId> HnswGraph::ids() const {
    std::vector<ItemId> out;
    out.reserve(nodes_.size());
    for (const Node& n : nodes_) out.push_back(n.id);
    return out;
}

std::vector<ItemId> HnswGraph::neighbors_of(ItemId id, int layer) const {
    const Node& n = nodes_[must_index(id)];
    if (layer >= int(n.links.size()))
        throw InvalidEntryError("vertex absent at layer " + std::to_string(layer));
    std::vector<ItemId> out;
    for (std::uint32_t nb : n.links[std::size_t(layer)]) out.push_back(nodes_[nb].id);
    return out;
}

std::vector<ItemId> HnswGraph::layer_ids(int layer) const {
    std::vector<ItemId> out;
    for (const Node& n : nodes_)
        if (int(n.links.size()) > layer) out.push_back(n.id);
    return out;
}

std::vector<std::pair<ItemId, ItemId>> HnswGraph::bottom_layer_edges() const {
    std::vector<std::pair<ItemId, ItemId>> out;
    for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
        for (std::uint32_t nb : nodes_[i].links[0]) {
            const ItemId a = nodes_[i].id, b = nodes_[nb].id;
            if (a < b) out.emplace_back(a, b);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void HnswGraph::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open for write: " + path.string(), 0);
    save(os);
    if (!os) throw FormatError("write failed: " + path.string(), 0);
}

HnswGraph HnswGraph::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path.string(), 0);
    return load(is);
}

void HnswGraph::save(std::ostream& os) const {
    write_pod(os, kMagic);
    write_pod(os, kVersion);
    write_pod(os, std::uint8_t(metric_));
    write_pod(os, std::uint32_t(dim_));
    write_pod(os, std::uint64_t(nodes_.size()));
    write_pod(os, std::uint32_t(M_));
    write_pod(os, std::uint32_t(M0_));
    write_pod(os, std::uint32_t(max_layer_));
    write_pod(os, std::uint64_t(nodes_.empty() ? 0 : nodes_[entry_].id));
    for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
        write_pod(os, std::uint64_t(nodes_[i].id));
        os.write(reinterpret_cast<const char*>(data_.data() + std::size_t(i) * dim_),
                 std::streamsize(dim_ * sizeof(float)));
    }
    for (int t = 0; t <= max_layer_; ++t) {
        std::uint64_t count = 0;
        for (const Node& n : nodes_)
            if (int(n.links.size()) > t) count++;
        write_pod(os, count);
        for (const Node& n : nodes_) {
            if (int(n.links.size()) <= t) continue;
            write_pod(os, std::uint64_t(n.id));
            write_pod(os, std::uint32_t(n.links[std::size_t(t)].size()));
            for (std::uint32_t nb : n.links[std::size_t(t)])
                write_pod(os, std::uint64_t(nodes_[nb].id));
        }
    }
}

HnswGraph HnswGraph::load(std::istream& is) {
    std::size_t off = 0;
    if (read_pod<std::uint32_t>(is, off) != kMagic) throw FormatError("bad magic", 0);
    if (read_pod<std::uint32_t>(is, off) != kVersion) throw FormatError("bad version", 4);

    const auto metric = MetricKind(read_pod<std::uint8_t>(is, off));
    const auto dim = read_pod<std::uint32_t>(is, off);
    const auto count = read_pod<std::uint64_t>(is, off);
    const auto M = read_pod<std::uint32_t>(is, off);
    const auto M0 = read_pod<std::uint32_t>(is, off);
    const auto max_layer = read_pod<std::uint32_t>(is, off);
    const auto entry_id = read_pod<std::uint64_t>(is, off);
    if (dim == 0 && count > 0) throw FormatError("nonpositive dimension", 9);

    HnswGraph g(metric, dim, int(M), int(M0));
    g.max_layer_ = int(max_layer);
    g.nodes_.resize(count);
    g.data_.resize(std::size_t(count) * dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        g.nodes_[i].id = read_pod<std::uint64_t>(is, off);
        is.read(reinterpret_cast<char*>(g.data_.data() + std::size_t(i) * dim),
                std::streamsize(std::size_t(dim) * sizeof(float)));
        if (!is) throw FormatError("truncated item block", off);
        off += std::size_t(dim) * sizeof(float);
        if (!g.index_of_.emplace(g.nodes_[i].id, std::uint32_t(i)).second)
            throw FormatError("duplicate item id in file", off);
        g.nodes_[i].links.resize(1);
    }
    for (std::uint32_t t = 0; t <= max_layer && count > 0; ++t) {
        const auto layer_count = read_pod<std::uint64_t>(is, off);
        for (std::uint64_t i = 0; i < layer_count; ++i) {
            const auto vid = read_pod<std::uint64_t>(is, off);
            auto it = g.index_of_.find(vid);
            if (it == g.index_of_.end()) throw FormatError("edge references unknown vertex", off);
            Node& n = g.nodes_[it->second];
            if (n.links.size() < std::size_t(t) + 1) n.links.resize(std::size_t(t) + 1);
            const auto ncnt = read_pod<std::uint32_t>(is, off);
            auto& lst = n.links[t];
            lst.reserve(ncnt);
            for (std::uint32_t j = 0; j < ncnt; ++j) {
                const auto nid = read_pod<std::uint64_t>(is, off);
                auto nit = g.index_of_.find(nid);
                if (nit == g.index_of_.end())
                    throw FormatError("edge references unknown vertex", off);
                lst.push_back(nit->second);
            }
        }
    }
    if (count > 0) {
        auto it = g.index_of_.find(entry_id);
        if (it == g.index_of_.end()) throw FormatError("entry vertex missing", 0);
        g.entry_ = it->second;
    }
    g.validate();
    return g;
}

void HnswGraph::validate() const {
    if (nodes_.empty()) return;
    int seen_max = 0;
    for (const Node& n : nodes_) {
        if (n.links.empty()) throw FormatError("vertex missing from layer 0", 0);
        seen_max = std::max(seen_max, int(n.links.size()) - 1);
        for (int t = 0; t < int(n.links.size()); ++t) {
            if (n.links[std::size_t(t)].size() > std::size_t(degree_cap(t)))
                throw FormatError("degree cap violated at layer " + std::to_string(t), 0);
            for (std::uint32_t nb : n.links[std::size_t(t)]) {
                if (nb >= nodes_.size()) throw FormatError("edge to unknown vertex", 0);
                if (int(nodes_[nb].links.size()) <= t)
                    throw FormatError("edge to vertex absent at its layer", 0);
            }
        }
    }
    if (seen_max != max_layer_) throw FormatError("max_layer mismatch", 0);
    if (int(nodes_[entry_].links.size()) - 1 != max_layer_)
        throw FormatError("entry vertex absent at max layer", 0);
}

}  // namespace pyramid
