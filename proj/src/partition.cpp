#include "pyramid/partition.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <random>

namespace pyramid {

namespace {

constexpr std::uint32_t kUnassigned = std::numeric_limits<std::uint32_t>::max();

struct Adjacency {
    std::vector<std::vector<std::uint32_t>> nbrs;

    explicit Adjacency(const WeightedGraph& g) : nbrs(g.n) {
        for (auto [a, b] : g.edges) {
            nbrs[a].push_back(b);
            nbrs[b].push_back(a);
        }
    }
};

// Edges from v into each partition, given current assignment.
std::vector<std::size_t> edge_counts(const Adjacency& adj, std::uint32_t v,
                                     const std::vector<std::uint32_t>& parts, std::size_t w) {
    std::vector<std::size_t> counts(w, 0);
    for (std::uint32_t nb : adj.nbrs[v])
        if (parts[nb] != kUnassigned) counts[parts[nb]]++;
    return counts;
}

std::vector<double> part_loads(const WeightedGraph& g, const std::vector<std::uint32_t>& parts,
                               std::size_t w) {
    std::vector<double> loads(w, 0.0);
    for (std::size_t v = 0; v < g.n; ++v)
        if (parts[v] != kUnassigned) loads[parts[v]] += g.weights[v];
    return loads;
}

// Seeds spread apart by BFS hop distance; unreachable components count as
// infinitely far, so disconnected pieces get their own seeds first.
std::vector<std::uint32_t> spread_seeds(const WeightedGraph& g, const Adjacency& adj,
                                        std::size_t w) {
    std::vector<std::uint32_t> seeds;
    std::uint32_t first = 0;
    for (std::uint32_t v = 1; v < g.n; ++v)
        if (g.weights[v] > g.weights[first]) first = v;
    seeds.push_back(first);

    std::vector<std::uint32_t> dist(g.n, kUnassigned);
    auto bfs_from = [&](std::uint32_t s) {
        std::queue<std::uint32_t> q;
        if (dist[s] != 0) {
            dist[s] = 0;
            q.push(s);
        }
        while (!q.empty()) {
            const std::uint32_t v = q.front();
            q.pop();
            for (std::uint32_t nb : adj.nbrs[v]) {
                if (dist[nb] == kUnassigned || dist[nb] > dist[v] + 1) {
                    dist[nb] = dist[v] + 1;
                    q.push(nb);
                }
            }
        }
    };
    dist[first] = 0;
    bfs_from(first);
    while (seeds.size() < w) {
        std::uint32_t far = kUnassigned;
        for (std::uint32_t v = 0; v < g.n; ++v) {
            if (std::find(seeds.begin(), seeds.end(), v) != seeds.end()) continue;
            if (far == kUnassigned) {
                far = v;
                continue;
            }
            const auto dv = dist[v], df = dist[far];
            if (dv != df ? dv > df
                         : (g.weights[v] != g.weights[far] ? g.weights[v] > g.weights[far]
                                                           : v < far))
                far = v;
        }
        seeds.push_back(far);
        dist[far] = 0;
        bfs_from(far);
    }
    return seeds;
}

// Grow partitions from seeds by maximum edge affinity under the cap.
std::vector<std::uint32_t> region_grow(const WeightedGraph& g, const Adjacency& adj,
                                       std::size_t w, double cap) {
    std::vector<std::uint32_t> parts(g.n, kUnassigned);
    const auto seeds = spread_seeds(g, adj, w);
    for (std::size_t p = 0; p < w; ++p) parts[seeds[p]] = std::uint32_t(p);
    auto loads = part_loads(g, parts, w);

    std::size_t assigned = w;
    while (assigned < g.n) {
        std::uint32_t best_v = kUnassigned, best_p = 0;
        std::size_t best_aff = 0;
        for (std::uint32_t v = 0; v < g.n; ++v) {
            if (parts[v] != kUnassigned) continue;
            const auto counts = edge_counts(adj, v, parts, w);
            for (std::size_t p = 0; p < w; ++p) {
                if (counts[p] == 0 || loads[p] + g.weights[v] > cap) continue;
                const bool better =
                    best_v == kUnassigned || counts[p] > best_aff ||
                    (counts[p] == best_aff && g.weights[v] > g.weights[best_v]);
                if (better) {
                    best_v = v;
                    best_p = std::uint32_t(p);
                    best_aff = counts[p];
                }
            }
        }
        if (best_v == kUnassigned) {
            // nothing adjacent fits: place the heaviest leftover on the
            // lightest feasible partition (lightest overall as a last resort)
            for (std::uint32_t v = 0; v < g.n; ++v)
                if (parts[v] == kUnassigned &&
                    (best_v == kUnassigned || g.weights[v] > g.weights[best_v]))
                    best_v = v;
            std::size_t light = 0;
            bool found = false;
            for (std::size_t p = 0; p < w; ++p) {
                if (loads[p] + g.weights[best_v] > cap) continue;
                if (!found || loads[p] < loads[light]) {
                    light = p;
                    found = true;
                }
            }
            if (!found)
                for (std::size_t p = 0; p < w; ++p)
                    if (loads[p] < loads[light]) light = p;
            best_p = std::uint32_t(light);
        }
        parts[best_v] = best_p;
        loads[best_p] += g.weights[best_v];
        assigned++;
    }
    return parts;
}

std::vector<std::uint32_t> random_start(const WeightedGraph& g, std::size_t w,
                                        std::mt19937_64& rng) {
    std::vector<std::uint32_t> order(g.n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return g.weights[a] > g.weights[b];
    });
    std::vector<std::uint32_t> parts(g.n, kUnassigned);
    std::vector<double> loads(w, 0.0);
    for (std::uint32_t v : order) {
        std::size_t light = 0;
        for (std::size_t p = 1; p < w; ++p)
            if (loads[p] < loads[light]) light = p;
        parts[v] = std::uint32_t(light);
        loads[light] += g.weights[v];
    }
    return parts;
}

// Moves vertices out of over-cap partitions, lowest cut damage first.
// Returns false if stuck.
bool repair_balance(const WeightedGraph& g, const Adjacency& adj,
                    std::vector<std::uint32_t>& parts, std::size_t w, double cap) {
    auto loads = part_loads(g, parts, w);
    std::vector<std::size_t> sizes(w, 0);
    for (std::uint32_t p : parts) sizes[p]++;
    for (int guard = 0; guard < int(g.n) * 4; ++guard) {
        std::size_t over = w;
        for (std::size_t p = 0; p < w; ++p)
            if (loads[p] > cap && (over == w || loads[p] > loads[over])) over = p;
        if (over == w) return true;

        std::uint32_t best_v = kUnassigned;
        std::size_t best_q = 0;
        long best_gain = std::numeric_limits<long>::min();
        for (std::uint32_t v = 0; v < g.n; ++v) {
            if (parts[v] != over || sizes[over] <= 1) continue;
            const auto counts = edge_counts(adj, v, parts, w);
            for (std::size_t q = 0; q < w; ++q) {
                if (q == over || loads[q] + g.weights[v] > cap) continue;
                const long gain = long(counts[q]) - long(counts[over]);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_v = v;
                    best_q = q;
                }
            }
        }
        if (best_v == kUnassigned) return false;
        loads[over] -= g.weights[best_v];
        loads[best_q] += g.weights[best_v];
        sizes[over]--;
        sizes[best_q]++;
        parts[best_v] = std::uint32_t(best_q);
    }
    return false;
}

// Parallel edges between u and v (duplicates in the edge list are real).
long multiplicity(const Adjacency& adj, std::uint32_t u, std::uint32_t v) {
    return long(std::count(adj.nbrs[u].begin(), adj.nbrs[u].end(), v));
}

// Single-vertex move refinement plus pairwise swaps: apply strictly
// cut-improving changes that keep the balance cap and never empty a
// partition, until none remains. Swaps matter when the cap blocks both
// one-directional moves of an exchange that would reduce the cut.
void refine(const WeightedGraph& g, const Adjacency& adj, std::vector<std::uint32_t>& parts,
            std::size_t w, double cap) {
    auto loads = part_loads(g, parts, w);
    std::vector<std::size_t> sizes(w, 0);
    for (std::uint32_t p : parts) sizes[p]++;

    bool improved = true;
    while (improved) {
        improved = false;
        for (std::uint32_t v = 0; v < g.n; ++v) {
            const std::uint32_t p = parts[v];
            if (sizes[p] <= 1) continue;
            const auto counts = edge_counts(adj, v, parts, w);
            std::size_t best_q = p;
            long best_gain = 0;
            for (std::size_t q = 0; q < w; ++q) {
                if (q == p || loads[q] + g.weights[v] > cap) continue;
                const long gain = long(counts[q]) - long(counts[p]);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_q = q;
                }
            }
            if (best_q != p) {
                loads[p] -= g.weights[v];
                loads[best_q] += g.weights[v];
                sizes[p]--;
                sizes[best_q]++;
                parts[v] = std::uint32_t(best_q);
                improved = true;
            }
        }
        if (improved) continue;

        // no single move helps; look for one cut-improving swap
        for (std::uint32_t u = 0; u < g.n && !improved; ++u) {
            const std::uint32_t p = parts[u];
            const auto cu = edge_counts(adj, u, parts, w);
            for (std::uint32_t v = u + 1; v < g.n && !improved; ++v) {
                const std::uint32_t q = parts[v];
                if (q == p) continue;
                if (loads[p] - g.weights[u] + g.weights[v] > cap ||
                    loads[q] - g.weights[v] + g.weights[u] > cap)
                    continue;
                const auto cv = edge_counts(adj, v, parts, w);
                const long gain = long(cu[q]) - long(cu[p]) + long(cv[p]) - long(cv[q]) -
                                  2 * multiplicity(adj, u, v);
                if (gain > 0) {
                    loads[p] += g.weights[v] - g.weights[u];
                    loads[q] += g.weights[u] - g.weights[v];
                    parts[u] = q;
                    parts[v] = p;
                    improved = true;
                }
            }
        }
    }
}

bool within_cap(const WeightedGraph& g, const std::vector<std::uint32_t>& parts,
                std::size_t w, double cap) {
    const auto loads = part_loads(g, parts, w);
    for (std::size_t p = 0; p < w; ++p)
        if (loads[p] > cap) return false;
    std::vector<bool> seen(w, false);
    for (std::uint32_t p : parts) seen[p] = true;
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

}  // namespace

std::size_t cut_size(const WeightedGraph& g, const std::vector<std::uint32_t>& parts) {
    std::size_t cut = 0;
    for (auto [a, b] : g.edges)
        if (parts[a] != parts[b]) cut++;
    return cut;
}

std::vector<std::uint32_t> partition_graph(const WeightedGraph& g, std::size_t w,
                                           double epsilon, std::uint64_t seed) {
    if (w == 0 || w > g.n) throw BalanceInfeasibleError("partition: need 1 <= w <= n");
    if (g.weights.size() != g.n) throw BalanceInfeasibleError("partition: weight count != n");

    const double total = std::accumulate(g.weights.begin(), g.weights.end(), 0.0);
    const double cap = (1.0 + epsilon) * total / double(w);
    for (double wt : g.weights)
        if (wt > cap)
            throw BalanceInfeasibleError("partition: a single vertex outweighs the cap");
    if (w == 1) return std::vector<std::uint32_t>(g.n, 0);

    const Adjacency adj(g);
    std::mt19937_64 rng(seed);
    // small instances are cheap enough to restart aggressively
    const int kRandomStarts = g.n <= 24 ? 64 : 7;

    std::vector<std::uint32_t> best;
    std::size_t best_cut = 0;
    auto consider = [&](std::vector<std::uint32_t> parts) {
        if (!repair_balance(g, adj, parts, w, cap)) return;
        refine(g, adj, parts, w, cap);
        if (!within_cap(g, parts, w, cap)) return;
        const std::size_t cut = cut_size(g, parts);
        if (best.empty() || cut < best_cut) {
            best = std::move(parts);
            best_cut = cut;
        }
    };

    consider(region_grow(g, adj, w, cap));
    for (int i = 0; i < kRandomStarts; ++i) consider(random_start(g, w, rng));

    if (best.empty())
        throw BalanceInfeasibleError("partition: no balanced assignment found");
    return best;
}

}  // namespace pyramid
