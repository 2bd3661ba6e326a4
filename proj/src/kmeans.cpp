#include "pyramid/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace pyramid {

namespace {

double sq_dist(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return acc;
}

double dot(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
    return acc;
}

double unit_draw(std::mt19937_64& rng) { return double((rng() >> 11) + 1) * 0x1.0p-53; }

std::span<const float> point(std::span<const float> pts, std::size_t dim, std::size_t i) {
    return pts.subspan(i * dim, dim);
}

// k-means++ style seeding: first seed uniform, later seeds proportional to
// squared distance from the nearest chosen seed.
std::vector<std::size_t> seed_centers(std::span<const float> pts, std::size_t n,
                                      std::size_t dim, std::size_t m, std::mt19937_64& rng) {
    std::vector<std::size_t> seeds;
    seeds.reserve(m);
    seeds.push_back(std::size_t(rng() % n));
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    while (seeds.size() < m) {
        const auto last = point(pts, dim, seeds.back());
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(point(pts, dim, i), last));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = unit_draw(rng) * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = std::size_t(rng() % n);  // all points identical
        }
        seeds.push_back(pick);
    }
    return seeds;
}

KmeansResult run_kmeans(std::span<const float> pts, std::size_t n, std::size_t dim,
                        std::size_t m, int iters, std::uint64_t seed, bool spherical) {
    if (n < m) throw TooFewPointsError("kmeans: fewer points than centers");
    if (m == 0) throw TooFewPointsError("kmeans: m must be positive");

    std::mt19937_64 rng(seed);
    KmeansResult res;
    res.m = m;
    res.dim = dim;
    res.centers.resize(m * dim);
    res.assignment.assign(n, 0);

    const auto seeds = seed_centers(pts, n, dim, m, rng);
    for (std::size_t c = 0; c < m; ++c) {
        auto p = point(pts, dim, seeds[c]);
        std::copy(p.begin(), p.end(), res.centers.begin() + std::ptrdiff_t(c * dim));
    }

    std::vector<double> sums(m * dim);
    std::vector<std::size_t> counts(m);
    for (int it = 0; it < std::max(iters, 1); ++it) {
        // assignment step
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto p = point(pts, dim, i);
            std::size_t best = 0;
            double best_v = spherical ? -std::numeric_limits<double>::infinity()
                                      : std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < m; ++c) {
                const double v = spherical ? dot(p, res.center(c)) : sq_dist(p, res.center(c));
                const bool better = spherical ? v > best_v : v < best_v;
                if (better) {
                    best_v = v;
                    best = c;
                }
            }
            res.assignment[i] = std::uint32_t(best);
            obj += spherical ? sq_dist(p, res.center(best)) : best_v;
        }
        res.objective = obj;

        // update step
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto p = point(pts, dim, i);
            const std::size_t c = res.assignment[i];
            counts[c]++;
            for (std::size_t d = 0; d < dim; ++d) sums[c * dim + d] += p[d];
        }
        for (std::size_t c = 0; c < m; ++c) {
            if (counts[c] == 0) {
                // re-seed to the point farthest from its current center
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d =
                        sq_dist(point(pts, dim, i), res.center(res.assignment[i]));
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                auto p = point(pts, dim, far);
                std::copy(p.begin(), p.end(),
                          res.centers.begin() + std::ptrdiff_t(c * dim));
                continue;
            }
            double norm2 = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double v = sums[c * dim + d] / double(counts[c]);
                res.centers[c * dim + d] = float(v);
                norm2 += v * v;
            }
            if (spherical) {
                if (norm2 == 0.0) {
                    // zero-mean cluster: re-seed to a random member
                    std::size_t member = 0;
                    for (std::size_t i = 0; i < n; ++i)
                        if (res.assignment[i] == c) member = i;
                    auto p = point(pts, dim, member);
                    std::copy(p.begin(), p.end(),
                              res.centers.begin() + std::ptrdiff_t(c * dim));
                } else {
                    const double inv = 1.0 / std::sqrt(norm2);
                    for (std::size_t d = 0; d < dim; ++d)
                        res.centers[c * dim + d] = float(res.centers[c * dim + d] * inv);
                }
            }
        }
    }

    // final assignment consistent with the returned centers
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = point(pts, dim, i);
        std::size_t best = 0;
        double best_v = spherical ? -std::numeric_limits<double>::infinity()
                                  : std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < m; ++c) {
            const double v = spherical ? dot(p, res.center(c)) : sq_dist(p, res.center(c));
            const bool better = spherical ? v > best_v : v < best_v;
            if (better) {
                best_v = v;
                best = c;
            }
        }
        res.assignment[i] = std::uint32_t(best);
    }

    // duplicate points can re-empty a cluster after tie-broken reassignment
    // (every copy snaps to the lowest-index center at that location); move
    // the farthest point into each empty cluster to keep the contract
    std::vector<std::size_t> final_counts(m, 0);
    for (std::uint32_t c : res.assignment) final_counts[c]++;
    for (std::size_t c = 0; c < m; ++c) {
        if (final_counts[c] != 0) continue;
        std::size_t far = n;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (final_counts[res.assignment[i]] <= 1) continue;
            const double d = sq_dist(point(pts, dim, i), res.center(res.assignment[i]));
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        if (far == n) continue;  // unreachable while n >= m
        final_counts[res.assignment[far]]--;
        final_counts[c] = 1;
        res.assignment[far] = std::uint32_t(c);
        const auto p = point(pts, dim, far);
        double norm2 = 0.0;
        for (std::size_t d = 0; d < dim; ++d) norm2 += double(p[d]) * double(p[d]);
        const double inv = spherical && norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 1.0;
        for (std::size_t d = 0; d < dim; ++d)
            res.centers[c * dim + d] = float(p[d] * inv);
    }
    return res;
}

}  // namespace

KmeansResult kmeans(std::span<const float> points, std::size_t n, std::size_t dim,
                    std::size_t m, int iters, std::uint64_t seed) {
    return run_kmeans(points, n, dim, m, iters, seed, false);
}

KmeansResult spherical_kmeans(std::span<const float> points, std::size_t n, std::size_t dim,
                              std::size_t m, int iters, std::uint64_t seed) {
    return run_kmeans(points, n, dim, m, iters, seed, true);
}

std::vector<double> weight_centers(const KmeansResult& km, std::span<const float> sample,
                                   std::size_t n, MetricKind metric) {
    std::vector<double> weights(km.m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = sample.subspan(i * km.dim, km.dim);
        std::size_t best = 0;
        double best_v = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < km.m; ++c) {
            const double v = score(metric, p, km.center(c));
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        weights[best] += 1.0;
    }
    return weights;
}

}  // namespace pyramid
