#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <vector>

#include <doctest.h>

#include "pyramid/eval.hpp"
#include "pyramid/hnsw.hpp"
#include "pyramid/vecio.hpp"

using namespace pyramid;

namespace {

HnswGraph build_random(std::size_t n, std::size_t dim, MetricKind metric,
                       std::uint64_t seed, int M = 16, int M0 = 32, int build_l = 100) {
    const Dataset ds = gen_uniform(n, dim, seed);
    std::vector<ItemId> ids(n);
    std::iota(ids.begin(), ids.end(), ItemId(0));
    return HnswGraph::build(ids, ds.data, dim, metric, M, M0, build_l, seed);
}

}  // namespace

TEST_CASE("level draw follows the exponential schedule") {
    const double norm = 1.0 / std::log(16.0);
    CHECK(draw_level(1.0, norm) == 0);
    CHECK(draw_level(0.99, norm) == 0);
    // u = 1/16 puts -ln(u) * norm exactly at 1
    CHECK(draw_level(1.0 / 16.0 + 1e-9, norm) == 0);
    CHECK(draw_level(1.0 / 16.0 - 1e-9, norm) == 1);
    CHECK(draw_level(1.0 / 256.0 - 1e-9, norm) == 2);
    // smaller draws never decrease the level
    int prev = 0;
    for (double u = 1.0; u > 1e-12; u /= 2) {
        const int lvl = draw_level(u, norm);
        CHECK(lvl >= prev);
        prev = lvl;
    }
}

TEST_CASE("tiny graph search is exact") {
    // with n <= M0 the bottom layer is (nearly) complete, so beam search
    // with l >= n must return the exact ranking
    Dataset ds = gen_uniform(20, 4, 3);
    std::vector<ItemId> ids(20);
    std::iota(ids.begin(), ids.end(), ItemId(0));
    const HnswGraph g = HnswGraph::build(ids, ds.data, 4, MetricKind::EuclideanNeg);
    const GroundTruth truth = ground_truth(ds, ds, 5, MetricKind::EuclideanNeg);
    for (std::size_t qi = 0; qi < ds.count; ++qi) {
        const QueryResult got = g.search(ds.row(qi), {20, 5, 0});
        REQUIRE(got.size() == 5);
        for (std::size_t j = 0; j < 5; ++j) CHECK(got[j].id == truth.entries[qi][j].id);
    }
}

TEST_CASE("results are sorted best-first with ties broken by lower id") {
    // four copies of the same point: scores tie, ids decide
    std::vector<float> data{1, 1, 1, 1, 1, 1, 1, 1, 5, 5};
    const HnswGraph g =
        HnswGraph::build({ItemId(9), ItemId(2), ItemId(7), ItemId(4), ItemId(1)}, data, 2,
                         MetricKind::EuclideanNeg);
    std::vector<float> q{1, 1};
    const QueryResult hits = g.search(q, {10, 4, 0});
    REQUIRE(hits.size() == 4);
    CHECK(hits[0].id == 2);
    CHECK(hits[1].id == 4);
    CHECK(hits[2].id == 7);
    CHECK(hits[3].id == 9);
    for (std::size_t i = 1; i < hits.size(); ++i) CHECK(hits[i - 1].score >= hits[i].score);
}

TEST_CASE("recall on random data beats 0.9 at l=100") {
    const std::size_t n = 2000, dim = 16;
    const Dataset ds = gen_uniform(n, dim, 5);
    const Dataset queries = gen_uniform(100, dim, 6);
    std::vector<ItemId> ids(n);
    std::iota(ids.begin(), ids.end(), ItemId(0));
    const HnswGraph g = HnswGraph::build(ids, ds.data, dim, MetricKind::EuclideanNeg);
    const GroundTruth truth = ground_truth(ds, queries, 10, MetricKind::EuclideanNeg);
    double prec = 0;
    for (std::size_t qi = 0; qi < queries.count; ++qi)
        prec += precision(g.search(queries.row(qi), {100, 10, 0}), truth.entries[qi], 10);
    CHECK(prec / double(queries.count) >= 0.9);
}

TEST_CASE("degree caps and structural invariants hold") {
    const HnswGraph g = build_random(1500, 8, MetricKind::EuclideanNeg, 9);
    g.validate();
    for (ItemId id : g.ids()) {
        const int top = g.level_of(id);
        for (int layer = 0; layer <= top; ++layer)
            CHECK(g.neighbors_of(id, layer).size() <= std::size_t(g.degree_cap(layer)));
    }
    // upper layers thin out
    CHECK(g.layer_ids(0).size() == 1500);
    if (g.max_layer() > 0) CHECK(g.layer_ids(1).size() < 1500 / 4);
}

TEST_CASE("one search never evaluates a vertex's score twice per level pass") {
    // bound: greedy descent evaluates <= n per level and the bottom beam
    // <= n, so total evals <= n * (max_layer + 1)
    const std::size_t n = 800;
    const HnswGraph g = build_random(n, 8, MetricKind::EuclideanNeg, 13);
    const Dataset queries = gen_uniform(50, 8, 14);
    for (std::size_t qi = 0; qi < queries.count; ++qi) {
        SearchStats stats;
        g.search(queries.row(qi), {200, 10, 0}, &stats);
        CHECK(stats.score_evals <= n * std::size_t(g.max_layer() + 1));
    }
}

TEST_CASE("max_evals caps the similarity computations") {
    const HnswGraph g = build_random(1000, 8, MetricKind::EuclideanNeg, 21);
    const Dataset queries = gen_uniform(5, 8, 22);
    for (std::size_t qi = 0; qi < queries.count; ++qi) {
        SearchStats stats;
        const auto hits = g.search(queries.row(qi), {100, 10, 50}, &stats);
        CHECK(stats.score_evals <= 50);
        CHECK(!hits.empty());
    }
}

TEST_CASE("build is deterministic for a fixed seed") {
    const HnswGraph a = build_random(600, 8, MetricKind::EuclideanNeg, 33);
    const HnswGraph b = build_random(600, 8, MetricKind::EuclideanNeg, 33);
    CHECK(a.entry_id() == b.entry_id());
    CHECK(a.max_layer() == b.max_layer());
    for (ItemId id : a.ids()) {
        REQUIRE(a.level_of(id) == b.level_of(id));
        for (int layer = 0; layer <= a.level_of(id); ++layer)
            CHECK(a.neighbors_of(id, layer) == b.neighbors_of(id, layer));
    }
}

TEST_CASE("save/load round-trips the whole structure") {
    const HnswGraph g = build_random(400, 8, MetricKind::Angular, 44);
    const auto path = std::filesystem::temp_directory_path() / "pyramid_hnsw_rt.idx";
    g.save(path);
    const HnswGraph back = HnswGraph::load(path);
    back.validate();
    CHECK(back.size() == g.size());
    CHECK(back.metric() == g.metric());
    CHECK(back.entry_id() == g.entry_id());
    for (ItemId id : g.ids())
        for (int layer = 0; layer <= g.level_of(id); ++layer)
            CHECK(back.neighbors_of(id, layer) == g.neighbors_of(id, layer));
    const Dataset queries = gen_uniform(20, 8, 45);
    for (std::size_t qi = 0; qi < queries.count; ++qi) {
        const auto qn = normalize(queries.row(qi));
        const auto h1 = g.search(qn, {50, 5, 0});
        const auto h2 = back.search(qn, {50, 5, 0});
        REQUIRE(h1.size() == h2.size());
        for (std::size_t j = 0; j < h1.size(); ++j) CHECK(h1[j].id == h2[j].id);
    }
    std::filesystem::remove(path);
}

TEST_CASE("error contracts") {
    HnswGraph g(MetricKind::EuclideanNeg, 2);
    std::vector<float> q{0, 0};
    CHECK_THROWS_AS(g.search(q, {10, 1, 0}), EmptyIndexError);

    std::mt19937_64 rng(1);
    std::vector<float> x{1, 2};
    g.insert(ItemId(1), x, 10, rng);
    CHECK_THROWS_AS(g.insert(ItemId(1), x, 10, rng), DuplicateIdError);
    std::vector<float> bad{1, 2, 3};
    CHECK_THROWS_AS(g.insert(ItemId(2), bad, 10, rng), DimensionError);
    CHECK_THROWS_AS(g.search(bad, {10, 1, 0}), DimensionError);

    // search_level from a vertex that does not reach that level
    std::vector<float> y{0, 1};
    g.insert(ItemId(2), y, 10, rng);
    const Candidate entry{ItemId(999), 0.0};
    CHECK_THROWS_AS(g.search_level(0, q, std::span(&entry, 1), 4), InvalidEntryError);

    CHECK_THROWS_AS(
        HnswGraph::build({}, {}, 2, MetricKind::EuclideanNeg), EmptyInputError);
}

TEST_CASE("search_level respects the beam factor") {
    const HnswGraph g = build_random(300, 4, MetricKind::EuclideanNeg, 55);
    std::vector<float> q{0.5f, 0.5f, 0.5f, 0.5f};
    const Candidate entry{g.entry_id(), score(MetricKind::EuclideanNeg, q,
                                              g.vector_of(g.entry_id()))};
    for (int factor : {1, 4, 16}) {
        const auto w = g.search_level(0, q, std::span(&entry, 1), factor);
        CHECK(!w.empty());
        CHECK(w.size() <= std::size_t(factor));
        for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i - 1].score >= w[i].score);
    }
}
