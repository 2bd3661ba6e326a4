#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <vector>

#include <doctest.h>

#include "pyramid/eval.hpp"
#include "pyramid/index.hpp"

using namespace pyramid;
namespace fs = std::filesystem;

namespace {

IndexParams small_params() {
    IndexParams p;
    p.n_prime = 800;
    p.m = 32;
    p.w = 4;
    p.seed = 17;
    p.kmeans_iters = 10;
    return p;
}

fs::path temp_dir(const char* name) {
    const auto d = fs::temp_directory_path() / ("pyramid_index_" + std::string(name));
    fs::remove_all(d);
    return d;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("sampling is uniform, sized, and deterministic") {
    const auto s1 = sample_dataset(1000, 100, 3);
    const auto s2 = sample_dataset(1000, 100, 3);
    CHECK(s1 == s2);
    CHECK(s1.size() == 100);
    std::set<std::size_t> uniq(s1.begin(), s1.end());
    CHECK(uniq.size() == 100);
    for (std::size_t i : s1) CHECK(i < 1000);
    CHECK_THROWS_AS(sample_dataset(10, 11, 1), SampleTooLargeError);
}

TEST_CASE("built index covers the dataset exactly once per item") {
    const Dataset ds = gen_gaussian_mixture(3000, 8, 16, 0.3, 21);
    const PyramidIndex index = build_index(ds, MetricKind::EuclideanNeg, small_params());
    REQUIRE(index.w() == 4);
    std::size_t total = 0;
    std::set<ItemId> seen;
    for (const auto& shard : index.shards) {
        total += shard.item_ids.size();
        seen.insert(shard.item_ids.begin(), shard.item_ids.end());
        CHECK(shard.sub_hnsw.size() == shard.item_ids.size());
    }
    CHECK(total == 3000);
    CHECK(seen.size() == 3000);
}

TEST_CASE("route returns sorted unique shards and grows with K") {
    const Dataset ds = gen_gaussian_mixture(3000, 8, 16, 0.3, 22);
    const PyramidIndex index = build_index(ds, MetricKind::EuclideanNeg, small_params());
    const auto q = ds.row(5);
    std::size_t prev = 0;
    for (std::size_t K : {1, 2, 4, 8}) {
        const auto routed = index.route(q, K);
        CHECK(!routed.empty());
        CHECK(std::is_sorted(routed.begin(), routed.end()));
        CHECK(std::adjacent_find(routed.begin(), routed.end()) == routed.end());
        for (std::uint32_t s : routed) CHECK(s < index.w());
        CHECK(routed.size() >= prev);
        prev = routed.size();
    }
}

TEST_CASE("w=1 search equals a direct sub-HNSW search") {
    const Dataset ds = gen_uniform(1200, 8, 23);
    IndexParams p = small_params();
    p.w = 1;
    const PyramidIndex index = build_index(ds, MetricKind::EuclideanNeg, p);
    const Dataset queries = gen_uniform(25, 8, 24);
    for (std::size_t qi = 0; qi < queries.count; ++qi) {
        const auto via_index = index.search(queries.row(qi), 1, {60, 5, 0});
        const auto direct = index.shards[0].sub_hnsw.search(queries.row(qi), {60, 5, 0});
        REQUIRE(via_index.size() == direct.size());
        for (std::size_t j = 0; j < direct.size(); ++j)
            CHECK(via_index[j].id == direct[j].id);
    }
}

TEST_CASE("naive index fans out to every shard") {
    const Dataset ds = gen_uniform(1000, 8, 25);
    IndexParams p;
    p.w = 4;
    p.seed = 5;
    const PyramidIndex naive = build_index_naive(ds, MetricKind::EuclideanNeg, p);
    CHECK(!naive.has_meta);
    const auto routed = naive.route(ds.row(0), 1);
    CHECK(routed == std::vector<std::uint32_t>{0, 1, 2, 3});
    // near-equal deal
    for (const auto& shard : naive.shards)
        CHECK(std::llabs(std::int64_t(shard.item_ids.size()) - 250) <= 1);
}

TEST_CASE("angular mode normalizes items and queries consistently") {
    Dataset ds = gen_uniform(1500, 8, 26);
    for (auto& v : ds.data) v += 0.1f;  // keep away from zero norm
    const PyramidIndex index = build_index(ds, MetricKind::Angular, small_params());
    // scaling a query must not change the result under angular similarity
    std::vector<float> q(ds.row(7).begin(), ds.row(7).end());
    std::vector<float> q10 = q;
    for (auto& v : q10) v *= 10.0f;
    const auto a = index.search(q, 2, {60, 5, 0});
    const auto b = index.search(q10, 2, {60, 5, 0});
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j].id == b[j].id);
}

TEST_CASE("MIPS build replicates top-r items and bounds the overhead") {
    const Dataset ds = gen_lognormal_norm(4000, 8, 1.0, 27);
    IndexParams p = small_params();
    p.r = 4;
    const PyramidIndex index = build_index_mips(ds, p);
    std::size_t total = 0;
    for (const auto& shard : index.shards) total += shard.item_ids.size();
    CHECK(total >= 4000);
    CHECK(total <= 4000 + p.m * p.r);  // at most m*r replicas
    // every item still present somewhere
    std::set<ItemId> seen;
    for (const auto& shard : index.shards)
        seen.insert(shard.item_ids.begin(), shard.item_ids.end());
    CHECK(seen.size() == 4000);
}

TEST_CASE("top_r_mips returns each center's exact best inner products") {
    const Dataset ds = gen_lognormal_norm(500, 4, 0.5, 28);
    KmeansResult centers;
    centers.m = 2;
    centers.dim = 4;
    centers.centers = {1, 0, 0, 0, 0, 1, 0, 0};
    const auto replicas = top_r_mips(centers, ds, 3);
    REQUIRE(replicas.size() == 2);
    for (std::size_t c = 0; c < 2; ++c) {
        REQUIRE(replicas[c].size() == 3);
        // verify against a full scan
        double worst = 1e300;
        for (ItemId id : replicas[c])
            worst = std::min(worst, double(ds.row(std::size_t(id))[c]));
        for (std::size_t i = 0; i < ds.count; ++i)
            if (std::find(replicas[c].begin(), replicas[c].end(), ItemId(i)) ==
                replicas[c].end())
                CHECK(double(ds.row(i)[c]) <= worst + 1e-12);
    }
}

TEST_CASE("build_index rejects inner product and bad parameters") {
    const Dataset ds = gen_uniform(1000, 8, 29);
    CHECK_THROWS_AS(build_index(ds, MetricKind::InnerProduct, small_params()), ConfigError);
    IndexParams p = small_params();
    p.m = 2;  // m < w
    CHECK_THROWS_AS(build_index(ds, MetricKind::EuclideanNeg, p), ConfigError);
    CHECK_THROWS_AS(build_index(Dataset{}, MetricKind::EuclideanNeg, small_params()),
                    EmptyInputError);
}

TEST_CASE("save/load round-trips searches and meta-only load routes identically") {
    const Dataset ds = gen_gaussian_mixture(2500, 8, 16, 0.3, 30);
    const PyramidIndex index = build_index(ds, MetricKind::EuclideanNeg, small_params());
    const auto dir = temp_dir("rt");
    index.save(dir);

    const PyramidIndex loaded = PyramidIndex::load(dir);
    const PyramidIndex meta_only = PyramidIndex::load_meta(dir);
    const Dataset queries = gen_gaussian_mixture(20, 8, 16, 0.3, 31);
    for (std::size_t qi = 0; qi < queries.count; ++qi) {
        const auto a = index.search(queries.row(qi), 2, {60, 5, 0});
        const auto b = loaded.search(queries.row(qi), 2, {60, 5, 0});
        REQUIRE(a.size() == b.size());
        for (std::size_t j = 0; j < a.size(); ++j) {
            CHECK(a[j].id == b[j].id);
            CHECK(a[j].score == doctest::Approx(b[j].score));
        }
        CHECK(index.route(queries.row(qi), 2) == meta_only.route(queries.row(qi), 2));
    }
    const auto manifest = PyramidIndex::read_manifest(dir);
    CHECK(manifest.at("kind") == "pyramid");
    CHECK(manifest.at("w") == "4");
    CHECK(manifest.count("built_at") == 1);
    fs::remove_all(dir);
}

TEST_CASE("same seed rebuild is byte-identical apart from the timestamp") {
    const Dataset ds = gen_gaussian_mixture(1500, 8, 16, 0.3, 32);
    const auto d1 = temp_dir("det1");
    const auto d2 = temp_dir("det2");
    build_index(ds, MetricKind::EuclideanNeg, small_params()).save(d1);
    build_index(ds, MetricKind::EuclideanNeg, small_params()).save(d2);
    for (const auto& entry : fs::directory_iterator(d1)) {
        const auto name = entry.path().filename();
        if (name == "manifest") continue;  // holds built_at
        CHECK(file_bytes(entry.path()) == file_bytes(d2 / name));
    }
    fs::remove_all(d1);
    fs::remove_all(d2);
}
