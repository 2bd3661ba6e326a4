#include <cmath>
#include <vector>

#include <doctest.h>

#include "pyramid/metric.hpp"

using namespace pyramid;

TEST_CASE("euclidean similarity is negative distance") {
    std::vector<float> a{0.0f, 0.0f}, b{3.0f, 4.0f};
    CHECK(score(MetricKind::EuclideanNeg, a, b) == doctest::Approx(-5.0));
    CHECK(score(MetricKind::EuclideanNeg, a, a) == doctest::Approx(0.0));
    // symmetric
    CHECK(score(MetricKind::EuclideanNeg, b, a) ==
          doctest::Approx(score(MetricKind::EuclideanNeg, a, b)));
}

TEST_CASE("closer points score higher under every metric") {
    std::vector<float> q{1.0f, 0.0f};
    std::vector<float> near{0.9f, 0.1f}, far{-1.0f, 0.0f};
    for (MetricKind m :
         {MetricKind::EuclideanNeg, MetricKind::Angular, MetricKind::InnerProduct})
        CHECK(score(m, q, near) > score(m, q, far));
}

TEST_CASE("inner product and angular are dot products") {
    std::vector<float> a{1.0f, 2.0f, 3.0f}, b{4.0f, -5.0f, 6.0f};
    CHECK(score(MetricKind::InnerProduct, a, b) == doctest::Approx(4 - 10 + 18));
    CHECK(score(MetricKind::Angular, a, b) == doctest::Approx(12.0));
}

TEST_CASE("dimension mismatch is rejected") {
    std::vector<float> a{1.0f, 2.0f}, b{1.0f};
    CHECK_THROWS_AS(score(MetricKind::EuclideanNeg, a, b), DimensionError);
    CHECK_THROWS_AS(score(MetricKind::InnerProduct, a, b), DimensionError);
}

TEST_CASE("accumulation is wide enough for long vectors") {
    // 1e8-scale sums overflow a float accumulator's precision badly; the
    // double path keeps the result exact here
    std::vector<float> big(4096, 4096.0f);
    CHECK(score(MetricKind::InnerProduct, big, big) ==
          doctest::Approx(4096.0 * 4096.0 * 4096.0));
}

TEST_CASE("normalize produces unit vectors and rejects zero") {
    std::vector<float> v{3.0f, 4.0f};
    const auto u = normalize(v);
    CHECK(l2_norm(u) == doctest::Approx(1.0));
    CHECK(u[0] == doctest::Approx(0.6));
    CHECK(u[1] == doctest::Approx(0.8));

    std::vector<float> z{0.0f, 0.0f};
    CHECK_THROWS_AS(normalize(z), ZeroNormError);

    std::vector<float> w{1.0f, 1.0f, 1.0f, 1.0f};
    normalize_in_place(w);
    CHECK(l2_norm(w) == doctest::Approx(1.0));
}

TEST_CASE("metric names round-trip") {
    for (MetricKind m :
         {MetricKind::EuclideanNeg, MetricKind::Angular, MetricKind::InnerProduct})
        CHECK(metric_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(metric_from_string("cosine-ish"), ConfigError);
}
