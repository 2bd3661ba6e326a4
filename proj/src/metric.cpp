#include "pyramid/metric.hpp"

#include <cmath>

namespace pyramid {

std::string to_string(MetricKind m) {
    switch (m) {
        case MetricKind::EuclideanNeg: return "euclidean";
        case MetricKind::Angular: return "angular";
        case MetricKind::InnerProduct: return "ip";
    }
    return "unknown";
}

MetricKind metric_from_string(const std::string& s) {
    if (s == "euclidean" || s == "l2") return MetricKind::EuclideanNeg;
    if (s == "angular" || s == "cosine") return MetricKind::Angular;
    if (s == "ip" || s == "inner_product" || s == "mips") return MetricKind::InnerProduct;
    throw ConfigError("unknown metric: " + s);
}

namespace {

double dot(std::span<const float> q, std::span<const float> x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) acc += double(q[i]) * double(x[i]);
    return acc;
}

double neg_l2(std::span<const float> q, std::span<const float> x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double d = double(q[i]) - double(x[i]);
        acc += d * d;
    }
    return -std::sqrt(acc);
}

}  // namespace

double score(MetricKind metric, std::span<const float> q, std::span<const float> x) {
    if (q.size() != x.size())
        throw DimensionError("score: dimension mismatch (" + std::to_string(q.size()) +
                             " vs " + std::to_string(x.size()) + ")");
    switch (metric) {
        case MetricKind::EuclideanNeg: return neg_l2(q, x);
        case MetricKind::Angular:
        case MetricKind::InnerProduct: return dot(q, x);
    }
    return 0.0;
}

double l2_norm(std::span<const float> x) {
    double acc = 0.0;
    for (float v : x) acc += double(v) * double(v);
    return std::sqrt(acc);
}

std::vector<float> normalize(std::span<const float> x) {
    std::vector<float> out(x.begin(), x.end());
    normalize_in_place(out);
    return out;
}

void normalize_in_place(std::span<float> x) {
    const double n = l2_norm(x);
    if (n == 0.0) throw ZeroNormError("normalize: zero vector");
    for (float& v : x) v = float(double(v) / n);
}

}  // namespace pyramid
