#include "pyramid/eval.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "pyramid/parallel.hpp"

namespace pyramid {

GroundTruth ground_truth(const Dataset& dataset, const Dataset& queries, std::size_t k,
                         MetricKind metric) {
    if (dataset.dim != queries.dim) throw DimensionError("ground_truth: dimension mismatch");
    const std::size_t kk = std::min(k, dataset.count);  // clipped when k > |dataset|
    GroundTruth gt;
    gt.k = kk;
    gt.entries.resize(queries.count);
    parallel_for(queries.count, [&](std::size_t qi) {
        const auto q = queries.row(qi);
        QueryResult all;
        all.reserve(dataset.count);
        for (std::size_t i = 0; i < dataset.count; ++i)
            all.push_back({ItemId(i), score(metric, q, dataset.row(i))});
        std::partial_sort(all.begin(), all.begin() + std::ptrdiff_t(kk), all.end(),
                          better_hit);
        all.resize(kk);
        gt.entries[qi] = std::move(all);
    });
    return gt;
}

double precision(const QueryResult& result, const QueryResult& truth, std::size_t k) {
    if (k == 0) return 0.0;
    std::unordered_set<ItemId> truth_ids;
    for (std::size_t i = 0; i < truth.size() && i < k; ++i) truth_ids.insert(truth[i].id);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < result.size() && i < k; ++i)
        if (truth_ids.count(result[i].id)) hit++;
    return double(hit) / double(k);
}

QueryResult merge_partials(const std::vector<QueryResult>& partials, std::size_t k) {
    std::unordered_map<ItemId, double> best;
    for (const auto& part : partials)
        for (const auto& hit : part) {
            auto [it, inserted] = best.emplace(hit.id, hit.score);
            if (!inserted && hit.score > it->second) it->second = hit.score;
        }
    QueryResult merged;
    merged.reserve(best.size());
    for (const auto& [id, sc] : best) merged.push_back({id, sc});
    std::sort(merged.begin(), merged.end(), better_hit);
    if (merged.size() > k) merged.resize(k);
    return merged;
}

std::vector<double> mips_norm_bias(const Dataset& dataset, const Dataset& queries,
                                   std::size_t k, std::size_t buckets) {
    // norm-percentile bucket of every item
    std::vector<std::size_t> order(dataset.count);
    for (std::size_t i = 0; i < dataset.count; ++i) order[i] = i;
    std::vector<double> norms(dataset.count);
    for (std::size_t i = 0; i < dataset.count; ++i) norms[i] = l2_norm(dataset.row(i));
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });
    std::vector<std::size_t> bucket_of(dataset.count);
    for (std::size_t rank = 0; rank < order.size(); ++rank)
        bucket_of[order[rank]] = std::min(buckets - 1, rank * buckets / dataset.count);

    const auto gt = ground_truth(dataset, queries, k, MetricKind::InnerProduct);
    std::vector<double> shares(buckets, 0.0);
    std::size_t total = 0;
    for (const auto& entry : gt.entries)
        for (const auto& hit : entry) {
            shares[bucket_of[std::size_t(hit.id)]] += 1.0;
            total++;
        }
    if (total > 0)
        for (double& s : shares) s /= double(total);
    return shares;
}

}  // namespace pyramid
