#include "pyramid/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>
#include <vector>

namespace pyramid {

namespace {

using Clock = std::chrono::steady_clock;

struct Samples {
    std::mutex mu;
    std::vector<double> latencies_ms;
    double precision_sum = 0;
    double access_sum = 0;
    double evals_sum = 0;
    std::size_t queries = 0;
    std::size_t failed = 0;
};

double percentile(std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0;
    const auto idx = std::size_t(std::ceil(p * double(sorted.size()))) - 1;
    return sorted[std::min(idx, sorted.size() - 1)];
}

BenchReport summarize(Samples& s, double elapsed_s, const BenchOptions& opts,
                      std::size_t w, bool has_truth) {
    std::sort(s.latencies_ms.begin(), s.latencies_ms.end());
    BenchReport r;
    r.queries = s.queries;
    r.failed = s.failed;
    const double done = double(std::max<std::size_t>(s.queries - s.failed, 1));
    r.precision_mean = has_truth ? s.precision_sum / done : 0;
    r.access_rate_mean = s.access_sum / (double(std::max<std::size_t>(s.queries, 1)) * double(w));
    r.throughput_qps = elapsed_s > 0 ? double(s.queries) / elapsed_s : 0;
    r.latency_p50_ms = percentile(s.latencies_ms, 0.50);
    r.latency_p90_ms = percentile(s.latencies_ms, 0.90);
    r.distance_computations_per_query = s.evals_sum / double(std::max<std::size_t>(s.queries, 1));
    r.config = {{"K", std::to_string(opts.K)},
                {"k", std::to_string(opts.k)},
                {"search_l", std::to_string(opts.search_l)},
                {"concurrency", std::to_string(opts.concurrency)},
                {"duration_s", std::to_string(opts.duration_s)},
                {"w", std::to_string(w)}};
    return r;
}

/// Replays queries with a shared cursor; run(q_index) -> (latency_ms,
/// precision or -1 on failure, shards_touched, evals).
template <typename RunFn>
BenchReport replay(const Dataset& queries, const GroundTruth* truth, const BenchOptions& opts,
                   std::size_t w, RunFn run) {
    Samples samples;
    std::atomic<std::size_t> cursor{0};
    const auto start = Clock::now();
    const auto deadline =
        start + std::chrono::duration_cast<Clock::duration>(
                    std::chrono::duration<double>(opts.duration_s));
    const bool timed = opts.duration_s > 0;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (!timed && i >= queries.count) return;
            if (timed && Clock::now() >= deadline) return;
            const std::size_t qi = i % queries.count;

            const auto t0 = Clock::now();
            double prec = 0;
            std::size_t touched = 0;
            std::size_t evals = 0;
            bool ok = true;
            try {
                const QueryResult result = run(qi, touched, evals);
                if (truth)
                    prec = precision(result, truth->entries[qi],
                                     std::min<std::size_t>(std::size_t(opts.k), truth->k));
            } catch (const std::exception&) {
                ok = false;
            }
            const double ms =
                std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

            std::lock_guard lk(samples.mu);
            samples.queries++;
            samples.access_sum += double(touched);
            samples.evals_sum += double(evals);
            if (ok) {
                samples.latencies_ms.push_back(ms);
                samples.precision_sum += prec;
            } else {
                samples.failed++;
            }
        }
    };

    std::vector<std::thread> threads;
    for (int t = 0; t < std::max(1, opts.concurrency); ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    const double elapsed_s = std::chrono::duration<double>(Clock::now() - start).count();
    return summarize(samples, elapsed_s, opts, w, truth != nullptr);
}

}  // namespace

BenchReport run_benchmark_local(const PyramidIndex& index, const Dataset& queries,
                                const GroundTruth* truth, const BenchOptions& opts) {
    if (queries.count == 0) throw EmptyInputError("empty query set");
    SearchParams params{opts.search_l, opts.k, 0};
    auto report = replay(queries, truth, opts, index.w(),
                         [&](std::size_t qi, std::size_t& touched, std::size_t& evals) {
                             SearchStats stats;
                             auto result =
                                 index.search(queries.row(qi), opts.K, params, &stats, &touched);
                             evals = stats.score_evals;
                             return result;
                         });
    report.config["mode"] = "local";
    return report;
}

BenchReport run_benchmark_cluster(Coordinator& coordinator, const Dataset& queries,
                                  const GroundTruth* truth, const BenchOptions& opts) {
    if (queries.count == 0) throw EmptyInputError("empty query set");
    const std::size_t w = coordinator.meta_index().w();
    auto report = replay(queries, truth, opts, w,
                         [&](std::size_t qi, std::size_t& touched, std::size_t& evals) {
                             evals = 0;  // executor-side work is not reported back
                             return coordinator.execute(queries.row(qi), opts.K, opts.k,
                                                        opts.search_l, opts.timeout_ms,
                                                        &touched);
                         });
    report.config["mode"] = "cluster";
    return report;
}

void BenchReport::write_keyvalue(std::ostream& os) const {
    os << "queries=" << queries << "\n"
       << "failed=" << failed << "\n"
       << "precision_mean=" << precision_mean << "\n"
       << "access_rate_mean=" << access_rate_mean << "\n"
       << "throughput_qps=" << throughput_qps << "\n"
       << "latency_p50_ms=" << latency_p50_ms << "\n"
       << "latency_p90_ms=" << latency_p90_ms << "\n"
       << "distance_computations_per_query=" << distance_computations_per_query << "\n";
    for (const auto& [key, value] : config) os << "config_" << key << "=" << value << "\n";
}

void BenchReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot write " + path.string(), 0);
    os << "queries,failed,precision_mean,access_rate_mean,throughput_qps,latency_p50_ms,"
          "latency_p90_ms,distance_computations_per_query";
    for (const auto& [key, _] : config) os << ",config_" << key;
    os << "\n"
       << queries << "," << failed << "," << precision_mean << "," << access_rate_mean << ","
       << throughput_qps << "," << latency_p50_ms << "," << latency_p90_ms << ","
       << distance_computations_per_query;
    for (const auto& [_, value] : config) os << "," << value;
    os << "\n";
}

}  // namespace pyramid
