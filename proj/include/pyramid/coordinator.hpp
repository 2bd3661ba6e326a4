#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "pyramid/broker.hpp"
#include "pyramid/config.hpp"
#include "pyramid/index.hpp"
#include "pyramid/net.hpp"
#include "pyramid/registry.hpp"

namespace pyramid {

/// Gather timeout with some shards missing; carries whatever arrived so the
/// caller can decide whether a degraded answer is acceptable.
struct PartialTimeoutError : std::runtime_error {
    PartialTimeoutError(const std::string& msg, QueryResult received,
                        std::vector<std::uint32_t> missing)
        : std::runtime_error(msg), partial(std::move(received)),
          missing_shards(std::move(missing)) {}
    QueryResult partial;
    std::vector<std::uint32_t> missing_shards;
};

/// Scatter-gather front end: routes a query on the meta graph, publishes one
/// QueryRequest per routed shard topic, and merges the PartialResults that
/// executors stream back over a direct connection. Holds a coordinator lease
/// while running.
class Coordinator {
public:
    using Callback = std::function<void(QueryResult, std::exception_ptr)>;

    Coordinator(const ClusterConfig& cfg, const std::string& instance_id);
    ~Coordinator();

    Coordinator(const Coordinator&) = delete;
    Coordinator& operator=(const Coordinator&) = delete;

    QueryResult execute(std::span<const float> q, std::size_t K, int k, int search_l,
                        int timeout_ms, std::size_t* shards_touched = nullptr);
    void execute_async(std::vector<float> q, std::size_t K, int k, int search_l,
                       int timeout_ms, Callback cb, std::size_t* shards_touched = nullptr);

    std::string reply_addr() const { return reply_listener_.local_addr(); }
    const PyramidIndex& meta_index() const { return index_; }
    std::size_t inflight() const;

private:
    using Clock = std::chrono::steady_clock;

    struct Gather {
        std::set<std::uint32_t> expected;
        std::map<std::uint32_t, QueryResult> partials;  // first reply per shard wins
        Clock::time_point deadline;
        int k = 0;
        Callback callback;
        bool done = false;
    };

    void accept_loop();
    void reader_loop(TcpConn conn);
    void sweep_loop();
    void renew_loop();
    void handle_partial(const PartialResultMsg& msg);
    bool epoch_current(std::uint32_t shard, std::uint64_t epoch);
    void finish(std::uint64_t query_id, Gather&& g, std::exception_ptr err);

    ClusterConfig cfg_;
    std::string instance_;
    PyramidIndex index_;
    BrokerClient broker_;
    RegistryClient registry_;
    Lease lease_;
    TcpListener reply_listener_;

    mutable std::mutex mu_;
    std::map<std::uint64_t, Gather> gathers_;
    std::atomic<std::uint64_t> next_query_id_{1};
    bool stopping_ = false;
    std::condition_variable stop_cv_;

    // registry snapshot of live executor epochs per shard, refreshed lazily
    std::mutex epoch_mu_;
    std::map<std::uint32_t, std::set<std::uint64_t>> epoch_cache_;
    Clock::time_point epoch_cache_at_{};

    std::thread accept_thread_;
    std::thread sweep_thread_;
    std::thread renew_thread_;
    std::vector<std::thread> reader_threads_;
    std::mutex threads_mu_;
};

}  // namespace pyramid
