#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "pyramid/broker.hpp"
#include "pyramid/config.hpp"
#include "pyramid/hnsw.hpp"
#include "pyramid/net.hpp"
#include "pyramid/registry.hpp"

namespace pyramid {

/// Serves one shard replica: holds an executor lease, consumes QueryRequests
/// from the shard topic, searches the immutable sub-HNSW, and streams
/// PartialResults straight back to the issuing coordinator. Runs standalone
/// with no custom logic beyond the config file.
class Executor {
public:
    struct Options {
        int workers = 2;
        bool exit_on_kill = true;  // admin "kill" terminates the process
    };

    /// slot < 0 claims the first free replica slot; a specific slot exits
    /// with LeaseHeldError when another live instance holds it.
    Executor(const ClusterConfig& cfg, std::uint32_t shard, const std::string& instance_id,
             int slot, Options opts);
    Executor(const ClusterConfig& cfg, std::uint32_t shard, const std::string& instance_id,
             int slot = -1)
        : Executor(cfg, shard, instance_id, slot, Options{}) {}
    ~Executor();

    Executor(const Executor&) = delete;
    Executor& operator=(const Executor&) = delete;

    void start();
    void stop();
    /// Blocks until stop() or lease loss / admin kill.
    void wait();

    std::string admin_addr() const { return admin_listener_.local_addr(); }
    std::uint64_t epoch() const { return lease_.epoch; }
    std::uint32_t shard() const { return shard_; }
    int slot() const { return slot_; }
    std::uint64_t processed() const { return processed_.load(); }
    bool lease_lost() const { return lease_lost_.load(); }

private:
    void worker_loop(int worker);
    void renew_loop();
    void admin_loop();
    void serve_admin(TcpConn conn);
    std::string handle_admin(const std::string& request);
    void process(const Bytes& payload);
    TcpConn& reply_conn(const std::string& reply_to);

    ClusterConfig cfg_;
    Options opts_;
    std::uint32_t shard_ = 0;
    int slot_ = -1;
    std::string instance_;
    std::string topic_;
    HnswGraph graph_;
    RegistryClient registry_;
    Lease lease_;
    TcpListener admin_listener_;

    std::mutex mu_;
    std::condition_variable stop_cv_;
    bool stopping_ = false;
    std::atomic<std::uint64_t> processed_{0};
    std::atomic<bool> lease_lost_{false};
    std::atomic<double> slow_factor_{1.0};

    std::mutex reply_mu_;
    std::map<std::string, TcpConn> reply_conns_;  // coordinator addr -> connection

    std::vector<std::thread> workers_;
    std::thread renew_thread_;
    std::thread admin_thread_;
    std::vector<std::thread> admin_conns_;
    std::mutex admin_conns_mu_;
};

}  // namespace pyramid
