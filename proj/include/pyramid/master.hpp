#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include "pyramid/config.hpp"
#include "pyramid/registry.hpp"

namespace pyramid {

/// Cluster supervisor: holds (or stands by for) the master lease, scans the
/// registry every monitoring period, and respawns an executor for every
/// replica slot whose lease has expired. Multiple masters may run; exactly
/// one is active, the rest are hot standbys that take over on lease expiry.
class Master {
public:
    /// Respawns slot `slot` of shard `shard`; the default implementation
    /// fork+execs this binary's `executor` subcommand.
    using Spawner = std::function<void(std::uint32_t shard, int slot)>;

    Master(const ClusterConfig& cfg, const std::string& instance_id, std::size_t num_shards,
           Spawner spawner);
    ~Master();

    Master(const Master&) = delete;
    Master& operator=(const Master&) = delete;

    void start();
    void stop();
    void wait();

    bool is_active() const { return active_.load(); }
    std::uint64_t respawns() const { return respawns_.load(); }

    /// Spawner that detaches `exe executor --config <config> --shard <s>
    /// --slot <slot>` as its own session (survives the master's death).
    static Spawner process_spawner(std::string exe_path, std::string config_path);

private:
    using Clock = std::chrono::steady_clock;

    void run();
    void monitor_once();

    ClusterConfig cfg_;
    std::string instance_;
    std::size_t num_shards_ = 0;
    Spawner spawner_;
    RegistryClient registry_;
    Lease lease_;

    std::mutex mu_;
    std::condition_variable stop_cv_;
    bool stopping_ = false;
    std::atomic<bool> active_{false};
    std::atomic<std::uint64_t> respawns_{0};
    // last respawn per role, to avoid spawn storms while a replacement is
    // still starting up
    std::map<std::string, Clock::time_point> last_spawn_;
    std::thread run_thread_;
};

}  // namespace pyramid
