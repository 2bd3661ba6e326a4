#include "pyramid/master.hpp"

#include <signal.h>
#include <unistd.h>

#include <set>
#include <vector>

namespace pyramid {

Master::Master(const ClusterConfig& cfg, const std::string& instance_id,
               std::size_t num_shards, Spawner spawner)
    : cfg_(cfg),
      instance_(instance_id),
      num_shards_(num_shards),
      spawner_(std::move(spawner)),
      registry_(cfg.registry_addr) {}

Master::~Master() { stop(); }

void Master::start() {
    run_thread_ = std::thread([this] { run(); });
}

void Master::stop() {
    {
        std::lock_guard lk(mu_);
        if (stopping_) return;
        stopping_ = true;
    }
    stop_cv_.notify_all();
    if (run_thread_.joinable()) run_thread_.join();
    if (active_.load()) {
        try {
            registry_.release(lease_);
        } catch (const std::exception&) {
        }
        active_.store(false);
    }
}

void Master::wait() {
    if (run_thread_.joinable()) run_thread_.join();
}

void Master::run() {
    auto sleep_until_stop = [this](int ms) {
        std::unique_lock lk(mu_);
        return stop_cv_.wait_for(lk, std::chrono::milliseconds(ms),
                                 [this] { return stopping_; });
    };
    for (;;) {
        // standby phase: poll for the master lease
        while (!active_.load()) {
            {
                std::lock_guard lk(mu_);
                if (stopping_) return;
            }
            try {
                if (auto l = registry_.try_acquire("master", instance_, cfg_.lease_ttl_ms)) {
                    lease_ = *l;
                    active_.store(true);
                    break;
                }
            } catch (const ConnectivityError&) {
            }
            if (sleep_until_stop(cfg_.lease_renew_ms)) return;
        }
        // active phase: monitor and renew until stopped or the lease is lost
        while (active_.load()) {
            try {
                monitor_once();
            } catch (const ConnectivityError&) {
            }
            if (sleep_until_stop(std::min(cfg_.monitor_period_ms, cfg_.lease_renew_ms)))
                return;
            bool ok = true;
            try {
                ok = registry_.renew(lease_, cfg_.lease_ttl_ms);
            } catch (const ConnectivityError&) {
            }
            if (!ok) active_.store(false);  // taken over; fall back to standby
        }
    }
}

void Master::monitor_once() {
    std::set<std::string> live;
    for (const auto& lease : registry_.list()) live.insert(lease.role);
    const auto now = Clock::now();
    for (std::uint32_t s = 0; s < num_shards_; ++s) {
        for (int slot = 0; slot < cfg_.replicas; ++slot) {
            const std::string role =
                "executor/" + std::to_string(s) + "/" + std::to_string(slot);
            if (live.count(role)) continue;
            auto it = last_spawn_.find(role);
            if (it != last_spawn_.end() &&
                now - it->second < std::chrono::milliseconds(cfg_.lease_ttl_ms))
                continue;  // a replacement was just launched; give it time
            last_spawn_[role] = now;
            spawner_(s, slot);
            respawns_.fetch_add(1);
        }
    }
}

Master::Spawner Master::process_spawner(std::string exe_path, std::string config_path) {
    ::signal(SIGCHLD, SIG_IGN);  // children are detached; never reap
    return [exe = std::move(exe_path), cfg = std::move(config_path)](std::uint32_t shard,
                                                                     int slot) {
        const pid_t pid = ::fork();
        if (pid < 0) return;
        if (pid == 0) {
            ::setsid();
            const std::string shard_s = std::to_string(shard);
            const std::string slot_s = std::to_string(slot);
            std::vector<const char*> argv = {exe.c_str(),     "executor", "--config",
                                             cfg.c_str(),     "--shard",  shard_s.c_str(),
                                             "--slot",        slot_s.c_str(), nullptr};
            ::execv(exe.c_str(), const_cast<char* const*>(argv.data()));
            ::_exit(127);
        }
    };
}

}  // namespace pyramid
