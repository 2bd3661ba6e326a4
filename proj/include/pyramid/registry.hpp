#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pyramid/net.hpp"

namespace pyramid {

/// A time-bounded exclusive claim on a role. The epoch increases on every
/// ownership change; messages stamped with a stale epoch are rejected.
struct Lease {
    std::string role;
    std::string instance;
    std::uint64_t epoch = 0;
};

struct LeaseInfo {
    std::string role;
    std::string instance;
    std::uint64_t epoch = 0;
    int expires_in_ms = 0;
    std::string meta;  // JSON blob (admin address, host, ...)
};

/// Lease registry: the in-repo stand-in for the lock-file service that
/// coordinators, executors and the master register with. Expiry of a lease
/// signals failure and authorizes takeover at the next epoch.
class RegistryServer {
public:
    RegistryServer(const std::string& host, std::uint16_t port);
    ~RegistryServer();

    void start();
    void stop();
    std::string addr() const { return listener_.local_addr(); }

private:
    using Clock = std::chrono::steady_clock;

    struct Record {
        std::string instance;
        std::uint64_t epoch = 0;
        Clock::time_point expiry;
        std::string meta;
        int ttl_ms = 0;
    };

    void accept_loop();
    void serve_conn(TcpConn conn);
    std::string handle(const std::string& request);

    TcpListener listener_;
    std::mutex mu_;
    std::map<std::string, Record> leases_;       // live holders by role
    std::map<std::string, std::uint64_t> epochs_;  // monotone per role
    bool stopping_ = false;
    std::thread accept_thread_;
    std::vector<std::thread> conn_threads_;
    std::mutex threads_mu_;
};

/// Thread-safe client; one connection per request burst, reconnects as
/// needed.
class RegistryClient {
public:
    explicit RegistryClient(std::string addr) : addr_(std::move(addr)) {}

    /// Throws LeaseHeldError when another live instance holds the role.
    Lease acquire(const std::string& role, const std::string& instance, int ttl_ms,
                  const std::string& meta = "{}");
    std::optional<Lease> try_acquire(const std::string& role, const std::string& instance,
                                     int ttl_ms, const std::string& meta = "{}");
    /// False when the lease was lost (expired or taken over).
    bool renew(const Lease& lease, int ttl_ms);
    void release(const Lease& lease);
    std::vector<LeaseInfo> list();
    std::optional<LeaseInfo> get(const std::string& role);

private:
    std::string request(const std::string& body);

    std::string addr_;
    std::mutex mu_;
    TcpConn conn_;
};

}  // namespace pyramid
