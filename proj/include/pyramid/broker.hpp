#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pyramid/net.hpp"

namespace pyramid {

/// In-process message broker with Kafka-like observable semantics: one
/// topic per shard, executor consumer groups, each message consumed by at
/// most one live member, and periodic rebalancing that shifts pending
/// messages toward members with higher recent completion rates (so a slow
/// member receives fewer requests).
class BrokerServer {
public:
    struct Options {
        int rebalance_ms = 500;
        int member_ttl_ms = 2000;     // member considered dead after this silence
        int buffered_ttl_ms = 30000;  // unconsumed messages on empty groups
    };

    BrokerServer(const std::string& host, std::uint16_t port, Options opts);
    BrokerServer(const std::string& host, std::uint16_t port)
        : BrokerServer(host, port, Options{}) {}
    ~BrokerServer();

    void start();
    void stop();
    std::string addr() const { return listener_.local_addr(); }

    struct MemberStats {
        std::string member;
        std::uint64_t delivered = 0;
        std::size_t backlog = 0;
        bool live = false;
    };
    std::vector<MemberStats> topic_stats(const std::string& topic);
    std::size_t live_members(const std::string& topic);

private:
    using Clock = std::chrono::steady_clock;

    struct Member {
        std::deque<Bytes> queue;
        Clock::time_point last_seen;
        Clock::time_point last_assigned;
        std::deque<Clock::time_point> completions;
        std::uint64_t delivered = 0;
    };
    struct Topic {
        std::deque<std::pair<Clock::time_point, Bytes>> unassigned;
        std::map<std::string, Member> members;
    };

    void accept_loop();
    void serve_conn(TcpConn conn);
    std::string handle(const std::string& request);
    void rebalance_loop();
    void rebalance_topic(Topic& topic);  // callers hold mu_
    double member_rate(const Member& m) const;
    bool member_live(const Member& m) const;

    Options opts_;
    TcpListener listener_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::string, Topic> topics_;
    bool stopping_ = false;
    std::thread accept_thread_;
    std::thread rebalance_thread_;
    std::vector<std::thread> conn_threads_;
    std::mutex threads_mu_;
};

/// Client side; keeps one connection, reconnects on failure. Thread-safe.
class BrokerClient {
public:
    explicit BrokerClient(std::string addr) : addr_(std::move(addr)) {}

    void subscribe(const std::string& topic, const std::string& member);
    void unsubscribe(const std::string& topic, const std::string& member);
    /// Returns the number of live group members at publish time.
    std::size_t publish(const std::string& topic, const Bytes& payload);
    /// Long-polls up to wait_ms; nullopt when no message was available.
    std::optional<Bytes> fetch(const std::string& topic, const std::string& member,
                               int wait_ms);

private:
    std::string request(const std::string& body);

    std::string addr_;
    std::mutex mu_;
    TcpConn conn_;
};

}  // namespace pyramid
