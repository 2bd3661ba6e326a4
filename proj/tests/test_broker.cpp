#include <atomic>
#include <chrono>
#include <cstring>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include <doctest.h>

#include "pyramid/broker.hpp"
#include "pyramid/wire.hpp"

using namespace pyramid;
using namespace std::chrono_literals;

namespace {

Bytes payload_of(std::uint32_t i) {
    Bytes b(4);
    std::memcpy(b.data(), &i, 4);
    return b;
}

std::uint32_t id_of(const Bytes& b) {
    std::uint32_t i = 0;
    std::memcpy(&i, b.data(), 4);
    return i;
}

}  // namespace

TEST_CASE("a single member receives every message in publish order") {
    BrokerServer server("127.0.0.1", 0);
    server.start();
    BrokerClient client(server.addr());
    client.subscribe("t", "m1");
    for (std::uint32_t i = 0; i < 50; ++i) client.publish("t", payload_of(i));
    for (std::uint32_t i = 0; i < 50; ++i) {
        const auto msg = client.fetch("t", "m1", 1000);
        REQUIRE(msg.has_value());
        CHECK(id_of(*msg) == i);
    }
    CHECK(!client.fetch("t", "m1", 50).has_value());
    server.stop();
}

TEST_CASE("publish to an empty group buffers until a member joins") {
    BrokerServer server("127.0.0.1", 0);
    server.start();
    BrokerClient client(server.addr());
    CHECK(client.publish("t", payload_of(7)) == 0);  // zero live members
    client.subscribe("t", "m1");
    const auto msg = client.fetch("t", "m1", 1000);
    REQUIRE(msg.has_value());
    CHECK(id_of(*msg) == 7);
    server.stop();
}

TEST_CASE("two equal consumers split the load roughly evenly, exactly once") {
    BrokerServer::Options opts;
    opts.rebalance_ms = 100;
    opts.member_ttl_ms = 2000;
    BrokerServer server("127.0.0.1", 0, opts);
    server.start();

    const int total = 1000;
    std::atomic<int> counts[2] = {{0}, {0}};
    std::set<std::uint32_t> seen;
    std::mutex seen_mu;
    std::atomic<bool> done{false};

    auto consumer = [&](int idx) {
        BrokerClient c(server.addr());
        const std::string member = "m" + std::to_string(idx);
        c.subscribe("t", member);
        while (!done.load()) {
            const auto msg = c.fetch("t", member, 50);
            if (!msg) continue;
            counts[idx].fetch_add(1);
            std::lock_guard lk(seen_mu);
            seen.insert(id_of(*msg));
        }
    };
    std::thread c0(consumer, 0), c1(consumer, 1);
    std::this_thread::sleep_for(100ms);  // both subscribed

    BrokerClient producer(server.addr());
    for (std::uint32_t i = 0; i < total; ++i) producer.publish("t", payload_of(i));

    const auto deadline = std::chrono::steady_clock::now() + 10s;
    while (counts[0] + counts[1] < total && std::chrono::steady_clock::now() < deadline)
        std::this_thread::sleep_for(20ms);
    done.store(true);
    c0.join();
    c1.join();

    CHECK(counts[0] + counts[1] == total);   // exactly once, no loss
    CHECK(seen.size() == std::size_t(total));  // no duplicates
    CHECK(counts[0] >= 400);
    CHECK(counts[1] >= 400);
    server.stop();
}

TEST_CASE("a slow member receives well under 25% after rebalancing") {
    BrokerServer::Options opts;
    opts.rebalance_ms = 100;
    opts.member_ttl_ms = 3000;
    BrokerServer server("127.0.0.1", 0, opts);
    server.start();

    const int total = 600;
    std::atomic<int> counts[2] = {{0}, {0}};
    std::atomic<bool> done{false};
    auto consumer = [&](int idx, std::chrono::milliseconds service_time) {
        BrokerClient c(server.addr());
        const std::string member = "m" + std::to_string(idx);
        c.subscribe("t", member);
        while (!done.load()) {
            const auto msg = c.fetch("t", member, 50);
            if (!msg) continue;
            counts[idx].fetch_add(1);
            std::this_thread::sleep_for(service_time);
        }
    };
    std::thread fast(consumer, 0, 1ms), slow(consumer, 1, 10ms);
    std::this_thread::sleep_for(100ms);

    BrokerClient producer(server.addr());
    for (std::uint32_t i = 0; i < total; ++i) {
        producer.publish("t", payload_of(i));
        std::this_thread::sleep_for(2ms);  // sustained load near saturation
    }
    const auto deadline = std::chrono::steady_clock::now() + 20s;
    while (counts[0] + counts[1] < total && std::chrono::steady_clock::now() < deadline)
        std::this_thread::sleep_for(20ms);
    done.store(true);
    fast.join();
    slow.join();

    CHECK(counts[0] + counts[1] == total);
    CHECK(double(counts[1]) / double(total) < 0.25);
    server.stop();
}

TEST_CASE("a dead member's pending messages are redelivered to survivors") {
    BrokerServer::Options opts;
    opts.rebalance_ms = 50;
    opts.member_ttl_ms = 200;
    BrokerServer server("127.0.0.1", 0, opts);
    server.start();
    BrokerClient client(server.addr());

    client.subscribe("t", "dead");
    for (std::uint32_t i = 0; i < 20; ++i) client.publish("t", payload_of(i));
    // "dead" never fetches; after the TTL its queue returns to the pool
    std::this_thread::sleep_for(400ms);
    client.subscribe("t", "live");
    std::set<std::uint32_t> got;
    const auto deadline = std::chrono::steady_clock::now() + 5s;
    while (got.size() < 20 && std::chrono::steady_clock::now() < deadline) {
        const auto msg = client.fetch("t", "live", 200);
        if (msg) got.insert(id_of(*msg));
    }
    CHECK(got.size() == 20);  // exactly-once: a surviving member got them all
    server.stop();
}

TEST_CASE("unsubscribe returns a member's queue to the pool") {
    BrokerServer server("127.0.0.1", 0);
    server.start();
    BrokerClient client(server.addr());
    client.subscribe("t", "m1");
    client.publish("t", payload_of(1));
    client.publish("t", payload_of(2));
    client.unsubscribe("t", "m1");
    client.subscribe("t", "m2");
    std::set<std::uint32_t> got;
    for (int i = 0; i < 2; ++i) {
        const auto msg = client.fetch("t", "m2", 1000);
        REQUIRE(msg.has_value());
        got.insert(id_of(*msg));
    }
    CHECK(got == std::set<std::uint32_t>{1, 2});
    server.stop();
}
