#include <chrono>
#include <thread>

#include <doctest.h>

#include "pyramid/registry.hpp"

using namespace pyramid;
using namespace std::chrono_literals;

TEST_CASE("acquire on a free role starts at epoch 1") {
    RegistryServer server("127.0.0.1", 0);
    server.start();
    RegistryClient client(server.addr());
    const Lease lease = client.acquire("executor/0/0", "inst-a", 1000);
    CHECK(lease.epoch == 1);
    server.stop();
}

TEST_CASE("a held role rejects other instances but re-grants its holder") {
    RegistryServer server("127.0.0.1", 0);
    server.start();
    RegistryClient client(server.addr());
    const Lease lease = client.acquire("master", "inst-a", 1000);
    CHECK_THROWS_AS(client.acquire("master", "inst-b", 1000), LeaseHeldError);
    CHECK(!client.try_acquire("master", "inst-b", 1000).has_value());
    // same holder re-acquiring keeps the epoch (no ownership change)
    const Lease again = client.acquire("master", "inst-a", 1000);
    CHECK(again.epoch == lease.epoch);
    server.stop();
}

TEST_CASE("expiry hands the role over at the next epoch") {
    RegistryServer server("127.0.0.1", 0);
    server.start();
    RegistryClient client(server.addr());
    const Lease l1 = client.acquire("executor/1/0", "inst-a", 100);
    std::this_thread::sleep_for(250ms);  // holder stops renewing
    const Lease l2 = client.acquire("executor/1/0", "inst-b", 1000);
    CHECK(l2.epoch == l1.epoch + 1);
    // the old holder's renewal now reports the lease as lost
    CHECK(!client.renew(l1, 1000));
    server.stop();
}

TEST_CASE("renewal keeps a short lease alive indefinitely") {
    RegistryServer server("127.0.0.1", 0);
    server.start();
    RegistryClient client(server.addr());
    const Lease lease = client.acquire("coordinator/x", "inst-a", 150);
    for (int i = 0; i < 8; ++i) {
        std::this_thread::sleep_for(50ms);
        CHECK(client.renew(lease, 150));
    }
    CHECK_THROWS_AS(client.acquire("coordinator/x", "inst-b", 150), LeaseHeldError);
    server.stop();
}

TEST_CASE("release frees the role immediately without an epoch gap") {
    RegistryServer server("127.0.0.1", 0);
    server.start();
    RegistryClient client(server.addr());
    const Lease l1 = client.acquire("executor/2/1", "inst-a", 5000);
    client.release(l1);
    const Lease l2 = client.acquire("executor/2/1", "inst-b", 5000);
    CHECK(l2.epoch == l1.epoch + 1);  // ownership still changed
    server.stop();
}

TEST_CASE("list and get expose live leases with metadata") {
    RegistryServer server("127.0.0.1", 0);
    server.start();
    RegistryClient client(server.addr());
    client.acquire("executor/0/0", "a", 1000, "{\"admin\":\"127.0.0.1:9\"}");
    client.acquire("executor/0/1", "b", 1000);
    client.acquire("short", "c", 50);
    std::this_thread::sleep_for(150ms);  // "short" expires

    const auto leases = client.list();
    CHECK(leases.size() == 2);
    const auto info = client.get("executor/0/0");
    REQUIRE(info.has_value());
    CHECK(info->instance == "a");
    CHECK(info->meta.find("admin") != std::string::npos);
    CHECK(info->expires_in_ms > 0);
    CHECK(!client.get("short").has_value());
    CHECK(!client.get("never-acquired").has_value());
    server.stop();
}
