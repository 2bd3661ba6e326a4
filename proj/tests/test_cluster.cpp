#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include <doctest.h>

#include "pyramid/broker.hpp"
#include "pyramid/coordinator.hpp"
#include "pyramid/executor.hpp"
#include "pyramid/index.hpp"
#include "pyramid/master.hpp"
#include "pyramid/registry.hpp"
#include "pyramid/vecio.hpp"
#include "pyramid/wire.hpp"

using namespace pyramid;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

struct TestCluster {
    fs::path index_dir;
    Dataset dataset;
    PyramidIndex local;  // in-process oracle over the same files
    BrokerServer broker{"127.0.0.1", 0, broker_opts()};
    RegistryServer registry{"127.0.0.1", 0};
    ClusterConfig cfg;
    std::vector<std::unique_ptr<Executor>> executors;

    static BrokerServer::Options broker_opts() {
        BrokerServer::Options o;
        o.rebalance_ms = 100;
        o.member_ttl_ms = 600;
        return o;
    }

    explicit TestCluster(std::size_t w, const char* tag) {
        index_dir = fs::temp_directory_path() / ("pyramid_cluster_" + std::string(tag));
        fs::remove_all(index_dir);
        dataset = gen_gaussian_mixture(2000, 8, 8, 0.3, 77);
        IndexParams params;
        params.n_prime = 600;
        params.m = 16;
        params.w = w;
        params.seed = 7;
        params.kmeans_iters = 10;
        build_index(dataset, MetricKind::EuclideanNeg, params).save(index_dir);
        local = PyramidIndex::load(index_dir);

        broker.start();
        registry.start();
        cfg.broker_addr = broker.addr();
        cfg.registry_addr = registry.addr();
        cfg.index_dir = index_dir.string();
        cfg.replicas = 2;
        cfg.lease_ttl_ms = 600;
        cfg.lease_renew_ms = 150;
        cfg.rebalance_ms = 100;
        cfg.gather_timeout_ms = 500;
        cfg.monitor_period_ms = 200;
        cfg.allow_injection = true;
    }

    ~TestCluster() {
        executors.clear();
        broker.stop();
        registry.stop();
        fs::remove_all(index_dir);
    }

    Executor& start_executor(std::uint32_t shard, int slot = -1) {
        Executor::Options opts;
        opts.exit_on_kill = false;
        executors.push_back(std::make_unique<Executor>(
            cfg, shard, "exec-" + std::to_string(shard) + "-" + std::to_string(executors.size()),
            slot, opts));
        executors.back()->start();
        return *executors.back();
    }
};

}  // namespace

TEST_CASE("publishing to a shard with no executor raises ShardUnavailableError") {
    TestCluster cluster(2, "noexec");
    Coordinator coordinator(cluster.cfg, "coord-a");
    CHECK_THROWS_AS(
        coordinator.execute(cluster.dataset.row(0), 2, 5, 60, 500), ShardUnavailableError);
}

TEST_CASE("cluster execute matches the in-process search exactly") {
    TestCluster cluster(2, "match");
    cluster.start_executor(0);
    cluster.start_executor(1);
    Coordinator coordinator(cluster.cfg, "coord-a");

    for (std::size_t qi = 0; qi < 30; ++qi) {
        const auto q = cluster.dataset.row(qi * 7);
        const QueryResult expect = cluster.local.search(q, 2, {60, 5, 0});
        const QueryResult got = coordinator.execute(q, 2, 5, 60, 2000);
        REQUIRE(got.size() == expect.size());
        for (std::size_t j = 0; j < got.size(); ++j) {
            CHECK(got[j].id == expect[j].id);
            CHECK(got[j].score == doctest::Approx(expect[j].score));
        }
        // quiescent single-replica cluster: repeating the query is identical
        const QueryResult again = coordinator.execute(q, 2, 5, 60, 2000);
        REQUIRE(again.size() == got.size());
        for (std::size_t j = 0; j < got.size(); ++j) CHECK(again[j].id == got[j].id);
    }
}

TEST_CASE("10,000 concurrent async queries complete without loss") {
    TestCluster cluster(2, "async");
    cluster.start_executor(0);
    cluster.start_executor(0);
    cluster.start_executor(1);
    cluster.start_executor(1);
    Coordinator coordinator(cluster.cfg, "coord-a");

    const int total = 10000;
    std::atomic<int> callbacks{0};
    std::atomic<int> failures{0};
    for (int i = 0; i < total; ++i) {
        const auto q = cluster.dataset.row(std::size_t(i) % cluster.dataset.count);
        coordinator.execute_async(std::vector<float>(q.begin(), q.end()), 1, 5, 60, 60000,
                                  [&](QueryResult r, std::exception_ptr err) {
                                      callbacks.fetch_add(1);
                                      if (err || r.empty()) failures.fetch_add(1);
                                  });
    }
    const auto deadline = std::chrono::steady_clock::now() + 120s;
    while (callbacks.load() < total && std::chrono::steady_clock::now() < deadline)
        std::this_thread::sleep_for(20ms);
    CHECK(callbacks.load() == total);  // exactly once each, none lost
    CHECK(failures.load() == 0);
}

TEST_CASE("gather timeout surfaces the partials that did arrive") {
    TestCluster cluster(2, "timeout");
    cluster.start_executor(0);
    Executor& doomed = cluster.start_executor(1);
    Coordinator coordinator(cluster.cfg, "coord-a");

    // find a query that routes to both shards, then silence shard 1; its
    // broker membership outlives the executor so publish still succeeds
    std::size_t qi = 0;
    for (; qi < cluster.dataset.count; ++qi)
        if (cluster.local.route(cluster.dataset.row(qi), 16).size() == 2) break;
    REQUIRE(qi < cluster.dataset.count);
    const auto q = cluster.dataset.row(qi);
    CHECK(coordinator.execute(q, 16, 5, 60, 2000).size() == 5);

    doomed.stop();
    try {
        coordinator.execute(q, 16, 5, 60, 400);
        FAIL("expected PartialTimeoutError");
    } catch (const PartialTimeoutError& e) {
        CHECK(e.missing_shards == std::vector<std::uint32_t>{1});
        CHECK(!e.partial.empty());  // shard 0 answered
    }
}

TEST_CASE("partials from a stale lease epoch are never merged") {
    TestCluster cluster(1, "epoch");
    Coordinator coordinator(cluster.cfg, "coord-a");

    // simulate an executor generation change without running executors:
    // epoch 1 becomes stale the moment epoch 2 takes over the slot
    RegistryClient registry(cluster.cfg.registry_addr);
    const Lease old_lease = registry.acquire("executor/0/0", "gen-1", 5000);
    registry.release(old_lease);
    const Lease new_lease = registry.acquire("executor/0/0", "gen-2", 5000);
    REQUIRE(new_lease.epoch == old_lease.epoch + 1);

    // a mute broker member lets the publish succeed with nobody answering
    BrokerClient mute(cluster.cfg.broker_addr);
    mute.subscribe("shard-0", "mute");

    std::atomic<bool> fired{false};
    QueryResult delivered;
    const auto q = cluster.dataset.row(3);
    coordinator.execute_async(std::vector<float>(q.begin(), q.end()), 1, 3, 60, 10000,
                              [&](QueryResult r, std::exception_ptr err) {
                                  if (!err) delivered = std::move(r);
                                  fired.store(true);
                              });
    std::this_thread::sleep_for(100ms);

    // this coordinator's first query id is 1 (fresh counter)
    PartialResultMsg fake;
    fake.query_id = 1;
    fake.shard_id = 0;
    fake.hits = {{ItemId(42), 1.0}};

    TcpConn conn = tcp_connect(coordinator.reply_addr());
    fake.epoch = old_lease.epoch;  // stale
    conn.send_frame(encode_partial_result(fake));
    std::this_thread::sleep_for(400ms);
    CHECK(!fired.load());  // stale partial was dropped, gather still open

    fake.epoch = new_lease.epoch;  // current
    conn.send_frame(encode_partial_result(fake));
    const auto deadline = std::chrono::steady_clock::now() + 5s;
    while (!fired.load() && std::chrono::steady_clock::now() < deadline)
        std::this_thread::sleep_for(10ms);
    REQUIRE(fired.load());
    REQUIRE(delivered.size() == 1);
    CHECK(delivered[0].id == 42);
}

TEST_CASE("replica transparency: killing one of two replicas changes no result") {
    TestCluster cluster(2, "replica");
    cluster.start_executor(0, 0);
    Executor& victim = cluster.start_executor(0, 1);
    cluster.start_executor(1, 0);
    cluster.start_executor(1, 1);
    Coordinator coordinator(cluster.cfg, "coord-a");

    std::vector<QueryResult> before;
    for (std::size_t qi = 0; qi < 10; ++qi)
        before.push_back(coordinator.execute(cluster.dataset.row(qi), 2, 5, 60, 2000));

    victim.stop();  // replica down; the survivor serves identical shard data
    for (std::size_t qi = 0; qi < 10; ++qi) {
        const auto after = coordinator.execute(cluster.dataset.row(qi), 2, 5, 60, 5000);
        REQUIRE(after.size() == before[qi].size());
        for (std::size_t j = 0; j < after.size(); ++j) CHECK(after[j].id == before[qi][j].id);
    }
}

TEST_CASE("a second executor for a held slot exits with LeaseHeldError") {
    TestCluster cluster(1, "held");
    cluster.start_executor(0, 0);
    Executor::Options opts;
    opts.exit_on_kill = false;
    CHECK_THROWS_AS(Executor(cluster.cfg, 0, "late-comer", 0, opts), LeaseHeldError);
    // with slot auto-pick, the second replica slot is still free
    Executor auto_pick(cluster.cfg, 0, "late-comer", -1, opts);
    CHECK(auto_pick.slot() == 1);
}

TEST_CASE("admin injection hooks are gated and functional") {
    TestCluster cluster(1, "admin");
    Executor& exec = cluster.start_executor(0);
    auto call = [&](const std::string& body) {
        TcpConn conn = tcp_connect(exec.admin_addr());
        conn.send_frame(encode_control(body));
        const auto reply = conn.recv_frame(2000);
        REQUIRE(reply.has_value());
        return decode_control(*reply);
    };
    CHECK(call("{\"op\":\"ping\"}").find("\"ok\":true") != std::string::npos);
    CHECK(call("{\"op\":\"slow\",\"factor\":5.0}").find("\"ok\":true") != std::string::npos);

    TestCluster guarded(1, "admin2");
    guarded.cfg.allow_injection = false;
    Executor& locked = guarded.start_executor(0);
    TcpConn conn = tcp_connect(locked.admin_addr());
    conn.send_frame(encode_control("{\"op\":\"slow\",\"factor\":5.0}"));
    const auto reply = conn.recv_frame(2000);
    REQUIRE(reply.has_value());
    CHECK(decode_control(*reply).find("injection disabled") != std::string::npos);
}

TEST_CASE("the master respawns expired executors within 3 monitoring periods") {
    TestCluster cluster(2, "respawn");
    cluster.cfg.replicas = 1;

    std::mutex mu;
    std::vector<std::pair<std::uint32_t, int>> spawned;
    Master master(cluster.cfg, "master-a", 2, [&](std::uint32_t shard, int slot) {
        std::lock_guard lk(mu);
        spawned.emplace_back(shard, slot);
        Executor::Options opts;
        opts.exit_on_kill = false;
        cluster.executors.push_back(std::make_unique<Executor>(
            cluster.cfg, shard, "respawned-" + std::to_string(spawned.size()), slot, opts));
        cluster.executors.back()->start();
    });
    master.start();

    // cold cluster: the master must bring up one executor per shard
    RegistryClient registry(cluster.cfg.registry_addr);
    auto live = [&](const std::string& role) { return registry.get(role).has_value(); };
    auto wait_live = [&](const std::string& role, int ms) {
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(ms);
        while (!live(role) && std::chrono::steady_clock::now() < deadline)
            std::this_thread::sleep_for(20ms);
        return live(role);
    };
    CHECK(wait_live("executor/0/0", 3000));
    CHECK(wait_live("executor/1/0", 3000));

    // kill shard 0's executor; lease expiry + 3 monitoring periods bounds
    // the respawn (ttl 600 + 3 x 200 + slack). The stale lease may outlive
    // the executor briefly, so wait for the *next* epoch, not mere liveness.
    const auto old_lease = registry.get("executor/0/0");
    REQUIRE(old_lease.has_value());
    for (auto& e : cluster.executors)
        if (e->shard() == 0 && !e->lease_lost()) {
            e->stop();
            break;
        }
    const std::size_t before = [&] {
        std::lock_guard lk(mu);
        return spawned.size();
    }();
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(cluster.cfg.lease_ttl_ms + 3 * 200 + 1000);
    bool new_epoch = false;
    while (!new_epoch && std::chrono::steady_clock::now() < deadline) {
        const auto info = registry.get("executor/0/0");
        new_epoch = info.has_value() && info->epoch > old_lease->epoch;
        if (!new_epoch) std::this_thread::sleep_for(20ms);
    }
    CHECK(new_epoch);
    std::lock_guard lk(mu);
    CHECK(spawned.size() > before);
    master.stop();
}

TEST_CASE("a standby master takes over within 2 lease periods") {
    TestCluster cluster(1, "standby");
    cluster.start_executor(0);

    auto noop = [](std::uint32_t, int) {};
    Master primary(cluster.cfg, "master-a", 1, noop);
    Master standby(cluster.cfg, "master-b", 1, noop);
    primary.start();
    const auto t0 = std::chrono::steady_clock::now();
    while (!primary.is_active() && std::chrono::steady_clock::now() - t0 < 3s)
        std::this_thread::sleep_for(20ms);
    REQUIRE(primary.is_active());
    standby.start();
    std::this_thread::sleep_for(200ms);
    CHECK(!standby.is_active());

    primary.stop();  // releases the lease; standby should take over promptly
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(2 * cluster.cfg.lease_ttl_ms);
    while (!standby.is_active() && std::chrono::steady_clock::now() < deadline)
        std::this_thread::sleep_for(20ms);
    CHECK(standby.is_active());
    standby.stop();
}
