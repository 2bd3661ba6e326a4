#include "pyramid/executor.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>

#include <json.hpp>

#include "pyramid/metric.hpp"
#include "pyramid/wire.hpp"

namespace pyramid {

using json = nlohmann::json;

Executor::Executor(const ClusterConfig& cfg, std::uint32_t shard,
                   const std::string& instance_id, int slot, Options opts)
    : cfg_(cfg),
      opts_(opts),
      shard_(shard),
      instance_(instance_id),
      topic_("shard-" + std::to_string(shard)),
      graph_(HnswGraph::load(std::filesystem::path(cfg.index_dir) /
                             ("shard_" + std::to_string(shard) + ".idx"))),
      registry_(cfg.registry_addr),
      admin_listener_(cfg.host, 0) {
    const std::string meta =
        json{{"admin", admin_addr()}, {"host", cfg_.host}, {"topic", topic_}}.dump();
    auto role = [&](int s) { return "executor/" + std::to_string(shard_) + "/" + std::to_string(s); };
    if (slot >= 0) {
        lease_ = registry_.acquire(role(slot), instance_, cfg_.lease_ttl_ms, meta);
        slot_ = slot;
    } else {
        for (int s = 0; s < cfg_.replicas && slot_ < 0; ++s) {
            if (auto l = registry_.try_acquire(role(s), instance_, cfg_.lease_ttl_ms, meta)) {
                lease_ = *l;
                slot_ = s;
            }
        }
        if (slot_ < 0)
            throw LeaseHeldError("all " + std::to_string(cfg_.replicas) +
                                 " replica slots of shard " + std::to_string(shard_) +
                                 " are held");
    }
}

Executor::~Executor() {
    stop();
    try {
        registry_.release(lease_);
    } catch (const std::exception&) {
    }
}

void Executor::start() {
    renew_thread_ = std::thread([this] { renew_loop(); });
    admin_thread_ = std::thread([this] { admin_loop(); });
    for (int i = 0; i < opts_.workers; ++i)
        workers_.emplace_back([this, i] { worker_loop(i); });
}

void Executor::stop() {
    {
        std::lock_guard lk(mu_);
        if (stopping_) return;
        stopping_ = true;
    }
    stop_cv_.notify_all();
    admin_listener_.close();
    for (auto& t : workers_)
        if (t.joinable()) t.join();
    if (renew_thread_.joinable()) renew_thread_.join();
    if (admin_thread_.joinable()) admin_thread_.join();
    std::lock_guard lk(admin_conns_mu_);
    for (auto& t : admin_conns_)
        if (t.joinable()) t.join();
}

void Executor::wait() {
    std::unique_lock lk(mu_);
    stop_cv_.wait(lk, [this] { return stopping_; });
    lk.unlock();
    stop();
}

void Executor::renew_loop() {
    for (;;) {
        {
            std::unique_lock lk(mu_);
            if (stop_cv_.wait_for(lk, std::chrono::milliseconds(cfg_.lease_renew_ms),
                                  [this] { return stopping_; }))
                return;
        }
        bool ok = true;
        try {
            ok = registry_.renew(lease_, cfg_.lease_ttl_ms);
        } catch (const ConnectivityError&) {
            continue;  // transient; the lease may still be live
        }
        if (!ok) {
            // someone else owns the role now — stop serving immediately so
            // no result is ever sent under a stale epoch twice
            lease_lost_.store(true);
            {
                std::lock_guard lk(mu_);
                stopping_ = true;
            }
            stop_cv_.notify_all();
            return;
        }
    }
}

TcpConn& Executor::reply_conn(const std::string& reply_to) {
    auto it = reply_conns_.find(reply_to);
    if (it == reply_conns_.end() || !it->second.valid())
        it = reply_conns_.insert_or_assign(reply_to, tcp_connect(reply_to)).first;
    return it->second;
}

void Executor::process(const Bytes& payload) {
    if (frame_type(payload) != FrameType::QueryRequest) return;
    const QueryRequestMsg req = decode_query_request(payload);

    SearchParams params;
    params.k = int(std::max<std::uint32_t>(req.k, 1));
    params.l = std::clamp<int>(int(req.search_l), params.k, cfg_.search_l_max);
    params.max_evals = std::size_t(cfg_.max_evals);

    std::vector<float> q = req.vector;
    if (graph_.metric() == MetricKind::Angular) normalize_in_place(q);

    const auto t0 = std::chrono::steady_clock::now();
    QueryResult hits;
    try {
        hits = graph_.search(q, params);
    } catch (const std::exception&) {
        return;  // malformed query (e.g. wrong dim); coordinator times out
    }
    const auto dt = std::chrono::steady_clock::now() - t0;

    const double factor = slow_factor_.load();
    if (factor > 1.0)
        std::this_thread::sleep_for(
            std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                dt * (factor - 1.0)));

    PartialResultMsg out;
    out.epoch = lease_.epoch;
    out.query_id = req.query_id;
    out.shard_id = shard_;
    out.hits = std::move(hits);
    const Bytes frame = encode_partial_result(out);

    std::lock_guard lk(reply_mu_);
    try {
        reply_conn(req.reply_to).send_frame(frame);
    } catch (const ConnectivityError&) {
        reply_conns_.erase(req.reply_to);
        try {
            reply_conn(req.reply_to).send_frame(frame);
        } catch (const ConnectivityError&) {
            reply_conns_.erase(req.reply_to);  // dropped; coordinator timeout covers it
        }
    }
    processed_.fetch_add(1);
}

void Executor::worker_loop(int worker) {
    (void)worker;
    BrokerClient broker(cfg_.broker_addr);
    // all workers of one replica share the member identity so broker-side
    // load accounting sees one consumer per replica
    const std::string group_member = instance_;
    for (;;) {
        {
            std::lock_guard lk(mu_);
            if (stopping_) return;
        }
        try {
            broker.subscribe(topic_, group_member);
            break;
        } catch (const ConnectivityError&) {
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        }
    }
    for (;;) {
        {
            std::lock_guard lk(mu_);
            if (stopping_) return;
        }
        try {
            auto msg = broker.fetch(topic_, group_member, 100);
            if (msg) process(*msg);
        } catch (const ConnectivityError&) {
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        }
    }
}

void Executor::admin_loop() {
    for (;;) {
        {
            std::lock_guard lk(mu_);
            if (stopping_) return;
        }
        auto conn = admin_listener_.accept(200);
        if (!conn) continue;
        std::lock_guard lk(admin_conns_mu_);
        admin_conns_.emplace_back(
            [this](TcpConn c) { serve_admin(std::move(c)); }, std::move(*conn));
    }
}

void Executor::serve_admin(TcpConn conn) {
    for (;;) {
        {
            std::lock_guard lk(mu_);
            if (stopping_) return;
        }
        try {
            auto payload = conn.recv_frame(250);
            if (!payload) return;
            conn.send_frame(encode_control(handle_admin(decode_control(*payload))));
        } catch (const NetTimeout&) {
            continue;
        } catch (const std::exception&) {
            return;
        }
    }
}

std::string Executor::handle_admin(const std::string& request) {
    json req;
    try {
        req = json::parse(request);
    } catch (const json::exception& e) {
        return json{{"ok", false}, {"error", e.what()}}.dump();
    }
    const std::string op = req.value("op", "");
    if (op == "ping")
        return json{{"ok", true},
                    {"shard", shard_},
                    {"slot", slot_},
                    {"epoch", lease_.epoch},
                    {"processed", processed_.load()}}.dump();
    if (op == "slow") {
        if (!cfg_.allow_injection)
            return json{{"ok", false}, {"error", "injection disabled"}}.dump();
        slow_factor_.store(std::max(1.0, double(req.value("factor", 1.0))));
        return json{{"ok", true}}.dump();
    }
    if (op == "kill") {
        if (!cfg_.allow_injection)
            return json{{"ok", false}, {"error", "injection disabled"}}.dump();
        if (opts_.exit_on_kill) std::_Exit(1);  // simulate a crash: no cleanup
        {
            std::lock_guard lk(mu_);
            stopping_ = true;
        }
        stop_cv_.notify_all();
        return json{{"ok", true}}.dump();
    }
    return json{{"ok", false}, {"error", "unknown op " + op}}.dump();
}

}  // namespace pyramid
