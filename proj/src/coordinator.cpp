#include "pyramid/coordinator.hpp"

#include <algorithm>
#include <future>

#include "pyramid/eval.hpp"
#include "pyramid/wire.hpp"

namespace pyramid {

namespace {

std::string shard_topic(std::uint32_t shard) { return "shard-" + std::to_string(shard); }

}  // namespace

Coordinator::Coordinator(const ClusterConfig& cfg, const std::string& instance_id)
    : cfg_(cfg),
      instance_(instance_id),
      index_(PyramidIndex::load_meta(cfg.index_dir)),
      broker_(cfg.broker_addr),
      registry_(cfg.registry_addr),
      reply_listener_(cfg.host, 0) {
    lease_ = registry_.acquire("coordinator/" + instance_, instance_, cfg_.lease_ttl_ms,
                               "{\"reply_to\":\"" + reply_addr() + "\"}");
    accept_thread_ = std::thread([this] { accept_loop(); });
    sweep_thread_ = std::thread([this] { sweep_loop(); });
    renew_thread_ = std::thread([this] { renew_loop(); });
}

Coordinator::~Coordinator() {
    {
        std::lock_guard lk(mu_);
        stopping_ = true;
    }
    stop_cv_.notify_all();
    reply_listener_.close();
    if (accept_thread_.joinable()) accept_thread_.join();
    if (sweep_thread_.joinable()) sweep_thread_.join();
    if (renew_thread_.joinable()) renew_thread_.join();
    {
        std::lock_guard lk(threads_mu_);
        for (auto& t : reader_threads_)
            if (t.joinable()) t.join();
    }
    // fail whatever is still in flight so every callback fires exactly once
    std::map<std::uint64_t, Gather> pending;
    {
        std::lock_guard lk(mu_);
        pending.swap(gathers_);
    }
    for (auto& [id, g] : pending)
        finish(id, std::move(g),
               std::make_exception_ptr(ConnectivityError("coordinator shutting down")));
    try {
        registry_.release(lease_);
    } catch (const std::exception&) {
    }
}

std::size_t Coordinator::inflight() const {
    std::lock_guard lk(mu_);
    return gathers_.size();
}

void Coordinator::accept_loop() {
    for (;;) {
        {
            std::lock_guard lk(mu_);
            if (stopping_) return;
        }
        auto conn = reply_listener_.accept(200);
        if (!conn) continue;
        std::lock_guard lk(threads_mu_);
        reader_threads_.emplace_back(
            [this](TcpConn c) { reader_loop(std::move(c)); }, std::move(*conn));
    }
}

void Coordinator::reader_loop(TcpConn conn) {
    for (;;) {
        {
            std::lock_guard lk(mu_);
            if (stopping_) return;
        }
        try {
            auto payload = conn.recv_frame(250);
            if (!payload) return;
            if (frame_type(*payload) != FrameType::PartialResult) continue;
            handle_partial(decode_partial_result(*payload));
        } catch (const NetTimeout&) {
            continue;
        } catch (const std::exception&) {
            return;
        }
    }
}

bool Coordinator::epoch_current(std::uint32_t shard, std::uint64_t epoch) {
    std::lock_guard lk(epoch_mu_);
    const auto now = Clock::now();
    auto it = epoch_cache_.find(shard);
    const bool hit = it != epoch_cache_.end() && it->second.count(epoch) > 0;
    const bool stale = now - epoch_cache_at_ > std::chrono::milliseconds(250);
    if (hit) return true;
    if (!stale) return false;
    // refresh the snapshot and recheck: the partial may come from an
    // executor that registered after our last look
    try {
        epoch_cache_.clear();
        for (const auto& lease : registry_.list()) {
            if (lease.role.rfind("executor/", 0) != 0) continue;
            const auto rest = lease.role.substr(9);
            const auto slash = rest.find('/');
            if (slash == std::string::npos) continue;
            epoch_cache_[std::uint32_t(std::stoul(rest.substr(0, slash)))].insert(lease.epoch);
        }
        epoch_cache_at_ = now;
    } catch (const ConnectivityError&) {
        return false;
    }
    it = epoch_cache_.find(shard);
    return it != epoch_cache_.end() && it->second.count(epoch) > 0;
}

void Coordinator::handle_partial(const PartialResultMsg& msg) {
    if (!epoch_current(msg.shard_id, msg.epoch)) return;  // stale lease epoch
    Gather done;
    bool complete = false;
    {
        std::lock_guard lk(mu_);
        auto it = gathers_.find(msg.query_id);
        if (it == gathers_.end()) return;  // late or duplicate reply
        Gather& g = it->second;
        if (!g.expected.count(msg.shard_id) || g.partials.count(msg.shard_id)) return;
        g.partials[msg.shard_id] = msg.hits;
        if (g.partials.size() == g.expected.size()) {
            done = std::move(g);
            gathers_.erase(it);
            complete = true;
        }
    }
    if (complete) finish(msg.query_id, std::move(done), nullptr);
}

void Coordinator::finish(std::uint64_t, Gather&& g, std::exception_ptr err) {
    std::vector<QueryResult> parts;
    parts.reserve(g.partials.size());
    for (auto& [_, hits] : g.partials) parts.push_back(std::move(hits));
    QueryResult merged = merge_partials(parts, std::size_t(g.k));
    if (err) {
        g.callback({}, err);
    } else {
        g.callback(std::move(merged), nullptr);
    }
}

void Coordinator::sweep_loop() {
    for (;;) {
        std::map<std::uint64_t, Gather> expired;
        {
            std::unique_lock lk(mu_);
            if (stop_cv_.wait_for(lk, std::chrono::milliseconds(10),
                                  [this] { return stopping_; }))
                return;
            const auto now = Clock::now();
            for (auto it = gathers_.begin(); it != gathers_.end();) {
                if (it->second.deadline <= now) {
                    expired.emplace(it->first, std::move(it->second));
                    it = gathers_.erase(it);
                } else {
                    ++it;
                }
            }
        }
        for (auto& [id, g] : expired) {
            std::vector<std::uint32_t> missing;
            for (std::uint32_t s : g.expected)
                if (!g.partials.count(s)) missing.push_back(s);
            std::vector<QueryResult> parts;
            for (auto& [_, hits] : g.partials) parts.push_back(std::move(hits));
            auto err = std::make_exception_ptr(PartialTimeoutError(
                "gather timeout: " + std::to_string(missing.size()) + " shard(s) missing",
                merge_partials(parts, std::size_t(g.k)), std::move(missing)));
            g.partials.clear();
            finish(id, std::move(g), err);
        }
    }
}

void Coordinator::renew_loop() {
    for (;;) {
        {
            std::unique_lock lk(mu_);
            if (stop_cv_.wait_for(lk, std::chrono::milliseconds(cfg_.lease_renew_ms),
                                  [this] { return stopping_; }))
                return;
        }
        try {
            registry_.renew(lease_, cfg_.lease_ttl_ms);
        } catch (const ConnectivityError&) {
        }
    }
}

void Coordinator::execute_async(std::vector<float> q, std::size_t K, int k, int search_l,
                                int timeout_ms, Callback cb, std::size_t* shards_touched) {
    if (k < 1) {
        cb({}, std::make_exception_ptr(EmptyInputError("k must be >= 1")));
        return;
    }
    std::vector<std::uint32_t> routed;
    try {
        routed = index_.route(q, K);
    } catch (const std::exception&) {
        cb({}, std::current_exception());
        return;
    }
    if (shards_touched) *shards_touched = routed.size();

    const std::uint64_t qid = next_query_id_.fetch_add(1);
    {
        std::lock_guard lk(mu_);
        Gather& g = gathers_[qid];
        g.expected.insert(routed.begin(), routed.end());
        g.deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
        g.k = k;
        g.callback = std::move(cb);
    }

    QueryRequestMsg msg;
    msg.epoch = lease_.epoch;
    msg.query_id = qid;
    msg.k = std::uint32_t(k);
    msg.search_l = std::uint32_t(search_l);
    msg.vector = std::move(q);
    msg.reply_to = reply_addr();
    const Bytes payload = encode_query_request(msg);

    for (std::uint32_t shard : routed) {
        std::exception_ptr err;
        try {
            if (broker_.publish(shard_topic(shard), payload) == 0)
                err = std::make_exception_ptr(ShardUnavailableError(
                    "no live executor for shard " + std::to_string(shard)));
        } catch (const ConnectivityError&) {
            err = std::current_exception();
        }
        if (err) {
            Gather g;
            {
                std::lock_guard lk(mu_);
                auto it = gathers_.find(qid);
                if (it == gathers_.end()) return;  // raced with completion/timeout
                g = std::move(it->second);
                gathers_.erase(it);
            }
            finish(qid, std::move(g), err);
            return;
        }
    }
}

QueryResult Coordinator::execute(std::span<const float> q, std::size_t K, int k, int search_l,
                                 int timeout_ms, std::size_t* shards_touched) {
    std::promise<QueryResult> promise;
    auto future = promise.get_future();
    execute_async(
        std::vector<float>(q.begin(), q.end()), K, k, search_l, timeout_ms,
        [&promise](QueryResult r, std::exception_ptr err) {
            if (err)
                promise.set_exception(err);
            else
                promise.set_value(std::move(r));
        },
        shards_touched);
    return future.get();
}

}  // namespace pyramid
