#include "pyramid/broker.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace pyramid {

using json = nlohmann::json;

BrokerServer::BrokerServer(const std::string& host, std::uint16_t port, Options opts)
    : opts_(opts), listener_(host, port) {}

BrokerServer::~BrokerServer() { stop(); }

void BrokerServer::start() {
    accept_thread_ = std::thread([this] { accept_loop(); });
    rebalance_thread_ = std::thread([this] { rebalance_loop(); });
}

void BrokerServer::stop() {
    {
        std::lock_guard lk(mu_);
        if (stopping_) return;
        stopping_ = true;
    }
    cv_.notify_all();
    listener_.close();
    if (accept_thread_.joinable()) accept_thread_.join();
    if (rebalance_thread_.joinable()) rebalance_thread_.join();
    std::lock_guard lk(threads_mu_);
    for (auto& t : conn_threads_)
        if (t.joinable()) t.join();
}

void BrokerServer::accept_loop() {
    for (;;) {
        {
            std::lock_guard lk(mu_);
            if (stopping_) return;
        }
        auto conn = listener_.accept(200);
        if (!conn) continue;
        std::lock_guard lk(threads_mu_);
        conn_threads_.emplace_back(
            [this](TcpConn c) { serve_conn(std::move(c)); }, std::move(*conn));
    }
}

void BrokerServer::serve_conn(TcpConn conn) {
    for (;;) {
        {
            std::lock_guard lk(mu_);
            if (stopping_) return;
        }
        try {
            auto payload = conn.recv_frame(250);
            if (!payload) return;  // peer closed
            const std::string reply = handle(decode_control(*payload));
            conn.send_frame(encode_control(reply));
        } catch (const NetTimeout&) {
            continue;
        } catch (const std::exception&) {
            return;
        }
    }
}

bool BrokerServer::member_live(const Member& m) const {
    return Clock::now() - m.last_seen < std::chrono::milliseconds(opts_.member_ttl_ms);
}

// Completions per second over a short sliding window; floor keeps fresh
// members eligible for work.
double BrokerServer::member_rate(const Member& m) const {
    const auto window = std::chrono::milliseconds(2 * opts_.member_ttl_ms);
    const auto cutoff = Clock::now() - window;
    std::size_t recent = 0;
    for (auto it = m.completions.rbegin(); it != m.completions.rend() && *it >= cutoff; ++it)
        recent++;
    const double secs = double(window.count()) / 1000.0;
    return std::max(double(recent) / secs, 0.5);
}

void BrokerServer::rebalance_topic(Topic& topic) {
    const auto now = Clock::now();

    // expire silent members; their pending messages go back to the pool
    for (auto it = topic.members.begin(); it != topic.members.end();) {
        if (!member_live(it->second)) {
            for (auto& msg : it->second.queue) topic.unassigned.emplace_back(now, std::move(msg));
            it = topic.members.erase(it);
        } else {
            ++it;
        }
    }

    // drop buffered messages past their TTL
    while (!topic.unassigned.empty() &&
           now - topic.unassigned.front().first >
               std::chrono::milliseconds(opts_.buffered_ttl_ms))
        topic.unassigned.pop_front();

    if (topic.members.empty()) return;

    // pool everything pending and re-deal proportional to recent rates
    std::deque<Bytes> pool;
    for (auto& [_, m] : topic.members) {
        for (auto& msg : m.queue) pool.push_back(std::move(msg));
        m.queue.clear();
    }
    for (auto& [_, msg] : topic.unassigned) pool.push_back(std::move(msg));
    topic.unassigned.clear();
    if (pool.empty()) return;

    std::vector<std::pair<std::string, double>> weights;
    double total_w = 0.0;
    for (auto& [name, m] : topic.members) {
        const double r = member_rate(m);
        weights.emplace_back(name, r);
        total_w += r;
    }
    const std::size_t n = pool.size();
    std::vector<std::size_t> target(weights.size(), 0);
    std::size_t dealt = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        target[i] = std::size_t(std::floor(double(n) * weights[i].second / total_w));
        dealt += target[i];
    }
    for (std::size_t i = 0; dealt < n; i = (i + 1) % weights.size()) {
        target[i]++;
        dealt++;
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
        auto& q = topic.members[weights[i].first].queue;
        for (std::size_t j = 0; j < target[i] && !pool.empty(); ++j) {
            q.push_back(std::move(pool.front()));
            pool.pop_front();
        }
    }
}

void BrokerServer::rebalance_loop() {
    for (;;) {
        {
            std::unique_lock lk(mu_);
            if (cv_.wait_for(lk, std::chrono::milliseconds(opts_.rebalance_ms),
                             [this] { return stopping_; }))
                return;
            for (auto& [_, topic] : topics_) rebalance_topic(topic);
        }
        cv_.notify_all();
    }
}

std::string BrokerServer::handle(const std::string& request) {
    json req;
    try {
        req = json::parse(request);
    } catch (const json::exception& e) {
        return json{{"ok", false}, {"error", e.what()}}.dump();
    }
    const std::string op = req.value("op", "");
    std::unique_lock lk(mu_);

    if (op == "subscribe") {
        auto& topic = topics_[req.at("topic")];
        auto& m = topic.members[req.at("member")];
        m.last_seen = Clock::now();
        lk.unlock();
        cv_.notify_all();
        return json{{"ok", true}}.dump();
    }
    if (op == "unsubscribe") {
        auto ti = topics_.find(req.at("topic"));
        if (ti != topics_.end()) {
            auto mi = ti->second.members.find(req.at("member"));
            if (mi != ti->second.members.end()) {
                const auto now = Clock::now();
                for (auto& msg : mi->second.queue)
                    ti->second.unassigned.emplace_back(now, std::move(msg));
                ti->second.members.erase(mi);
            }
        }
        return json{{"ok", true}}.dump();
    }
    if (op == "publish") {
        auto& topic = topics_[req.at("topic")];
        Bytes payload = from_hex(req.at("payload"));
        // rate-weighted least-backlog live member; ties (typically everyone
        // drained) rotate to whoever was assigned longest ago, so equal
        // consumers split the load instead of the first one soaking it up
        Member* best = nullptr;
        double best_load = 0.0;
        std::size_t live = 0;
        for (auto& [_, m] : topic.members) {
            if (!member_live(m)) continue;
            live++;
            const double load = double(m.queue.size()) / member_rate(m);
            const bool better =
                !best || load < best_load ||
                (load == best_load && m.last_assigned < best->last_assigned);
            if (better) {
                best = &m;
                best_load = load;
            }
        }
        if (best) {
            best->last_assigned = Clock::now();
            best->queue.push_back(std::move(payload));
        } else {
            topic.unassigned.emplace_back(Clock::now(), std::move(payload));
        }
        lk.unlock();
        cv_.notify_all();
        return json{{"ok", true}, {"live_members", live}}.dump();
    }
    if (op == "fetch") {
        const std::string topic_name = req.at("topic");
        const std::string member_name = req.at("member");
        const int wait_ms = req.value("wait_ms", 0);
        const auto deadline = Clock::now() + std::chrono::milliseconds(wait_ms);
        for (;;) {
            auto ti = topics_.find(topic_name);
            if (ti == topics_.end() || !ti->second.members.count(member_name))
                return json{{"ok", false}, {"error", "not subscribed"}}.dump();
            Member& m = ti->second.members.at(member_name);
            m.last_seen = Clock::now();
            Bytes msg;
            bool got = false;
            if (!m.queue.empty()) {
                msg = std::move(m.queue.front());
                m.queue.pop_front();
                got = true;
            } else if (!ti->second.unassigned.empty()) {
                msg = std::move(ti->second.unassigned.front().second);
                ti->second.unassigned.pop_front();
                got = true;
            }
            if (got) {
                m.delivered++;
                m.completions.push_back(Clock::now());
                while (m.completions.size() > 4096) m.completions.pop_front();
                return json{{"ok", true}, {"msg", to_hex(msg)}}.dump();
            }
            if (stopping_ || Clock::now() >= deadline)
                return json{{"ok", true}, {"empty", true}}.dump();
            cv_.wait_until(lk, deadline);
        }
    }
    if (op == "stats") {
        json members = json::array();
        auto ti = topics_.find(req.at("topic"));
        if (ti != topics_.end()) {
            for (auto& [name, m] : ti->second.members)
                members.push_back({{"member", name},
                                   {"delivered", m.delivered},
                                   {"backlog", m.queue.size()},
                                   {"live", member_live(m)}});
        }
        return json{{"ok", true}, {"members", members}}.dump();
    }
    if (op == "ping") return json{{"ok", true}}.dump();
    return json{{"ok", false}, {"error", "unknown op " + op}}.dump();
}

std::vector<BrokerServer::MemberStats> BrokerServer::topic_stats(const std::string& topic) {
    std::lock_guard lk(mu_);
    std::vector<MemberStats> out;
    auto ti = topics_.find(topic);
    if (ti == topics_.end()) return out;
    for (auto& [name, m] : ti->second.members)
        out.push_back({name, m.delivered, m.queue.size(), member_live(m)});
    return out;
}

std::size_t BrokerServer::live_members(const std::string& topic) {
    std::lock_guard lk(mu_);
    auto ti = topics_.find(topic);
    if (ti == topics_.end()) return 0;
    std::size_t live = 0;
    for (auto& [_, m] : ti->second.members)
        if (member_live(m)) live++;
    return live;
}

std::string BrokerClient::request(const std::string& body) {
    std::lock_guard lk(mu_);
    for (int attempt = 0; attempt < 2; ++attempt) {
        try {
            if (!conn_.valid()) conn_ = tcp_connect(addr_);
            conn_.send_frame(encode_control(body));
            auto reply = conn_.recv_frame(10000);
            if (!reply) throw ConnectivityError("broker closed connection");
            return decode_control(*reply);
        } catch (const ConnectivityError&) {
            conn_.close();
            if (attempt == 1) throw;
        }
    }
    throw ConnectivityError("unreachable");
}

void BrokerClient::subscribe(const std::string& topic, const std::string& member) {
    const auto resp = json::parse(request(json{
        {"op", "subscribe"}, {"topic", topic}, {"member", member}}.dump()));
    if (!resp.value("ok", false)) throw ConnectivityError("subscribe failed");
}

void BrokerClient::unsubscribe(const std::string& topic, const std::string& member) {
    request(json{{"op", "unsubscribe"}, {"topic", topic}, {"member", member}}.dump());
}

std::size_t BrokerClient::publish(const std::string& topic, const Bytes& payload) {
    const auto resp = json::parse(request(json{
        {"op", "publish"}, {"topic", topic}, {"payload", to_hex(payload)}}.dump()));
    if (!resp.value("ok", false))
        throw ConnectivityError("publish failed: " + resp.value("error", ""));
    return resp.value("live_members", std::size_t(0));
}

std::optional<Bytes> BrokerClient::fetch(const std::string& topic, const std::string& member,
                                         int wait_ms) {
    const auto resp = json::parse(request(json{{"op", "fetch"},
                                               {"topic", topic},
                                               {"member", member},
                                               {"wait_ms", wait_ms}}.dump()));
    if (!resp.value("ok", false))
        throw ConnectivityError("fetch failed: " + resp.value("error", ""));
    if (resp.value("empty", false)) return std::nullopt;
    return from_hex(resp.at("msg"));
}

}  // namespace pyramid
