#include "pyramid/registry.hpp"

#include <json.hpp>

namespace pyramid {

using json = nlohmann::json;

RegistryServer::RegistryServer(const std::string& host, std::uint16_t port)
    : listener_(host, port) {}

RegistryServer::~RegistryServer() { stop(); }

void RegistryServer::start() {
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void RegistryServer::stop() {
    {
        std::lock_guard lk(mu_);
        if (stopping_) return;
        stopping_ = true;
    }
    listener_.close();
    if (accept_thread_.joinable()) accept_thread_.join();
    std::lock_guard lk(threads_mu_);
    for (auto& t : conn_threads_)
        if (t.joinable()) t.join();
}

void RegistryServer::accept_loop() {
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

void RegistryServer::serve_conn(TcpConn conn) {
    for (;;) {
        {
            std::lock_guard lk(mu_);
            if (stopping_) return;
        }
        try {
            auto payload = conn.recv_frame(250);
            if (!payload) return;
            conn.send_frame(encode_control(handle(decode_control(*payload))));
        } catch (const NetTimeout&) {
            continue;
        } catch (const std::exception&) {
            return;
        }
    }
}

std::string RegistryServer::handle(const std::string& request) {
    json req;
    try {
        req = json::parse(request);
    } catch (const json::exception& e) {
        return json{{"ok", false}, {"error", e.what()}}.dump();
    }
    const std::string op = req.value("op", "");
    const auto now = Clock::now();
    std::lock_guard lk(mu_);

    auto expired = [&](const Record& r) { return r.expiry <= now; };

    if (op == "acquire") {
        const std::string role = req.at("role");
        const std::string instance = req.at("instance");
        const int ttl_ms = req.at("ttl_ms");
        auto it = leases_.find(role);
        if (it != leases_.end() && !expired(it->second) && it->second.instance != instance)
            return json{{"ok", false}, {"held", true}, {"holder", it->second.instance}}.dump();
        const bool same_holder =
            it != leases_.end() && !expired(it->second) && it->second.instance == instance;
        std::uint64_t epoch;
        if (same_holder) {
            epoch = it->second.epoch;
        } else {
            epoch = ++epochs_[role];
        }
        leases_[role] = Record{instance, epoch, now + std::chrono::milliseconds(ttl_ms),
                               req.value("meta", "{}"), ttl_ms};
        return json{{"ok", true}, {"epoch", epoch}}.dump();
    }
    if (op == "renew") {
        const std::string role = req.at("role");
        const std::string instance = req.at("instance");
        auto it = leases_.find(role);
        if (it == leases_.end() || expired(it->second) || it->second.instance != instance)
            return json{{"ok", false}, {"lost", true}}.dump();
        it->second.expiry = now + std::chrono::milliseconds(int(req.at("ttl_ms")));
        return json{{"ok", true}, {"epoch", it->second.epoch}}.dump();
    }
    if (op == "release") {
        auto it = leases_.find(req.at("role"));
        if (it != leases_.end() && it->second.instance == req.at("instance"))
            leases_.erase(it);
        return json{{"ok", true}}.dump();
    }
    if (op == "list" || op == "get") {
        json out = json::array();
        for (auto& [role, r] : leases_) {
            if (expired(r)) continue;
            if (op == "get" && role != req.at("role")) continue;
            const auto remain =
                std::chrono::duration_cast<std::chrono::milliseconds>(r.expiry - now);
            out.push_back({{"role", role},
                           {"instance", r.instance},
                           {"epoch", r.epoch},
                           {"expires_in_ms", int(remain.count())},
                           {"meta", r.meta}});
        }
        return json{{"ok", true}, {"leases", out}}.dump();
    }
    if (op == "ping") return json{{"ok", true}}.dump();
    return json{{"ok", false}, {"error", "unknown op " + op}}.dump();
}

std::string RegistryClient::request(const std::string& body) {
    std::lock_guard lk(mu_);
    for (int attempt = 0; attempt < 2; ++attempt) {
        try {
            if (!conn_.valid()) conn_ = tcp_connect(addr_);
            conn_.send_frame(encode_control(body));
            auto reply = conn_.recv_frame(5000);
            if (!reply) throw ConnectivityError("registry closed connection");
            return decode_control(*reply);
        } catch (const ConnectivityError&) {
            conn_.close();
            if (attempt == 1) throw;
        }
    }
    throw ConnectivityError("unreachable");
}

std::optional<Lease> RegistryClient::try_acquire(const std::string& role,
                                                 const std::string& instance, int ttl_ms,
                                                 const std::string& meta) {
    const auto resp = json::parse(request(json{{"op", "acquire"},
                                               {"role", role},
                                               {"instance", instance},
                                               {"ttl_ms", ttl_ms},
                                               {"meta", meta}}.dump()));
    if (!resp.value("ok", false)) {
        if (resp.value("held", false)) return std::nullopt;
        throw ConnectivityError("acquire failed: " + resp.value("error", ""));
    }
    return Lease{role, instance, resp.at("epoch")};
}

Lease RegistryClient::acquire(const std::string& role, const std::string& instance, int ttl_ms,
                              const std::string& meta) {
    auto lease = try_acquire(role, instance, ttl_ms, meta);
    if (!lease) throw LeaseHeldError("lease for role '" + role + "' is held");
    return *lease;
}

bool RegistryClient::renew(const Lease& lease, int ttl_ms) {
    const auto resp = json::parse(request(json{{"op", "renew"},
                                               {"role", lease.role},
                                               {"instance", lease.instance},
                                               {"ttl_ms", ttl_ms}}.dump()));
    return resp.value("ok", false);
}

void RegistryClient::release(const Lease& lease) {
    request(json{{"op", "release"}, {"role", lease.role}, {"instance", lease.instance}}.dump());
}

std::vector<LeaseInfo> RegistryClient::list() {
    const auto resp = json::parse(request(json{{"op", "list"}}.dump()));
    std::vector<LeaseInfo> out;
    for (const auto& l : resp.at("leases"))
        out.push_back({l.at("role"), l.at("instance"), l.at("epoch"), l.at("expires_in_ms"),
                       l.value("meta", "{}")});
    return out;
}

std::optional<LeaseInfo> RegistryClient::get(const std::string& role) {
    const auto resp =
        json::parse(request(json{{"op", "get"}, {"role", role}}.dump()));
    for (const auto& l : resp.at("leases"))
        return LeaseInfo{l.at("role"), l.at("instance"), l.at("epoch"), l.at("expires_in_ms"),
                         l.value("meta", "{}")};
    return std::nullopt;
}

}  // namespace pyramid
