#include "pyramid/config.hpp"

#include <fstream>

namespace pyramid {

ClusterConfig ClusterConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path.string());
    ClusterConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        lineno++;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "broker_addr") cfg.broker_addr = val;
            else if (key == "registry_addr") cfg.registry_addr = val;
            else if (key == "index_dir") cfg.index_dir = val;
            else if (key == "host") cfg.host = val;
            else if (key == "replicas") cfg.replicas = std::stoi(val);
            else if (key == "lease_ttl_ms") cfg.lease_ttl_ms = std::stoi(val);
            else if (key == "lease_renew_ms") cfg.lease_renew_ms = std::stoi(val);
            else if (key == "rebalance_ms") cfg.rebalance_ms = std::stoi(val);
            else if (key == "gather_timeout_ms") cfg.gather_timeout_ms = std::stoi(val);
            else if (key == "monitor_period_ms") cfg.monitor_period_ms = std::stoi(val);
            else if (key == "default_K") cfg.default_K = std::stoi(val);
            else if (key == "default_k") cfg.default_k = std::stoi(val);
            else if (key == "default_search_l") cfg.default_search_l = std::stoi(val);
            else if (key == "search_l_max") cfg.search_l_max = std::stoi(val);
            else if (key == "max_evals") cfg.max_evals = std::stoull(val);
            else if (key == "allow_injection") cfg.allow_injection = (val == "1" || val == "true");
            else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key " + key);
        } catch (const std::invalid_argument&) {
            throw ConfigError("config line " + std::to_string(lineno) + ": bad value for " + key);
        }
    }
    return cfg;
}

void ClusterConfig::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ConfigError("cannot write config: " + path.string());
    os << "broker_addr=" << broker_addr << "\n"
       << "registry_addr=" << registry_addr << "\n"
       << "index_dir=" << index_dir << "\n"
       << "host=" << host << "\n"
       << "replicas=" << replicas << "\n"
       << "lease_ttl_ms=" << lease_ttl_ms << "\n"
       << "lease_renew_ms=" << lease_renew_ms << "\n"
       << "rebalance_ms=" << rebalance_ms << "\n"
       << "gather_timeout_ms=" << gather_timeout_ms << "\n"
       << "monitor_period_ms=" << monitor_period_ms << "\n"
       << "default_K=" << default_K << "\n"
       << "default_k=" << default_k << "\n"
       << "default_search_l=" << default_search_l << "\n"
       << "search_l_max=" << search_l_max << "\n"
       << "max_evals=" << max_evals << "\n"
       << "allow_injection=" << (allow_injection ? 1 : 0) << "\n";
}

}  // namespace pyramid
