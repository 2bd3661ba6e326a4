#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pyramid/errors.hpp"

namespace pyramid {

/// Line-oriented key=value cluster configuration shared by every process
/// entry point. Unknown keys are rejected to catch typos.
struct ClusterConfig {
    std::string broker_addr = "127.0.0.1:7701";
    std::string registry_addr = "127.0.0.1:7702";
    std::string index_dir;
    std::string host = "127.0.0.1";
    int replicas = 2;
    int lease_ttl_ms = 2000;
    int lease_renew_ms = 500;
    int rebalance_ms = 500;
    int gather_timeout_ms = 100;
    int monitor_period_ms = 1000;
    int default_K = 1;
    int default_k = 10;
    int default_search_l = 100;
    int search_l_max = 1000;        // executor-side ceiling
    std::uint64_t max_evals = 0;    // executor-side cap on similarity computations
    bool allow_injection = false;   // straggler/failure controls (benchmark mode)

    static ClusterConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

}  // namespace pyramid
