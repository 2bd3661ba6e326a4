#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pyramid/bench.hpp"
#include "pyramid/broker.hpp"
#include "pyramid/config.hpp"
#include "pyramid/coordinator.hpp"
#include "pyramid/eval.hpp"
#include "pyramid/executor.hpp"
#include "pyramid/index.hpp"
#include "pyramid/master.hpp"
#include "pyramid/registry.hpp"
#include "pyramid/vecio.hpp"
#include "pyramid/wire.hpp"

namespace {

using namespace pyramid;

std::pair<std::string, std::uint16_t> split_host_port(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw ConfigError("address must be host:port: " + addr);
    return {addr.substr(0, colon), std::uint16_t(std::stoi(addr.substr(colon + 1)))};
}

std::string random_instance(const std::string& prefix) {
    std::random_device rd;
    return prefix + "-" + std::to_string(::getpid()) + "-" + std::to_string(rd() % 100000);
}

GroundTruth load_truth(const std::string& ids_path, std::size_t k) {
    const IntDataset ids = read_ivecs(ids_path);
    GroundTruth truth;
    truth.k = std::min(k, ids.dim);
    truth.entries.resize(ids.count);
    for (std::size_t i = 0; i < ids.count; ++i) {
        auto row = ids.row(i);
        for (std::size_t j = 0; j < truth.k; ++j)
            truth.entries[i].push_back({ItemId(row[j]), 0.0});
    }
    return truth;
}

/// Sends an admin op to one executor located through the registry.
int admin_call(const ClusterConfig& cfg, std::uint32_t shard, int slot,
               const nlohmann::json& op, bool expect_reply = true) {
    RegistryClient registry(cfg.registry_addr);
    const std::string role = "executor/" + std::to_string(shard) + "/" + std::to_string(slot);
    const auto info = registry.get(role);
    if (!info) throw NotFoundError("no live lease for " + role);
    const auto meta = nlohmann::json::parse(info->meta);
    TcpConn conn = tcp_connect(meta.at("admin"));
    conn.send_frame(encode_control(op.dump()));
    const auto reply = conn.recv_frame(5000);
    if (!reply) {
        // A killed executor dies without answering; that is the success case.
        if (!expect_reply) {
            std::cout << "ok\n";
            return 0;
        }
        throw ConnectivityError("no admin reply");
    }
    const auto resp = nlohmann::json::parse(decode_control(*reply));
    if (!resp.value("ok", false)) {
        std::cerr << "admin call failed: " << resp.value("error", "") << "\n";
        return 1;
    }
    std::cout << "ok\n";
    return 0;
}

/// Front port of the coordinator process: each inbound QueryRequest frame is
/// answered on the same connection with a PartialResult frame holding the
/// merged top-k (shard_id unused).
void serve_front(Coordinator& coordinator, TcpListener& front, const ClusterConfig& cfg) {
    std::vector<std::thread> conns;
    for (;;) {
        auto conn = front.accept(500);
        if (!conn) continue;
        conns.emplace_back(
            [&coordinator, &cfg](TcpConn c) {
                for (;;) {
                    std::optional<Bytes> payload;
                    try {
                        payload = c.recv_frame(0);
                    } catch (const std::exception&) {
                        return;
                    }
                    if (!payload || frame_type(*payload) != FrameType::QueryRequest) return;
                    const auto req = decode_query_request(*payload);
                    PartialResultMsg out;
                    out.query_id = req.query_id;
                    try {
                        out.hits = coordinator.execute(
                            req.vector, std::size_t(cfg.default_K), int(req.k),
                            int(req.search_l), cfg.gather_timeout_ms);
                    } catch (const PartialTimeoutError& e) {
                        out.hits = e.partial;
                    } catch (const std::exception&) {
                    }
                    try {
                        c.send_frame(encode_partial_result(out));
                    } catch (const std::exception&) {
                        return;
                    }
                }
            },
            std::move(*conn));
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-level HNSW similarity search engine"};
    app.require_subcommand(1);

    // ---- dataset plumbing -------------------------------------------------
    std::string in_path, out_path, format = "fvecs";
    auto* ingest = app.add_subcommand("ingest", "convert a vector file to fvecs");
    ingest->add_option("--input", in_path)->required();
    ingest->add_option("--output", out_path)->required();
    ingest->add_option("--format", format, "fvecs|bvecs");

    std::string kind = "uniform";
    std::size_t n = 10000, dim = 32, clusters = 16;
    double sigma = 0.5, log_sigma = 1.0;
    std::uint64_t seed = 42;
    auto* gen = app.add_subcommand("gen-synthetic", "generate a seeded synthetic dataset");
    gen->add_option("--kind", kind, "uniform|gaussian|lognormal");
    gen->add_option("--n", n);
    gen->add_option("--dim", dim);
    gen->add_option("--clusters", clusters);
    gen->add_option("--sigma", sigma);
    gen->add_option("--log-sigma", log_sigma);
    gen->add_option("--seed", seed);
    gen->add_option("--output", out_path)->required();

    std::string data_path, query_path, metric_name = "euclidean", scores_path;
    std::size_t gt_k = 100;
    auto* gt = app.add_subcommand("ground-truth", "exact top-k by linear scan");
    gt->add_option("--data", data_path)->required();
    gt->add_option("--queries", query_path)->required();
    gt->add_option("--k", gt_k);
    gt->add_option("--metric", metric_name, "euclidean|angular|ip");
    gt->add_option("--output", out_path, "ivecs of result ids")->required();
    gt->add_option("--scores", scores_path, "optional fvecs of result scores");

    // ---- index building ---------------------------------------------------
    IndexParams params;
    std::string index_dir;
    auto add_build_opts = [&](CLI::App* cmd) {
        cmd->add_option("--data", data_path)->required();
        cmd->add_option("--output", index_dir)->required();
        cmd->add_option("--metric", metric_name, "euclidean|angular|ip");
        cmd->add_option("--w", params.w);
        cmd->add_option("--seed", params.seed);
        cmd->add_option("--M", params.M);
        cmd->add_option("--M0", params.M0);
        cmd->add_option("--build-l", params.build_l);
    };
    auto* build = app.add_subcommand("build-index", "build the two-level index");
    add_build_opts(build);
    build->add_option("--m", params.m)->required();
    build->add_option("--n-prime", params.n_prime)->required();
    build->add_option("--r", params.r);
    build->add_option("--epsilon", params.epsilon);
    build->add_option("--kmeans-iters", params.kmeans_iters);
    build->add_option("--assign-l", params.assign_l);
    auto* build_naive = app.add_subcommand("build-index-naive",
                                           "random-partition baseline index");
    add_build_opts(build_naive);

    // ---- benchmarking -----------------------------------------------------
    BenchOptions bench_opts;
    std::string truth_path, csv_path, baseline_dir, config_path;
    bool use_cluster = false;
    auto* bench = app.add_subcommand("bench", "measure precision / access rate / latency");
    bench->add_option("--index", index_dir);
    bench->add_option("--queries", query_path)->required();
    bench->add_option("--truth", truth_path, "ivecs ground-truth ids");
    bench->add_option("--K", bench_opts.K);
    bench->add_option("--k", bench_opts.k);
    bench->add_option("--l", bench_opts.search_l);
    bench->add_option("--concurrency", bench_opts.concurrency);
    bench->add_option("--duration", bench_opts.duration_s, "seconds; 0 = one pass");
    bench->add_option("--baseline", baseline_dir, "naive index dir to compare against");
    bench->add_option("--csv", csv_path, "tabular report output");
    bench->add_flag("--cluster", use_cluster, "run against a live cluster");
    bench->add_option("--config", config_path, "cluster config (with --cluster)");
    bench->add_option("--timeout-ms", bench_opts.timeout_ms);

    std::size_t nb_k = 10, nb_buckets = 20;
    auto* norm_bias = app.add_subcommand("norm-bias",
                                         "MIPS result share by item-norm percentile");
    norm_bias->add_option("--data", data_path)->required();
    norm_bias->add_option("--queries", query_path)->required();
    norm_bias->add_option("--k", nb_k);
    norm_bias->add_option("--buckets", nb_buckets);
    norm_bias->add_option("--csv", csv_path);

    // ---- fault injection --------------------------------------------------
    auto* inject = app.add_subcommand("inject", "test-harness fault controls");
    inject->require_subcommand(1);
    std::uint32_t target_shard = 0;
    int target_slot = 0;
    double slow_factor = 10.0;
    auto* straggler = inject->add_subcommand("straggler", "slow one executor");
    straggler->add_option("--config", config_path)->required();
    straggler->add_option("--shard", target_shard)->required();
    straggler->add_option("--slot", target_slot)->required();
    straggler->add_option("--factor", slow_factor);
    auto* failure = inject->add_subcommand("failure", "kill one executor");
    failure->add_option("--config", config_path)->required();
    failure->add_option("--shard", target_shard)->required();
    failure->add_option("--slot", target_slot)->required();

    // ---- process entry points ----------------------------------------------
    std::string front_addr, instance;
    auto* coord_cmd = app.add_subcommand("coordinator", "run a coordinator process");
    coord_cmd->add_option("--config", config_path)->required();
    coord_cmd->add_option("--front", front_addr, "client-facing host:port (default host:0)");
    coord_cmd->add_option("--instance", instance);

    std::uint32_t exec_shard = 0;
    int exec_slot = -1;
    auto* exec_cmd = app.add_subcommand("executor", "run an executor process");
    exec_cmd->add_option("--config", config_path)->required();
    exec_cmd->add_option("--shard", exec_shard)->required();
    exec_cmd->add_option("--slot", exec_slot, "replica slot; default: first free");
    exec_cmd->add_option("--instance", instance);

    std::string exe_override;
    auto* master_cmd = app.add_subcommand("master", "run a master (or hot standby)");
    master_cmd->add_option("--config", config_path)->required();
    master_cmd->add_option("--instance", instance);
    master_cmd->add_option("--exe", exe_override, "executor binary to respawn");

    auto* broker_cmd = app.add_subcommand("broker", "run the message broker");
    broker_cmd->add_option("--config", config_path)->required();
    auto* registry_cmd = app.add_subcommand("registry", "run the lease registry");
    registry_cmd->add_option("--config", config_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            const Dataset ds = read_vectors(in_path, vec_format_from_string(format));
            write_fvecs(out_path, ds);
            std::cout << "count=" << ds.count << "\ndim=" << ds.dim << "\n";
            return 0;
        }
        if (*gen) {
            Dataset ds;
            if (kind == "uniform")
                ds = gen_uniform(n, dim, seed);
            else if (kind == "gaussian")
                ds = gen_gaussian_mixture(n, dim, clusters, sigma, seed);
            else if (kind == "lognormal")
                ds = gen_lognormal_norm(n, dim, log_sigma, seed);
            else
                throw ConfigError("unknown kind: " + kind);
            write_fvecs(out_path, ds);
            std::cout << "count=" << ds.count << "\ndim=" << ds.dim << "\n";
            return 0;
        }
        if (*gt) {
            const Dataset data = read_vectors(data_path, VecFormat::Fvecs);
            const Dataset queries = read_vectors(query_path, VecFormat::Fvecs);
            const GroundTruth truth =
                ground_truth(data, queries, gt_k, metric_from_string(metric_name));
            IntDataset ids{truth.k, truth.entries.size(), {}};
            Dataset scores{truth.k, truth.entries.size(), {}};
            for (const auto& entry : truth.entries)
                for (const auto& hit : entry) {
                    ids.data.push_back(std::int32_t(hit.id));
                    scores.data.push_back(float(hit.score));
                }
            write_ivecs(out_path, ids);
            if (!scores_path.empty()) write_fvecs(scores_path, scores);
            std::cout << "queries=" << truth.entries.size() << "\nk=" << truth.k << "\n";
            return 0;
        }
        if (*build || *build_naive) {
            const Dataset data = read_vectors(data_path, VecFormat::Fvecs);
            const MetricKind metric = metric_from_string(metric_name);
            PyramidIndex index;
            if (*build_naive)
                index = build_index_naive(data, metric, params);
            else if (metric == MetricKind::InnerProduct)
                index = build_index_mips(data, params);
            else
                index = build_index(data, metric, params);
            index.save(index_dir);
            std::cout << "w=" << index.w() << "\nitems=" << data.count << "\n";
            return 0;
        }
        if (*bench) {
            const Dataset queries = read_vectors(query_path, VecFormat::Fvecs);
            GroundTruth truth;
            const GroundTruth* truth_ptr = nullptr;
            if (!truth_path.empty()) {
                truth = load_truth(truth_path, std::size_t(bench_opts.k));
                truth_ptr = &truth;
            }
            BenchReport report;
            if (use_cluster) {
                if (config_path.empty()) throw ConfigError("--cluster requires --config");
                const ClusterConfig cfg = ClusterConfig::load(config_path);
                Coordinator coordinator(cfg, random_instance("bench"));
                report = run_benchmark_cluster(coordinator, queries, truth_ptr, bench_opts);
            } else {
                if (index_dir.empty()) throw ConfigError("--index is required without --cluster");
                const PyramidIndex index = PyramidIndex::load(index_dir);
                report = run_benchmark_local(index, queries, truth_ptr, bench_opts);
            }
            report.write_keyvalue(std::cout);
            if (!baseline_dir.empty() && !use_cluster) {
                const PyramidIndex naive = PyramidIndex::load(baseline_dir);
                BenchOptions naive_opts = bench_opts;
                naive_opts.K = naive.w();
                const BenchReport base =
                    run_benchmark_local(naive, queries, truth_ptr, naive_opts);
                std::cout << "baseline_precision_mean=" << base.precision_mean << "\n"
                          << "baseline_distance_computations_per_query="
                          << base.distance_computations_per_query << "\n"
                          << "work_ratio="
                          << report.distance_computations_per_query /
                                 std::max(base.distance_computations_per_query, 1.0)
                          << "\n";
            }
            if (!csv_path.empty()) report.write_csv(csv_path);
            return 0;
        }
        if (*norm_bias) {
            const Dataset data = read_vectors(data_path, VecFormat::Fvecs);
            const Dataset queries = read_vectors(query_path, VecFormat::Fvecs);
            const auto shares = mips_norm_bias(data, queries, nb_k, nb_buckets);
            std::ofstream csv;
            if (!csv_path.empty()) {
                csv.open(csv_path, std::ios::trunc);
                csv << "bucket,share\n";
            }
            for (std::size_t b = 0; b < shares.size(); ++b) {
                std::cout << "bucket_" << b << "_share=" << shares[b] << "\n";
                if (csv.is_open()) csv << b << "," << shares[b] << "\n";
            }
            return 0;
        }
        if (*straggler)
            return admin_call(ClusterConfig::load(config_path), target_shard, target_slot,
                              {{"op", "slow"}, {"factor", slow_factor}});
        if (*failure)
            return admin_call(ClusterConfig::load(config_path), target_shard, target_slot,
                              {{"op", "kill"}}, /*expect_reply=*/false);
        if (*coord_cmd) {
            const ClusterConfig cfg = ClusterConfig::load(config_path);
            if (instance.empty()) instance = random_instance("coord");
            Coordinator coordinator(cfg, instance);
            const auto [host, port] =
                front_addr.empty() ? std::pair{cfg.host, std::uint16_t(0)}
                                   : split_host_port(front_addr);
            TcpListener front(host, port);
            std::cout << "front=" << front.local_addr() << "\n"
                      << "reply=" << coordinator.reply_addr() << "\n"
                      << std::flush;
            serve_front(coordinator, front, cfg);
            return 0;
        }
        if (*exec_cmd) {
            const ClusterConfig cfg = ClusterConfig::load(config_path);
            if (instance.empty()) instance = random_instance("exec");
            try {
                Executor executor(cfg, exec_shard, instance, exec_slot);
                executor.start();
                std::cout << "shard=" << exec_shard << "\nslot=" << executor.slot()
                          << "\nepoch=" << executor.epoch() << "\nadmin="
                          << executor.admin_addr() << "\n"
                          << std::flush;
                executor.wait();
                return executor.lease_lost() ? 2 : 0;
            } catch (const LeaseHeldError& e) {
                // contract: a recovered old instance finding its lease held
                // exits immediately and cleanly
                std::cerr << e.what() << "\n";
                return 3;
            }
        }
        if (*master_cmd) {
            const ClusterConfig cfg = ClusterConfig::load(config_path);
            if (instance.empty()) instance = random_instance("master");
            const auto manifest = PyramidIndex::read_manifest(cfg.index_dir);
            const std::size_t w = std::stoull(manifest.at("w"));
            const std::string exe =
                exe_override.empty() ? std::filesystem::read_symlink("/proc/self/exe").string()
                                     : exe_override;
            Master master(cfg, instance, w, Master::process_spawner(exe, config_path));
            master.start();
            std::cout << "shards=" << w << "\n" << std::flush;
            master.wait();
            return 0;
        }
        if (*broker_cmd) {
            const ClusterConfig cfg = ClusterConfig::load(config_path);
            const auto [host, port] = split_host_port(cfg.broker_addr);
            BrokerServer::Options opts;
            opts.rebalance_ms = cfg.rebalance_ms;
            opts.member_ttl_ms = cfg.lease_ttl_ms;
            BrokerServer server(host, port, opts);
            server.start();
            std::cout << "broker=" << server.addr() << "\n" << std::flush;
            for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
        }
        if (*registry_cmd) {
            const ClusterConfig cfg = ClusterConfig::load(config_path);
            const auto [host, port] = split_host_port(cfg.registry_addr);
            RegistryServer server(host, port);
            server.start();
            std::cout << "registry=" << server.addr() << "\n" << std::flush;
            for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
