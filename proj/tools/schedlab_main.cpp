#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>

#include "schedlab/agent.hpp"
#include "schedlab/server.hpp"

namespace fs = std::filesystem;
using namespace schedlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDomain = 3;

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open '" + path + "'");
    json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw Error(Errc::ConfigError, "'" + path + "' is not valid JSON");
    return j;
}

WorkloadSpec load_workload(const std::string& path) {
    return WorkloadSpec::from_json(read_json_file(path));
}

// name-or-file: a builtin policy name or a DSL source file
PolicySpec load_policy(const std::string& name_or_file) {
    for (const auto& n : builtin_names())
        if (n == name_or_file) return builtin(n);
    if (fs::exists(name_or_file)) {
        std::ifstream in(name_or_file);
        std::string src((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return parse_policy(src);
    }
    throw Error(Errc::UnknownBuiltin,
                "'" + name_or_file + "' is neither a builtin policy nor a readable file");
}

int cmd_serve(const std::string& config_path) {
    json cfg_json;
    try {
        cfg_json = read_json_file(config_path);
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    }
    ServerConfig cfg;
    std::string mode, host;
    int port = 0;
    try {
        cfg = ServerConfig::from_json(cfg_json);
        mode = cfg_json.value("mode", "stdio");
        host = cfg_json.value("host", "127.0.0.1");
        port = cfg_json.value("port", 8177);
        if (mode != "stdio" && mode != "http")
            throw Error(Errc::ConfigError, "mode must be 'stdio' or 'http'");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    }

    ControlPlaneServer server(cfg);
    if (mode == "stdio") {
        std::cerr << "schedlab control plane listening on stdio (" << server.list_tools().size()
                  << " tools)\n";
        server.run_stdio(std::cin, std::cout);
        return kExitOk;
    }

    httplib::Server http;
    http.Post("/rpc", [&server](const httplib::Request& req, httplib::Response& res) {
        res.set_content(server.handle_request_text(req.body), "application/json");
    });
    std::cerr << "schedlab control plane listening on http://" << host << ":" << port << "/rpc\n";
    if (!http.listen(host, port)) {
        std::cerr << "failed to bind " << host << ":" << port << "\n";
        return kExitUsage;
    }
    return kExitOk;
}

int cmd_sim(const std::string& workload_path, const std::string& policy_name,
            std::uint64_t seed, const std::string& csv_path) {
    WorkloadSpec workload;
    try {
        workload = load_workload(workload_path);
        workload.validate();
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }
    try {
        auto policy = load_policy(policy_name);
        auto r = simulate(workload, policy, seed);
        if (!csv_path.empty()) {
            std::ofstream out(csv_path, std::ios::trunc);
            out << trace_to_csv(r);
        }
        std::cout << canonical_dump(r.to_json()) << "\n";
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitDomain;
    }
}

WorkloadSpec bench_workload(const std::string& suite, std::uint64_t seed) {
    if (suite == "longtail") {
        LongtailOptions o;
        o.seed = seed;
        o.jitter_sigma = seed == 0 ? 0.0 : 0.02;
        return gen_longtail_batch(39, kMicrosPerSecond, 1, 30 * kMicrosPerSecond, o);
    }
    if (suite == "builddag") {
        BuildDagOptions o;
        o.core_count = 8;
        return gen_build_dag(60, 3, seed, o);
    }
    if (suite == "latency") {
        LatencyChainOptions o;
        o.core_count = 4;
        o.n_wakes = 60;
        o.work_sigma = 0.3;
        o.hog_every = 199;
        o.hog_factor = 333.0;
        return gen_latency_chain(16, 30'000, 6'000, seed, o);
    }
    throw Error(Errc::ConfigError,
                "unknown suite '" + suite + "' (expected longtail|builddag|latency)");
}

void bench_row(std::ostream& out, const std::string& suite, const std::string& policy,
               const std::string& seed_label, const MetricsReport& m, const MetricsReport& base) {
    PerformanceDelta d;
    bool have_delta = true;
    try {
        d = compute_delta(m, base);
    } catch (const Error&) {
        have_delta = false;
    }
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%s,%s,%s,%lld,%.1f,%lld,%lld,%lld,%.4f,%.4f,%.4f,%.2f,%.2f,%.2f,%.2f\n",
                  suite.c_str(), policy.c_str(), seed_label.c_str(),
                  static_cast<long long>(m.makespan_us), m.avg_completion_us,
                  static_cast<long long>(m.latency_p50_us),
                  static_cast<long long>(m.latency_p95_us),
                  static_cast<long long>(m.latency_p99_us), m.throughput_per_s, m.jain_fairness,
                  m.cpu_utilization, have_delta ? d.avg_completion_pct : 0.0,
                  have_delta ? d.p99_pct : 0.0, have_delta ? d.makespan_pct : 0.0,
                  have_delta ? d.throughput_pct : 0.0);
    out << buf;
}

MetricsReport mean_metrics(const std::vector<MetricsReport>& ms) {
    MetricsReport m;
    if (ms.empty()) return m;
    m.jain_fairness = 0.0;
    double n = static_cast<double>(ms.size());
    double mk = 0, p50 = 0, p95 = 0, p99 = 0;
    for (const auto& x : ms) {
        mk += static_cast<double>(x.makespan_us);
        m.avg_completion_us += x.avg_completion_us;
        p50 += static_cast<double>(x.latency_p50_us);
        p95 += static_cast<double>(x.latency_p95_us);
        p99 += static_cast<double>(x.latency_p99_us);
        m.throughput_per_s += x.throughput_per_s;
        m.jain_fairness += x.jain_fairness;
        m.cpu_utilization += x.cpu_utilization;
        m.completed_tasks += x.completed_tasks;
        m.elapsed_us += x.elapsed_us;
    }
    m.makespan_us = static_cast<Micros>(mk / n);
    m.avg_completion_us /= n;
    m.latency_p50_us = static_cast<Micros>(p50 / n);
    m.latency_p95_us = static_cast<Micros>(p95 / n);
    m.latency_p99_us = static_cast<Micros>(p99 / n);
    m.throughput_per_s /= n;
    m.jain_fairness /= n;
    m.cpu_utilization /= n;
    m.completed_tasks = static_cast<std::int64_t>(m.completed_tasks / ms.size());
    m.elapsed_us /= static_cast<Micros>(ms.size());
    return m;
}

int cmd_bench(const std::string& suite, const std::string& policies_csv, int n_seeds) {
    std::vector<std::string> policy_names;
    std::string cur;
    for (char c : policies_csv + ",") {
        if (c == ',') {
            if (!cur.empty()) policy_names.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    try {
        std::vector<PolicySpec> policies;
        for (const auto& n : policy_names) policies.push_back(load_policy(n));
        auto baseline = builtin("fair_vruntime");
        bench_workload(suite, 1);  // validate the suite name before any output

        std::cout << "suite,policy,seed,makespan_us,avg_completion_us,latency_p50_us,"
                     "latency_p95_us,latency_p99_us,throughput_per_s,jain_fairness,"
                     "cpu_utilization,avg_completion_delta_pct,p99_delta_pct,makespan_delta_pct,"
                     "throughput_delta_pct\n";

        std::vector<MetricsReport> base_all;
        std::vector<std::vector<MetricsReport>> policy_all(policies.size());
        for (int s = 1; s <= n_seeds; ++s) {
            auto seed = static_cast<std::uint64_t>(s);
            auto workload = bench_workload(suite, seed);
            auto base = simulate(workload, baseline, seed).metrics;
            base_all.push_back(base);
            bench_row(std::cout, suite, baseline.name, std::to_string(s), base, base);
            for (std::size_t p = 0; p < policies.size(); ++p) {
                auto m = simulate(workload, policies[p], seed).metrics;
                policy_all[p].push_back(m);
                bench_row(std::cout, suite, policies[p].name, std::to_string(s), m, base);
            }
        }
        auto base_mean = mean_metrics(base_all);
        bench_row(std::cout, suite, baseline.name, "mean", base_mean, base_mean);
        for (std::size_t p = 0; p < policies.size(); ++p)
            bench_row(std::cout, suite, policies[p].name, "mean", mean_metrics(policy_all[p]),
                      base_mean);
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitDomain;
    }
}

int cmd_loop(const std::string& workload_path, int max_iters, const std::string& repo_path) {
    WorkloadSpec workload;
    try {
        workload = load_workload(workload_path);
        workload.validate();
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }
    try {
        ServerConfig cfg;
        cfg.repo_path = repo_path;
        ControlPlaneServer server(cfg);
        InProcessTransport transport(server);
        AgentLoop agent(transport);
        auto records = agent.run_loop(workload, max_iters);
        json arr = json::array();
        for (const auto& r : records) arr.push_back(r.to_json());
        std::cout << canonical_dump(arr) << "\n";
        auto active = server.deployments().active_policy_id();
        std::cerr << "iterations: " << records.size() << ", live policy: "
                  << (server.repo().exists(active) ? server.repo().get(active).spec.name : active)
                  << "\n";
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitDomain;
    }
}

int cmd_repo(const std::string& action, const std::string& repo_path, const std::string& arg) {
    try {
        PolicyRepo repo(repo_path);
        if (action == "list") {
            json arr = json::array();
            for (const auto& r : repo.list())
                arr.push_back(json{{"id", r.id},
                                   {"name", r.spec.name},
                                   {"outcomes", r.outcomes.size()},
                                   {"status", status_name(r.status)}});
            std::cout << canonical_dump(arr) << "\n";
            return kExitOk;
        }
        if (action == "show") {
            std::cout << canonical_dump(repo.get(arg).to_json()) << "\n";
            return kExitOk;
        }
        if (action == "export") {
            auto bundle = repo.export_bundle();
            if (arg.empty()) {
                std::cout << canonical_dump(bundle) << "\n";
            } else {
                std::ofstream out(arg, std::ios::trunc);
                out << canonical_dump(bundle) << "\n";
            }
            return kExitOk;
        }
        if (action == "import") {
            repo.import_bundle(read_json_file(arg));
            std::cout << canonical_dump(json{{"imported", true}, {"records", repo.size()}}) << "\n";
            return kExitOk;
        }
        std::cerr << "unknown repo action '" << action << "'\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitDomain;
    }
}

int cmd_gen(const std::string& family, const std::string& out_path, std::uint64_t seed) {
    try {
        auto workload = bench_workload(family, seed);
        if (out_path.empty()) {
            std::cout << canonical_dump(workload.to_json()) << "\n";
        } else {
            std::ofstream out(out_path, std::ios::trunc);
            out << canonical_dump(workload.to_json()) << "\n";
        }
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitDomain;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"schedlab: scheduler-policy control plane and simulator"};
    app.require_subcommand(1);

    std::string config_path;
    auto* serve = app.add_subcommand("serve", "run the JSON-RPC control-plane server");
    serve->add_option("--config", config_path, "server config JSON")->required();

    std::string workload_path, policy_name, csv_path;
    std::uint64_t seed = 0;
    auto* sim = app.add_subcommand("sim", "simulate one workload under one policy");
    sim->add_option("--workload", workload_path, "workload JSON file")->required();
    sim->add_option("--policy", policy_name, "builtin name or policy source file")->required();
    sim->add_option("--seed", seed, "simulation seed");
    sim->add_option("--csv", csv_path, "write the per-task trace CSV here");

    std::string suite_name, policies_csv;
    int n_seeds = 3;
    auto* bench = app.add_subcommand("bench", "run a benchmark suite against the fair baseline");
    bench->add_option("--suite", suite_name, "longtail|builddag|latency")->required();
    bench->add_option("--policies", policies_csv, "comma-separated policy names/files");
    bench->add_option("--seeds", n_seeds, "number of seeds (default 3)");

    std::string loop_workload, loop_repo;
    int max_iters = 3;
    auto* loop = app.add_subcommand("loop", "run the autonomous optimization loop headlessly");
    loop->add_option("--workload", loop_workload, "workload JSON file")->required();
    loop->add_option("--max-iters", max_iters, "iteration budget");
    loop->add_option("--repo", loop_repo, "policy repository directory (default in-memory)");

    std::string repo_action, repo_dir, repo_arg;
    auto* repo = app.add_subcommand("repo", "inspect or transfer a policy repository");
    repo->add_option("action", repo_action, "list|show|export|import")->required();
    repo->add_option("arg", repo_arg, "policy id or bundle path");
    repo->add_option("--repo", repo_dir, "repository directory")->required();

    std::string gen_family, gen_out;
    std::uint64_t gen_seed = 0;
    auto* gen = app.add_subcommand("gen", "generate a workload file");
    gen->add_option("--family", gen_family, "longtail|builddag|latency")->required();
    gen->add_option("--out", gen_out, "output path (default stdout)");
    gen->add_option("--seed", gen_seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (serve->parsed()) return cmd_serve(config_path);
    if (sim->parsed()) return cmd_sim(workload_path, policy_name, seed, csv_path);
    if (bench->parsed()) return cmd_bench(suite_name, policies_csv, n_seeds);
    if (loop->parsed()) return cmd_loop(loop_workload, max_iters, loop_repo);
    if (repo->parsed()) return cmd_repo(repo_action, repo_dir, repo_arg);
    if (gen->parsed()) return cmd_gen(gen_family, gen_out, gen_seed);
    return kExitUsage;
}
