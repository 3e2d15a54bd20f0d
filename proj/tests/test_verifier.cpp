#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "schedlab/verifier.hpp"

using namespace schedlab;

namespace {

bool has_finding(const StageReport& s, const std::string& code) {
    for (const auto& f : s.findings)
        if (f.code == code) return true;
    return false;
}

const Finding* find_finding(const StageReport& s, const std::string& code) {
    for (const auto& f : s.findings)
        if (f.code == code) return &f;
    return nullptr;
}

Verifier make_verifier(Micros fixed_now = 1'000'000) {
    return Verifier("unit-test-key", VerifierConfig{}, [fixed_now] { return fixed_now; });
}

}  // namespace

TEST_CASE("structural: divisor intervals decide division safety") {
    auto v = make_verifier();

    // weight ranges over [1, 10000]: interval excludes zero
    auto ok = parse_policy("priority = 1 / weight\n");
    auto s1 = v.verify_structural(ok);
    CHECK(s1.passed);
    CHECK_FALSE(has_finding(s1, "DIVZERO"));

    // exec_runtime starts at 0: interval includes zero
    auto bad = parse_policy("priority = 1 / exec_runtime\n");
    auto s2 = v.verify_structural(bad);
    CHECK_FALSE(s2.passed);
    CHECK(has_finding(s2, "DIVZERO"));

    // a param bounded away from zero is safe
    auto pok = parse_policy("param k = 2 in [1, 8]\npriority = wait_time / k\n");
    CHECK(v.verify_structural(pok).passed);
}

TEST_CASE("structural: depth limit and identifier binding") {
    auto v = make_verifier();

    PolicySpec deep;
    deep.name = "deep";
    Expr e = Expr::constant(1.0);
    for (int i = 0; i < 40; ++i) e = Expr::unary(Expr::Kind::Neg, std::move(e));
    deep.priority_expr = e;
    auto s = v.verify_structural(deep);
    CHECK_FALSE(s.passed);
    CHECK(has_finding(s, "DEPTH"));

    PolicySpec unbound;
    unbound.name = "unbound";
    unbound.priority_expr = Expr::param_ref("ghost");
    auto s2 = v.verify_structural(unbound);
    CHECK_FALSE(s2.passed);
    CHECK(has_finding(s2, "UNBOUND_IDENT"));

    PolicySpec oor;
    oor.name = "oor";
    oor.params["k"] = ParamDef{5.0, 0.0, 2.0};
    oor.priority_expr = Expr::param_ref("k");
    auto s3 = v.verify_structural(oor);
    CHECK_FALSE(s3.passed);
    CHECK(has_finding(s3, "PARAM_RANGE"));
}

TEST_CASE("structural: out-of-range slice is a warning, not a failure") {
    auto v = make_verifier();
    auto p = parse_policy("priority = -vruntime\nslice = 5000000\npreemptive = true\n");
    auto s = v.verify_structural(p);
    CHECK(s.passed);
    CHECK(has_finding(s, "SLICE_RANGE"));
}

TEST_CASE("starvation: the canonical regression pair") {
    auto v = make_verifier();

    SUBCASE("pure ljf is flagged with a witness workload") {
        auto s = v.analyze_starvation(builtin("ljf"));
        CHECK_FALSE(s.passed);
        auto* f = find_finding(s, "STARVATION");
        REQUIRE(f != nullptr);
        REQUIRE(f->witness.has_value());
        CHECK(f->witness->tasks.size() > 100);
        CHECK(f->witness->tasks[0].id == "bg_victim");
    }
    SUBCASE("ljf with a 0.01 wait_time aging term passes") {
        CHECK(v.analyze_starvation(with_aging_term(builtin("ljf"), 0.01)).passed);
    }
    SUBCASE("fair_vruntime passes") {
        CHECK(v.analyze_starvation(builtin("fair_vruntime")).passed);
    }
    SUBCASE("fifo, sjf and round_robin pass") {
        CHECK(v.analyze_starvation(builtin("fifo")).passed);
        CHECK(v.analyze_starvation(builtin("sjf")).passed);
        CHECK(v.analyze_starvation(builtin("round_robin")).passed);
    }
    SUBCASE("strict weight layering starves the low class") {
        auto s = v.analyze_starvation(builtin("layered_weight"));
        CHECK_FALSE(s.passed);
        CHECK(has_finding(s, "STARVATION"));
    }
    SUBCASE("priority that decays with waiting fails the monotonicity grid") {
        auto s = v.analyze_starvation(parse_policy("priority = -wait_time\n"));
        CHECK_FALSE(s.passed);
        CHECK(has_finding(s, "STARVATION"));
    }
    SUBCASE("deterministic: same spec, same findings") {
        auto a = v.analyze_starvation(builtin("ljf"));
        auto b = v.analyze_starvation(builtin("ljf"));
        CHECK(canonical_dump(a.to_json()) == canonical_dump(b.to_json()));
    }
}

TEST_CASE("property: structurally verified specs evaluate totally on in-range states") {
    auto v = make_verifier();
    std::mt19937_64 rng(90210);

    auto random_state = [&]() {
        TaskRuntimeState s;
        s.arrival_time = static_cast<Micros>(rng() % (1ull << 48));
        s.enqueue_time = static_cast<Micros>(rng() % (1ull << 48));
        s.wait_time = static_cast<Micros>(rng() % (1ull << 48));
        s.exec_runtime = static_cast<Micros>(rng() % (1ull << 48));
        s.vruntime = static_cast<double>(rng() % (1ull << 48));
        s.expected_runtime = static_cast<Micros>(rng() % (1ull << 48));
        s.weight = 1 + static_cast<int>(rng() % 10'000);
        s.wakeup_count = static_cast<std::int64_t>(rng() % (1ull << 32));
        s.now = static_cast<Micros>(rng() % (1ull << 48));
        return s;
    };

    // candidate pool: every builtin plus division-bearing specs that pass or
    // fail the structural stage; verified ones must never throw
    std::vector<PolicySpec> pool;
    for (const auto& n : builtin_names()) pool.push_back(builtin(n));
    pool.push_back(parse_policy("priority = 1 / weight\nslice = 3000\npreemptive = true\n"));
    pool.push_back(parse_policy("param k = 4 in [1, 9]\npriority = wait_time / k + weight\n"));
    pool.push_back(parse_policy("priority = 1 / exec_runtime\n"));  // structurally rejected
    pool.push_back(parse_policy("priority = 1 / (weight - weight)\n"));  // structurally rejected

    int verified = 0;
    for (const auto& spec : pool) {
        if (!v.verify_structural(spec).passed) continue;
        ++verified;
        for (int i = 0; i < 200; ++i) {
            auto s = random_state();
            CHECK_NOTHROW(eval_priority(spec, s));
            CHECK_NOTHROW(eval_slice_us(spec, s));
        }
    }
    CHECK(verified == 8);  // the two rejected specs were excluded, rest covered
}

TEST_CASE("dynamic: fifo regresses p99 against the fair baseline on the chain entry") {
    auto v = make_verifier();
    auto suite = make_validation_suite();
    auto s = v.validate_dynamic(builtin("fifo"), suite, builtin("fair_vruntime"), OptGoal::MinP99,
                                WorkloadFamily::LatencyChain);
    CHECK_FALSE(s.passed);
    CHECK(has_finding(s, "PERF_REGRESSION"));
}

TEST_CASE("dynamic: ljf improves avg completion on the long-tail entry") {
    auto v = make_verifier();
    auto suite = make_validation_suite();
    std::map<std::string, MetricsReport> base, cand;
    auto s = v.validate_dynamic(builtin("ljf"), suite, builtin("fair_vruntime"),
                                OptGoal::MinAvgCompletion, WorkloadFamily::BatchLongtail, &base,
                                &cand);
    CHECK(s.passed);
    // the long-tail entry shows a real improvement, not just a non-regression
    const auto& name = suite[2].name;
    auto d = compute_delta(cand.at(name), base.at(name));
    CHECK(d.avg_completion_pct < -10.0);
}

TEST_CASE("dynamic: a sandbox double that drops tasks yields TASK_LOST") {
    SimFn lossy = [](const WorkloadSpec& w, const PolicySpec& p, std::uint64_t seed) {
        auto r = simulate(w, p, seed);
        if (!r.trace.entries.empty() && r.trace.entries.back().completed()) {
            r.trace.entries.back().completion_us = -1;  // drop one completion
            r.metrics.completed_tasks -= 1;
        }
        return r;
    };
    Verifier v("k", VerifierConfig{}, [] { return Micros{0}; }, lossy);
    auto suite = make_validation_suite();
    auto s = v.validate_dynamic(builtin("fair_vruntime"), suite, builtin("fair_vruntime"),
                                OptGoal::MaxThroughput, WorkloadFamily::Custom);
    CHECK_FALSE(s.passed);
    CHECK(has_finding(s, "TASK_LOST"));
}

TEST_CASE("pipeline: stage order is strict and failures stop the run") {
    auto v = make_verifier();
    auto suite = make_validation_suite();

    auto failing = v.run_pipeline(builtin("ljf"), suite, builtin("fair_vruntime"),
                                  OptGoal::MinAvgCompletion, WorkloadFamily::BatchLongtail);
    CHECK_FALSE(failing.passed);
    REQUIRE(failing.stages.size() == 2);  // stage 3 never ran after stage 2 failed
    CHECK(failing.stages[0].name == "structural");
    CHECK(failing.stages[1].name == "starvation");

    auto structural_fail = v.run_pipeline(parse_policy("priority = 1 / exec_runtime\n"), suite,
                                          builtin("fair_vruntime"), OptGoal::MinP99,
                                          WorkloadFamily::LatencyChain);
    REQUIRE(structural_fail.stages.size() == 1);

    auto passing = v.run_pipeline(with_aging_term(builtin("ljf"), 0.01), suite,
                                  builtin("fair_vruntime"), OptGoal::MinAvgCompletion,
                                  WorkloadFamily::BatchLongtail);
    CHECK(passing.passed);
    CHECK(passing.stages.size() == 3);
    CHECK(passing.suite_hash == suite_hash(suite));
    CHECK_FALSE(passing.baseline_metrics.empty());
    CHECK(passing.config.contains("starvation_bound_us"));  // thresholds recorded
}

TEST_CASE("tokens: issue, verify, tamper, expire, suite binding") {
    Micros now = 50'000'000;
    Verifier v("signing-key-1", VerifierConfig{}, [&now] { return now; });
    auto suite = make_validation_suite();
    auto report = v.run_pipeline(with_aging_term(builtin("ljf"), 0.01), suite,
                                 builtin("fair_vruntime"), OptGoal::MinAvgCompletion,
                                 WorkloadFamily::BatchLongtail);
    REQUIRE(report.passed);

    auto token = v.issue_token(report);
    CHECK_NOTHROW(v.verify_token(token));
    CHECK(token.suite_hash == suite_hash(suite));

    SUBCASE("one flipped mac byte invalidates") {
        auto bad = token;
        bad.mac_b64[0] = bad.mac_b64[0] == 'A' ? 'B' : 'A';
        CHECK_THROWS_AS(v.verify_token(bad), Error);
        try {
            v.verify_token(bad);
        } catch (const Error& e) {
            CHECK(e.code() == Errc::InvalidToken);
        }
    }
    SUBCASE("mutating the bound policy id invalidates") {
        auto bad = token;
        bad.policy_id[0] = bad.policy_id[0] == 'a' ? 'b' : 'a';
        CHECK_THROWS_AS(v.verify_token(bad), Error);
    }
    SUBCASE("expiry honors the ttl against the injected clock") {
        now += v.config().token_ttl_us + 1;
        try {
            v.verify_token(token);
            FAIL("expected TokenExpired");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::TokenExpired);
        }
    }
    SUBCASE("another key never verifies") {
        Verifier other("different-key", VerifierConfig{}, [&now] { return now; });
        CHECK_THROWS_AS(other.verify_token(token), Error);
    }
    SUBCASE("json round-trip preserves the mac") {
        auto back = DeploymentToken::from_json(token.to_json());
        CHECK_NOTHROW(v.verify_token(back));
    }

    auto failed = v.run_pipeline(builtin("ljf"), suite, builtin("fair_vruntime"),
                                 OptGoal::MinAvgCompletion, WorkloadFamily::BatchLongtail);
    try {
        v.issue_token(failed);
        FAIL("expected VerdictNotPass");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::VerdictNotPass);
    }
}

namespace {

// scripted runner: candidate p99 inflated by a fixed percentage
class DegradedRunner : public WindowRunner {
public:
    DegradedRunner(MetricsReport base, const std::string& candidate_name, double p99_inflation)
        : base_(base), candidate_name_(candidate_name), inflation_(p99_inflation) {}

    MetricsReport run_window(const PolicySpec& policy, int) override {
        auto m = base_;
        if (policy.name == candidate_name_)
            m.latency_p99_us =
                static_cast<Micros>(static_cast<double>(m.latency_p99_us) * (1.0 + inflation_));
        return m;
    }

private:
    MetricsReport base_;
    std::string candidate_name_;
    double inflation_;
};

MetricsReport nominal_metrics() {
    MetricsReport m;
    m.makespan_us = 10'000'000;
    m.avg_completion_us = 2'000'000;
    m.latency_p50_us = 1'000'000;
    m.latency_p95_us = 1'500'000;
    m.latency_p99_us = 2'000'000;
    m.throughput_per_s = 50;
    m.completed_tasks = 100;
    m.elapsed_us = 10'000'000;
    return m;
}

}  // namespace

TEST_CASE("canary: self-comparison promotes with zero delta") {
    PolicyRepo repo;
    auto fair = repo.add(builtin("fair_vruntime"), "fair", {});
    DeploymentLog log(fair.id);
    CanaryController canary(log, repo, 123);

    auto w = gen_longtail_batch(10, 100'000, 1, 1'000'000);
    SimWindowRunner runner(w);
    CanaryConfig cfg;
    cfg.n_windows = 4;
    auto out = canary.run(builtin("fair_vruntime"), fair.id, builtin("fair_vruntime"), fair.id,
                          runner, cfg, OptGoal::MinAvgCompletion, "fp-self");

    CHECK(out.state.phase == CanaryPhase::Promoted);
    CHECK(out.state.windows_run == 4);
    CHECK(out.state.consecutive_trips == 0);
    REQUIRE(out.record.final_delta.has_value());
    CHECK(out.record.final_delta->avg_completion_pct == doctest::Approx(0.0));
    CHECK(log.active_policy_id() == fair.id);
    CHECK(log.report_feedback(out.state.deployment_id).avg_completion_pct == doctest::Approx(0.0));
}

TEST_CASE("canary: +30% p99 degradation trips the breaker within 3 windows") {
    PolicyRepo repo;
    auto fair = repo.add(builtin("fair_vruntime"), "fair baseline", {});
    auto cand = repo.add(builtin("round_robin"), "candidate", {});
    DeploymentLog log(fair.id);
    CanaryController canary(log, repo, 456);

    DegradedRunner runner(nominal_metrics(), "round_robin", 0.30);
    CanaryConfig cfg;  // threshold 10%, K=3, N=10
    auto out = canary.run(builtin("round_robin"), cand.id, builtin("fair_vruntime"), fair.id,
                          runner, cfg, OptGoal::MinP99, "fp-degraded");

    CHECK(out.state.phase == CanaryPhase::Reverted);
    CHECK(out.state.windows_run == 3);  // reverted within 3 candidate windows
    CHECK(out.state.consecutive_trips == 3);
    CHECK(log.active_policy_id() == fair.id);  // baseline reinstated

    // the repository received a negative outcome for the candidate
    auto rec = repo.get(cand.id);
    REQUIRE(rec.outcomes.size() == 1);
    CHECK(rec.outcomes[0].deployment_id == out.state.deployment_id);
    CHECK_FALSE(rec.outcomes[0].positive());
}

TEST_CASE("canary: non-consecutive dips do not trip the breaker") {
    PolicyRepo repo;
    auto fair = repo.add(builtin("fair_vruntime"), "fair", {});
    auto cand = repo.add(builtin("round_robin"), "cand", {});
    DeploymentLog log(fair.id);
    CanaryController canary(log, repo, 789);

    class FlakyRunner : public WindowRunner {
    public:
        explicit FlakyRunner(MetricsReport base) : base_(base) {}
        MetricsReport run_window(const PolicySpec& policy, int window_index) override {
            auto m = base_;
            // candidate degrades on two of every three windows: never 3 in a row
            if (policy.name == "round_robin" && window_index % 3 != 2)
                m.latency_p99_us = static_cast<Micros>(m.latency_p99_us * 1.5);
            return m;
        }
    private:
        MetricsReport base_;
    };

    FlakyRunner runner(nominal_metrics());
    CanaryConfig cfg;
    auto out = canary.run(builtin("round_robin"), cand.id, builtin("fair_vruntime"), fair.id,
                          runner, cfg, OptGoal::MinP99, "fp-flaky");
    CHECK(out.state.phase == CanaryPhase::Promoted);
    CHECK(out.state.windows_run == 10);
    CHECK(log.active_policy_id() == cand.id);
}

TEST_CASE("deployment log: unknown ids and incomplete windows") {
    DeploymentLog log("base");
    CHECK_THROWS_AS(log.get("dep-999999"), Error);
    try {
        log.report_feedback("dep-999999");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UnknownDeployment);
    }

    DeploymentRecord rec;
    rec.id = "dep-000001";
    rec.closed = false;
    log.put(rec);
    try {
        log.report_feedback("dep-000001");
        FAIL("expected WindowIncomplete");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::WindowIncomplete);
    }
}
