#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "schedlab/analysis.hpp"

using namespace schedlab;

namespace {

AnalysisSession session_for(WorkloadSpec w) {
    AnalysisSession s;
    s.id = "s1";
    s.source = std::make_shared<SimProbeSource>(std::move(w));
    return s;
}

WorkloadSpec longtail() { return gen_longtail_batch(39, kMicrosPerSecond, 1, 30 * kMicrosPerSecond); }

}  // namespace

TEST_CASE("summary at 512 bytes names the bimodal histogram") {
    AnalysisEngine engine;
    auto s = session_for(longtail());
    auto summary = engine.summarize(s, 512);

    CHECK(summary.family_guess == WorkloadFamily::BatchLongtail);
    CHECK(summary.task_count == 40);
    int occupied = 0;
    for (auto c : summary.duration_hist)
        if (c > 0) ++occupied;
    CHECK(occupied == 2);  // 39 short tasks in one bucket, 1 long in another
    CHECK(summary.duration_hist[5] == 39);  // 1s -> [1e6, 1e7)
    CHECK(summary.duration_hist[6] == 1);   // 30s -> [1e7, 1e8)
    CHECK(summary.rendered.find("hist_work_log10us") != std::string::npos);
    CHECK(summary.rendered.size() <= 512);
    CHECK(s.cost == AnalysisEngine::kSummaryCost);
}

TEST_CASE("budget law: rendered text never exceeds the budget; truncation is by salience") {
    AnalysisEngine engine;
    for (int budget : {128, 129, 150, 200, 256, 300, 512, 4096}) {
        auto s = session_for(longtail());
        auto summary = engine.summarize(s, budget);
        CHECK(summary.rendered.size() <= static_cast<std::size_t>(budget));
        // highest-salience lines always present
        CHECK(summary.rendered.find("family:") != std::string::npos);
        CHECK(summary.rendered.find("tasks:") != std::string::npos);
    }
    // 128 bytes: family and counts survive, the load line does not fit last
    auto s = session_for(longtail());
    auto tight = engine.summarize(s, 128);
    CHECK(tight.rendered.find("family:") == 0);

    auto s2 = session_for(longtail());
    CHECK_THROWS_AS(engine.summarize(s2, 64), Error);
    try {
        engine.summarize(s2, 64);
    } catch (const Error& e) {
        CHECK(e.code() == Errc::BudgetTooSmall);
    }
}

TEST_CASE("unbound session is rejected") {
    AnalysisEngine engine;
    AnalysisSession s;
    s.id = "empty";
    CHECK_THROWS_AS(engine.summarize(s, 512), Error);
    try {
        engine.summarize(s, 512);
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UnboundSession);
    }
}

TEST_CASE("profile_deep returns exactly the requested sections and bills per probe") {
    AnalysisEngine engine;
    auto s = session_for(longtail());

    auto r = engine.profile_deep(s, {"durations"});
    CHECK(r.has_durations);
    CHECK_FALSE(r.has_dag);
    REQUIRE_FALSE(r.top_longest.empty());
    CHECK(r.top_longest[0].first == "task_long_0000");  // the 30s task leads
    CHECK(r.top_longest[0].second == 30 * kMicrosPerSecond);
    CHECK(s.cost == AnalysisEngine::kProbeCost);

    auto r2 = engine.profile_deep(s, {"durations", "dag", "hints"});
    CHECK(r2.has_durations);
    CHECK(r2.has_dag);
    CHECK(r2.has_hints);
    CHECK_FALSE(r2.has_wake_chains);
    CHECK(r2.hint_coverage == doctest::Approx(1.0));
    CHECK(s.cost == AnalysisEngine::kProbeCost * 4);

    CHECK_THROWS_AS(engine.profile_deep(s, {"cache_misses"}), Error);
    try {
        engine.profile_deep(s, {"cache_misses"});
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UnsupportedProbe);
    }
    CHECK(s.cost == AnalysisEngine::kProbeCost * 4);  // failed probes bill nothing
}

TEST_CASE("dag probe depth matches an independent longest-path computation") {
    AnalysisEngine engine;
    auto w = gen_build_dag(60, 3, 11);
    auto s = session_for(w);
    auto r = engine.profile_deep(s, {"dag"});
    REQUIRE(r.has_dag);

    // oracle: longest path by DFS with memoization over the dep graph
    std::map<std::string, const TaskSpec*> by_id;
    for (const auto& t : w.tasks) by_id[t.id] = &t;
    std::map<std::string, int> memo;
    std::function<int(const TaskSpec*)> longest = [&](const TaskSpec* t) -> int {
        auto it = memo.find(t->id);
        if (it != memo.end()) return it->second;
        int best = 1;
        for (const auto& d : t->deps) best = std::max(best, 1 + longest(by_id.at(d)));
        memo[t->id] = best;
        return best;
    };
    int oracle_depth = 0;
    for (const auto& t : w.tasks) oracle_depth = std::max(oracle_depth, longest(&t));

    CHECK(r.dag_depth == oracle_depth);
    CHECK(r.dag_roots >= 1);
    CHECK(r.dag_width >= 1);
}

TEST_CASE("wake chain probe sees the chain structure") {
    AnalysisEngine engine;
    LatencyChainOptions o;
    o.n_wakes = 10;
    auto s = session_for(gen_latency_chain(4, 30'000, 5'000, 1, o));
    auto r = engine.profile_deep(s, {"wake_chains"});
    REQUIRE(r.has_wake_chains);
    CHECK(r.chain_count == 4);
    CHECK(r.chain_mean_length == doctest::Approx(10.0));
    CHECK(r.chain_period_estimate_us == 30'000);
}

TEST_CASE("classification maps families to goals deterministically") {
    AnalysisEngine engine;

    auto check = [&](WorkloadSpec w, WorkloadFamily fam, OptGoal goal) {
        auto s = session_for(std::move(w));
        auto summary = engine.summarize(s, 1024);
        CHECK(summary.family_guess == fam);
        auto p = engine.classify(summary);
        CHECK(p.optimization_goal == goal);
        CHECK(p.family == fam);
        return p;
    };

    check(gen_build_dag(40, 3, 5), WorkloadFamily::BuildDag, OptGoal::MinMakespan);
    check(gen_latency_chain(4, 30'000, 5'000, 5), WorkloadFamily::LatencyChain, OptGoal::MinP99);
    auto lt = check(longtail(), WorkloadFamily::BatchLongtail, OptGoal::MinAvgCompletion);
    CHECK(lt.confidence == doctest::Approx(0.7));  // no tier-2 report yet

    WorkloadSpec custom;
    custom.name = "uniform";
    custom.core_count = 2;
    for (int i = 0; i < 4; ++i) {
        TaskSpec t;
        t.id = "u" + std::to_string(i);
        t.arrival_us = i * 100;
        t.total_work_us = 1000;
        custom.tasks.push_back(t);
    }
    auto p = check(custom, WorkloadFamily::Custom, OptGoal::MaxThroughput);
    CHECK(p.confidence <= 0.5);
}

TEST_CASE("confidence rises with a tier-2 report; override can replace the rules") {
    AnalysisEngine engine;
    auto s = session_for(longtail());
    auto summary = engine.summarize(s, 1024);
    auto report = engine.profile_deep(s, {"durations"});
    auto p = engine.classify(summary, report);
    CHECK(p.confidence == doctest::Approx(0.9));
    CHECK(p.description.find("task_long_0000") != std::string::npos);

    engine.set_classifier_override([](const WorkloadSummary&, const std::optional<ProfileReport>&) {
        WorkloadProfile q;
        q.description = "override";
        q.optimization_goal = OptGoal::MaxThroughput;
        q.confidence = 1.0;
        return std::optional<WorkloadProfile>(q);
    });
    CHECK(engine.classify(summary, report).description == "override");
}

TEST_CASE("tier monotonicity: one summary costs less than any probe set") {
    AnalysisEngine engine;
    auto s1 = session_for(longtail());
    engine.summarize(s1, 512);
    auto tier1_cost = s1.cost;

    for (const auto& probes : std::vector<std::set<std::string>>{
             {"durations"}, {"dag"}, {"durations", "dag"}, {"durations", "dag", "hints"}}) {
        auto s2 = session_for(longtail());
        engine.profile_deep(s2, probes);
        CHECK(tier1_cost < s2.cost);
    }
}

TEST_CASE("fingerprints are stable per workload and move with task count") {
    AnalysisEngine engine;
    auto s1 = session_for(longtail());
    auto s2 = session_for(longtail());
    auto f1 = engine.classify(engine.summarize(s1, 512)).fingerprint;
    auto f2 = engine.classify(engine.summarize(s2, 512)).fingerprint;
    CHECK(f1 == f2);

    auto s3 = session_for(gen_longtail_batch(38, kMicrosPerSecond, 1, 30 * kMicrosPerSecond));
    auto f3 = engine.classify(engine.summarize(s3, 512)).fingerprint;
    CHECK(f1 != f3);

    // metric noise (duration jitter within buckets) does not move it
    LongtailOptions jit;
    jit.seed = 9;
    jit.jitter_sigma = 0.02;
    auto s4 = session_for(gen_longtail_batch(39, kMicrosPerSecond, 1, 30 * kMicrosPerSecond, jit));
    auto f4 = engine.classify(engine.summarize(s4, 512)).fingerprint;
    CHECK(f1 == f4);
}

TEST_CASE("feedback channel resolves closed deployments only") {
    DeploymentLog log("base");
    AnalysisEngine engine(&log);

    CHECK_THROWS_AS(engine.report_feedback("dep-000042"), Error);

    DeploymentRecord rec;
    rec.id = "dep-000042";
    rec.closed = true;
    rec.baseline_windows.push_back(MetricsReport{});
    rec.candidate_windows.push_back(MetricsReport{});
    rec.final_delta = PerformanceDelta{};  // identical windows -> all-zero delta
    log.put(rec);
    auto d = engine.report_feedback("dep-000042");
    CHECK(d.avg_completion_pct == doctest::Approx(0.0));
    CHECK(d.p99_pct == doctest::Approx(0.0));
}
