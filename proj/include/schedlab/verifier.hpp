#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "schedlab/repo.hpp"
#include "schedlab/sim.hpp"
#include "schedlab/workload_gen.hpp"

namespace schedlab {

// ---------------------------------------------------------------------------
// Findings and reports
// ---------------------------------------------------------------------------

struct Finding {
    std::string code;
    std::string severity;  // "error" fails the stage, "warning" does not
    std::string message;
    std::optional<WorkloadSpec> witness;

    json to_json() const {
        json j;
        j["code"] = code;
        j["message"] = message;
        j["severity"] = severity;
        if (witness) j["witness"] = witness->to_json();
        return j;
    }
};

struct StageReport {
    std::string name;
    bool passed = true;
    std::vector<Finding> findings;

    void add(std::string code, std::string severity, std::string message,
             std::optional<WorkloadSpec> witness = std::nullopt) {
        if (severity == "error") passed = false;
        findings.push_back({std::move(code), std::move(severity), std::move(message),
                            std::move(witness)});
    }

    json to_json() const {
        json fj = json::array();
        for (const auto& f : findings) fj.push_back(f.to_json());
        return json{{"findings", std::move(fj)}, {"name", name}, {"passed", passed}};
    }
};

struct ValidationReport {
    std::string policy_id;
    std::string suite_hash;
    std::vector<StageReport> stages;
    bool passed = false;
    std::map<std::string, MetricsReport> baseline_metrics;   // per suite entry
    std::map<std::string, MetricsReport> candidate_metrics;  // per suite entry
    json config;  // thresholds in force, recorded with every report

    json to_json() const {
        json j;
        json bm = json::object();
        for (const auto& [k, v] : baseline_metrics) bm[k] = v.to_json();
        json cm = json::object();
        for (const auto& [k, v] : candidate_metrics) cm[k] = v.to_json();
        j["baseline_metrics"] = std::move(bm);
        j["candidate_metrics"] = std::move(cm);
        j["config"] = config;
        j["passed"] = passed;
        j["policy_id"] = policy_id;
        json sj = json::array();
        for (const auto& s : stages) sj.push_back(s.to_json());
        j["stages"] = std::move(sj);
        j["suite_hash"] = suite_hash;
        return j;
    }
};

// ---------------------------------------------------------------------------
// Signed deployment tokens
// ---------------------------------------------------------------------------

using Clock = std::function<Micros()>;

inline Micros system_clock_us() {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

struct DeploymentToken {
    std::string policy_id;
    std::string suite_hash;
    Micros issued_at_us = 0;
    Micros ttl_us = 0;
    std::string mac_b64;

    std::string mac_input() const {
        return policy_id + "\n" + suite_hash + "\n" + std::to_string(issued_at_us) + "\n" +
               std::to_string(ttl_us);
    }

    static DeploymentToken issue(const std::string& key, std::string policy_id,
                                 std::string suite_hash, Micros now, Micros ttl) {
        DeploymentToken t;
        t.policy_id = std::move(policy_id);
        t.suite_hash = std::move(suite_hash);
        t.issued_at_us = now;
        t.ttl_us = ttl;
        t.mac_b64 = base64_encode(hmac_sha256(key, t.mac_input()));
        return t;
    }

    // Throws InvalidToken on a bad mac, TokenExpired past the ttl.
    void verify(const std::string& key, Micros now) const {
        auto expected = base64_encode(hmac_sha256(key, mac_input()));
        if (expected.size() != mac_b64.size()) throw Error(Errc::InvalidToken, "bad mac");
        unsigned diff = 0;
        for (std::size_t i = 0; i < expected.size(); ++i)
            diff |= static_cast<unsigned>(expected[i] ^ mac_b64[i]);
        if (diff != 0) throw Error(Errc::InvalidToken, "bad mac");
        if (now > issued_at_us + ttl_us) throw Error(Errc::TokenExpired, "token past its ttl");
    }

    json to_json() const {
        json j;
        j["issued_at_us"] = issued_at_us;
        j["mac"] = mac_b64;
        j["policy_id"] = policy_id;
        j["suite_hash"] = suite_hash;
        j["ttl_us"] = ttl_us;
        return j;
    }

    static DeploymentToken from_json(const json& j) {
        DeploymentToken t;
        t.issued_at_us = j.at("issued_at_us").get<Micros>();
        t.mac_b64 = j.at("mac").get<std::string>();
        t.policy_id = j.at("policy_id").get<std::string>();
        t.suite_hash = j.at("suite_hash").get<std::string>();
        t.ttl_us = j.at("ttl_us").get<Micros>();
        return t;
    }
};

// ---------------------------------------------------------------------------
// Interval arithmetic over declared feature ranges (structural stage)
// ---------------------------------------------------------------------------

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains_zero() const { return lo <= 0.0 && hi >= 0.0; }
};

namespace verifier_detail {

constexpr double kTimeMax = 281474976710656.0;  // 2^48 µs
constexpr double kCountMax = 4294967296.0;      // 2^32

inline Interval feature_interval(Feature f) {
    switch (f) {
        case Feature::Weight: return {1.0, 10000.0};
        case Feature::WakeupCount: return {0.0, kCountMax};
        default: return {0.0, kTimeMax};
    }
}

inline Interval iv_neg(Interval a) { return {-a.hi, -a.lo}; }
inline Interval iv_add(Interval a, Interval b) { return {a.lo + b.lo, a.hi + b.hi}; }
inline Interval iv_sub(Interval a, Interval b) { return {a.lo - b.hi, a.hi - b.lo}; }

inline Interval iv_mul(Interval a, Interval b) {
    double c[4] = {a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi};
    return {std::min({c[0], c[1], c[2], c[3]}), std::max({c[0], c[1], c[2], c[3]})};
}

inline Interval iv_div(Interval a, Interval b) {
    // caller must have rejected divisor intervals containing zero
    Interval inv{1.0 / b.hi, 1.0 / b.lo};
    return iv_mul(a, inv);
}

inline Interval iv_min(Interval a, Interval b) {
    return {std::min(a.lo, b.lo), std::min(a.hi, b.hi)};
}
inline Interval iv_max(Interval a, Interval b) {
    return {std::max(a.lo, b.lo), std::max(a.hi, b.hi)};
}

// Walks the tree, collecting DIVZERO findings for divisor intervals that
// include zero; returns the value interval of the expression.
inline Interval expr_interval(const Expr& e, const ParamMap& params, StageReport& out) {
    switch (e.kind) {
        case Expr::Kind::Const: return {e.value, e.value};
        case Expr::Kind::Feat: return feature_interval(e.feat);
        case Expr::Kind::Param: {
            auto it = params.find(e.param);
            if (it == params.end()) return {0.0, 0.0};  // reported separately
            return {it->second.min, it->second.max};
        }
        case Expr::Kind::Neg: return iv_neg(expr_interval(e.kids[0], params, out));
        case Expr::Kind::Add:
            return iv_add(expr_interval(e.kids[0], params, out),
                          expr_interval(e.kids[1], params, out));
        case Expr::Kind::Sub:
            return iv_sub(expr_interval(e.kids[0], params, out),
                          expr_interval(e.kids[1], params, out));
        case Expr::Kind::Mul:
            return iv_mul(expr_interval(e.kids[0], params, out),
                          expr_interval(e.kids[1], params, out));
        case Expr::Kind::Div: {
            auto num = expr_interval(e.kids[0], params, out);
            auto den = expr_interval(e.kids[1], params, out);
            if (den.contains_zero()) {
                out.add("DIVZERO", "error",
                        "divisor '" + render_expr(e.kids[1]) + "' can reach zero over [" +
                            std::to_string(den.lo) + ", " + std::to_string(den.hi) + "]");
                return {-kTimeMax, kTimeMax};
            }
            return iv_div(num, den);
        }
        case Expr::Kind::Min:
            return iv_min(expr_interval(e.kids[0], params, out),
                          expr_interval(e.kids[1], params, out));
        case Expr::Kind::Max:
            return iv_max(expr_interval(e.kids[0], params, out),
                          expr_interval(e.kids[1], params, out));
        case Expr::Kind::Clamp: {
            auto x = expr_interval(e.kids[0], params, out);
            auto lo = expr_interval(e.kids[1], params, out);
            auto hi = expr_interval(e.kids[2], params, out);
            (void)x;
            return {std::min(lo.lo, hi.lo), std::max(lo.hi, hi.hi)};
        }
    }
    return {0.0, 0.0};
}

}  // namespace verifier_detail

// ---------------------------------------------------------------------------
// Adversarial and probe workloads used by the starvation stage
// ---------------------------------------------------------------------------

// Saturating stream of heavy tasks with a fresh arrival just before every
// completion boundary, plus one low-weight background victim. A policy must
// keep the victim's max contiguous wait under the starvation bound.
inline WorkloadSpec make_starvation_stream(Micros horizon_us = 60 * kMicrosPerSecond) {
    WorkloadSpec w;
    w.name = "adversarial-starvation-stream";
    w.family = WorkloadFamily::Custom;
    w.core_count = 1;
    w.horizon_us = horizon_us;
    w.seed = 0;

    TaskSpec victim;
    victim.id = "bg_victim";
    victim.arrival_us = 0;
    victim.total_work_us = 100'000;
    victim.expected_runtime_us = 100'000;
    victim.weight = 1;
    w.tasks.push_back(victim);

    const Micros period = 140'000;
    for (int k = 0;; ++k) {
        Micros arrival = k == 0 ? 0 : period * k - 1'000;
        if (arrival >= horizon_us) break;
        TaskSpec t;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "stream_%04d", k);
        t.id = buf;
        t.arrival_us = arrival;
        t.total_work_us = period;
        t.expected_runtime_us = period;
        t.weight = 100;
        w.tasks.push_back(std::move(t));
    }
    w.validate();
    return w;
}

// Sixteen identical tasks; any work-conserving policy that completes them
// attains equal shares, so a low Jain index here marks dropped or starved
// work rather than ordering preferences.
inline WorkloadSpec make_uniform_fairness_workload() {
    WorkloadSpec w;
    w.name = "uniform-16";
    w.family = WorkloadFamily::Custom;
    w.core_count = 4;
    w.seed = 0;
    for (int i = 0; i < 16; ++i) {
        TaskSpec t;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "unif_%02d", i);
        t.id = buf;
        t.arrival_us = 0;
        t.total_work_us = 2 * kMicrosPerSecond;
        t.expected_runtime_us = t.total_work_us;
        t.weight = 100;
        w.tasks.push_back(std::move(t));
    }
    return w;
}

// The standard dynamic-validation suite: one workload per family.
inline std::vector<WorkloadSpec> make_validation_suite(std::uint64_t seed = 7) {
    std::vector<WorkloadSpec> suite;
    {
        BuildDagOptions o;
        o.core_count = 8;
        suite.push_back(gen_build_dag(60, 3, seed, o));
    }
    {
        LatencyChainOptions o;
        o.core_count = 4;
        o.n_wakes = 60;
        o.work_sigma = 0.3;
        o.hog_every = 199;     // a handful of convoy-forming hogs
        o.hog_factor = 333.0;  // ~2s of work against 6ms requests
        suite.push_back(gen_latency_chain(16, 30'000, 6'000, seed, o));
    }
    {
        LongtailOptions o;
        o.seed = seed;
        suite.push_back(gen_longtail_batch(39, kMicrosPerSecond, 1, 30 * kMicrosPerSecond, o));
    }
    return suite;
}

inline std::string suite_hash(const std::vector<WorkloadSpec>& suite) {
    json arr = json::array();
    for (const auto& w : suite) arr.push_back(w.to_json());
    return sha256_hex(canonical_dump(arr));
}

// ---------------------------------------------------------------------------
// The staged verifier
// ---------------------------------------------------------------------------

struct VerifierConfig {
    Micros starvation_bound_us = 10 * kMicrosPerSecond;
    Micros stress_horizon_us = 60 * kMicrosPerSecond;
    double unfair_jain_min = 0.5;
    int monotonicity_samples = 1000;
    double stage3_regression_pct = 5.0;  // goal-metric regression that fails stage 3
    Micros token_ttl_us = 24ll * 3600 * kMicrosPerSecond;

    json to_json() const {
        json j;
        j["monotonicity_samples"] = monotonicity_samples;
        j["stage3_regression_pct"] = stage3_regression_pct;
        j["starvation_bound_us"] = starvation_bound_us;
        j["stress_horizon_us"] = stress_horizon_us;
        j["token_ttl_us"] = token_ttl_us;
        j["unfair_jain_min"] = unfair_jain_min;
        return j;
    }
};

using SimFn = std::function<SimResult(const WorkloadSpec&, const PolicySpec&, std::uint64_t)>;

class Verifier {
public:
    explicit Verifier(std::string signing_key, VerifierConfig config = {},
                      Clock clock = system_clock_us, SimFn sim = {})
        : key_(std::move(signing_key)), cfg_(config), clock_(std::move(clock)) {
        sim_ = sim ? std::move(sim)
                   : [](const WorkloadSpec& w, const PolicySpec& p, std::uint64_t s) {
                         return simulate(w, p, s);
                     };
    }

    const VerifierConfig& config() const { return cfg_; }

    // Stage 1: loop-freedom is structural; this checks binding, ranges,
    // divisor safety via interval arithmetic, depth, and slice bounds.
    StageReport verify_structural(const PolicySpec& spec) const {
        StageReport stage;
        stage.name = "structural";

        for (const auto& [n, def] : spec.params) {
            if (def.min > def.max)
                stage.add("PARAM_RANGE", "error", "param '" + n + "' has min > max");
            else if (def.value < def.min || def.value > def.max)
                stage.add("PARAM_RANGE", "error", "param '" + n + "' value outside its range");
        }

        auto check_tree = [&](const Expr& e, const char* which) {
            if (e.depth() > kMaxExprDepth)
                stage.add("DEPTH", "error",
                          std::string(which) + " expression depth " + std::to_string(e.depth()) +
                              " exceeds limit " + std::to_string(kMaxExprDepth));
            e.visit([&](const Expr& n) {
                if (n.kind == Expr::Kind::Param && !spec.params.count(n.param))
                    stage.add("UNBOUND_IDENT", "error",
                              std::string(which) + " references unknown '" + n.param + "'");
            });
            verifier_detail::expr_interval(e, spec.params, stage);
        };
        check_tree(spec.priority_expr, "priority");
        check_tree(spec.slice_expr, "slice");

        if (spec.preemptive) {
            StageReport scratch;
            auto iv = verifier_detail::expr_interval(spec.slice_expr, spec.params, scratch);
            if (iv.lo < static_cast<double>(kSliceMinUs) ||
                iv.hi > static_cast<double>(kSliceMaxUs)) {
                stage.add("SLICE_RANGE", "warning",
                          "slice expression range [" + std::to_string(iv.lo) + ", " +
                              std::to_string(iv.hi) + "] leaves [100, 100000] us; runtime clamps");
            }
        }
        return stage;
    }

    // Stage 2: scheduler-specific analysis for starvation and unfairness.
    StageReport analyze_starvation(const PolicySpec& spec) const {
        StageReport stage;
        stage.name = "starvation";

        if (!is_fifo_ordered(spec)) monotonicity_check(spec, stage);
        stress_check(spec, stage);
        unfairness_check(spec, stage);
        return stage;
    }

    // Stage 3: paired dynamic validation against the baseline on a suite.
    // The goal metric is enforced on the suite entry matching the profile's
    // family; every entry contributes correctness findings.
    StageReport validate_dynamic(const PolicySpec& spec, const std::vector<WorkloadSpec>& suite,
                                 const PolicySpec& baseline, OptGoal goal,
                                 WorkloadFamily profile_family,
                                 std::map<std::string, MetricsReport>* baseline_out = nullptr,
                                 std::map<std::string, MetricsReport>* candidate_out = nullptr) const {
        StageReport stage;
        stage.name = "dynamic";
        for (const auto& entry : suite) {
            SimResult cand, base;
            try {
                cand = sim_(entry, spec, entry.seed);
                base = sim_(entry, baseline, entry.seed);
            } catch (const Error& e) {
                stage.add("EVAL_ERROR", "error",
                          std::string("simulation failed on '") + entry.name + "': " + e.what());
                continue;
            }
            if (baseline_out) (*baseline_out)[entry.name] = base.metrics;
            if (candidate_out) (*candidate_out)[entry.name] = cand.metrics;

            for (const auto& v : cand.violations)
                stage.add("SIM_VIOLATION", "error", "'" + entry.name + "': " + v);
            if (cand.complete &&
                cand.metrics.completed_tasks < static_cast<std::int64_t>(entry.tasks.size()))
                stage.add("TASK_LOST", "error",
                          "'" + entry.name + "': " +
                              std::to_string(entry.tasks.size() -
                                             static_cast<std::size_t>(cand.metrics.completed_tasks)) +
                              " tasks never completed");

            if (entry.family == profile_family) {
                PerformanceDelta d;
                try {
                    d = compute_delta(cand.metrics, base.metrics);
                } catch (const Error&) {
                    continue;  // degenerate baseline entry: correctness-only
                }
                double improvement = d.improvement_pct(goal);
                if (improvement < -cfg_.stage3_regression_pct) {
                    stage.add("PERF_REGRESSION", "error",
                              "'" + entry.name + "': " + goal_name(goal) + " regressed " +
                                  std::to_string(-improvement) + "% vs baseline (limit " +
                                  std::to_string(cfg_.stage3_regression_pct) + "%)");
                }
            }
        }
        return stage;
    }

    // Stages run strictly in order; a failed stage stops the pipeline.
    ValidationReport run_pipeline(const PolicySpec& spec, const std::vector<WorkloadSpec>& suite,
                                  const PolicySpec& baseline, OptGoal goal,
                                  WorkloadFamily profile_family) const {
        ValidationReport report;
        report.policy_id = spec.content_id();
        report.suite_hash = suite_hash(suite);
        report.config = cfg_.to_json();

        report.stages.push_back(verify_structural(spec));
        if (report.stages.back().passed) {
            report.stages.push_back(analyze_starvation(spec));
            if (report.stages.back().passed) {
                report.stages.push_back(validate_dynamic(spec, suite, baseline, goal, profile_family,
                                                         &report.baseline_metrics,
                                                         &report.candidate_metrics));
            }
        }
        report.passed = true;
        for (const auto& s : report.stages)
            if (!s.passed) report.passed = false;
        return report;
    }

    DeploymentToken issue_token(const ValidationReport& report) const {
        if (!report.passed)
            throw Error(Errc::VerdictNotPass, "cannot issue a token for a failing report");
        return DeploymentToken::issue(key_, report.policy_id, report.suite_hash, clock_(),
                                      cfg_.token_ttl_us);
    }

    void verify_token(const DeploymentToken& token) const { token.verify(key_, clock_()); }

    Micros now() const { return clock_(); }

private:
    static bool is_fifo_ordered(const PolicySpec& spec) {
        // non-preemptive FIFO in arrival order never starves: every task
        // eventually reaches the queue head
        return !spec.preemptive &&
               spec.priority_expr ==
                   Expr::unary(Expr::Kind::Neg, Expr::feature(Feature::ArrivalTime));
    }

    void monotonicity_check(const PolicySpec& spec, StageReport& stage) const {
        SplitMix64 rng(0x5eedf00dull);
        auto sample_time = [&]() -> Micros {
            if (rng.uniform() < 0.7) return static_cast<Micros>(rng.below(10'000'000));
            return static_cast<Micros>(rng.below(1ull << 48));
        };
        for (int i = 0; i < cfg_.monotonicity_samples; ++i) {
            TaskRuntimeState s;
            s.arrival_time = sample_time();
            s.enqueue_time = sample_time();
            s.exec_runtime = sample_time();
            s.vruntime = static_cast<double>(sample_time());
            s.expected_runtime = sample_time();
            s.weight = 1 + static_cast<int>(rng.below(10'000));
            s.wakeup_count = static_cast<std::int64_t>(rng.below(1ull << 32));

            Micros w1 = sample_time();
            Micros w2 = w1 + 1 + sample_time() / 16;

            auto at_wait = [&](Micros wt) {
                TaskRuntimeState v = s;
                v.wait_time = wt;
                v.now = v.enqueue_time + wt;
                return eval_priority(spec, v);
            };
            double p1, p2;
            try {
                p1 = at_wait(w1);
                p2 = at_wait(w2);
            } catch (const Error& e) {
                stage.add("EVAL_ERROR", "error",
                          std::string("priority evaluation failed while sampling: ") + e.what());
                return;
            }
            double tol = 1e-6 * (1.0 + std::fabs(p1));
            if (p2 < p1 - tol) {
                stage.add("STARVATION", "error",
                          "priority decreases as wait_time grows (wait " + std::to_string(w1) +
                              " -> " + std::to_string(w2) + " drops priority " + std::to_string(p1) +
                              " -> " + std::to_string(p2) + "); waiting tasks fall behind");
                return;
            }
        }
    }

    void stress_check(const PolicySpec& spec, StageReport& stage) const {
        auto stream = make_starvation_stream(cfg_.stress_horizon_us);
        SimResult r;
        try {
            r = sim_(stream, spec, 0);
        } catch (const Error& e) {
            stage.add("EVAL_ERROR", "error",
                      std::string("adversarial stress simulation failed: ") + e.what());
            return;
        }
        for (const auto& e : r.trace.entries) {
            if (e.task_id != "bg_victim") continue;
            if (e.max_wait_us >= cfg_.starvation_bound_us) {
                stage.add("STARVATION", "error",
                          "background victim waited " + std::to_string(e.max_wait_us) +
                              "us under the adversarial stream (bound " +
                              std::to_string(cfg_.starvation_bound_us) + "us)",
                          stream);
            }
            return;
        }
    }

    void unfairness_check(const PolicySpec& spec, StageReport& stage) const {
        auto uniform = make_uniform_fairness_workload();
        SimResult r;
        try {
            r = sim_(uniform, spec, 0);
        } catch (const Error& e) {
            stage.add("EVAL_ERROR", "error",
                      std::string("uniform fairness simulation failed: ") + e.what());
            return;
        }
        if (r.metrics.jain_fairness < cfg_.unfair_jain_min) {
            stage.add("UNFAIR", "error",
                      "jain fairness " + std::to_string(r.metrics.jain_fairness) +
                          " on a uniform 16-task workload (minimum " +
                          std::to_string(cfg_.unfair_jain_min) + ")",
                      uniform);
        }
    }

    std::string key_;
    VerifierConfig cfg_;
    Clock clock_;
    SimFn sim_;
};

// ---------------------------------------------------------------------------
// Canary deployments with a circuit breaker
// ---------------------------------------------------------------------------

enum class CanaryPhase { Running, Promoted, Reverted };

inline const char* canary_phase_name(CanaryPhase p) {
    switch (p) {
        case CanaryPhase::Running: return "running";
        case CanaryPhase::Promoted: return "promoted";
        case CanaryPhase::Reverted: return "reverted";
    }
    return "running";
}

struct CanaryConfig {
    int window_size = 0;  // tasks per window; 0 = whole workload instance
    double threshold_pct = 10.0;
    int trip_limit = 3;
    int n_windows = 10;

    json to_json() const {
        json j;
        j["n_windows"] = n_windows;
        j["threshold_pct"] = threshold_pct;
        j["trip_limit"] = trip_limit;
        j["window_size"] = window_size;
        return j;
    }
};

struct CanaryState {
    std::string deployment_id;
    CanaryPhase phase = CanaryPhase::Running;
    int window_size = 0;
    double threshold_pct = 10.0;
    int trip_limit = 3;
    int consecutive_trips = 0;
    int windows_run = 0;
    std::string baseline_policy_id;

    json to_json() const {
        json j;
        j["baseline_policy_id"] = baseline_policy_id;
        j["consecutive_trips"] = consecutive_trips;
        j["deployment_id"] = deployment_id;
        j["phase"] = canary_phase_name(phase);
        j["threshold_pct"] = threshold_pct;
        j["trip_limit"] = trip_limit;
        j["window_size"] = window_size;
        j["windows_run"] = windows_run;
        return j;
    }
};

// Produces one measurement window for a policy. Window index k is shared by
// the baseline/candidate pair so comparisons stay paired.
class WindowRunner {
public:
    virtual ~WindowRunner() = default;
    virtual MetricsReport run_window(const PolicySpec& policy, int window_index) = 0;
};

// Shipped runner: windows are instances of a workload source simulated under
// the given policy. The source may re-seed per window; a fixed workload
// yields fully deterministic windows.
class SimWindowRunner : public WindowRunner {
public:
    using Source = std::function<WorkloadSpec(int window_index)>;

    explicit SimWindowRunner(WorkloadSpec fixed)
        : source_([w = std::move(fixed)](int) { return w; }) {}
    explicit SimWindowRunner(Source source) : source_(std::move(source)) {}

    MetricsReport run_window(const PolicySpec& policy, int window_index) override {
        auto w = source_(window_index);
        auto r = simulate(w, policy, w.seed + static_cast<std::uint64_t>(window_index));
        return r.metrics;
    }

private:
    Source source_;
};

struct DeploymentRecord {
    std::string id;
    std::string policy_id;
    std::string baseline_id;
    OptGoal goal = OptGoal::MaxThroughput;
    std::string workload_fingerprint;
    CanaryState state;
    std::vector<MetricsReport> baseline_windows;
    std::vector<MetricsReport> candidate_windows;
    std::vector<PerformanceDelta> window_deltas;
    std::optional<PerformanceDelta> final_delta;
    bool closed = false;

    json to_json() const {
        json j;
        j["baseline_id"] = baseline_id;
        j["closed"] = closed;
        if (final_delta) j["final_delta"] = final_delta->to_json();
        j["goal"] = goal_name(goal);
        j["id"] = id;
        j["policy_id"] = policy_id;
        j["state"] = state.to_json();
        json wd = json::array();
        for (const auto& d : window_deltas) wd.push_back(d.to_json());
        j["window_deltas"] = std::move(wd);
        j["workload_fingerprint"] = workload_fingerprint;
        return j;
    }
};

// Registry of deployments and the single live policy. Every mutation of the
// live policy happens here, behind the canary path.
class DeploymentLog {
public:
    explicit DeploymentLog(std::string initial_policy_id = "")
        : active_policy_id_(std::move(initial_policy_id)) {}

    std::string active_policy_id() const {
        std::lock_guard lock(mu_);
        return active_policy_id_;
    }

    void set_active(const std::string& id) {
        std::lock_guard lock(mu_);
        active_policy_id_ = id;
    }

    std::string new_deployment_id() {
        std::lock_guard lock(mu_);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "dep-%06d", ++counter_);
        return buf;
    }

    void put(const DeploymentRecord& rec) {
        std::lock_guard lock(mu_);
        records_[rec.id] = rec;
    }

    DeploymentRecord get(const std::string& id) const {
        std::lock_guard lock(mu_);
        auto it = records_.find(id);
        if (it == records_.end()) throw Error(Errc::UnknownDeployment, "no deployment " + id);
        return it->second;
    }

    // The post-deployment feedback channel: immutable once closed.
    PerformanceDelta report_feedback(const std::string& id) const {
        auto rec = get(id);
        if (!rec.closed || rec.baseline_windows.empty() || rec.candidate_windows.empty())
            throw Error(Errc::WindowIncomplete,
                        "deployment " + id + " lacks measured baseline and candidate windows");
        return *rec.final_delta;
    }

    std::vector<DeploymentRecord> list() const {
        std::lock_guard lock(mu_);
        std::vector<DeploymentRecord> out;
        for (const auto& [_, r] : records_) out.push_back(r);
        return out;
    }

private:
    mutable std::mutex mu_;
    std::string active_policy_id_;
    std::map<std::string, DeploymentRecord> records_;
    int counter_ = 0;
};

struct CanaryOutcome {
    CanaryState state;
    DeploymentRecord record;
};

// Alternating baseline/candidate measurement windows with a consecutive-trip
// circuit breaker. Reverting reinstates the baseline policy and records a
// negative outcome; surviving n_windows promotes the candidate and records
// the achieved delta.
class CanaryController {
public:
    CanaryController(DeploymentLog& log, PolicyRepo& repo, Micros now_us)
        : log_(log), repo_(repo), now_us_(now_us) {}

    CanaryOutcome run(const PolicySpec& candidate, const std::string& candidate_id,
                      const PolicySpec& baseline, const std::string& baseline_id,
                      WindowRunner& runner, CanaryConfig cfg, OptGoal goal,
                      const std::string& workload_fingerprint) {
        DeploymentRecord rec;
        rec.id = log_.new_deployment_id();
        rec.policy_id = candidate_id;
        rec.baseline_id = baseline_id;
        rec.goal = goal;
        rec.workload_fingerprint = workload_fingerprint;
        rec.state.deployment_id = rec.id;
        rec.state.phase = CanaryPhase::Running;
        rec.state.window_size = cfg.window_size;
        rec.state.threshold_pct = cfg.threshold_pct;
        rec.state.trip_limit = cfg.trip_limit;
        rec.state.baseline_policy_id = baseline_id;

        // candidate goes live for the duration of the canary
        log_.set_active(candidate_id);

        try {
            run_windows(rec, candidate, baseline, runner, cfg, goal);
        } catch (...) {
            log_.set_active(baseline_id);  // a broken measurement path reverts
            throw;
        }
        if (rec.state.phase == CanaryPhase::Running) rec.state.phase = CanaryPhase::Promoted;

        rec.final_delta = aggregate_delta(rec);
        rec.closed = true;

        if (rec.state.phase == CanaryPhase::Reverted) {
            log_.set_active(baseline_id);  // circuit breaker: baseline reinstated
        }
        record_outcome_to_repo(rec);
        log_.put(rec);
        return {rec.state, rec};
    }

private:
    void run_windows(DeploymentRecord& rec, const PolicySpec& candidate,
                     const PolicySpec& baseline, WindowRunner& runner, const CanaryConfig& cfg,
                     OptGoal goal) {
        for (int k = 0; k < cfg.n_windows; ++k) {
            auto base_m = runner.run_window(baseline, k);
            auto cand_m = runner.run_window(candidate, k);
            rec.baseline_windows.push_back(base_m);
            rec.candidate_windows.push_back(cand_m);
            PerformanceDelta d;
            bool degenerate = false;
            try {
                d = compute_delta(cand_m, base_m);
            } catch (const Error&) {
                degenerate = true;  // empty window: treat as a trip
            }
            rec.window_deltas.push_back(d);
            ++rec.state.windows_run;

            bool degraded = degenerate || d.improvement_pct(goal) < -cfg.threshold_pct;
            if (degraded)
                ++rec.state.consecutive_trips;
            else
                rec.state.consecutive_trips = 0;

            if (rec.state.consecutive_trips >= cfg.trip_limit) {
                rec.state.phase = CanaryPhase::Reverted;
                break;
            }
        }
    }

    std::optional<PerformanceDelta> aggregate_delta(const DeploymentRecord& rec) const {
        if (rec.baseline_windows.empty()) return std::nullopt;
        auto mean = [](const std::vector<MetricsReport>& ms) {
            MetricsReport m;
            double n = static_cast<double>(ms.size());
            for (const auto& x : ms) {
                m.makespan_us += x.makespan_us;
                m.avg_completion_us += x.avg_completion_us;
                m.latency_p99_us += x.latency_p99_us;
                m.throughput_per_s += x.throughput_per_s;
            }
            m.makespan_us = static_cast<Micros>(m.makespan_us / n);
            m.avg_completion_us /= n;
            m.latency_p99_us = static_cast<Micros>(m.latency_p99_us / n);
            m.throughput_per_s /= n;
            return m;
        };
        try {
            return compute_delta(mean(rec.candidate_windows), mean(rec.baseline_windows));
        } catch (const Error&) {
            return PerformanceDelta{};
        }
    }

    void record_outcome_to_repo(const DeploymentRecord& rec) {
        if (!repo_.exists(rec.policy_id)) return;
        OutcomeRecord o;
        o.deployment_id = rec.id;
        o.goal = rec.goal;
        o.workload_fingerprint = rec.workload_fingerprint;
        if (rec.final_delta) o.delta = *rec.final_delta;
        if (rec.state.phase == CanaryPhase::Reverted) {
            // a reverted canary is recorded as a regression on its goal even
            // if the mean over completed windows looks flat
            double worst = 0.0;
            for (const auto& d : rec.window_deltas)
                worst = std::min(worst, d.improvement_pct(rec.goal));
            switch (rec.goal) {
                case OptGoal::MinMakespan: o.delta.makespan_pct = -worst; break;
                case OptGoal::MinP99: o.delta.p99_pct = -worst; break;
                case OptGoal::MinAvgCompletion: o.delta.avg_completion_pct = -worst; break;
                case OptGoal::MaxThroughput: o.delta.throughput_pct = worst; break;
            }
        }
        o.timestamp_us = now_us_;
        try {
            repo_.record_outcome(rec.policy_id, o);
        } catch (const Error&) {
            // repository refusing an outcome never blocks the safety path
        }
    }

    DeploymentLog& log_;
    PolicyRepo& repo_;
    Micros now_us_;
};

}  // namespace schedlab
