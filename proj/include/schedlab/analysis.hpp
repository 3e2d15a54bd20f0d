#pragma once

#include <array>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "schedlab/verifier.hpp"
#include "schedlab/workload_gen.hpp"

namespace schedlab {

// ---------------------------------------------------------------------------
// Probe sources. The engine only sees this interface; the simulator-backed
// source ships, a live-system adapter is an extension point.
// ---------------------------------------------------------------------------

class ProbeSource {
public:
    virtual ~ProbeSource() = default;
    virtual const WorkloadSpec& workload() const = 0;
    virtual std::set<std::string> supported_probes() const = 0;
};

class SimProbeSource : public ProbeSource {
public:
    explicit SimProbeSource(WorkloadSpec w) : workload_(std::move(w)) {}

    const WorkloadSpec& workload() const override { return workload_; }

    std::set<std::string> supported_probes() const override {
        return {"durations", "dag", "wake_chains", "hints"};
    }

private:
    WorkloadSpec workload_;
};

// ---------------------------------------------------------------------------
// Tier 1: cheap summary under a byte budget
// ---------------------------------------------------------------------------

constexpr int kSummaryMinBudget = 128;

struct WorkloadSummary {
    WorkloadFamily family_guess = WorkloadFamily::Custom;
    std::int64_t task_count = 0;
    int parallelism_estimate = 0;
    std::array<std::int64_t, 8> duration_hist{};  // log10 buckets of total work
    double load_avg = 0.0;
    // log-rounded scale features; stable under small duration noise
    int work_p50_log10 = 0;
    int work_max_log10 = 0;
    std::string rendered;  // <= requested budget bytes

    json to_json() const {
        json j;
        j["duration_hist"] = std::vector<std::int64_t>(duration_hist.begin(), duration_hist.end());
        j["family_guess"] = family_name(family_guess);
        j["load_avg"] = load_avg;
        j["parallelism_estimate"] = parallelism_estimate;
        j["rendered"] = rendered;
        j["task_count"] = task_count;
        return j;
    }

    static WorkloadSummary from_json(const json& j) {
        WorkloadSummary s;
        auto h = j.at("duration_hist").get<std::vector<std::int64_t>>();
        for (std::size_t i = 0; i < s.duration_hist.size() && i < h.size(); ++i)
            s.duration_hist[i] = h[i];
        s.family_guess = family_from_name(j.at("family_guess").get<std::string>());
        s.load_avg = j.at("load_avg").get<double>();
        s.parallelism_estimate = j.at("parallelism_estimate").get<int>();
        s.rendered = j.value("rendered", "");
        s.task_count = j.at("task_count").get<std::int64_t>();
        return s;
    }
};

// ---------------------------------------------------------------------------
// Tier 2: detailed report, one section per requested probe
// ---------------------------------------------------------------------------

struct ProfileReport {
    // durations
    bool has_durations = false;
    Micros work_min_us = 0, work_max_us = 0, work_p50_us = 0, work_p95_us = 0;
    double work_mean_us = 0;
    std::vector<std::pair<std::string, Micros>> top_longest;  // id, expected hint (or work)
    // dag
    bool has_dag = false;
    int dag_depth = 0;
    int dag_width = 0;
    int dag_roots = 0;
    std::int64_t dag_edges = 0;
    // wake chains
    bool has_wake_chains = false;
    int chain_count = 0;
    double chain_mean_length = 0;
    Micros chain_period_estimate_us = 0;
    // hints
    bool has_hints = false;
    double hint_coverage = 0.0;  // fraction of tasks with an expected-runtime hint

    json to_json() const {
        json j = json::object();
        if (has_durations) {
            json d;
            d["mean_us"] = work_mean_us;
            d["min_us"] = work_min_us;
            d["max_us"] = work_max_us;
            d["p50_us"] = work_p50_us;
            d["p95_us"] = work_p95_us;
            json top = json::array();
            for (const auto& [id, hint] : top_longest)
                top.push_back(json{{"expected_us", hint}, {"id", id}});
            d["top_longest"] = std::move(top);
            j["durations"] = std::move(d);
        }
        if (has_dag)
            j["dag"] = json{{"depth", dag_depth},
                            {"edges", dag_edges},
                            {"roots", dag_roots},
                            {"width", dag_width}};
        if (has_wake_chains)
            j["wake_chains"] = json{{"count", chain_count},
                                    {"mean_length", chain_mean_length},
                                    {"period_estimate_us", chain_period_estimate_us}};
        if (has_hints) j["hints"] = json{{"coverage", hint_coverage}};
        return j;
    }
};

struct WorkloadProfile {
    std::string description;
    OptGoal optimization_goal = OptGoal::MaxThroughput;
    double confidence = 0.0;
    std::string fingerprint;
    WorkloadFamily family = WorkloadFamily::Custom;

    json to_json() const {
        json j;
        j["confidence"] = confidence;
        j["description"] = description;
        j["family"] = family_name(family);
        j["fingerprint"] = fingerprint;
        j["optimization_goal"] = goal_name(optimization_goal);
        return j;
    }

    static WorkloadProfile from_json(const json& j) {
        WorkloadProfile p;
        p.confidence = j.at("confidence").get<double>();
        p.description = j.at("description").get<std::string>();
        p.family = family_from_name(j.at("family").get<std::string>());
        p.fingerprint = j.at("fingerprint").get<std::string>();
        p.optimization_goal = goal_from_name(j.at("optimization_goal").get<std::string>());
        return p;
    }
};

struct AnalysisSession {
    std::string id;
    std::shared_ptr<ProbeSource> source;
    std::int64_t cost = 0;  // monotone cost counter
    std::optional<WorkloadSummary> last_summary;
    std::optional<ProfileReport> last_report;
};

// Optional override for rule-based classification; an external decision
// provider can plug in here.
using ClassifierOverride = std::function<std::optional<WorkloadProfile>(
    const WorkloadSummary&, const std::optional<ProfileReport>&)>;

class AnalysisEngine {
public:
    static constexpr std::int64_t kSummaryCost = 1;
    static constexpr std::int64_t kProbeCost = 5;

    explicit AnalysisEngine(DeploymentLog* deployments = nullptr) : deployments_(deployments) {}

    void set_classifier_override(ClassifierOverride fn) { override_ = std::move(fn); }

    // Tier 1. Renders at most budget_bytes; lower-salience lines drop first
    // (family > counts > histogram > parallelism > load).
    WorkloadSummary summarize(AnalysisSession& session, int budget_bytes) const {
        if (!session.source) throw Error(Errc::UnboundSession, "session has no workload source");
        if (budget_bytes < kSummaryMinBudget)
            throw Error(Errc::BudgetTooSmall, "summary budget must be >= " +
                                                  std::to_string(kSummaryMinBudget) + " bytes");
        const auto& w = session.source->workload();
        WorkloadSummary s = build_summary(w);

        std::vector<std::string> lines;
        lines.push_back("family: " + std::string(family_name(s.family_guess)));
        lines.push_back("tasks: " + std::to_string(s.task_count));
        std::string hist = "hist_work_log10us: [";
        for (std::size_t i = 0; i < s.duration_hist.size(); ++i) {
            if (i) hist += ",";
            hist += std::to_string(s.duration_hist[i]);
        }
        hist += "]";
        lines.push_back(hist);
        lines.push_back("parallelism: " + std::to_string(s.parallelism_estimate));
        char load_buf[48];
        std::snprintf(load_buf, sizeof(load_buf), "load: %.2f", s.load_avg);
        lines.push_back(load_buf);

        std::string rendered;
        for (const auto& line : lines) {
            if (rendered.size() + line.size() + 1 > static_cast<std::size_t>(budget_bytes)) break;
            rendered += line;
            rendered += '\n';
        }
        s.rendered = rendered;
        session.cost += kSummaryCost;
        session.last_summary = s;
        return s;
    }

    // Tier 2. The report carries exactly the requested probe sections and
    // costs kProbeCost per probe.
    ProfileReport profile_deep(AnalysisSession& session, const std::set<std::string>& probes) const {
        if (!session.source) throw Error(Errc::UnboundSession, "session has no workload source");
        auto supported = session.source->supported_probes();
        for (const auto& p : probes) {
            if (!supported.count(p))
                throw Error(Errc::UnsupportedProbe, "probe '" + p + "' not supported by this source");
        }
        const auto& w = session.source->workload();
        ProfileReport r;
        if (probes.count("durations")) fill_durations(w, r);
        if (probes.count("dag")) fill_dag(w, r);
        if (probes.count("wake_chains")) fill_wake_chains(w, r);
        if (probes.count("hints")) fill_hints(w, r);
        session.cost += kProbeCost * static_cast<std::int64_t>(probes.size());
        session.last_report = r;
        return r;
    }

    // Deterministic rule-based classification; the override may replace it.
    WorkloadProfile classify(const WorkloadSummary& summary,
                             const std::optional<ProfileReport>& report = std::nullopt) const {
        if (override_) {
            if (auto p = override_(summary, report)) return *p;
        }
        WorkloadProfile p;
        p.family = summary.family_guess;
        switch (summary.family_guess) {
            case WorkloadFamily::BuildDag: p.optimization_goal = OptGoal::MinMakespan; break;
            case WorkloadFamily::LatencyChain: p.optimization_goal = OptGoal::MinP99; break;
            case WorkloadFamily::BatchLongtail: p.optimization_goal = OptGoal::MinAvgCompletion; break;
            case WorkloadFamily::Custom: p.optimization_goal = OptGoal::MaxThroughput; break;
        }
        if (summary.family_guess == WorkloadFamily::Custom)
            p.confidence = report ? 0.5 : 0.4;
        else
            p.confidence = report ? 0.9 : 0.7;
        p.fingerprint = fingerprint_of(summary);
        p.description = describe(summary, report);
        return p;
    }

    // Feedback channel over closed deployments.
    PerformanceDelta report_feedback(const std::string& deployment_id) const {
        if (!deployments_) throw Error(Errc::UnknownDeployment, "no deployment registry bound");
        return deployments_->report_feedback(deployment_id);
    }

    // Fingerprint from spec-level features only. Log-rounded work scales keep
    // it stable under duration noise; a changed task count changes it.
    static std::string fingerprint_of(const WorkloadSummary& s) {
        json j;
        j["family"] = family_name(s.family_guess);
        j["parallelism"] = s.parallelism_estimate;
        j["tasks"] = s.task_count;
        j["work_max_log10"] = s.work_max_log10;
        j["work_p50_log10"] = s.work_p50_log10;
        return sha256_hex(canonical_dump(j));
    }

    static WorkloadSummary build_summary(const WorkloadSpec& w) {
        WorkloadSummary s;
        s.task_count = static_cast<std::int64_t>(w.tasks.size());

        Micros min_arrival = 0, max_arrival = 0, max_work = 0;
        double total_work = 0;
        bool first = true;
        for (const auto& t : w.tasks) {
            if (first) {
                min_arrival = max_arrival = t.arrival_us;
                first = false;
            }
            min_arrival = std::min(min_arrival, t.arrival_us);
            max_arrival = std::max(max_arrival, t.arrival_us);
            max_work = std::max(max_work, t.total_work_us);
            total_work += static_cast<double>(t.total_work_us);
            s.duration_hist[hist_bucket(t.total_work_us)]++;
            if (t.deps.empty()) s.parallelism_estimate++;
        }
        Micros span = std::max<Micros>(1, max_arrival - min_arrival + max_work);
        s.load_avg = w.tasks.empty()
                         ? 0.0
                         : total_work / (static_cast<double>(w.core_count) *
                                         static_cast<double>(span));
        if (!w.tasks.empty()) {
            std::vector<Micros> works;
            works.reserve(w.tasks.size());
            for (const auto& t : w.tasks) works.push_back(t.total_work_us);
            std::sort(works.begin(), works.end());
            auto log_round = [](Micros v) {
                return static_cast<int>(
                    std::lround(std::log10(static_cast<double>(std::max<Micros>(1, v)))));
            };
            s.work_p50_log10 = log_round(percentile_nearest_rank(works, 50));
            s.work_max_log10 = log_round(works.back());
        }
        s.family_guess = guess_family(w, s);
        return s;
    }

    static int hist_bucket(Micros work_us) {
        double v = static_cast<double>(std::max<Micros>(1, work_us));
        int b = static_cast<int>(std::floor(std::log10(v))) - 1;  // bucket 0: < 100us
        return std::clamp(b, 0, 7);
    }

private:
    // Family heuristics from spec-level structure only:
    //   linear dependency chains               -> latency-chain
    //   branching dependency graph             -> build-dag
    //   no deps, same arrival, bimodal runtime -> batch-longtail
    static WorkloadFamily guess_family(const WorkloadSpec& w, const WorkloadSummary& s) {
        if (w.tasks.empty()) return WorkloadFamily::Custom;
        bool any_deps = false;
        bool linear = true;
        std::map<std::string, int> out_degree;
        for (const auto& t : w.tasks) {
            if (t.deps.size() > 1) linear = false;
            if (!t.deps.empty()) {
                any_deps = true;
                for (const auto& d : t.deps)
                    if (++out_degree[d] > 1) linear = false;
            }
        }
        if (any_deps) return linear ? WorkloadFamily::LatencyChain : WorkloadFamily::BuildDag;

        bool same_arrival = true;
        for (const auto& t : w.tasks)
            if (t.arrival_us != w.tasks[0].arrival_us) same_arrival = false;
        if (same_arrival && w.tasks.size() >= 2) {
            // long-tail: a small minority of tasks dwarfs the median size
            std::vector<Micros> works;
            works.reserve(w.tasks.size());
            for (const auto& t : w.tasks) works.push_back(t.total_work_us);
            std::sort(works.begin(), works.end());
            Micros p50 = percentile_nearest_rank(works, 50);
            Micros top = works.back();
            if (p50 > 0 && top >= 8 * p50) {
                double cut = std::sqrt(static_cast<double>(p50) * static_cast<double>(top));
                std::int64_t heavy = 0;
                for (auto v : works)
                    if (static_cast<double>(v) > cut) ++heavy;
                if (heavy > 0 && heavy * 4 <= s.task_count - heavy)
                    return WorkloadFamily::BatchLongtail;
            }
        }
        return WorkloadFamily::Custom;
    }

    static void fill_durations(const WorkloadSpec& w, ProfileReport& r) {
        r.has_durations = true;
        if (w.tasks.empty()) return;
        std::vector<Micros> works;
        works.reserve(w.tasks.size());
        double sum = 0;
        for (const auto& t : w.tasks) {
            works.push_back(t.total_work_us);
            sum += static_cast<double>(t.total_work_us);
        }
        std::sort(works.begin(), works.end());
        r.work_min_us = works.front();
        r.work_max_us = works.back();
        r.work_p50_us = percentile_nearest_rank(works, 50);
        r.work_p95_us = percentile_nearest_rank(works, 95);
        r.work_mean_us = sum / static_cast<double>(works.size());

        std::vector<const TaskSpec*> by_work;
        for (const auto& t : w.tasks) by_work.push_back(&t);
        std::sort(by_work.begin(), by_work.end(), [](const TaskSpec* a, const TaskSpec* b) {
            if (a->total_work_us != b->total_work_us) return a->total_work_us > b->total_work_us;
            return a->id < b->id;
        });
        for (std::size_t i = 0; i < by_work.size() && i < 5; ++i)
            r.top_longest.emplace_back(by_work[i]->id,
                                       by_work[i]->expected_runtime_us.value_or(
                                           by_work[i]->total_work_us));
    }

    static void fill_dag(const WorkloadSpec& w, ProfileReport& r) {
        r.has_dag = true;
        std::map<std::string, int> level;
        std::map<std::string, const TaskSpec*> by_id;
        for (const auto& t : w.tasks) by_id[t.id] = &t;
        // tasks are validated acyclic; iterate to a fixpoint over levels
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto& t : w.tasks) {
                int lvl = 1;
                for (const auto& d : t.deps) lvl = std::max(lvl, level[d] + 1);
                if (level[t.id] != lvl) {
                    level[t.id] = lvl;
                    changed = true;
                }
            }
        }
        std::map<int, int> width_at;
        for (const auto& t : w.tasks) {
            r.dag_depth = std::max(r.dag_depth, level[t.id]);
            width_at[level[t.id]]++;
            r.dag_edges += static_cast<std::int64_t>(t.deps.size());
            if (t.deps.empty()) r.dag_roots++;
        }
        for (const auto& [_, c] : width_at) r.dag_width = std::max(r.dag_width, c);
    }

    static void fill_wake_chains(const WorkloadSpec& w, ProfileReport& r) {
        r.has_wake_chains = true;
        std::set<std::string> woken;
        for (const auto& t : w.tasks)
            for (const auto& target : t.wake_targets) woken.insert(target);

        std::map<std::string, const TaskSpec*> by_id;
        for (const auto& t : w.tasks) by_id[t.id] = &t;

        std::vector<Micros> gaps;
        int chains = 0;
        double total_len = 0;
        for (const auto& t : w.tasks) {
            if (t.wake_targets.empty() || woken.count(t.id)) continue;
            ++chains;  // a chain head: wakes others, woken by nobody
            int len = 1;
            const TaskSpec* cur = &t;
            std::set<std::string> seen;
            while (!cur->wake_targets.empty() && seen.insert(cur->id).second) {
                auto it = by_id.find(cur->wake_targets.front());
                if (it == by_id.end()) break;
                gaps.push_back(std::max<Micros>(0, it->second->arrival_us - cur->arrival_us));
                cur = it->second;
                ++len;
            }
            total_len += len;
        }
        r.chain_count = chains;
        r.chain_mean_length = chains ? total_len / chains : 0.0;
        if (!gaps.empty()) {
            std::sort(gaps.begin(), gaps.end());
            r.chain_period_estimate_us = gaps[gaps.size() / 2];
        }
    }

    static void fill_hints(const WorkloadSpec& w, ProfileReport& r) {
        r.has_hints = true;
        if (w.tasks.empty()) return;
        std::int64_t with = 0;
        for (const auto& t : w.tasks)
            if (t.expected_runtime_us) ++with;
        r.hint_coverage = static_cast<double>(with) / static_cast<double>(w.tasks.size());
    }

    static std::string describe(const WorkloadSummary& s, const std::optional<ProfileReport>& r) {
        std::string d = "family=" + std::string(family_name(s.family_guess)) +
                        " tasks=" + std::to_string(s.task_count) +
                        " parallelism=" + std::to_string(s.parallelism_estimate);
        char buf[48];
        std::snprintf(buf, sizeof(buf), " load=%.2f", s.load_avg);
        d += buf;
        if (r && r->has_durations && !r->top_longest.empty()) {
            d += " longest=" + r->top_longest[0].first + "(" +
                 std::to_string(r->top_longest[0].second) + "us)";
        }
        if (r && r->has_dag) d += " dag_depth=" + std::to_string(r->dag_depth);
        switch (s.family_guess) {
            case WorkloadFamily::BuildDag: d += " shape=parallel-build short-lived dependent steps"; break;
            case WorkloadFamily::LatencyChain: d += " shape=periodic request chains"; break;
            case WorkloadFamily::BatchLongtail: d += " shape=batch with dominant long job"; break;
            case WorkloadFamily::Custom: d += " shape=unclassified"; break;
        }
        return d;
    }

    DeploymentLog* deployments_;
    ClassifierOverride override_;
};

}  // namespace schedlab
