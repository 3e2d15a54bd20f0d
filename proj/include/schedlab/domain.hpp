#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "schedlab/canonical_json.hpp"

namespace schedlab {

using Micros = std::int64_t;

constexpr Micros kMicrosPerSecond = 1'000'000;

enum class Errc {
    // domain-core
    EmptyTrace,
    DegenerateBaseline,
    InvalidWorkload,
    // policy-dsl
    SyntaxError,
    UnknownIdentifier,
    DuplicateParam,
    UnknownBuiltin,
    EmptyComposition,
    InvalidEdit,
    InvalidSpec,
    DivisionByZero,
    // sim-engine
    RuntimeEvalError,
    // analysis-engine
    UnboundSession,
    BudgetTooSmall,
    UnsupportedProbe,
    UnknownDeployment,
    WindowIncomplete,
    // policy-repo
    EmptyQuery,
    UnknownPolicy,
    DuplicateDeployment,
    PromotionBlocked,
    IllegalTransition,
    CorruptRecord,
    // verifier
    VerdictNotPass,
    InvalidToken,
    TokenExpired,
    TokenSuiteMismatch,
    // control-plane-server
    UnknownTool,
    SchemaViolation,
    BudgetExhausted,
    UnknownSession,
    // agent-loop
    ExhaustedRefinements,
    PlanInvalidated,
    // cli / misc
    ConfigError,
    IoError,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::EmptyTrace: return "EmptyTrace";
        case Errc::DegenerateBaseline: return "DegenerateBaseline";
        case Errc::InvalidWorkload: return "InvalidWorkload";
        case Errc::SyntaxError: return "SyntaxError";
        case Errc::UnknownIdentifier: return "UnknownIdentifier";
        case Errc::DuplicateParam: return "DuplicateParam";
        case Errc::UnknownBuiltin: return "UnknownBuiltin";
        case Errc::EmptyComposition: return "EmptyComposition";
        case Errc::InvalidEdit: return "InvalidEdit";
        case Errc::InvalidSpec: return "InvalidSpec";
        case Errc::DivisionByZero: return "DivisionByZero";
        case Errc::RuntimeEvalError: return "RuntimeEvalError";
        case Errc::UnboundSession: return "UnboundSession";
        case Errc::BudgetTooSmall: return "BudgetTooSmall";
        case Errc::UnsupportedProbe: return "UnsupportedProbe";
        case Errc::UnknownDeployment: return "UnknownDeployment";
        case Errc::WindowIncomplete: return "WindowIncomplete";
        case Errc::EmptyQuery: return "EmptyQuery";
        case Errc::UnknownPolicy: return "UnknownPolicy";
        case Errc::DuplicateDeployment: return "DuplicateDeployment";
        case Errc::PromotionBlocked: return "PromotionBlocked";
        case Errc::IllegalTransition: return "IllegalTransition";
        case Errc::CorruptRecord: return "CorruptRecord";
        case Errc::VerdictNotPass: return "VerdictNotPass";
        case Errc::InvalidToken: return "InvalidToken";
        case Errc::TokenExpired: return "TokenExpired";
        case Errc::TokenSuiteMismatch: return "TokenSuiteMismatch";
        case Errc::UnknownTool: return "UnknownTool";
        case Errc::SchemaViolation: return "SchemaViolation";
        case Errc::BudgetExhausted: return "BudgetExhausted";
        case Errc::UnknownSession: return "UnknownSession";
        case Errc::ExhaustedRefinements: return "ExhaustedRefinements";
        case Errc::PlanInvalidated: return "PlanInvalidated";
        case Errc::ConfigError: return "ConfigError";
        case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

inline std::optional<Errc> errc_from_name(const std::string& name) {
    static const Errc all[] = {
        Errc::EmptyTrace,      Errc::DegenerateBaseline, Errc::InvalidWorkload,
        Errc::SyntaxError,     Errc::UnknownIdentifier,  Errc::DuplicateParam,
        Errc::UnknownBuiltin,  Errc::EmptyComposition,   Errc::InvalidEdit,
        Errc::InvalidSpec,     Errc::DivisionByZero,     Errc::RuntimeEvalError,
        Errc::UnboundSession,  Errc::BudgetTooSmall,     Errc::UnsupportedProbe,
        Errc::UnknownDeployment, Errc::WindowIncomplete, Errc::EmptyQuery,
        Errc::UnknownPolicy,   Errc::DuplicateDeployment, Errc::PromotionBlocked,
        Errc::IllegalTransition, Errc::CorruptRecord,    Errc::VerdictNotPass,
        Errc::InvalidToken,    Errc::TokenExpired,       Errc::TokenSuiteMismatch,
        Errc::UnknownTool,     Errc::SchemaViolation,    Errc::BudgetExhausted,
        Errc::UnknownSession,  Errc::ExhaustedRefinements, Errc::PlanInvalidated,
        Errc::ConfigError,     Errc::IoError,
    };
    for (auto c : all)
        if (name == errc_name(c)) return c;
    return std::nullopt;
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg)
        : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

enum class WorkloadFamily { BuildDag, LatencyChain, BatchLongtail, Custom };

inline const char* family_name(WorkloadFamily f) {
    switch (f) {
        case WorkloadFamily::BuildDag: return "build-dag";
        case WorkloadFamily::LatencyChain: return "latency-chain";
        case WorkloadFamily::BatchLongtail: return "batch-longtail";
        case WorkloadFamily::Custom: return "custom";
    }
    return "custom";
}

inline WorkloadFamily family_from_name(const std::string& s) {
    if (s == "build-dag") return WorkloadFamily::BuildDag;
    if (s == "latency-chain") return WorkloadFamily::LatencyChain;
    if (s == "batch-longtail") return WorkloadFamily::BatchLongtail;
    if (s == "custom") return WorkloadFamily::Custom;
    throw Error(Errc::InvalidWorkload, "unknown workload family '" + s + "'");
}

enum class OptGoal { MinMakespan, MinP99, MinAvgCompletion, MaxThroughput };

inline const char* goal_name(OptGoal g) {
    switch (g) {
        case OptGoal::MinMakespan: return "min_makespan";
        case OptGoal::MinP99: return "min_p99";
        case OptGoal::MinAvgCompletion: return "min_avg_completion";
        case OptGoal::MaxThroughput: return "max_throughput";
    }
    return "max_throughput";
}

inline OptGoal goal_from_name(const std::string& s) {
    if (s == "min_makespan") return OptGoal::MinMakespan;
    if (s == "min_p99") return OptGoal::MinP99;
    if (s == "min_avg_completion") return OptGoal::MinAvgCompletion;
    if (s == "max_throughput") return OptGoal::MaxThroughput;
    throw Error(Errc::ConfigError, "unknown optimization goal '" + s + "'");
}

constexpr int kWeightMin = 1;
constexpr int kWeightMax = 10'000;

struct TaskSpec {
    std::string id;
    Micros arrival_us = 0;
    Micros total_work_us = 0;
    std::optional<Micros> expected_runtime_us;  // hint channel; may be absent
    int weight = 100;
    std::vector<std::string> deps;          // must all complete before this task runs
    std::vector<std::string> wake_targets;  // notified on this task's completion

    json to_json() const {
        json j;
        j["arrival_us"] = arrival_us;
        j["deps"] = deps;
        if (expected_runtime_us) j["expected_runtime_us"] = *expected_runtime_us;
        j["id"] = id;
        j["total_work_us"] = total_work_us;
        j["wake_targets"] = wake_targets;
        j["weight"] = weight;
        return j;
    }

    static TaskSpec from_json(const json& j) {
        TaskSpec t;
        t.id = j.at("id").get<std::string>();
        t.arrival_us = j.at("arrival_us").get<Micros>();
        t.total_work_us = j.at("total_work_us").get<Micros>();
        if (j.contains("expected_runtime_us") && !j["expected_runtime_us"].is_null())
            t.expected_runtime_us = j["expected_runtime_us"].get<Micros>();
        t.weight = j.value("weight", 100);
        if (j.contains("deps")) t.deps = j["deps"].get<std::vector<std::string>>();
        if (j.contains("wake_targets"))
            t.wake_targets = j["wake_targets"].get<std::vector<std::string>>();
        return t;
    }
};

struct WorkloadSpec {
    std::string name;
    WorkloadFamily family = WorkloadFamily::Custom;
    std::vector<TaskSpec> tasks;
    int core_count = 1;
    std::uint64_t seed = 0;
    std::optional<Micros> horizon_us;

    // Throws InvalidWorkload on duplicate ids, bad ranges, self-deps,
    // unknown dep targets, or dependency cycles.
    void validate() const {
        if (core_count < 1) throw Error(Errc::InvalidWorkload, "core_count must be >= 1");
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            const auto& t = tasks[i];
            if (t.id.empty()) throw Error(Errc::InvalidWorkload, "empty task id");
            if (!index.emplace(t.id, i).second)
                throw Error(Errc::InvalidWorkload, "duplicate task id '" + t.id + "'");
            if (t.total_work_us <= 0)
                throw Error(Errc::InvalidWorkload, "task '" + t.id + "' total_work must be > 0");
            if (t.arrival_us < 0)
                throw Error(Errc::InvalidWorkload, "task '" + t.id + "' arrival must be >= 0");
            if (t.weight < kWeightMin || t.weight > kWeightMax)
                throw Error(Errc::InvalidWorkload, "task '" + t.id + "' weight out of [1,10000]");
        }
        // Kahn's algorithm over the dependency graph.
        std::vector<int> unmet(tasks.size(), 0);
        std::vector<std::vector<std::size_t>> dependents(tasks.size());
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            for (const auto& d : tasks[i].deps) {
                if (d == tasks[i].id)
                    throw Error(Errc::InvalidWorkload, "task '" + d + "' depends on itself");
                auto it = index.find(d);
                if (it == index.end())
                    throw Error(Errc::InvalidWorkload,
                                "task '" + tasks[i].id + "' depends on unknown '" + d + "'");
                unmet[i]++;
                dependents[it->second].push_back(i);
            }
            for (const auto& w : tasks[i].wake_targets) {
                if (index.find(w) == index.end())
                    throw Error(Errc::InvalidWorkload,
                                "task '" + tasks[i].id + "' wakes unknown '" + w + "'");
            }
        }
        std::vector<std::size_t> ready;
        for (std::size_t i = 0; i < tasks.size(); ++i)
            if (unmet[i] == 0) ready.push_back(i);
        std::size_t seen = 0;
        while (!ready.empty()) {
            auto i = ready.back();
            ready.pop_back();
            ++seen;
            for (auto d : dependents[i])
                if (--unmet[d] == 0) ready.push_back(d);
        }
        if (seen != tasks.size())
            throw Error(Errc::InvalidWorkload, "dependency graph has a cycle");
    }

    json to_json() const {
        json j;
        j["core_count"] = core_count;
        j["family"] = family_name(family);
        if (horizon_us) j["horizon_us"] = *horizon_us;
        j["name"] = name;
        j["seed"] = seed;
        json arr = json::array();
        for (const auto& t : tasks) arr.push_back(t.to_json());
        j["tasks"] = std::move(arr);
        return j;
    }

    static WorkloadSpec from_json(const json& j) {
        WorkloadSpec w;
        w.name = j.value("name", "");
        w.family = family_from_name(j.value("family", "custom"));
        w.core_count = j.at("core_count").get<int>();
        w.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("horizon_us") && !j["horizon_us"].is_null())
            w.horizon_us = j["horizon_us"].get<Micros>();
        for (const auto& tj : j.at("tasks")) w.tasks.push_back(TaskSpec::from_json(tj));
        return w;
    }

    std::string canonical_text() const { return canonical_dump(to_json()); }
};

// Feature vector a policy expression sees for one runnable task.
// All fields are microseconds except weight and wakeup_count.
struct TaskRuntimeState {
    Micros arrival_time = 0;
    Micros enqueue_time = 0;  // first time the task became runnable
    Micros wait_time = 0;     // now - enqueue_time
    Micros exec_runtime = 0;  // CPU time attained so far
    double vruntime = 0.0;    // advances exec_delta * 1024 / weight
    Micros expected_runtime = 0;
    int weight = 100;
    std::int64_t wakeup_count = 0;
    Micros now = 0;
};

// Per-task observable outcome of one simulation run.
struct TraceEntry {
    std::string task_id;
    Micros arrival_us = 0;
    Micros enqueue_us = -1;     // -1: never became runnable
    Micros first_run_us = -1;   // -1: never dispatched
    Micros completion_us = -1;  // -1: incomplete at horizon
    Micros exec_us = 0;
    Micros max_wait_us = 0;  // longest contiguous runnable-but-not-running interval
    int weight = 100;
    std::int64_t wakeup_count = 0;

    bool completed() const { return completion_us >= 0; }

    json to_json() const {
        json j;
        j["arrival_us"] = arrival_us;
        j["completion_us"] = completion_us;
        j["enqueue_us"] = enqueue_us;
        j["exec_us"] = exec_us;
        j["first_run_us"] = first_run_us;
        j["max_wait_us"] = max_wait_us;
        j["task_id"] = task_id;
        j["wakeup_count"] = wakeup_count;
        j["weight"] = weight;
        return j;
    }
};

struct CompletionTrace {
    std::vector<TraceEntry> entries;
    Micros busy_core_us = 0;  // total core-busy time, for utilization
};

struct MetricsReport {
    Micros makespan_us = 0;          // completion time of the last finished task
    double avg_completion_us = 0.0;  // mean wakeup-to-completion latency
    Micros latency_p50_us = 0;
    Micros latency_p95_us = 0;
    Micros latency_p99_us = 0;
    double throughput_per_s = 0.0;
    std::map<int, Micros> max_wait_by_weight;
    double jain_fairness = 1.0;
    double cpu_utilization = 0.0;
    std::int64_t completed_tasks = 0;
    Micros elapsed_us = 0;

    json to_json() const {
        json j;
        j["avg_completion_us"] = avg_completion_us;
        j["completed_tasks"] = completed_tasks;
        j["cpu_utilization"] = cpu_utilization;
        j["elapsed_us"] = elapsed_us;
        j["jain_fairness"] = jain_fairness;
        j["latency_p50_us"] = latency_p50_us;
        j["latency_p95_us"] = latency_p95_us;
        j["latency_p99_us"] = latency_p99_us;
        j["makespan_us"] = makespan_us;
        json mw = json::object();
        for (const auto& [w, v] : max_wait_by_weight) mw[std::to_string(w)] = v;
        j["max_wait_by_weight"] = std::move(mw);
        j["throughput_per_s"] = throughput_per_s;
        return j;
    }

    static MetricsReport from_json(const json& j) {
        MetricsReport m;
        m.avg_completion_us = j.at("avg_completion_us").get<double>();
        m.completed_tasks = j.value("completed_tasks", std::int64_t{0});
        m.cpu_utilization = j.at("cpu_utilization").get<double>();
        m.elapsed_us = j.value("elapsed_us", Micros{0});
        m.jain_fairness = j.at("jain_fairness").get<double>();
        m.latency_p50_us = j.at("latency_p50_us").get<Micros>();
        m.latency_p95_us = j.at("latency_p95_us").get<Micros>();
        m.latency_p99_us = j.at("latency_p99_us").get<Micros>();
        m.makespan_us = j.at("makespan_us").get<Micros>();
        if (j.contains("max_wait_by_weight"))
            for (auto it = j["max_wait_by_weight"].begin(); it != j["max_wait_by_weight"].end(); ++it)
                m.max_wait_by_weight[std::stoi(it.key())] = it.value().get<Micros>();
        m.throughput_per_s = j.at("throughput_per_s").get<double>();
        return m;
    }

    std::string canonical_text() const { return canonical_dump(to_json()); }

    Micros goal_metric_us(OptGoal g) const {
        switch (g) {
            case OptGoal::MinMakespan: return makespan_us;
            case OptGoal::MinP99: return latency_p99_us;
            case OptGoal::MinAvgCompletion: return static_cast<Micros>(avg_completion_us);
            case OptGoal::MaxThroughput: return static_cast<Micros>(throughput_per_s * 1e6);
        }
        return 0;
    }
};

// Signed percentage changes of candidate vs baseline. Positive throughput
// change is an improvement; for the time metrics negative is better.
struct PerformanceDelta {
    double throughput_pct = 0.0;
    double p99_pct = 0.0;
    double makespan_pct = 0.0;
    double avg_completion_pct = 0.0;

    json to_json() const {
        json j;
        j["avg_completion_pct"] = avg_completion_pct;
        j["makespan_pct"] = makespan_pct;
        j["p99_pct"] = p99_pct;
        j["throughput_pct"] = throughput_pct;
        return j;
    }

    static PerformanceDelta from_json(const json& j) {
        PerformanceDelta d;
        d.avg_completion_pct = j.at("avg_completion_pct").get<double>();
        d.makespan_pct = j.at("makespan_pct").get<double>();
        d.p99_pct = j.at("p99_pct").get<double>();
        d.throughput_pct = j.at("throughput_pct").get<double>();
        return d;
    }

    // Positive result means the candidate improved the given goal.
    double improvement_pct(OptGoal g) const {
        switch (g) {
            case OptGoal::MinMakespan: return -makespan_pct;
            case OptGoal::MinP99: return -p99_pct;
            case OptGoal::MinAvgCompletion: return -avg_completion_pct;
            case OptGoal::MaxThroughput: return throughput_pct;
        }
        return 0.0;
    }
};

// Nearest-rank percentile over a sorted ascending sample.
inline Micros percentile_nearest_rank(const std::vector<Micros>& sorted, double pct) {
    if (sorted.empty()) return 0;
    auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * n));
    if (rank < 1) rank = 1;
    if (rank > sorted.size()) rank = sorted.size();
    return sorted[rank - 1];
}

inline double jain_index(const std::vector<double>& xs) {
    double sum = 0.0, sum_sq = 0.0;
    for (double x : xs) {
        sum += x;
        sum_sq += x * x;
    }
    if (xs.empty() || sum_sq == 0.0) return 1.0;
    return (sum * sum) / (static_cast<double>(xs.size()) * sum_sq);
}

inline MetricsReport compute_metrics(const CompletionTrace& trace, int core_count, Micros elapsed_us) {
    if (trace.entries.empty()) throw Error(Errc::EmptyTrace, "no tasks in completion trace");
    if (elapsed_us <= 0) elapsed_us = 1;

    MetricsReport m;
    m.elapsed_us = elapsed_us;

    std::vector<Micros> latencies;
    latencies.reserve(trace.entries.size());
    std::vector<double> shares;
    shares.reserve(trace.entries.size());
    double completion_sum = 0.0;

    for (const auto& e : trace.entries) {
        if (e.completed()) {
            if (e.enqueue_us < 0 || e.completion_us < e.enqueue_us)
                throw Error(Errc::EmptyTrace, "trace entry '" + e.task_id + "' has completion before wakeup");
            latencies.push_back(e.completion_us - e.enqueue_us);
            completion_sum += static_cast<double>(e.completion_us - e.enqueue_us);
            m.makespan_us = std::max(m.makespan_us, e.completion_us);
            ++m.completed_tasks;
        }
        shares.push_back(static_cast<double>(e.exec_us) * 1024.0 / e.weight);
        auto it = m.max_wait_by_weight.find(e.weight);
        if (it == m.max_wait_by_weight.end())
            m.max_wait_by_weight[e.weight] = e.max_wait_us;
        else
            it->second = std::max(it->second, e.max_wait_us);
    }

    std::sort(latencies.begin(), latencies.end());
    m.latency_p50_us = percentile_nearest_rank(latencies, 50.0);
    m.latency_p95_us = percentile_nearest_rank(latencies, 95.0);
    m.latency_p99_us = percentile_nearest_rank(latencies, 99.0);
    m.avg_completion_us = m.completed_tasks > 0 ? completion_sum / m.completed_tasks : 0.0;
    m.throughput_per_s =
        static_cast<double>(m.completed_tasks) * kMicrosPerSecond / static_cast<double>(elapsed_us);
    m.jain_fairness = jain_index(shares);
    double util = static_cast<double>(trace.busy_core_us) /
                  (static_cast<double>(core_count) * static_cast<double>(elapsed_us));
    m.cpu_utilization = std::clamp(util, 0.0, 1.0);
    return m;
}

inline PerformanceDelta compute_delta(const MetricsReport& candidate, const MetricsReport& baseline) {
    if (baseline.throughput_per_s <= 0.0 || baseline.latency_p99_us <= 0 ||
        baseline.makespan_us <= 0 || baseline.avg_completion_us <= 0.0)
        throw Error(Errc::DegenerateBaseline, "baseline metric fields must be > 0");
    PerformanceDelta d;
    d.throughput_pct =
        100.0 * (candidate.throughput_per_s - baseline.throughput_per_s) / baseline.throughput_per_s;
    d.p99_pct = 100.0 * static_cast<double>(candidate.latency_p99_us - baseline.latency_p99_us) /
                static_cast<double>(baseline.latency_p99_us);
    d.makespan_pct = 100.0 * static_cast<double>(candidate.makespan_us - baseline.makespan_us) /
                     static_cast<double>(baseline.makespan_us);
    d.avg_completion_pct =
        100.0 * (candidate.avg_completion_us - baseline.avg_completion_us) / baseline.avg_completion_us;
    return d;
}

}  // namespace schedlab
