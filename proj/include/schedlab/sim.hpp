#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "schedlab/domain.hpp"
#include "schedlab/dsl.hpp"

namespace schedlab {

enum class SimEventKind { Arrival, SliceExpiry, Completion, Wakeup };

inline const char* sim_event_name(SimEventKind k) {
    switch (k) {
        case SimEventKind::Arrival: return "arrival";
        case SimEventKind::SliceExpiry: return "slice_expiry";
        case SimEventKind::Completion: return "completion";
        case SimEventKind::Wakeup: return "wakeup";
    }
    return "?";
}

struct SimEvent {
    Micros time = 0;
    std::uint64_t sequence = 0;  // breaks same-time ties deterministically
    SimEventKind kind = SimEventKind::Arrival;
    std::size_t task = 0;
    int core = -1;
    std::uint64_t dispatch_token = 0;  // stale-event guard for core events
};

struct SimResult {
    MetricsReport metrics;
    CompletionTrace trace;
    std::vector<std::string> violations;
    std::uint64_t event_count = 0;
    bool complete = true;  // false when the horizon cut the run short
    std::uint64_t seed = 0;

    json to_json() const {
        json j;
        j["complete"] = complete;
        j["event_count"] = event_count;
        j["metrics"] = metrics.to_json();
        j["seed"] = seed;
        json t = json::array();
        for (const auto& e : trace.entries) t.push_back(e.to_json());
        j["trace"] = std::move(t);
        j["violations"] = violations;
        return j;
    }
};

inline std::string trace_to_csv(const SimResult& r) {
    std::string out =
        "task_id,arrival_us,enqueue_us,first_run_us,completion_us,exec_us,max_wait_us,weight,"
        "wakeup_count\n";
    for (const auto& e : r.trace.entries) {
        out += e.task_id + ',' + std::to_string(e.arrival_us) + ',' + std::to_string(e.enqueue_us) +
               ',' + std::to_string(e.first_run_us) + ',' + std::to_string(e.completion_us) + ',' +
               std::to_string(e.exec_us) + ',' + std::to_string(e.max_wait_us) + ',' +
               std::to_string(e.weight) + ',' + std::to_string(e.wakeup_count) + '\n';
    }
    return out;
}

struct SimOptions {
    bool dry_run = false;  // caller accepts runtime evaluation errors
    std::optional<Micros> horizon_us;  // overrides the workload's horizon when set
};

namespace sim_detail {

struct TaskState {
    const TaskSpec* spec = nullptr;
    Micros remaining = 0;
    Micros enqueue_time = -1;  // first time runnable
    Micros first_run = -1;
    Micros completion = -1;
    Micros exec = 0;
    double vruntime = 0.0;
    std::int64_t wakeup_count = 0;
    int unmet_deps = 0;
    bool arrived = false;
    bool runnable = false;
    bool running = false;
    Micros wait_started = -1;  // start of the current runnable-but-idle interval
    Micros max_wait = 0;
};

struct CoreState {
    bool busy = false;
    std::size_t task = 0;
    Micros started = 0;
    std::uint64_t token = 0;  // matches the pending completion/expiry event
};

struct EventOrder {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
        if (a.time != b.time) return a.time > b.time;
        return a.sequence > b.sequence;
    }
};

}  // namespace sim_detail

// Deterministic discrete-event simulation of one workload under one policy.
// Preemptive policies re-evaluate at arrivals and slice expiries; an arrival
// preempts the lowest-priority running task only when strictly higher.
// Non-preemptive policies dispatch only when a core frees up.
class Simulator {
public:
    Simulator(const WorkloadSpec& workload, const PolicySpec& policy, std::uint64_t seed,
              SimOptions opts = {})
        : workload_(workload), policy_(policy), seed_(seed), opts_(opts) {
        workload.validate();
        if (opts_.horizon_us)
            horizon_ = *opts_.horizon_us;
        else if (workload.horizon_us)
            horizon_ = *workload.horizon_us;
    }

    SimResult run() {
        init_tasks();
        for (std::size_t i = 0; i < tasks_.size(); ++i)
            push_event(tasks_[i].spec->arrival_us, SimEventKind::Arrival, i);

        while (!events_.empty()) {
            if (horizon_ && events_.top().time > *horizon_) {
                truncated_ = true;
                break;
            }
            // drain every event sharing this timestamp, then dispatch once:
            // scheduling decisions happen at event boundaries, not per event
            Micros t = events_.top().time;
            if (t < now_)
                violation("clock went backwards: event at " + std::to_string(t) +
                          " after now=" + std::to_string(now_));
            now_ = std::max(now_, t);
            while (!events_.empty() && events_.top().time == t) {
                SimEvent ev = events_.top();
                events_.pop();
                ++processed_;
                handle(ev);
            }
            dispatch();
        }

        Micros end = horizon_ && truncated_ ? *horizon_ : now_;
        finalize(end);
        return build_result(end);
    }

private:
    using Kind = SimEventKind;

    void init_tasks() {
        tasks_.resize(workload_.tasks.size());
        for (std::size_t i = 0; i < workload_.tasks.size(); ++i) {
            const auto& spec = workload_.tasks[i];
            tasks_[i].spec = &spec;
            tasks_[i].remaining = spec.total_work_us;
            tasks_[i].unmet_deps = static_cast<int>(spec.deps.size());
            index_by_id_[spec.id] = i;
        }
        for (std::size_t i = 0; i < workload_.tasks.size(); ++i) {
            for (const auto& d : workload_.tasks[i].deps)
                dependents_[index_by_id_[d]].push_back(i);
        }
        cores_.assign(static_cast<std::size_t>(workload_.core_count), {});
    }

    void push_event(Micros t, Kind kind, std::size_t task, int core = -1, std::uint64_t token = 0) {
        SimEvent e;
        e.time = t;
        e.sequence = next_seq_++;
        e.kind = kind;
        e.task = task;
        e.core = core;
        e.dispatch_token = token;
        events_.push(e);
    }

    void handle(const SimEvent& ev) {
        auto& t = tasks_[ev.task];
        switch (ev.kind) {
            case Kind::Arrival:
                t.arrived = true;
                if (t.unmet_deps == 0) enqueue(ev.task);
                break;
            case Kind::Wakeup:
                ++t.wakeup_count;
                break;
            case Kind::Completion:
            case Kind::SliceExpiry: {
                auto& core = cores_[static_cast<std::size_t>(ev.core)];
                if (!core.busy || core.token != ev.dispatch_token) return;  // stale
                deschedule(static_cast<std::size_t>(ev.core));
                if (ev.kind == Kind::Completion) {
                    complete(ev.task);
                } else {
                    t.runnable = true;
                    t.wait_started = now_;
                    runnable_.push_back(ev.task);
                }
                break;
            }
        }
    }

    void complete(std::size_t idx) {
        auto& t = tasks_[idx];
        t.completion = now_;
        if (t.remaining != 0)
            violation("task '" + t.spec->id + "' completed with remaining work " +
                      std::to_string(t.remaining));
        ++completed_;
        for (auto dep_idx : dependents_count(idx)) {
            auto& d = tasks_[dep_idx];
            if (--d.unmet_deps == 0 && d.arrived) enqueue(dep_idx);
        }
        for (const auto& w : t.spec->wake_targets)
            push_event(now_, Kind::Wakeup, index_by_id_.at(w));
    }

    const std::vector<std::size_t>& dependents_count(std::size_t idx) {
        static const std::vector<std::size_t> empty;
        auto it = dependents_.find(idx);
        return it == dependents_.end() ? empty : it->second;
    }

    void enqueue(std::size_t idx) {
        auto& t = tasks_[idx];
        if (t.runnable || t.running || t.completion >= 0) return;
        t.runnable = true;
        t.wait_started = now_;
        if (t.enqueue_time < 0) {
            t.enqueue_time = now_;
            // sleeper fairness: a newly woken task never starts behind the pack
            double floor = min_active_vruntime();
            t.vruntime = std::max(t.vruntime, floor);
        }
        runnable_.push_back(idx);
    }

    double min_active_vruntime() const {
        double m = 0.0;
        bool any = false;
        for (auto i : runnable_) {
            double v = tasks_[i].vruntime;
            if (!any || v < m) m = v, any = true;
        }
        for (const auto& c : cores_) {
            if (!c.busy) continue;
            const auto& t = tasks_[c.task];
            double v = t.vruntime + vruntime_delta(now_ - c.started, t.spec->weight);
            if (!any || v < m) m = v, any = true;
        }
        return any ? m : 0.0;
    }

    static double vruntime_delta(Micros exec_delta, int weight) {
        return static_cast<double>(exec_delta) * 1024.0 / weight;
    }

    TaskRuntimeState state_of(std::size_t idx) const {
        const auto& t = tasks_[idx];
        TaskRuntimeState s;
        s.arrival_time = t.spec->arrival_us;
        s.enqueue_time = t.enqueue_time >= 0 ? t.enqueue_time : now_;
        s.wait_time = std::max<Micros>(0, now_ - s.enqueue_time);
        s.exec_runtime = t.exec;
        s.vruntime = t.vruntime;
        s.expected_runtime = t.spec->expected_runtime_us.value_or(0);
        s.weight = t.spec->weight;
        s.wakeup_count = t.wakeup_count;
        s.now = now_;
        if (t.running) {
            // account the in-flight quantum virtually
            for (const auto& c : cores_) {
                if (c.busy && c.task == idx) {
                    Micros delta = now_ - c.started;
                    s.exec_runtime += delta;
                    s.vruntime += vruntime_delta(delta, t.spec->weight);
                    break;
                }
            }
        }
        return s;
    }

    double priority_of(std::size_t idx) {
        try {
            return eval_priority(policy_, state_of(idx));
        } catch (const Error& e) {
            throw Error(Errc::RuntimeEvalError,
                        std::string("policy evaluation failed for task '") + tasks_[idx].spec->id +
                            "': " + e.what());
        }
    }

    // Strict total order: priority desc, enqueue_time asc, task id asc.
    bool ranks_before(std::size_t a, double pa, std::size_t b, double pb) const {
        if (pa != pb) return pa > pb;
        if (tasks_[a].enqueue_time != tasks_[b].enqueue_time)
            return tasks_[a].enqueue_time < tasks_[b].enqueue_time;
        return tasks_[a].spec->id < tasks_[b].spec->id;
    }

    void dispatch() {
        if (runnable_.empty()) return;

        // fill free cores first
        for (std::size_t c = 0; c < cores_.size() && !runnable_.empty(); ++c) {
            if (cores_[c].busy) continue;
            std::size_t best_pos = pick_best_runnable();
            start_running(runnable_[best_pos], static_cast<int>(c));
            runnable_.erase(runnable_.begin() + static_cast<std::ptrdiff_t>(best_pos));
        }

        if (!policy_.preemptive) {
            check_work_conservation();
            return;
        }

        // preemption: the best waiter evicts the worst runner while strictly higher
        while (!runnable_.empty()) {
            std::size_t best_pos = pick_best_runnable();
            std::size_t challenger = runnable_[best_pos];
            double challenger_pri = priority_of(challenger);

            // victim: the lowest-ranked runner
            int victim_core = -1;
            double victim_pri = 0.0;
            for (std::size_t c = 0; c < cores_.size(); ++c) {
                if (!cores_[c].busy) continue;
                double p = priority_of(cores_[c].task);
                if (victim_core < 0 ||
                    ranks_before(cores_[static_cast<std::size_t>(victim_core)].task, victim_pri,
                                 cores_[c].task, p)) {
                    victim_core = static_cast<int>(c);
                    victim_pri = p;
                }
            }
            if (victim_core < 0) break;
            if (!(challenger_pri > victim_pri)) break;  // strictly higher only

            std::size_t evicted = cores_[static_cast<std::size_t>(victim_core)].task;
            deschedule(static_cast<std::size_t>(victim_core));
            tasks_[evicted].runnable = true;
            tasks_[evicted].wait_started = now_;
            runnable_.push_back(evicted);

            runnable_.erase(std::find(runnable_.begin(), runnable_.end(), challenger));
            start_running(challenger, victim_core);
        }
        check_work_conservation();
    }

    std::size_t pick_best_runnable() {
        std::size_t best_pos = 0;
        double best_pri = priority_of(runnable_[0]);
        for (std::size_t i = 1; i < runnable_.size(); ++i) {
            double p = priority_of(runnable_[i]);
            if (ranks_before(runnable_[i], p, runnable_[best_pos], best_pri)) {
                best_pos = i;
                best_pri = p;
            }
        }
        return best_pos;
    }

    void start_running(std::size_t idx, int core_idx) {
        auto& t = tasks_[idx];
        auto& core = cores_[static_cast<std::size_t>(core_idx)];

        for (const auto& d : t.spec->deps) {
            if (tasks_[index_by_id_.at(d)].completion < 0)
                violation("task '" + t.spec->id + "' dispatched before dep '" + d + "' completed");
        }

        t.runnable = false;
        t.running = true;
        if (t.first_run < 0) t.first_run = now_;
        if (t.wait_started >= 0) t.max_wait = std::max(t.max_wait, now_ - t.wait_started);
        t.wait_started = -1;

        core.busy = true;
        core.task = idx;
        core.started = now_;
        core.token = ++next_token_;

        Micros run_for = t.remaining;
        Kind kind = Kind::Completion;
        if (policy_.preemptive) {
            Micros slice;
            try {
                slice = eval_slice_us(policy_, state_of(idx));
            } catch (const Error& e) {
                throw Error(Errc::RuntimeEvalError,
                            std::string("slice evaluation failed: ") + e.what());
            }
            if (slice < t.remaining) {
                run_for = slice;
                kind = Kind::SliceExpiry;
            }
        }
        push_event(now_ + run_for, kind, idx, core_idx, core.token);
    }

    void deschedule(std::size_t core_idx) {
        auto& core = cores_[core_idx];
        auto& t = tasks_[core.task];
        Micros delta = now_ - core.started;
        t.exec += delta;
        t.remaining -= delta;
        t.vruntime += vruntime_delta(delta, t.spec->weight);
        busy_us_ += delta;
        if (t.remaining < 0)
            violation("task '" + t.spec->id + "' ran past its total work");
        if (!policy_.preemptive && t.remaining > 0 && !finalizing_)
            violation("non-preemptive task '" + t.spec->id + "' descheduled mid-run");
        t.running = false;
        core.busy = false;
        core.token = 0;
    }

    void check_work_conservation() {
        if (runnable_.empty()) return;
        for (const auto& c : cores_)
            if (!c.busy) {
                violation("idle core with non-empty runnable queue at t=" + std::to_string(now_));
                return;
            }
    }

    void violation(const std::string& msg) { violations_.push_back(msg); }

    void finalize(Micros end) {
        now_ = std::max(now_, end);
        finalizing_ = true;
        for (std::size_t c = 0; c < cores_.size(); ++c) {
            if (cores_[c].busy) deschedule(c);  // account partial work at the horizon
        }
        for (auto& t : tasks_) {
            if (t.runnable && t.wait_started >= 0)
                t.max_wait = std::max(t.max_wait, end - t.wait_started);
        }
        // conservation of tasks: arrived == completed + still queued
        std::int64_t arrived = 0, queued = 0;
        for (const auto& t : tasks_) {
            if (t.arrived) ++arrived;
            if (t.arrived && t.completion < 0) ++queued;
        }
        if (arrived != completed_ + queued)
            violation("task conservation mismatch: arrived=" + std::to_string(arrived) +
                      " completed=" + std::to_string(completed_) + " queued=" + std::to_string(queued));
        if (!truncated_ && arrived != static_cast<std::int64_t>(tasks_.size()))
            violation("tasks lost before arrival");
        if (!truncated_ && completed_ != static_cast<std::int64_t>(tasks_.size()))
            violation("run drained its events with incomplete tasks");
    }

    SimResult build_result(Micros end) {
        SimResult r;
        r.seed = seed_;
        r.complete = !truncated_;
        r.event_count = processed_;
        r.violations = violations_;
        r.trace.busy_core_us = busy_us_;
        for (const auto& t : tasks_) {
            TraceEntry e;
            e.task_id = t.spec->id;
            e.arrival_us = t.spec->arrival_us;
            e.enqueue_us = t.enqueue_time;
            e.first_run_us = t.first_run;
            e.completion_us = t.completion;
            e.exec_us = t.exec;
            e.max_wait_us = t.max_wait;
            e.weight = t.spec->weight;
            e.wakeup_count = t.wakeup_count;
            r.trace.entries.push_back(std::move(e));
        }
        Micros elapsed = std::max<Micros>(end, 1);
        r.metrics = r.trace.entries.empty() ? MetricsReport{}
                                            : compute_metrics(r.trace, workload_.core_count, elapsed);
        return r;
    }

    const WorkloadSpec& workload_;
    const PolicySpec& policy_;
    std::uint64_t seed_;
    SimOptions opts_;
    std::optional<Micros> horizon_;

    std::vector<sim_detail::TaskState> tasks_;
    std::map<std::string, std::size_t> index_by_id_;
    std::map<std::size_t, std::vector<std::size_t>> dependents_;
    std::vector<sim_detail::CoreState> cores_;
    std::vector<std::size_t> runnable_;
    std::priority_queue<SimEvent, std::vector<SimEvent>, sim_detail::EventOrder> events_;

    Micros now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t next_token_ = 0;
    std::uint64_t processed_ = 0;
    std::int64_t completed_ = 0;
    Micros busy_us_ = 0;
    bool truncated_ = false;
    bool finalizing_ = false;
    std::vector<std::string> violations_;
};

inline SimResult simulate(const WorkloadSpec& workload, const PolicySpec& policy,
                          std::uint64_t seed = 0, SimOptions opts = {}) {
    Simulator sim(workload, policy, seed, opts);
    return sim.run();
}

}  // namespace schedlab
