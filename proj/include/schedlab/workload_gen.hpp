#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "schedlab/domain.hpp"

namespace schedlab {

// Deterministic RNG independent of library implementations, so generated
// specs are bit-identical everywhere.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

    // log-normal with the given median and shape; Box-Muller from own bits
    double lognormal(double median, double sigma) {
        if (sigma <= 0.0) return median;
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return median * std::exp(sigma * z);
    }

private:
    std::uint64_t state_;
};

namespace gen_detail {

inline std::string indexed_id(const char* prefix, std::size_t i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%04zu", prefix, i);
    return buf;
}

}  // namespace gen_detail

struct BuildDagOptions {
    double duration_median_us = 200'000;  // short-lived compile steps
    double duration_sigma = 0.5;
    double hint_noise_sigma = 0.0;  // 0 keeps runtime hints truthful
    int core_count = 8;
};

// Layered DAG in a compile-then-link shape: layer widths halve down to a
// single final task; every task in layer k draws fan_in deps from layer k-1.
inline WorkloadSpec gen_build_dag(int n_tasks, int fan_in, std::uint64_t seed,
                                  BuildDagOptions opts = {}) {
    if (n_tasks < 1) throw Error(Errc::InvalidWorkload, "n_tasks must be >= 1");
    if (fan_in < 0) throw Error(Errc::InvalidWorkload, "fan_in must be >= 0");
    if (opts.duration_median_us <= 0 || opts.duration_sigma < 0)
        throw Error(Errc::InvalidWorkload, "invalid duration distribution");

    SplitMix64 rng(seed ^ 0xdac17f5bull);

    std::vector<int> widths;
    int remaining = n_tasks;
    while (remaining > 0) {
        int w = std::max(1, (remaining + 1) / 2);
        widths.push_back(w);
        remaining -= w;
    }

    WorkloadSpec w;
    w.name = "build-dag-" + std::to_string(n_tasks) + "-seed" + std::to_string(seed);
    w.family = WorkloadFamily::BuildDag;
    w.core_count = opts.core_count;
    w.seed = seed;

    std::vector<std::vector<std::size_t>> layers;
    std::size_t counter = 0;
    for (std::size_t li = 0; li < widths.size(); ++li) {
        std::vector<std::size_t> layer;
        for (int k = 0; k < widths[li]; ++k) {
            TaskSpec t;
            t.id = gen_detail::indexed_id("dag_", counter);
            t.arrival_us = 0;
            auto dur = static_cast<Micros>(rng.lognormal(opts.duration_median_us, opts.duration_sigma));
            t.total_work_us = std::max<Micros>(1'000, dur);
            Micros hint = t.total_work_us;
            if (opts.hint_noise_sigma > 0)
                hint = std::max<Micros>(1, static_cast<Micros>(
                                               rng.lognormal(static_cast<double>(hint),
                                                             opts.hint_noise_sigma)));
            t.expected_runtime_us = hint;
            t.weight = 100;
            if (li > 0) {
                const auto& prev = layers[li - 1];
                int deps = std::min<int>(fan_in, static_cast<int>(prev.size()));
                std::vector<std::size_t> picks;
                while (static_cast<int>(picks.size()) < deps) {
                    auto p = prev[rng.below(prev.size())];
                    if (std::find(picks.begin(), picks.end(), p) == picks.end()) picks.push_back(p);
                }
                std::sort(picks.begin(), picks.end());
                for (auto p : picks) {
                    t.deps.push_back(w.tasks[p].id);
                    w.tasks[p].wake_targets.push_back(t.id);
                }
            }
            layer.push_back(counter);
            w.tasks.push_back(std::move(t));
            ++counter;
        }
        layers.push_back(std::move(layer));
    }
    w.validate();
    return w;
}

struct LatencyChainOptions {
    int n_wakes = 50;          // requests per worker
    double work_sigma = 0.0;   // 0: every request costs exactly work_per_wake
    double hint_noise_sigma = 0.0;
    int core_count = 4;
    // rare huge requests (one per hog_every globally, 0 = none): the convoy
    // shape that separates slicing policies from run-to-completion ones
    int hog_every = 0;
    double hog_factor = 100.0;
};

// Periodic request chains: each worker handles one request per period and
// the finished request wakes the next. Every request is one latency sample.
inline WorkloadSpec gen_latency_chain(int n_workers, Micros wake_period_us, Micros work_per_wake_us,
                                      std::uint64_t seed, LatencyChainOptions opts = {}) {
    if (n_workers < 1) throw Error(Errc::InvalidWorkload, "n_workers must be >= 1");
    if (wake_period_us <= 0 || work_per_wake_us <= 0)
        throw Error(Errc::InvalidWorkload, "period and work must be > 0");
    if (opts.n_wakes < 1) throw Error(Errc::InvalidWorkload, "n_wakes must be >= 1");

    SplitMix64 rng(seed ^ 0x5ca1ab1eull);

    WorkloadSpec w;
    w.name = "latency-chain-" + std::to_string(n_workers) + "w-seed" + std::to_string(seed);
    w.family = WorkloadFamily::LatencyChain;
    w.core_count = opts.core_count;
    w.seed = seed;

    int global_index = 0;
    for (int worker = 0; worker < n_workers; ++worker) {
        Micros phase = 97 * worker;  // small deterministic stagger
        std::string prev_id;
        for (int r = 0; r < opts.n_wakes; ++r, ++global_index) {
            TaskSpec t;
            char buf[64];
            std::snprintf(buf, sizeof(buf), "chain_%03d_req_%04d", worker, r);
            t.id = buf;
            t.arrival_us = phase + static_cast<Micros>(r) * wake_period_us;
            auto work = static_cast<Micros>(
                rng.lognormal(static_cast<double>(work_per_wake_us), opts.work_sigma));
            if (opts.hog_every > 0 && global_index % opts.hog_every == opts.hog_every / 2)
                work = static_cast<Micros>(static_cast<double>(work) * opts.hog_factor);
            t.total_work_us = std::max<Micros>(100, work);
            Micros hint = t.total_work_us;
            if (opts.hint_noise_sigma > 0)
                hint = std::max<Micros>(1, static_cast<Micros>(
                                               rng.lognormal(static_cast<double>(hint),
                                                             opts.hint_noise_sigma)));
            t.expected_runtime_us = hint;
            t.weight = 100;
            if (!prev_id.empty()) t.deps.push_back(prev_id);
            prev_id = t.id;
            w.tasks.push_back(std::move(t));
        }
        // completion of request r wakes request r+1
        for (int r = 0; r + 1 < opts.n_wakes; ++r) {
            auto base = w.tasks.size() - static_cast<std::size_t>(opts.n_wakes);
            w.tasks[base + static_cast<std::size_t>(r)].wake_targets.push_back(
                w.tasks[base + static_cast<std::size_t>(r) + 1].id);
        }
    }
    w.validate();
    return w;
}

struct LongtailOptions {
    std::uint64_t seed = 0;
    double jitter_sigma = 0.0;  // small lognormal jitter on durations
    int core_count = 8;
    int short_weight = 100;
    int long_weight = 100;
};

// The long-tail batch: n_short quick tasks plus n_long dominant ones, all
// arriving at t=0 with truthful expected-runtime hints. Task ids sort the
// long jobs last so arrival-order policies dispatch them last on ties.
inline WorkloadSpec gen_longtail_batch(int n_short, Micros short_work_us, int n_long,
                                       Micros long_work_us, LongtailOptions opts = {}) {
    if (n_short < 0 || n_long < 0 || n_short + n_long < 1)
        throw Error(Errc::InvalidWorkload, "need at least one task");
    if ((n_short > 0 && short_work_us <= 0) || (n_long > 0 && long_work_us <= 0))
        throw Error(Errc::InvalidWorkload, "work durations must be > 0");

    SplitMix64 rng(opts.seed ^ 0x10dba7c4ull);

    WorkloadSpec w;
    w.name = "batch-longtail-" + std::to_string(n_short) + "x" + std::to_string(n_long) + "-seed" +
             std::to_string(opts.seed);
    w.family = WorkloadFamily::BatchLongtail;
    w.core_count = opts.core_count;
    w.seed = opts.seed;

    auto jittered = [&](Micros base) {
        if (opts.jitter_sigma <= 0) return base;
        return std::max<Micros>(100,
                                static_cast<Micros>(rng.lognormal(static_cast<double>(base),
                                                                  opts.jitter_sigma)));
    };

    for (int i = 0; i < n_short; ++i) {
        TaskSpec t;
        t.id = gen_detail::indexed_id("task_", static_cast<std::size_t>(i));
        t.arrival_us = 0;
        t.total_work_us = jittered(short_work_us);
        t.expected_runtime_us = t.total_work_us;  // hints truthful by default
        t.weight = opts.short_weight;
        w.tasks.push_back(std::move(t));
    }
    for (int i = 0; i < n_long; ++i) {
        TaskSpec t;
        t.id = gen_detail::indexed_id("task_long_", static_cast<std::size_t>(i));
        t.arrival_us = 0;
        t.total_work_us = jittered(long_work_us);
        t.expected_runtime_us = t.total_work_us;
        t.weight = opts.long_weight;
        w.tasks.push_back(std::move(t));
    }
    w.validate();
    return w;
}

}  // namespace schedlab
