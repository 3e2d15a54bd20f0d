#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "schedlab/server.hpp"

namespace schedlab {

// ---------------------------------------------------------------------------
// Tool transport. The loop drives the control plane exclusively through its
// JSON-RPC tools; the in-process transport still round-trips full envelopes
// so schemas, budgets and logs apply.
// ---------------------------------------------------------------------------

class ToolTransport {
public:
    virtual ~ToolTransport() = default;
    virtual json call(const std::string& tool, const json& args) = 0;
};

class InProcessTransport : public ToolTransport {
public:
    explicit InProcessTransport(ControlPlaneServer& server) : server_(server) {}

    json call(const std::string& tool, const json& args) override {
        json req;
        req["jsonrpc"] = "2.0";
        req["id"] = ++next_id_;
        req["method"] = "tools/call";
        req["params"] = json{{"name", tool}, {"arguments", args}};
        auto resp = server_.handle_request(req);
        if (resp.contains("error")) {
            const auto& e = resp["error"];
            std::string kind = e.contains("data") ? e["data"].value("kind", "") : "";
            auto code = errc_from_name(kind);
            throw Error(code.value_or(Errc::IoError), e.value("message", "tool call failed"));
        }
        return resp["result"];
    }

private:
    ControlPlaneServer& server_;
    int next_id_ = 0;
};

// ---------------------------------------------------------------------------
// Plans and iteration records
// ---------------------------------------------------------------------------

struct Plan {
    enum class Variant { ConfigureExisting, Patch, ComposeNew };

    Variant variant = Variant::ComposeNew;
    std::string policy_id;    // Configure / Patch target
    std::string policy_name;
    std::vector<PolicyEdit> edits;             // Patch
    std::vector<std::string> fragment_names;   // ComposeNew
    std::vector<double> fragment_weights;
    bool compose_preemptive = false;
    OptGoal goal = OptGoal::MaxThroughput;
    std::string rationale;

    static const char* variant_name(Variant v) {
        switch (v) {
            case Variant::ConfigureExisting: return "configure_existing";
            case Variant::Patch: return "patch";
            case Variant::ComposeNew: return "compose_new";
        }
        return "compose_new";
    }

    json to_json() const {
        json j;
        j["goal"] = goal_name(goal);
        j["policy_id"] = policy_id;
        j["policy_name"] = policy_name;
        j["rationale"] = rationale;
        j["variant"] = variant_name(variant);
        if (!fragment_names.empty()) {
            j["fragments"] = fragment_names;
            j["weights"] = fragment_weights;
        }
        j["edits"] = static_cast<int>(edits.size());
        return j;
    }
};

struct ExecutionResult {
    bool deployed = false;
    std::string status;  // "promoted", "reverted", "exhausted_refinements", "plan_invalidated"
    std::string deployment_id;
    std::string policy_id;
    int refinements_used = 0;
    PerformanceDelta delta;  // final canary delta vs baseline
    std::vector<std::string> findings_trail;
    json token;

    json to_json() const {
        json j;
        j["delta"] = delta.to_json();
        j["deployed"] = deployed;
        j["deployment_id"] = deployment_id;
        j["findings_trail"] = findings_trail;
        j["policy_id"] = policy_id;
        j["refinements_used"] = refinements_used;
        j["status"] = status;
        return j;
    }
};

struct IterationRecord {
    int index = 0;
    WorkloadProfile profile;
    Plan plan;
    ExecutionResult execution;
    double goal_improvement_pct = 0.0;  // vs the loop baseline; 0 when nothing deployed
    std::vector<std::string> learn_actions;

    json to_json() const {
        json j;
        j["execution"] = execution.to_json();
        j["goal_improvement_pct"] = goal_improvement_pct;
        j["index"] = index;
        j["learn_actions"] = learn_actions;
        j["plan"] = plan.to_json();
        j["profile"] = profile.to_json();
        return j;
    }
};

// Knowledge carried between iterations by the learning stage.
struct LoopHints {
    std::set<std::string> excluded_policy_ids;
    bool prefer_variant_change = false;
    std::optional<Plan::Variant> last_variant;
    std::string note;
};

// Materialized candidate from the repository, handed to the provider.
struct CandidateInfo {
    std::string id;
    std::string name;
    std::string source;
    double score = 0.0;
    double normalized = 0.0;
};

// ---------------------------------------------------------------------------
// Decision provider: the choice points of the loop. The shipped heuristic
// provider is deterministic; a model-backed provider would sit out of
// process behind the same tool protocol.
// ---------------------------------------------------------------------------

class DecisionProvider {
public:
    virtual ~DecisionProvider() = default;
    virtual std::string search_query(const WorkloadProfile& profile) const = 0;
    virtual Plan plan(const WorkloadProfile& profile, const std::vector<CandidateInfo>& candidates,
                      const LoopHints& hints) const = 0;
    // next candidate source after findings; nullopt = give up this attempt
    virtual std::optional<PolicySpec> refine(const PolicySpec& spec, OptGoal goal,
                                             const std::vector<std::string>& finding_codes,
                                             int attempt) const = 0;
};

class HeuristicProvider : public DecisionProvider {
public:
    static constexpr double kThetaHigh = 0.75;
    static constexpr double kThetaLow = 0.30;

    std::string search_query(const WorkloadProfile& profile) const override {
        switch (profile.family) {
            case WorkloadFamily::BatchLongtail:
                return "batch longtail long job first average completion";
            case WorkloadFamily::BuildDag:
                return "parallel build dag dependencies makespan short tasks";
            case WorkloadFamily::LatencyChain:
                return "interactive latency chain requests fair sharing";
            case WorkloadFamily::Custom: return "general purpose fair throughput";
        }
        return "general purpose fair throughput";
    }

    Plan plan(const WorkloadProfile& profile, const std::vector<CandidateInfo>& candidates,
              const LoopHints& hints) const override {
        Plan p;
        p.goal = profile.optimization_goal;

        const CandidateInfo* top = candidates.empty() ? nullptr : &candidates.front();
        if (!top) {
            compose_for_goal(p);
            p.rationale = "no usable repository candidates; composing from primitives";
            return p;
        }

        bool variant_shift = hints.prefer_variant_change && hints.last_variant.has_value();
        if (variant_shift && *hints.last_variant == Plan::Variant::ConfigureExisting &&
            top->normalized >= kThetaLow) {
            make_patch(p, *top);
            p.rationale = "previous configuration underperformed; patching " + top->name;
            return p;
        }
        if (variant_shift && *hints.last_variant == Plan::Variant::Patch) {
            compose_for_goal(p);
            p.rationale = "previous patch underperformed; composing from primitives";
            return p;
        }

        if (top->normalized >= kThetaHigh) {
            p.variant = Plan::Variant::ConfigureExisting;
            p.policy_id = top->id;
            p.policy_name = top->name;
            p.rationale = "high-confidence repository match (normalized " +
                          std::to_string(top->normalized) + ")";
            return p;
        }
        if (top->normalized >= kThetaLow) {
            make_patch(p, *top);
            p.rationale = "partial repository match (normalized " +
                          std::to_string(top->normalized) + "); patching " + top->name;
            return p;
        }
        compose_for_goal(p);
        p.rationale = "repository matches below threshold; composing from primitives";
        return p;
    }

    std::optional<PolicySpec> refine(const PolicySpec& spec, OptGoal goal,
                                     const std::vector<std::string>& finding_codes,
                                     int attempt) const override {
        bool starvation = false, unfair = false, perf = false;
        for (const auto& c : finding_codes) {
            if (c == "STARVATION") starvation = true;
            if (c == "UNFAIR") unfair = true;
            if (c == "PERF_REGRESSION") perf = true;
        }
        // aging coefficient doubles on every retry
        double aging = 0.01 * static_cast<double>(1 << attempt);
        if (starvation) return with_aging_term(spec, aging);
        if (unfair) {
            PolicyEdit edit;
            edit.target = PolicyEdit::Target::Priority;
            edit.expr_source = "(" + render_expr(spec.priority_expr) + ") - " +
                               std::to_string(0.001 * (1 << attempt)) + " * vruntime";
            return apply_patch(spec, {edit});
        }
        if (perf) {
            // fall back toward the fair baseline, then give up
            if (attempt == 0) {
                Plan p;
                p.goal = goal;
                compose_for_goal(p);
                return compose_from_names(p.fragment_names, p.fragment_weights,
                                          p.compose_preemptive);
            }
            if (attempt == 1) return builtin("fair_vruntime");
            return std::nullopt;
        }
        return std::nullopt;
    }

    static PolicySpec compose_from_names(const std::vector<std::string>& names,
                                         const std::vector<double>& weights, bool preemptive) {
        std::vector<Fragment> frags;
        for (const auto& n : names) {
            for (const auto& f : fragment_library())
                if (f.name == n) frags.push_back(f);
        }
        return compose(frags, weights, preemptive);
    }

private:
    static void compose_for_goal(Plan& p) {
        p.variant = Plan::Variant::ComposeNew;
        switch (p.goal) {
            case OptGoal::MinAvgCompletion:
                p.fragment_names = {"long_first", "aging"};
                p.fragment_weights = {1.0, 0.01};
                p.compose_preemptive = false;
                break;
            case OptGoal::MinMakespan:
                p.fragment_names = {"long_first", "aging"};
                p.fragment_weights = {1.0, 0.01};
                p.compose_preemptive = false;
                break;
            case OptGoal::MinP99:
                p.fragment_names = {"fair_order", "aging"};
                p.fragment_weights = {1.0, 0.001};
                p.compose_preemptive = true;
                break;
            case OptGoal::MaxThroughput:
                p.fragment_names = {"short_first", "aging"};
                p.fragment_weights = {1.0, 0.01};
                p.compose_preemptive = false;
                break;
        }
    }

    static void make_patch(Plan& p, const CandidateInfo& top) {
        p.variant = Plan::Variant::Patch;
        p.policy_id = top.id;
        p.policy_name = top.name;
        auto base = parse_policy(top.source);
        bool has_aging = false;
        base.priority_expr.visit([&](const Expr& e) {
            if (e.kind == Expr::Kind::Feat && e.feat == Feature::WaitTime) has_aging = true;
        });
        if (!has_aging) {
            PolicyEdit edit;
            edit.target = PolicyEdit::Target::Priority;
            edit.expr_source = "(" + render_expr(base.priority_expr) + ") + 0.01 * wait_time";
            p.edits.push_back(edit);
        } else if (base.params.count("slice_base")) {
            PolicyEdit edit;
            edit.target = PolicyEdit::Target::Param;
            edit.param_name = "slice_base";
            edit.param_value = std::max(100.0, base.params.at("slice_base").value / 2.0);
            p.edits.push_back(edit);
        }
    }
};

// ---------------------------------------------------------------------------
// The observe -> plan -> execute -> learn loop
// ---------------------------------------------------------------------------

struct AgentConfig {
    int summary_budget = 1024;
    double confidence_threshold = 0.8;  // below: spend one tier-2 call
    int max_refinements = 3;
    double min_improvement_pct = 2.0;  // stop when gains flatten below this
    int search_k = 5;
    CanaryConfig canary;
};

class AgentLoop {
public:
    AgentLoop(ToolTransport& transport, AgentConfig config = {},
              std::shared_ptr<DecisionProvider> provider = nullptr)
        : transport_(transport),
          cfg_(config),
          provider_(provider ? std::move(provider) : std::make_shared<HeuristicProvider>()),
          baseline_id_(builtin("fair_vruntime").content_id()) {}

    const LoopHints& hints() const { return hints_; }

    std::string open_session(const WorkloadSpec& workload) {
        auto r = transport_.call("session.open", json{{"workload", workload.to_json()}});
        return r.at("session_id").get<std::string>();
    }

    // Observation stage: cheap summary first; one tier-2 probe call only if
    // classification confidence is below the threshold.
    WorkloadProfile observe(const std::string& session_id) {
        transport_.call("summarize", json{{"session_id", session_id},
                                          {"budget_bytes", cfg_.summary_budget}});
        auto profile = WorkloadProfile::from_json(
            transport_.call("classify", json{{"session_id", session_id}}));
        if (profile.confidence < cfg_.confidence_threshold) {
            transport_.call("profile_deep",
                            json{{"session_id", session_id},
                                 {"probes", json::array({"durations", "dag"})}});
            profile = WorkloadProfile::from_json(
                transport_.call("classify", json{{"session_id", session_id}}));
        }
        return profile;
    }

    // Planning stage: repository search, then the provider's decision
    // hierarchy (configure / patch / compose).
    Plan plan(const WorkloadProfile& profile, const std::string& session_id) {
        auto query = provider_->search_query(profile);
        auto results = transport_.call(
            "repo.search", json{{"session_id", session_id}, {"query", query}, {"k", cfg_.search_k}});

        std::vector<CandidateInfo> candidates;
        for (const auto& hit : results.at("results")) {
            if (hit.value("status", "") == "retired") continue;
            CandidateInfo c;
            c.id = hit.at("id").get<std::string>();
            if (hints_.excluded_policy_ids.count(c.id)) continue;
            c.name = hit.value("name", "");
            c.score = hit.value("score", 0.0);
            c.normalized = hit.value("normalized", 0.0);
            if (candidates.size() < 3) {
                auto rec = transport_.call(
                    "repo.show", json{{"session_id", session_id}, {"policy_id", c.id}});
                c.source = rec.at("record").at("source").get<std::string>();
            }
            candidates.push_back(std::move(c));
        }
        return provider_->plan(profile, candidates, hints_);
    }

    // Execution stage: materialize, verify (with automatic refinements),
    // obtain the token, deploy under canary supervision.
    ExecutionResult execute(const Plan& plan, const WorkloadProfile& profile,
                            const std::string& session_id) {
        ExecutionResult result;
        PolicySpec spec;
        try {
            spec = materialize(plan, session_id);
        } catch (const Error& e) {
            if (e.code() == Errc::PlanInvalidated) {
                result.status = "plan_invalidated";
                result.findings_trail.push_back(e.what());
                return result;
            }
            throw;
        }

        for (int attempt = 0; attempt <= cfg_.max_refinements; ++attempt) {
            json verify = transport_.call("verify.pipeline",
                                          json{{"session_id", session_id},
                                               {"source", render_policy(spec)},
                                               {"profile", profile.to_json()}});
            result.policy_id = verify.at("policy_id").get<std::string>();
            if (verify.at("passed").get<bool>()) {
                result.token = verify.at("token");
                result.refinements_used = attempt;
                deploy(result, profile, session_id);
                return result;
            }

            std::vector<std::string> codes;
            for (const auto& stage : verify.at("report").at("stages"))
                for (const auto& f : stage.at("findings")) {
                    codes.push_back(f.at("code").get<std::string>());
                    result.findings_trail.push_back(stage.at("name").get<std::string>() + ":" +
                                                    f.at("code").get<std::string>());
                }
            if (attempt == cfg_.max_refinements) break;
            auto refined = provider_->refine(spec, plan.goal, codes, attempt);
            if (!refined) break;
            spec = *refined;
        }
        result.status = "exhausted_refinements";
        return result;
    }

    // Learning stage: promote or document, then steer the next iteration.
    std::vector<std::string> learn(IterationRecord& iter, const std::string& session_id) {
        if (!iter.execution.deployment_id.empty() &&
            !learned_deployments_.insert(iter.execution.deployment_id).second)
            throw Error(Errc::DuplicateDeployment,
                        "deployment " + iter.execution.deployment_id + " was already learned");

        std::vector<std::string> actions;
        hints_.last_variant = iter.plan.variant;
        hints_.prefer_variant_change = false;

        if (iter.execution.status == "promoted") {
            double gain = iter.execution.delta.improvement_pct(iter.plan.goal);
            iter.goal_improvement_pct = gain;
            if (gain > 0) {
                try {
                    transport_.call("repo.promote", json{{"session_id", session_id},
                                                         {"policy_id", iter.execution.policy_id}});
                    actions.push_back("promoted " + iter.execution.policy_id.substr(0, 12));
                } catch (const Error&) {
                    actions.push_back("promotion deferred (outcome rules)");
                }
            }
            if (gain < cfg_.min_improvement_pct) {
                hints_.excluded_policy_ids.insert(iter.execution.policy_id);
                hints_.prefer_variant_change = true;
                hints_.note = "insufficient gain; exploring a different plan variant";
                actions.push_back("hint: explore alternative variant");
            }
        } else if (iter.execution.status == "reverted") {
            iter.goal_improvement_pct = 0.0;  // baseline reinstated
            transport_.call(
                "repo.note_antipattern",
                json{{"session_id", session_id},
                     {"policy_id", iter.execution.policy_id},
                     {"note", "canary reverted on " + std::string(goal_name(iter.plan.goal)) +
                                  " for fingerprint " + iter.profile.fingerprint.substr(0, 12)}});
            hints_.excluded_policy_ids.insert(iter.execution.policy_id);
            hints_.prefer_variant_change = true;
            hints_.note = "canary reverted; avoid this policy for this workload";
            actions.push_back("antipattern noted; policy excluded");
        } else {
            iter.goal_improvement_pct = 0.0;
            if (!iter.execution.policy_id.empty())
                hints_.excluded_policy_ids.insert(iter.execution.policy_id);
            if (!iter.plan.policy_id.empty())
                hints_.excluded_policy_ids.insert(iter.plan.policy_id);
            hints_.prefer_variant_change = true;
            hints_.note = "verification failed; trying a different approach";
            actions.push_back("verification failed; excluded and switching variant");
        }
        return actions;
    }

    // The full ICRL loop. Stops at max_iters or when per-iteration gains
    // flatten; re-deploys the best seen policy if a later iteration left a
    // weaker one live.
    std::vector<IterationRecord> run_loop(const WorkloadSpec& workload, int max_iters) {
        std::vector<IterationRecord> records;
        if (max_iters <= 0) return records;
        auto session_id = open_session(workload);

        for (int i = 1; i <= max_iters; ++i) {
            IterationRecord iter;
            iter.index = i;
            iter.profile = observe(session_id);
            iter.plan = plan(iter.profile, session_id);
            iter.execution = execute(iter.plan, iter.profile, session_id);
            iter.learn_actions = learn(iter, session_id);
            records.push_back(iter);

            if (i >= 2) {
                double gain_now = records[records.size() - 1].goal_improvement_pct;
                double gain_prev = records[records.size() - 2].goal_improvement_pct;
                if (gain_now - gain_prev < cfg_.min_improvement_pct) break;
            }
        }

        redeploy_best(records, session_id);
        return records;
    }

private:
    PolicySpec materialize(const Plan& plan, const std::string& session_id) {
        switch (plan.variant) {
            case Plan::Variant::ComposeNew:
                return HeuristicProvider::compose_from_names(plan.fragment_names,
                                                             plan.fragment_weights,
                                                             plan.compose_preemptive);
            case Plan::Variant::ConfigureExisting:
            case Plan::Variant::Patch: {
                auto rec = transport_.call(
                    "repo.show", json{{"session_id", session_id}, {"policy_id", plan.policy_id}});
                if (rec.at("record").value("status", "") == "retired")
                    throw Error(Errc::PlanInvalidated,
                                "plan references retired policy " + plan.policy_id);
                auto spec = parse_policy(rec.at("record").at("source").get<std::string>());
                if (plan.edits.empty()) return spec;
                return apply_patch(spec, plan.edits);
            }
        }
        throw Error(Errc::PlanInvalidated, "unreachable plan variant");
    }

    void deploy(ExecutionResult& result, const WorkloadProfile& profile,
                const std::string& session_id) {
        auto out = transport_.call("deploy.canary",
                                   json{{"session_id", session_id},
                                        {"token", result.token},
                                        {"baseline_id", baseline_id_},
                                        {"goal", goal_name(profile.optimization_goal)}});
        result.deployed = true;
        result.status = out.at("phase").get<std::string>();
        result.deployment_id = out.at("deployment_id").get<std::string>();
        if (out.contains("final_delta"))
            result.delta = PerformanceDelta::from_json(out["final_delta"]);
    }

    void redeploy_best(std::vector<IterationRecord>& records, const std::string& session_id) {
        const IterationRecord* best = nullptr;
        for (const auto& r : records) {
            if (r.execution.status != "promoted") continue;
            if (!best || r.goal_improvement_pct > best->goal_improvement_pct) best = &r;
        }
        if (!best || records.empty()) return;
        const auto& last = records.back();
        bool best_is_live = last.execution.status == "promoted" &&
                            last.execution.policy_id == best->execution.policy_id;
        if (best_is_live || best->execution.token.is_null()) return;
        try {
            transport_.call("deploy.canary", json{{"session_id", session_id},
                                                  {"token", best->execution.token},
                                                  {"baseline_id", baseline_id_},
                                                  {"goal", goal_name(best->plan.goal)}});
        } catch (const Error&) {
            // keep whatever is live; the canary guarantee still holds
        }
    }

    ToolTransport& transport_;
    AgentConfig cfg_;
    std::shared_ptr<DecisionProvider> provider_;
    std::string baseline_id_;
    LoopHints hints_;
    std::set<std::string> learned_deployments_;
};

}  // namespace schedlab
