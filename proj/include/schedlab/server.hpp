#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "schedlab/analysis.hpp"
#include "schedlab/repo.hpp"
#include "schedlab/verifier.hpp"

namespace schedlab {

// ---------------------------------------------------------------------------
// Minimal JSON-schema checking: type/properties/required/items/enum/minimum/
// additionalProperties. Enough to validate every tool's traffic.
// ---------------------------------------------------------------------------

inline std::optional<std::string> schema_validate(const json& schema, const json& value,
                                                  const std::string& path = "$") {
    if (schema.contains("enum")) {
        for (const auto& v : schema["enum"])
            if (v == value) return std::nullopt;
        return path + ": value not in enum";
    }
    if (schema.contains("type")) {
        const auto& t = schema["type"].get_ref<const std::string&>();
        bool ok = (t == "object" && value.is_object()) || (t == "array" && value.is_array()) ||
                  (t == "string" && value.is_string()) ||
                  (t == "integer" && (value.is_number_integer() || value.is_number_unsigned())) ||
                  (t == "number" && value.is_number()) || (t == "boolean" && value.is_boolean()) ||
                  (t == "null" && value.is_null());
        if (!ok) return path + ": expected " + t;
    }
    if (schema.contains("minimum") && value.is_number()) {
        if (value.get<double>() < schema["minimum"].get<double>())
            return path + ": below minimum " + schema["minimum"].dump();
    }
    if (value.is_object()) {
        if (schema.contains("required")) {
            for (const auto& r : schema["required"])
                if (!value.contains(r.get<std::string>()))
                    return path + ": missing required field '" + r.get<std::string>() + "'";
        }
        const json* props = schema.contains("properties") ? &schema["properties"] : nullptr;
        bool additional = schema.value("additionalProperties", true);
        for (auto it = value.begin(); it != value.end(); ++it) {
            if (props && props->contains(it.key())) {
                if (auto err = schema_validate((*props)[it.key()], it.value(), path + "." + it.key()))
                    return err;
            } else if (!additional) {
                return path + ": unexpected field '" + it.key() + "'";
            }
        }
    }
    if (value.is_array() && schema.contains("items")) {
        std::size_t i = 0;
        for (const auto& el : value) {
            if (auto err = schema_validate(schema["items"], el, path + "[" + std::to_string(i) + "]"))
                return err;
            ++i;
        }
    }
    return std::nullopt;
}

namespace schema {

inline json str() { return json{{"type", "string"}}; }
inline json boolean() { return json{{"type", "boolean"}}; }
inline json integer(std::optional<std::int64_t> minimum = std::nullopt) {
    json j{{"type", "integer"}};
    if (minimum) j["minimum"] = *minimum;
    return j;
}
inline json number() { return json{{"type", "number"}}; }
inline json array_of(json items) { return json{{"items", std::move(items)}, {"type", "array"}}; }
inline json object(json properties, std::vector<std::string> required = {},
                   bool additional = true) {
    json j{{"type", "object"}};
    j["properties"] = std::move(properties);
    if (!required.empty()) j["required"] = required;
    if (!additional) j["additionalProperties"] = false;
    return j;
}
inline json any_object() { return json{{"type", "object"}}; }

}  // namespace schema

struct ToolDescriptor {
    std::string name;
    std::string description;
    json input_schema;
    json output_schema;
    json example_args;
    std::int64_t cost_class = 1;

    json to_json() const {
        json j;
        j["costClass"] = cost_class;
        j["description"] = description;
        j["exampleArguments"] = example_args;
        j["inputSchema"] = input_schema;
        j["name"] = name;
        j["outputSchema"] = output_schema;
        return j;
    }
};

struct ServerConfig {
    std::string repo_path;  // empty: in-memory repository
    std::string signing_key;
    std::string signing_key_env = "SCHEDLAB_SIGNING_KEY";
    std::int64_t session_cost_cap = 10'000;
    std::string log_path;  // empty: in-memory log only
    std::uint64_t suite_seed = 7;
    int summary_default_budget = 1024;

    static ServerConfig from_json(const json& j) {
        ServerConfig c;
        c.repo_path = j.value("repo_path", "");
        c.signing_key = j.value("signing_key", "");
        c.signing_key_env = j.value("signing_key_env", "SCHEDLAB_SIGNING_KEY");
        c.session_cost_cap = j.value("session_cost_cap", std::int64_t{10'000});
        c.log_path = j.value("log_path", "");
        c.suite_seed = j.value("suite_seed", std::uint64_t{7});
        c.summary_default_budget = j.value("summary_default_budget", 1024);
        return c;
    }
};

struct LogEntry {
    std::int64_t seq = 0;
    std::string session_id;
    std::string tool;
    std::int64_t cost_delta = 0;
    bool ok = true;
    std::string error_kind;

    json to_json() const {
        json j;
        j["cost_delta"] = cost_delta;
        if (!error_kind.empty()) j["error_kind"] = error_kind;
        j["ok"] = ok;
        j["seq"] = seq;
        j["session_id"] = session_id;
        j["tool"] = tool;
        return j;
    }
};

// The MCP-style control-plane server. JSON-RPC 2.0 methods: initialize,
// tools/list, tools/call. All tool traffic is schema-checked both ways and
// deployment happens only through a verified token.
class ControlPlaneServer {
public:
    explicit ControlPlaneServer(ServerConfig config = {}, Clock clock = system_clock_us)
        : cfg_(std::move(config)),
          repo_(cfg_.repo_path.empty() ? PolicyRepo{} : PolicyRepo{cfg_.repo_path}),
          verifier_(resolve_key(cfg_), VerifierConfig{}, clock),
          deployments_(""),
          engine_(&deployments_) {
        if (repo_.size() == 0) repo_.seed_builtins();
        deployments_.set_active(builtin("fair_vruntime").content_id());
        suite_ = make_validation_suite(cfg_.suite_seed);
        suite_hash_ = suite_hash(suite_);
        if (!cfg_.log_path.empty())
            log_file_.emplace(cfg_.log_path, std::ios::app);
        register_tools();
    }

    // ------------------------------------------------------------------
    // JSON-RPC entry points
    // ------------------------------------------------------------------

    std::string handle_request_text(const std::string& line) {
        json req = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (req.is_discarded())
            return error_response(nullptr, -32700, "parse error", "ParseError").dump();
        return handle_request(req).dump();
    }

    json handle_request(const json& req) {
        json id = req.contains("id") ? req["id"] : json{};
        if (!req.is_object() || req.value("jsonrpc", "") != "2.0" || !req.contains("method") ||
            !req["method"].is_string())
            return error_response(id, -32600, "invalid request", "InvalidRequest");
        const auto& method = req["method"].get_ref<const std::string&>();
        const json params = req.value("params", json::object());

        if (method == "initialize") {
            json result;
            result["capabilities"] = json{{"tools", json{{"listChanged", false}}}};
            result["protocolVersion"] = "2024-11-05";
            result["serverInfo"] = json{{"name", "schedlab"}, {"version", "0.1.0"}};
            return ok_response(id, result);
        }
        if (method == "tools/list") {
            json tools = json::array();
            for (const auto& t : tools_) tools.push_back(t.to_json());
            return ok_response(id, json{{"tools", std::move(tools)}});
        }
        if (method == "tools/call") {
            if (!params.is_object() || !params.contains("name") || !params["name"].is_string())
                return error_response(id, -32602, "tools/call needs a tool name", "SchemaViolation");
            json args = params.value("arguments", json::object());
            try {
                json result = call_tool(params["name"].get<std::string>(), args);
                return ok_response(id, std::move(result));
            } catch (const Error& e) {
                return error_response(id, 1000, e.what(), errc_name(e.code()));
            } catch (const std::exception& e) {
                return error_response(id, 1001, e.what(), "Internal");
            }
        }
        return error_response(id, -32601, "unknown method '" + method + "'", "UnknownMethod");
    }

    // Dispatch one tool call: schema-check args, enforce the session budget,
    // execute, schema-check the result, and log the call.
    json call_tool(const std::string& name, const json& args) {
        const ToolDescriptor* tool = nullptr;
        std::size_t tool_idx = 0;
        for (std::size_t i = 0; i < tools_.size(); ++i) {
            if (tools_[i].name == name) {
                tool = &tools_[i];
                tool_idx = i;
            }
        }
        std::string session_id = args.is_object() ? args.value("session_id", "") : "";
        if (!tool) {
            log_call(session_id, name, 0, false, "UnknownTool");
            throw Error(Errc::UnknownTool, "no tool named '" + name + "'");
        }
        if (auto err = schema_validate(tool->input_schema, args)) {
            log_call(session_id, name, 0, false, "SchemaViolation");
            throw Error(Errc::SchemaViolation, *err);
        }

        // any tool may carry a session_id to bill its cost there; tools that
        // require one must resolve it (an empty id resolves to nothing)
        bool requires_session = false;
        if (tool->input_schema.contains("required")) {
            for (const auto& r : tool->input_schema["required"])
                if (r == "session_id") requires_session = true;
        }
        std::shared_ptr<Session> session;
        if (requires_session || !session_id.empty()) {
            try {
                session = get_session(session_id);
            } catch (const Error& e) {
                log_call(session_id, name, 0, false, errc_name(e.code()));
                throw;
            }
        }

        std::unique_lock<std::mutex> session_lock;
        std::int64_t cost_before = 0;
        if (session) {
            session_lock = std::unique_lock<std::mutex>(session->mu);
            cost_before = session->analysis.cost;
            std::int64_t estimate = tool->cost_class;
            if (name == "profile_deep" && args.contains("probes"))
                estimate = tool->cost_class * std::max<std::int64_t>(1, args["probes"].size());
            if (cost_before + estimate > cfg_.session_cost_cap) {
                log_call(session_id, name, 0, false, "BudgetExhausted");
                throw Error(Errc::BudgetExhausted,
                            "session cost cap " + std::to_string(cfg_.session_cost_cap) +
                                " would be exceeded");
            }
        }

        json result;
        try {
            result = (this->*handlers_[tool_idx])(session, args);
        } catch (const Error& e) {
            if (session) session_lock.unlock();
            log_call(session_id, name, 0, false, errc_name(e.code()));
            throw;
        }

        std::int64_t delta = 0;
        if (session) {
            if (session->analysis.cost == cost_before) session->analysis.cost += tool->cost_class;
            delta = session->analysis.cost - cost_before;
            session_lock.unlock();
        }
        if (session_id.empty() && result.is_object() && result.contains("session_id"))
            session_id = result["session_id"].get<std::string>();  // session.open attribution
        if (auto err = schema_validate(tool->output_schema, result)) {
            log_call(session_id, name, delta, false, "SchemaViolation");
            throw Error(Errc::SchemaViolation, "output failed its schema: " + *err);
        }
        log_call(session_id, name, delta, true, "");
        return result;
    }

    // ------------------------------------------------------------------
    // Introspection used by tests, the CLI, and the acceptance suite
    // ------------------------------------------------------------------

    std::vector<ToolDescriptor> list_tools() const { return tools_; }
    PolicyRepo& repo() { return repo_; }
    DeploymentLog& deployments() { return deployments_; }
    const std::vector<WorkloadSpec>& suite() const { return suite_; }
    std::string current_suite_hash() const { return suite_hash_; }
    const Verifier& verifier() const { return verifier_; }

    std::vector<LogEntry> log_entries() const {
        std::lock_guard lock(log_mu_);
        return log_;
    }

    std::int64_t session_cost(const std::string& session_id) {
        auto s = get_session(session_id);
        std::lock_guard lock(s->mu);
        return s->analysis.cost;
    }

    // Blocking newline-delimited JSON-RPC loop.
    void run_stdio(std::istream& in, std::ostream& out) {
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            out << handle_request_text(line) << "\n" << std::flush;
        }
    }

private:
    struct Session {
        std::string id;
        AnalysisSession analysis;
        std::optional<WorkloadProfile> last_profile;
        std::mutex mu;
    };

    using Handler = json (ControlPlaneServer::*)(std::shared_ptr<Session>&, const json&);

    static std::string resolve_key(const ServerConfig& cfg) {
        if (!cfg.signing_key.empty()) return cfg.signing_key;
        if (const char* env = std::getenv(cfg.signing_key_env.c_str()); env && *env) return env;
        return "schedlab-dev-key";
    }

    static json ok_response(const json& id, json result) {
        json r;
        r["id"] = id;
        r["jsonrpc"] = "2.0";
        r["result"] = std::move(result);
        return r;
    }

    static json error_response(const json& id, int code, const std::string& message,
                               const std::string& kind) {
        json e;
        e["code"] = code;
        e["data"] = json{{"kind", kind}};
        e["message"] = message;
        json r;
        r["id"] = id;
        r["jsonrpc"] = "2.0";
        r["error"] = std::move(e);
        return r;
    }

    std::shared_ptr<Session> get_session(const std::string& id) {
        std::lock_guard lock(sessions_mu_);
        auto it = sessions_.find(id);
        if (it == sessions_.end())
            throw Error(Errc::UnknownSession, "no session '" + id + "'");
        return it->second;
    }

    void log_call(const std::string& session, const std::string& tool, std::int64_t cost_delta,
                  bool ok, const std::string& error_kind) {
        std::lock_guard lock(log_mu_);
        LogEntry e;
        e.seq = static_cast<std::int64_t>(log_.size()) + 1;
        e.session_id = session;
        e.tool = tool;
        e.cost_delta = cost_delta;
        e.ok = ok;
        e.error_kind = error_kind;
        log_.push_back(e);
        if (log_file_ && log_file_->is_open()) {
            (*log_file_) << canonical_dump(e.to_json()) << "\n";
            log_file_->flush();
        }
    }

    static WorkloadSpec parse_workload_arg(const json& j) {
        try {
            auto w = WorkloadSpec::from_json(j);
            w.validate();
            return w;
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error(Errc::SchemaViolation, std::string("workload: ") + e.what());
        }
    }

    PolicySpec resolve_policy(const json& args) {
        if (args.contains("source")) {
            try {
                return parse_policy(args["source"].get<std::string>());
            } catch (const Error& e) {
                if (e.code() == Errc::SyntaxError || e.code() == Errc::UnknownIdentifier ||
                    e.code() == Errc::DuplicateParam)
                    throw Error(Errc::InvalidSpec, e.what());
                throw;
            }
        }
        if (args.contains("policy_id")) {
            auto id = args["policy_id"].get<std::string>();
            for (const auto& n : builtin_names())
                if (n == id) return builtin(n);
            return repo_.get(id).spec;
        }
        throw Error(Errc::SchemaViolation, "need 'source' or 'policy_id'");
    }

    // ------------------------------------------------------------------
    // Tool handlers
    // ------------------------------------------------------------------

    json tool_session_open(std::shared_ptr<Session>&, const json& args) {
        auto workload = parse_workload_arg(args.at("workload"));
        auto s = std::make_shared<Session>();
        {
            std::lock_guard lock(sessions_mu_);
            char buf[32];
            std::snprintf(buf, sizeof(buf), "sess-%06d", ++session_counter_);
            s->id = buf;
            s->analysis.id = s->id;
            s->analysis.source = std::make_shared<SimProbeSource>(std::move(workload));
            sessions_[s->id] = s;
        }
        return json{{"session_id", s->id}};
    }

    json tool_summarize(std::shared_ptr<Session>& session, const json& args) {
        int budget = args.value("budget_bytes", cfg_.summary_default_budget);
        auto summary = engine_.summarize(session->analysis, budget);
        return summary.to_json();
    }

    json tool_profile_deep(std::shared_ptr<Session>& session, const json& args) {
        std::set<std::string> probes;
        for (const auto& p : args.at("probes")) probes.insert(p.get<std::string>());
        if (probes.empty()) throw Error(Errc::SchemaViolation, "probes must be non-empty");
        auto report = engine_.profile_deep(session->analysis, probes);
        return json{{"report", report.to_json()}};
    }

    json tool_classify(std::shared_ptr<Session>& session, const json&) {
        if (!session->analysis.last_summary)
            throw Error(Errc::UnboundSession, "classify requires a prior summarize on this session");
        auto profile =
            engine_.classify(*session->analysis.last_summary, session->analysis.last_report);
        session->last_profile = profile;
        return profile.to_json();
    }

    json tool_repo_search(std::shared_ptr<Session>&, const json& args) {
        auto hits = repo_.search(args.at("query").get<std::string>(),
                                 static_cast<std::size_t>(args.value("k", 5)));
        json results = json::array();
        for (const auto& h : hits) {
            json r;
            r["description"] = h.record.description;
            r["id"] = h.record.id;
            r["name"] = h.record.spec.name;
            r["normalized"] = h.normalized;
            r["score"] = h.score;
            r["status"] = status_name(h.record.status);
            results.push_back(std::move(r));
        }
        return json{{"results", std::move(results)}};
    }

    json tool_repo_show(std::shared_ptr<Session>&, const json& args) {
        auto rec = repo_.get(args.at("policy_id").get<std::string>());
        return json{{"record", rec.to_json()}};
    }

    json tool_repo_add(std::shared_ptr<Session>&, const json& args) {
        PolicySpec spec;
        try {
            spec = parse_policy(args.at("source").get<std::string>());
        } catch (const Error& e) {
            throw Error(Errc::InvalidSpec, e.what());
        }
        std::set<std::string> fams;
        for (const auto& f : args.value("target_families", json::array()))
            fams.insert(f.get<std::string>());
        auto rec = repo_.add(spec, args.value("description", spec.description), fams);
        return json{{"id", rec.id}, {"name", rec.spec.name}, {"status", status_name(rec.status)}};
    }

    json tool_repo_record_outcome(std::shared_ptr<Session>&, const json& args) {
        OutcomeRecord o;
        o.deployment_id = args.at("deployment_id").get<std::string>();
        o.goal = goal_from_name(args.at("goal").get<std::string>());
        o.workload_fingerprint = args.value("workload_fingerprint", "");
        o.timestamp_us = verifier_.now();
        if (args.contains("delta")) o.delta = PerformanceDelta::from_json(args["delta"]);
        auto rec = repo_.record_outcome(args.at("policy_id").get<std::string>(), o);
        return json{{"id", rec.id}, {"outcomes", rec.outcomes.size()},
                    {"status", status_name(rec.status)}};
    }

    json tool_repo_promote(std::shared_ptr<Session>&, const json& args) {
        auto rec = repo_.promote(args.at("policy_id").get<std::string>());
        return json{{"id", rec.id}, {"status", status_name(rec.status)}};
    }

    json tool_repo_retire(std::shared_ptr<Session>&, const json& args) {
        auto rec = repo_.retire(args.at("policy_id").get<std::string>());
        return json{{"id", rec.id}, {"status", status_name(rec.status)}};
    }

    json tool_repo_note_antipattern(std::shared_ptr<Session>&, const json& args) {
        auto rec = repo_.note_antipattern(args.at("policy_id").get<std::string>(),
                                          args.at("note").get<std::string>());
        return json{{"antipatterns", rec.antipatterns.size()}, {"id", rec.id}};
    }

    json tool_sim_run(std::shared_ptr<Session>&, const json& args) {
        auto workload = parse_workload_arg(args.at("workload"));
        auto policy = resolve_policy(args);
        auto seed = args.value("seed", std::uint64_t{0});
        auto r = simulate(workload, policy, seed);
        return json{{"complete", r.complete},
                    {"event_count", r.event_count},
                    {"metrics", r.metrics.to_json()},
                    {"violations", r.violations}};
    }

    json tool_verify_pipeline(std::shared_ptr<Session>&, const json& args) {
        auto spec = resolve_policy(args);
        // candidates register in the repository so tokens stay resolvable
        auto rec = repo_.add(spec, args.value("description", spec.description), {});

        OptGoal goal = OptGoal::MaxThroughput;
        WorkloadFamily family = WorkloadFamily::Custom;
        if (args.contains("profile")) {
            auto p = WorkloadProfile::from_json(args["profile"]);
            goal = p.optimization_goal;
            family = p.family;
        }
        auto baseline = builtin("fair_vruntime");
        auto report = verifier_.run_pipeline(spec, suite_, baseline, goal, family);
        json out;
        out["passed"] = report.passed;
        out["policy_id"] = rec.id;
        out["report"] = report.to_json();
        if (report.passed) out["token"] = verifier_.issue_token(report).to_json();
        return out;
    }

    json tool_deploy_canary(std::shared_ptr<Session>& session, const json& args) {
        DeploymentToken token;
        try {
            token = DeploymentToken::from_json(args.at("token"));
        } catch (const std::exception& e) {
            throw Error(Errc::InvalidToken, std::string("malformed token: ") + e.what());
        }
        verifier_.verify_token(token);  // InvalidToken / TokenExpired
        if (token.suite_hash != suite_hash_)
            throw Error(Errc::TokenSuiteMismatch,
                        "token was issued for a different validation suite; re-validate");
        auto candidate = repo_.get(token.policy_id);

        CanaryConfig cfg;
        if (args.contains("config")) {
            const auto& c = args["config"];
            cfg.threshold_pct = c.value("threshold_pct", cfg.threshold_pct);
            cfg.trip_limit = c.value("trip_limit", cfg.trip_limit);
            cfg.n_windows = c.value("n_windows", cfg.n_windows);
        }
        std::string baseline_id = args.value("baseline_id", deployments_.active_policy_id());
        PolicySpec baseline;
        if (baseline_id == candidate.id) {
            baseline = candidate.spec;
        } else {
            bool found = false;
            for (const auto& n : builtin_names()) {
                if (builtin(n).content_id() == baseline_id) {
                    baseline = builtin(n);
                    found = true;
                }
            }
            if (!found) baseline = repo_.get(baseline_id).spec;
        }

        if (!session->analysis.source)
            throw Error(Errc::UnboundSession, "session has no workload");
        const auto& workload = session->analysis.source->workload();
        cfg.window_size = static_cast<int>(workload.tasks.size());

        OptGoal goal = session->last_profile ? session->last_profile->optimization_goal
                                             : OptGoal::MaxThroughput;
        if (args.contains("goal")) goal = goal_from_name(args["goal"].get<std::string>());
        std::string fingerprint =
            session->last_profile ? session->last_profile->fingerprint : "";

        SimWindowRunner runner(workload);
        CanaryController controller(deployments_, repo_, verifier_.now());
        auto out = controller.run(candidate.spec, candidate.id, baseline, baseline_id, runner, cfg,
                                  goal, fingerprint);

        json j;
        j["deployment_id"] = out.state.deployment_id;
        if (out.record.final_delta) j["final_delta"] = out.record.final_delta->to_json();
        j["phase"] = canary_phase_name(out.state.phase);
        j["state"] = out.state.to_json();
        json wd = json::array();
        for (const auto& d : out.record.window_deltas) wd.push_back(d.to_json());
        j["window_deltas"] = std::move(wd);
        return j;
    }

    json tool_feedback_report(std::shared_ptr<Session>&, const json& args) {
        auto delta = engine_.report_feedback(args.at("deployment_id").get<std::string>());
        return json{{"delta", delta.to_json()}};
    }

    // ------------------------------------------------------------------

    void register_tools() {
        using namespace schema;
        auto add = [&](ToolDescriptor t, Handler h) {
            tools_.push_back(std::move(t));
            handlers_.push_back(h);
        };

        add({"session.open", "Bind a workload source and open an analysis session",
             object({{"workload", any_object()}}, {"workload"}),
             object({{"session_id", str()}}, {"session_id"}),
             json{{"workload", gen_longtail_batch(2, 1000, 1, 8000).to_json()}}, 0},
            &ControlPlaneServer::tool_session_open);

        add({"summarize", "Tier-1 workload summary under a byte budget",
             object({{"session_id", str()}, {"budget_bytes", integer(kSummaryMinBudget)}},
                    {"session_id"}),
             any_object(),
             json{{"session_id", "sess-000001"}, {"budget_bytes", 512}}, 1},
            &ControlPlaneServer::tool_summarize);

        add({"profile_deep", "Tier-2 probes; costs its class per probe",
             object({{"session_id", str()}, {"probes", array_of(str())}},
                    {"session_id", "probes"}),
             object({{"report", any_object()}}, {"report"}),
             json{{"session_id", "sess-000001"}, {"probes", json::array({"durations"})}}, 5},
            &ControlPlaneServer::tool_profile_deep);

        add({"classify", "Derive a workload profile from this session's summary",
             object({{"session_id", str()}}, {"session_id"}), any_object(),
             json{{"session_id", "sess-000001"}}, 1},
            &ControlPlaneServer::tool_classify);

        add({"repo.search", "BM25 search over policy metadata",
             object({{"query", str()}, {"k", integer(1)}}, {"query"}),
             object({{"results", array_of(any_object())}}, {"results"}),
             json{{"query", "batch longtail"}, {"k", 3}}, 1},
            &ControlPlaneServer::tool_repo_search);

        add({"repo.show", "Fetch one policy record including its source",
             object({{"policy_id", str()}}, {"policy_id"}),
             object({{"record", any_object()}}, {"record"}),
             json{{"policy_id", builtin("fifo").content_id()}}, 1},
            &ControlPlaneServer::tool_repo_show);

        add({"repo.add", "Register a policy (idempotent by content hash)",
             object({{"source", str()},
                     {"description", str()},
                     {"target_families", array_of(str())}},
                    {"source"}),
             object({{"id", str()}, {"name", str()}, {"status", str()}}, {"id", "status"}),
             json{{"source", "priority = -vruntime\npreemptive = true\n"},
                  {"description", "fair variant"}},
             1},
            &ControlPlaneServer::tool_repo_add);

        add({"repo.record_outcome", "Append a deployment outcome to a policy's history",
             object({{"policy_id", str()},
                     {"deployment_id", str()},
                     {"goal", str()},
                     {"workload_fingerprint", str()},
                     {"delta", any_object()}},
                    {"policy_id", "deployment_id", "goal"}),
             any_object(),
             json{{"policy_id", builtin("ljf").content_id()},
                  {"deployment_id", "dep-000001"},
                  {"goal", "min_avg_completion"}},
             1},
            &ControlPlaneServer::tool_repo_record_outcome);

        add({"repo.promote", "Promote a candidate with positive outcome evidence",
             object({{"policy_id", str()}}, {"policy_id"}), any_object(),
             json{{"policy_id", builtin("ljf").content_id()}}, 1},
            &ControlPlaneServer::tool_repo_promote);

        add({"repo.retire", "Retire a policy from search and planning",
             object({{"policy_id", str()}}, {"policy_id"}), any_object(),
             json{{"policy_id", builtin("ljf").content_id()}}, 1},
            &ControlPlaneServer::tool_repo_retire);

        add({"repo.note_antipattern", "Attach an antipattern note to a policy",
             object({{"policy_id", str()}, {"note", str()}}, {"policy_id", "note"}), any_object(),
             json{{"policy_id", builtin("ljf").content_id()},
                  {"note", "starves short tasks without aging"}},
             1},
            &ControlPlaneServer::tool_repo_note_antipattern);

        add({"sim.run", "One deterministic simulation of a workload under a policy",
             object({{"workload", any_object()},
                     {"policy_id", str()},
                     {"source", str()},
                     {"seed", integer(0)}},
                    {"workload"}),
             any_object(),
             json{{"workload", gen_longtail_batch(2, 1000, 1, 8000).to_json()},
                  {"policy_id", "fifo"}},
             20},
            &ControlPlaneServer::tool_sim_run);

        add({"verify.pipeline", "Run the staged verifier; a pass yields a deployment token",
             object({{"source", str()}, {"policy_id", str()}, {"profile", any_object()},
                     {"description", str()}},
                    {}),
             any_object(),
             json{{"policy_id", "fifo"}}, 50},
            &ControlPlaneServer::tool_verify_pipeline);

        add({"deploy.canary", "Deploy under canary supervision; requires a valid token",
             object({{"session_id", str()}, {"token", any_object()}, {"config", any_object()},
                     {"baseline_id", str()}, {"goal", str()}},
                    {"session_id", "token"}),
             any_object(),
             json{{"session_id", "sess-000001"}, {"token", json::object()}}, 20},
            &ControlPlaneServer::tool_deploy_canary);

        add({"feedback.report", "Post-deployment delta for a closed deployment",
             object({{"deployment_id", str()}}, {"deployment_id"}),
             object({{"delta", any_object()}}, {"delta"}),
             json{{"deployment_id", "dep-000001"}}, 1},
            &ControlPlaneServer::tool_feedback_report);
    }

    ServerConfig cfg_;
    PolicyRepo repo_;
    Verifier verifier_;
    DeploymentLog deployments_;
    AnalysisEngine engine_;
    std::vector<WorkloadSpec> suite_;
    std::string suite_hash_;

    std::mutex sessions_mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    int session_counter_ = 0;

    mutable std::mutex log_mu_;
    std::vector<LogEntry> log_;
    std::optional<std::ofstream> log_file_;

    std::vector<ToolDescriptor> tools_;
    std::vector<Handler> handlers_;
};

}  // namespace schedlab
