#pragma once

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "schedlab/dsl.hpp"

namespace schedlab {

enum class PolicyStatus { Candidate, Promoted, Retired };

inline const char* status_name(PolicyStatus s) {
    switch (s) {
        case PolicyStatus::Candidate: return "candidate";
        case PolicyStatus::Promoted: return "promoted";
        case PolicyStatus::Retired: return "retired";
    }
    return "candidate";
}

inline PolicyStatus status_from_name(const std::string& s) {
    if (s == "candidate") return PolicyStatus::Candidate;
    if (s == "promoted") return PolicyStatus::Promoted;
    if (s == "retired") return PolicyStatus::Retired;
    throw Error(Errc::CorruptRecord, "unknown status '" + s + "'");
}

struct OutcomeRecord {
    std::string workload_fingerprint;
    OptGoal goal = OptGoal::MaxThroughput;
    PerformanceDelta delta;
    Micros timestamp_us = 0;
    std::string deployment_id;

    bool positive() const { return delta.improvement_pct(goal) > 0.0; }

    json to_json() const {
        json j;
        j["delta"] = delta.to_json();
        j["deployment_id"] = deployment_id;
        j["goal"] = goal_name(goal);
        j["timestamp_us"] = timestamp_us;
        j["workload_fingerprint"] = workload_fingerprint;
        return j;
    }

    static OutcomeRecord from_json(const json& j) {
        OutcomeRecord o;
        o.delta = PerformanceDelta::from_json(j.at("delta"));
        o.deployment_id = j.at("deployment_id").get<std::string>();
        o.goal = goal_from_name(j.at("goal").get<std::string>());
        o.timestamp_us = j.at("timestamp_us").get<Micros>();
        o.workload_fingerprint = j.at("workload_fingerprint").get<std::string>();
        return o;
    }
};

struct PolicyRecord {
    std::string id;  // content hash of the canonical spec
    PolicySpec spec;
    std::string source;  // rendered DSL text, the durable form
    std::string description;
    std::set<std::string> target_families;
    PolicyStatus status = PolicyStatus::Candidate;
    std::vector<OutcomeRecord> outcomes;
    std::vector<std::string> antipatterns;

    json to_json() const {
        json j;
        j["antipatterns"] = antipatterns;
        j["description"] = description;
        j["id"] = id;
        json oc = json::array();
        for (const auto& o : outcomes) oc.push_back(o.to_json());
        j["outcomes"] = std::move(oc);
        j["source"] = source;
        j["spec"] = spec.to_json();
        j["status"] = status_name(status);
        j["target_families"] = std::vector<std::string>(target_families.begin(), target_families.end());
        return j;
    }

    static PolicyRecord from_json(const json& j) {
        PolicyRecord r;
        r.antipatterns = j.value("antipatterns", std::vector<std::string>{});
        r.description = j.at("description").get<std::string>();
        r.id = j.at("id").get<std::string>();
        for (const auto& o : j.value("outcomes", json::array()))
            r.outcomes.push_back(OutcomeRecord::from_json(o));
        r.source = j.at("source").get<std::string>();
        r.spec = parse_policy(r.source);
        r.status = status_from_name(j.at("status").get<std::string>());
        for (const auto& f : j.value("target_families", std::vector<std::string>{}))
            r.target_families.insert(f);
        return r;
    }
};

struct SearchHit {
    PolicyRecord record;
    double score = 0.0;
    double normalized = 0.0;  // score / self-match score of the query, in [0,1]
};

inline std::vector<std::string> bm25_tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Persistent policy store: one JSON document per record under <root>/records,
// plus a rebuildable index file. The directory is the source of truth; a
// missing or corrupt index is rebuilt from it. Records are content-addressed
// and re-hashed on load. Thread model: many readers, single writer.
class PolicyRepo {
public:
    static constexpr double kBm25K1 = 1.2;
    static constexpr double kBm25B = 0.75;
    static constexpr int kAutoRetireNegatives = 3;

    // In-memory repository.
    PolicyRepo() = default;

    // Directory-backed repository; loads existing records, seeds the six
    // built-ins when the store is brand new.
    explicit PolicyRepo(const std::filesystem::path& root) : root_(root) {
        namespace fs = std::filesystem;
        fs::create_directories(records_dir());
        bool any = false;
        for (const auto& entry : fs::directory_iterator(records_dir())) {
            if (entry.path().extension() != ".json") continue;
            any = true;
            load_record_file(entry.path());
        }
        if (!any) seed_builtins();
        rewrite_index();
    }

    void seed_builtins() {
        for (const auto& name : builtin_names()) {
            auto spec = builtin(name);
            std::set<std::string> fams;
            if (name == "fifo") fams = {"custom"};
            if (name == "round_robin") fams = {"custom"};
            if (name == "fair_vruntime") fams = {"latency-chain", "custom"};
            if (name == "sjf") fams = {"batch-longtail", "build-dag"};
            if (name == "ljf") fams = {"batch-longtail"};
            if (name == "layered_weight") fams = {"custom"};
            add(spec, spec.description, fams);
        }
    }

    PolicyRecord add(const PolicySpec& spec, const std::string& description,
                     const std::set<std::string>& target_families) {
        try {
            validate_policy(spec);
            // the rendered source must parse back; it is the durable form
            parse_policy(render_policy(spec));
        } catch (const Error& e) {
            throw Error(Errc::InvalidSpec, e.what());
        }
        std::unique_lock lock(mu_);
        auto id = spec.content_id();
        auto it = records_.find(id);
        if (it != records_.end()) return it->second;  // idempotent on identical spec

        PolicyRecord r;
        r.id = id;
        r.spec = spec;
        r.source = render_policy(spec);
        r.description = description;
        r.target_families = target_families;
        records_[id] = r;
        persist(r);
        rewrite_index_locked();
        return r;
    }

    bool exists(const std::string& id) const {
        std::shared_lock lock(mu_);
        return records_.count(id) > 0;
    }

    PolicyRecord get(const std::string& id) const {
        std::shared_lock lock(mu_);
        auto it = records_.find(id);
        if (it == records_.end()) throw Error(Errc::UnknownPolicy, "no policy with id " + id);
        return it->second;
    }

    std::vector<PolicyRecord> list() const {
        std::shared_lock lock(mu_);
        std::vector<PolicyRecord> out;
        out.reserve(records_.size());
        for (const auto& [_, r] : records_) out.push_back(r);
        return out;
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return records_.size();
    }

    // BM25 (k1=1.2, b=0.75) over lowercase alphanumeric tokens of
    // description + tags + target_families. Retired records are excluded;
    // only records containing at least one query token are returned;
    // ties break by id.
    std::vector<SearchHit> search(const std::string& query, std::size_t k) const {
        if (bm25_tokenize(query).empty()) throw Error(Errc::EmptyQuery, "query has no tokens");
        if (k < 1) throw Error(Errc::EmptyQuery, "k must be >= 1");
        std::shared_lock lock(mu_);

        struct Doc {
            const PolicyRecord* rec;
            std::map<std::string, int> tf;
            std::size_t len;
        };
        std::vector<Doc> docs;
        std::map<std::string, int> df;
        for (const auto& [_, r] : records_) {
            if (r.status == PolicyStatus::Retired) continue;
            Doc d;
            d.rec = &r;
            for (const auto& tok : indexed_tokens(r)) d.tf[tok]++;
            d.len = 0;
            for (const auto& [_t, c] : d.tf) d.len += static_cast<std::size_t>(c);
            for (const auto& [tok, _c] : d.tf) df[tok]++;
            docs.push_back(std::move(d));
        }
        if (docs.empty()) return {};

        double avgdl = 0;
        for (const auto& d : docs) avgdl += static_cast<double>(d.len);
        avgdl /= static_cast<double>(docs.size());
        auto n_docs = static_cast<double>(docs.size());

        auto idf = [&](const std::string& tok) {
            auto it = df.find(tok);
            double dfreq = it == df.end() ? 0.0 : it->second;
            return std::log(1.0 + (n_docs - dfreq + 0.5) / (dfreq + 0.5));
        };

        auto query_tokens = bm25_tokenize(query);
        // self-match: the score a document consisting of exactly the query
        // tokens would get, used to normalize corpus-dependent raw scores
        double self_score = 0.0;
        for (const auto& tok : query_tokens) {
            double denom =
                1.0 + kBm25K1 * (1.0 - kBm25B +
                                 kBm25B * static_cast<double>(query_tokens.size()) / avgdl);
            self_score += idf(tok) * (kBm25K1 + 1.0) / denom;
        }

        std::vector<SearchHit> hits;
        for (const auto& d : docs) {
            double score = 0.0;
            for (const auto& tok : query_tokens) {
                auto it = d.tf.find(tok);
                if (it == d.tf.end()) continue;
                double tf = it->second;
                double denom =
                    tf + kBm25K1 * (1.0 - kBm25B + kBm25B * static_cast<double>(d.len) / avgdl);
                score += idf(tok) * tf * (kBm25K1 + 1.0) / denom;
            }
            if (score <= 0.0) continue;  // search soundness: >= 1 token present
            SearchHit h;
            h.record = *d.rec;
            h.score = score;
            h.normalized = self_score > 0 ? std::clamp(score / self_score, 0.0, 1.0) : 0.0;
            hits.push_back(std::move(h));
        }
        std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.record.id < b.record.id;
        });
        if (hits.size() > k) hits.resize(k);
        return hits;
    }

    PolicyRecord record_outcome(const std::string& id, const OutcomeRecord& outcome) {
        std::unique_lock lock(mu_);
        auto it = records_.find(id);
        if (it == records_.end()) throw Error(Errc::UnknownPolicy, "no policy with id " + id);
        for (const auto& o : it->second.outcomes) {
            if (o.deployment_id == outcome.deployment_id)
                throw Error(Errc::DuplicateDeployment,
                            "deployment " + outcome.deployment_id + " already recorded");
        }
        it->second.outcomes.push_back(outcome);  // append-only history
        // stated retirement rule: three consecutive negative outcomes
        if (it->second.status != PolicyStatus::Retired &&
            it->second.outcomes.size() >= kAutoRetireNegatives) {
            bool all_neg = true;
            for (std::size_t i = it->second.outcomes.size() - kAutoRetireNegatives;
                 i < it->second.outcomes.size(); ++i) {
                if (it->second.outcomes[i].positive()) all_neg = false;
            }
            if (all_neg) it->second.status = PolicyStatus::Retired;
        }
        persist(it->second);
        return it->second;
    }

    PolicyRecord promote(const std::string& id) {
        std::unique_lock lock(mu_);
        auto it = records_.find(id);
        if (it == records_.end()) throw Error(Errc::UnknownPolicy, "no policy with id " + id);
        if (it->second.status != PolicyStatus::Candidate)
            throw Error(Errc::IllegalTransition,
                        std::string("cannot promote a ") + status_name(it->second.status) + " record");
        bool has_positive = false;
        for (const auto& o : it->second.outcomes)
            if (o.positive()) has_positive = true;
        if (!has_positive)
            throw Error(Errc::PromotionBlocked, "needs at least one positive primary-goal outcome");
        it->second.status = PolicyStatus::Promoted;
        persist(it->second);
        return it->second;
    }

    PolicyRecord retire(const std::string& id) {
        std::unique_lock lock(mu_);
        auto it = records_.find(id);
        if (it == records_.end()) throw Error(Errc::UnknownPolicy, "no policy with id " + id);
        if (it->second.status == PolicyStatus::Retired)
            throw Error(Errc::IllegalTransition, "record is already retired");
        it->second.status = PolicyStatus::Retired;
        persist(it->second);
        return it->second;
    }

    PolicyRecord note_antipattern(const std::string& id, const std::string& note) {
        std::unique_lock lock(mu_);
        auto it = records_.find(id);
        if (it == records_.end()) throw Error(Errc::UnknownPolicy, "no policy with id " + id);
        it->second.antipatterns.push_back(note);
        persist(it->second);
        return it->second;
    }

    std::vector<PolicyRecord> search_by_fingerprint(const std::string& fingerprint) const {
        std::shared_lock lock(mu_);
        std::vector<PolicyRecord> out;
        for (const auto& [_, r] : records_) {
            for (const auto& o : r.outcomes) {
                if (o.workload_fingerprint == fingerprint) {
                    out.push_back(r);
                    break;
                }
            }
        }
        return out;
    }

    json export_bundle() const {
        std::shared_lock lock(mu_);
        json arr = json::array();
        for (const auto& [_, r] : records_) arr.push_back(r.to_json());
        return json{{"records", std::move(arr)}};
    }

    void import_bundle(const json& bundle) {
        std::unique_lock lock(mu_);
        for (const auto& rj : bundle.at("records")) {
            auto r = PolicyRecord::from_json(rj);
            if (r.spec.content_id() != r.id)
                throw Error(Errc::CorruptRecord, "bundle record id does not match its spec hash");
            records_[r.id] = r;
            persist(r);
        }
        rewrite_index_locked();
    }

private:
    std::filesystem::path records_dir() const { return root_ / "records"; }
    std::filesystem::path index_path() const { return root_ / "index.json"; }

    std::vector<std::string> indexed_tokens(const PolicyRecord& r) const {
        std::string text = r.description;
        for (const auto& t : r.spec.tags) text += " " + t;
        for (const auto& f : r.target_families) text += " " + f;
        return bm25_tokenize(text);
    }

    void load_record_file(const std::filesystem::path& p) {
        std::ifstream in(p);
        if (!in) throw Error(Errc::IoError, "cannot read " + p.string());
        json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded())
            throw Error(Errc::CorruptRecord, "unparseable record file " + p.string());
        auto r = PolicyRecord::from_json(j);
        // tamper evidence: the stored spec must hash back to its id
        if (r.spec.content_id() != r.id)
            throw Error(Errc::CorruptRecord,
                        "record " + p.filename().string() + " does not match its content hash");
        records_[r.id] = std::move(r);
    }

    void persist(const PolicyRecord& r) {
        if (root_.empty()) return;
        auto final_path = records_dir() / (r.id + ".json");
        auto tmp_path = records_dir() / (r.id + ".json.tmp");
        {
            std::ofstream out(tmp_path, std::ios::trunc);
            if (!out) throw Error(Errc::IoError, "cannot write " + tmp_path.string());
            out << canonical_dump(r.to_json()) << "\n";
        }
        std::filesystem::rename(tmp_path, final_path);
    }

    void rewrite_index() {
        std::unique_lock lock(mu_);
        rewrite_index_locked();
    }

    void rewrite_index_locked() {
        if (root_.empty()) return;
        json ids = json::array();
        for (const auto& [id, _] : records_) ids.push_back(id);
        auto tmp = index_path();
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << canonical_dump(json{{"record_ids", std::move(ids)}}) << "\n";
        }
        std::filesystem::rename(tmp, index_path());
    }

    std::filesystem::path root_;
    mutable std::shared_mutex mu_;
    std::map<std::string, PolicyRecord> records_;
};

}  // namespace schedlab
