#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "schedlab/domain.hpp"
#include "schedlab/sha256.hpp"

namespace schedlab {

// ---------------------------------------------------------------------------
// Expression trees
//
// Policies are loop-free arithmetic over the task feature vector, so every
// program terminates by construction. Division is the only partial operator
// and is screened by the verifier's interval analysis before deployment.
// ---------------------------------------------------------------------------

enum class Feature {
    ArrivalTime,
    EnqueueTime,
    WaitTime,
    ExecRuntime,
    Vruntime,
    ExpectedRuntime,
    Weight,
    WakeupCount,
    Now,
};

inline const std::vector<std::pair<std::string, Feature>>& feature_table() {
    static const std::vector<std::pair<std::string, Feature>> table = {
        {"arrival_time", Feature::ArrivalTime},
        {"enqueue_time", Feature::EnqueueTime},
        {"wait_time", Feature::WaitTime},
        {"exec_runtime", Feature::ExecRuntime},
        {"vruntime", Feature::Vruntime},
        {"expected_runtime", Feature::ExpectedRuntime},
        {"weight", Feature::Weight},
        {"wakeup_count", Feature::WakeupCount},
        {"now", Feature::Now},
    };
    return table;
}

inline std::optional<Feature> feature_from_name(std::string_view name) {
    for (const auto& [n, f] : feature_table())
        if (n == name) return f;
    return std::nullopt;
}

inline const char* feature_name(Feature f) {
    for (const auto& [n, ff] : feature_table())
        if (ff == f) return n.c_str();
    return "?";
}

inline double feature_value(const TaskRuntimeState& s, Feature f) {
    switch (f) {
        case Feature::ArrivalTime: return static_cast<double>(s.arrival_time);
        case Feature::EnqueueTime: return static_cast<double>(s.enqueue_time);
        case Feature::WaitTime: return static_cast<double>(s.wait_time);
        case Feature::ExecRuntime: return static_cast<double>(s.exec_runtime);
        case Feature::Vruntime: return s.vruntime;
        case Feature::ExpectedRuntime: return static_cast<double>(s.expected_runtime);
        case Feature::Weight: return static_cast<double>(s.weight);
        case Feature::WakeupCount: return static_cast<double>(s.wakeup_count);
        case Feature::Now: return static_cast<double>(s.now);
    }
    return 0.0;
}

struct Expr {
    enum class Kind { Const, Feat, Param, Neg, Add, Sub, Mul, Div, Min, Max, Clamp };

    Kind kind = Kind::Const;
    double value = 0.0;      // Const
    Feature feat{};          // Feat
    std::string param;       // Param
    std::vector<Expr> kids;  // operands

    static Expr constant(double v) {
        Expr e;
        e.kind = Kind::Const;
        e.value = v;
        return e;
    }
    static Expr feature(Feature f) {
        Expr e;
        e.kind = Kind::Feat;
        e.feat = f;
        return e;
    }
    static Expr param_ref(std::string name) {
        Expr e;
        e.kind = Kind::Param;
        e.param = std::move(name);
        return e;
    }
    static Expr unary(Kind k, Expr c) {
        Expr e;
        e.kind = k;
        e.kids.push_back(std::move(c));
        return e;
    }
    static Expr binary(Kind k, Expr l, Expr r) {
        Expr e;
        e.kind = k;
        e.kids.push_back(std::move(l));
        e.kids.push_back(std::move(r));
        return e;
    }
    static Expr call(Kind k, std::vector<Expr> args) {
        Expr e;
        e.kind = k;
        e.kids = std::move(args);
        return e;
    }

    bool operator==(const Expr& o) const {
        if (kind != o.kind) return false;
        switch (kind) {
            case Kind::Const: return value == o.value;
            case Kind::Feat: return feat == o.feat;
            case Kind::Param: return param == o.param;
            default: break;
        }
        if (kids.size() != o.kids.size()) return false;
        for (std::size_t i = 0; i < kids.size(); ++i)
            if (!(kids[i] == o.kids[i])) return false;
        return true;
    }

    int depth() const {
        int d = 0;
        for (const auto& k : kids) d = std::max(d, k.depth());
        return d + 1;
    }

    template <typename Fn>
    void visit(Fn&& fn) const {
        fn(*this);
        for (const auto& k : kids) k.visit(fn);
    }
};

struct ParamDef {
    double value = 0.0;
    double min = 0.0;
    double max = 0.0;
};

using ParamMap = std::map<std::string, ParamDef>;

// Slice results are clamped to this range at dispatch time; unbounded
// slices exist only through the non-preemptive flag.
constexpr Micros kSliceMinUs = 100;
constexpr Micros kSliceMaxUs = 100'000;
constexpr Micros kDefaultSliceUs = 3'000;
constexpr int kMaxExprDepth = 32;

struct PolicySpec {
    std::string name = "unnamed";
    std::string description;
    std::vector<std::string> tags;
    ParamMap params;
    Expr priority_expr = Expr::constant(0.0);
    Expr slice_expr = Expr::constant(static_cast<double>(kDefaultSliceUs));
    bool preemptive = false;

    json expr_to_json(const Expr& e) const {
        switch (e.kind) {
            case Expr::Kind::Const: return json{{"const", e.value}};
            case Expr::Kind::Feat: return json{{"feat", feature_name(e.feat)}};
            case Expr::Kind::Param: return json{{"param", e.param}};
            default: break;
        }
        const char* op = nullptr;
        switch (e.kind) {
            case Expr::Kind::Neg: op = "neg"; break;
            case Expr::Kind::Add: op = "add"; break;
            case Expr::Kind::Sub: op = "sub"; break;
            case Expr::Kind::Mul: op = "mul"; break;
            case Expr::Kind::Div: op = "div"; break;
            case Expr::Kind::Min: op = "min"; break;
            case Expr::Kind::Max: op = "max"; break;
            case Expr::Kind::Clamp: op = "clamp"; break;
            default: op = "?"; break;
        }
        json args = json::array();
        for (const auto& k : e.kids) args.push_back(expr_to_json(k));
        return json{{"args", std::move(args)}, {"op", op}};
    }

    json to_json() const {
        json j;
        j["description"] = description;
        j["name"] = name;
        json pj = json::object();
        for (const auto& [n, p] : params)
            pj[n] = json{{"max", p.max}, {"min", p.min}, {"value", p.value}};
        j["params"] = std::move(pj);
        j["preemptive"] = preemptive;
        j["priority_expr"] = expr_to_json(priority_expr);
        j["slice_expr"] = expr_to_json(slice_expr);
        j["tags"] = tags;
        return j;
    }

    std::string canonical_text() const { return canonical_dump(to_json()); }

    // Content address: hash of the canonical serialized spec.
    std::string content_id() const { return sha256_hex(canonical_text()); }
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline double evaluate(const Expr& e, const TaskRuntimeState& state, const ParamMap& params) {
    switch (e.kind) {
        case Expr::Kind::Const: return e.value;
        case Expr::Kind::Feat: return feature_value(state, e.feat);
        case Expr::Kind::Param: {
            auto it = params.find(e.param);
            if (it == params.end())
                throw Error(Errc::UnknownIdentifier, "unbound param '" + e.param + "'");
            return it->second.value;
        }
        case Expr::Kind::Neg: return -evaluate(e.kids[0], state, params);
        case Expr::Kind::Add:
            return evaluate(e.kids[0], state, params) + evaluate(e.kids[1], state, params);
        case Expr::Kind::Sub:
            return evaluate(e.kids[0], state, params) - evaluate(e.kids[1], state, params);
        case Expr::Kind::Mul:
            return evaluate(e.kids[0], state, params) * evaluate(e.kids[1], state, params);
        case Expr::Kind::Div: {
            double num = evaluate(e.kids[0], state, params);
            double den = evaluate(e.kids[1], state, params);
            if (den == 0.0) throw Error(Errc::DivisionByZero, "division by zero at evaluation");
            return num / den;
        }
        case Expr::Kind::Min:
            return std::min(evaluate(e.kids[0], state, params), evaluate(e.kids[1], state, params));
        case Expr::Kind::Max:
            return std::max(evaluate(e.kids[0], state, params), evaluate(e.kids[1], state, params));
        case Expr::Kind::Clamp: {
            double x = evaluate(e.kids[0], state, params);
            double lo = evaluate(e.kids[1], state, params);
            double hi = evaluate(e.kids[2], state, params);
            if (lo > hi) std::swap(lo, hi);
            return std::clamp(x, lo, hi);
        }
    }
    return 0.0;
}

inline double eval_priority(const PolicySpec& p, const TaskRuntimeState& s) {
    return evaluate(p.priority_expr, s, p.params);
}

inline Micros eval_slice_us(const PolicySpec& p, const TaskRuntimeState& s) {
    double v = evaluate(p.slice_expr, s, p.params);
    if (!std::isfinite(v)) v = static_cast<double>(kSliceMaxUs);
    auto us = static_cast<Micros>(v);
    return std::clamp(us, kSliceMinUs, kSliceMaxUs);
}

// ---------------------------------------------------------------------------
// Parser: line-oriented `key = expression` blocks.
//
//   name = ljf_aged
//   description = LJF with an aging term
//   tags = batch, longtail
//   param aging = 0.01 in [0, 10]
//   priority = expected_runtime + aging * wait_time
//   slice = 3000
//   preemptive = false
//
// Only `priority` is mandatory. `#` starts a comment.
// ---------------------------------------------------------------------------

namespace dsl_detail {

struct Cursor {
    std::string_view text;
    std::size_t pos = 0;
    int line = 1;
    int col = 1;

    bool eof() const { return pos >= text.size(); }
    char peek() const { return eof() ? '\0' : text[pos]; }
    char get() {
        char c = text[pos++];
        if (c == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
        return c;
    }
    void skip_space() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) get();
    }
};

[[noreturn]] inline void syntax_error(const Cursor& c, const std::string& what) {
    throw Error(Errc::SyntaxError,
                what + " at line " + std::to_string(c.line) + ", column " + std::to_string(c.col));
}

class ExprParser {
public:
    ExprParser(std::string_view text, int line_base, const ParamMap& params)
        : cur_{text}, params_(params) {
        cur_.line = line_base;
    }

    Expr parse() {
        Expr e = parse_sum();
        cur_.skip_space();
        if (!cur_.eof()) syntax_error(cur_, "unexpected trailing input");
        return e;
    }

private:
    Expr parse_sum() {
        Expr left = parse_term();
        for (;;) {
            cur_.skip_space();
            char c = cur_.peek();
            if (c == '+' || c == '-') {
                cur_.get();
                Expr right = parse_term();
                left = Expr::binary(c == '+' ? Expr::Kind::Add : Expr::Kind::Sub, std::move(left),
                                    std::move(right));
            } else {
                return left;
            }
        }
    }

    Expr parse_term() {
        Expr left = parse_factor();
        for (;;) {
            cur_.skip_space();
            char c = cur_.peek();
            if (c == '*' || c == '/') {
                cur_.get();
                Expr right = parse_factor();
                left = Expr::binary(c == '*' ? Expr::Kind::Mul : Expr::Kind::Div, std::move(left),
                                    std::move(right));
            } else {
                return left;
            }
        }
    }

    Expr parse_factor() {
        cur_.skip_space();
        if (cur_.peek() == '-') {
            cur_.get();
            return Expr::unary(Expr::Kind::Neg, parse_factor());
        }
        return parse_primary();
    }

    Expr parse_primary() {
        cur_.skip_space();
        char c = cur_.peek();
        if (c == '(') {
            cur_.get();
            Expr e = parse_sum();
            cur_.skip_space();
            if (cur_.peek() != ')') syntax_error(cur_, "expected ')'");
            cur_.get();
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        syntax_error(cur_, std::string("unexpected character '") + c + "'");
    }

    Expr parse_number() {
        std::string lit;
        auto take_digits = [&] {
            while (std::isdigit(static_cast<unsigned char>(cur_.peek()))) lit.push_back(cur_.get());
        };
        take_digits();
        if (cur_.peek() == '.') {
            lit.push_back(cur_.get());
            take_digits();
        }
        if (cur_.peek() == 'e' || cur_.peek() == 'E') {
            lit.push_back(cur_.get());
            if (cur_.peek() == '+' || cur_.peek() == '-') lit.push_back(cur_.get());
            if (!std::isdigit(static_cast<unsigned char>(cur_.peek())))
                syntax_error(cur_, "malformed exponent");
            take_digits();
        }
        if (lit.empty() || lit == ".") syntax_error(cur_, "malformed number");
        return Expr::constant(std::strtod(lit.c_str(), nullptr));
    }

    Expr parse_ident() {
        std::string name;
        while (std::isalnum(static_cast<unsigned char>(cur_.peek())) || cur_.peek() == '_')
            name.push_back(cur_.get());
        cur_.skip_space();
        if (cur_.peek() == '(') {
            cur_.get();
            std::vector<Expr> args;
            cur_.skip_space();
            if (cur_.peek() != ')') {
                args.push_back(parse_sum());
                cur_.skip_space();
                while (cur_.peek() == ',') {
                    cur_.get();
                    args.push_back(parse_sum());
                    cur_.skip_space();
                }
            }
            if (cur_.peek() != ')') syntax_error(cur_, "expected ')' after arguments");
            cur_.get();
            if (name == "min" || name == "max") {
                if (args.size() != 2)
                    syntax_error(cur_, name + "() takes exactly 2 arguments");
                return Expr::call(name == "min" ? Expr::Kind::Min : Expr::Kind::Max, std::move(args));
            }
            if (name == "clamp") {
                if (args.size() != 3) syntax_error(cur_, "clamp() takes exactly 3 arguments");
                return Expr::call(Expr::Kind::Clamp, std::move(args));
            }
            throw Error(Errc::UnknownIdentifier, "unknown function '" + name + "'");
        }
        if (auto f = feature_from_name(name)) return Expr::feature(*f);
        if (params_.count(name)) return Expr::param_ref(name);
        throw Error(Errc::UnknownIdentifier, "unknown identifier '" + name + "'");
    }

    Cursor cur_;
    const ParamMap& params_;
};

inline std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double_or_error(const std::string& s, int line) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw Error(Errc::SyntaxError,
                    "malformed number '" + s + "' at line " + std::to_string(line) + ", column 1");
    return v;
}

}  // namespace dsl_detail

// Validates that every identifier in the policy's expressions is a known
// feature or declared param, params sit inside their ranges, and the trees
// stay within the depth budget. Used by parse and patch paths.
inline void validate_policy(const PolicySpec& p) {
    for (const auto& [n, def] : p.params) {
        if (def.min > def.max)
            throw Error(Errc::InvalidSpec, "param '" + n + "' has min > max");
        if (def.value < def.min || def.value > def.max)
            throw Error(Errc::InvalidSpec, "param '" + n + "' value outside [min, max]");
    }
    auto check_expr = [&](const Expr& e, const char* which) {
        if (e.depth() > kMaxExprDepth)
            throw Error(Errc::InvalidSpec, std::string(which) + " expression exceeds depth limit");
        e.visit([&](const Expr& n) {
            if (n.kind == Expr::Kind::Param && !p.params.count(n.param))
                throw Error(Errc::UnknownIdentifier, "unknown identifier '" + n.param + "'");
        });
    };
    check_expr(p.priority_expr, "priority");
    check_expr(p.slice_expr, "slice");
}

inline PolicySpec parse_policy(std::string_view source) {
    PolicySpec spec;
    bool have_priority = false;
    bool have_slice = false;
    std::set<std::string> seen_keys;

    int line_no = 0;
    std::size_t start = 0;
    while (start <= source.size()) {
        std::size_t nl = source.find('\n', start);
        std::string_view raw =
            source.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        start = nl == std::string_view::npos ? source.size() + 1 : nl + 1;
        ++line_no;

        std::string line = dsl_detail::trim(raw);
        if (line.empty() || line[0] == '#') continue;

        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(Errc::SyntaxError,
                        "expected 'key = value' at line " + std::to_string(line_no) + ", column 1");
        std::string key = dsl_detail::trim(line.substr(0, eq));
        std::string value = dsl_detail::trim(line.substr(eq + 1));

        if (key.rfind("param ", 0) == 0) {
            std::string pname = dsl_detail::trim(key.substr(6));
            if (pname.empty())
                throw Error(Errc::SyntaxError,
                            "missing param name at line " + std::to_string(line_no) + ", column 1");
            if (spec.params.count(pname))
                throw Error(Errc::DuplicateParam, "param '" + pname + "' declared twice");
            // value form: <num> in [<num>, <num>]
            auto in_pos = value.find(" in ");
            if (in_pos == std::string::npos)
                throw Error(Errc::SyntaxError, "param '" + pname + "' missing 'in [min, max]' at line " +
                                                   std::to_string(line_no) + ", column 1");
            std::string vstr = dsl_detail::trim(value.substr(0, in_pos));
            std::string range = dsl_detail::trim(value.substr(in_pos + 4));
            if (range.size() < 2 || range.front() != '[' || range.back() != ']')
                throw Error(Errc::SyntaxError, "param '" + pname + "' range must be [min, max] at line " +
                                                   std::to_string(line_no) + ", column 1");
            std::string inner = range.substr(1, range.size() - 2);
            auto comma = inner.find(',');
            if (comma == std::string::npos)
                throw Error(Errc::SyntaxError, "param '" + pname + "' range must be [min, max] at line " +
                                                   std::to_string(line_no) + ", column 1");
            ParamDef def;
            def.value = dsl_detail::parse_double_or_error(vstr, line_no);
            def.min = dsl_detail::parse_double_or_error(dsl_detail::trim(inner.substr(0, comma)), line_no);
            def.max = dsl_detail::parse_double_or_error(dsl_detail::trim(inner.substr(comma + 1)), line_no);
            spec.params[pname] = def;
            continue;
        }

        if (key != "param" && !seen_keys.insert(key).second)
            throw Error(Errc::SyntaxError,
                        "duplicate key '" + key + "' at line " + std::to_string(line_no) + ", column 1");

        if (key == "name") {
            spec.name = value;
        } else if (key == "description") {
            spec.description = value;
        } else if (key == "tags") {
            spec.tags.clear();
            std::size_t p = 0;
            while (p <= value.size()) {
                auto c = value.find(',', p);
                std::string tag = dsl_detail::trim(
                    value.substr(p, c == std::string::npos ? std::string::npos : c - p));
                if (!tag.empty()) spec.tags.push_back(tag);
                if (c == std::string::npos) break;
                p = c + 1;
            }
        } else if (key == "priority") {
            dsl_detail::ExprParser ep(value, line_no, spec.params);
            spec.priority_expr = ep.parse();
            have_priority = true;
        } else if (key == "slice") {
            dsl_detail::ExprParser ep(value, line_no, spec.params);
            spec.slice_expr = ep.parse();
            have_slice = true;
        } else if (key == "preemptive") {
            if (value == "true")
                spec.preemptive = true;
            else if (value == "false")
                spec.preemptive = false;
            else
                throw Error(Errc::SyntaxError, "preemptive must be true|false at line " +
                                                   std::to_string(line_no) + ", column 1");
        } else {
            throw Error(Errc::SyntaxError,
                        "unknown key '" + key + "' at line " + std::to_string(line_no) + ", column 1");
        }
    }

    if (!have_priority)
        throw Error(Errc::SyntaxError, "policy is missing a 'priority = ...' line at line " +
                                           std::to_string(line_no) + ", column 1");
    if (!have_slice) spec.slice_expr = Expr::constant(static_cast<double>(kDefaultSliceUs));
    validate_policy(spec);
    return spec;
}

// ---------------------------------------------------------------------------
// Rendering. parse(render(p)) reproduces the tree exactly, so renders are
// usable as the persisted source-of-record form.
// ---------------------------------------------------------------------------

namespace dsl_detail {

inline std::string format_double(double v) {
    if (v == static_cast<double>(static_cast<long long>(v)) && std::fabs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
        return buf;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline int precedence(Expr::Kind k) {
    switch (k) {
        case Expr::Kind::Add:
        case Expr::Kind::Sub: return 1;
        case Expr::Kind::Mul:
        case Expr::Kind::Div: return 2;
        case Expr::Kind::Neg: return 3;
        default: return 4;
    }
}

inline void render_expr_rec(const Expr& e, int min_prec, std::string& out) {
    int prec = precedence(e.kind);
    bool parens = prec < min_prec;
    if (parens) out.push_back('(');
    switch (e.kind) {
        case Expr::Kind::Const: out += format_double(e.value); break;
        case Expr::Kind::Feat: out += feature_name(e.feat); break;
        case Expr::Kind::Param: out += e.param; break;
        case Expr::Kind::Neg:
            out.push_back('-');
            render_expr_rec(e.kids[0], 4, out);
            break;
        case Expr::Kind::Add:
        case Expr::Kind::Sub:
        case Expr::Kind::Mul:
        case Expr::Kind::Div: {
            const char* op = e.kind == Expr::Kind::Add   ? " + "
                             : e.kind == Expr::Kind::Sub ? " - "
                             : e.kind == Expr::Kind::Mul ? " * "
                                                         : " / ";
            render_expr_rec(e.kids[0], prec, out);
            out += op;
            // right operand of a same-precedence chain keeps its parens so
            // left associativity reparses to the identical tree
            render_expr_rec(e.kids[1], prec + 1, out);
            break;
        }
        case Expr::Kind::Min:
        case Expr::Kind::Max:
        case Expr::Kind::Clamp: {
            out += e.kind == Expr::Kind::Min ? "min(" : e.kind == Expr::Kind::Max ? "max(" : "clamp(";
            for (std::size_t i = 0; i < e.kids.size(); ++i) {
                if (i) out += ", ";
                render_expr_rec(e.kids[i], 0, out);
            }
            out.push_back(')');
            break;
        }
    }
    if (parens) out.push_back(')');
}

}  // namespace dsl_detail

inline std::string render_expr(const Expr& e) {
    std::string out;
    dsl_detail::render_expr_rec(e, 0, out);
    return out;
}

inline std::string render_policy(const PolicySpec& p) {
    std::string out;
    out += "name = " + p.name + "\n";
    if (!p.description.empty()) out += "description = " + p.description + "\n";
    if (!p.tags.empty()) {
        out += "tags = ";
        for (std::size_t i = 0; i < p.tags.size(); ++i) {
            if (i) out += ", ";
            out += p.tags[i];
        }
        out += "\n";
    }
    for (const auto& [n, def] : p.params) {
        out += "param " + n + " = " + dsl_detail::format_double(def.value) + " in [" +
               dsl_detail::format_double(def.min) + ", " + dsl_detail::format_double(def.max) + "]\n";
    }
    out += "priority = " + render_expr(p.priority_expr) + "\n";
    out += "slice = " + render_expr(p.slice_expr) + "\n";
    out += std::string("preemptive = ") + (p.preemptive ? "true" : "false") + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Built-in policies. fair_vruntime is the fair-scheduler stand-in used as
// the baseline in every comparison.
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& builtin_names() {
    static const std::vector<std::string> names = {"fifo",        "round_robin", "fair_vruntime",
                                                   "sjf",         "ljf",         "layered_weight"};
    return names;
}

inline PolicySpec builtin(const std::string& name) {
    auto make = [](const char* src) { return parse_policy(src); };
    if (name == "fifo")
        return make(
            "name = fifo\n"
            "description = First-come first-served run-to-completion in arrival order. Simple and "
            "starvation-free, but offers no fairness across long runs.\n"
            "tags = batch, simple, arrival-order\n"
            "priority = -arrival_time\n"
            "slice = 100000\n"
            "preemptive = false\n");
    if (name == "round_robin")
        return make(
            "name = round_robin\n"
            "description = Cycles the CPU between runnable tasks by least attained service with a "
            "fixed time slice. Even sharing for uniform tasks.\n"
            "tags = timeslice, interactive, sharing\n"
            "param slice_base = 3000 in [100, 100000]\n"
            "priority = -exec_runtime\n"
            "slice = slice_base\n"
            "preemptive = true\n");
    if (name == "fair_vruntime")
        return make(
            "name = fair_vruntime\n"
            "description = Weighted fair sharing by virtual runtime, the default baseline. Good "
            "interactive latency and proportional fairness across weights.\n"
            "tags = fair, interactive, latency, baseline\n"
            "param slice_base = 3000 in [100, 100000]\n"
            "priority = -vruntime\n"
            "slice = slice_base\n"
            "preemptive = true\n");
    if (name == "sjf")
        return make(
            "name = sjf\n"
            "description = Shortest job first by expected runtime, non-preemptive. Minimizes mean "
            "completion of short tasks when runtime hints are truthful.\n"
            "tags = batch, short-first, hints\n"
            "priority = -expected_runtime\n"
            "slice = 100000\n"
            "preemptive = false\n");
    if (name == "ljf")
        return make(
            "name = ljf\n"
            "description = Longest job first by expected runtime hint, non-preemptive. Starts the "
            "dominant long job of a long tail batch immediately so it never gates the tail.\n"
            "tags = batch, longtail, long-first, hints\n"
            "priority = expected_runtime\n"
            "slice = 100000\n"
            "preemptive = false\n");
    if (name == "layered_weight")
        return make(
            "name = layered_weight\n"
            "description = Strict weight classes: higher weight always runs first, fair virtual "
            "runtime order inside a class.\n"
            "tags = layered, weight-classes, strict-priority\n"
            "param slice_base = 3000 in [100, 100000]\n"
            // 2^40 keeps weight strictly dominant over the vruntime term
            "priority = weight * 1099511627776 - vruntime\n"
            "slice = slice_base\n"
            "preemptive = true\n");
    throw Error(Errc::UnknownBuiltin, "no builtin policy named '" + name + "'");
}

// ---------------------------------------------------------------------------
// Composition from primitive fragments and patching.
// ---------------------------------------------------------------------------

struct Fragment {
    std::string name;
    Expr expr;
};

// Fragment library keyed by what a goal needs; referenced by the planner.
inline const std::vector<Fragment>& fragment_library() {
    static const std::vector<Fragment> lib = {
        {"fifo_order", Expr::unary(Expr::Kind::Neg, Expr::feature(Feature::ArrivalTime))},
        {"fair_order", Expr::unary(Expr::Kind::Neg, Expr::feature(Feature::Vruntime))},
        {"long_first", Expr::feature(Feature::ExpectedRuntime)},
        {"short_first", Expr::unary(Expr::Kind::Neg, Expr::feature(Feature::ExpectedRuntime))},
        {"aging", Expr::feature(Feature::WaitTime)},
        {"weight_bias", Expr::feature(Feature::Weight)},
    };
    return lib;
}

inline PolicySpec compose(const std::vector<Fragment>& fragments, const std::vector<double>& weights,
                          bool preemptive = false) {
    if (fragments.empty()) throw Error(Errc::EmptyComposition, "no fragments to compose");
    if (fragments.size() != weights.size())
        throw Error(Errc::EmptyComposition, "fragment and weight counts differ");

    PolicySpec spec;
    std::string provenance = "composed from:";
    std::optional<Expr> sum;
    for (std::size_t i = 0; i < fragments.size(); ++i) {
        Expr term = weights[i] == 1.0
                        ? fragments[i].expr
                        : Expr::binary(Expr::Kind::Mul, Expr::constant(weights[i]), fragments[i].expr);
        sum = sum ? Expr::binary(Expr::Kind::Add, std::move(*sum), std::move(term)) : std::move(term);
        provenance += (i ? " +" : "") + std::string(" ") + dsl_detail::format_double(weights[i]) + "*" +
                      fragments[i].name;
    }
    spec.name = "composed";
    for (const auto& f : fragments) spec.name += "_" + f.name;
    spec.description = provenance;
    spec.tags = {"composed"};
    spec.priority_expr = std::move(*sum);
    spec.preemptive = preemptive;
    if (preemptive) {
        spec.params["slice_base"] = ParamDef{static_cast<double>(kDefaultSliceUs),
                                             static_cast<double>(kSliceMinUs),
                                             static_cast<double>(kSliceMaxUs)};
        spec.slice_expr = Expr::param_ref("slice_base");
    } else {
        spec.slice_expr = Expr::constant(static_cast<double>(kSliceMaxUs));
    }
    validate_policy(spec);
    return spec;
}

struct PolicyEdit {
    enum class Target { Priority, Slice, Param };
    Target target = Target::Param;
    std::string param_name;   // Target::Param
    double param_value = 0;   // Target::Param
    std::string expr_source;  // Target::Priority / Target::Slice
};

// Applies edits and revalidates from scratch; the base spec is untouched
// if any edit fails.
inline PolicySpec apply_patch(const PolicySpec& base, const std::vector<PolicyEdit>& edits) {
    PolicySpec out = base;
    std::string summary;
    for (const auto& e : edits) {
        switch (e.target) {
            case PolicyEdit::Target::Param: {
                auto it = out.params.find(e.param_name);
                if (it == out.params.end())
                    throw Error(Errc::InvalidEdit, "no param named '" + e.param_name + "'");
                it->second.value = e.param_value;
                summary += " set " + e.param_name + "=" + dsl_detail::format_double(e.param_value) + ";";
                break;
            }
            case PolicyEdit::Target::Priority: {
                dsl_detail::ExprParser ep(e.expr_source, 1, out.params);
                out.priority_expr = ep.parse();
                summary += " priority := " + e.expr_source + ";";
                break;
            }
            case PolicyEdit::Target::Slice: {
                dsl_detail::ExprParser ep(e.expr_source, 1, out.params);
                out.slice_expr = ep.parse();
                summary += " slice := " + e.expr_source + ";";
                break;
            }
        }
    }
    out.name = base.name + "_patched";
    out.description = "patch of " + base.name + ":" + summary;
    validate_policy(out);
    return out;
}

// Re-renders the priority expression with an additive wait-time aging term;
// the standard remedy for starvation findings.
inline PolicySpec with_aging_term(const PolicySpec& base, double coefficient) {
    PolicyEdit edit;
    edit.target = PolicyEdit::Target::Priority;
    edit.expr_source = "(" + render_expr(base.priority_expr) + ") + " +
                       dsl_detail::format_double(coefficient) + " * wait_time";
    return apply_patch(base, {edit});
}

}  // namespace schedlab
