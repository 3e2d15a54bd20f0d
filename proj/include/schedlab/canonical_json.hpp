#pragma once

#include <cstdio>
#include <string>

#include <json.hpp>

namespace schedlab {

using json = nlohmann::json;

// Canonical JSON rendering: object keys sorted (nlohmann::json already
// stores objects sorted), integers emitted as integers, reals fixed to
// 6 decimal digits. This form is the input for hashing and signing, so
// it must stay stable across platforms.
namespace detail {

inline void canonical_escape(const std::string& s, std::string& out) {
    out.push_back('"');
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out.push_back(static_cast<char>(c));
                }
        }
    }
    out.push_back('"');
}

inline void canonical_dump_rec(const json& j, std::string& out) {
    switch (j.type()) {
        case json::value_t::null: out += "null"; break;
        case json::value_t::boolean: out += j.get<bool>() ? "true" : "false"; break;
        case json::value_t::number_integer: {
            out += std::to_string(j.get<std::int64_t>());
            break;
        }
        case json::value_t::number_unsigned: {
            out += std::to_string(j.get<std::uint64_t>());
            break;
        }
        case json::value_t::number_float: {
            double v = j.get<double>();
            if (v == 0.0) v = 0.0;  // normalize -0
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.6f", v);
            out += buf;
            break;
        }
        case json::value_t::string:
            canonical_escape(j.get_ref<const std::string&>(), out);
            break;
        case json::value_t::array: {
            out.push_back('[');
            bool first = true;
            for (const auto& el : j) {
                if (!first) out.push_back(',');
                first = false;
                canonical_dump_rec(el, out);
            }
            out.push_back(']');
            break;
        }
        case json::value_t::object: {
            out.push_back('{');
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out.push_back(',');
                first = false;
                canonical_escape(it.key(), out);
                out.push_back(':');
                canonical_dump_rec(it.value(), out);
            }
            out.push_back('}');
            break;
        }
        default: out += "null"; break;
    }
}

}  // namespace detail

inline std::string canonical_dump(const json& j) {
    std::string out;
    out.reserve(256);
    detail::canonical_dump_rec(j, out);
    return out;
}

}  // namespace schedlab
