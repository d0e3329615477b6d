#pragma once

// TOML subset: [section] and [section.sub] headers, `key = value` pairs with
// strings, integers, floats, booleans and flat arrays of those, `#` comments.
// Parsed into a JSON object so stages can share one representation.

#include <json.hpp>

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"

namespace sitadda {

namespace detail {

inline std::string trim(std::string_view s)
{
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

/// Drops a trailing comment that is not inside a string.
inline std::string strip_comment(const std::string& line)
{
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quote == 0 && (c == '"' || c == '\'')) quote = c;
        else if (c == quote && (quote == '\'' || line[i - 1] != '\\')) quote = 0;
        else if (c == '#' && quote == 0) return line.substr(0, i);
    }
    return line;
}

inline bool valid_key(const std::string& k)
{
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    return true;
}

class ValueParser {
public:
    ValueParser(std::string_view text, int line) : s_(text), line_(line) {}

    nlohmann::json parse()
    {
        auto v = value();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing characters after value");
        return v;
    }

private:
    [[noreturn]] void fail(const std::string& what) const
    {
        throw ConfigError("config line " + std::to_string(line_) + ": " + what);
    }

    void skip_ws()
    {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    nlohmann::json value()
    {
        skip_ws();
        if (pos_ >= s_.size()) fail("missing value");
        const char c = s_[pos_];
        if (c == '"') return string();
        if (c == '\'') return literal();
        if (c == '[') return array();
        return scalar();
    }

    nlohmann::json string()
    {
        std::string out;
        ++pos_;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
                const char e = s_[++pos_];
                out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
            } else {
                out += s_[pos_];
            }
            ++pos_;
        }
        if (pos_ >= s_.size()) fail("unterminated string");
        ++pos_;
        return out;
    }

    // Single-quoted: no escapes.
    nlohmann::json literal()
    {
        const auto end = s_.find('\'', ++pos_);
        if (end == std::string_view::npos) fail("unterminated string");
        std::string out(s_.substr(pos_, end - pos_));
        pos_ = end + 1;
        return out;
    }

    nlohmann::json array()
    {
        ++pos_;
        nlohmann::json arr = nlohmann::json::array();
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
            ++pos_;
            return arr;
        }
        while (true) {
            arr.push_back(value());
            skip_ws();
            if (pos_ >= s_.size()) fail("unterminated array");
            if (s_[pos_] == ',') {
                ++pos_;
                skip_ws();
                if (pos_ < s_.size() && s_[pos_] == ']') {
                    ++pos_;
                    return arr;
                }
                continue;
            }
            if (s_[pos_] == ']') {
                ++pos_;
                return arr;
            }
            fail("expected ',' or ']' in array");
        }
    }

    nlohmann::json scalar()
    {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' &&
               !std::isspace(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
        std::string tok(s_.substr(start, pos_ - start));
        if (tok == "true") return true;
        if (tok == "false") return false;
        std::string clean;
        for (char ch : tok)
            if (ch != '_') clean += ch;
        if (clean.empty()) fail("missing value");
        std::int64_t i = 0;
        auto [p, ec] = std::from_chars(clean.data(), clean.data() + clean.size(), i);
        if (ec == std::errc() && p == clean.data() + clean.size()) return i;
        double d = 0.0;
        auto [p2, ec2] = std::from_chars(clean.data(), clean.data() + clean.size(), d);
        if (ec2 == std::errc() && p2 == clean.data() + clean.size()) return d;
        fail("cannot parse value '" + tok + "'");
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    int line_;
};

} // namespace detail

/// Parses a single TOML-style scalar or array (also used for flag overrides).
/// Bare words that are not numbers or booleans are taken as strings.
inline nlohmann::json parse_config_value(const std::string& text)
{
    try {
        return detail::ValueParser(text, 0).parse();
    } catch (const ConfigError&) {
        return detail::trim(text);
    }
}

inline nlohmann::json parse_config(std::istream& in)
{
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* section = &root;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = detail::trim(detail::strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": malformed section header");
            const std::string name = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            section = &root;
            std::stringstream parts(name);
            std::string part;
            while (std::getline(parts, part, '.')) {
                part = detail::trim(part);
                if (!detail::valid_key(part)) throw ConfigError("config line " + std::to_string(line_no) + ": bad section name '" + name + "'");
                auto& child = (*section)[part];
                if (child.is_null()) child = nlohmann::json::object();
                if (!child.is_object()) throw ConfigError("config line " + std::to_string(line_no) + ": '" + part + "' is not a table");
                section = &child;
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        if (!detail::valid_key(key)) throw ConfigError("config line " + std::to_string(line_no) + ": bad key '" + key + "'");
        if (section->contains(key)) throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        (*section)[key] = detail::ValueParser(std::string_view(line).substr(eq + 1), line_no).parse();
    }
    return root;
}

inline nlohmann::json parse_config_text(const std::string& text)
{
    std::istringstream is(text);
    return parse_config(is);
}

inline nlohmann::json load_config(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file '" + path.string() + "'");
    return parse_config(is);
}

/// Applies "section.key=value" overrides.
inline void apply_override(nlohmann::json& cfg, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like section.key=value: '" + assignment + "'");
    nlohmann::json* node = &cfg;
    std::stringstream parts(detail::trim(std::string_view(assignment).substr(0, eq)));
    std::string part, last;
    std::vector<std::string> path;
    while (std::getline(parts, part, '.')) path.push_back(detail::trim(part));
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        auto& child = (*node)[path[i]];
        if (child.is_null()) child = nlohmann::json::object();
        if (!child.is_object()) throw ConfigError("override path '" + path[i] + "' is not a table");
        node = &child;
    }
    (*node)[path.back()] = parse_config_value(assignment.substr(eq + 1));
}

/// Typed access to a parsed config with dotted paths.
class ConfigView {
public:
    explicit ConfigView(const nlohmann::json& j) : j_(&j) {}

    [[nodiscard]] const nlohmann::json* find(const std::string& dotted) const
    {
        const nlohmann::json* node = j_;
        std::stringstream parts(dotted);
        std::string part;
        while (std::getline(parts, part, '.')) {
            if (!node->is_object() || !node->contains(part)) return nullptr;
            node = &(*node)[part];
        }
        return node;
    }

    [[nodiscard]] bool has(const std::string& dotted) const { return find(dotted) != nullptr; }

    template <class T>
    [[nodiscard]] T get(const std::string& dotted, const T& fallback) const
    {
        const auto* n = find(dotted);
        return n ? convert<T>(*n, dotted) : fallback;
    }

    template <class T>
    [[nodiscard]] T require(const std::string& dotted) const
    {
        const auto* n = find(dotted);
        if (!n) throw ConfigError("missing config key '" + dotted + "'");
        return convert<T>(*n, dotted);
    }

private:
    template <class T>
    static T convert(const nlohmann::json& n, const std::string& key)
    {
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!n.is_number()) throw ConfigError("");
            }
            return n.get<T>();
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' has the wrong type");
        }
    }

    const nlohmann::json* j_;
};

} // namespace sitadda
