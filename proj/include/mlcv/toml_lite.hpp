#pragma once

// Minimal TOML reader covering what the run configs use: [section.path]
// headers, dotted keys, strings, integers, floats, booleans, nested arrays
// (single- or multi-line) and # comments. Errors carry line numbers.

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "mlcv/common.hpp"

namespace mlcv {

class TomlValue {
public:
    using Array = std::vector<TomlValue>;
    using Table = std::map<std::string, TomlValue>;
    using Storage = std::variant<std::monostate, std::string, long long, double, bool, Array, Table>;

    TomlValue() = default;
    explicit TomlValue(Storage v) : v_(std::move(v)) {}

    bool is_table() const { return std::holds_alternative<Table>(v_); }
    bool is_array() const { return std::holds_alternative<Array>(v_); }
    bool is_string() const { return std::holds_alternative<std::string>(v_); }
    bool is_int() const { return std::holds_alternative<long long>(v_); }
    bool is_float() const { return std::holds_alternative<double>(v_) || is_int(); }
    bool is_bool() const { return std::holds_alternative<bool>(v_); }

    Table& table() { return std::get<Table>(v_); }
    const Table& table() const { return std::get<Table>(v_); }
    const Array& array() const { return std::get<Array>(v_); }
    const std::string& str() const { return std::get<std::string>(v_); }
    long long integer() const { return std::get<long long>(v_); }
    bool boolean() const { return std::get<bool>(v_); }
    double number() const {
        if (is_int()) return static_cast<double>(std::get<long long>(v_));
        return std::get<double>(v_);
    }

    Storage v_;
};

namespace toml_detail {

inline void skip_ws(const std::string& s, std::size_t& p) {
    while (p < s.size() && (s[p] == ' ' || s[p] == '\t')) ++p;
}

inline std::string parse_basic_string(const std::string& s, std::size_t& p, std::size_t line) {
    std::string out;
    ++p;   // opening quote
    while (p < s.size() && s[p] != '"') {
        if (s[p] == '\\' && p + 1 < s.size()) {
            ++p;
            switch (s[p]) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default:
                    throw ParseError("toml line " + std::to_string(line) + ": bad escape \\" +
                                     s[p]);
            }
            ++p;
        } else {
            out += s[p++];
        }
    }
    if (p >= s.size())
        throw ParseError("toml line " + std::to_string(line) + ": unterminated string");
    ++p;   // closing quote
    return out;
}

inline TomlValue parse_value(const std::string& s, std::size_t& p, std::size_t line);

inline TomlValue parse_array(const std::string& s, std::size_t& p, std::size_t line) {
    TomlValue::Array arr;
    ++p;   // '['
    for (;;) {
        skip_ws(s, p);
        if (p < s.size() && s[p] == ']') {
            ++p;
            break;
        }
        if (p >= s.size())
            throw ParseError("toml line " + std::to_string(line) + ": unterminated array");
        arr.push_back(parse_value(s, p, line));
        skip_ws(s, p);
        if (p < s.size() && s[p] == ',') {
            ++p;
            continue;
        }
        if (p < s.size() && s[p] == ']') {
            ++p;
            break;
        }
        throw ParseError("toml line " + std::to_string(line) + ": expected ',' or ']' in array");
    }
    return TomlValue{TomlValue::Storage{std::move(arr)}};
}

inline TomlValue parse_value(const std::string& s, std::size_t& p, std::size_t line) {
    skip_ws(s, p);
    if (p >= s.size()) throw ParseError("toml line " + std::to_string(line) + ": missing value");
    const char c = s[p];
    if (c == '"') return TomlValue{TomlValue::Storage{parse_basic_string(s, p, line)}};
    if (c == '[') return parse_array(s, p, line);
    // bare token: bool or number
    std::size_t start = p;
    while (p < s.size() && s[p] != ',' && s[p] != ']' && s[p] != ' ' && s[p] != '\t' &&
           s[p] != '#')
        ++p;
    const std::string tok = s.substr(start, p - start);
    if (tok == "true") return TomlValue{TomlValue::Storage{true}};
    if (tok == "false") return TomlValue{TomlValue::Storage{false}};
    const bool int_like = tok.find_first_not_of("+-0123456789_") == std::string::npos &&
                          tok.find_first_of("0123456789") != std::string::npos;
    try {
        std::string clean = tok;
        std::erase(clean, '_');
        if (int_like) return TomlValue{TomlValue::Storage{static_cast<long long>(std::stoll(clean))}};
        std::size_t used = 0;
        const double d = std::stod(clean, &used);
        if (used != clean.size()) throw std::invalid_argument(tok);
        return TomlValue{TomlValue::Storage{d}};
    } catch (const std::exception&) {
        throw ParseError("toml line " + std::to_string(line) + ": bad value '" + tok + "'");
    }
}

inline std::vector<std::string> split_key_path(const std::string& key, std::size_t line) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : key) {
        if (c == '.') {
            if (cur.empty())
                throw ParseError("toml line " + std::to_string(line) + ": empty key segment");
            parts.push_back(cur);
            cur.clear();
        } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
            cur += c;
        } else {
            throw ParseError("toml line " + std::to_string(line) + ": bad key character '" +
                             std::string(1, c) + "'");
        }
    }
    if (cur.empty()) throw ParseError("toml line " + std::to_string(line) + ": empty key");
    parts.push_back(cur);
    return parts;
}

inline TomlValue* descend(TomlValue& root, const std::vector<std::string>& path,
                          std::size_t line) {
    TomlValue* node = &root;
    for (const std::string& part : path) {
        if (!node->is_table())
            throw ParseError("toml line " + std::to_string(line) + ": key path crosses a non-table");
        auto [it, inserted] =
            node->table().try_emplace(part, TomlValue{TomlValue::Storage{TomlValue::Table{}}});
        node = &it->second;
    }
    return node;
}

// Strip a trailing comment, respecting strings.
inline std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

inline int bracket_balance(const std::string& s) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
        if (in_string) continue;
        if (s[i] == '[') ++depth;
        if (s[i] == ']') --depth;
    }
    return depth;
}

}  // namespace toml_detail

inline TomlValue parse_toml(const std::string& text) {
    using namespace toml_detail;
    TomlValue root{TomlValue::Storage{TomlValue::Table{}}};
    TomlValue* current = &root;

    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_comment(line);
        std::size_t p = 0;
        skip_ws(line, p);
        if (p >= line.size()) continue;

        if (line[p] == '[') {
            std::size_t close = line.find(']', p);
            if (close == std::string::npos || line.find("[[", p) == p)
                throw ParseError("toml line " + std::to_string(lineno) + ": bad table header");
            const std::string name = line.substr(p + 1, close - p - 1);
            current = descend(root, split_key_path(name, lineno), lineno);
            p = close + 1;
            skip_ws(line, p);
            if (p < line.size())
                throw ParseError("toml line " + std::to_string(lineno) +
                                 ": trailing text after table header");
            continue;
        }

        const std::size_t eq = line.find('=', p);
        if (eq == std::string::npos)
            throw ParseError("toml line " + std::to_string(lineno) + ": expected key = value");
        std::string key = line.substr(p, eq - p);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();

        std::string value_text = line.substr(eq + 1);
        // multi-line arrays: keep appending lines until brackets balance
        int depth = bracket_balance(value_text);
        const std::size_t value_line = lineno;
        while (depth > 0 && std::getline(in, line)) {
            ++lineno;
            value_text += ' ';
            value_text += strip_comment(line);
            depth = bracket_balance(value_text);
        }
        if (depth != 0)
            throw ParseError("toml line " + std::to_string(value_line) + ": unbalanced brackets");

        const auto path = split_key_path(key, value_line);
        TomlValue* slot = current;
        if (path.size() > 1)
            slot = descend(*current, {path.begin(), path.end() - 1}, value_line);
        std::size_t vp = 0;
        TomlValue parsed = parse_value(value_text, vp, value_line);
        skip_ws(value_text, vp);
        if (vp < value_text.size())
            throw ParseError("toml line " + std::to_string(value_line) +
                             ": trailing text after value");
        auto [it, inserted] = slot->table().try_emplace(path.back(), std::move(parsed));
        if (!inserted)
            throw ParseError("toml line " + std::to_string(value_line) + ": duplicate key '" +
                             path.back() + "'");
    }
    return root;
}

inline TomlValue parse_toml_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_toml(ss.str());
}

// "a.b.c=value" applied onto a parsed tree (value in TOML syntax).
inline void apply_toml_override(TomlValue& root, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw InvalidArgumentError("--set needs key=value, got '" + assignment + "'");
    std::string key = assignment.substr(0, eq);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    const auto path = toml_detail::split_key_path(key, 0);
    TomlValue* slot = &root;
    if (path.size() > 1) slot = toml_detail::descend(root, {path.begin(), path.end() - 1}, 0);
    std::string value_text = assignment.substr(eq + 1);
    std::size_t vp = 0;
    TomlValue parsed = toml_detail::parse_value(value_text, vp, 0);
    toml_detail::skip_ws(value_text, vp);
    if (vp < value_text.size())
        throw InvalidArgumentError("--set " + assignment + ": trailing text after value");
    slot->table()[path.back()] = std::move(parsed);
}

}  // namespace mlcv
