#pragma once

// Minimal TOML subset: bare-key/dotted table headers, key = value pairs,
// strings, integers, floats, booleans, nested (possibly multiline) arrays,
// comments. Enough for hand-written run configs; errors carry line numbers.

#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace homobs::toml {

struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_number(line) {}
    std::size_t line_number;
};

class Value;
using Table = std::map<std::string, Value>;
using Array = std::vector<Value>;

class Value {
public:
    Value() : data_(Table{}) {}
    explicit Value(Table t) : data_(std::move(t)) {}
    explicit Value(Array a) : data_(std::move(a)) {}
    explicit Value(std::string s) : data_(std::move(s)) {}
    explicit Value(double d) : data_(d) {}
    explicit Value(std::int64_t i) : data_(i) {}
    explicit Value(bool b) : data_(b) {}

    bool is_table() const { return std::holds_alternative<Table>(data_); }
    bool is_array() const { return std::holds_alternative<Array>(data_); }
    bool is_string() const { return std::holds_alternative<std::string>(data_); }
    bool is_number() const {
        return std::holds_alternative<double>(data_) || std::holds_alternative<std::int64_t>(data_);
    }
    bool is_integer() const { return std::holds_alternative<std::int64_t>(data_); }
    bool is_bool() const { return std::holds_alternative<bool>(data_); }

    const Table& table() const { return std::get<Table>(data_); }
    Table& table() { return std::get<Table>(data_); }
    const Array& array() const { return std::get<Array>(data_); }
    const std::string& string() const { return std::get<std::string>(data_); }
    bool boolean() const { return std::get<bool>(data_); }
    double number() const {
        if (std::holds_alternative<std::int64_t>(data_))
            return static_cast<double>(std::get<std::int64_t>(data_));
        return std::get<double>(data_);
    }
    std::int64_t integer() const { return std::get<std::int64_t>(data_); }

private:
    std::variant<Table, Array, std::string, double, std::int64_t, bool> data_;
};

namespace detail {

class Parser {
public:
    explicit Parser(const std::string& text) : text_(text) {}

    Table parse() {
        Table root;
        Table* current = &root;
        while (!eof()) {
            skip_ws_and_comments_to_content();
            if (eof()) break;
            if (peek() == '[') {
                current = parse_table_header(root);
            } else {
                auto [key, value] = parse_key_value();
                if (current->count(key)) throw err("duplicate key '" + key + "'");
                current->emplace(std::move(key), std::move(value));
            }
            expect_line_end();
        }
        return root;
    }

private:
    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }
    char get() {
        const char c = text_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }
    ParseError err(const std::string& msg) const { return ParseError(msg, line_); }

    void skip_spaces() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
    }
    void skip_ws_and_comments_to_content() {
        for (;;) {
            skip_spaces();
            if (eof()) return;
            if (peek() == '#') {
                while (!eof() && peek() != '\n') ++pos_;
                continue;
            }
            if (peek() == '\n' || peek() == '\r') {
                get();
                continue;
            }
            return;
        }
    }
    void expect_line_end() {
        skip_spaces();
        if (eof()) return;
        if (peek() == '#')
            while (!eof() && peek() != '\n') ++pos_;
        if (eof()) return;
        if (peek() == '\n' || peek() == '\r') {
            get();
            return;
        }
        throw err("unexpected trailing content");
    }

    std::string parse_bare_key() {
        std::string key;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' ||
                          peek() == '-'))
            key += get();
        if (key.empty()) throw err("expected a key");
        return key;
    }

    Table* parse_table_header(Table& root) {
        get();  // '['
        Table* t = &root;
        for (;;) {
            skip_spaces();
            const std::string part = parse_bare_key();
            auto it = t->find(part);
            if (it == t->end()) it = t->emplace(part, Value(Table{})).first;
            if (!it->second.is_table()) throw err("'" + part + "' is not a table");
            t = &it->second.table();
            skip_spaces();
            if (!eof() && peek() == '.') {
                get();
                continue;
            }
            break;
        }
        if (eof() || peek() != ']') throw err("expected ']' in table header");
        get();
        return t;
    }

    std::pair<std::string, Value> parse_key_value() {
        const std::string key = parse_bare_key();
        skip_spaces();
        if (eof() || peek() != '=') throw err("expected '=' after key '" + key + "'");
        get();
        skip_spaces();
        return {key, parse_value()};
    }

    Value parse_value() {
        if (eof()) throw err("expected a value");
        const char c = peek();
        if (c == '"') return parse_string();
        if (c == '[') return parse_array();
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::string word = parse_bare_key();
            if (word == "true") return Value(true);
            if (word == "false") return Value(false);
            throw err("unknown literal '" + word + "'");
        }
        return parse_number();
    }

    Value parse_string() {
        get();  // opening quote
        std::string s;
        while (!eof() && peek() != '"') {
            char c = get();
            if (c == '\n') throw err("unterminated string");
            if (c == '\\') {
                if (eof()) throw err("dangling escape");
                const char e = get();
                switch (e) {
                    case 'n': c = '\n'; break;
                    case 't': c = '\t'; break;
                    case '"': c = '"'; break;
                    case '\\': c = '\\'; break;
                    default: throw err("unsupported escape sequence");
                }
            }
            s += c;
        }
        if (eof()) throw err("unterminated string");
        get();
        return Value(std::move(s));
    }

    Value parse_array() {
        get();  // '['
        Array arr;
        for (;;) {
            skip_array_filler();
            if (eof()) throw err("unterminated array");
            if (peek() == ']') {
                get();
                break;
            }
            arr.push_back(parse_value());
            skip_array_filler();
            if (eof()) throw err("unterminated array");
            if (peek() == ',') {
                get();
                continue;
            }
            if (peek() == ']') {
                get();
                break;
            }
            throw err("expected ',' or ']' in array");
        }
        return Value(std::move(arr));
    }

    void skip_array_filler() {
        for (;;) {
            skip_spaces();
            if (eof()) return;
            if (peek() == '#') {
                while (!eof() && peek() != '\n') ++pos_;
                continue;
            }
            if (peek() == '\n' || peek() == '\r') {
                get();
                continue;
            }
            return;
        }
    }

    Value parse_number() {
        std::string tok;
        while (!eof() && (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '+' ||
                          peek() == '-' || peek() == '.' || peek() == 'e' || peek() == 'E' ||
                          peek() == '_'))
            tok += get();
        if (tok.empty()) throw err("expected a number");
        std::string clean;
        for (char c : tok)
            if (c != '_') clean += c;
        const bool is_float = clean.find_first_of(".eE") != std::string::npos;
        try {
            std::size_t used = 0;
            if (is_float) {
                const double d = std::stod(clean, &used);
                if (used != clean.size()) throw std::invalid_argument("trailing");
                return Value(d);
            }
            const std::int64_t i = std::stoll(clean, &used);
            if (used != clean.size()) throw std::invalid_argument("trailing");
            return Value(i);
        } catch (const std::exception&) {
            throw err("malformed number '" + tok + "'");
        }
    }

    const std::string& text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
};

}  // namespace detail

inline Table parse(const std::string& text) { return detail::Parser(text).parse(); }

}  // namespace homobs::toml
