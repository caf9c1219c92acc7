#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "hbrec/errors.hpp"

namespace hbrec::harness {

/// A value from a TOML-style document: number, string, bool, or a
/// (possibly nested) array of those.
struct TomlValue {
  std::variant<double, std::string, bool, std::vector<TomlValue>> v;

  bool is_number() const { return std::holds_alternative<double>(v); }
  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_bool() const { return std::holds_alternative<bool>(v); }
  bool is_array() const { return std::holds_alternative<std::vector<TomlValue>>(v); }
};

/// Flat key -> value map; keys under `[section]` are stored as "section.key".
using TomlTable = std::map<std::string, TomlValue>;

namespace detail {

class TomlParser {
 public:
  TomlParser(const std::string& text, std::string origin) : s_(text), origin_(std::move(origin)) {}

  TomlTable parse() {
    TomlTable out;
    std::string section;
    while (true) {
      skip_blank_lines();
      if (at_end()) break;
      if (peek() == '[') {
        ++pos_;
        skip_ws();
        section = bare_key();
        skip_ws();
        expect(']');
        end_of_line();
        continue;
      }
      const std::string key = bare_key();
      skip_ws();
      expect('=');
      skip_ws();
      TomlValue value = parse_value();
      end_of_line();
      const std::string full = section.empty() ? key : section + "." + key;
      if (out.count(full)) fail("duplicate key '" + full + "'");
      out.emplace(full, std::move(value));
    }
    return out;
  }

 private:
  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[pos_]; }

  [[noreturn]] void fail(const std::string& what) const {
    std::size_t line = 1;
    for (std::size_t i = 0; i < pos_ && i < s_.size(); ++i) line += s_[i] == '\n';
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + what);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_ws() {
    while (peek() == ' ' || peek() == '\t') ++pos_;
  }

  void skip_comment() {
    if (peek() == '#')
      while (!at_end() && peek() != '\n') ++pos_;
  }

  // Whitespace, newlines and comments; used between lines and inside arrays.
  void skip_blank_lines() {
    while (!at_end()) {
      skip_ws();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') {
        ++pos_;
        continue;
      }
      break;
    }
  }

  void end_of_line() {
    skip_ws();
    skip_comment();
    if (at_end()) return;
    if (peek() == '\r') ++pos_;
    if (peek() != '\n') fail("unexpected text after value");
    ++pos_;
  }

  std::string bare_key() {
    const std::size_t start = pos_;
    while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-' || peek() == '.') ++pos_;
    if (pos_ == start) fail("expected a key");
    return s_.substr(start, pos_ - start);
  }

  TomlValue parse_value() {
    const char c = peek();
    if (c == '"') return {parse_string()};
    if (c == '[') return {parse_array()};
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return {true};
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return {false};
    }
    return {parse_number()};
  }

  std::string parse_string() {
    expect('"');
    std::string out;
    while (!at_end() && peek() != '"') {
      if (peek() == '\n') fail("unterminated string");
      if (peek() == '\\') {
        ++pos_;
        const char e = peek();
        if (e == 'n') out += '\n';
        else if (e == 't') out += '\t';
        else if (e == '"' || e == '\\') out += e;
        else fail("unsupported escape");
        ++pos_;
        continue;
      }
      out += s_[pos_++];
    }
    expect('"');
    return out;
  }

  double parse_number() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isdigit(static_cast<unsigned char>(peek())) || std::string("+-.eE_").find(peek()) != std::string::npos))
      ++pos_;
    std::string text = s_.substr(start, pos_ - start);
    std::erase(text, '_');
    if (text.empty()) fail("expected a value");
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      fail("bad number '" + text + "'");
    }
    if (used != text.size()) fail("bad number '" + text + "'");
    return v;
  }

  std::vector<TomlValue> parse_array() {
    expect('[');
    std::vector<TomlValue> out;
    skip_blank_lines();
    if (peek() == ']') {
      ++pos_;
      return out;
    }
    while (true) {
      skip_blank_lines();
      out.push_back(parse_value());
      skip_blank_lines();
      if (peek() == ',') {
        ++pos_;
        skip_blank_lines();
        if (peek() == ']') {
          ++pos_;
          return out;
        }
        continue;
      }
      expect(']');
      return out;
    }
  }

  const std::string& s_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline TomlTable parse_toml(const std::string& text, const std::string& origin = "<string>") {
  return detail::TomlParser(text, origin).parse();
}

inline TomlTable parse_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str(), path);
}

}  // namespace hbrec::harness
