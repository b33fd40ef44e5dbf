#include "twistpf/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "twistpf/errors.hpp"

namespace twistpf {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool parse_number(const std::string& text, double& out) {
  const char* begin = text.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + text.size() && end != begin;
}

bool is_integer_literal(const std::string& text) {
  if (text.empty()) return false;
  std::size_t i = (text[0] == '+' || text[0] == '-') ? 1 : 0;
  if (i == text.size()) return false;
  for (; i < text.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) return false;
  }
  return true;
}

KvDocument::Value parse_value(const std::string& qualified_key, const std::string& raw) {
  const std::string text = trim(raw);
  if (text.empty()) throw ConfigError(qualified_key, "empty value");

  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') {
      throw ConfigError(qualified_key, "unterminated string literal");
    }
    return text.substr(1, text.size() - 2);
  }
  if (text == "true") return true;
  if (text == "false") return false;
  if (text.front() == '[') {
    if (text.back() != ']') throw ConfigError(qualified_key, "unterminated array literal");
    std::vector<double> values;
    std::stringstream ss(text.substr(1, text.size() - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string entry = trim(item);
      if (entry.empty()) continue;
      double v;
      if (!parse_number(entry, v)) {
        throw ConfigError(qualified_key, "array element '" + entry + "' is not a number");
      }
      values.push_back(v);
    }
    return values;
  }
  if (is_integer_literal(text)) {
    return static_cast<std::int64_t>(std::strtoll(text.c_str(), nullptr, 10));
  }
  double v;
  if (parse_number(text, v)) return v;
  throw ConfigError(qualified_key, "cannot parse value '" + text + "'");
}

}  // namespace

KvDocument KvDocument::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str(), path);
}

KvDocument KvDocument::parse_string(const std::string& text, const std::string& origin) {
  KvDocument doc;
  std::stringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no), "malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      doc.sections_[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no), "expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no), "empty key");
    }
    doc.sections_[section][key] = parse_value(section + "." + key, line.substr(eq + 1));
  }
  return doc;
}

const KvDocument::Value* KvDocument::find(const std::string& section,
                                          const std::string& key) const {
  const auto sec = sections_.find(section);
  if (sec == sections_.end()) return nullptr;
  const auto it = sec->second.find(key);
  return it == sec->second.end() ? nullptr : &it->second;
}

const KvDocument::Value& KvDocument::require(const std::string& section,
                                             const std::string& key) const {
  const Value* v = find(section, key);
  if (v == nullptr) throw ConfigError(section + "." + key, "missing required key");
  return *v;
}

bool KvDocument::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::int64_t KvDocument::get_int(const std::string& section, const std::string& key) const {
  const Value& v = require(section, key);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  throw ConfigError(section + "." + key, "expected an integer");
}

std::int64_t KvDocument::get_int(const std::string& section, const std::string& key,
                                 std::int64_t fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

double KvDocument::get_double(const std::string& section, const std::string& key) const {
  const Value& v = require(section, key);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw ConfigError(section + "." + key, "expected a number");
}

double KvDocument::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

bool KvDocument::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  const Value& v = require(section, key);
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  throw ConfigError(section + "." + key, "expected true or false");
}

std::string KvDocument::get_string(const std::string& section, const std::string& key) const {
  const Value& v = require(section, key);
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw ConfigError(section + "." + key, "expected a string");
}

std::string KvDocument::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
  return has(section, key) ? get_string(section, key) : fallback;
}

std::vector<double> KvDocument::get_array(const std::string& section,
                                          const std::string& key) const {
  const Value& v = require(section, key);
  if (const auto* a = std::get_if<std::vector<double>>(&v)) return *a;
  if (const auto* d = std::get_if<double>(&v)) return {*d};
  if (const auto* i = std::get_if<std::int64_t>(&v)) return {static_cast<double>(*i)};
  throw ConfigError(section + "." + key, "expected an array of numbers");
}

std::vector<double> KvDocument::get_array(const std::string& section, const std::string& key,
                                          const std::vector<double>& fallback) const {
  return has(section, key) ? get_array(section, key) : fallback;
}

}  // namespace twistpf
