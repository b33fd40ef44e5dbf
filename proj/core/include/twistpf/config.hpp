#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "twistpf/errors.hpp"

namespace twistpf {

// Flat key-value document with [sections]; a TOML-compatible subset covering
// integers, floats, booleans, quoted strings and arrays of numbers.
class KvDocument {
 public:
  using Value = std::variant<std::int64_t, double, bool, std::string, std::vector<double>>;

  static KvDocument parse_file(const std::string& path);
  static KvDocument parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;

  std::int64_t get_int(const std::string& section, const std::string& key) const;
  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::string get_string(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  std::vector<double> get_array(const std::string& section, const std::string& key) const;
  std::vector<double> get_array(const std::string& section, const std::string& key,
                                const std::vector<double>& fallback) const;

  const std::map<std::string, std::map<std::string, Value>>& sections() const {
    return sections_;
  }

 private:
  const Value* find(const std::string& section, const std::string& key) const;
  const Value& require(const std::string& section, const std::string& key) const;

  std::map<std::string, std::map<std::string, Value>> sections_;
};

}  // namespace twistpf
