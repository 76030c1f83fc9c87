#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace enda {

// Flat `section.key = value` text configuration. Every key read is
// marked consumed; require_fully_consumed() rejects unknown keys.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text);

  // Inserts or overrides one entry ("key=value" form used by CLI --set).
  void set(const std::string& key, const std::string& value);
  void set_assignment(const std::string& key_eq_value);

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::optional<std::string> get_optional(const std::string& key) const;

  std::vector<std::string> unconsumed() const;
  void require_fully_consumed() const;  // throws listing leftover keys

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace enda
