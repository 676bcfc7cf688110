#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace mst {

// Canonical key=value text: one pair per line, keys sorted, '#' comments and
// blank lines ignored on parse. Used for checkpoint headers and CLI config files.
class KvConfig {
 public:
  static KvConfig parse(std::string_view text);  // throws std::invalid_argument on a malformed line

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void set(const std::string& key, double value);
  void set(const std::string& key, long long value);

  [[nodiscard]] bool contains(const std::string& key) const { return values_.contains(key); }
  [[nodiscard]] std::optional<std::string> get(const std::string& key) const;
  [[nodiscard]] double get_double(const std::string& key) const;        // throws if missing/bad
  [[nodiscard]] long long get_int(const std::string& key) const;        // throws if missing/bad
  [[nodiscard]] std::string to_text() const;
  [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Shortest decimal text that round-trips the exact double.
std::string format_double(double value);

}  // namespace mst
