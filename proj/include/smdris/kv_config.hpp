#pragma once

// Flat "key = value" text used for configs and checkpoint headers.
// Lines starting with '#' and blank lines are ignored.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace smdris {

using KvPairs = std::vector<std::pair<std::string, std::string>>;

std::map<std::string, std::string> parse_kv_text(std::string_view text);
std::string format_kv(const KvPairs& pairs);

/// Typed reads over a parsed map; remembers which keys were consumed so that
/// callers can reject unknown keys.
class KvReader {
 public:
  explicit KvReader(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback);
  int get_int(const std::string& key, int fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback);

  // Throws std::invalid_argument listing keys never read.
  void reject_unknown(const char* context) const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

bool parse_bool(std::string_view text);

}  // namespace smdris
