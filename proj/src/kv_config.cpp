#include "smdris/kv_config.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace smdris {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    }
    if (!out.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

std::string format_kv(const KvPairs& pairs) {
  std::ostringstream os;
  for (const auto& [k, v] : pairs) os << k << " = " << v << '\n';
  return os.str();
}

bool parse_bool(std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("cannot parse boolean '" + std::string(text) + "'");
}

std::string KvReader::get_string(const std::string& key, const std::string& fallback) {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_.insert(key);
  return it->second;
}

int KvReader::get_int(const std::string& key, int fallback) {
  return has(key) ? parse_number<int>(key, get_string(key, "")) : fallback;
}

std::uint64_t KvReader::get_u64(const std::string& key, std::uint64_t fallback) {
  return has(key) ? parse_number<std::uint64_t>(key, get_string(key, "")) : fallback;
}

double KvReader::get_double(const std::string& key, double fallback) {
  if (!has(key)) return fallback;
  const std::string text = get_string(key, "");
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + text + "'");
  }
}

bool KvReader::get_bool(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  try {
    return parse_bool(get_string(key, ""));
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("config key '" + key + "': expected a boolean");
  }
}

std::vector<int> KvReader::get_int_list(const std::string& key, const std::vector<int>& fallback) {
  if (!has(key)) return fallback;
  const std::string text = get_string(key, "");
  std::vector<int> out;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string item(trim(rest.substr(0, comma)));
    if (!item.empty()) out.push_back(parse_number<int>(key, item));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
  }
  return out;
}

void KvReader::reject_unknown(const char* context) const {
  std::string unknown;
  for (const auto& [k, v] : values_) {
    if (used_.count(k) == 0) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) {
    throw std::invalid_argument(std::string(context) + ": unknown keys: " + unknown);
  }
}

}  // namespace smdris
