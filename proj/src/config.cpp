#include "swinvftr/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace swinvftr::inline SWINVFTR_PRECISION {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path);
}

std::string canonical_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

namespace kv {

int64_t to_int(const std::string& key, const std::string& value) {
  int64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("key '" + key + "': expected integer, got '" + value + "'");
  }
  return v;
}

uint64_t to_uint(const std::string& key, const std::string& value) {
  uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("key '" + key + "': expected unsigned integer, got '" + value + "'");
  }
  return v;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected number, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + value + "'");
}

std::vector<int64_t> to_int_list(const std::string& key, const std::string& value) {
  std::vector<int64_t> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_int(key, trim(item)));
  if (out.empty()) throw ConfigError("key '" + key + "': expected comma-separated integers");
  return out;
}

Dims3 to_dims3(const std::string& key, const std::string& value) {
  const auto list = to_int_list(key, value);
  if (list.size() == 1) return {list[0], list[0], list[0]};
  if (list.size() != 3) throw ConfigError("key '" + key + "': expected 1 or 3 integers, got '" + value + "'");
  return {list[0], list[1], list[2]};
}

std::string from_bool(bool v) { return v ? "true" : "false"; }

std::string from_list(const std::vector<int64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string from_dims3(const Dims3& v) { return from_list({v[0], v[1], v[2]}); }

std::string from_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace kv

}  // namespace swinvftr
