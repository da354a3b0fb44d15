#pragma once

#include <map>
#include <string>
#include <vector>

#include "swinvftr/tensor.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

/// Flat `key = value` configuration. Blank lines and lines starting with '#'
/// are ignored; a key may appear once.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text, const std::string& source = "<config>");
KeyValues read_key_values(const std::string& path);
/// Canonical form: "key=value\n" per entry in key order.
std::string canonical_key_values(const KeyValues& kv);

namespace kv {

int64_t to_int(const std::string& key, const std::string& value);
uint64_t to_uint(const std::string& key, const std::string& value);
double to_double(const std::string& key, const std::string& value);
bool to_bool(const std::string& key, const std::string& value);
std::vector<int64_t> to_int_list(const std::string& key, const std::string& value);
Dims3 to_dims3(const std::string& key, const std::string& value);
std::string from_bool(bool v);
std::string from_list(const std::vector<int64_t>& v);
std::string from_dims3(const Dims3& v);
std::string from_double(double v);

}  // namespace kv

}  // namespace swinvftr
