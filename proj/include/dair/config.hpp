#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dair/common.hpp"

// "key = value" config text. Keys are lower-kebab-case, '#' starts a comment,
// blank lines are skipped. Parsing keeps order and rejects duplicates;
// serialization is canonical so identical settings produce identical bytes.

namespace dair {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("config line " + std::to_string(line_no) +
                        " is not 'key = value': " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw FormatError("config line " + std::to_string(line_no) + " has an empty key");
    for (const auto& kv : out)
      if (kv.first == key)
        throw FormatError("duplicate config key '" + key + "' on line " +
                          std::to_string(line_no));
    out.emplace_back(key, value);
  }
  return out;
}

inline KeyValues load_key_values(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_key_values(buf.str());
}

inline std::string serialize_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

// Fixed-format numeric rendering so canonical config text is reproducible.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw FormatError("config key '" + key + "' expects an integer, got '" + value + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw FormatError("config key '" + key + "' expects a number, got '" + value + "'");
  }
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ','))
    out.push_back(static_cast<int>(parse_int(key, detail::trim(item))));
  if (out.empty()) throw FormatError("config key '" + key + "' expects a list");
  return out;
}

inline std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace dair
