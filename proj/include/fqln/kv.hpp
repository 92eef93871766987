#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fqln/error.hpp"

namespace fqln {

// key=value text used by checkpoints, config files, and run manifests.
// '#' starts a comment, blank lines are ignored, keys are unique.

inline std::string kv_trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::map<std::string, std::string> parse_kv_text(const std::string& text,
                                                        const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    line = kv_trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = kv_trim(line.substr(0, eq));
    std::string val = kv_trim(line.substr(eq + 1));
    if (key.empty())
      throw FormatError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, val).second)
      throw FormatError(origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
  }
  return out;
}

inline std::string render_kv(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

inline std::map<std::string, std::string> load_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_kv_text(buf.str(), path);
}

// Shortest decimal that round-trips a float / double exactly.
inline std::string fmt_f32(float v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

inline std::string fmt_f64(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace fqln
