// Run configuration: a small TOML subset, MARSDUST_ env overrides, and the
// config_resolved.json snapshot every artifact directory carries.
//
// Precedence, lowest to highest: file < environment < explicit set() calls
// (the CLI uses set() for command-line flags). Environment overrides are
// consulted at lookup time: get("train.epochs") checks MARSDUST_TRAIN_EPOCHS
// before the stored value, so a key never read is never overridden.
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "marsdust/common.hpp"

namespace marsdust {

using TomlValue = std::variant<std::string, long long, double, bool>;

namespace detail {

inline std::string toml_kind(const TomlValue& v) {
  switch (v.index()) {
    case 0: return "string";
    case 1: return "integer";
    case 2: return "float";
    default: return "boolean";
  }
}

inline bool valid_bare_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.')
      return false;
  return k.front() != '.' && k.back() != '.' && k.find("..") == std::string::npos;
}

// Strips a trailing comment, respecting '#' inside double quotes.
inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (c == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

inline std::string parse_basic_string(const std::string& raw, const std::string& where) {
  if (raw.size() < 2 || raw.back() != '"')
    throw ParseError(where + ": unterminated string " + raw);
  std::string out;
  for (size_t i = 1; i + 1 < raw.size(); ++i) {
    char c = raw[i];
    if (c != '\\') {
      out += c;
      continue;
    }
    if (i + 2 >= raw.size()) throw ParseError(where + ": dangling escape");
    char e = raw[++i];
    switch (e) {
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      default: throw ParseError(where + ": unsupported escape \\" + std::string(1, e));
    }
  }
  return out;
}

inline std::optional<long long> parse_toml_int(std::string s) {
  s.erase(std::remove(s.begin(), s.end(), '_'), s.end());
  if (s.empty()) return std::nullopt;
  size_t pos = 0;
  // Reject floats ("1.5", "1e3") and hex/octal, which strtoll would half-eat.
  for (size_t i = s[0] == '+' || s[0] == '-' ? 1 : 0; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
  try {
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::optional<double> parse_toml_float(std::string s) {
  s.erase(std::remove(s.begin(), s.end(), '_'), s.end());
  if (s.empty()) return std::nullopt;
  size_t pos = 0;
  try {
    double v = std::stod(s, &pos);
    if (pos != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline TomlValue parse_value(const std::string& raw, const std::string& where) {
  if (!raw.empty() && raw.front() == '"') return parse_basic_string(raw, where);
  if (raw == "true") return true;
  if (raw == "false") return false;
  if (!raw.empty() && (raw.front() == '[' || raw.front() == '{'))
    throw ParseError(where + ": arrays and inline tables are not supported");
  if (auto i = parse_toml_int(raw)) return *i;
  if (auto d = parse_toml_float(raw)) return *d;
  throw ParseError(where + ": cannot parse value " + raw);
}

}  // namespace detail

// Flat dotted-key view of a TOML document. Only the subset the tool needs:
// [table] headers, key = value lines, strings/integers/floats/booleans,
// and # comments. Arrays, inline tables, and multi-line strings are rejected.
class Config {
 public:
  Config() = default;

  static Config parse_toml_text(const std::string& text,
                                const std::string& origin = "<string>") {
    Config cfg;
    std::istringstream in(text);
    std::string line, prefix;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string where = origin + ":" + std::to_string(lineno);
      std::string body = trim(detail::strip_comment(line));
      if (body.empty()) continue;
      if (body.front() == '[') {
        if (body.size() < 2 || body.back() != ']')
          throw ParseError(where + ": malformed table header " + body);
        std::string name = trim(body.substr(1, body.size() - 2));
        if (!detail::valid_bare_key(name))
          throw ParseError(where + ": bad table name [" + name + "]");
        prefix = name + ".";
        continue;
      }
      size_t eq = std::string::npos;
      bool quoted = false;
      for (size_t i = 0; i < body.size(); ++i) {
        if (body[i] == '"' && (i == 0 || body[i - 1] != '\\')) quoted = !quoted;
        if (body[i] == '=' && !quoted) {
          eq = i;
          break;
        }
      }
      if (eq == std::string::npos)
        throw ParseError(where + ": expected key = value, got " + body);
      std::string key = trim(body.substr(0, eq));
      std::string raw = trim(body.substr(eq + 1));
      if (!detail::valid_bare_key(key)) throw ParseError(where + ": bad key " + key);
      if (raw.empty()) throw ParseError(where + ": missing value for " + key);
      std::string full = prefix + key;
      if (cfg.values_.count(full))
        throw ParseError(where + ": duplicate key " + full);
      cfg.values_.emplace(full, detail::parse_value(raw, where));
    }
    return cfg;
  }

  static Config load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_toml_text(buf.str(), path.string());
  }

  // Flag overrides; value parsed with the TOML value grammar, bare words
  // falling back to strings so `--set dataset.root=/data` works unquoted.
  void set(const std::string& key, TomlValue v) { values_[key] = std::move(v); }
  void set_raw(const std::string& key, const std::string& raw) {
    require(detail::valid_bare_key(key), "config: bad key " + key);
    try {
      values_[key] = detail::parse_value(raw, "<override>");
    } catch (const ParseError&) {
      values_[key] = raw;
    }
  }

  bool has(const std::string& key) const {
    return env_override(key).has_value() || values_.count(key) > 0;
  }

  std::string get_str(const std::string& key, const std::string& def) const {
    if (auto env = env_override(key)) return *env;
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    if (const auto* s = std::get_if<std::string>(&it->second)) return *s;
    throw ConfigError("config: " + key + " is " + detail::toml_kind(it->second) +
                      ", expected string");
  }

  long long get_int(const std::string& key, long long def) const {
    if (auto env = env_override(key)) {
      auto v = detail::parse_toml_int(*env);
      if (!v) throw ConfigError("config: " + env_name(key) + "=" + *env + " is not an integer");
      return *v;
    }
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    if (const auto* i = std::get_if<long long>(&it->second)) return *i;
    throw ConfigError("config: " + key + " is " + detail::toml_kind(it->second) +
                      ", expected integer");
  }

  double get_float(const std::string& key, double def) const {
    if (auto env = env_override(key)) {
      auto v = detail::parse_toml_float(*env);
      if (!v) throw ConfigError("config: " + env_name(key) + "=" + *env + " is not a number");
      return *v;
    }
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    if (const auto* i = std::get_if<long long>(&it->second)) return double(*i);
    if (const auto* d = std::get_if<double>(&it->second)) return *d;
    throw ConfigError("config: " + key + " is " + detail::toml_kind(it->second) +
                      ", expected number");
  }

  bool get_bool(const std::string& key, bool def) const {
    if (auto env = env_override(key)) {
      if (*env == "true" || *env == "1") return true;
      if (*env == "false" || *env == "0") return false;
      throw ConfigError("config: " + env_name(key) + "=" + *env + " is not a boolean");
    }
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    if (const auto* b = std::get_if<bool>(&it->second)) return *b;
    throw ConfigError("config: " + key + " is " + detail::toml_kind(it->second) +
                      ", expected boolean");
  }

  // Every stored key with environment overrides folded in, nested by dots.
  nlohmann::json resolved() const {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [key, val] : values_) {
      nlohmann::json* node = &out;
      std::istringstream parts(key);
      std::string part;
      std::vector<std::string> path;
      while (std::getline(parts, part, '.')) path.push_back(part);
      for (size_t i = 0; i + 1 < path.size(); ++i) node = &(*node)[path[i]];
      (*node)[path.back()] = resolved_value(key, val);
    }
    return out;
  }

  static std::string env_name(const std::string& key) {
    std::string name = "MARSDUST_";
    for (char c : key)
      name += c == '.' || c == '-' ? '_'
                                   : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name;
  }

 private:
  std::optional<std::string> env_override(const std::string& key) const {
    const char* v = std::getenv(env_name(key).c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  }

  nlohmann::json resolved_value(const std::string& key, const TomlValue& stored) const {
    if (auto env = env_override(key)) {
      // Keep the stored value's type where the override parses as one.
      switch (stored.index()) {
        case 1:
          if (auto i = detail::parse_toml_int(*env)) return *i;
          break;
        case 2:
          if (auto d = detail::parse_toml_float(*env)) return *d;
          break;
        case 3:
          if (*env == "true" || *env == "1") return true;
          if (*env == "false" || *env == "0") return false;
          break;
        default: break;
      }
      return *env;
    }
    return std::visit([](const auto& v) { return nlohmann::json(v); }, stored);
  }

  std::map<std::string, TomlValue> values_;
};

// The reproduction snapshot: command line plus the fully resolved config.
inline void write_config_resolved(const fs::path& dir, const std::string& command,
                                  const std::vector<std::string>& argv,
                                  const Config& cfg) {
  nlohmann::json doc;
  doc["command"] = command;
  doc["argv"] = argv;
  doc["config"] = cfg.resolved();
  fs::create_directories(dir);
  std::ofstream out(dir / "config_resolved.json");
  if (!out) throw IoError("cannot write " + (dir / "config_resolved.json").string());
  out << doc.dump(2) << "\n";
}

}  // namespace marsdust
