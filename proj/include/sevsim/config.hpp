#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "sevsim/backend.hpp"
#include "sevsim/errors.hpp"
#include "sevsim/persona.hpp"

namespace sevsim {

namespace toml {

// Minimal TOML subset: [dotted.tables], key = value with strings, integers,
// floats, booleans, and one-dimensional arrays. Enough for run configs; not a
// general TOML implementation.

using Value = std::variant<std::string, std::int64_t, double, bool, std::vector<std::string>>;

class Document {
 public:
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key) const {
    return expect<std::string>(key, "string");
  }
  std::int64_t get_int(const std::string& key) const {
    return expect<std::int64_t>(key, "integer");
  }
  double get_double(const std::string& key) const {
    const auto it = find(key);
    if (const auto* i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
    return expect<double>(key, "float");
  }
  bool get_bool(const std::string& key) const { return expect<bool>(key, "boolean"); }
  std::vector<std::string> get_array(const std::string& key) const {
    return expect<std::vector<std::string>>(key, "array");
  }

  std::string get_string_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
  }
  std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
  }
  double get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  /// Immediate child table names under `prefix` ("backends" -> {"sim", ...}).
  std::set<std::string> child_tables(const std::string& prefix) const {
    std::set<std::string> out;
    const std::string with_dot = prefix + ".";
    for (const auto& [key, value] : values_) {
      if (key.rfind(with_dot, 0) != 0) continue;
      const std::string rest = key.substr(with_dot.size());
      const auto dot = rest.find('.');
      if (dot != std::string::npos) out.insert(rest.substr(0, dot));
    }
    return out;
  }

  void set(const std::string& key, Value value) { values_[key] = std::move(value); }

 private:
  template <typename T>
  T expect(const std::string& key, const char* kind) const {
    const auto it = find(key);
    if (const auto* v = std::get_if<T>(&it->second)) return *v;
    throw ConfigError("config key " + key + " is not a " + kind);
  }

  std::map<std::string, Value>::const_iterator find(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key: " + key);
    return it;
  }

  std::map<std::string, Value> values_;
};

namespace detail {

inline std::string strip(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::string drop_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
    } else if (c == '"') {
      in_string = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

inline std::string parse_basic_string(const std::string& text, std::size_t& i,
                                      std::size_t line_no) {
  std::string out;
  ++i;  // opening quote
  while (i < text.size()) {
    const char c = text[i];
    if (c == '"') {
      ++i;
      return out;
    }
    if (c == '\\') {
      ++i;
      if (i >= text.size()) break;
      switch (text[i]) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default:
          throw ConfigError("unsupported escape \\" + std::string(1, text[i]) + " at line " +
                            std::to_string(line_no));
      }
      ++i;
      continue;
    }
    out += c;
    ++i;
  }
  throw ConfigError("unterminated string at line " + std::to_string(line_no));
}

inline Value parse_scalar(const std::string& raw, std::size_t line_no) {
  const std::string text = strip(raw);
  if (text.empty()) throw ConfigError("empty value at line " + std::to_string(line_no));
  if (text.front() == '"') {
    std::size_t i = 0;
    std::string s = parse_basic_string(text, i, line_no);
    if (strip(text.substr(i)) != "")
      throw ConfigError("trailing characters after string at line " + std::to_string(line_no));
    return s;
  }
  if (text == "true") return true;
  if (text == "false") return false;
  try {
    if (text.find('.') == std::string::npos && text.find('e') == std::string::npos &&
        text.find('E') == std::string::npos) {
      std::size_t used = 0;
      const std::int64_t v = std::stoll(text, &used);
      if (used == text.size()) return v;
    } else {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used == text.size()) return v;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("cannot parse value \"" + text + "\" at line " + std::to_string(line_no));
}

inline std::vector<std::string> parse_array(const std::string& raw, std::size_t line_no) {
  std::vector<std::string> out;
  std::size_t i = 1;  // past '['
  while (i < raw.size()) {
    while (i < raw.size() && (std::isspace(static_cast<unsigned char>(raw[i])) || raw[i] == ','))
      ++i;
    if (i >= raw.size()) break;
    if (raw[i] == ']') return out;
    if (raw[i] == '"') {
      out.push_back(parse_basic_string(raw, i, line_no));
    } else {
      std::size_t j = i;
      while (j < raw.size() && raw[j] != ',' && raw[j] != ']') ++j;
      const std::string token = strip(raw.substr(i, j - i));
      if (token.empty())
        throw ConfigError("empty array element at line " + std::to_string(line_no));
      out.push_back(token);
      i = j;
    }
  }
  throw ConfigError("unterminated array at line " + std::to_string(line_no));
}

}  // namespace detail

inline Document parse(std::istream& in) {
  Document doc;
  std::string table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip(detail::drop_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("malformed table header at line " + std::to_string(line_no));
      table = detail::strip(line.substr(1, line.size() - 2));
      if (table.empty()) throw ConfigError("empty table name at line " + std::to_string(line_no));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value at line " + std::to_string(line_no));
    const std::string key = detail::strip(line.substr(0, eq));
    std::string value = detail::strip(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key at line " + std::to_string(line_no));
    if (!value.empty() && value.front() == '[') {
      // arrays may span lines; accumulate until the closing bracket
      while (value.find(']') == std::string::npos && std::getline(in, line)) {
        ++line_no;
        value += ' ' + detail::strip(detail::drop_comment(line));
      }
      doc.set(table.empty() ? key : table + "." + key, detail::parse_array(value, line_no));
    } else {
      doc.set(table.empty() ? key : table + "." + key, detail::parse_scalar(value, line_no));
    }
  }
  return doc;
}

inline Document parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  return parse(in);
}

}  // namespace toml

/// A named table of backends plus per-command settings, loaded from one TOML
/// file. CLI flags override individual fields after loading.
struct RunConfig {
  std::filesystem::path prompts_dir = "prompts";
  std::uint64_t seed = 0;
  int parallelism = 0;  // 0 = hardware concurrency
  std::map<std::string, BackendSpec> backends;

  // simulate
  std::string attacker_backend = "sim";
  std::string victim_backend = "sim";
  int turn_budget = 10;
  int malicious_per_cell = 100;
  int benign_per_cell = 50;
  std::vector<AttackerRole> roles{AttackerRole::AF, AttackerRole::JO, AttackerRole::RE};
  std::vector<InfoType> info_types{InfoType::Pii, InfoType::Financial,
                                   InfoType::IntellectualProperty};

  // annotate
  std::string judge_backend = "judge";

  // split
  std::optional<std::size_t> train_count;
  std::optional<double> train_fraction;
  std::set<std::string> strata_keys{"label", "role"};

  // detect
  std::string detect_method = "omniguard";
  int threshold = 6;
  std::string detector_backend = "detector";
  std::string worker_backend = "workers";
  std::string control_backend = "control";
  std::string exemplar_benign_id;
  std::string exemplar_malicious_id;
  std::filesystem::path exemplar_dataset;  // training split for few-shot exemplars
};

inline BackendSpec backend_from_config(const toml::Document& doc, const std::string& table) {
  BackendSpec spec;
  const std::string kind = doc.get_string_or(table + ".kind", "http");
  spec.params.temperature = doc.get_double_or(table + ".temperature", spec.params.temperature);
  spec.params.top_p = doc.get_double_or(table + ".top_p", spec.params.top_p);
  spec.params.max_new_tokens =
      static_cast<int>(doc.get_int_or(table + ".max_new_tokens", spec.params.max_new_tokens));
  if (kind == "http") {
    spec.kind = BackendKind::Http;
    spec.endpoint_url = doc.get_string(table + ".endpoint");
    spec.model_id = doc.get_string(table + ".model");
  } else if (kind == "scripted") {
    spec.kind = BackendKind::Scripted;
    spec.model_id = "scripted";
    if (doc.has(table + ".script")) spec.script = doc.get_array(table + ".script");
    if (doc.has(table + ".script_file")) {
      std::ifstream in(doc.get_string(table + ".script_file"));
      if (!in)
        throw ConfigError("cannot read script_file for backend " + table);
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) spec.script.push_back(line);
      }
    }
  } else {
    throw ConfigError("backend " + table + " has unknown kind: " + kind);
  }
  return spec;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  const toml::Document doc = toml::parse_file(path);
  RunConfig config;
  config.prompts_dir = doc.get_string_or("prompts_dir", config.prompts_dir.string());
  config.seed = static_cast<std::uint64_t>(doc.get_int_or("seed", 0));
  config.parallelism = static_cast<int>(doc.get_int_or("parallelism", 0));

  for (const auto& name : doc.child_tables("backends"))
    config.backends[name] = backend_from_config(doc, "backends." + name);

  config.attacker_backend = doc.get_string_or("simulate.attacker_backend", config.attacker_backend);
  config.victim_backend = doc.get_string_or("simulate.victim_backend", config.victim_backend);
  config.turn_budget = static_cast<int>(doc.get_int_or("simulate.turn_budget", config.turn_budget));
  config.malicious_per_cell =
      static_cast<int>(doc.get_int_or("simulate.malicious_per_cell", config.malicious_per_cell));
  config.benign_per_cell =
      static_cast<int>(doc.get_int_or("simulate.benign_per_cell", config.benign_per_cell));
  if (doc.has("simulate.roles")) {
    config.roles.clear();
    for (const auto& r : doc.get_array("simulate.roles")) config.roles.push_back(role_from_string(r));
  }
  if (doc.has("simulate.info_types")) {
    config.info_types.clear();
    for (const auto& t : doc.get_array("simulate.info_types"))
      config.info_types.push_back(info_type_from_string(t));
  }

  config.judge_backend = doc.get_string_or("annotate.judge_backend", config.judge_backend);

  if (doc.has("split.train_count"))
    config.train_count = static_cast<std::size_t>(doc.get_int("split.train_count"));
  if (doc.has("split.train_fraction")) config.train_fraction = doc.get_double("split.train_fraction");
  if (doc.has("split.strata")) {
    config.strata_keys.clear();
    for (const auto& k : doc.get_array("split.strata")) config.strata_keys.insert(k);
  }

  config.detect_method = doc.get_string_or("detect.method", config.detect_method);
  config.threshold = static_cast<int>(doc.get_int_or("detect.threshold", config.threshold));
  config.detector_backend = doc.get_string_or("detect.backend", config.detector_backend);
  config.worker_backend = doc.get_string_or("detect.worker_backend", config.worker_backend);
  config.control_backend = doc.get_string_or("detect.control_backend", config.control_backend);
  config.exemplar_benign_id = doc.get_string_or("detect.exemplar_benign", "");
  config.exemplar_malicious_id = doc.get_string_or("detect.exemplar_malicious", "");
  config.exemplar_dataset = doc.get_string_or("detect.exemplar_dataset", "");

  for (const auto& [name, spec] : config.backends) {
    (void)name;
    detail::validate_params(spec.params);
  }
  return config;
}

inline const BackendSpec& require_backend(const RunConfig& config, const std::string& name) {
  const auto it = config.backends.find(name);
  if (it == config.backends.end()) throw ConfigError("config defines no backend named " + name);
  return it->second;
}

}  // namespace sevsim
