#include "sgdlab/config.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace sgdlab {

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"problem",
       {"problem", "dim", "spectrum", "x_star", "amplitude", "design", "targets"}},
      {"oracle", {"oracle", "sigma", "eta", "batch", "replacement"}},
      {"schedule", {"alpha", "mu"}},
      {"run",
       {"method", "horizon", "replicas", "seed", "checkpoint_stride", "geometric",
        "lyapunov", "averaged", "x0", "x0_spread", "beta",
        "lyapunov_coefficient"}},
  };
  return keys;
}

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

double parse_double(const std::string& raw, const std::string& where) {
  const std::string t = trim(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    fail(where, "expected a number, got '" + t + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& raw, const std::string& where) {
  const std::string t = trim(raw);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    // Accept integral values written in floating notation, e.g. 1e5.
    const double d = parse_double(t, where);
    if (d < 0.0 || d != std::floor(d) || d > 1.8e19) {
      fail(where, "expected a non-negative integer, got '" + t + "'");
    }
    return static_cast<std::uint64_t>(d);
  }
  return v;
}

bool parse_bool(const std::string& raw, const std::string& where) {
  const std::string t = trim(raw);
  if (t == "true") return true;
  if (t == "false") return false;
  fail(where, "expected true or false, got '" + t + "'");
}

std::string parse_string(const std::string& raw) {
  const std::string t = trim(raw);
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') {
    return t.substr(1, t.size() - 2);
  }
  return t;
}

// Splits the inside of a bracketed list at top-level commas.
std::vector<std::string> split_top(const std::string& inner) {
  std::vector<std::string> parts;
  int depth = 0;
  std::string cur;
  for (char ch : inner) {
    if (ch == '[' || ch == '{') ++depth;
    if (ch == ']' || ch == '}') --depth;
    if (ch == ',' && depth == 0) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!trim(cur).empty()) parts.push_back(trim(cur));
  return parts;
}

std::string unwrap(const std::string& raw, char open, char close,
                   const std::string& where) {
  const std::string t = trim(raw);
  if (t.size() < 2 || t.front() != open || t.back() != close) {
    fail(where, fmt::format("expected {}...{}, got '{}'", open, close, t));
  }
  return t.substr(1, t.size() - 2);
}

Vec parse_list(const std::string& raw, const std::string& where) {
  Vec out;
  for (const std::string& p : split_top(unwrap(raw, '[', ']', where))) {
    out.push_back(parse_double(p, where));
  }
  return out;
}

std::vector<Vec> parse_matrix(const std::string& raw, const std::string& where) {
  std::vector<Vec> out;
  for (const std::string& row : split_top(unwrap(raw, '[', ']', where))) {
    out.push_back(parse_list(row, where));
  }
  return out;
}

std::pair<double, double> parse_pair(const std::string& raw,
                                     const std::string& where) {
  const auto parts = split_top(unwrap(raw, '{', '}', where));
  if (parts.size() != 2) fail(where, "expected a pair {x, y}");
  return {parse_double(parts[0], where), parse_double(parts[1], where)};
}

std::string num(double v) { return fmt::format("{}", v); }

std::string list_text(const Vec& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += num(v[i]);
  }
  return s + "]";
}

}  // namespace

void ConfigDoc::set(const std::string& section, const std::string& key,
                    const std::string& raw) {
  const auto& keys = known_keys();
  const auto sec = keys.find(section);
  if (sec == keys.end()) fail("config", "unknown section [" + section + "]");
  if (!sec->second.count(key)) {
    fail("config", "unknown key '" + key + "' in [" + section + "]");
  }
  auto it = std::find_if(sections.begin(), sections.end(),
                         [&](const auto& s) { return s.first == section; });
  if (it == sections.end()) {
    sections.push_back({section, {}});
    it = sections.end() - 1;
  }
  for (auto& kv : it->second) {
    if (kv.first == key) {
      kv.second = raw;
      return;
    }
  }
  it->second.emplace_back(key, raw);
}

const std::string* ConfigDoc::get(const std::string& section,
                                  const std::string& key) const {
  for (const auto& s : sections) {
    if (s.first != section) continue;
    for (const auto& kv : s.second) {
      if (kv.first == key) return &kv.second;
    }
  }
  return nullptr;
}

ConfigDoc parse_config_text(const std::string& text) {
  ConfigDoc doc;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside quoted strings.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::string where = fmt::format("config line {}", lineno);
    if (t.front() == '[' && t.back() == ']' && t.find('=') == std::string::npos) {
      section = trim(t.substr(1, t.size() - 2));
      if (!known_keys().count(section)) fail(where, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) fail(where, "expected key = value");
    if (section.empty()) fail(where, "key outside of a section");
    const std::string key = trim(t.substr(0, eq));
    try {
      doc.set(section, key, trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      fail(where, e.what());
    }
  }
  return doc;
}

void apply_override(ConfigDoc& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    fail("override", "expected section.key=value, got '" + assignment + "'");
  }
  doc.set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
          trim(assignment.substr(eq + 1)));
}

ExperimentConfig to_experiment_config(const ConfigDoc& doc) {
  ExperimentConfig cfg;
  const auto where = [](const char* s, const char* k) {
    return fmt::format("[{}] {}", s, k);
  };
  const auto get = [&](const char* s, const char* k) { return doc.get(s, k); };

  // [problem]
  if (const auto* v = get("problem", "problem")) cfg.problem.name = parse_string(*v);
  if (const auto* v = get("problem", "dim")) {
    cfg.problem.dim = parse_u64(*v, where("problem", "dim"));
  }
  if (const auto* v = get("problem", "spectrum")) {
    cfg.problem.spectrum = parse_list(*v, where("problem", "spectrum"));
  }
  if (const auto* v = get("problem", "x_star")) {
    cfg.problem.x_star = parse_list(*v, where("problem", "x_star"));
  }
  if (const auto* v = get("problem", "amplitude")) {
    cfg.problem.amplitude = parse_double(*v, where("problem", "amplitude"));
  }
  if (const auto* v = get("problem", "design")) {
    cfg.problem.design = parse_matrix(*v, where("problem", "design"));
  }
  if (const auto* v = get("problem", "targets")) {
    cfg.problem.targets = parse_list(*v, where("problem", "targets"));
  }

  // [oracle]
  if (const auto* v = get("oracle", "oracle")) cfg.oracle.kind = parse_string(*v);
  if (const auto* v = get("oracle", "sigma")) {
    cfg.oracle.sigma = parse_double(*v, where("oracle", "sigma"));
  }
  if (const auto* v = get("oracle", "eta")) {
    cfg.oracle.eta = parse_double(*v, where("oracle", "eta"));
  }
  if (const auto* v = get("oracle", "batch")) {
    cfg.oracle.batch = parse_u64(*v, where("oracle", "batch"));
  }
  if (const auto* v = get("oracle", "replacement")) {
    cfg.oracle.with_replacement = parse_bool(*v, where("oracle", "replacement"));
  }

  // [schedule]
  double c = 1.0, a = 1.0, m = 0.0, b = 0.0;
  if (const auto* v = get("schedule", "alpha")) {
    std::tie(c, a) = parse_pair(*v, where("schedule", "alpha"));
  }
  if (const auto* v = get("schedule", "mu")) {
    std::tie(m, b) = parse_pair(*v, where("schedule", "mu"));
  }
  try {
    cfg.schedule = make_power_schedule(c, a, m, b);
  } catch (const std::invalid_argument& e) {
    fail("[schedule]", e.what());
  }

  // [run]
  if (const auto* v = get("run", "method")) {
    try {
      cfg.method = parse_method(parse_string(*v));
    } catch (const std::invalid_argument& e) {
      fail(where("run", "method"), e.what());
    }
  }
  if (const auto* v = get("run", "horizon")) cfg.horizon = parse_u64(*v, where("run", "horizon"));
  if (const auto* v = get("run", "replicas")) {
    cfg.replicas = parse_u64(*v, where("run", "replicas"));
  }
  if (const auto* v = get("run", "seed")) cfg.master_seed = parse_u64(*v, where("run", "seed"));
  if (const auto* v = get("run", "checkpoint_stride")) {
    cfg.checkpoints.stride = parse_u64(*v, where("run", "checkpoint_stride"));
  }
  if (const auto* v = get("run", "geometric")) {
    cfg.checkpoints.geometric = parse_bool(*v, where("run", "geometric"));
  }
  if (const auto* v = get("run", "lyapunov")) cfg.lyapunov = parse_bool(*v, where("run", "lyapunov"));
  if (const auto* v = get("run", "averaged")) cfg.averaged = parse_bool(*v, where("run", "averaged"));
  if (const auto* v = get("run", "x0")) cfg.x0 = parse_list(*v, where("run", "x0"));
  if (const auto* v = get("run", "x0_spread")) {
    cfg.x0_spread = parse_double(*v, where("run", "x0_spread"));
  }
  if (const auto* v = get("run", "beta")) cfg.beta = parse_double(*v, where("run", "beta"));
  if (const auto* v = get("run", "lyapunov_coefficient")) {
    cfg.lyapunov_coefficient = parse_double(*v, where("run", "lyapunov_coefficient"));
  }

  // Derived defaults.
  if (cfg.problem.name == "quadratic") cfg.problem.dim = cfg.problem.spectrum.size();
  if (cfg.problem.name == "least_squares" && !cfg.problem.design.empty()) {
    cfg.problem.dim = cfg.problem.design.front().size();
  }
  if (cfg.x0.empty()) cfg.x0.assign(cfg.problem.dim, 1.0);
  try {
    validate(cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return cfg;
}

std::string to_config_text(const ExperimentConfig& cfg) {
  std::string s;
  s += "[problem]\n";
  s += fmt::format("problem = \"{}\"\n", cfg.problem.name);
  s += fmt::format("dim = {}\n", cfg.problem.dim);
  if (!cfg.problem.spectrum.empty()) {
    s += "spectrum = " + list_text(cfg.problem.spectrum) + "\n";
  }
  if (!cfg.problem.x_star.empty()) s += "x_star = " + list_text(cfg.problem.x_star) + "\n";
  if (cfg.problem.name == "smooth_rastrigin") {
    s += "amplitude = " + num(cfg.problem.amplitude) + "\n";
  }
  if (!cfg.problem.design.empty()) {
    s += "design = [";
    for (std::size_t i = 0; i < cfg.problem.design.size(); ++i) {
      if (i) s += ", ";
      s += list_text(cfg.problem.design[i]);
    }
    s += "]\n";
    s += "targets = " + list_text(cfg.problem.targets) + "\n";
  }
  s += "\n[oracle]\n";
  s += fmt::format("oracle = \"{}\"\n", cfg.oracle.kind);
  s += "sigma = " + num(cfg.oracle.sigma) + "\n";
  s += "eta = " + num(cfg.oracle.eta) + "\n";
  s += fmt::format("batch = {}\n", cfg.oracle.batch);
  s += fmt::format("replacement = {}\n", cfg.oracle.with_replacement);
  s += "\n[schedule]\n";
  s += fmt::format("alpha = {{{}, {}}}\n", num(cfg.schedule.coeff_alpha),
                   num(cfg.schedule.exp_alpha));
  s += fmt::format("mu = {{{}, {}}}\n", num(cfg.schedule.coeff_mu),
                   num(cfg.schedule.exp_mu));
  s += "\n[run]\n";
  s += fmt::format("method = \"{}\"\n", to_string(cfg.method));
  s += fmt::format("horizon = {}\n", cfg.horizon);
  s += fmt::format("replicas = {}\n", cfg.replicas);
  s += fmt::format("seed = {}\n", cfg.master_seed);
  s += fmt::format("checkpoint_stride = {}\n", cfg.checkpoints.stride);
  s += fmt::format("geometric = {}\n", cfg.checkpoints.geometric);
  s += fmt::format("lyapunov = {}\n", cfg.lyapunov);
  s += fmt::format("averaged = {}\n", cfg.averaged);
  s += "x0 = " + list_text(cfg.x0) + "\n";
  s += "x0_spread = " + num(cfg.x0_spread) + "\n";
  s += "beta = " + num(cfg.beta) + "\n";
  if (cfg.lyapunov_coefficient) {
    s += "lyapunov_coefficient = " + num(*cfg.lyapunov_coefficient) + "\n";
  }
  return s;
}

ExperimentConfig load_config_file(const std::string& path,
                                  const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  ConfigDoc doc = parse_config_text(ss.str());
  for (const std::string& o : overrides) apply_override(doc, o);
  return to_experiment_config(doc);
}

std::string manifest_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["format"] = "sgdlab-manifest/1";
  j["master_seed"] = cfg.master_seed;
  j["config"] = to_config_text(cfg);
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_manifest(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.contains("config") || !j["config"].is_string()) {
    throw ConfigError("manifest has no 'config' text");
  }
  ConfigDoc doc = parse_config_text(j["config"].get<std::string>());
  if (j.contains("master_seed")) {
    doc.set("run", "seed", std::to_string(j["master_seed"].get<std::uint64_t>()));
  }
  return to_experiment_config(doc);
}

}  // namespace sgdlab
