#pragma once

// JSON experiment configuration. Every key is optional and defaults to the
// reference experiment. Overrides use dotted keys ("model.M=100"); the value is
// parsed as JSON when it parses, otherwise taken as a string. Unknown keys are
// rejected with the closest valid key in the message.

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qcs/errors.hpp"
#include "qcs/harness.hpp"

namespace qcs::config {

using json = nlohmann::ordered_json;

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "model.M", "model.Q", "model.R", "model.K", "model.theta2", "model.rho2", "model.sigma_m2",
      "model.sigma_c2", "model.weight_rule", "fom_grid", "rate_grid", "trials", "confidence", "seed",
      "rip_probes", "rip_sided", "matrix_mode", "oracle_support", "gamma", "variance_cross_term", "solver.max_iterations",
      "solver.primal_tol", "solver.dual_tol", "solver.feas_tol", "solver.adaptive_step", "threads",
      "write_trials", "output_path"};
  return keys;
}

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string nearest_key(const std::string& key) {
  const auto& keys = known_keys();
  std::string best;
  std::size_t bestD = std::string::npos;
  for (const auto& k : keys) {
    // Compare against both the full dotted key and its last segment.
    const auto leaf = k.substr(k.find('.') == std::string::npos ? 0 : k.find('.') + 1);
    const std::size_t d = std::min(edit_distance(key, k), edit_distance(key, leaf) + 1);
    if (d < bestD) {
      bestD = d;
      best = k;
    }
  }
  return best;
}

inline bool is_section(const std::string& name) { return name == "model" || name == "solver"; }

inline void check_keys(const json& j, const std::string& prefix = "") {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  const auto& keys = known_keys();
  for (const auto& [k, v] : j.items()) {
    const std::string full = prefix.empty() ? k : prefix + "." + k;
    if (prefix.empty() && is_section(k)) {
      if (!v.is_object()) throw ConfigError("'" + k + "' must be an object");
      check_keys(v, k);
      continue;
    }
    if (std::find(keys.begin(), keys.end(), full) == keys.end())
      throw ConfigError("unknown configuration key '" + full + "' (did you mean '" + nearest_key(full) + "'?)");
  }
}

/// Applies "a.b=value" to the document.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not KEY=VALUE");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end())
    throw ConfigError("unknown configuration key '" + key + "' (did you mean '" + nearest_key(key) + "'?)");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    doc[key] = value;
  } else {
    json& section = doc[key.substr(0, dot)];
    if (section.is_null()) section = json::object();
    section[key.substr(dot + 1)] = value;
  }
}

namespace detail {

template <class T>
T get(const json& j, const char* key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("configuration key '" + path + "' has the wrong type");
  }
}

inline std::uint64_t get_u64(const json& j, const char* key, const std::string& path) {
  const json& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  if (v.is_number_integer()) throw ConfigError("'" + path + "' must be >= 0");
  throw ConfigError("configuration key '" + path + "' must be a non-negative integer");
}

inline int get_int(const json& j, const char* key, const std::string& path) {
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError("configuration key '" + path + "' must be an integer");
  return v.get<int>();
}

inline double get_num(const json& j, const char* key, const std::string& path) {
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError("configuration key '" + path + "' must be a number");
  return v.get<double>();
}

}  // namespace detail

/// Converts a checked document into an ExperimentConfig and validates it.
inline ExperimentConfig from_json(const json& doc) {
  check_keys(doc);
  using namespace detail;
  ExperimentConfig c;
  if (doc.contains("model")) {
    const json& m = doc["model"];
    if (m.contains("M")) c.M = get_int(m, "M", "model.M");
    if (m.contains("Q")) c.Q = get_int(m, "Q", "model.Q");
    if (m.contains("R") && !m["R"].is_null()) c.R = get_int(m, "R", "model.R");
    if (m.contains("K")) c.K = get_int(m, "K", "model.K");
    if (m.contains("theta2")) c.theta2 = get_num(m, "theta2", "model.theta2");
    if (m.contains("rho2")) c.rho2 = get_num(m, "rho2", "model.rho2");
    if (m.contains("sigma_m2")) c.channel.sigma_m2 = get_num(m, "sigma_m2", "model.sigma_m2");
    if (m.contains("sigma_c2")) c.channel.sigma_c2 = get_num(m, "sigma_c2", "model.sigma_c2");
    if (m.contains("weight_rule")) {
      const json& w = m["weight_rule"];
      if (w.is_string()) {
        if (w.get<std::string>() != "uniform")
          throw ConfigError("model.weight_rule must be \"uniform\" or an array of weights");
      } else if (w.is_array()) {
        std::vector<double> ws;
        for (const auto& e : w) {
          if (!e.is_number()) throw ConfigError("model.weight_rule entries must be numbers");
          ws.push_back(e.get<double>());
        }
        c.weights = ws;
      } else {
        throw ConfigError("model.weight_rule must be \"uniform\" or an array of weights");
      }
    }
  }
  auto grid = [&](const char* key) {
    std::vector<double> g;
    const json& v = doc.at(key);
    if (!v.is_array()) throw ConfigError(std::string("'") + key + "' must be an array of numbers");
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(std::string("'") + key + "' must be an array of numbers");
      g.push_back(e.get<double>());
    }
    return g;
  };
  if (doc.contains("fom_grid")) c.fomGrid = grid("fom_grid");
  if (doc.contains("rate_grid")) c.rateGrid = grid("rate_grid");
  if (doc.contains("trials")) c.trials = get_int(doc, "trials", "trials");
  if (doc.contains("confidence")) c.confidence = get_num(doc, "confidence", "confidence");
  if (doc.contains("seed")) c.seed = get_u64(doc, "seed", "seed");
  if (doc.contains("rip_probes")) c.ripProbes = get_u64(doc, "rip_probes", "rip_probes");
  if (doc.contains("rip_sided")) {
    const auto s = get<std::string>(doc, "rip_sided", "rip_sided");
    if (s == "lower") c.ripSided = RipSided::lower;
    else if (s == "two-sided" || s == "two_sided") c.ripSided = RipSided::two_sided;
    else throw ConfigError("rip_sided must be \"lower\" or \"two-sided\"");
  }
  if (doc.contains("matrix_mode")) {
    const auto s = get<std::string>(doc, "matrix_mode", "matrix_mode");
    if (s == "per_fom") c.matrixMode = MatrixMode::per_fom;
    else if (s == "per_trial") c.matrixMode = MatrixMode::per_trial;
    else throw ConfigError("matrix_mode must be \"per_fom\" or \"per_trial\"");
  }
  if (doc.contains("oracle_support")) {
    const auto s = get<std::string>(doc, "oracle_support", "oracle_support");
    if (s == "true") c.oracleSupport = OracleSupport::generator;
    else if (s == "threshold") c.oracleSupport = OracleSupport::threshold;
    else throw ConfigError("oracle_support must be \"true\" or \"threshold\"");
  }
  if (doc.contains("gamma")) c.gamma = get_num(doc, "gamma", "gamma");
  if (doc.contains("variance_cross_term")) {
    const auto s = get<std::string>(doc, "variance_cross_term", "variance_cross_term");
    if (s == "conservative") c.varianceCrossTerm = CrossTerm::conservative;
    else if (s == "independent") c.varianceCrossTerm = CrossTerm::independent;
    else throw ConfigError("variance_cross_term must be \"conservative\" or \"independent\"");
  }
  if (doc.contains("solver")) {
    const json& s = doc["solver"];
    if (s.contains("max_iterations")) c.solver.maxIterations = get_int(s, "max_iterations", "solver.max_iterations");
    if (s.contains("primal_tol")) c.solver.primalTol = get_num(s, "primal_tol", "solver.primal_tol");
    if (s.contains("dual_tol")) c.solver.dualTol = get_num(s, "dual_tol", "solver.dual_tol");
    if (s.contains("feas_tol")) c.solver.feasTol = get_num(s, "feas_tol", "solver.feas_tol");
    if (s.contains("adaptive_step")) c.solver.adaptiveStep = get<bool>(s, "adaptive_step", "solver.adaptive_step");
  }
  if (doc.contains("threads")) c.threads = static_cast<unsigned>(get_u64(doc, "threads", "threads"));
  if (doc.contains("write_trials")) c.writeTrials = get<bool>(doc, "write_trials", "write_trials");
  if (doc.contains("output_path")) c.outputPath = get<std::string>(doc, "output_path", "output_path");
  c.validate();
  return c;
}

/// Echo of a configuration with every field filled in.
inline json to_json(const ExperimentConfig& c) {
  json model{{"M", c.M}, {"Q", c.Q}, {"R", c.M / c.Q}, {"K", c.K}, {"theta2", c.theta2}, {"rho2", c.rho2},
             {"sigma_m2", c.channel.sigma_m2}, {"sigma_c2", c.channel.sigma_c2}};
  if (c.weights) model["weight_rule"] = *c.weights;
  else model["weight_rule"] = "uniform";
  json j;
  j["model"] = model;
  j["fom_grid"] = c.fomGrid;
  j["rate_grid"] = c.rateGrid;
  j["trials"] = c.trials;
  j["confidence"] = c.confidence;
  j["seed"] = c.seed;
  j["rip_probes"] = c.ripProbes;
  j["rip_sided"] = to_string(c.ripSided);
  j["matrix_mode"] = to_string(c.matrixMode);
  j["oracle_support"] = to_string(c.oracleSupport);
  j["gamma"] = c.effective_gamma();
  j["variance_cross_term"] = to_string(c.varianceCrossTerm);
  j["solver"] = json{{"max_iterations", c.solver.maxIterations}, {"primal_tol", c.solver.primalTol},
                     {"dual_tol", c.solver.dualTol},             {"feas_tol", c.solver.feasTol},
                     {"adaptive_step", c.solver.adaptiveStep}};
  j["threads"] = c.threads;
  j["write_trials"] = c.writeTrials;
  j["output_path"] = c.outputPath;
  return j;
}

inline json read_document(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  json doc = json::parse(ss.str(), nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
  if (!doc.is_object()) throw ConfigError("config file '" + path + "' must contain a JSON object");
  return doc;
}

/// Loads an optional file, then applies overrides in order.
inline ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = path.empty() ? json::object() : read_document(path);
  check_keys(doc);
  for (const auto& o : overrides) apply_override(doc, o);
  return from_json(doc);
}

}  // namespace qcs::config
