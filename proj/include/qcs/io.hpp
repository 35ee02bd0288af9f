#pragma once

// CSV and JSON emission. CSV: ',' delimiter, '.' decimal point, header row,
// LF line endings, empty field for a missing value.

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qcs/bounds.hpp"
#include "qcs/gmvq.hpp"
#include "qcs/harness.hpp"
#include "qcs/solvers.hpp"

namespace qcs::io {

using json = nlohmann::ordered_json;

/// Locale-independent "%.12g"; NaN becomes an empty field.
inline std::string num(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string csv_text(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
  return s;
}

inline const std::vector<std::string>& sweep_columns() {
  static const std::vector<std::string> cols{
      "fom", "N", "b_per_scalar", "delta_k", "delta_2k", "a", "beta", "alpha",
      "error_bound_bpdn", "error_bound_oracle", "srnr_bound_bpdn_db", "srnr_bound_oracle_db", "applicable",
      "median_srnr_bpdn_db", "median_srnr_oracle_db", "n_trials", "n_excluded", "n_nonconverged",
      "violation_bpdn", "violation_oracle", "confidence", "note"};
  return cols;
}

inline void write_sweep_csv(std::ostream& os, const SweepTable& t) {
  const auto& cols = sweep_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : t.rows) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double ebp = r.bpdnBound ? r.bpdnBound->errorBound : nan;
    const double eor = r.oracleBound ? r.oracleBound->errorBound : nan;
    const double sbp = r.bpdnBound ? to_db(r.bpdnBound->srnrBound) : nan;
    const double sor = r.oracleBound ? to_db(r.oracleBound->srnrBound) : nan;
    os << num(r.fom) << ',' << r.N << ',' << num(r.b) << ',' << num(r.deltaK) << ',' << num(r.delta2K) << ','
       << num(r.a) << ',' << num(r.beta) << ',' << num(r.alpha) << ',' << num(ebp) << ',' << num(eor) << ','
       << num(sbp) << ',' << num(sor) << ',' << (r.applicable ? 1 : 0) << ',' << num(to_db(r.medianSrnrBpdn))
       << ',' << num(to_db(r.medianSrnrOracle)) << ',' << r.nTrials << ',' << r.nExcluded << ','
       << r.nNonConverged << ',' << num(r.violationBpdn) << ',' << num(r.violationOracle) << ','
       << num(r.confidence) << ',' << csv_text(r.note) << '\n';
  }
}

inline std::string sweep_csv(const SweepTable& t) {
  std::ostringstream os;
  write_sweep_csv(os, t);
  return os.str();
}

inline void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& trials) {
  os << "fom,b_per_scalar,trial,epsilon,err_bpdn,err_oracle,srnr_bpdn_db,srnr_oracle_db,feasible_truth,"
        "converged,bpdn_feasible,oracle_ok,iterations,residual_norm,objective_bpdn,objective_truth,note\n";
  for (const auto& r : trials)
    os << num(r.fom) << ',' << num(r.b) << ',' << r.trialIndex << ',' << num(r.epsilon) << ',' << num(r.errBpdn)
       << ',' << num(r.errOracle) << ',' << num(to_db(r.srnrBpdn)) << ',' << num(to_db(r.srnrOracle)) << ','
       << r.feasibleTruth << ',' << r.converged << ',' << r.bpdnFeasible << ',' << r.oracleOk << ','
       << r.iterations << ',' << num(r.residualNorm) << ',' << num(r.objectiveBpdn) << ','
       << num(r.objectiveTruth) << ',' << csv_text(r.note) << '\n';
}

/// JSON number, with null for NaN and a string for infinities.
inline json jnum(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline json to_json(const RateAllocation& a) {
  json j;
  j["b_total"] = a.b_total;
  json bits = json::array(), shares = json::array();
  for (double b : a.bits) bits.push_back(jnum(b));
  for (double s : a.log2Shares) shares.push_back(jnum(s));
  j["bits"] = bits;
  j["log2_shares"] = shares;
  j["beta"] = a.delta2;
  j["alpha"] = a.delta4;
  j["high_rate_strained"] = a.highRateStrained;
  return j;
}

inline json to_json(const RipEstimate& r) {
  return json{{"k", r.k}, {"delta", r.delta}, {"trials", r.trials}, {"sided", to_string(r.sided)}};
}

inline json to_json(const Reconstruction& r) {
  json x = json::array();
  for (Eigen::Index i = 0; i < r.xHat.size(); ++i) x.push_back(r.xHat(i));
  return json{{"iterations", r.iterations}, {"residual_norm", r.residualNorm},
              {"objective", r.objective},   {"converged", r.converged},
              {"x_hat", x}};
}

inline json to_json(const BoundResult& b) {
  return json{{"error_bound", b.errorBound},
              {"srnr_bound_db", jnum(to_db(b.srnrBound))},
              {"confidence", b.confidence},
              {"complement_level", b.complementLevel},
              {"margin_a", b.margin_a},
              {"epsilon_squared", b.epsilonSquared}};
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path);
}

}  // namespace qcs::io
