// qcs: command-line front end.
//
// Exit codes: 0 success, 1 validation failure, 2 configuration error,
// 3 partial failure (some sweep points errored).

#include "CLI11.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qcs/config.hpp"
#include "qcs/harness.hpp"
#include "qcs/io.hpp"
#include "qcs/validate.hpp"

namespace {

using qcs::io::json;

constexpr int kOk = 0;
constexpr int kValidateFailed = 1;
constexpr int kConfigError = 2;
constexpr int kPartialFailure = 3;

struct CommonOptions {
  std::string configPath;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> trials;
  std::optional<unsigned> threads;
  int verbosity = 0;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.configPath, "JSON experiment configuration");
  app->add_option("--set", o.overrides, "Override a key, e.g. --set model.M=100 (repeatable)")->allow_extra_args(false);
  app->add_option("--seed", o.seed, "Master seed (default 0)");
  app->add_option("--out", o.out, "Output directory");
  app->add_option("--trials", o.trials, "Trials per sweep point");
  app->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  app->add_flag("-v,--verbose", o.verbosity, "Print progress to stderr");
}

qcs::ExperimentConfig load_config(const CommonOptions& o) {
  qcs::io::json doc = o.configPath.empty() ? json::object() : qcs::config::read_document(o.configPath);
  qcs::config::check_keys(doc);
  for (const auto& s : o.overrides) qcs::config::apply_override(doc, s);
  if (o.seed) doc["seed"] = *o.seed;
  if (o.out) doc["output_path"] = *o.out;
  if (o.trials) doc["trials"] = *o.trials;
  if (o.threads) doc["threads"] = *o.threads;
  return qcs::config::from_json(doc);
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

/// The sweep's matrix when N matches a fom_grid entry, otherwise one drawn from
/// a separate stream keyed by N.
qcs::SensingMatrix point_matrix(const qcs::ExperimentConfig& cfg, int N) {
  for (std::size_t f = 0; f < cfg.fomGrid.size(); ++f)
    if (qcs::fom_to_N(cfg.fomGrid[f], cfg.M) == N) return qcs::sweep_matrix(cfg.seed, static_cast<int>(f), N, cfg.M);
  qcs::Rng rng(qcs::derive_seed(cfg.seed, {qcs::stream::matrix, 1000003, static_cast<std::uint64_t>(N)}));
  return qcs::sample_sensing_matrix(N, cfg.M, rng);
}

int cmd_sweep(const CommonOptions& o) {
  const auto cfg = load_config(o);
  const auto wallStart = std::chrono::system_clock::now();
  qcs::SweepProgress progress;
  if (o.verbosity > 0)
    progress.onRow = [](const qcs::SweepRow& r, std::size_t done, std::size_t total) {
      std::cerr << "[" << done << "/" << total << "] fom=" << r.fom << " b=" << r.b
                << " median SRNR bpdn=" << qcs::io::num(qcs::to_db(r.medianSrnrBpdn))
                << " dB oracle=" << qcs::io::num(qcs::to_db(r.medianSrnrOracle)) << " dB"
                << (r.failed ? " FAILED " + r.note : "") << '\n';
    };
  const qcs::SweepTable table = qcs::run_sweep(cfg, progress);

  std::filesystem::create_directories(cfg.outputPath);
  const std::filesystem::path dir(cfg.outputPath);
  std::ostringstream sweep;
  qcs::io::write_sweep_csv(sweep, table);
  qcs::io::write_file((dir / "sweep.csv").string(), sweep.str());
  if (cfg.writeTrials) {
    std::ostringstream trials;
    qcs::io::write_trials_csv(trials, table.trials);
    qcs::io::write_file((dir / "trials.csv").string(), trials.str());
  }

  const std::time_t t = std::chrono::system_clock::to_time_t(wallStart);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  json meta;
  meta["config"] = qcs::config::to_json(cfg);
  meta["seed"] = cfg.seed;
  meta["seed_scheme"] = "splitmix64 chain: matrix {1,f}, rip {2,f,k}, trial {3,f,t} -> source 10, measurement 11, "
                        "quantization 12, channel 13";
  meta["versions"] = json{{"qcs", "1.0.0"}, {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                                         std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                         std::to_string(EIGEN_MINOR_VERSION)},
                          {"compiler", __VERSION__}};
  meta["started_utc"] = stamp;
  meta["runtime_seconds"] = table.runtimeSeconds;
  meta["points"] = table.rows.size();
  meta["failed_points"] = table.failedPoints;
  int excluded = 0;
  for (const auto& r : table.rows) excluded += r.nExcluded;
  meta["excluded_trials"] = excluded;
  qcs::io::write_file((dir / "meta.json").string(), meta.dump(2) + "\n");

  std::cerr << "wrote " << (dir / "sweep.csv").string() << " (" << table.rows.size() << " points, "
            << table.failedPoints << " failed, " << excluded << " trials excluded)\n";
  return table.failedPoints > 0 ? kPartialFailure : kOk;
}

int cmd_bounds(const CommonOptions& o) {
  const auto cfg = load_config(o);
  const qcs::SourceModel model = cfg.model();
  const double energy = qcs::source_energy(model);
  qcs::SweepTable table;
  for (std::size_t f = 0; f < cfg.fomGrid.size(); ++f) {
    const qcs::FomSetup fs = qcs::prepare_fom(cfg, model, static_cast<int>(f));
    for (double b : cfg.rateGrid) {
      qcs::SweepRow row;
      row.fom = cfg.fomGrid[f];
      row.N = fs.N;
      row.b = b;
      qcs::evaluate_bounds(cfg, fs, energy, row);
      table.rows.push_back(row);
    }
  }
  // Bound columns only.
  std::cout << "fom,N,b_per_scalar,delta_k,delta_2k,a,beta,alpha,error_bound_bpdn,error_bound_oracle,"
               "srnr_bound_bpdn_db,srnr_bound_oracle_db,applicable\n";
  using qcs::io::num;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : table.rows)
    std::cout << num(r.fom) << ',' << r.N << ',' << num(r.b) << ',' << num(r.deltaK) << ',' << num(r.delta2K)
              << ',' << num(r.a) << ',' << num(r.beta) << ',' << num(r.alpha) << ','
              << num(r.bpdnBound ? r.bpdnBound->errorBound : nan) << ','
              << num(r.oracleBound ? r.oracleBound->errorBound : nan) << ','
              << num(r.bpdnBound ? qcs::to_db(r.bpdnBound->srnrBound) : nan) << ','
              << num(r.oracleBound ? qcs::to_db(r.oracleBound->srnrBound) : nan) << ',' << (r.applicable ? 1 : 0)
              << '\n';
  return kOk;
}

struct RipOptions {
  std::optional<int> k;
  double fom = 0.5;
  std::optional<std::uint64_t> probes;
  bool identity = false;
  std::string sided;
};

int cmd_rip(const CommonOptions& o, const RipOptions& r) {
  auto cfg = load_config(o);
  const int k = r.k.value_or(2 * cfg.K);
  const std::uint64_t probes = r.probes.value_or(cfg.ripProbes);
  qcs::RipSided sided = cfg.ripSided;
  if (r.sided == "two-sided") sided = qcs::RipSided::two_sided;
  else if (r.sided == "lower") sided = qcs::RipSided::lower;
  else if (!r.sided.empty()) throw qcs::ConfigError("--sided must be lower or two-sided");
  if (!(r.fom > 0.0 && r.fom <= 1.0)) throw qcs::ConfigError("--fom must lie in (0, 1]");
  const int N = r.identity ? cfg.M : qcs::fom_to_N(r.fom, cfg.M);
  if (N < 1) throw qcs::ConfigError("--fom gives N < 1");
  const qcs::SensingMatrix A =
      r.identity ? qcs::SensingMatrix(qcs::Matrix::Identity(cfg.M, cfg.M)) : point_matrix(cfg, N);
  const auto est = qcs::estimate_block_rip(A, cfg.Q, k, probes, qcs::derive_seed(cfg.seed, {qcs::stream::rip}), sided,
                                           cfg.effective_threads());
  json j = qcs::io::to_json(est);
  j["N"] = N;
  j["M"] = cfg.M;
  j["bpdn_condition_met"] = qcs::bpdn_bound_applicable(est.delta);
  print_json(j);
  return kOk;
}

struct PointOptions {
  double fom = 0.6;
  double b = 1.0;
  int trial = 0;
  bool dump = false;
};

int cmd_alloc(const CommonOptions& o, const PointOptions& p) {
  const auto cfg = load_config(o);
  if (!(p.b > 0.0)) throw qcs::ConfigError("--b must be > 0");
  if (!(p.fom > 0.0 && p.fom <= 1.0)) throw qcs::ConfigError("--fom must lie in (0, 1]");
  const qcs::SourceModel model = cfg.model();
  const int N = qcs::fom_to_N(p.fom, cfg.M);
  if (N < 1) throw qcs::ConfigError("--fom gives N < 1");
  const qcs::SensingMatrix A = point_matrix(cfg, N);
  const auto masses = qcs::component_masses(A, model, cfg.channel.sigma_m2);
  const auto alloc = qcs::optimal_allocation(masses, p.b * cfg.M, N);
  const auto forms = qcs::alpha_closed_forms(masses, p.b * cfg.M, N);
  const auto nm = qcs::noise_moments(alloc.delta2, alloc.delta4, N, cfg.channel.sigma_m2, cfg.channel.sigma_c2,
                                    cfg.varianceCrossTerm);
  json j;
  j["fom"] = p.fom;
  j["N"] = N;
  j["b_per_scalar"] = p.b;
  j["allocation"] = qcs::io::to_json(alloc);
  json ld = json::array();
  for (const auto& m : masses) ld.push_back(m.logDet);
  j["log_dets"] = ld;
  j["alpha_closed_form_substituted"] = forms.substituted;
  j["alpha_closed_form_alternative"] = forms.alternative ? json(*forms.alternative) : json(nullptr);
  j["noise_mean"] = nm.mean;
  j["noise_variance"] = nm.variance;
  print_json(j);
  return kOk;
}

int cmd_solve_one(const CommonOptions& o, const PointOptions& p) {
  auto cfg = load_config(o);
  if (!(p.b > 0.0)) throw qcs::ConfigError("--b must be > 0");
  if (!(p.fom > 0.0 && p.fom <= 1.0)) throw qcs::ConfigError("--fom must lie in (0, 1]");
  if (p.trial < 0) throw qcs::ConfigError("--trial must be >= 0");
  const qcs::SourceModel model = cfg.model();
  const int N = qcs::fom_to_N(p.fom, cfg.M);
  if (N < 1) throw qcs::ConfigError("--fom gives N < 1");
  // Use the sweep's own matrix when --fom is a grid point.
  int fomIndex = -1;
  for (std::size_t f = 0; f < cfg.fomGrid.size(); ++f)
    if (qcs::fom_to_N(cfg.fomGrid[f], cfg.M) == N) fomIndex = static_cast<int>(f);
  if (fomIndex < 0) throw qcs::ConfigError("--fom does not match any fom_grid entry");
  const qcs::SensingMatrix A = cfg.matrixMode == qcs::MatrixMode::per_fom
                                   ? qcs::sweep_matrix(cfg.seed, fomIndex, N, cfg.M)
                                   : qcs::trial_matrix(cfg.seed, fomIndex, p.trial, N, cfg.M);
  qcs::PointSetup pt;
  pt.fom = p.fom;
  pt.fomIndex = fomIndex;
  pt.N = N;
  pt.b = p.b;
  pt.q = qcs::quantization_step(cfg.M, N, p.b);
  pt.epsilon = qcs::trial_epsilon(N, pt.q, cfg.channel);
  pt.sourceEnergy = qcs::source_energy(model);
  const qcs::BlockBpdnSolver solver(A, cfg.Q);
  qcs::Reconstruction bp;
  const auto rec =
      qcs::run_trial(cfg, model, pt, p.trial, qcs::trial_seed(cfg.seed, fomIndex, p.trial), solver, A, &bp);
  using qcs::io::jnum;
  json j{{"fom", rec.fom},
         {"N", N},
         {"b_per_scalar", rec.b},
         {"trial", rec.trialIndex},
         {"q", pt.q},
         {"epsilon", rec.epsilon},
         {"err_bpdn", jnum(rec.errBpdn)},
         {"err_oracle", jnum(rec.errOracle)},
         {"srnr_bpdn_db", jnum(qcs::to_db(rec.srnrBpdn))},
         {"srnr_oracle_db", jnum(qcs::to_db(rec.srnrOracle))},
         {"feasible_truth", rec.feasibleTruth},
         {"converged", rec.converged},
         {"iterations", rec.iterations},
         {"residual_norm", rec.residualNorm},
         {"objective_bpdn", rec.objectiveBpdn},
         {"objective_truth", rec.objectiveTruth}};
  if (p.dump) j["reconstruction"] = qcs::io::to_json(bp);
  print_json(j);
  return kOk;
}

int cmd_validate(const CommonOptions& o, double fault) {
  const auto cfg = load_config(o);
  if (!(fault > 0.0)) throw qcs::ConfigError("--inject-shape-fault must be > 0");
  qcs::detail::shapeConstantFault = fault;
  qcs::validate::Options vo;
  vo.seed = cfg.seed;
  bool ok = true;
  for (const auto& c : qcs::validate::run_all(vo)) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    ok = ok && c.passed;
  }
  return ok ? kOk : kValidateFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantized block-sparse compressive sensing: simulation, bounds and validation"};
  app.require_subcommand(1);

  CommonOptions common;
  RipOptions ripOpt;
  PointOptions pointOpt;
  double fault = 1.0;

  auto* sweep = app.add_subcommand("sweep", "Monte Carlo sweep over FoM and rate; writes sweep.csv and meta.json");
  add_common(sweep, common);

  auto* bounds = app.add_subcommand("bounds", "Bound curves only (no trials), CSV on stdout");
  add_common(bounds, common);

  auto* rip = app.add_subcommand("rip", "Sampled block-RIP constant");
  add_common(rip, common);
  rip->add_option("--k", ripOpt.k, "Block sparsity of the probes (default 2K)");
  rip->add_option("--fom", ripOpt.fom, "Fraction of measurements N/M");
  rip->add_option("--probes", ripOpt.probes, "Number of random probes");
  rip->add_option("--sided", ripOpt.sided, "lower or two-sided");
  rip->add_flag("--identity", ripOpt.identity, "Probe the M x M identity instead of a Gaussian matrix");

  auto* alloc = app.add_subcommand("alloc", "Optimal rate allocation at one (FoM, b), JSON on stdout");
  add_common(alloc, common);
  alloc->add_option("--fom", pointOpt.fom, "Fraction of measurements N/M");
  alloc->add_option("--b", pointOpt.b, "Bits per source scalar");

  auto* solve = app.add_subcommand("solve-one", "Run a single trial of the sweep, JSON on stdout");
  add_common(solve, common);
  solve->add_option("--fom", pointOpt.fom, "Fraction of measurements N/M (must be on fom_grid)");
  solve->add_option("--b", pointOpt.b, "Bits per source scalar");
  solve->add_option("--trial", pointOpt.trial, "Trial index");
  solve->add_flag("--dump", pointOpt.dump, "Include the reconstructed vector");

  auto* val = app.add_subcommand("validate", "Run the invariant self-check suite");
  add_common(val, common);
  val->add_option("--inject-shape-fault", fault, "Test hook: scale every shape constant by this factor")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*sweep) return cmd_sweep(common);
    if (*bounds) return cmd_bounds(common);
    if (*rip) return cmd_rip(common, ripOpt);
    if (*alloc) return cmd_alloc(common, pointOpt);
    if (*solve) return cmd_solve_one(common, pointOpt);
    if (*val) return cmd_validate(common, fault);
  } catch (const qcs::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const qcs::NotPositiveDefinite& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPartialFailure;
  }
  return kOk;
}
