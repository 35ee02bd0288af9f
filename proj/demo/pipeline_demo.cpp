// One pass through the pipeline at a single (FoM, b) point: sample a block
// sparse source, measure, quantize, decode with block BPDN and the oracle, and
// print the bound values next to the achieved errors.
//
//   pipeline_demo [fom] [b] [seed]

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include "qcs/qcs.hpp"

int main(int argc, char** argv) {
  const double fom = argc > 1 ? std::atof(argv[1]) : 0.6;
  const double b = argc > 2 ? std::atof(argv[2]) : 1.0;
  const std::uint64_t seed = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 0;

  try {
    qcs::ExperimentConfig cfg;
    cfg.fomGrid = {fom};
    cfg.seed = seed;
    cfg.validate();
    const qcs::SourceModel model = cfg.model();
    const double energy = qcs::source_energy(model);

    const qcs::FomSetup fs = qcs::prepare_fom(cfg, model, 0);
    qcs::SweepRow row;
    row.fom = fom;
    row.N = fs.N;
    row.b = b;
    qcs::evaluate_bounds(cfg, fs, energy, row);

    qcs::PointSetup pt;
    pt.fom = fom;
    pt.N = fs.N;
    pt.b = b;
    pt.q = qcs::quantization_step(cfg.M, fs.N, b);
    pt.epsilon = qcs::trial_epsilon(fs.N, pt.q, cfg.channel);
    pt.sourceEnergy = energy;
    const qcs::BlockBpdnSolver solver(*fs.A, cfg.Q);
    const auto rec = qcs::run_trial(cfg, model, pt, 0, qcs::trial_seed(seed, 0, 0), solver, *fs.A);

    std::cout << std::setprecision(5);
    std::cout << "M=" << cfg.M << " N=" << fs.N << " b=" << b << " bits/scalar, q=" << pt.q
              << ", eps=" << pt.epsilon << '\n';
    std::cout << "delta_K=" << row.deltaK << " delta_2K=" << row.delta2K << " beta=" << row.beta
              << " alpha=" << row.alpha << " a=" << row.a << '\n';
    std::cout << "BPDN:   err=" << rec.errBpdn << "  SRNR=" << qcs::to_db(rec.srnrBpdn) << " dB  iterations="
              << rec.iterations << (rec.converged ? "" : " (not converged)") << '\n';
    std::cout << "oracle: err=" << rec.errOracle << "  SRNR=" << qcs::to_db(rec.srnrOracle) << " dB\n";
    if (row.bpdnBound)
      std::cout << "BPDN error bound " << row.bpdnBound->errorBound << " (confidence " << row.bpdnBound->confidence
                << ")\n";
    else
      std::cout << "BPDN error bound not applicable (delta_2K >= sqrt(2) - 1)\n";
    if (row.oracleBound) std::cout << "oracle error level " << row.oracleBound->errorBound << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
