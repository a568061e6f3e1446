#include <algorithm>
#include <iostream>
#include <limits>

#include "quadtensor/errors.hpp"
#include "quadtensor/solvers.hpp"

namespace quadtensor {

namespace {

double relative_spread(double lo, double hi) {
  if (hi == lo) return 0.0;
  if (lo == 0.0) return std::numeric_limits<double>::infinity();
  return (hi - lo) / std::abs(lo);
}

}  // namespace

AuditReport multi_init_audit(const ObservationSet& obs, const KernelMatrix& kernel,
                             const RegularizationConfig& reg, std::size_t n_inits,
                             const SolverConfig& cfg) {
  if (n_inits < 1) throw InvalidArgument("multi_init_audit: n_inits must be >= 1");
  AuditReport report;
  report.rank = reg.rank;
  report.rank_threshold = overparameterized_rank(obs.size(), obs.dims());
  report.below_threshold = reg.rank < report.rank_threshold;
  if (report.below_threshold) {
    std::clog << "warning: audit rank " << reg.rank << " is below " << report.rank_threshold
              << "; distinct local minima are possible\n";
  }

  for (std::size_t i = 0; i < n_inits; ++i) {
    SolverConfig run = cfg;
    run.seed = cfg.seed + i;
    run.init.reset();
    const DenseTensor* truth = cfg.truth;
    run.truth = nullptr;
    const SolveResult res = gd_solve(obs, kernel, reg, run);
    report.final_objectives.push_back(res.objective_trace.back());
    if (truth != nullptr) {
      report.full_mse.push_back(mean_squared_error_full(*truth, reconstruct_dense(res.model, truth->dims().max_dim())));
    }
  }

  const auto [omin, omax] =
      std::minmax_element(report.final_objectives.begin(), report.final_objectives.end());
  report.objective_min = *omin;
  report.objective_max = *omax;
  report.objective_spread = relative_spread(*omin, *omax);
  if (!report.full_mse.empty()) {
    const auto [emin, emax] = std::minmax_element(report.full_mse.begin(), report.full_mse.end());
    report.mse_min = *emin;
    report.mse_max = *emax;
    report.mse_spread = relative_spread(*emin, *emax);
  }
  return report;
}

}  // namespace quadtensor
