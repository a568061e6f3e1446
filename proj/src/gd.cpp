#include <cmath>
#include <string>

#include "quadtensor/errors.hpp"
#include "quadtensor/solvers.hpp"
#include "solver_common.hpp"

namespace quadtensor {

namespace {

constexpr double kDivergenceLimit = 1e12;

}  // namespace

SolveResult gd_solve(const ObservationSet& obs, const KernelMatrix& kernel,
                     const RegularizationConfig& reg_in, const SolverConfig& cfg) {
  cfg.validate();
  const auto& dims = obs.dims();
  const RegularizationConfig reg = resolve_lambdas(reg_in, dims, obs.size());
  const Perturbation pert =
      make_perturbation(dims.stacked_rows(), reg.lambda1, reg.perturbation_seed);

  Matrix U = cfg.init ? *cfg.init : random_stacked_init(dims, reg.rank, cfg.seed);
  if (static_cast<std::size_t>(U.rows()) != dims.stacked_rows() ||
      static_cast<std::size_t>(U.cols()) != reg.rank) {
    throw InvalidArgument("gd_solve: init has the wrong shape");
  }

  SolveResult result{{}, unstack(U, dims, kernel)};
  auto reconstruct = [&](std::size_t cap) { return reconstruct_dense(unstack(U, dims, kernel), cap); };

  Matrix grad;
  for (std::size_t it = 0;; ++it) {
    const auto f = objective_eval_grad_stacked(U, kernel, obs, reg, pert, grad);
    if (!std::isfinite(f.total) || f.total > kDivergenceLimit) {
      throw Divergence("gd_solve diverged at iteration " + std::to_string(it) + " (objective " +
                       std::to_string(f.total) + "); try a smaller step size");
    }
    result.objective_trace.push_back(f.total);
    result.train_error_trace.push_back(std::sqrt(f.mse));
    result.iterations_run = it;
    const bool last = it == cfg.max_iters;
    bool stop = last;
    if (it > 0 && detail::small_change(result.objective_trace[it - 1], f.total, cfg.tol)) {
      result.termination = Termination::Tolerance;
      stop = true;
    } else if (last) {
      result.termination = Termination::MaxIters;
    }
    detail::record_test_error(result, cfg, obs, it, stop || it == 0, reconstruct);
    if (stop) break;
    U.noalias() -= cfg.step_size * grad;
  }
  result.model = unstack(U, dims, kernel);
  return result;
}

}  // namespace quadtensor
