#include <array>

#include "quadtensor/errors.hpp"
#include "quadtensor/solvers.hpp"
#include "solver_common.hpp"

namespace quadtensor {

namespace {

std::size_t mode_index(const EntryIndex& t, int mode) {
  return mode == 0 ? t.i : (mode == 1 ? t.j : t.k);
}

// With the other two factors fixed, entry t is affine in the row of `mode`:
//   T_t = <row, 2K(p,q) F_q + 2K(p,s) F_s> + 2K(q,s) <F_q, F_s>
// (diagonal of K is zero), so each row is an independent ridge problem.
void solve_mode(int mode, std::array<Matrix*, 3> factors, const KernelMatrix& kernel,
                const ObservationSet& obs,
                const std::vector<std::vector<std::size_t>>& groups, double shift) {
  const int q = (mode + 1) % 3;
  const int s = (mode + 2) % 3;
  const auto& k = kernel.matrix();
  Matrix& F = *factors[static_cast<std::size_t>(mode)];
  const Matrix& Fq = *factors[static_cast<std::size_t>(q)];
  const Matrix& Fs = *factors[static_cast<std::size_t>(s)];
  const Eigen::Index R = F.cols();

  Eigen::MatrixXd gram(R, R);
  Vector rhs(R);
  Vector a(R);
  for (std::size_t row = 0; row < groups.size(); ++row) {
    gram.setZero();
    gram.diagonal().setConstant(shift);
    rhs.setZero();
    for (const std::size_t n : groups[row]) {
      const auto& t = obs[n].index;
      const auto rq = Fq.row(static_cast<Eigen::Index>(mode_index(t, q)));
      const auto rs = Fs.row(static_cast<Eigen::Index>(mode_index(t, s)));
      a = (2.0 * k(mode, q) * rq + 2.0 * k(mode, s) * rs).transpose();
      const double b = obs[n].value - 2.0 * k(q, s) * rq.dot(rs);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(a);
      rhs += b * a;
    }
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    F.row(static_cast<Eigen::Index>(row)) =
        detail::solve_normal_equations(gram, rhs, "als_solve").transpose();
  }
}

}  // namespace

SolveResult als_solve(const ObservationSet& obs, const KernelMatrix& kernel, std::size_t R,
                      double lambda, const SolverConfig& cfg) {
  cfg.validate();
  if (!kernel.has_zero_diagonal()) {
    throw UnsupportedKernel(
        "als_solve needs a zero-diagonal kernel (e.g. pairwise); the block subproblem is not "
        "least squares otherwise; use gd_solve");
  }
  if (R < 1) throw InvalidArgument("als_solve: R must be >= 1");
  if (!(lambda >= 0.0)) throw InvalidArgument("als_solve: lambda must be >= 0");

  const auto& dims = obs.dims();
  Matrix U = cfg.init ? *cfg.init : random_stacked_init(dims, R, cfg.seed);
  if (static_cast<std::size_t>(U.rows()) != dims.stacked_rows() ||
      static_cast<std::size_t>(U.cols()) != R) {
    throw InvalidArgument("als_solve: init has the wrong shape");
  }
  SolveResult result{{}, unstack(U, dims, kernel)};
  FactorModel& model = result.model;
  std::array<Matrix*, 3> factors{&model.X, &model.Y, &model.Z};

  const auto groups = detail::group_by_mode(obs);
  const double m = static_cast<double>(obs.size());
  const double shift = lambda * m;

  auto record = [&](std::size_t iter, bool force) {
    const Matrix stacked = stack(model);
    const Vector res = residuals_stacked(stacked, kernel, obs);
    result.objective_trace.push_back(res.squaredNorm() / m + lambda * stacked.squaredNorm());
    result.train_error_trace.push_back(detail::rmse(res));
    detail::record_test_error(result, cfg, obs, iter, force, [&](std::size_t cap) {
      return reconstruct_dense(model, cap);
    });
  };

  record(0, true);
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    for (int mode = 0; mode < 3; ++mode) solve_mode(mode, factors, kernel, obs, groups[static_cast<std::size_t>(mode)], shift);
    record(it, it == cfg.max_iters);
    result.iterations_run = it;
    const double prev = result.objective_trace[it - 1];
    const double cur = result.objective_trace[it];
    if (detail::small_change(prev, cur, cfg.tol)) {
      result.termination = Termination::Tolerance;
      break;
    }
    if (cur > prev) {
      result.termination = Termination::NonDecreasing;
      break;
    }
    result.termination = Termination::MaxIters;
  }
  detail::finalize_test_error(result, cfg, obs,
                              [&](std::size_t cap) { return reconstruct_dense(model, cap); });
  return result;
}

}  // namespace quadtensor
