#include <array>
#include <cmath>

#include "quadtensor/errors.hpp"
#include "quadtensor/solvers.hpp"
#include "solver_common.hpp"

namespace quadtensor {

namespace {

std::size_t mode_index(const EntryIndex& t, int mode) {
  return mode == 0 ? t.i : (mode == 1 ? t.j : t.k);
}

Vector cp_residuals(const CPModel& model, const ObservationSet& obs) {
  Vector res(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t n = 0; n < obs.size(); ++n) {
    res(static_cast<Eigen::Index>(n)) = cp_predict_entry(model, obs[n].index) - obs[n].value;
  }
  return res;
}

void solve_mode(int mode, std::array<Matrix*, 3> factors, const ObservationSet& obs,
                const std::vector<std::vector<std::size_t>>& groups, double shift) {
  const int q = (mode + 1) % 3;
  const int s = (mode + 2) % 3;
  Matrix& F = *factors[static_cast<std::size_t>(mode)];
  const Matrix& Fq = *factors[static_cast<std::size_t>(q)];
  const Matrix& Fs = *factors[static_cast<std::size_t>(s)];
  const Eigen::Index r = F.cols();

  Eigen::MatrixXd gram(r, r);
  Vector rhs(r);
  Vector a(r);
  for (std::size_t row = 0; row < groups.size(); ++row) {
    gram.setZero();
    gram.diagonal().setConstant(shift);
    rhs.setZero();
    for (const std::size_t n : groups[row]) {
      const auto& t = obs[n].index;
      a = Fq.row(static_cast<Eigen::Index>(mode_index(t, q)))
              .cwiseProduct(Fs.row(static_cast<Eigen::Index>(mode_index(t, s))))
              .transpose();
      gram.selfadjointView<Eigen::Lower>().rankUpdate(a);
      rhs += obs[n].value * a;
    }
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    F.row(static_cast<Eigen::Index>(row)) =
        detail::solve_normal_equations(gram, rhs, "cp_als_solve").transpose();
  }
}

}  // namespace

CPSolveResult cp_als_solve(const ObservationSet& obs, std::size_t r, double lambda,
                           const SolverConfig& cfg) {
  cfg.validate();
  if (r < 1) throw InvalidArgument("cp_als_solve: r must be >= 1");
  if (!(lambda >= 0.0)) throw InvalidArgument("cp_als_solve: lambda must be >= 0");
  const auto& dims = obs.dims();
  const Matrix U = cfg.init ? *cfg.init : random_stacked_init(dims, r, cfg.seed);
  if (static_cast<std::size_t>(U.rows()) != dims.stacked_rows() ||
      static_cast<std::size_t>(U.cols()) != r) {
    throw InvalidArgument("cp_als_solve: init has the wrong shape");
  }
  const auto d1 = static_cast<Eigen::Index>(dims.d1);
  const auto d2 = static_cast<Eigen::Index>(dims.d2);
  const auto d3 = static_cast<Eigen::Index>(dims.d3);
  CPSolveResult result{{}, CPModel{U.topRows(d1), U.middleRows(d1, d2), U.bottomRows(d3)}};
  CPModel& model = result.model;
  std::array<Matrix*, 3> factors{&model.A, &model.B, &model.C};

  const auto groups = detail::group_by_mode(obs);
  const double m = static_cast<double>(obs.size());
  const double shift = lambda * m;
  auto reconstruct = [&](std::size_t cap) { return cp_reconstruct_dense(model, cap); };

  auto record = [&](std::size_t iter, bool force) {
    const Vector res = cp_residuals(model, obs);
    const double frob = model.A.squaredNorm() + model.B.squaredNorm() + model.C.squaredNorm();
    result.objective_trace.push_back(res.squaredNorm() / m + lambda * frob);
    result.train_error_trace.push_back(detail::rmse(res));
    detail::record_test_error(result, cfg, obs, iter, force, reconstruct);
  };

  record(0, true);
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    for (int mode = 0; mode < 3; ++mode) {
      solve_mode(mode, factors, obs, groups[static_cast<std::size_t>(mode)], shift);
    }
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
  detail::finalize_test_error(result, cfg, obs, reconstruct);
  return result;
}

}  // namespace quadtensor
