#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "quadtensor/errors.hpp"
#include "quadtensor/objective.hpp"

using namespace quadtensor;

namespace {

struct Fixture {
  TensorDims dims;
  FactorModel model;
  ObservationSet obs;
};

Fixture make_fixture(const TensorDims& dims, Eigen::Index R, const KernelMatrix& K, std::size_t m,
                     std::uint64_t seed) {
  FactorModel model{oracle::random_matrix(static_cast<Eigen::Index>(dims.d1), R, seed),
                    oracle::random_matrix(static_cast<Eigen::Index>(dims.d2), R, seed + 1),
                    oracle::random_matrix(static_cast<Eigen::Index>(dims.d3), R, seed + 2), K};
  auto idx = sample_uniform_entries(dims, m, seed + 3);
  std::vector<Observation> entries;
  std::mt19937_64 rng(seed + 4);
  std::normal_distribution<double> n;
  for (const auto& t : idx) entries.push_back({t, 2.0 * n(rng)});
  return {dims, model, ObservationSet(dims, entries)};
}

RegularizationConfig reg_for(double alpha, double l1, double l2, Eigen::Index R) {
  RegularizationConfig cfg;
  cfg.alpha = alpha;
  cfg.lambda1 = l1;
  cfg.lambda2 = l2;
  cfg.rank = static_cast<std::size_t>(R);
  return cfg;
}

double rel_err(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace

TEST_CASE("default lambdas follow the theory formulas") {
  const auto l = default_lambdas(2.0, 10.0, 40.0);
  CHECK(l.lambda1 == doctest::Approx(2.0 / 20.0));
  CHECK(l.lambda2 == doctest::Approx(2.0 * 10.0 * 0.1 / 2.0));
  CHECK_THROWS_AS(default_lambdas(0.0, 1.0, 1.0), InvalidArgument);

  RegularizationConfig cfg = reg_for(2.0, -1.0, 0.7, 1);
  const auto r = resolve_lambdas(cfg, TensorDims{8, 10, 12}, 40);
  CHECK(r.lambda1 == doctest::Approx(2.0 / 20.0));
  CHECK(r.lambda2 == 0.7);
  cfg.alpha = -1.0;
  CHECK_THROWS_AS(resolve_lambdas(cfg, TensorDims::cube(2), 1), InvalidArgument);
}

TEST_CASE("q_alpha values and derivative") {
  const double alpha = 4.0;
  CHECK(q_alpha(1.5, alpha) == 0.0);
  CHECK(q_alpha(2.0, alpha) == 0.0);
  CHECK(q_alpha(3.0, alpha) == doctest::Approx(1.0));
  CHECK(q_alpha(-4.0, alpha) == doctest::Approx(16.0));
  CHECK(q_alpha_deriv(3.0, alpha) == doctest::Approx(4.0));
  CHECK(q_alpha_deriv(-3.0, alpha) == doctest::Approx(-4.0));
  for (double x : {-5.0, -2.5, -1.0, 0.3, 2.1, 3.7}) {
    const double h = 1e-6;
    const double fd = (q_alpha(x + h, alpha) - q_alpha(x - h, alpha)) / (2 * h);
    CHECK(q_alpha_deriv(x, alpha) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
  }
  CHECK_THROWS_AS(q_alpha(1.0, 0.0), InvalidArgument);
}

TEST_CASE("q_alpha is smooth at the threshold") {
  const double alpha = 2.0;
  const double s = std::sqrt(alpha);
  double prev = 1e300;
  for (double h : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const double second = (q_alpha(s + h, alpha) - 2 * q_alpha(s, alpha) + q_alpha(s - h, alpha)) / (h * h);
    CHECK(std::abs(second) <= 1.0);
    CHECK(std::abs(second) <= prev);
    prev = std::abs(second);
    // One-sided first derivatives agree in the limit.
    const double right = (q_alpha(s + h, alpha) - q_alpha(s, alpha)) / h;
    const double left = (q_alpha(s, alpha) - q_alpha(s - h, alpha)) / h;
    CHECK(std::abs(right - left) <= h);
  }
}

TEST_CASE("perturbation has spectral norm lambda1 and is PSD") {
  const auto p = make_perturbation(9, 0.3, 4);
  const Matrix C = p.dense(9);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
  CHECK(eig.eigenvalues().maxCoeff() == doctest::Approx(0.3).epsilon(1e-8));
  const Matrix U = oracle::random_matrix(9, 2, 5);
  CHECK(p.inner(U) == doctest::Approx((C.array() * (U * U.transpose()).array()).sum()).epsilon(1e-12));
  CHECK(rel_err(p.apply(U), C * U) <= 1e-12);
  CHECK(make_perturbation(9, 0.0, 4).is_zero());
  const auto q = make_perturbation(9, 0.3, 4);
  CHECK(q.G == p.G);
}

TEST_CASE("gram_spectral_norm matches a dense eigensolve") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Matrix G = oracle::random_matrix(15, 15, s);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G * G.transpose(), Eigen::EigenvaluesOnly);
    CHECK(gram_spectral_norm(G) == doctest::Approx(eig.eigenvalues().maxCoeff()).epsilon(1e-6));
  }
  CHECK(gram_spectral_norm(Matrix::Zero(4, 4)) == 0.0);
}

TEST_CASE("objective_eval matches a naive dense reimplementation") {
  for (auto kind : {KernelKind::Pairwise, KernelKind::TransE, KernelKind::Identity}) {
    const auto fx = make_fixture(TensorDims{4, 5, 3}, 3, make_kernel(kind), 30, 10);
    const auto cfg = reg_for(1.5, 0.05, 0.2, 3);
    const auto pert = make_perturbation(12, 0.05, 2);
    const auto b = objective_eval(fx.model, fx.obs, cfg, pert);
    const double naive = oracle::naive_objective(fx.model, fx.obs, 1.5, 0.05, 0.2, pert.dense(12));
    CHECK(std::abs(b.total - naive) <= 1e-10 * std::max(1.0, std::abs(naive)));
    CHECK(b.total == doctest::Approx(b.mse + b.frob_penalty + b.qalpha_penalty + b.perturbation_term));
    CHECK(b.qalpha_penalty > 0.0);
    CHECK(b.perturbation_term > 0.0);
  }
}

TEST_CASE("unregularized objective is the mean squared residual") {
  const auto fx = make_fixture(TensorDims::cube(4), 2, make_kernel(KernelKind::Pairwise), 20, 40);
  const auto b = objective_eval(fx.model, fx.obs, reg_for(1.0, 0.0, 0.0, 2), Perturbation{});
  double s = 0.0;
  for (const auto& e : fx.obs.entries()) s += std::pow(predict_entry(fx.model, e.index) - e.value, 2);
  CHECK(b.total == doctest::Approx(s / 20.0).epsilon(1e-13));
  const Vector res = residuals_stacked(stack(fx.model), fx.model.kernel, fx.obs);
  CHECK(res.squaredNorm() / 20.0 == doctest::Approx(b.mse).epsilon(1e-13));
}

TEST_CASE("objective is invariant under a common column permutation") {
  const auto fx = make_fixture(TensorDims{3, 4, 5}, 4, make_kernel(KernelKind::TransE), 25, 50);
  const auto cfg = reg_for(1.0, 0.1, 0.3, 4);
  const auto pert = make_perturbation(12, 0.1, 1);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  FactorModel p{fx.model.X * perm, fx.model.Y * perm, fx.model.Z * perm, fx.model.kernel};
  const double a = objective_eval(fx.model, fx.obs, cfg, pert).total;
  const double b = objective_eval(p, fx.obs, cfg, pert).total;
  CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
}

TEST_CASE("objective_grad matches central finite differences") {
  const TensorDims dims{4, 3, 5};
  const Eigen::Index R = 3;
  for (auto kind : {KernelKind::Pairwise, KernelKind::TransE, KernelKind::Identity}) {
    for (std::uint64_t point = 0; point < 10; ++point) {
      const auto fx = make_fixture(dims, R, make_kernel(kind), 30, 100 + 10 * point);
      const auto cfg = reg_for(1.0, 0.07, 0.4, R);
      const auto pert = make_perturbation(12, 0.07, point);
      const auto g = objective_grad(fx.model, fx.obs, cfg, pert);
      Matrix analytic(12, R), numeric(12, R);
      analytic << g.dX, g.dY, g.dZ;
      Matrix U = stack(fx.model);
      for (Eigen::Index r = 0; r < U.rows(); ++r) {
        for (Eigen::Index c = 0; c < R; ++c) {
          const double x = U(r, c);
          const double h = 1e-5 * (1.0 + std::abs(x));
          U(r, c) = x + h;
          const double fp = objective_eval(unstack(U, dims, fx.model.kernel), fx.obs, cfg, pert).total;
          U(r, c) = x - h;
          const double fm = objective_eval(unstack(U, dims, fx.model.kernel), fx.obs, cfg, pert).total;
          U(r, c) = x;
          numeric(r, c) = (fp - fm) / (2 * h);
        }
      }
      CHECK(rel_err(analytic, numeric) < 1e-5);
    }
  }
}

TEST_CASE("stacked and fused entry points agree") {
  const auto fx = make_fixture(TensorDims::cube(4), 2, make_kernel(KernelKind::Identity), 30, 7);
  const auto cfg = reg_for(0.8, 0.02, 0.5, 2);
  const auto pert = make_perturbation(12, 0.02, 3);
  const Matrix U = stack(fx.model);
  Matrix grad;
  const auto fused = objective_eval_grad_stacked(U, fx.model.kernel, fx.obs, cfg, pert, grad);
  const auto plain = objective_eval_stacked(U, fx.model.kernel, fx.obs, cfg, pert);
  CHECK(fused.total == doctest::Approx(plain.total).epsilon(1e-14));
  CHECK(rel_err(grad, objective_grad_stacked(U, fx.model.kernel, fx.obs, cfg, pert)) <= 1e-14);
}

TEST_CASE("objective rejects inconsistent input") {
  const auto fx = make_fixture(TensorDims::cube(3), 2, make_kernel(KernelKind::Pairwise), 10, 1);
  CHECK_THROWS_AS(objective_eval(fx.model, fx.obs, reg_for(1.0, 0.1, 0.1, 3), {}), InvalidArgument);
  CHECK_THROWS_AS(objective_eval_stacked(stack(fx.model), fx.model.kernel, fx.obs, reg_for(1.0, -1.0, 0.1, 2), {}),
                  InvalidArgument);
  // The model-level entry point fills in default lambdas.
  const auto defaults = resolve_lambdas(reg_for(1.0, -1.0, 0.1, 2), fx.obs.dims(), fx.obs.size());
  CHECK(objective_eval(fx.model, fx.obs, reg_for(1.0, -1.0, 0.1, 2), {}).total ==
        objective_eval(fx.model, fx.obs, defaults, {}).total);
  CHECK_THROWS_AS(objective_eval(fx.model, fx.obs, reg_for(1.0, 0.1, 0.1, 2), make_perturbation(8, 0.1, 1)),
                  InvalidArgument);
  const ObservationSet other(TensorDims::cube(4), {{{0, 0, 0}, 1.0}});
  CHECK_THROWS_AS(objective_eval(fx.model, other, reg_for(1.0, 0.1, 0.1, 2), {}), InvalidArgument);
}
