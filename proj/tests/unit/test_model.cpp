#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "quadtensor/errors.hpp"
#include "quadtensor/model.hpp"

using namespace quadtensor;

namespace {

FactorModel random_model(const TensorDims& dims, Eigen::Index R, const KernelMatrix& K,
                         std::uint64_t seed) {
  return {oracle::random_matrix(static_cast<Eigen::Index>(dims.d1), R, seed),
          oracle::random_matrix(static_cast<Eigen::Index>(dims.d2), R, seed + 1),
          oracle::random_matrix(static_cast<Eigen::Index>(dims.d3), R, seed + 2), K};
}

}  // namespace

TEST_CASE("predict_entry equals sensing_inner on the stacked factors") {
  const TensorDims dims{4, 3, 5};
  for (auto kind : {KernelKind::Pairwise, KernelKind::TransE, KernelKind::Identity}) {
    const auto model = random_model(dims, 3, make_kernel(kind), 10);
    const Matrix U = stack(model);
    for (std::size_t f = 0; f < dims.entry_count(); ++f) {
      const auto t = dims.unflat(f);
      const double p = predict_entry(model, t);
      CHECK(std::abs(p - sensing_inner({t, model.kernel}, dims, U)) <= 1e-12 * std::max(1.0, std::abs(p)));
    }
  }
}

TEST_CASE("Gram form agrees with the column-sum form") {
  const TensorDims dims = TensorDims::cube(5);
  for (auto kind : {KernelKind::Pairwise, KernelKind::TransE, KernelKind::Identity}) {
    const auto model = random_model(dims, 4, make_kernel(kind), 20);
    const Matrix U = stack(model);
    const Matrix UUt = U * U.transpose();
    for (std::size_t f = 0; f < dims.entry_count(); f += 2) {
      const auto t = dims.unflat(f);
      const Matrix A = oracle::dense_sensing_matrix(t, dims, model.kernel.matrix());
      const double gram = (A.array() * UUt.array()).sum();
      CHECK(std::abs(gram - oracle::column_sum_entry(model, t, model.kernel.matrix())) <= 1e-10);
    }
  }
}

TEST_CASE("reconstruct_dense fills every entry with predict_entry") {
  const TensorDims dims{2, 3, 4};
  const auto model = random_model(dims, 2, make_kernel(KernelKind::TransE), 30);
  const auto T = reconstruct_dense(model);
  for (std::size_t f = 0; f < dims.entry_count(); ++f) {
    const double p = predict_entry(model, dims.unflat(f));
    CHECK(std::abs(T.values()[f] - p) <= 1e-12 * std::max(1.0, std::abs(p)));
  }
  CHECK_THROWS_AS(predict_entry(model, {2, 0, 0}), InvalidArgument);
  CHECK_THROWS_AS(reconstruct_dense(model, 3), ResourceError);
}

TEST_CASE("stack and unstack round-trip exactly") {
  const TensorDims dims{3, 5, 2};
  const auto model = random_model(dims, 3, make_kernel(KernelKind::Pairwise), 40);
  const Matrix U = stack(model);
  CHECK(U.rows() == 10);
  const auto back = unstack(U, dims, model.kernel);
  CHECK(back.X == model.X);
  CHECK(back.Y == model.Y);
  CHECK(back.Z == model.Z);
  CHECK_THROWS_AS(unstack(U, TensorDims::cube(3), model.kernel), InvalidArgument);
}

TEST_CASE("model validation") {
  auto model = random_model(TensorDims::cube(3), 2, make_kernel(KernelKind::Pairwise), 50);
  CHECK_NOTHROW(model.validate());
  model.Y = Matrix::Zero(3, 3);
  CHECK_THROWS_AS(model.validate(), InvalidArgument);
  model.Y = Matrix::Zero(3, 2);
  model.Z(0, 0) = std::nan("");
  CHECK_THROWS_AS(model.validate(), InvalidArgument);
}

TEST_CASE("ground truth records its realized incoherence") {
  const auto K = make_kernel(KernelKind::Pairwise);
  for (auto dist : {FactorDistribution::StandardNormal, FactorDistribution::NormalScaledInvD}) {
    const auto g = random_ground_truth(TensorDims{6, 7, 8}, 3, K, dist, 5);
    const Matrix U = stack(g.as_model());
    CHECK(incoherence_alpha(U) <= g.alpha);
    CHECK(incoherence_alpha(U) == g.alpha);
    double mx = 0.0;
    for (Eigen::Index r = 0; r < U.rows(); ++r) mx = std::max(mx, U.row(r).squaredNorm());
    CHECK(g.alpha == mx);
    const auto again = random_ground_truth(TensorDims{6, 7, 8}, 3, K, dist, 5);
    CHECK(again.A == g.A);
  }
}

TEST_CASE("scaled ground truth has entry variance about 1/d") {
  const std::size_t d = 200;
  const auto g = random_ground_truth(d, 5, make_kernel(KernelKind::Pairwise),
                                     FactorDistribution::NormalScaledInvD, 1);
  const double var = g.A.squaredNorm() / static_cast<double>(g.A.size());
  CHECK(var == doctest::Approx(1.0 / d).epsilon(0.1));
}

TEST_CASE("a pairwise quadratic tensor is a CP tensor with 3r components") {
  for (std::size_t d = 2; d <= 4; ++d) {
    const TensorDims dims = TensorDims::cube(d);
    const std::size_t r = 2;
    const auto model = random_model(dims, static_cast<Eigen::Index>(r), make_kernel(KernelKind::Pairwise),
                                    60 + d);
    const auto n = static_cast<Eigen::Index>(d);
    const auto R = static_cast<Eigen::Index>(3 * r);
    CPModel cp{Matrix(n, R), Matrix(n, R), Matrix(n, R)};
    const Eigen::VectorXd e = Eigen::VectorXd::Ones(n);
    for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(r); ++l) {
      // x (x) y (x) e + x (x) e (x) z + e (x) y (x) z
      cp.A.col(3 * l) = model.X.col(l);
      cp.B.col(3 * l) = model.Y.col(l);
      cp.C.col(3 * l) = e;
      cp.A.col(3 * l + 1) = model.X.col(l);
      cp.B.col(3 * l + 1) = e;
      cp.C.col(3 * l + 1) = model.Z.col(l);
      cp.A.col(3 * l + 2) = e;
      cp.B.col(3 * l + 2) = model.Y.col(l);
      cp.C.col(3 * l + 2) = model.Z.col(l);
    }
    CHECK(static_cast<std::size_t>(cp.rank()) <= 3 * d);
    const auto Tq = reconstruct_dense(model);
    const auto Tc = cp_reconstruct_dense(cp);
    for (std::size_t f = 0; f < dims.entry_count(); ++f) {
      CHECK(std::abs(Tq.values()[f] - Tc.values()[f]) <= 1e-12);
    }
  }
}

TEST_CASE("CP prediction is the trilinear sum") {
  const auto cp = random_cp_model(TensorDims{3, 4, 5}, 2, 7);
  CHECK(cp.rank() == 2);
  const EntryIndex t{2, 1, 4};
  double s = 0.0;
  for (Eigen::Index l = 0; l < 2; ++l) s += cp.A(2, l) * cp.B(1, l) * cp.C(4, l);
  CHECK(cp_predict_entry(cp, t) == doctest::Approx(s).epsilon(1e-14));
  CHECK(cp_reconstruct_dense(cp)[t] == cp_predict_entry(cp, t));
}
