#pragma once

// Slow reference implementations used only by the tests.

#include <cmath>
#include <random>

#include "quadtensor/kernel.hpp"
#include "quadtensor/linalg.hpp"
#include "quadtensor/model.hpp"
#include "quadtensor/objective.hpp"
#include "quadtensor/tensor.hpp"

namespace oracle {

using quadtensor::Matrix;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                            double sd = 1.0) {
  std::mt19937_64 rng(seed);
  return quadtensor::gaussian_matrix(rows, cols, sd, rng);
}

// Dense A_t: K scattered onto rows/cols (i, d1+j, d1+d2+k).
inline Matrix dense_sensing_matrix(const quadtensor::EntryIndex& t, const quadtensor::TensorDims& dims,
                                   const Eigen::Matrix3d& K) {
  const auto n = static_cast<Eigen::Index>(dims.stacked_rows());
  Matrix A = Matrix::Zero(n, n);
  const Eigen::Index idx[3] = {static_cast<Eigen::Index>(t.i), static_cast<Eigen::Index>(dims.d1 + t.j),
                               static_cast<Eigen::Index>(dims.d1 + dims.d2 + t.k)};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) A(idx[a], idx[b]) += K(a, b);
  return A;
}

// sum_l [a_l b_l c_l] K [a_l b_l c_l]^T, one scalar column at a time.
inline double column_sum_entry(const quadtensor::FactorModel& m, const quadtensor::EntryIndex& t,
                               const Eigen::Matrix3d& K) {
  double s = 0.0;
  for (Eigen::Index l = 0; l < m.X.cols(); ++l) {
    Eigen::Vector3d v(m.X(static_cast<Eigen::Index>(t.i), l), m.Y(static_cast<Eigen::Index>(t.j), l),
                      m.Z(static_cast<Eigen::Index>(t.k), l));
    s += v.dot(K * v);
  }
  return s;
}

// The regularized objective written out with dense matrices.
inline double naive_objective(const quadtensor::FactorModel& m, const quadtensor::ObservationSet& obs,
                              double alpha, double lambda1, double lambda2, const Matrix& C) {
  Matrix U(m.X.rows() + m.Y.rows() + m.Z.rows(), m.X.cols());
  U << m.X, m.Y, m.Z;
  const Matrix UUt = U * U.transpose();
  double mse = 0.0;
  for (const auto& e : obs.entries()) {
    const Matrix A = dense_sensing_matrix(e.index, obs.dims(), m.kernel.matrix());
    mse += std::pow((A.array() * UUt.array()).sum() - e.value, 2);
  }
  mse /= static_cast<double>(obs.size());
  double q = 0.0;
  for (Eigen::Index r = 0; r < U.rows(); ++r) {
    const double x = U.row(r).norm();
    if (x > std::sqrt(alpha)) q += std::pow(x - std::sqrt(alpha), 4);
  }
  return mse + lambda1 * U.squaredNorm() + lambda2 * q + (C.array() * UUt.array()).sum();
}

}  // namespace oracle
