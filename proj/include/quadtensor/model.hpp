#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "quadtensor/kernel.hpp"
#include "quadtensor/linalg.hpp"
#include "quadtensor/tensor.hpp"

namespace quadtensor {

/// Trainable quadratic model: T_ijk = sum_l kappa(X_il, Y_jl, Z_kl).
struct FactorModel {
  Matrix X;
  Matrix Y;
  Matrix Z;
  KernelMatrix kernel;

  TensorDims dims() const {
    return {static_cast<std::size_t>(X.rows()), static_cast<std::size_t>(Y.rows()),
            static_cast<std::size_t>(Z.rows())};
  }
  Eigen::Index rank() const { return X.cols(); }

  /// Equal column counts >= 1, positive row counts, finite entries.
  void validate() const;
};

/// U = [X; Y; Z].
Matrix stack(const FactorModel& model);
FactorModel unstack(const Matrix& U, const TensorDims& dims, const KernelMatrix& kernel);

struct GroundTruth {
  Matrix A;
  Matrix B;
  Matrix C;
  KernelMatrix kernel;
  /// Realized max squared row norm over [A; B; C].
  double alpha = 0.0;

  FactorModel as_model() const { return {A, B, C, kernel}; }
};

/// Baseline: T_ijk = sum_l A_il B_jl C_kl.
struct CPModel {
  Matrix A;
  Matrix B;
  Matrix C;

  TensorDims dims() const {
    return {static_cast<std::size_t>(A.rows()), static_cast<std::size_t>(B.rows()),
            static_cast<std::size_t>(C.rows())};
  }
  Eigen::Index rank() const { return A.cols(); }
  void validate() const;
};

enum class FactorDistribution {
  StandardNormal,     // N(0, 1) entries
  NormalScaledInvD,   // N(0, 1/d) entries, d the mode size
};

double predict_entry(const FactorModel& model, const EntryIndex& t);
DenseTensor reconstruct_dense(const FactorModel& model, std::size_t dim_cap = kDefaultDimCap);

double cp_predict_entry(const CPModel& model, const EntryIndex& t);
DenseTensor cp_reconstruct_dense(const CPModel& model, std::size_t dim_cap = kDefaultDimCap);

GroundTruth random_ground_truth(const TensorDims& dims, std::size_t r, const KernelMatrix& kernel,
                                FactorDistribution dist, std::uint64_t seed);
inline GroundTruth random_ground_truth(std::size_t d, std::size_t r, const KernelMatrix& kernel,
                                       FactorDistribution dist, std::uint64_t seed) {
  return random_ground_truth(TensorDims::cube(d), r, kernel, dist, seed);
}

/// Standard-normal CP factors.
CPModel random_cp_model(const TensorDims& dims, std::size_t r, std::uint64_t seed);

/// max_i ||e_i^T U||^2.
double incoherence_alpha(const Matrix& U);

/// i.i.d. N(0, stddev^2) entries, filled row by row.
Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

}  // namespace quadtensor
