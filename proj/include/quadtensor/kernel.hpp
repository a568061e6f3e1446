#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "quadtensor/errors.hpp"
#include "quadtensor/linalg.hpp"
#include "quadtensor/tensor.hpp"

namespace quadtensor {

enum class KernelKind { Pairwise, TransE, Identity, Custom };

/// Symmetric 3x3 matrix K defining the quadratic score
///   kappa(a, b, c) = <[a; b; c], K [a; b; c]>
/// of three factor rows.
class KernelMatrix {
 public:
  /// Symmetrizes (K + K^T) / 2; kappa is unchanged by this.
  /// Throws InvalidArgument on non-finite input.
  static KernelMatrix from_matrix(const Eigen::Matrix3d& k, KernelKind kind = KernelKind::Custom);

  const Eigen::Matrix3d& matrix() const { return k_; }
  double operator()(int a, int b) const { return k_(a, b); }
  KernelKind kind() const { return kind_; }
  bool has_zero_diagonal() const { return k_(0, 0) == 0.0 && k_(1, 1) == 0.0 && k_(2, 2) == 0.0; }

  /// "pairwise", "transe", "identity", or the nine comma-separated entries.
  std::string to_string() const;

 private:
  KernelMatrix(const Eigen::Matrix3d& k, KernelKind kind) : k_(k), kind_(kind) {}

  Eigen::Matrix3d k_;
  KernelKind kind_;
};

KernelMatrix make_kernel(KernelKind kind);
KernelMatrix make_custom_kernel(const Eigen::Matrix3d& k);

/// Accepts the names above or a row-major list of nine numbers.
KernelMatrix parse_kernel(std::string_view spec);

template <class A, class B, class C>
double kernel_eval(const KernelMatrix& K, const Eigen::MatrixBase<A>& a,
                   const Eigen::MatrixBase<B>& b, const Eigen::MatrixBase<C>& c) {
  if (a.size() != b.size() || a.size() != c.size()) {
    throw InvalidArgument("kernel_eval: argument lengths differ");
  }
  const auto& k = K.matrix();
  return k(0, 0) * a.squaredNorm() + k(1, 1) * b.squaredNorm() + k(2, 2) * c.squaredNorm() +
         2.0 * k(0, 1) * a.dot(b) + 2.0 * k(0, 2) * a.dot(c) + 2.0 * k(1, 2) * b.dot(c);
}

/// Rows of the stacked matrix U = [X; Y; Z] touched by entry t.
struct StackedRows {
  Eigen::Index x;
  Eigen::Index y;
  Eigen::Index z;
};

inline StackedRows stacked_rows(const TensorDims& dims, const EntryIndex& t) {
  return {static_cast<Eigen::Index>(t.i), static_cast<Eigen::Index>(dims.d1 + t.j),
          static_cast<Eigen::Index>(dims.d1 + dims.d2 + t.k)};
}

/// Implicit sensing matrix A_t: K placed on rows/cols (i, d1+j, d1+d2+k) of a
/// stacked_rows x stacked_rows zero matrix. Never materialized.
struct SensingEntry {
  EntryIndex index;
  std::reference_wrapper<const KernelMatrix> kernel;
};

/// <A_t, U U^T> evaluated from three rows of U.
double sensing_inner(const SensingEntry& entry, const TensorDims& dims, const Matrix& U);

struct WeightedEntry {
  EntryIndex index;
  double weight = 0.0;
};

/// (sum_t z_t A_t) U, scattered into the three rows each A_t touches.
Matrix sensing_accumulate(std::span<const WeightedEntry> weights, const KernelMatrix& K,
                          const TensorDims& dims, const Matrix& U);

}  // namespace quadtensor
