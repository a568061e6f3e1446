#pragma once

#include <cstddef>
#include <cstdint>

#include "quadtensor/linalg.hpp"
#include "quadtensor/model.hpp"
#include "quadtensor/tensor.hpp"

namespace quadtensor {

/// Hyperparameters of the regularized objective
///   g(X,Y,Z) = 1/m sum_Omega (T_hat - y)^2
///            + lambda1 (|X|_F^2 + |Y|_F^2 + |Z|_F^2)
///            + lambda2 sum_rows q_alpha(|row|)
///            + <C, U U^T>.
/// A negative lambda means "derive from default_lambdas".
struct RegularizationConfig {
  double alpha = 1.0;
  double lambda1 = -1.0;
  double lambda2 = -1.0;
  std::size_t rank = 1;
  std::uint64_t perturbation_seed = 0;

  void validate() const;
};

struct LambdaPair {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

/// lambda1 = alpha / sqrt(d m), lambda2 = 2 d lambda1 / alpha.
LambdaPair default_lambdas(double alpha, double d, double m);

/// Replaces negative lambdas using default_lambdas with d the mean mode size.
RegularizationConfig resolve_lambdas(RegularizationConfig cfg, const TensorDims& dims,
                                     std::size_t m);

/// (|x| - sqrt(alpha))^4 for |x| >= sqrt(alpha), else 0.
double q_alpha(double x, double alpha);
double q_alpha_deriv(double x, double alpha);

/// Random PSD matrix C = scale * G G^T kept in factored form. scale is set
/// so that ||C||_2 == lambda1. An empty G means C = 0.
struct Perturbation {
  Matrix G;
  double scale = 0.0;

  bool is_zero() const { return scale == 0.0 || G.cols() == 0; }
  /// <C, U U^T> = scale * ||G^T U||_F^2.
  double inner(const Matrix& U) const;
  /// C U.
  Matrix apply(const Matrix& U) const;
  /// Dense C (tests and small problems only).
  Matrix dense(Eigen::Index n) const;
};

/// G is n x n standard normal (n = stacked rows); deterministic per seed.
Perturbation make_perturbation(std::size_t n, double lambda1, std::uint64_t seed);

/// Largest eigenvalue of G G^T by power iteration from the normalized all-ones
/// vector, relative tolerance 1e-9, at most 10 n iterations (falls back to a
/// dense eigensolve if that cap is hit).
double gram_spectral_norm(const Matrix& G);

struct ObjectiveBreakdown {
  double mse = 0.0;
  double frob_penalty = 0.0;
  double qalpha_penalty = 0.0;
  double perturbation_term = 0.0;
  double total = 0.0;
};

struct FactorGradient {
  Matrix dX;
  Matrix dY;
  Matrix dZ;
};

ObjectiveBreakdown objective_eval(const FactorModel& model, const ObservationSet& obs,
                                  const RegularizationConfig& cfg, const Perturbation& pert);
FactorGradient objective_grad(const FactorModel& model, const ObservationSet& obs,
                              const RegularizationConfig& cfg, const Perturbation& pert);

// Stacked-form versions used by the solvers. cfg lambdas must be resolved.
ObjectiveBreakdown objective_eval_stacked(const Matrix& U, const KernelMatrix& kernel,
                                          const ObservationSet& obs,
                                          const RegularizationConfig& cfg,
                                          const Perturbation& pert);
Matrix objective_grad_stacked(const Matrix& U, const KernelMatrix& kernel,
                              const ObservationSet& obs, const RegularizationConfig& cfg,
                              const Perturbation& pert);

/// Objective and gradient sharing one residual pass.
ObjectiveBreakdown objective_eval_grad_stacked(const Matrix& U, const KernelMatrix& kernel,
                                               const ObservationSet& obs,
                                               const RegularizationConfig& cfg,
                                               const Perturbation& pert, Matrix& grad);

/// Per-observation residuals T_hat_t - y_t for a stacked factor matrix.
Vector residuals_stacked(const Matrix& U, const KernelMatrix& kernel, const ObservationSet& obs);

}  // namespace quadtensor
