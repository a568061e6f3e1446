#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "quadtensor/kernel.hpp"
#include "quadtensor/linalg.hpp"
#include "quadtensor/model.hpp"
#include "quadtensor/objective.hpp"
#include "quadtensor/tensor.hpp"

namespace quadtensor {

enum class Termination { MaxIters, Tolerance, NonDecreasing };

std::string to_string(Termination t);

struct SolverConfig {
  std::size_t max_iters = 100;
  /// Stop when |f_prev - f| <= tol * max(|f_prev|, tiny).
  double tol = 1e-8;
  /// Gradient descent only.
  double step_size = 0.1;
  /// Frank-Wolfe only: exact line search instead of the 2/(k+2) schedule.
  bool line_search = true;
  std::uint64_t seed = 0;

  /// Optional ground truth; when set, test_error_trace holds the relative
  /// held-out error every `test_every` iterations (NaN elsewhere, always
  /// filled at iteration 0 and at the last iteration).
  const DenseTensor* truth = nullptr;
  std::size_t test_every = 1;

  /// Optional stacked starting point [X; Y; Z]; replaces the random init.
  std::optional<Matrix> init;

  void validate() const;
};

/// Per-iteration history shared by all solvers. Every trace has
/// iterations_run + 1 entries (entry 0 is the initial point).
struct SolveTrace {
  std::vector<double> objective_trace;
  std::vector<double> train_error_trace;  // RMSE over the observed entries
  std::vector<double> test_error_trace;   // empty when no truth was supplied
  std::vector<double> gap_trace;          // Frank-Wolfe duality gap; empty otherwise
  std::vector<double> trace_norm_trace;   // Frank-Wolfe tr(X) per iterate; empty otherwise
  std::size_t iterations_run = 0;
  Termination termination = Termination::MaxIters;
};

struct SolveResult : SolveTrace {
  FactorModel model;
};

struct CPSolveResult : SolveTrace {
  CPModel model;
};

/// Random init used by every solver: i.i.d. N(0, 1/sqrt(d R)) entries,
/// d the mean mode size.
Matrix random_stacked_init(const TensorDims& dims, std::size_t R, std::uint64_t seed);

/// Alternating least squares for zero-diagonal kernels. Minimizes
///   1/m sum_Omega (T_hat - y)^2 + lambda (|X|^2 + |Y|^2 + |Z|^2)
/// by exact per-row ridge solves, cycling X, Y, Z.
SolveResult als_solve(const ObservationSet& obs, const KernelMatrix& kernel, std::size_t R,
                      double lambda, const SolverConfig& cfg);

/// Fixed-step gradient descent on the full regularized objective.
SolveResult gd_solve(const ObservationSet& obs, const KernelMatrix& kernel,
                     const RegularizationConfig& reg, const SolverConfig& cfg);

/// Smallest R with R >= sqrt(2m + 2d), d the largest mode.
std::size_t overparameterized_rank(std::size_t m, const TensorDims& dims);

/// Convex objective over PSD matrices X (n x n, n = stacked rows):
///   1/m sum_Omega (<A_t, X> - y_t)^2 + <C, X> + trace_weight tr(X)
///   + diag_weight sum_i penalty(X_ii)
/// subject to tr(X) <= radius. penalty is q_alpha(X_ii) (Diagonal) or
/// q_alpha(sqrt(X_ii)) (RowNorm; with trace_weight = lambda1 this is the
/// lifted form of the factored objective used by gd_solve).
struct ConvexProblem {
  enum class DiagPenalty { Diagonal, RowNorm };

  double alpha = 1.0;
  double radius = 0.0;
  double trace_weight = 0.0;
  double diag_weight = 0.0;
  DiagPenalty penalty = DiagPenalty::Diagonal;
  Perturbation perturbation;

  /// trace bound n * alpha, diagonal q_alpha weighted by lambda1, C with
  /// spectral norm lambda1.
  static ConvexProblem trace_constrained(const TensorDims& dims, double alpha, double lambda1,
                                         std::uint64_t perturbation_seed);
  /// Same minimizer set as the factored objective with config `reg`
  /// (lambdas resolved); radius is large enough never to bind at a minimizer.
  static ConvexProblem lifted(const ObservationSet& obs, const RegularizationConfig& reg);
};

struct FwOptions {
  /// Projected-gradient steps restricted to the face of the current iterate,
  /// run after each linear-minimization step.
  std::size_t inface_steps = 10;
};

/// Projection-free (Frank-Wolfe) solver over {X psd, tr X <= radius}.
/// The returned model is the factored iterate V (X = V V^T) unstacked.
SolveResult fw_solve(const ObservationSet& obs, const KernelMatrix& kernel,
                     const ConvexProblem& problem, const SolverConfig& cfg,
                     const FwOptions& options = {});

/// Convenience overload for the trace-constrained program.
SolveResult fw_solve(const ObservationSet& obs, const KernelMatrix& kernel, double alpha,
                     double lambda1, const SolverConfig& cfg);

/// Evaluates a ConvexProblem objective at X = V V^T.
double convex_objective(const Matrix& V, const KernelMatrix& kernel, const ObservationSet& obs,
                        const ConvexProblem& problem);

/// CP-ALS on the observed entries with ridge lambda per factor row.
CPSolveResult cp_als_solve(const ObservationSet& obs, std::size_t r, double lambda,
                           const SolverConfig& cfg);

struct AuditReport {
  std::size_t rank = 0;
  std::size_t rank_threshold = 0;  // ceil(sqrt(2m + 2d))
  bool below_threshold = false;
  std::vector<double> final_objectives;
  std::vector<double> full_mse;  // empty without truth
  double objective_min = 0.0;
  double objective_max = 0.0;
  double objective_spread = 0.0;  // (max - min) / |min|
  double mse_min = 0.0;
  double mse_max = 0.0;
  double mse_spread = 0.0;
};

/// Runs gd_solve from n_inits random starts (seeds cfg.seed, cfg.seed+1, ...)
/// on one fixed objective and summarizes the spread of the final values.
AuditReport multi_init_audit(const ObservationSet& obs, const KernelMatrix& kernel,
                             const RegularizationConfig& reg, std::size_t n_inits,
                             const SolverConfig& cfg);

}  // namespace quadtensor
