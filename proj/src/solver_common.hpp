#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "quadtensor/solvers.hpp"

namespace quadtensor::detail {

inline double rmse(const Vector& residuals) {
  return std::sqrt(residuals.squaredNorm() / static_cast<double>(residuals.size()));
}

inline bool small_change(double prev, double cur, double tol) {
  const double ref = std::max(std::abs(prev), std::numeric_limits<double>::min());
  return std::abs(prev - cur) <= tol * ref;
}

/// Appends the held-out error (or NaN) for iteration `iter`.
template <class Reconstruct>
void record_test_error(SolveTrace& trace, const SolverConfig& cfg, const ObservationSet& obs,
                       std::size_t iter, bool force, Reconstruct&& reconstruct) {
  if (cfg.truth == nullptr) return;
  const bool due = force || cfg.test_every <= 1 || iter % cfg.test_every == 0;
  if (!due) {
    trace.test_error_trace.push_back(std::numeric_limits<double>::quiet_NaN());
    return;
  }
  const DenseTensor estimate = reconstruct(cfg.truth->dims().max_dim());
  trace.test_error_trace.push_back(relative_test_error(*cfg.truth, estimate, obs));
}

/// Replaces the last test-error slot with a real value (used once the final
/// iteration is known).
template <class Reconstruct>
void finalize_test_error(SolveTrace& trace, const SolverConfig& cfg, const ObservationSet& obs,
                         Reconstruct&& reconstruct) {
  if (cfg.truth == nullptr || trace.test_error_trace.empty()) return;
  if (!std::isnan(trace.test_error_trace.back())) return;
  const DenseTensor estimate = reconstruct(cfg.truth->dims().max_dim());
  trace.test_error_trace.back() = relative_test_error(*cfg.truth, estimate, obs);
}

/// Observation positions grouped by mode index: rows[mode][index] lists the
/// positions n with obs[n] hitting that slice.
std::vector<std::vector<std::vector<std::size_t>>> group_by_mode(const ObservationSet& obs);

}  // namespace quadtensor::detail

namespace quadtensor::detail {

/// Solves the symmetric normal equations gram * x = rhs. Throws
/// SingularSystem when gram is (numerically) singular.
Vector solve_normal_equations(const Eigen::MatrixXd& gram, const Vector& rhs,
                              const char* context);

}  // namespace quadtensor::detail
