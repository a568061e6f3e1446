#include "solver_common.hpp"

#include <cmath>

#include "quadtensor/errors.hpp"

namespace quadtensor {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::MaxIters: return "max_iters";
    case Termination::Tolerance: return "tolerance";
    case Termination::NonDecreasing: return "non_decreasing";
  }
  return "unknown";
}

void SolverConfig::validate() const {
  if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
  if (!(tol >= 0.0)) throw InvalidArgument("tol must be >= 0");
  if (!(step_size > 0.0)) throw InvalidArgument("step_size must be positive");
}

Matrix random_stacked_init(const TensorDims& dims, std::size_t R, std::uint64_t seed) {
  if (R < 1) throw InvalidArgument("rank must be >= 1");
  const double d = static_cast<double>(dims.stacked_rows()) / 3.0;
  const double sd = std::pow(d * static_cast<double>(R), -0.25);
  std::mt19937_64 rng(seed);
  return gaussian_matrix(static_cast<Eigen::Index>(dims.stacked_rows()),
                         static_cast<Eigen::Index>(R), sd, rng);
}

std::size_t overparameterized_rank(std::size_t m, const TensorDims& dims) {
  const double bound = std::sqrt(2.0 * static_cast<double>(m) + 2.0 * static_cast<double>(dims.max_dim()));
  auto R = static_cast<std::size_t>(std::ceil(bound));
  // Guard against ceil landing one short on exact squares due to rounding.
  while (static_cast<double>(R) * static_cast<double>(R) <
         2.0 * static_cast<double>(m) + 2.0 * static_cast<double>(dims.max_dim())) {
    ++R;
  }
  return R;
}

namespace detail {

std::vector<std::vector<std::vector<std::size_t>>> group_by_mode(const ObservationSet& obs) {
  const auto& dims = obs.dims();
  std::vector<std::vector<std::vector<std::size_t>>> groups(3);
  groups[0].resize(dims.d1);
  groups[1].resize(dims.d2);
  groups[2].resize(dims.d3);
  for (std::size_t n = 0; n < obs.size(); ++n) {
    const auto& t = obs[n].index;
    groups[0][t.i].push_back(n);
    groups[1][t.j].push_back(n);
    groups[2][t.k].push_back(n);
  }
  return groups;
}

}  // namespace detail

}  // namespace quadtensor

namespace quadtensor::detail {

Vector solve_normal_equations(const Eigen::MatrixXd& gram, const Vector& rhs,
                              const char* context) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const Vector diag = ldlt.vectorD();
  const double scale = diag.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(scale > 0.0) ||
      diag.minCoeff() <= 1e-12 * scale * static_cast<double>(gram.rows())) {
    throw SingularSystem(std::string(context) +
                         ": singular normal equations (use a positive lambda or more observations)");
  }
  return ldlt.solve(rhs);
}

}  // namespace quadtensor::detail
