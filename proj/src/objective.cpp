#include "quadtensor/objective.hpp"

#include <cmath>
#include <random>

#include "quadtensor/errors.hpp"

namespace quadtensor {

void RegularizationConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("alpha must be positive");
  if (rank < 1) throw InvalidArgument("rank must be >= 1");
  if (!std::isfinite(lambda1) || !std::isfinite(lambda2)) {
    throw InvalidArgument("lambdas must be finite");
  }
}

LambdaPair default_lambdas(double alpha, double d, double m) {
  if (!(alpha > 0.0) || !(d > 0.0) || !(m > 0.0)) {
    throw InvalidArgument("default_lambdas needs positive alpha, d, m");
  }
  LambdaPair out;
  out.lambda1 = alpha / std::sqrt(d * m);
  out.lambda2 = 2.0 * d * out.lambda1 / alpha;
  return out;
}

RegularizationConfig resolve_lambdas(RegularizationConfig cfg, const TensorDims& dims,
                                     std::size_t m) {
  cfg.validate();
  if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) {
    const double d = static_cast<double>(dims.stacked_rows()) / 3.0;
    const auto defaults = default_lambdas(cfg.alpha, d, static_cast<double>(m));
    if (cfg.lambda1 < 0.0) cfg.lambda1 = defaults.lambda1;
    if (cfg.lambda2 < 0.0) cfg.lambda2 = defaults.lambda2;
  }
  return cfg;
}

double q_alpha(double x, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("q_alpha: alpha must be positive");
  const double excess = std::abs(x) - std::sqrt(alpha);
  if (excess <= 0.0) return 0.0;
  const double sq = excess * excess;
  return sq * sq;
}

double q_alpha_deriv(double x, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("q_alpha_deriv: alpha must be positive");
  const double excess = std::abs(x) - std::sqrt(alpha);
  if (excess <= 0.0) return 0.0;
  return 4.0 * excess * excess * excess * (x < 0.0 ? -1.0 : 1.0);
}

double Perturbation::inner(const Matrix& U) const {
  if (is_zero()) return 0.0;
  return scale * (G.transpose() * U).squaredNorm();
}

Matrix Perturbation::apply(const Matrix& U) const {
  if (is_zero()) return Matrix::Zero(U.rows(), U.cols());
  return scale * (G * (G.transpose() * U));
}

Matrix Perturbation::dense(Eigen::Index n) const {
  if (is_zero()) return Matrix::Zero(n, n);
  return scale * (G * G.transpose());
}

double gram_spectral_norm(const Matrix& G) {
  const Eigen::Index n = G.rows();
  if (n == 0 || G.cols() == 0) return 0.0;
  Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
  double estimate = 0.0;
  const Eigen::Index cap = 10 * n;
  for (Eigen::Index it = 0; it < cap; ++it) {
    Vector w = G * (G.transpose() * v);
    const double rayleigh = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (it > 0 && std::abs(rayleigh - estimate) <= 1e-9 * std::abs(rayleigh)) return rayleigh;
    estimate = rayleigh;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G * G.transpose(), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

Perturbation make_perturbation(std::size_t n, double lambda1, std::uint64_t seed) {
  if (!(lambda1 >= 0.0)) throw InvalidArgument("make_perturbation: lambda1 must be >= 0");
  Perturbation p;
  if (lambda1 == 0.0 || n == 0) return p;
  std::mt19937_64 rng(seed);
  p.G = gaussian_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), 1.0, rng);
  p.scale = lambda1 / gram_spectral_norm(p.G);
  return p;
}

namespace {

void check_shapes(const Matrix& U, const ObservationSet& obs, const RegularizationConfig& cfg,
                  const Perturbation& pert) {
  if (static_cast<std::size_t>(U.rows()) != obs.dims().stacked_rows()) {
    throw InvalidArgument("factor rows do not match observation dims");
  }
  if (static_cast<std::size_t>(U.cols()) != cfg.rank) {
    throw InvalidArgument("factor column count does not match configured rank");
  }
  if (!pert.is_zero() && pert.G.rows() != U.rows()) {
    throw InvalidArgument("perturbation size does not match factor rows");
  }
  if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) {
    throw InvalidArgument("lambdas must be resolved before evaluating the objective");
  }
}

}  // namespace

Vector residuals_stacked(const Matrix& U, const KernelMatrix& kernel, const ObservationSet& obs) {
  const auto& dims = obs.dims();
  Vector res(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t n = 0; n < obs.size(); ++n) {
    const auto r = stacked_rows(dims, obs[n].index);
    res(static_cast<Eigen::Index>(n)) =
        kernel_eval(kernel, U.row(r.x), U.row(r.y), U.row(r.z)) - obs[n].value;
  }
  return res;
}

ObjectiveBreakdown objective_eval_stacked(const Matrix& U, const KernelMatrix& kernel,
                                          const ObservationSet& obs,
                                          const RegularizationConfig& cfg,
                                          const Perturbation& pert) {
  check_shapes(U, obs, cfg, pert);
  ObjectiveBreakdown out;
  out.mse = residuals_stacked(U, kernel, obs).squaredNorm() / static_cast<double>(obs.size());
  out.frob_penalty = cfg.lambda1 * U.squaredNorm();
  if (cfg.lambda2 > 0.0) {
    double q = 0.0;
    for (Eigen::Index i = 0; i < U.rows(); ++i) q += q_alpha(U.row(i).norm(), cfg.alpha);
    out.qalpha_penalty = cfg.lambda2 * q;
  }
  out.perturbation_term = pert.inner(U);
  out.total = out.mse + out.frob_penalty + out.qalpha_penalty + out.perturbation_term;
  return out;
}

ObjectiveBreakdown objective_eval_grad_stacked(const Matrix& U, const KernelMatrix& kernel,
                                               const ObservationSet& obs,
                                               const RegularizationConfig& cfg,
                                               const Perturbation& pert, Matrix& grad) {
  check_shapes(U, obs, cfg, pert);
  const Vector res = residuals_stacked(U, kernel, obs);
  const double m = static_cast<double>(obs.size());
  ObjectiveBreakdown out;
  out.mse = res.squaredNorm() / m;
  out.frob_penalty = cfg.lambda1 * U.squaredNorm();

  // Stationarity form: grad = 2 (sum_t z_t A_t) U + 2 lambda1 U + diag(w) U + 2 C U
  // with z_t = (2/m) residual_t.
  std::vector<WeightedEntry> weights(obs.size());
  for (std::size_t n = 0; n < obs.size(); ++n) {
    weights[n] = {obs[n].index, 2.0 / m * res(static_cast<Eigen::Index>(n))};
  }
  grad = 2.0 * sensing_accumulate(weights, kernel, obs.dims(), U);
  grad += 2.0 * cfg.lambda1 * U;

  if (cfg.lambda2 > 0.0) {
    const double root = std::sqrt(cfg.alpha);
    double q = 0.0;
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
      const double norm = U.row(i).norm();
      if (norm <= root) continue;
      const double excess = norm - root;
      q += excess * excess * excess * excess;
      grad.row(i) += (4.0 * cfg.lambda2 * excess * excess * excess / norm) * U.row(i);
    }
    out.qalpha_penalty = cfg.lambda2 * q;
  }
  if (!pert.is_zero()) {
    const Matrix GtU = pert.G.transpose() * U;
    out.perturbation_term = pert.scale * GtU.squaredNorm();
    grad.noalias() += (2.0 * pert.scale) * (pert.G * GtU);
  }
  out.total = out.mse + out.frob_penalty + out.qalpha_penalty + out.perturbation_term;
  return out;
}

Matrix objective_grad_stacked(const Matrix& U, const KernelMatrix& kernel,
                              const ObservationSet& obs, const RegularizationConfig& cfg,
                              const Perturbation& pert) {
  Matrix grad;
  objective_eval_grad_stacked(U, kernel, obs, cfg, pert, grad);
  return grad;
}

ObjectiveBreakdown objective_eval(const FactorModel& model, const ObservationSet& obs,
                                  const RegularizationConfig& cfg, const Perturbation& pert) {
  model.validate();
  if (!(model.dims() == obs.dims())) throw InvalidArgument("model dims do not match observations");
  return objective_eval_stacked(stack(model), model.kernel, obs,
                                resolve_lambdas(cfg, obs.dims(), obs.size()), pert);
}

FactorGradient objective_grad(const FactorModel& model, const ObservationSet& obs,
                              const RegularizationConfig& cfg, const Perturbation& pert) {
  model.validate();
  if (!(model.dims() == obs.dims())) throw InvalidArgument("model dims do not match observations");
  const Matrix g = objective_grad_stacked(stack(model), model.kernel, obs,
                                          resolve_lambdas(cfg, obs.dims(), obs.size()), pert);
  const auto split = unstack(g, obs.dims(), model.kernel);
  return {split.X, split.Y, split.Z};
}

}  // namespace quadtensor
