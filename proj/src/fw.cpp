#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "quadtensor/errors.hpp"
#include "quadtensor/solvers.hpp"
#include "solver_common.hpp"

namespace quadtensor {

namespace {

using Dense = Eigen::MatrixXd;

// Everything about the smooth objective that does not change between
// iterations: the rows each observation touches, the targets and the dense C.
class ConvexEvaluator {
 public:
  ConvexEvaluator(const ObservationSet& obs, const KernelMatrix& kernel,
                  const ConvexProblem& problem)
      : obs_(obs), problem_(problem), k_(kernel.matrix()) {
    n_ = static_cast<Eigen::Index>(obs.dims().stacked_rows());
    rows_.reserve(obs.size());
    y_.resize(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t t = 0; t < obs.size(); ++t) {
      const auto r = stacked_rows(obs.dims(), obs[t].index);
      rows_.push_back({r.x, r.y, r.z});
      y_(static_cast<Eigen::Index>(t)) = obs[t].value;
    }
    c_ = problem.perturbation.dense(n_);
    m_ = static_cast<double>(obs.size());
  }

  Eigen::Index n() const { return n_; }
  const Vector& targets() const { return y_; }

  /// <A_t, M> for every observation.
  Vector sense(const Dense& M) const {
    Vector out(static_cast<Eigen::Index>(rows_.size()));
    for (std::size_t t = 0; t < rows_.size(); ++t) {
      const auto& r = rows_[t];
      double s = 0.0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) s += k_(a, b) * M(r[a], r[b]);
      out(static_cast<Eigen::Index>(t)) = s;
    }
    return out;
  }

  double penalty(double x) const {
    if (problem_.diag_weight == 0.0) return 0.0;
    if (problem_.penalty == ConvexProblem::DiagPenalty::Diagonal) {
      return q_alpha(x, problem_.alpha);
    }
    return q_alpha(std::sqrt(std::max(x, 0.0)), problem_.alpha);
  }

  double penalty_deriv(double x) const {
    if (problem_.diag_weight == 0.0) return 0.0;
    if (problem_.penalty == ConvexProblem::DiagPenalty::Diagonal) {
      return q_alpha_deriv(x, problem_.alpha);
    }
    const double s = std::sqrt(std::max(x, 0.0));
    if (s <= std::sqrt(problem_.alpha)) return 0.0;
    return q_alpha_deriv(s, problem_.alpha) / (2.0 * s);
  }

  double value(const Dense& X, const Vector& pred) const {
    double f = (pred - y_).squaredNorm() / m_;
    f += (c_.array() * X.array()).sum();
    f += problem_.trace_weight * X.trace();
    if (problem_.diag_weight != 0.0) {
      double q = 0.0;
      for (Eigen::Index i = 0; i < n_; ++i) q += penalty(X(i, i));
      f += problem_.diag_weight * q;
    }
    return f;
  }

  Dense gradient(const Dense& X, const Vector& pred) const {
    Dense g = c_;
    g.diagonal().array() += problem_.trace_weight;
    const Vector z = (2.0 / m_) * (pred - y_);
    for (std::size_t t = 0; t < rows_.size(); ++t) {
      const auto& r = rows_[t];
      const double w = z(static_cast<Eigen::Index>(t));
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) g(r[a], r[b]) += w * k_(a, b);
    }
    if (problem_.diag_weight != 0.0) {
      for (Eigen::Index i = 0; i < n_; ++i) {
        g(i, i) += problem_.diag_weight * penalty_deriv(X(i, i));
      }
    }
    return g;
  }

  /// Exact minimizer over gamma in [0, 1] of f(X + gamma D); the objective is
  /// convex along the segment, so bisection on its derivative suffices.
  double line_search(const Dense& X, const Dense& D, const Vector& pred) const {
    const Vector delta = sense(D);
    const Vector res = pred - y_;
    const double lin = (c_.array() * D.array()).sum() + problem_.trace_weight * D.trace();
    auto slope = [&](double gamma) {
      double s = (2.0 / m_) * (res + gamma * delta).dot(delta) + lin;
      if (problem_.diag_weight != 0.0) {
        for (Eigen::Index i = 0; i < n_; ++i) {
          if (D(i, i) != 0.0) {
            s += problem_.diag_weight * penalty_deriv(X(i, i) + gamma * D(i, i)) * D(i, i);
          }
        }
      }
      return s;
    };
    if (slope(0.0) >= 0.0) return 0.0;
    if (slope(1.0) <= 0.0) return 1.0;
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < 100 && hi - lo > 1e-16; ++it) {
      const double mid = 0.5 * (lo + hi);
      (slope(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

 private:
  const ObservationSet& obs_;
  const ConvexProblem& problem_;
  Eigen::Matrix3d k_;
  Eigen::Index n_ = 0;
  std::vector<std::array<Eigen::Index, 3>> rows_;
  Vector y_;
  Dense c_;
  double m_ = 1.0;
};

struct Vertex {
  Dense S;
  double min_eigenvalue = 0.0;
};

// Linear minimization over {S psd, tr S <= radius}: radius * v v^T for the
// most negative eigenpair of the gradient, or 0 if the gradient is psd.
Vertex linear_minimizer(const Dense& grad, double radius) {
  Eigen::SelfAdjointEigenSolver<Dense> eig(grad);
  Vertex out;
  out.min_eigenvalue = eig.eigenvalues()(0);
  out.S = Dense::Zero(grad.rows(), grad.cols());
  if (out.min_eigenvalue < 0.0) {
    Vector v = eig.eigenvectors().col(0);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (v(i) != 0.0) {
        if (v(i) < 0.0) v = -v;
        break;
      }
    }
    out.S = radius * v * v.transpose();
  }
  return out;
}

double duality_gap(const Dense& grad, const Dense& X, const Vertex& vertex) {
  return (grad.array() * (X - vertex.S).array()).sum();
}

// Euclidean projection of a spectrum onto {mu >= 0, sum mu <= radius}.
Vector project_spectrum(Vector mu, double radius) {
  mu = mu.cwiseMax(0.0);
  if (mu.sum() <= radius) return mu;
  std::vector<double> sorted(mu.data(), mu.data() + mu.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - radius) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) theta = candidate;
  }
  return (mu.array() - theta).cwiseMax(0.0);
}

Dense project_psd_ball(const Dense& S, double radius) {
  Eigen::SelfAdjointEigenSolver<Dense> eig(S);
  const Vector mu = project_spectrum(eig.eigenvalues(), radius);
  return eig.eigenvectors() * mu.asDiagonal() * eig.eigenvectors().transpose();
}

// Projected gradient on the face {Q S Q^T : S psd, tr S <= radius} that
// contains the current iterate. Never increases the objective.
void inface_refine(Dense& X, Vector& pred, double& fval, const ConvexEvaluator& ev,
                   double radius, std::size_t steps, double& step) {
  if (steps == 0) return;
  Eigen::SelfAdjointEigenSolver<Dense> eig(X);
  const Vector lam = eig.eigenvalues();
  const double top = lam.cwiseAbs().maxCoeff();
  if (!(top > 0.0)) return;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) > 1e-12 * top) keep.push_back(i);
  }
  const auto k = static_cast<Eigen::Index>(keep.size());
  Dense Q(X.rows(), k);
  Dense S = Dense::Zero(k, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Q.col(c) = eig.eigenvectors().col(keep[static_cast<std::size_t>(c)]);
    S(c, c) = lam(keep[static_cast<std::size_t>(c)]);
  }

  for (std::size_t it = 0; it < steps; ++it) {
    const Dense gs = Q.transpose() * ev.gradient(X, pred) * Q;
    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      const Dense S_new = project_psd_ball(S - step * gs, radius);
      const Dense diff = S_new - S;
      const Dense X_new = Q * S_new * Q.transpose();
      const Vector pred_new = ev.sense(X_new);
      const double f_new = ev.value(X_new, pred_new);
      const double model = fval + (gs.array() * diff.array()).sum() + diff.squaredNorm() / (2.0 * step);
      if (f_new <= model && f_new <= fval) {
        S = S_new;
        X = X_new;
        pred = pred_new;
        fval = f_new;
        step *= 2.0;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
}

// Tensor entries <A_t, X> for every t, read off the blocks of X.
DenseTensor reconstruct_from_gram(const Dense& X, const TensorDims& dims, const KernelMatrix& kernel,
                                  std::size_t cap) {
  DenseTensor out(dims, cap);
  const auto& k = kernel.matrix();
  const auto d1 = static_cast<Eigen::Index>(dims.d1);
  const auto d2 = static_cast<Eigen::Index>(dims.d2);
  const auto d3 = static_cast<Eigen::Index>(dims.d3);
  auto values = out.values();
  std::size_t f = 0;
  for (Eigen::Index i = 0; i < d1; ++i) {
    for (Eigen::Index j = 0; j < d2; ++j) {
      const Eigen::Index yj = d1 + j;
      const double base = k(0, 0) * X(i, i) + k(1, 1) * X(yj, yj) + 2.0 * k(0, 1) * X(i, yj);
      for (Eigen::Index kk = 0; kk < d3; ++kk) {
        const Eigen::Index zk = d1 + d2 + kk;
        values[f++] = base + k(2, 2) * X(zk, zk) + 2.0 * k(0, 2) * X(i, zk) +
                      2.0 * k(1, 2) * X(yj, zk);
      }
    }
  }
  return out;
}

Matrix factor_psd(const Dense& X) {
  Eigen::SelfAdjointEigenSolver<Dense> eig(X);
  const Vector lam = eig.eigenvalues();
  const double top = std::max(lam.maxCoeff(), 0.0);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = lam.size() - 1; i >= 0; --i) {
    if (lam(i) > 1e-14 * top && lam(i) > 0.0) keep.push_back(i);
  }
  if (keep.empty()) return Matrix::Zero(X.rows(), 1);
  Matrix V(X.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    V.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(keep[c]) * std::sqrt(lam(keep[c]));
  }
  return V;
}

}  // namespace

ConvexProblem ConvexProblem::trace_constrained(const TensorDims& dims, double alpha,
                                               double lambda1, std::uint64_t perturbation_seed) {
  if (!(alpha > 0.0)) throw InvalidArgument("trace_constrained: alpha must be positive");
  if (!(lambda1 >= 0.0)) throw InvalidArgument("trace_constrained: lambda1 must be >= 0");
  ConvexProblem p;
  p.alpha = alpha;
  p.radius = static_cast<double>(dims.stacked_rows()) * alpha;
  p.diag_weight = lambda1;
  p.penalty = DiagPenalty::Diagonal;
  p.perturbation = make_perturbation(dims.stacked_rows(), lambda1, perturbation_seed);
  return p;
}

ConvexProblem ConvexProblem::lifted(const ObservationSet& obs, const RegularizationConfig& reg_in) {
  const auto reg = resolve_lambdas(reg_in, obs.dims(), obs.size());
  ConvexProblem p;
  p.alpha = reg.alpha;
  p.trace_weight = reg.lambda1;
  p.diag_weight = reg.lambda2;
  p.penalty = DiagPenalty::RowNorm;
  p.perturbation = make_perturbation(obs.dims().stacked_rows(), reg.lambda1, reg.perturbation_seed);
  // f(0) = mean y^2 and every other term is >= 0, so any minimizer has
  // lambda1 tr X <= mean y^2.
  double mean_sq = 0.0;
  for (const auto& e : obs.entries()) mean_sq += e.value * e.value;
  mean_sq /= static_cast<double>(obs.size());
  const double floor = static_cast<double>(obs.dims().stacked_rows()) * reg.alpha;
  p.radius = reg.lambda1 > 0.0 ? std::max(mean_sq / reg.lambda1, floor) : floor;
  return p;
}

double convex_objective(const Matrix& V, const KernelMatrix& kernel, const ObservationSet& obs,
                        const ConvexProblem& problem) {
  if (static_cast<std::size_t>(V.rows()) != obs.dims().stacked_rows()) {
    throw InvalidArgument("convex_objective: V has the wrong row count");
  }
  const ConvexEvaluator ev(obs, kernel, problem);
  const Dense X = V * V.transpose();
  return ev.value(X, ev.sense(X));
}

SolveResult fw_solve(const ObservationSet& obs, const KernelMatrix& kernel,
                     const ConvexProblem& problem, const SolverConfig& cfg,
                     const FwOptions& options) {
  cfg.validate();
  if (!(problem.alpha > 0.0)) throw InvalidArgument("fw_solve: alpha must be positive");
  if (!(problem.radius > 0.0)) throw InvalidArgument("fw_solve: radius must be positive");
  const auto& dims = obs.dims();
  const ConvexEvaluator ev(obs, kernel, problem);
  const Eigen::Index n = ev.n();

  Dense X = Dense::Zero(n, n);
  if (cfg.init) {
    if (cfg.init->rows() != n) throw InvalidArgument("fw_solve: init has the wrong row count");
    X = *cfg.init * cfg.init->transpose();
    if (X.trace() > problem.radius) X *= problem.radius / X.trace();
  }
  Vector pred = ev.sense(X);
  double fval = ev.value(X, pred);
  double inface_step = 1.0;

  SolveResult result{{}, unstack(Matrix::Zero(n, 1), dims, kernel)};
  auto reconstruct = [&](std::size_t cap) { return reconstruct_from_gram(X, dims, kernel, cap); };
  auto train_rmse = [&] { return detail::rmse(pred - ev.targets()); };

  double gap0 = 0.0;
  for (std::size_t it = 0;; ++it) {
    const Dense grad = ev.gradient(X, pred);
    const Vertex vertex = linear_minimizer(grad, problem.radius);
    const double gap = std::max(duality_gap(grad, X, vertex), 0.0);
    if (it == 0) gap0 = gap;

    result.objective_trace.push_back(fval);
    result.train_error_trace.push_back(train_rmse());
    result.gap_trace.push_back(gap);
    result.trace_norm_trace.push_back(X.trace());
    result.iterations_run = it;

    bool stop = false;
    if (gap <= cfg.tol * gap0 || gap <= std::numeric_limits<double>::min()) {
      result.termination = Termination::Tolerance;
      stop = true;
    } else if (it == cfg.max_iters) {
      result.termination = Termination::MaxIters;
      stop = true;
    }
    detail::record_test_error(result, cfg, obs, it, stop || it == 0, reconstruct);
    if (stop) break;

    const Dense D = vertex.S - X;
    const double gamma =
        cfg.line_search ? ev.line_search(X, D, pred) : 2.0 / (static_cast<double>(it) + 2.0);
    X += gamma * D;
    X = 0.5 * (X + X.transpose());
    pred = ev.sense(X);
    fval = ev.value(X, pred);
    inface_refine(X, pred, fval, ev, problem.radius, options.inface_steps, inface_step);
  }

  result.model = unstack(factor_psd(X), dims, kernel);
  return result;
}

SolveResult fw_solve(const ObservationSet& obs, const KernelMatrix& kernel, double alpha,
                     double lambda1, const SolverConfig& cfg) {
  return fw_solve(obs, kernel, ConvexProblem::trace_constrained(obs.dims(), alpha, lambda1, cfg.seed),
                  cfg);
}

}  // namespace quadtensor
