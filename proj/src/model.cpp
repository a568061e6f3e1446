#include "quadtensor/model.hpp"

#include <cmath>

#include "quadtensor/errors.hpp"

namespace quadtensor {

namespace {

void require_index(const TensorDims& dims, const EntryIndex& t) {
  if (!dims.contains(t)) throw InvalidArgument("entry index out of range");
}

}  // namespace

void FactorModel::validate() const {
  if (X.cols() < 1 || X.cols() != Y.cols() || X.cols() != Z.cols()) {
    throw InvalidArgument("factor matrices need equal positive column counts");
  }
  if (X.rows() < 1 || Y.rows() < 1 || Z.rows() < 1) throw InvalidArgument("empty factor matrix");
  if (!X.allFinite() || !Y.allFinite() || !Z.allFinite()) {
    throw InvalidArgument("factor matrices have non-finite entries");
  }
}

void CPModel::validate() const {
  if (A.cols() < 1 || A.cols() != B.cols() || A.cols() != C.cols()) {
    throw InvalidArgument("CP factors need equal positive column counts");
  }
  if (A.rows() < 1 || B.rows() < 1 || C.rows() < 1) throw InvalidArgument("empty CP factor");
  if (!A.allFinite() || !B.allFinite() || !C.allFinite()) {
    throw InvalidArgument("CP factors have non-finite entries");
  }
}

Matrix stack(const FactorModel& model) {
  Matrix U(model.X.rows() + model.Y.rows() + model.Z.rows(), model.X.cols());
  U << model.X, model.Y, model.Z;
  return U;
}

FactorModel unstack(const Matrix& U, const TensorDims& dims, const KernelMatrix& kernel) {
  if (static_cast<std::size_t>(U.rows()) != dims.stacked_rows()) {
    throw InvalidArgument("unstack: row count does not match dims");
  }
  const auto d1 = static_cast<Eigen::Index>(dims.d1);
  const auto d2 = static_cast<Eigen::Index>(dims.d2);
  const auto d3 = static_cast<Eigen::Index>(dims.d3);
  return {U.topRows(d1), U.middleRows(d1, d2), U.bottomRows(d3), kernel};
}

double predict_entry(const FactorModel& model, const EntryIndex& t) {
  require_index(model.dims(), t);
  return kernel_eval(model.kernel, model.X.row(static_cast<Eigen::Index>(t.i)),
                     model.Y.row(static_cast<Eigen::Index>(t.j)),
                     model.Z.row(static_cast<Eigen::Index>(t.k)));
}

DenseTensor reconstruct_dense(const FactorModel& model, std::size_t dim_cap) {
  model.validate();
  const auto dims = model.dims();
  DenseTensor out(dims, dim_cap);
  const auto& k = model.kernel.matrix();
  const Matrix P = 2.0 * k(0, 1) * (model.X * model.Y.transpose());
  const Matrix Q = 2.0 * k(0, 2) * (model.X * model.Z.transpose());
  const Matrix S = 2.0 * k(1, 2) * (model.Y * model.Z.transpose());
  const Vector nx = k(0, 0) * model.X.rowwise().squaredNorm();
  const Vector ny = k(1, 1) * model.Y.rowwise().squaredNorm();
  const Vector nz = k(2, 2) * model.Z.rowwise().squaredNorm();
  auto values = out.values();
  std::size_t f = 0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
      const double base = nx(i) + ny(j) + P(i, j);
      for (Eigen::Index kk = 0; kk < Q.cols(); ++kk) {
        values[f++] = base + nz(kk) + Q(i, kk) + S(j, kk);
      }
    }
  }
  return out;
}

double cp_predict_entry(const CPModel& model, const EntryIndex& t) {
  require_index(model.dims(), t);
  return (model.A.row(static_cast<Eigen::Index>(t.i))
              .cwiseProduct(model.B.row(static_cast<Eigen::Index>(t.j))))
      .dot(model.C.row(static_cast<Eigen::Index>(t.k)));
}

DenseTensor cp_reconstruct_dense(const CPModel& model, std::size_t dim_cap) {
  model.validate();
  DenseTensor out(model.dims(), dim_cap);
  auto values = out.values();
  std::size_t f = 0;
  Vector fiber(model.C.rows());
  for (Eigen::Index i = 0; i < model.A.rows(); ++i) {
    for (Eigen::Index j = 0; j < model.B.rows(); ++j) {
      fiber.noalias() = model.C * model.A.row(i).cwiseProduct(model.B.row(j)).transpose();
      for (Eigen::Index kk = 0; kk < fiber.size(); ++kk) values[f++] = fiber(kk);
    }
  }
  return out;
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev,
                       std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix M(rows, cols);
  for (Eigen::Index a = 0; a < rows; ++a)
    for (Eigen::Index b = 0; b < cols; ++b) M(a, b) = normal(rng);
  return M;
}

GroundTruth random_ground_truth(const TensorDims& dims, std::size_t r, const KernelMatrix& kernel,
                                FactorDistribution dist, std::uint64_t seed) {
  dims.validate();
  if (r < 1) throw InvalidArgument("rank must be >= 1");
  std::mt19937_64 rng(seed);
  auto draw = [&](std::size_t rows) {
    const double sd =
        dist == FactorDistribution::StandardNormal ? 1.0 : 1.0 / std::sqrt(static_cast<double>(rows));
    return gaussian_matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(r), sd, rng);
  };
  GroundTruth gt{draw(dims.d1), draw(dims.d2), draw(dims.d3), kernel, 0.0};
  gt.alpha = incoherence_alpha(stack(gt.as_model()));
  return gt;
}

CPModel random_cp_model(const TensorDims& dims, std::size_t r, std::uint64_t seed) {
  dims.validate();
  if (r < 1) throw InvalidArgument("rank must be >= 1");
  std::mt19937_64 rng(seed);
  const auto R = static_cast<Eigen::Index>(r);
  CPModel m;
  m.A = gaussian_matrix(static_cast<Eigen::Index>(dims.d1), R, 1.0, rng);
  m.B = gaussian_matrix(static_cast<Eigen::Index>(dims.d2), R, 1.0, rng);
  m.C = gaussian_matrix(static_cast<Eigen::Index>(dims.d3), R, 1.0, rng);
  return m;
}

double incoherence_alpha(const Matrix& U) {
  if (U.rows() == 0) return 0.0;
  return U.rowwise().squaredNorm().maxCoeff();
}

}  // namespace quadtensor
