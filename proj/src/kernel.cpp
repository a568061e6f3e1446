#include "quadtensor/kernel.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <vector>

namespace quadtensor {

KernelMatrix KernelMatrix::from_matrix(const Eigen::Matrix3d& k, KernelKind kind) {
  if (!k.allFinite()) throw InvalidArgument("kernel matrix has non-finite entries");
  Eigen::Matrix3d sym = 0.5 * (k + k.transpose());
  return KernelMatrix(sym, kind);
}

std::string KernelMatrix::to_string() const {
  switch (kind_) {
    case KernelKind::Pairwise: return "pairwise";
    case KernelKind::TransE: return "transe";
    case KernelKind::Identity: return "identity";
    case KernelKind::Custom: break;
  }
  std::ostringstream out;
  out.precision(17);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      if (a + b > 0) out << ',';
      out << k_(a, b);
    }
  }
  return out.str();
}

KernelMatrix make_kernel(KernelKind kind) {
  Eigen::Matrix3d k;
  switch (kind) {
    case KernelKind::Pairwise:
      k << 0.0, 0.5, 0.5,
           0.5, 0.0, 0.5,
           0.5, 0.5, 0.0;
      break;
    case KernelKind::TransE:
      // ||a + b - c||^2 expanded.
      k << 1.0, 1.0, -1.0,
           1.0, 1.0, -1.0,
           -1.0, -1.0, 1.0;
      break;
    case KernelKind::Identity:
      k.setIdentity();
      break;
    case KernelKind::Custom:
      throw InvalidArgument("custom kernels need a matrix; use make_custom_kernel");
  }
  return KernelMatrix::from_matrix(k, kind);
}

KernelMatrix make_custom_kernel(const Eigen::Matrix3d& k) {
  return KernelMatrix::from_matrix(k, KernelKind::Custom);
}

KernelMatrix parse_kernel(std::string_view spec) {
  if (spec == "pairwise") return make_kernel(KernelKind::Pairwise);
  if (spec == "transe") return make_kernel(KernelKind::TransE);
  if (spec == "identity") return make_kernel(KernelKind::Identity);

  std::vector<double> values;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = spec.find(',', pos);
    auto field = spec.substr(pos, comma == std::string_view::npos ? std::string_view::npos
                                                                  : comma - pos);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    double v = 0.0;
    auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || end != field.data() + field.size() || field.empty()) {
      throw InvalidArgument("unknown kernel '" + std::string(spec) +
                            "' (expected pairwise, transe, identity or 9 numbers)");
    }
    values.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (values.size() != 9) throw InvalidArgument("custom kernel needs exactly 9 numbers");
  Eigen::Matrix3d k;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) k(a, b) = values[static_cast<std::size_t>(3 * a + b)];
  return make_custom_kernel(k);
}

double sensing_inner(const SensingEntry& entry, const TensorDims& dims, const Matrix& U) {
  if (static_cast<std::size_t>(U.rows()) != dims.stacked_rows()) {
    throw InvalidArgument("sensing_inner: U has wrong row count");
  }
  if (!dims.contains(entry.index)) throw InvalidArgument("sensing_inner: index out of range");
  const auto r = stacked_rows(dims, entry.index);
  return kernel_eval(entry.kernel.get(), U.row(r.x), U.row(r.y), U.row(r.z));
}

Matrix sensing_accumulate(std::span<const WeightedEntry> weights, const KernelMatrix& K,
                          const TensorDims& dims, const Matrix& U) {
  if (static_cast<std::size_t>(U.rows()) != dims.stacked_rows()) {
    throw InvalidArgument("sensing_accumulate: U has wrong row count");
  }
  const auto& k = K.matrix();
  Matrix G = Matrix::Zero(U.rows(), U.cols());
  for (const auto& w : weights) {
    if (!dims.contains(w.index)) throw InvalidArgument("sensing_accumulate: index out of range");
    const auto r = stacked_rows(dims, w.index);
    const Eigen::Index rows[3] = {r.x, r.y, r.z};
    for (int a = 0; a < 3; ++a) {
      G.row(rows[a]) += w.weight * (k(a, 0) * U.row(r.x) + k(a, 1) * U.row(r.y) +
                                    k(a, 2) * U.row(r.z));
    }
  }
  return G;
}

}  // namespace quadtensor
