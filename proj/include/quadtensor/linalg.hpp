#pragma once

#include <Eigen/Dense>

namespace quadtensor {

// Factor matrices are swept row by row, so they are stored row-major.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace quadtensor
