#pragma once

// Private bridge between Tensor storage and Eigen expressions.

#include <Eigen/Dense>

#include "latent_atlas/tensor.hpp"

namespace latent_atlas {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

inline MatrixMap as_matrix(Tensor& t) {
  return MatrixMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

inline ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

inline VectorMap as_vector(Tensor& t) {
  return VectorMap(t.data().data(), static_cast<Eigen::Index>(t.size()));
}

inline ConstVectorMap as_vector(const Tensor& t) {
  return ConstVectorMap(t.data().data(), static_cast<Eigen::Index>(t.size()));
}

inline Tensor to_tensor(const RowMatrix& m) {
  Tensor out({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  as_matrix(out) = m;
  return out;
}

}  // namespace latent_atlas
