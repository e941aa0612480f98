// attnback/numerics.hpp

// Copyright 2026  attnback authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "attnback/error.hpp"

namespace attnback {

/// Dense row-major double matrix. Row-major so that data() walks the
/// on-disk tensor order directly.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline std::string ShapeString(const Matrix &m) {
  return detail::Concat(m.rows(), "x", m.cols());
}

inline Matrix Matmul(const Matrix &a, const Matrix &b) {
  ATTNBACK_CHECK(a.cols() == b.rows(), "matmul: shape mismatch ", ShapeString(a),
                 " * ", ShapeString(b));
  return a * b;
}

/// Row-wise softmax with the row maximum subtracted before exponentiation.
inline Matrix SoftmaxRows(const Matrix &m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out(r, c) = std::exp(m(r, c) - mx);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return out;
}

inline Vector Softmax(const Vector &v) {
  const double mx = v.maxCoeff();
  Vector out = (v.array() - mx).exp().matrix();
  return out / out.sum();
}

inline Matrix TanhElem(const Matrix &m) { return m.array().tanh().matrix(); }

inline double Sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

inline bool AllFinite(const Matrix &m) { return m.allFinite(); }
inline bool AllFinite(const Vector &v) { return v.allFinite(); }

/// Symmetric part, (m + m^T) / 2.
inline Matrix Symmetrize(const Matrix &m) {
  Matrix t = m.transpose();
  return 0.5 * (m + t);
}

}  // namespace attnback
