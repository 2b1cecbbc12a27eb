#pragma once

#include <Eigen/Dense>

namespace pathlab {

// State dimension is small (desk scale); bounded-capacity dynamic Eigen types avoid heap traffic in
// the simulation loops.
inline constexpr int kMaxDim = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline Vec zeros(int d) { return Vec::Zero(d); }
inline Mat identity(int d) { return Mat::Identity(d, d); }

inline Vec unit(int d, int k) {
  Vec v = Vec::Zero(d);
  v(k) = 1.0;
  return v;
}

inline double operator_norm(const Mat& m) {
  if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

inline double hs_norm(const Mat& m) { return m.norm(); }

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace pathlab
