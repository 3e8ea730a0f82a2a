#pragma once

#include <Eigen/Dense>

#include <string>

#include "passynth/errors.hpp"
#include "passynth/linalg.hpp"

namespace passynth {

/// ẋ = Ax + B_u·u + B_d·d,  y = Cx + D·d, with LQR weights (Q, R).
struct LtiPlant {
  MatrixXd A;
  MatrixXd B_u;
  MatrixXd B_d;
  MatrixXd C;
  MatrixXd D;
  MatrixXd Q;
  MatrixXd R;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B_u.cols(); }
  Eigen::Index p() const { return B_d.cols(); }

  bool zero_feedthrough() const { return D.size() == 0 || D.isZero(0.0); }

  MatrixXd closed_loop(const MatrixXd& K) const { return A - B_u * K; }

  /// Throws DimensionMismatch / InvalidArgument on malformed data.
  void validate() const {
    auto fail = [](const std::string& what) {
      throw SynthError(ErrorCode::kDimensionMismatch, what);
    };
    const Eigen::Index n = A.rows();
    if (n == 0 || A.cols() != n) fail("A must be square and nonempty, got " + shape_of(A));
    if (B_u.rows() != n || B_u.cols() == 0) fail("B_u must have n rows, got " + shape_of(B_u));
    if (B_d.rows() != n || B_d.cols() == 0) fail("B_d must have n rows, got " + shape_of(B_d));
    const Eigen::Index p = B_d.cols();
    if (C.rows() != p || C.cols() != n) fail("C must be p x n, got " + shape_of(C));
    if (D.rows() != p || D.cols() != p) fail("D must be p x p, got " + shape_of(D));
    if (Q.rows() != n || Q.cols() != n) fail("Q must be n x n, got " + shape_of(Q));
    if (R.rows() != m() || R.cols() != m()) fail("R must be m x m, got " + shape_of(R));
    for (const MatrixXd* M : {&A, &B_u, &B_d, &C, &D, &Q, &R}) {
      if (!M->allFinite()) {
        throw SynthError(ErrorCode::kInvalidArgument, "plant has non-finite entries");
      }
    }
    if (!is_symmetric(Q, 1e-10) || min_eigenvalue_sym(Q) < -1e-12 * (1.0 + Q.norm())) {
      throw SynthError(ErrorCode::kInvalidArgument, "Q must be symmetric PSD");
    }
    if (!is_symmetric(R, 1e-10) || min_eigenvalue_sym(R) <= 0.0) {
      throw SynthError(ErrorCode::kInvalidArgument, "R must be symmetric PD");
    }
  }

  void check_gain(const MatrixXd& K) const {
    if (K.rows() != m() || K.cols() != n()) {
      throw SynthError(ErrorCode::kDimensionMismatch,
                       "gain must be " + std::to_string(m()) + "x" +
                           std::to_string(n()) + ", got " + shape_of(K));
    }
  }
};

/// Column-major vectorization, vec(K) ∈ ℝ^{mn}.
inline VectorXd vec(const MatrixXd& K) {
  return Eigen::Map<const VectorXd>(K.data(), K.size());
}

inline MatrixXd unvec(const VectorXd& k, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const MatrixXd>(k.data(), rows, cols);
}

}  // namespace passynth
