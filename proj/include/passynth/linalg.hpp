#pragma once

// Dense small-matrix kernels: spectra, Lyapunov equations and the continuous
// algebraic Riccati equation. Everything here is a pure function of its
// arguments.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include "passynth/errors.hpp"

namespace passynth {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Spectral abscissa threshold below which a matrix counts as Hurwitz.
inline constexpr double kHurwitzThreshold = -1e-12;

/// Largest problem size for the vectorized Lyapunov solve (n² unknowns).
inline constexpr Eigen::Index kMaxLyapunovOrder = 64;

struct SpectralSummary {
  Eigen::VectorXcd eigenvalues;
  double spectral_abscissa = 0.0;
  // Set only when the input was symmetric.
  std::optional<double> min_eigenvalue_sym;

  bool is_hurwitz() const { return spectral_abscissa < kHurwitzThreshold; }
};

inline MatrixXd symmetrize(const MatrixXd& X) {
  return 0.5 * (X + X.transpose());
}

inline bool is_symmetric(const MatrixXd& X, double tol = 1e-12) {
  if (X.rows() != X.cols()) return false;
  const double scale = 1.0 + X.cwiseAbs().maxCoeff();
  return (X - X.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline std::string shape_of(const MatrixXd& M) {
  std::ostringstream os;
  os << M.rows() << "x" << M.cols();
  return os.str();
}

inline SpectralSummary spectral_summary(const MatrixXd& A) {
  if (A.rows() != A.cols() || A.rows() == 0) {
    throw SynthError(ErrorCode::kNonSquare,
                     "spectral_summary expects a square matrix, got " +
                         shape_of(A));
  }
  SpectralSummary out;
  if (is_symmetric(A)) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(A),
                                               Eigen::EigenvaluesOnly);
    out.eigenvalues = es.eigenvalues().cast<std::complex<double>>();
    out.min_eigenvalue_sym = es.eigenvalues().minCoeff();
  } else {
    Eigen::EigenSolver<MatrixXd> es(A, /*computeEigenvectors=*/false);
    out.eigenvalues = es.eigenvalues();
  }
  out.spectral_abscissa = out.eigenvalues.real().maxCoeff();
  return out;
}

inline double spectral_abscissa(const MatrixXd& A) {
  return spectral_summary(A).spectral_abscissa;
}

inline bool is_hurwitz(const MatrixXd& A) {
  return spectral_abscissa(A) < kHurwitzThreshold;
}

inline double min_eigenvalue_sym(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(S),
                                             Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue_sym(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(S),
                                             Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline MatrixXd kron(const MatrixXd& X, const MatrixXd& Y) {
  MatrixXd out(X.rows() * Y.rows(), X.cols() * Y.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      out.block(i * Y.rows(), j * Y.cols(), Y.rows(), Y.cols()) = X(i, j) * Y;
    }
  }
  return out;
}

/// Frobenius norm of A_clᵀX + X·A_cl + Qrhs.
inline double lyapunov_residual(const MatrixXd& A_cl, const MatrixXd& X,
                                const MatrixXd& Qrhs) {
  return (A_cl.transpose() * X + X * A_cl + Qrhs).norm();
}

/// Solves A_clᵀX + X·A_cl + Qrhs = 0 for symmetric X.
///
/// Dense Kronecker formulation (I⊗A_clᵀ + A_clᵀ⊗I)·vec(X) = −vec(Qrhs) with
/// one step of iterative refinement. Requires A_cl Hurwitz.
inline MatrixXd solve_lyapunov(const MatrixXd& A_cl, const MatrixXd& Qrhs) {
  const Eigen::Index n = A_cl.rows();
  if (A_cl.cols() != n || n == 0) {
    throw SynthError(ErrorCode::kNonSquare,
                     "solve_lyapunov: A_cl is " + shape_of(A_cl));
  }
  if (Qrhs.rows() != n || Qrhs.cols() != n) {
    throw SynthError(ErrorCode::kDimensionMismatch,
                     "solve_lyapunov: Qrhs is " + shape_of(Qrhs) +
                         ", expected " + shape_of(A_cl));
  }
  if (n > kMaxLyapunovOrder) {
    throw SynthError(ErrorCode::kInvalidArgument,
                     "solve_lyapunov supports n <= 64");
  }
  const double abscissa = spectral_abscissa(A_cl);
  if (!(abscissa < kHurwitzThreshold)) {
    std::ostringstream os;
    os << "solve_lyapunov: spectral abscissa " << abscissa << " >= -1e-12";
    throw SynthError(ErrorCode::kNotHurwitz, os.str());
  }

  const MatrixXd I = MatrixXd::Identity(n, n);
  const MatrixXd At = A_cl.transpose();
  const MatrixXd L = kron(I, At) + kron(At, I);
  Eigen::PartialPivLU<MatrixXd> lu(L);
  if (!(lu.rcond() > 1e3 * std::numeric_limits<double>::epsilon())) {
    throw SynthError(ErrorCode::kSingularSystem,
                     "solve_lyapunov: vectorized system is numerically "
                     "singular");
  }
  const MatrixXd Qs = symmetrize(Qrhs);
  const VectorXd rhs = -Eigen::Map<const VectorXd>(Qs.data(), n * n);
  VectorXd x = lu.solve(rhs);
  x += lu.solve(rhs - L * x);
  MatrixXd X = Eigen::Map<const MatrixXd>(x.data(), n, n);
  return symmetrize(X);
}

/// PBH rank test of [A − λI, B] at every eigenvalue λ with Re λ ≥ −1e-12.
/// Returns the smallest normalized n-th singular value encountered (1 when
/// no eigenvalue needs checking).
inline double pbh_margin(const MatrixXd& A, const MatrixXd& B,
                         bool unstable_only = true) {
  const Eigen::Index n = A.rows();
  const auto eig = spectral_summary(A).eigenvalues;
  double margin = 1.0;
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    const std::complex<double> lambda = eig(i);
    if (unstable_only && lambda.real() < kHurwitzThreshold) continue;
    Eigen::MatrixXcd H(n, n + B.cols());
    H.leftCols(n) = A.cast<std::complex<double>>();
    H.leftCols(n).diagonal().array() -= lambda;
    H.rightCols(B.cols()) = B.cast<std::complex<double>>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(H);
    const auto& s = svd.singularValues();
    const double smin = s.size() >= n ? s(n - 1) : 0.0;
    margin = std::min(margin, smin / std::max(1.0, s(0)));
  }
  return margin;
}

inline constexpr double kPbhTolerance = 1e-9;

inline bool is_stabilizable(const MatrixXd& A, const MatrixXd& B) {
  return pbh_margin(A, B) > kPbhTolerance;
}

/// Detectability of (A, C) through the dual stabilizability test.
inline bool is_detectable(const MatrixXd& A, const MatrixXd& C) {
  return pbh_margin(A.transpose(), C.transpose()) > kPbhTolerance;
}

inline bool is_controllable(const MatrixXd& A, const MatrixXd& B) {
  return pbh_margin(A, B, /*unstable_only=*/false) > kPbhTolerance;
}

inline bool is_observable(const MatrixXd& A, const MatrixXd& C) {
  return pbh_margin(A.transpose(), C.transpose(), /*unstable_only=*/false) >
         kPbhTolerance;
}

struct CareSolution {
  MatrixXd X;  // stabilizing solution
  MatrixXd K;  // R⁻¹BᵀX
  int iterations = 0;
  double relative_residual = 0.0;
};

inline double care_relative_residual(const MatrixXd& A, const MatrixXd& B,
                                     const MatrixXd& Q, const MatrixXd& R,
                                     const MatrixXd& X) {
  const MatrixXd G = B * R.llt().solve(B.transpose());
  const MatrixXd res = A.transpose() * X + X * A - X * G * X + Q;
  const double scale =
      1.0 + Q.norm() + 2.0 * A.norm() * X.norm() + (X * G * X).norm();
  return res.norm() / scale;
}

/// Stabilizing solution of AᵀX + XA − XBR⁻¹BᵀX + Q = 0 by Newton–Kleinman.
inline CareSolution solve_care(const MatrixXd& A, const MatrixXd& B,
                               const MatrixXd& Q, const MatrixXd& R,
                               int max_iterations = 100) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  if (A.cols() != n) {
    throw SynthError(ErrorCode::kNonSquare, "solve_care: A is " + shape_of(A));
  }
  if (B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != m ||
      R.cols() != m) {
    throw SynthError(ErrorCode::kDimensionMismatch,
                     "solve_care: inconsistent A/B/Q/R shapes");
  }
  Eigen::LLT<MatrixXd> R_llt(symmetrize(R));
  if (R_llt.info() != Eigen::Success) {
    throw SynthError(ErrorCode::kInvalidArgument, "solve_care: R is not PD");
  }
  if (!is_stabilizable(A, B)) {
    throw SynthError(ErrorCode::kNotStabilizable,
                     "solve_care: (A, B) fails the PBH stabilizability test");
  }
  // ker √Q = ker Q for Q ⪰ 0, so Q stands in for √Q in the rank test.
  if (!is_detectable(A, Q)) {
    throw SynthError(ErrorCode::kNotDetectable,
                     "solve_care: (A, sqrt(Q)) fails the PBH detectability "
                     "test");
  }

  // Initial stabilizing gain (Bass): with β making −(A+βI) Hurwitz, solve
  // (A+βI)Z + Z(A+βI)ᵀ = 2BR⁻¹Bᵀ and take K₀ = R⁻¹BᵀZ⁻¹.
  MatrixXd K = MatrixXd::Zero(m, n);
  const SpectralSummary spec_A = spectral_summary(A);
  if (!spec_A.is_hurwitz()) {
    const double min_re = spec_A.eigenvalues.real().minCoeff();
    const double beta = 2.0 * std::max(0.0, -min_re) + 1.0;
    const MatrixXd shifted =
        -(A + beta * MatrixXd::Identity(n, n)).transpose();
    const MatrixXd G = B * R_llt.solve(B.transpose());
    const MatrixXd Z = solve_lyapunov(shifted, 2.0 * G);
    Eigen::LDLT<MatrixXd> Z_ldlt(Z);
    K = R_llt.solve(B.transpose() * Z_ldlt.solve(MatrixXd::Identity(n, n)));
    if (!is_hurwitz(A - B * K)) {
      throw SynthError(ErrorCode::kNoConvergence,
                       "solve_care: could not construct a stabilizing "
                       "initial gain (uncontrollable modes?)");
    }
  }

  CareSolution out;
  MatrixXd X_prev;
  for (int it = 1; it <= max_iterations; ++it) {
    const MatrixXd A_K = A - B * K;
    const MatrixXd X = solve_lyapunov(A_K, Q + K.transpose() * R * K);
    const MatrixXd K_next = R_llt.solve(B.transpose() * X);
    const double step = (K_next - K).norm();
    K = K_next;
    out.X = X;
    out.iterations = it;
    if (step <= 1e-14 * (1.0 + K.norm()) ||
        (X_prev.size() > 0 && (X - X_prev).norm() <= 1e-15 * (1.0 + X.norm()))) {
      break;
    }
    X_prev = X;
  }
  out.K = K;
  out.relative_residual = care_relative_residual(A, B, Q, R, out.X);
  if (!(out.relative_residual <= 1e-9) || !is_hurwitz(A - B * out.K)) {
    std::ostringstream os;
    os << "solve_care: Newton-Kleinman stalled after " << out.iterations
       << " iterations (relative residual " << out.relative_residual << ")";
    throw SynthError(ErrorCode::kNoConvergence, os.str());
  }
  return out;
}

}  // namespace passynth
