#pragma once

// (Strict) passivity certificates for closed loops u = −Kx via the KYP
// matrix inequalities, and the convexified search for a first passivating
// gain in the (Z, W) = (P⁻¹, K·P⁻¹) coordinates.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "passynth/errors.hpp"
#include "passynth/linalg.hpp"
#include "passynth/lmi_search.hpp"
#include "passynth/plant.hpp"

namespace passynth {

enum class PassivityKind { kStrict, kNonstrict };

inline std::string to_string(PassivityKind kind) {
  return kind == PassivityKind::kStrict ? "strict" : "nonstrict";
}

struct PassivityMode {
  PassivityKind kind = PassivityKind::kNonstrict;
  double strict_margin = 1e-6;    // ε_s
  double nonstrict_slack = 1e-7;  // ε_ns
  double min_storage_eig = 1e-8;  // ε_P

  static PassivityMode strict() { return {PassivityKind::kStrict}; }
  static PassivityMode nonstrict() { return {PassivityKind::kNonstrict}; }

  bool is_strict() const { return kind == PassivityKind::kStrict; }

  /// Bound on the normalized largest constraint eigenvalue.
  double threshold() const { return is_strict() ? -strict_margin : nonstrict_slack; }

  void validate() const {
    if (!(strict_margin > 0.0) || !(nonstrict_slack >= 0.0) || !(min_storage_eig > 0.0)) {
      throw SynthError(ErrorCode::kInvalidArgument, "invalid passivity margins");
    }
  }
};

inline constexpr double kEqualityTolerance = 1e-7;

/// Budget of the feasibility search.
struct SearchOptions {
  int restarts = 5;
  int iterations = 2000;
  std::uint64_t seed = 0;
};

struct PassivityCertificate {
  MatrixXd P;
  PassivityMode mode;
  double lambda_max_constraint = 0.0;  // raw, max over certified gains
  double constraint_scale = 1.0;       // 1 + ‖A‖_F
  double lambda_min_P = 0.0;
  double equality_residual = 0.0;
  std::vector<std::string> warnings;

  double normalized_margin() const { return lambda_max_constraint / constraint_scale; }
};

struct CertifyResult {
  std::optional<PassivityCertificate> certificate;
  double best_lambda_max = 0.0;  // raw; meaningful when infeasible
  double constraint_scale = 1.0;

  bool feasible() const { return certificate.has_value(); }
};

inline double constraint_scale(const LtiPlant& plant) { return 1.0 + plant.A.norm(); }

/// M_K for D ≠ 0; A_KᵀP + P·A_K for D = 0 (the equality B_dᵀP = C is
/// checked separately by equality_residual).
inline MatrixXd kyp_block(const LtiPlant& plant, const MatrixXd& K, const MatrixXd& P) {
  plant.check_gain(K);
  const Eigen::Index n = plant.n();
  if (P.rows() != n || P.cols() != n) {
    throw SynthError(ErrorCode::kDimensionMismatch, "kyp_block: P is " + shape_of(P));
  }
  const MatrixXd A_K = plant.closed_loop(K);
  const MatrixXd lyap = A_K.transpose() * P + P * A_K;
  if (plant.zero_feedthrough()) return symmetrize(lyap);
  const Eigen::Index p = plant.p();
  MatrixXd M(n + p, n + p);
  M.topLeftCorner(n, n) = lyap;
  M.topRightCorner(n, p) = P * plant.B_d - plant.C.transpose();
  M.bottomLeftCorner(p, n) = M.topRightCorner(n, p).transpose();
  M.bottomRightCorner(p, p) = -plant.D - plant.D.transpose();
  return symmetrize(M);
}

inline double equality_residual(const LtiPlant& plant, const MatrixXd& P) {
  if (!plant.zero_feedthrough()) return 0.0;
  return (plant.B_d.transpose() * P - plant.C).norm();
}

/// Independent validation of a given storage matrix against a gain list:
/// fresh block assembly, exact symmetric eigensolves and equality residual.
inline std::optional<PassivityCertificate> validate_certificate(
    const LtiPlant& plant, const std::vector<MatrixXd>& gains, const MatrixXd& P,
    const PassivityMode& mode) {
  PassivityCertificate cert;
  cert.P = symmetrize(P);
  cert.mode = mode;
  cert.constraint_scale = constraint_scale(plant);
  cert.lambda_min_P = min_eigenvalue_sym(cert.P);
  cert.equality_residual = equality_residual(plant, cert.P);
  cert.lambda_max_constraint = -std::numeric_limits<double>::infinity();
  for (const MatrixXd& K : gains) {
    cert.lambda_max_constraint =
        std::max(cert.lambda_max_constraint, max_eigenvalue_sym(kyp_block(plant, K, cert.P)));
  }
  if (!(cert.lambda_min_P >= mode.min_storage_eig)) return std::nullopt;
  if (!(cert.normalized_margin() <= mode.threshold())) return std::nullopt;
  if (plant.zero_feedthrough() && !(cert.equality_residual <= kEqualityTolerance)) {
    return std::nullopt;
  }
  return cert;
}

namespace detail {

// Affine parametrization of the symmetric matrices S with Lhs(S) = rhs,
// where Lhs is linear. Throws EqualityInconsistent when no symmetric
// solution exists.
inline lmi::AffineSym constrained_symmetric_family(
    Eigen::Index n, const std::function<MatrixXd(const MatrixXd&)>& lhs, const MatrixXd& rhs,
    const char* what) {
  const auto basis = lmi::symmetric_basis(n);
  const Eigen::Index dim = static_cast<Eigen::Index>(basis.size());
  MatrixXd L(rhs.size(), dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    const MatrixXd image = lhs(basis[static_cast<std::size_t>(k)]);
    L.col(k) = Eigen::Map<const VectorXd>(image.data(), image.size());
  }
  const VectorXd c = Eigen::Map<const VectorXd>(rhs.data(), rhs.size());
  Eigen::JacobiSVD<MatrixXd> svd(L, Eigen::ComputeFullU | Eigen::ComputeFullV);
  svd.setThreshold(1e-10);
  const VectorXd y0 = svd.solve(c);
  if ((L * y0 - c).norm() > 1e-9 * (1.0 + c.norm())) {
    std::ostringstream os;
    os << what << " has no symmetric solution (residual " << (L * y0 - c).norm() << ")";
    throw SynthError(ErrorCode::kEqualityInconsistent, os.str());
  }
  const Eigen::Index rank = svd.rank();
  lmi::AffineSym family;
  family.base = MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < dim; ++k) family.base += y0(k) * basis[static_cast<std::size_t>(k)];
  for (Eigen::Index j = rank; j < dim; ++j) {
    MatrixXd dir = MatrixXd::Zero(n, n);
    for (Eigen::Index k = 0; k < dim; ++k) dir += svd.matrixV()(k, j) * basis[static_cast<std::size_t>(k)];
    family.directions.push_back(std::move(dir));
  }
  return family;
}

inline lmi::AffineSym storage_family(const LtiPlant& plant) {
  if (!plant.zero_feedthrough()) {
    lmi::AffineSym family;
    family.base = MatrixXd::Zero(plant.n(), plant.n());
    family.directions = lmi::symmetric_basis(plant.n());
    return family;
  }
  return constrained_symmetric_family(
      plant.n(), [&](const MatrixXd& S) { MatrixXd r = plant.B_d.transpose() * S; return r; },
      plant.C, "B_d^T P = C");
}

inline std::vector<std::string> assumption_warnings(const LtiPlant& plant,
                                                    const std::vector<MatrixXd>& gains) {
  std::vector<std::string> warnings;
  constexpr double kNearDegenerate = 1e-6;
  for (std::size_t i = 0; i < gains.size(); ++i) {
    const MatrixXd A_K = plant.closed_loop(gains[i]);
    if (pbh_margin(A_K, plant.B_d, false) < kNearDegenerate) {
      warnings.push_back("gain " + std::to_string(i) + ": (A_K, B_d) near-uncontrollable");
    }
    if (pbh_margin(A_K.transpose(), plant.C.transpose(), false) < kNearDegenerate) {
      warnings.push_back("gain " + std::to_string(i) + ": (A_K, C) near-unobservable");
    }
  }
  return warnings;
}

}  // namespace detail

/// Searches one storage matrix P certifying every gain in `gains`.
inline CertifyResult certify_common(const LtiPlant& plant, const std::vector<MatrixXd>& gains,
                                    const PassivityMode& mode, const SearchOptions& options = {}) {
  if (gains.empty()) {
    throw SynthError(ErrorCode::kInvalidArgument, "certify_common: empty gain list");
  }
  mode.validate();
  for (const MatrixXd& K : gains) plant.check_gain(K);

  lmi::Problem problem;
  problem.positive = detail::storage_family(plant);
  problem.dimension = static_cast<Eigen::Index>(problem.positive.directions.size());
  problem.scale = constraint_scale(plant);
  problem.target = mode.threshold();
  problem.eps_pos = mode.min_storage_eig;
  const MatrixXd zero = MatrixXd::Zero(plant.n(), plant.n());
  for (const MatrixXd& K : gains) {
    lmi::AffineSym block;
    const MatrixXd offset = kyp_block(plant, K, zero);
    block.base = kyp_block(plant, K, problem.positive.base);
    for (const MatrixXd& dir : problem.positive.directions) {
      block.directions.push_back(kyp_block(plant, K, dir) - offset);
    }
    problem.blocks.push_back(std::move(block));
  }

  CertifyResult result;
  result.constraint_scale = problem.scale;
  std::optional<PassivityCertificate> found;
  const lmi::Options engine{options.restarts, options.iterations, 1e-1, 1e-4, options.seed};
  const auto outcome = lmi::search(problem, engine, [&](const VectorXd& y) {
    found = validate_certificate(plant, gains, problem.positive.at(y), mode);
    return found.has_value();
  });
  result.best_lambda_max = outcome.best_normalized * problem.scale;
  if (outcome.success && found) {
    found->warnings = detail::assumption_warnings(plant, gains);
    result.certificate = std::move(found);
  }
  return result;
}

inline CertifyResult certify_gain(const LtiPlant& plant, const MatrixXd& K,
                                  const PassivityMode& mode, const SearchOptions& options = {}) {
  return certify_common(plant, {K}, mode, options);
}

struct FeasiblePair {
  MatrixXd Z;
  MatrixXd W;
  MatrixXd K;  // W·Z⁻¹
  PassivityCertificate certificate;  // with P = Z⁻¹
};

struct FindResult {
  std::optional<FeasiblePair> pair;
  double best_lambda_max = 0.0;

  bool feasible() const { return pair.has_value(); }
};

/// Looks for (Z ≻ 0, W) with N_D(Z, W) ⪯_s 0 (and B_dᵀ = CZ when D = 0);
/// the gain is K = W·Z⁻¹. In nonstrict mode a strictly feasible pair is
/// tried first so the result lies inside the stability region.
inline FindResult find_passivating_gain(const LtiPlant& plant, const PassivityMode& mode,
                                        const SearchOptions& options = {}) {
  mode.validate();
  const Eigen::Index n = plant.n();
  const Eigen::Index m = plant.m();
  const Eigen::Index p = plant.p();
  const bool d_zero = plant.zero_feedthrough();

  lmi::AffineSym z_family;
  if (d_zero) {
    z_family = detail::constrained_symmetric_family(
        n, [&](const MatrixXd& S) { MatrixXd r = plant.C * S; return r; },
        plant.B_d.transpose(), "C Z = B_d^T");
  } else {
    z_family.base = MatrixXd::Zero(n, n);
    z_family.directions = lmi::symmetric_basis(n);
  }
  const std::size_t nz = z_family.directions.size();
  const Eigen::Index dim = static_cast<Eigen::Index>(nz) + m * n;

  auto n_block = [&](const MatrixXd& Z, const MatrixXd& W, bool homogeneous) {
    MatrixXd lyap = Z * plant.A.transpose() + plant.A * Z - W.transpose() * plant.B_u.transpose() -
                    plant.B_u * W;
    if (d_zero) return MatrixXd(symmetrize(lyap));
    MatrixXd N(n + p, n + p);
    N.topLeftCorner(n, n) = lyap;
    N.topRightCorner(n, p) = homogeneous ? MatrixXd(-Z * plant.C.transpose())
                                         : MatrixXd(plant.B_d - Z * plant.C.transpose());
    N.bottomLeftCorner(p, n) = N.topRightCorner(n, p).transpose();
    N.bottomRightCorner(p, p) =
        homogeneous ? MatrixXd::Zero(p, p) : MatrixXd(-plant.D - plant.D.transpose());
    return MatrixXd(symmetrize(N));
  };

  lmi::Problem problem;
  problem.dimension = dim;
  problem.scale = constraint_scale(plant);
  problem.eps_pos = mode.min_storage_eig;
  problem.positive.base = z_family.base;
  lmi::AffineSym block;
  block.base = n_block(z_family.base, MatrixXd::Zero(m, n), false);
  for (const MatrixXd& dz : z_family.directions) {
    problem.positive.directions.push_back(dz);
    block.directions.push_back(n_block(dz, MatrixXd::Zero(m, n), true));
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      MatrixXd dw = MatrixXd::Zero(m, n);
      dw(i, j) = 1.0;
      problem.positive.directions.push_back(MatrixXd::Zero(n, n));
      block.directions.push_back(n_block(MatrixXd::Zero(n, n), dw, true));
    }
  }
  problem.blocks.push_back(std::move(block));

  auto unpack = [&](const VectorXd& y) {
    MatrixXd Z = problem.positive.at(y);
    MatrixXd W = unvec(y.tail(m * n), m, n);
    return std::pair{symmetrize(Z), W};
  };

  FindResult result;
  result.best_lambda_max = std::numeric_limits<double>::infinity();
  std::vector<PassivityMode> attempts;
  if (!mode.is_strict()) {
    PassivityMode interior = PassivityMode::strict();
    interior.min_storage_eig = mode.min_storage_eig;
    attempts.push_back(interior);
  }
  attempts.push_back(mode);

  for (const PassivityMode& attempt : attempts) {
    problem.target = attempt.threshold();
    std::optional<FeasiblePair> found;
    const lmi::Options engine{options.restarts, options.iterations, 1e-1, 1e-4, options.seed};
    const auto outcome = lmi::search(problem, engine, [&](const VectorXd& y) {
      auto [Z, W] = unpack(y);
      Eigen::LLT<MatrixXd> llt(Z);
      if (llt.info() != Eigen::Success) return false;
      const MatrixXd P = symmetrize(llt.solve(MatrixXd::Identity(n, n)));
      const MatrixXd K = W * P;
      auto cert = validate_certificate(plant, {K}, P, mode);
      if (!cert) return false;
      cert->warnings = detail::assumption_warnings(plant, {K});
      found = FeasiblePair{Z, W, K, *cert};
      return true;
    });
    result.best_lambda_max =
        std::min(result.best_lambda_max, outcome.best_normalized * problem.scale);
    if (outcome.success && found) {
      result.pair = std::move(found);
      return result;
    }
  }
  return result;
}

}  // namespace passynth
