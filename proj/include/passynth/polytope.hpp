#pragma once

// Convex inner approximation P_C of a verified region: an axis-aligned box
// in H-representation g(k) = G·k + h ≥ 0, and the tangent-cone projection
// M(k) = I − Gᵀ F(k)⁻¹ G with F(k) = 2·diag(g(k)) + G·Gᵀ.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "passynth/errors.hpp"
#include "passynth/linalg.hpp"
#include "passynth/region.hpp"

namespace passynth {

struct GainPolytope {
  MatrixXd G;  // l × mn
  VectorXd h;  // l
  VectorXd chebyshev_center;
  // No constraints at all; M ≡ I. Used for unconstrained comparison flows.
  bool whole_space = false;

  Eigen::Index dimension() const { return whole_space ? chebyshev_center.size() : G.cols(); }
  Eigen::Index rows() const { return G.rows(); }

  static GainPolytope unconstrained(Eigen::Index dim) {
    GainPolytope out;
    out.G = MatrixXd::Zero(0, dim);
    out.h = VectorXd::Zero(0);
    out.chebyshev_center = VectorXd::Zero(dim);
    out.whole_space = true;
    return out;
  }

  /// Box lo ≤ k ≤ hi with rows ordered (+e₁, −e₁, +e₂, −e₂, …).
  static GainPolytope box(const VectorXd& lo, const VectorXd& hi) {
    const Eigen::Index d = lo.size();
    if (hi.size() != d || d == 0) {
      throw SynthError(ErrorCode::kDimensionMismatch, "box bounds disagree in size");
    }
    if (!((hi - lo).minCoeff() > 0.0)) {
      throw SynthError(ErrorCode::kInvalidArgument, "box has empty interior");
    }
    GainPolytope out;
    out.G = MatrixXd::Zero(2 * d, d);
    out.h.resize(2 * d);
    for (Eigen::Index i = 0; i < d; ++i) {
      out.G(2 * i, i) = 1.0;
      out.h(2 * i) = -lo(i);
      out.G(2 * i + 1, i) = -1.0;
      out.h(2 * i + 1) = hi(i);
    }
    out.chebyshev_center = 0.5 * (lo + hi);
    return out;
  }

  /// Recovers (lo, hi) when the rows have the box layout.
  std::optional<std::pair<VectorXd, VectorXd>> as_box() const {
    if (whole_space) return std::nullopt;
    const Eigen::Index d = G.cols();
    if (G.rows() != 2 * d) return std::nullopt;
    VectorXd lo(d), hi(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      VectorXd plus = VectorXd::Zero(d);
      plus(i) = 1.0;
      if (G.row(2 * i).transpose() != plus || G.row(2 * i + 1).transpose() != -plus) {
        return std::nullopt;
      }
      lo(i) = -h(2 * i);
      hi(i) = h(2 * i + 1);
    }
    return std::pair{lo, hi};
  }
};

struct ConstraintValues {
  VectorXd g;
  std::vector<Eigen::Index> active_set;

  double min_g() const {
    return g.size() ? g.minCoeff() : std::numeric_limits<double>::infinity();
  }
};

inline ConstraintValues constraints_at(const GainPolytope& polytope, const VectorXd& k) {
  if (k.size() != polytope.dimension()) {
    throw SynthError(ErrorCode::kDimensionMismatch, "constraints_at: point has wrong size");
  }
  ConstraintValues out;
  if (polytope.whole_space) {
    out.g = VectorXd::Zero(0);
    return out;
  }
  out.g = polytope.G * k + polytope.h;
  const double tol = 1e-9 * (1.0 + (polytope.h.size() ? polytope.h.cwiseAbs().maxCoeff() : 0.0));
  for (Eigen::Index i = 0; i < out.g.size(); ++i) {
    if (std::abs(out.g(i)) <= tol) out.active_set.push_back(i);
  }
  return out;
}

struct ProjectionOperator {
  VectorXd point;
  MatrixXd M;  // mn × mn
  MatrixXd F;  // l × l
};

inline constexpr double kFeasibilityTolerance = 1e-9;

inline ProjectionOperator projection_operator(const GainPolytope& polytope, const VectorXd& k) {
  const auto cv = constraints_at(polytope, k);
  const Eigen::Index d = polytope.dimension();
  ProjectionOperator out;
  out.point = k;
  if (polytope.whole_space) {
    out.M = MatrixXd::Identity(d, d);
    out.F = MatrixXd::Zero(0, 0);
    return out;
  }
  if (cv.min_g() < -kFeasibilityTolerance) {
    throw SynthError(ErrorCode::kInvalidArgument, "projection_operator: point is infeasible");
  }
  const MatrixXd& G = polytope.G;
  out.F = G * G.transpose();
  out.F.diagonal() += 2.0 * cv.g;
  if (min_eigenvalue_sym(out.F) < 1e-12) {
    throw SynthError(ErrorCode::kDegenerateF,
                     "projection_operator: F is singular (LICQ fails at this point)");
  }
  Eigen::LLT<MatrixXd> llt(out.F);
  MatrixXd FinvG;
  if (llt.info() == Eigen::Success) {
    FinvG = llt.solve(G);
  } else {
    MatrixXd ridge = out.F;
    ridge.diagonal().array() += 1e-12;
    FinvG = ridge.ldlt().solve(G);
  }
  out.M = symmetrize(MatrixXd::Identity(d, d) - G.transpose() * FinvG);
  return out;
}

/// Grows the inner box greedily on the region's grid.
///
/// Starting at the verified cube whose center has the lowest score, faces
/// are extended one grid step at a time in round-robin order, skipping an
/// extension when the new slab is not entirely made of verified cubes. Every
/// rotation of the face order yields one candidate; the candidate with the
/// lowest score at its center wins (ties go to the larger box). The result
/// is shrunk by 1e-6·edge on every face so it sits strictly inside the union.
inline GainPolytope inscribe_polytope(const VerifiedRegion& region,
                                      const std::function<double(const VectorXd&)>& score) {
  if (region.cubes.empty()) {
    throw SynthError(ErrorCode::kEmptyRegion, "inscribe_polytope: region has no verified cubes");
  }
  const Eigen::Index d = region.grid_anchor.size();
  std::set<GridCoord> verified;
  for (const auto& cube : region.cubes) verified.insert(cube.coord);

  auto safe_score = [&](const VectorXd& k) {
    const double s = score(k);
    return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
  };

  const GainCube* start = &region.cubes.front();
  double start_score = safe_score(start->center);
  for (const auto& cube : region.cubes) {
    const double s = safe_score(cube.center);
    if (s < start_score || (s == start_score && cube.coord < start->coord)) {
      start = &cube;
      start_score = s;
    }
  }

  // Box in grid units: cells lo[i]..hi[i] inclusive.
  using Cells = std::pair<GridCoord, GridCoord>;
  auto slab_verified = [&](const Cells& box, Eigen::Index axis, long layer) {
    GridCoord lo = box.first, hi = box.second;
    lo[static_cast<std::size_t>(axis)] = hi[static_cast<std::size_t>(axis)] = layer;
    GridCoord cur = lo;
    while (true) {
      if (!verified.count(cur)) return false;
      std::size_t i = 0;
      for (; i < cur.size(); ++i) {
        if (cur[i] < hi[i]) {
          ++cur[i];
          break;
        }
        cur[i] = lo[i];
      }
      if (i == cur.size()) return true;
    }
  };

  auto grow = [&](std::size_t rotation) {
    Cells box{start->coord, start->coord};
    const std::size_t faces = static_cast<std::size_t>(2 * d);
    std::vector<bool> blocked(faces, false);
    std::size_t open = faces;
    std::size_t f = rotation % faces;
    while (open > 0) {
      if (!blocked[f]) {
        const auto axis = static_cast<Eigen::Index>(f / 2);
        const bool upper = (f % 2) == 0;
        const long layer = upper ? box.second[f / 2] + 1 : box.first[f / 2] - 1;
        if (slab_verified(box, axis, layer)) {
          (upper ? box.second : box.first)[f / 2] = layer;
        } else {
          blocked[f] = true;
          --open;
        }
      }
      f = (f + 1) % faces;
    }
    return box;
  };

  const double delta = 1e-6 * region.edge;
  auto to_polytope = [&](const Cells& box) {
    VectorXd lo(d), hi(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      lo(i) = region.grid_anchor(i) + (static_cast<double>(box.first[ui]) - 0.5) * region.edge + delta;
      hi(i) = region.grid_anchor(i) + (static_cast<double>(box.second[ui]) + 0.5) * region.edge - delta;
    }
    return GainPolytope::box(lo, hi);
  };
  auto volume = [](const Cells& box) {
    double v = 1.0;
    for (std::size_t i = 0; i < box.first.size(); ++i) {
      v *= static_cast<double>(box.second[i] - box.first[i] + 1);
    }
    return v;
  };

  std::optional<Cells> best;
  double best_score = 0.0;
  for (std::size_t r = 0; r < static_cast<std::size_t>(2 * d); ++r) {
    const Cells box = grow(r);
    const double s = safe_score(to_polytope(box).chebyshev_center);
    if (!best || s < best_score || (s == best_score && volume(box) > volume(*best))) {
      best = box;
      best_score = s;
    }
  }
  return to_polytope(*best);
}

/// Exact coverage check: every grid cell met by the box [lo, hi] belongs to
/// a verified cube of the region.
inline bool box_covered(const VerifiedRegion& region, const VectorXd& lo, const VectorXd& hi) {
  const Eigen::Index d = region.grid_anchor.size();
  std::set<GridCoord> verified;
  for (const auto& cube : region.cubes) verified.insert(cube.coord);
  GridCoord clo(static_cast<std::size_t>(d)), chi(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    const double a = (lo(i) - region.grid_anchor(i)) / region.edge;
    const double b = (hi(i) - region.grid_anchor(i)) / region.edge;
    clo[static_cast<std::size_t>(i)] = std::lround(std::floor(a + 0.5));
    chi[static_cast<std::size_t>(i)] = std::lround(std::ceil(b - 0.5));
  }
  GridCoord cur = clo;
  while (true) {
    if (!verified.count(cur)) return false;
    std::size_t i = 0;
    for (; i < cur.size(); ++i) {
      if (cur[i] < chi[i]) {
        ++cur[i];
        break;
      }
      cur[i] = clo[i];
    }
    if (i == cur.size()) return true;
  }
}

}  // namespace passynth
