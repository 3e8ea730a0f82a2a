#pragma once

// Inner approximation of the passivating-gain set by a union of axis-aligned
// hypercubes, each certified through a storage matrix common to all of its
// vertices (which then covers the whole cube, the KYP block being affine in
// the gain). Cubes are grown by breadth-first flood fill over a uniform grid
// anchored at a passivating seed gain.

#include <Eigen/Dense>

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

#include "passynth/errors.hpp"
#include "passynth/linalg.hpp"
#include "passynth/parallel.hpp"
#include "passynth/passivity.hpp"
#include "passynth/plant.hpp"

namespace passynth {

using GridCoord = std::vector<long>;

inline constexpr Eigen::Index kMaxCubeDimension = 8;

struct GainCube {
  GridCoord coord;
  VectorXd center;  // vec(K)
  double edge = 0.0;
  std::optional<PassivityCertificate> certificate;
  double best_lambda_max = 0.0;  // certificate margin, or best attempt
};

struct RejectedCube {
  GridCoord coord;
  VectorXd center;
  double best_lambda_max = 0.0;
};

struct VerifiedRegion {
  std::vector<GainCube> cubes;  // all certified, sorted by coord
  VectorXd grid_anchor;         // center of the cube at coord 0
  double edge = 0.0;
  std::vector<RejectedCube> rejected;
  Eigen::Index gain_rows = 0;
  Eigen::Index gain_cols = 0;

  VectorXd center_of(const GridCoord& c) const {
    VectorXd out = grid_anchor;
    for (std::size_t i = 0; i < c.size(); ++i) {
      out(static_cast<Eigen::Index>(i)) += edge * static_cast<double>(c[i]);
    }
    return out;
  }
};

/// All 2^d vertices of the cube, as gain matrices.
inline std::vector<MatrixXd> cube_vertices(const VectorXd& center, double edge,
                                           Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index d = center.size();
  std::vector<MatrixXd> out;
  out.reserve(std::size_t{1} << d);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
    VectorXd v = center;
    for (Eigen::Index i = 0; i < d; ++i) {
      v(i) += ((mask >> i) & 1U) ? 0.5 * edge : -0.5 * edge;
    }
    out.push_back(unvec(v, rows, cols));
  }
  return out;
}

struct CubeVerdict {
  GainCube cube;
  bool verified() const { return cube.certificate.has_value(); }
};

inline CubeVerdict verify_cube(const LtiPlant& plant, const VectorXd& center, double edge,
                               const PassivityMode& mode, const SearchOptions& options = {}) {
  if (!(edge > 0.0)) {
    throw SynthError(ErrorCode::kInvalidArgument, "verify_cube: edge must be positive");
  }
  const Eigen::Index d = plant.m() * plant.n();
  if (center.size() != d) {
    throw SynthError(ErrorCode::kDimensionMismatch, "verify_cube: center has wrong size");
  }
  if (d > kMaxCubeDimension) {
    throw SynthError(ErrorCode::kTooManyVertices,
                     "verify_cube: m*n = " + std::to_string(d) + " exceeds 8 (2^(mn) vertices)");
  }
  CubeVerdict out;
  out.cube.center = center;
  out.cube.edge = edge;
  auto result = certify_common(plant, cube_vertices(center, edge, plant.m(), plant.n()), mode,
                               options);
  if (result.certificate) {
    out.cube.best_lambda_max = result.certificate->lambda_max_constraint;
    out.cube.certificate = std::move(result.certificate);
  } else {
    out.cube.best_lambda_max = result.best_lambda_max;
  }
  return out;
}

struct ExploreConfig {
  MatrixXd seed_gain;
  double edge = 0.4;
  std::size_t max_cubes = 400;
  // Search box on vec(K); defaults to seed ± 10·edge. Cube centers must lie
  // inside it.
  std::optional<std::pair<VectorXd, VectorXd>> search_box;
  SearchOptions search;
  unsigned workers = 1;
};

inline std::uint64_t cube_seed(std::uint64_t seed, const GridCoord& c) {
  std::uint64_t h = mix_seed(seed);
  for (long v : c) h = mix_seed(h ^ static_cast<std::uint64_t>(v));
  return h;
}

inline VerifiedRegion explore(const LtiPlant& plant, const PassivityMode& mode,
                              const ExploreConfig& config) {
  plant.check_gain(config.seed_gain);
  if (!(config.edge > 0.0)) {
    throw SynthError(ErrorCode::kInvalidArgument, "explore: edge must be positive");
  }
  const Eigen::Index d = plant.m() * plant.n();
  if (d > kMaxCubeDimension) {
    throw SynthError(ErrorCode::kTooManyVertices, "explore: m*n exceeds 8");
  }
  const VectorXd seed = vec(config.seed_gain);
  VectorXd lo, hi;
  if (config.search_box) {
    std::tie(lo, hi) = *config.search_box;
    if (lo.size() != d || hi.size() != d) {
      throw SynthError(ErrorCode::kDimensionMismatch, "explore: search box has wrong size");
    }
  } else {
    lo = seed.array() - 10.0 * config.edge;
    hi = seed.array() + 10.0 * config.edge;
  }
  if (!lo.allFinite() || !hi.allFinite()) {
    throw SynthError(ErrorCode::kInvalidArgument, "explore: search box must be bounded");
  }
  auto inside = [&](const VectorXd& k) {
    return (k.array() >= lo.array()).all() && (k.array() <= hi.array()).all();
  };
  if (!inside(seed)) {
    throw SynthError(ErrorCode::kInvalidArgument, "explore: seed gain lies outside the search box");
  }

  SearchOptions seed_options = config.search;
  if (!certify_gain(plant, config.seed_gain, mode, seed_options).feasible()) {
    throw SynthError(ErrorCode::kSeedNotPassivating,
                     "explore: seed gain does not certify as passivating");
  }

  VerifiedRegion region;
  region.grid_anchor = seed;
  region.edge = config.edge;
  region.gain_rows = plant.m();
  region.gain_cols = plant.n();

  const unsigned workers = std::max(1u, config.workers);
  std::set<GridCoord> seen;
  std::vector<GridCoord> layer{GridCoord(static_cast<std::size_t>(d), 0)};
  seen.insert(layer.front());
  bool first = true;

  while (!layer.empty() && region.cubes.size() < config.max_cubes) {
    std::vector<CubeVerdict> verdicts(layer.size());
    parallel_for(layer.size(), workers, [&](std::size_t i) {
      SearchOptions opts = config.search;
      opts.seed = cube_seed(config.search.seed, layer[i]);
      verdicts[i] = verify_cube(plant, region.center_of(layer[i]), config.edge, mode, opts);
      verdicts[i].cube.coord = layer[i];
    });

    if (first && !verdicts.front().verified()) {
      std::ostringstream os;
      os << "explore: seed cube rejected (best lambda_max " << verdicts.front().cube.best_lambda_max
         << "); per-vertex:";
      for (const MatrixXd& K : cube_vertices(seed, config.edge, plant.m(), plant.n())) {
        const auto r = certify_gain(plant, K, mode, config.search);
        os << " [" << vec(K).transpose() << "] "
           << (r.feasible() ? "pass" : "fail") << " lambda_max=" << (r.feasible() ? r.certificate->lambda_max_constraint : r.best_lambda_max) << ";";
      }
      throw SynthError(ErrorCode::kEmptyRegion, os.str());
    }
    first = false;

    std::vector<GridCoord> next;
    for (auto& verdict : verdicts) {
      if (!verdict.verified()) {
        region.rejected.push_back(
            {verdict.cube.coord, verdict.cube.center, verdict.cube.best_lambda_max});
        continue;
      }
      if (region.cubes.size() >= config.max_cubes) break;
      for (std::size_t axis = 0; axis < static_cast<std::size_t>(d); ++axis) {
        for (long step : {1L, -1L}) {
          GridCoord nb = verdict.cube.coord;
          nb[axis] += step;
          if (seen.count(nb) || !inside(region.center_of(nb))) continue;
          seen.insert(nb);
          next.push_back(nb);
        }
      }
      region.cubes.push_back(std::move(verdict.cube));
    }
    layer = std::move(next);
  }

  std::sort(region.cubes.begin(), region.cubes.end(),
            [](const GainCube& a, const GainCube& b) { return a.coord < b.coord; });
  std::sort(region.rejected.begin(), region.rejected.end(),
            [](const RejectedCube& a, const RejectedCube& b) { return a.coord < b.coord; });
  return region;
}

struct PrecheckResult {
  bool already_passive = false;
  CareSolution care;
  std::optional<PassivityCertificate> certificate;
};

/// Solves the CARE and tests whether K* itself passivates the plant.
inline PrecheckResult precheck_optimal(const LtiPlant& plant, const PassivityMode& mode,
                                       const SearchOptions& options = {}) {
  PrecheckResult out;
  out.care = solve_care(plant.A, plant.B_u, plant.Q, plant.R);
  auto r = certify_gain(plant, out.care.K, mode, options);
  out.already_passive = r.feasible();
  out.certificate = std::move(r.certificate);
  return out;
}

}  // namespace passynth
