#pragma once

// End-to-end synthesis: optimal-gain precheck, feasible gain search,
// region exploration, inner box and projected flow.

#include <Eigen/Dense>

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "passynth/errors.hpp"
#include "passynth/lqr_flow.hpp"
#include "passynth/parallel.hpp"
#include "passynth/passivity.hpp"
#include "passynth/plant.hpp"
#include "passynth/polytope.hpp"
#include "passynth/region.hpp"

namespace passynth {

struct PipelineOptions {
  PassivityMode mode;
  double edge = 0.4;
  std::size_t max_cubes = 400;
  std::optional<std::pair<VectorXd, VectorXd>> search_box;
  std::optional<MatrixXd> seed_gain;
  std::vector<MatrixXd> extra_starts;
  FlowConfig flow;
  SearchOptions search;
  unsigned workers = 1;
};

struct PipelineResult {
  std::optional<PrecheckResult> precheck;
  bool short_circuit = false;
  std::optional<FeasiblePair> feasible;
  std::optional<MatrixXd> seed_gain;
  std::optional<VerifiedRegion> region;
  std::optional<GainPolytope> polytope;
  std::vector<MatrixXd> starts;
  std::vector<FlowTrajectory> trajectories;

  std::optional<MatrixXd> K_hat;
  double f_hat = std::numeric_limits<double>::quiet_NaN();
  double f_star = std::numeric_limits<double>::quiet_NaN();
  std::optional<PassivityCertificate> certificate;

  std::vector<std::pair<std::string, double>> timings_ms;
  std::string failed_stage;
  std::optional<SynthError> error;

  bool ok() const { return !error.has_value(); }
};

/// Picks an explore seed between a passivating gain K_f and the optimal
/// gain K*: bisects the segment for the last certified point, then backs
/// off toward K_f until the surrounding cube verifies.
inline MatrixXd choose_seed(const LtiPlant& plant, const PassivityMode& mode,
                            const MatrixXd& K_f, const MatrixXd& K_star, double edge,
                            const SearchOptions& search) {
  const VectorXd kf = vec(K_f);
  const VectorXd d = vec(K_star) - kf;
  const double len = d.norm();
  if (!(len > 0.0)) return K_f;
  auto certified = [&](double s) {
    return certify_gain(plant, unvec(kf + s * d, plant.m(), plant.n()), mode, search).feasible();
  };
  double lo = 0.0, hi = 1.0;
  if (certified(1.0)) {
    lo = 1.0;
  } else {
    for (int i = 0; i < 30 && (hi - lo) * len > 1e-3 * edge; ++i) {
      const double mid = 0.5 * (lo + hi);
      (certified(mid) ? lo : hi) = mid;
    }
  }
  for (double back : {1.0, 1.5, 2.0, 3.0, 4.0}) {
    const double s = std::max(0.0, lo - back * edge / len);
    const VectorXd k = kf + s * d;
    if (verify_cube(plant, k, edge, mode, search).verified()) {
      return unvec(k, plant.m(), plant.n());
    }
    if (s == 0.0) break;
  }
  return K_f;
}

/// Runs every stage. Stage errors are caught and recorded in the result
/// together with everything produced before the failure.
inline PipelineResult run_pipeline(const LtiPlant& plant, const PipelineOptions& options) {
  PipelineResult out;
  std::string stage = "validate";
  auto clock = std::chrono::steady_clock::now();
  auto lap = [&](const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    out.timings_ms.emplace_back(name,
                                std::chrono::duration<double, std::milli>(now - clock).count());
    clock = now;
  };
  try {
    plant.validate();
    options.mode.validate();
    options.flow.validate();

    stage = "precheck";
    out.precheck = precheck_optimal(plant, options.mode, options.search);
    out.f_star = evaluate_cost(plant, out.precheck->care.K).f_K;
    lap(stage);
    if (out.precheck->already_passive) {
      out.short_circuit = true;
      out.K_hat = out.precheck->care.K;
      out.f_hat = out.f_star;
      out.certificate = out.precheck->certificate;
      return out;
    }

    stage = "find";
    MatrixXd seed;
    if (options.seed_gain) {
      seed = *options.seed_gain;
    } else {
      auto found = find_passivating_gain(plant, options.mode, options.search);
      if (!found.pair) {
        throw SynthError(ErrorCode::kEmptyRegion,
                         "no passivating gain found (best normalized lambda_max " +
                             std::to_string(found.best_lambda_max) + ")");
      }
      out.feasible = found.pair;
      seed = choose_seed(plant, options.mode, found.pair->K, out.precheck->care.K, options.edge,
                         options.search);
    }
    out.seed_gain = seed;
    lap(stage);

    stage = "explore";
    ExploreConfig ec;
    ec.seed_gain = seed;
    ec.edge = options.edge;
    ec.max_cubes = options.max_cubes;
    ec.search_box = options.search_box;
    ec.search = options.search;
    ec.workers = options.workers;
    out.region = explore(plant, options.mode, ec);
    lap(stage);

    stage = "approx";
    out.polytope = inscribe_polytope(*out.region, [&](const VectorXd& k) {
      return lqr_cost(plant, unvec(k, plant.m(), plant.n()));
    });
    lap(stage);

    stage = "flow";
    out.starts.push_back(unvec(out.polytope->chebyshev_center, plant.m(), plant.n()));
    for (const auto& s : options.extra_starts) out.starts.push_back(s);
    std::vector<std::optional<FlowTrajectory>> trajs(out.starts.size());
    std::vector<std::optional<SynthError>> errors(out.starts.size());
    parallel_for(out.starts.size(), options.workers, [&](std::size_t i) {
      try {
        trajs[i] = integrate_flow(plant, *out.polytope, out.starts[i], options.flow);
      } catch (const SynthError& e) {
        errors[i] = e;
      }
    });
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      if (errors[i]) throw *errors[i];
      out.trajectories.push_back(std::move(*trajs[i]));
    }
    const FlowTrajectory& main = out.trajectories.front();
    out.K_hat = main.terminal_gain;
    out.f_hat = evaluate_cost(plant, *out.K_hat).f_K;
    lap(stage);

    stage = "certify";
    auto cert = certify_gain(plant, *out.K_hat, options.mode, options.search);
    if (!cert.certificate) {
      throw SynthError(ErrorCode::kNoConvergence,
                       "terminal gain could not be certified (best lambda_max " +
                           std::to_string(cert.best_lambda_max) + ")");
    }
    out.certificate = cert.certificate;
    lap(stage);
  } catch (const SynthError& e) {
    out.failed_stage = stage;
    out.error = e;
    lap(stage);
  }
  return out;
}

}  // namespace passynth
