#pragma once

// Gain-parametrized LQR cost f_K = tr(X_K), its gradient
// ∇f_K = 2(RK − B_uᵀX_K)Y_K, and the projected gradient flow
// vec(K̇) = −α·M(vec K)·vec(∇f_K) restricted to a polytope.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "passynth/errors.hpp"
#include "passynth/linalg.hpp"
#include "passynth/plant.hpp"
#include "passynth/polytope.hpp"

namespace passynth {

struct CostEvaluation {
  MatrixXd K;
  MatrixXd X_K;  // A_KᵀX + XA_K + Q + KᵀRK = 0
  MatrixXd Y_K;  // A_K·Y + Y·A_Kᵀ + I = 0
  double f_K = 0.0;
  MatrixXd grad;
  double residual_X = 0.0;  // relative
  double residual_Y = 0.0;  // relative
};

inline CostEvaluation evaluate_cost(const LtiPlant& plant, const MatrixXd& K) {
  plant.check_gain(K);
  const Eigen::Index n = plant.n();
  const MatrixXd A_K = plant.closed_loop(K);
  const double abscissa = spectral_abscissa(A_K);
  if (!(abscissa < kHurwitzThreshold)) {
    std::ostringstream os;
    os << "evaluate_cost: A - B_u K is not Hurwitz (abscissa " << abscissa
       << "); the cost is infinite";
    throw SynthError(ErrorCode::kNotStabilizing, os.str());
  }
  CostEvaluation out;
  out.K = K;
  const MatrixXd rhs_X = plant.Q + K.transpose() * plant.R * K;
  const MatrixXd I = MatrixXd::Identity(n, n);
  out.X_K = solve_lyapunov(A_K, rhs_X);
  out.Y_K = solve_lyapunov(A_K.transpose(), I);
  out.f_K = out.X_K.trace();
  out.grad = 2.0 * (plant.R * K - plant.B_u.transpose() * out.X_K) * out.Y_K;
  out.residual_X = lyapunov_residual(A_K, out.X_K, rhs_X) /
                   (1.0 + A_K.norm() * out.X_K.norm() + rhs_X.norm());
  out.residual_Y = lyapunov_residual(A_K.transpose(), out.Y_K, I) /
                   (1.0 + A_K.norm() * out.Y_K.norm() + I.norm());
  return out;
}

/// f_K, or +∞ when K is not stabilizing.
inline double lqr_cost(const LtiPlant& plant, const MatrixXd& K) {
  if (!is_hurwitz(plant.closed_loop(K))) return std::numeric_limits<double>::infinity();
  return evaluate_cost(plant, K).f_K;
}

/// −α·unvec(M(vec K)·vec(∇f_K)).
inline MatrixXd projected_step_direction(const LtiPlant& plant, const GainPolytope& polytope,
                                         const MatrixXd& K, double alpha = 1.0) {
  const auto cost = evaluate_cost(plant, K);
  const auto proj = projection_operator(polytope, vec(K));
  return unvec(-alpha * (proj.M * vec(cost.grad)), K.rows(), K.cols());
}

struct FlowConfig {
  double alpha = 1.0;
  double h0 = 1e-2;
  std::optional<double> tol_grad;  // default 1e-8·(1 + f_{K0})
  double max_time = 1e4;
  double min_step = 1e-12;
  std::size_t max_steps = 2'000'000;

  void validate() const {
    if (!(alpha > 0.0) || !(h0 > 0.0) || !(max_time > 0.0) || !(min_step > 0.0) ||
        (tol_grad && !(*tol_grad > 0.0))) {
      throw SynthError(ErrorCode::kInvalidArgument, "flow configuration must be positive");
    }
  }
};

enum class FlowTermination { kConverged, kMaxTime, kStepCollapse };

inline std::string to_string(FlowTermination t) {
  switch (t) {
    case FlowTermination::kConverged: return "Converged";
    case FlowTermination::kMaxTime: return "MaxTime";
    case FlowTermination::kStepCollapse: return "StepCollapse";
  }
  return "Unknown";
}

struct FlowSample {
  double t = 0.0;
  VectorXd k;
  double f = 0.0;
  double proj_grad_norm = 0.0;
  double min_g = 0.0;
};

struct FlowTrajectory {
  std::vector<FlowSample> samples;
  MatrixXd terminal_gain;
  FlowTermination termination = FlowTermination::kMaxTime;
  double tol_grad = 0.0;
  std::size_t rejected_steps = 0;
};

namespace detail {

struct FlowPoint {
  bool ok = false;
  double f = 0.0;
  VectorXd projected;  // M·vec(∇f)
  double min_g = 0.0;
};

inline FlowPoint flow_point(const LtiPlant& plant, const GainPolytope& polytope,
                            const VectorXd& k) {
  FlowPoint out;
  const auto cv = constraints_at(polytope, k);
  out.min_g = cv.min_g();
  if (out.min_g < -kFeasibilityTolerance) return out;
  const MatrixXd K = unvec(k, plant.m(), plant.n());
  if (!is_hurwitz(plant.closed_loop(K))) return out;
  try {
    const auto cost = evaluate_cost(plant, K);
    const auto proj = projection_operator(polytope, k);
    out.f = cost.f_K;
    out.projected = proj.M * vec(cost.grad);
    out.ok = out.projected.allFinite() && std::isfinite(out.f);
  } catch (const SynthError&) {
    out.ok = false;
  }
  return out;
}

}  // namespace detail

/// Classical RK4 integration of the projected flow with step halving on
/// infeasible, destabilizing or cost-increasing steps.
inline FlowTrajectory integrate_flow(const LtiPlant& plant, const GainPolytope& polytope,
                                     const MatrixXd& K0, const FlowConfig& config = {}) {
  config.validate();
  plant.check_gain(K0);
  const VectorXd k0 = vec(K0);
  if (k0.size() != polytope.dimension()) {
    throw SynthError(ErrorCode::kDimensionMismatch, "integrate_flow: gain/polytope size mismatch");
  }
  const auto cv0 = constraints_at(polytope, k0);
  if (!polytope.whole_space && !(cv0.min_g() > 0.0)) {
    throw SynthError(ErrorCode::kInfeasibleStart,
                     "integrate_flow: K0 is not strictly inside the polytope");
  }
  if (!is_hurwitz(plant.closed_loop(K0))) {
    throw SynthError(ErrorCode::kInfeasibleStart, "integrate_flow: K0 is not stabilizing");
  }

  FlowTrajectory traj;
  VectorXd k = k0;
  detail::FlowPoint here = detail::flow_point(plant, polytope, k);
  if (!here.ok) {
    throw SynthError(ErrorCode::kInfeasibleStart, "integrate_flow: cannot evaluate flow at K0");
  }
  traj.tol_grad = config.tol_grad.value_or(1e-8 * (1.0 + here.f));
  double t = 0.0;
  double h = config.h0;
  const double h_max = 10.0 * config.h0;
  int streak = 0;
  traj.samples.push_back({t, k, here.f, here.projected.norm(), here.min_g});

  for (std::size_t step = 0;; ++step) {
    if (here.projected.norm() <= traj.tol_grad) {
      traj.termination = FlowTermination::kConverged;
      break;
    }
    if (t >= config.max_time || step >= config.max_steps) {
      traj.termination = FlowTermination::kMaxTime;
      break;
    }
    if (h < config.min_step) {
      traj.termination = FlowTermination::kStepCollapse;
      break;
    }
    const double a = config.alpha;
    const VectorXd v1 = -a * here.projected;
    bool ok = true;
    VectorXd v2, v3, v4;
    {
      const auto p2 = detail::flow_point(plant, polytope, k + 0.5 * h * v1);
      ok = p2.ok;
      if (ok) v2 = -a * p2.projected;
    }
    if (ok) {
      const auto p3 = detail::flow_point(plant, polytope, k + 0.5 * h * v2);
      ok = p3.ok;
      if (ok) v3 = -a * p3.projected;
    }
    if (ok) {
      const auto p4 = detail::flow_point(plant, polytope, k + h * v3);
      ok = p4.ok;
      if (ok) v4 = -a * p4.projected;
    }
    detail::FlowPoint there;
    VectorXd k_next;
    if (ok) {
      k_next = k + (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
      there = detail::flow_point(plant, polytope, k_next);
      ok = there.ok && !(there.min_g < 0.0) && there.f <= here.f + 1e-9;
    }
    if (!ok) {
      h *= 0.5;
      streak = 0;
      ++traj.rejected_steps;
      continue;
    }
    t += h;
    k = k_next;
    here = there;
    traj.samples.push_back({t, k, here.f, here.projected.norm(), here.min_g});
    if (++streak >= 5) {
      h = std::min(2.0 * h, h_max);
      streak = 0;
    }
  }
  traj.terminal_gain = unvec(k, plant.m(), plant.n());
  return traj;
}

}  // namespace passynth
