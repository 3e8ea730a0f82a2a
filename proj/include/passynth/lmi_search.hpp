#pragma once

// Feasibility search for affine matrix inequalities
//
//     λ_max(F_k(y)) / scale ≤ target  for every block k,
//     λ_min(S(y)) ≥ eps_pos,
//
// where F_k and S are affine symmetric-matrix functions of a coordinate
// vector y. The largest eigenvalue is smoothed by a log-sum-exp with an
// annealed temperature and minimized by a quasi-Newton descent with Armijo
// backtracking; a log-det barrier keeps S(y) − eps_pos·I positive definite.
// The search stops at the first iterate that the caller's acceptance
// predicate validates. Failure after the budget is a heuristic "no".

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "passynth/linalg.hpp"

namespace passynth::lmi {

/// S(y) = base + Σ y_i · directions[i].
struct AffineSym {
  MatrixXd base;
  std::vector<MatrixXd> directions;

  MatrixXd at(const VectorXd& y) const {
    MatrixXd out = base;
    for (std::size_t i = 0; i < directions.size(); ++i) {
      out += y(static_cast<Eigen::Index>(i)) * directions[i];
    }
    return out;
  }
};

struct Problem {
  std::vector<AffineSym> blocks;
  AffineSym positive;
  Eigen::Index dimension = 0;
  double scale = 1.0;
  double target = 0.0;
  double eps_pos = 1e-8;
};

struct Options {
  int restarts = 5;
  int iterations = 2000;  // per restart, split evenly across temperatures
  double tau_start = 1e-1;
  double tau_end = 1e-4;
  std::uint64_t seed = 0;
};

struct Outcome {
  bool success = false;
  VectorXd y;
  // Smallest normalized λ_max seen at an iterate with S(y) ≻ eps_pos·I.
  double best_normalized = std::numeric_limits<double>::infinity();
};

/// Orthonormal (Frobenius) basis of n×n symmetric matrices.
inline std::vector<MatrixXd> symmetric_basis(Eigen::Index n) {
  std::vector<MatrixXd> basis;
  basis.reserve(static_cast<std::size_t>(n * (n + 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      MatrixXd E = MatrixXd::Zero(n, n);
      if (i == j) {
        E(i, i) = 1.0;
      } else {
        E(i, j) = E(j, i) = 1.0 / std::sqrt(2.0);
      }
      basis.push_back(std::move(E));
    }
  }
  return basis;
}

namespace detail {

struct Eval {
  double value = std::numeric_limits<double>::infinity();
  VectorXd grad;
  double lambda_max = std::numeric_limits<double>::infinity();  // normalized
  bool positive_ok = false;
};

class Objective {
 public:
  explicit Objective(const Problem& problem) : problem_(problem) {}

  // Main objective: smoothed normalized λ_max plus log-det barrier.
  Eval constraint(const VectorXd& y, double tau, double barrier) const {
    Eval out;
    const Eigen::Index d = problem_.dimension;
    out.grad = VectorXd::Zero(d);
    const MatrixXd S = problem_.positive.at(y);
    const Eigen::Index ns = S.rows();
    const MatrixXd shifted = S - problem_.eps_pos * MatrixXd::Identity(ns, ns);
    Eigen::LLT<MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success) return out;
    const double log_det =
        2.0 * llt.matrixLLT().diagonal().array().log().sum();
    if (!std::isfinite(log_det)) return out;
    out.positive_ok = true;

    // Eigen-decompose every block once; reuse for value and gradient.
    std::vector<Eigen::SelfAdjointEigenSolver<MatrixXd>> solvers;
    solvers.reserve(problem_.blocks.size());
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& block : problem_.blocks) {
      solvers.emplace_back(symmetrize(block.at(y)) / problem_.scale);
      top = std::max(top, solvers.back().eigenvalues().maxCoeff());
    }
    out.lambda_max = top;
    double sum = 0.0;
    for (const auto& es : solvers) {
      sum += ((es.eigenvalues().array() - top) / tau).exp().sum();
    }
    out.value = top + tau * std::log(sum) - barrier * log_det;

    for (std::size_t k = 0; k < solvers.size(); ++k) {
      const auto& es = solvers[k];
      const VectorXd w = ((es.eigenvalues().array() - top) / tau).exp() / sum;
      const MatrixXd& V = es.eigenvectors();
      // Σ_j w_j v_j v_jᵀ, contracted against each direction.
      const MatrixXd weighted = V * w.asDiagonal() * V.transpose();
      const auto& dirs = problem_.blocks[k].directions;
      for (Eigen::Index i = 0; i < d; ++i) {
        out.grad(i) += (weighted.cwiseProduct(dirs[static_cast<std::size_t>(i)]))
                           .sum() /
                       problem_.scale;
      }
    }
    if (barrier > 0.0) {
      const MatrixXd inv = llt.solve(MatrixXd::Identity(ns, ns));
      const auto& dirs = problem_.positive.directions;
      for (Eigen::Index i = 0; i < d; ++i) {
        out.grad(i) -=
            barrier * inv.cwiseProduct(dirs[static_cast<std::size_t>(i)]).sum();
      }
    }
    return out;
  }

  // Phase one: maximize the smoothed λ_min of S(y) with a ridge on y.
  Eval positivity(const VectorXd& y, double tau, double ridge) const {
    Eval out;
    const Eigen::Index d = problem_.dimension;
    const MatrixXd S = symmetrize(problem_.positive.at(y));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
    const VectorXd neg = -es.eigenvalues();
    const double top = neg.maxCoeff();
    const VectorXd e = ((neg.array() - top) / tau).exp();
    const double sum = e.sum();
    out.value = top + tau * std::log(sum) + ridge * y.squaredNorm();
    out.lambda_max = top;
    out.positive_ok = -top >= problem_.eps_pos;
    const MatrixXd weighted =
        es.eigenvectors() * (e / sum).asDiagonal() * es.eigenvectors().transpose();
    out.grad.resize(d);
    const auto& dirs = problem_.positive.directions;
    for (Eigen::Index i = 0; i < d; ++i) {
      out.grad(i) = -weighted.cwiseProduct(dirs[static_cast<std::size_t>(i)]).sum() +
                    2.0 * ridge * y(i);
    }
    return out;
  }

 private:
  const Problem& problem_;
};

enum class StopReason { kConverged, kBudget, kAccepted };

// BFGS with Armijo backtracking. `on_iterate` returns true to stop early.
inline StopReason bfgs(const std::function<Eval(const VectorXd&)>& f, VectorXd& y,
                       int max_iterations,
                       const std::function<bool(const VectorXd&, const Eval&)>& on_iterate) {
  const Eigen::Index d = y.size();
  Eval cur = f(y);
  if (!std::isfinite(cur.value)) return StopReason::kConverged;
  if (on_iterate(y, cur)) return StopReason::kAccepted;
  MatrixXd H = MatrixXd::Identity(d, d);
  bool fresh = true;
  int stalls = 0;
  for (int it = 0; it < max_iterations; ++it) {
    const double gnorm = cur.grad.norm();
    if (gnorm <= 1e-13) return StopReason::kConverged;
    VectorXd dir = -H * cur.grad;
    double slope = cur.grad.dot(dir);
    if (!(slope < 0.0)) {
      H.setIdentity();
      fresh = true;
      dir = -cur.grad;
      slope = -gnorm * gnorm;
    }
    double t = fresh ? std::min(1.0, 1.0 / gnorm) : 1.0;
    Eval next;
    VectorXd y_next;
    bool found = false;
    for (int ls = 0; ls < 60; ++ls) {
      y_next = y + t * dir;
      next = f(y_next);
      if (std::isfinite(next.value) && next.value <= cur.value + 1e-4 * t * slope) {
        found = true;
        break;
      }
      t *= 0.5;
    }
    if (!found) {
      if (fresh) return StopReason::kConverged;
      H.setIdentity();
      fresh = true;
      continue;
    }
    const VectorXd s = y_next - y;
    const VectorXd g_diff = next.grad - cur.grad;
    const double sy = s.dot(g_diff);
    if (sy > 1e-16 * s.norm() * g_diff.norm() && sy > 0.0) {
      if (fresh) H *= sy / g_diff.squaredNorm();
      const double rho = 1.0 / sy;
      const MatrixXd I = MatrixXd::Identity(d, d);
      H = (I - rho * s * g_diff.transpose()) * H * (I - rho * g_diff * s.transpose()) +
          rho * s * s.transpose();
      fresh = false;
    }
    const double decrease = cur.value - next.value;
    y = y_next;
    cur = next;
    if (on_iterate(y, cur)) return StopReason::kAccepted;
    if (decrease <= 1e-14 * (1.0 + std::abs(cur.value))) {
      if (++stalls >= 3) return StopReason::kConverged;
    } else {
      stalls = 0;
    }
  }
  return StopReason::kBudget;
}

}  // namespace detail

/// Runs the restarted, annealed search. `accept` receives a candidate whose
/// exact normalized λ_max is ≤ target and S(y) ≻ eps_pos·I, and returns true
/// when the caller's independent validation passes.
inline Outcome search(const Problem& problem, const Options& options,
                      const std::function<bool(const VectorXd&)>& accept) {
  Outcome outcome;
  const Eigen::Index d = problem.dimension;
  const detail::Objective objective(problem);

  auto consider = [&](const VectorXd& y, const detail::Eval& ev) {
    if (!ev.positive_ok) return false;
    if (ev.lambda_max < outcome.best_normalized) {
      outcome.best_normalized = ev.lambda_max;
      if (outcome.y.size() == 0 || !outcome.success) outcome.y = y;
    }
    if (ev.lambda_max <= problem.target && accept(y)) {
      outcome.success = true;
      outcome.y = y;
      return true;
    }
    return false;
  };

  if (d == 0) {
    const VectorXd y(0);
    consider(y, objective.constraint(y, options.tau_end, 0.0));
    return outcome;
  }

  // Phase one: a well-conditioned positive point shared by all restarts.
  VectorXd anchor = VectorXd::Zero(d);
  {
    constexpr double kRidge = 0.1;
    for (double tau : {1e-1, 1e-2, 1e-3}) {
      detail::bfgs([&](const VectorXd& y) { return objective.positivity(y, tau, kRidge); },
                   anchor, 200, [](const VectorXd&, const detail::Eval&) { return false; });
    }
    if (min_eigenvalue_sym(problem.positive.at(anchor)) < problem.eps_pos) {
      // Without the ridge the family may still reach positivity farther out.
      detail::bfgs([&](const VectorXd& y) { return objective.positivity(y, 1e-3, 0.0); },
                   anchor, 500, [&](const VectorXd& y, const detail::Eval&) {
                     return min_eigenvalue_sym(problem.positive.at(y)) >=
                            10.0 * problem.eps_pos;
                   });
    }
    if (min_eigenvalue_sym(problem.positive.at(anchor)) < problem.eps_pos) {
      return outcome;  // no positive definite member reachable
    }
  }

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int stages = 4;
  const int per_stage = std::max(1, options.iterations / stages);
  const double ratio = std::pow(options.tau_end / options.tau_start, 1.0 / (stages - 1));

  for (int restart = 0; restart < options.restarts; ++restart) {
    VectorXd y = anchor;
    if (restart > 0) {
      VectorXd jitter(d);
      for (Eigen::Index i = 0; i < d; ++i) jitter(i) = normal(rng);
      jitter *= 0.5 * (1.0 + anchor.norm()) / std::sqrt(static_cast<double>(d));
      // Pull back toward the anchor until positive again.
      for (int k = 0; k < 40; ++k) {
        if (min_eigenvalue_sym(problem.positive.at(anchor + jitter)) >
            2.0 * problem.eps_pos) {
          break;
        }
        jitter *= 0.5;
      }
      y = anchor + jitter;
    }
    double tau = options.tau_start;
    for (int stage = 0; stage < stages; ++stage, tau *= ratio) {
      const double barrier = 1e-3 * tau;
      const auto stop = detail::bfgs(
          [&](const VectorXd& v) { return objective.constraint(v, tau, barrier); }, y,
          per_stage, consider);
      if (stop == detail::StopReason::kAccepted) return outcome;
    }
  }
  return outcome;
}

}  // namespace passynth::lmi
