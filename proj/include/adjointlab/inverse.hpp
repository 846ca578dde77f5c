#pragma once

#include "adjointlab/coupling.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace adjointlab {

struct ParamBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }
  bool contains(const Eigen::VectorXd& x) const {
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  }
};

/// Fractional indices are always boxed into [eps, 1 - eps].
inline constexpr double kIndexBoundEps = 1e-3;

struct InverseProblem {
  ModelFamily family{};
  Eigen::VectorXd true_params;  // synthesis only
  Eigen::VectorXd init_params;
  ParamBounds bounds;
  GridSpec2D hidden_grid;
  MultiScaleSchedule schedule;
  WaveGridSpec wave_grid;
  SurveyGeometry survey;
  SourceWavelet wavelet;
  RockPhysicsMap rock;
  HiddenField m0;
  double noise_sigma = 0.0;
  uint64_t seed = 0;
  int threads = 1;
  int adjoint_snapshot_stride = 1;
  std::vector<std::vector<ShotRecord>> observed;  // [phase][source]

  void validate() const;
  ObjectiveSpec objective_spec() const;
};

struct OptimizerConfig {
  int memory = 10;
  int max_iter = 15000;
  double f_rel_tol = 1e-12;
  double grad_tol = 1e-12;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_line_search_evals = 30;
};

enum class StopReason { f_rel_tol, grad_tol, max_iterations, line_search_failure };

const char* stop_reason_name(StopReason r);

struct OptResult {
  std::vector<Eigen::VectorXd> trajectory;  // accepted iterates, including the start
  std::vector<double> loss_history;
  std::vector<double> grad_norm_history;  // projected-gradient norms
  StopReason reason{};
  int iterations = 0;
  int function_evaluations = 0;
  Eigen::VectorXd best_params;
  double best_loss = 0.0;
};

using ValueGradFn = std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd&)>;

/// L-BFGS with a strong-Wolfe line search on the box-projected path.
/// Terminates on relative objective change, projected-gradient norm, or the
/// iteration cap; a failed line search returns the best iterate so far.
OptResult lbfgs_minimize(const ValueGradFn& fg, Eigen::VectorXd x0, const ParamBounds& bounds,
                         const OptimizerConfig& config);

/// Synthetic observations: hidden rollout under true_params, iid Gaussian
/// noise added to each coarse snapshot before upscaling, then one shot record
/// per (phase, source). Deterministic given the seed.
std::vector<std::vector<ShotRecord>> generate_synthetic(const InverseProblem& problem);

/// Minimizes the assembled objective for the attached observations.
OptResult invert(const InverseProblem& problem, const OptimizerConfig& config);

struct RecoveryRow {
  std::string name;
  double true_value = 0.0;
  double estimate = 0.0;
  double reported = 0.0;  // ratio for coefficients, the value itself for indices
  bool is_index = false;
};

/// Recovery table in the ratio convention: coefficients report theta/theta*,
/// fractional indices report the estimate directly.
std::vector<RecoveryRow> recovery_report(const OptResult& result,
                                         const Eigen::VectorXd& true_params, ModelFamily family);

/// Piecewise-constant initial configuration: five rectangular patches
/// surrounded by zero margins, scaled by `amplitude`.
Eigen::VectorXd initial_blocks_field(const GridSpec2D& grid, double amplitude);

/// Default bounds per family: coefficients in [0 or -inf-like, large],
/// fractional indices in [eps, 1 - eps].
ParamBounds default_bounds(ModelFamily family);

}  // namespace adjointlab
