#pragma once

#include "adjointlab/dynamics.hpp"

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace adjointlab {

/// Scalar functional with its gradient, the unit under every gradient check.
struct ScalarFunctional {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
};

/// Taylor remainder convergence test: the first-order sequence
/// |F(c+g*ct) - F(c)| decays like g and the second-order sequence
/// |F(c+g*ct) - F(c) - g<ct, grad F(c)>| like g^2 when the gradient is
/// correct. Slopes are log-log least squares with cancellation-dominated
/// points (below 100 eps of the functional scale) discarded.
struct TaylorTestReport {
  Eigen::VectorXd gammas;
  Eigen::VectorXd first_order_errors;
  Eigen::VectorXd second_order_errors;
  double first_order_slope = 0.0;
  double second_order_slope = 0.0;
  double inner_product = 0.0;   // <ct, grad F(c)>
  bool degenerate = false;      // inner product numerically zero: flagged, not failed
  bool second_order_at_machine_precision = false;
};

TaylorTestReport taylor_remainder_test(const ScalarFunctional& F, const Eigen::VectorXd& c,
                                       const Eigen::VectorXd& c_tilde, const Eigen::VectorXd& gammas);

/// Central-difference gradient, the independent oracle for every adjoint.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& F,
                            const Eigen::VectorXd& c, double step);

/// Directional derivative by central differences.
double fd_directional(const std::function<double(const Eigen::VectorXd&)>& F,
                      const Eigen::VectorXd& c, const Eigen::VectorXd& dir, double step);

/// Stability diagnostics for the gradient computation of one hidden-dynamics
/// scheme across a time-step sweep: per-step spectral radius, multistep
/// weight row sums, parameter-Jacobian norms, the learnability ratio, and the
/// empirical end-to-end gradient norm on the scalar surrogate problem.
struct StabilityRow {
  double dt = 0.0;
  double rho = 0.0;                  // spectral radius of the per-step solution operator
  double max_caputo_row_sum = 0.0;   // closed-form multistep row sums (max over i)
  double max_param_jacobian_norm = 0.0;
  double assumption4_ratio = 0.0;    // max ||du/dtheta|| / (1 - max rho)
  double surrogate_grad_norm = 0.0;  // ||DJ/Dtheta|| on the surrogate problem
};

struct StabilityReport {
  ModelFamily family{};
  std::vector<StabilityRow> rows;
  double rho_fit_exponent = 0.0;  // fit of (1 - rho) against dt^alpha
  double jacobian_fit_exponent = 0.0;
  bool assumption1_pass = false;
  bool assumption2_pass = false;
  bool assumption3_pass = false;
  bool assumption4_pass = false;
  bool gradient_bounded_pass = false;  // max/min surrogate gradient norm <= 2
  bool all_pass() const {
    return assumption1_pass && assumption2_pass && assumption3_pass && assumption4_pass &&
           gradient_bounded_pass;
  }
};

StabilityReport stability_report(ModelFamily family, const Eigen::VectorXd& params,
                                 const GridSpec2D& grid, const std::vector<double>& dt_list);

/// Power iteration estimate of the spectral radius of the linear map `apply`
/// (500 iterations or relative change below 1e-10, fixed-seed random start).
double power_iteration_radius(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
                              Eigen::Index dim, uint64_t seed = 20240001ULL);

}  // namespace adjointlab
