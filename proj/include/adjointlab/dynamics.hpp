#pragma once

#include "adjointlab/tape.hpp"
#include "adjointlab/tensor.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <vector>

namespace adjointlab {

enum class ModelFamily { advection_diffusion, time_fractional, space_fractional };

/// Uniform discretization of the square [0, L]^2 with n_per_dim intervals of
/// width h per dimension. Only the (n_per_dim - 1)^2 interior nodes are
/// stored; the homogeneous Dirichlet boundary is implicit.
struct GridSpec2D {
  int n_per_dim = 0;
  double h = 0.0;
  double dtau = 0.0;
  double domain_length = 0.0;

  int interior_per_dim() const { return n_per_dim - 1; }
  int unknowns() const { return interior_per_dim() * interior_per_dim(); }
  void validate() const;
};

/// Interior node values in the row-major ordering m_{1,1}, m_{2,1}, ...
/// (first spatial index fastest).
struct HiddenField {
  Eigen::VectorXd values;
  int time_index = 0;
};

struct AdvectionDiffusionParams {
  double a = 0.0;   // diffusion coefficient, >= 0
  double b1 = 0.0;  // advection along x
  double b2 = 0.0;  // advection along y
};

struct TimeFractionalParams {
  double alpha = 0.5;  // Caputo index in (0, 1)
  double a = 0.0;
};

struct SpaceFractionalParams {
  double s = 0.5;  // fractional Laplacian index in (0, 1)
  double a = 0.0;
};

using SparseMat = Eigen::SparseMatrix<double>;

/// Discrete operator A of the implicit update (I + dtau*A) u^{n+1} = u^n:
/// -A is the centered advection-diffusion stencil with Dirichlet rows
/// eliminated. Independent of dtau; symmetric when b1 = b2 = 0.
SparseMat assemble_operator(const GridSpec2D& grid, const AdvectionDiffusionParams& params);

/// Parameter derivatives of A: dA/da, dA/db1, dA/db2 (grid-only).
SparseMat diffusion_part(const GridSpec2D& grid);
SparseMat advection_x_part(const GridSpec2D& grid);
SparseMat advection_y_part(const GridSpec2D& grid);

/// One implicit step of the advection-diffusion scheme.
HiddenField ad_step_forward(const HiddenField& u, const AdvectionDiffusionParams& params,
                            const GridSpec2D& grid);

struct AdStepGradients {
  Eigen::VectorXd grad_u;      // dL/du^n
  Eigen::Vector3d grad_params; // dL/d(a, b1, b2)
};

AdStepGradients ad_step_backward(const Eigen::VectorXd& upstream, const HiddenField& u_next,
                                 const HiddenField& u, const AdvectionDiffusionParams& params,
                                 const GridSpec2D& grid);

/// L1-scheme weights G_m = (m+1)^{1-alpha} - m^{1-alpha}, m = 0..n_steps.
struct CaputoWeights {
  double alpha = 0.0;
  Eigen::VectorXd G;
};

CaputoWeights caputo_weights(double alpha, int n_steps);

/// Closed-form per-row weight sum 1 + (i-1)^{1-alpha} - (i+1)^{1-alpha} of the
/// L1 multistep coefficients; strictly below 1 for all i >= 1.
double caputo_row_sum(double alpha, int i);

/// One L1 step of the time-fractional diffusion scheme. `history` holds
/// u^0..u^n; the result is u^{n+1}.
HiddenField tfrac_step_forward(const std::vector<HiddenField>& history,
                               const TimeFractionalParams& params, const GridSpec2D& grid);

struct TfracStepGradients {
  std::vector<Eigen::VectorXd> grad_history;  // dL/du^k, k = 0..n
  double grad_alpha = 0.0;
  double grad_a = 0.0;
};

TfracStepGradients tfrac_step_backward(const Eigen::VectorXd& upstream, const HiddenField& u_next,
                                       const std::vector<HiddenField>& history,
                                       const TimeFractionalParams& params, const GridSpec2D& grid);

/// Generic L1 update against an explicit operator matrix; the hidden-grid
/// stepper and the scalar surrogate both route through these.
Eigen::VectorXd tfrac_update(const SparseMat& op, const std::vector<Eigen::VectorXd>& history,
                             double alpha, double dtau);

/// Spectral multipliers 1/(1 + dtau*a*|xi|^{2s}) and their (s, a) derivatives
/// on the periodic real-FFT lattice of the interior grid. The zero mode is
/// pinned to (1, 0, 0).
struct SpectralMultiplier {
  Eigen::MatrixXd m;
  Eigen::MatrixXd dm_ds;
  Eigen::MatrixXd dm_da;
};

SpectralMultiplier spectral_multiplier(const GridSpec2D& grid, const SpaceFractionalParams& params);

HiddenField sfrac_step_forward(const HiddenField& u, const SpaceFractionalParams& params,
                               const GridSpec2D& grid);

struct SfracStepGradients {
  Eigen::VectorXd grad_u;
  double grad_s = 0.0;
  double grad_a = 0.0;
};

SfracStepGradients sfrac_step_backward(const Eigen::VectorXd& upstream, const HiddenField& u_next,
                                       const HiddenField& u, const SpaceFractionalParams& params,
                                       const GridSpec2D& grid);

/// Forward sensitivity of one spectral step with respect to (s, a), holding
/// the input field fixed.
struct SfracStepSensitivity {
  Eigen::VectorXd du_ds;
  Eigen::VectorXd du_da;
};

SfracStepSensitivity sfrac_step_param_sensitivity(const HiddenField& u,
                                                  const SpaceFractionalParams& params,
                                                  const GridSpec2D& grid);

/// Tape custom ops wrapping the steppers. Input layout:
///   ad_step:    (u, [a, b1, b2])        -> u'
///   tfrac_step: (u^0..u^n, [alpha, a])  -> u^{n+1}
///   sfrac_step: (u, [s, a])             -> u'
CustomOp make_ad_step_op(const GridSpec2D& grid);
CustomOp make_tfrac_step_op(const GridSpec2D& grid);
CustomOp make_sfrac_step_op(const GridSpec2D& grid);

/// Records the hidden-dynamics rollout on a tape: snapshots are taken after
/// each full window of `record_every` steps. Markov families are recorded
/// through scan; the time-fractional model unrolls explicit per-step nodes
/// because every step consumes the whole history.
std::vector<NodeId> record_hidden_rollout(TapeGraph& graph, ModelFamily family,
                                          const GridSpec2D& grid, NodeId m0, NodeId params,
                                          int n_steps, int record_every);

/// Snapshot rollout m_{t_1}, m_{t_2}, ... built through the tape so the same
/// code path serves synthesis and objective assembly. record_every must
/// divide n_steps; n_steps = 0 yields an empty list.
std::vector<HiddenField> simulate_hidden(const HiddenField& m0, ModelFamily family,
                                         const Eigen::VectorXd& params, const GridSpec2D& grid,
                                         int n_steps, int record_every);

}  // namespace adjointlab
