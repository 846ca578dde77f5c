#pragma once

#include "adjointlab/dynamics.hpp"
#include "adjointlab/tape.hpp"
#include "adjointlab/wave.hpp"

#include <Eigen/Core>

#include <memory>
#include <vector>

namespace adjointlab {

/// Observation schedule: n_obs survey phases with substeps_per_window hidden
/// steps between consecutive observations. The first observation sees the
/// initial configuration m_{t_1} = m_0.
struct MultiScaleSchedule {
  int n_obs = 0;
  int substeps_per_window = 0;
  double dtau = 0.0;

  int total_steps() const { return (n_obs - 1) * substeps_per_window; }
  std::vector<double> observation_times() const;
  void validate() const;
};

struct RockPhysicsMap {
  double m_base = 0.0;
  double rho = 1.0;
};

/// Corner-aligned bilinear interpolation onto a finer grid.
Eigen::MatrixXd upscale_bilinear(const Eigen::MatrixXd& coarse, int target_rows, int target_cols);

/// Transpose of upscale_bilinear: scatters a fine-grid field back onto the
/// coarse nodes.
Eigen::MatrixXd upscale_bilinear_adjoint(const Eigen::MatrixXd& fine, int source_rows,
                                         int source_cols);

/// Pointwise rock physics K = (m + m_base)^2 rho; dK/dm = 2 (m + m_base) rho.
Eigen::MatrixXd velocity_to_bulk(const Eigen::MatrixXd& m, const RockPhysicsMap& map);

/// Tape ops for the coupling chain.
CustomOp make_upscale_op(int src_rows, int src_cols, int dst_rows, int dst_cols);
/// Embeds the physical-region field into the full wave grid, zero in the
/// CPML ring; backward crops the ring away.
CustomOp make_embed_op(const WaveGridSpec& grid);
CustomOp make_velocity_to_bulk_op(const RockPhysicsMap& map);
/// Scalar sum of its (scalar) inputs.
CustomOp make_add_n_op();

/// Everything needed to assemble the end-to-end objective.
struct ObjectiveSpec {
  ModelFamily family{};
  GridSpec2D hidden_grid;
  MultiScaleSchedule schedule;
  WaveGridSpec wave_grid;
  SurveyGeometry survey;
  SourceWavelet wavelet;
  RockPhysicsMap rock;
  HiddenField m0;
  std::vector<std::vector<ShotRecord>> observed;  // [phase][source]
  int threads = 1;
  int adjoint_snapshot_stride = 1;
};

/// The assembled differentiable objective: hidden-dynamics windows recorded
/// through the tape, per-phase coupling chain (upscale -> embed -> rock
/// physics -> waveform misfit), and a summed scalar loss. One backward call
/// yields DJ/Dw.
class AssembledObjective {
 public:
  AssembledObjective(std::unique_ptr<TapeGraph> graph, NodeId param_node, NodeId m0_node,
                     NodeId loss_node, std::vector<NodeId> phase_nodes, Eigen::VectorXd m0_values);

  double value(const Eigen::VectorXd& w);
  std::pair<double, Eigen::VectorXd> value_and_gradient(const Eigen::VectorXd& w);
  /// Gradient with respect to the initial configuration when it is treated as
  /// an unknown.
  std::pair<double, Eigen::VectorXd> value_and_m0_gradient(const Eigen::VectorXd& w);

  const std::vector<NodeId>& phase_misfit_nodes() const { return phase_nodes_; }
  double phase_misfit(int phase) const;
  TapeGraph& graph() { return *graph_; }
  NodeId loss_node() const { return loss_node_; }
  NodeId param_node() const { return param_node_; }

 private:
  void run_forward(const Eigen::VectorXd& w);

  std::unique_ptr<TapeGraph> graph_;
  NodeId param_node_;
  NodeId m0_node_;
  NodeId loss_node_;
  std::vector<NodeId> phase_nodes_;
  Eigen::VectorXd m0_values_;
};

AssembledObjective assemble_objective(const ObjectiveSpec& spec);

/// Parameter-vector layout per model family: (a, b1, b2), (alpha, a), (s, a).
int param_count(ModelFamily family);
std::vector<std::string> param_names(ModelFamily family);

}  // namespace adjointlab
