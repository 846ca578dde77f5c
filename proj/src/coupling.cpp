#include "adjointlab/coupling.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace adjointlab {

std::vector<double> MultiScaleSchedule::observation_times() const {
  std::vector<double> t(n_obs);
  for (int i = 0; i < n_obs; ++i) t[i] = i * substeps_per_window * dtau;
  return t;
}

void MultiScaleSchedule::validate() const {
  if (n_obs < 1) throw std::invalid_argument("MultiScaleSchedule: n_obs must be >= 1");
  if (substeps_per_window < 1) {
    throw std::invalid_argument("MultiScaleSchedule: substeps_per_window must be >= 1");
  }
  if (!(dtau > 0.0)) throw std::invalid_argument("MultiScaleSchedule: dtau must be positive");
}

Eigen::MatrixXd upscale_bilinear(const Eigen::MatrixXd& coarse, int target_rows, int target_cols) {
  const int sr = static_cast<int>(coarse.rows());
  const int sc = static_cast<int>(coarse.cols());
  if (target_rows < sr || target_cols < sc) {
    throw std::invalid_argument("upscale_bilinear: downscaling requested");
  }
  Eigen::MatrixXd fine(target_rows, target_cols);
  const double rscale = target_rows > 1 ? double(sr - 1) / (target_rows - 1) : 0.0;
  const double cscale = target_cols > 1 ? double(sc - 1) / (target_cols - 1) : 0.0;
  for (int i = 0; i < target_rows; ++i) {
    const double y = i * rscale;
    const int i0 = std::min(static_cast<int>(y), sr - 2 >= 0 ? sr - 2 : 0);
    const double wy = y - i0;
    for (int j = 0; j < target_cols; ++j) {
      const double x = j * cscale;
      const int j0 = std::min(static_cast<int>(x), sc - 2 >= 0 ? sc - 2 : 0);
      const double wx = x - j0;
      const int i1 = std::min(i0 + 1, sr - 1);
      const int j1 = std::min(j0 + 1, sc - 1);
      fine(i, j) = (1.0 - wy) * (1.0 - wx) * coarse(i0, j0) + (1.0 - wy) * wx * coarse(i0, j1) +
                   wy * (1.0 - wx) * coarse(i1, j0) + wy * wx * coarse(i1, j1);
    }
  }
  return fine;
}

Eigen::MatrixXd upscale_bilinear_adjoint(const Eigen::MatrixXd& fine, int source_rows,
                                         int source_cols) {
  const int tr = static_cast<int>(fine.rows());
  const int tc = static_cast<int>(fine.cols());
  if (tr < source_rows || tc < source_cols) {
    throw std::invalid_argument("upscale_bilinear_adjoint: shape mismatch");
  }
  Eigen::MatrixXd coarse = Eigen::MatrixXd::Zero(source_rows, source_cols);
  const double rscale = tr > 1 ? double(source_rows - 1) / (tr - 1) : 0.0;
  const double cscale = tc > 1 ? double(source_cols - 1) / (tc - 1) : 0.0;
  for (int i = 0; i < tr; ++i) {
    const double y = i * rscale;
    const int i0 = std::min(static_cast<int>(y), source_rows - 2 >= 0 ? source_rows - 2 : 0);
    const double wy = y - i0;
    for (int j = 0; j < tc; ++j) {
      const double x = j * cscale;
      const int j0 = std::min(static_cast<int>(x), source_cols - 2 >= 0 ? source_cols - 2 : 0);
      const double wx = x - j0;
      const int i1 = std::min(i0 + 1, source_rows - 1);
      const int j1 = std::min(j0 + 1, source_cols - 1);
      coarse(i0, j0) += (1.0 - wy) * (1.0 - wx) * fine(i, j);
      coarse(i0, j1) += (1.0 - wy) * wx * fine(i, j);
      coarse(i1, j0) += wy * (1.0 - wx) * fine(i, j);
      coarse(i1, j1) += wy * wx * fine(i, j);
    }
  }
  return coarse;
}

Eigen::MatrixXd velocity_to_bulk(const Eigen::MatrixXd& m, const RockPhysicsMap& map) {
  if ((m.array() + map.m_base <= 0.0).any()) {
    throw std::invalid_argument("velocity_to_bulk: m + m_base must be positive");
  }
  return ((m.array() + map.m_base).square() * map.rho).matrix();
}

CustomOp make_upscale_op(int src_rows, int src_cols, int dst_rows, int dst_cols) {
  if (dst_rows < src_rows || dst_cols < src_cols) {
    throw std::invalid_argument("make_upscale_op: downscaling requested");
  }
  CustomOp op;
  op.name = "upscale";
  op.forward = [=](const CustomOp::Inputs& in, std::any&) -> Tensor {
    if (in.size() != 1 || in[0]->size() != Eigen::Index(src_rows) * src_cols) {
      throw std::invalid_argument("upscale: input size mismatch");
    }
    const Tensor coarse({src_rows, src_cols}, in[0]->flat());
    return Tensor::from_matrix(upscale_bilinear(coarse.as_matrix(), dst_rows, dst_cols));
  };
  op.backward = [=](const Tensor& up, const std::any&, const CustomOp::Inputs& in,
                    const Tensor&) -> std::vector<Tensor> {
    const Eigen::MatrixXd g = upscale_bilinear_adjoint(up.as_matrix(), src_rows, src_cols);
    return {Tensor(in[0]->dims(), Tensor::from_matrix(g).flat())};
  };
  return op;
}

CustomOp make_embed_op(const WaveGridSpec& grid) {
  grid.validate();
  const int pz = grid.nz - 2 * grid.npml;
  const int px = grid.nx - 2 * grid.npml;
  const int npml = grid.npml;
  const int nz = grid.nz, nx = grid.nx;
  CustomOp op;
  op.name = "embed_interior";
  op.forward = [=](const CustomOp::Inputs& in, std::any&) -> Tensor {
    if (in[0]->dims() != std::vector<Eigen::Index>{pz, px}) {
      throw std::invalid_argument("embed_interior: input must be the physical-region field");
    }
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(nz, nx);
    full.block(npml, npml, pz, px) = in[0]->as_matrix();
    return Tensor::from_matrix(full);
  };
  op.backward = [=](const Tensor& up, const std::any&, const CustomOp::Inputs&,
                    const Tensor&) -> std::vector<Tensor> {
    const Eigen::MatrixXd crop = up.as_matrix().block(npml, npml, pz, px);
    return {Tensor::from_matrix(crop)};
  };
  return op;
}

CustomOp make_velocity_to_bulk_op(const RockPhysicsMap& map) {
  if (!(map.m_base > 0.0)) throw std::invalid_argument("RockPhysicsMap: m_base must be positive");
  CustomOp op;
  op.name = "velocity_to_bulk";
  op.forward = [map](const CustomOp::Inputs& in, std::any&) -> Tensor {
    Tensor out = *in[0];
    if ((out.flat().array() + map.m_base <= 0.0).any()) {
      throw std::invalid_argument("velocity_to_bulk: m + m_base must be positive");
    }
    out.flat() = ((out.flat().array() + map.m_base).square() * map.rho).matrix();
    return out;
  };
  op.backward = [map](const Tensor& up, const std::any&, const CustomOp::Inputs& in,
                      const Tensor&) -> std::vector<Tensor> {
    Tensor g = up;
    g.flat().array() *= 2.0 * (in[0]->flat().array() + map.m_base) * map.rho;
    return {g};
  };
  return op;
}

CustomOp make_add_n_op() {
  CustomOp op;
  op.name = "add_n";
  op.forward = [](const CustomOp::Inputs& in, std::any&) -> Tensor {
    double sum = 0.0;
    for (const Tensor* t : in) sum += t->scalar_value();
    return Tensor::scalar(sum);
  };
  op.backward = [](const Tensor& up, const std::any&, const CustomOp::Inputs& in,
                   const Tensor&) -> std::vector<Tensor> {
    return std::vector<Tensor>(in.size(), up);
  };
  return op;
}

namespace {

CustomOp make_wave_phase_op(const std::string& name, const WaveGridSpec& grid,
                            const SurveyGeometry& survey, const SourceWavelet& wavelet, double rho,
                            std::vector<ShotRecord> observed, int threads, int snapshot_stride) {
  CustomOp op;
  op.name = name;
  op.forward = [=](const CustomOp::Inputs& in, std::any&) -> Tensor {
    return Tensor::scalar(
        wave_phase_misfit(in[0]->as_matrix(), rho, survey, wavelet, grid, observed, threads));
  };
  op.backward = [=](const Tensor& up, const std::any&, const CustomOp::Inputs& in,
                    const Tensor&) -> std::vector<Tensor> {
    const Eigen::MatrixXd gK = wave_phase_bulk_gradient(
        in[0]->as_matrix(), rho, survey, wavelet, grid, observed, {snapshot_stride}, threads);
    return {Tensor(in[0]->dims(), Tensor::from_matrix(gK).flat() * up.scalar_value())};
  };
  return op;
}

}  // namespace

int param_count(ModelFamily family) {
  return family == ModelFamily::advection_diffusion ? 3 : 2;
}

std::vector<std::string> param_names(ModelFamily family) {
  switch (family) {
    case ModelFamily::advection_diffusion:
      return {"a", "b1", "b2"};
    case ModelFamily::time_fractional:
      return {"alpha", "a"};
    case ModelFamily::space_fractional:
      return {"s", "a"};
  }
  throw std::logic_error("param_names: unknown family");
}

AssembledObjective::AssembledObjective(std::unique_ptr<TapeGraph> graph, NodeId param_node,
                                       NodeId m0_node, NodeId loss_node,
                                       std::vector<NodeId> phase_nodes, Eigen::VectorXd m0_values)
    : graph_(std::move(graph)),
      param_node_(param_node),
      m0_node_(m0_node),
      loss_node_(loss_node),
      phase_nodes_(std::move(phase_nodes)),
      m0_values_(std::move(m0_values)) {}

void AssembledObjective::run_forward(const Eigen::VectorXd& w) {
  graph_->forward_eval(
      {{param_node_, Tensor::from_vector(w)}, {m0_node_, Tensor::from_vector(m0_values_)}});
}

double AssembledObjective::value(const Eigen::VectorXd& w) {
  run_forward(w);
  return graph_->value(loss_node_).scalar_value();
}

std::pair<double, Eigen::VectorXd> AssembledObjective::value_and_gradient(const Eigen::VectorXd& w) {
  run_forward(w);
  const double loss = graph_->value(loss_node_).scalar_value();
  auto grads = graph_->backward(loss_node_);
  auto it = grads.find(param_node_);
  Eigen::VectorXd g = it != grads.end() ? it->second.flat() : Eigen::VectorXd::Zero(w.size());
  return {loss, std::move(g)};
}

std::pair<double, Eigen::VectorXd> AssembledObjective::value_and_m0_gradient(
    const Eigen::VectorXd& w) {
  run_forward(w);
  const double loss = graph_->value(loss_node_).scalar_value();
  auto grads = graph_->backward(loss_node_);
  auto it = grads.find(m0_node_);
  Eigen::VectorXd g =
      it != grads.end() ? it->second.flat() : Eigen::VectorXd::Zero(m0_values_.size());
  return {loss, std::move(g)};
}

double AssembledObjective::phase_misfit(int phase) const {
  return graph_->value(phase_nodes_.at(phase)).scalar_value();
}

AssembledObjective assemble_objective(const ObjectiveSpec& spec) {
  spec.hidden_grid.validate();
  spec.schedule.validate();
  spec.wave_grid.validate();
  spec.survey.validate(spec.wave_grid);
  if (std::abs(spec.schedule.dtau - spec.hidden_grid.dtau) > 1e-15 * spec.schedule.dtau) {
    throw std::invalid_argument("assemble_objective: schedule and grid dtau differ");
  }
  if (static_cast<int>(spec.observed.size()) != spec.schedule.n_obs) {
    throw std::invalid_argument("assemble_objective: observed set must have n_obs phases");
  }
  for (const auto& phase : spec.observed) {
    if (phase.size() != spec.survey.sources.size()) {
      throw std::invalid_argument("assemble_objective: one record per source per phase required");
    }
  }
  if (spec.m0.values.size() != spec.hidden_grid.unknowns()) {
    throw std::invalid_argument("assemble_objective: m0 does not match the hidden grid");
  }

  const int nI = spec.hidden_grid.interior_per_dim();
  const int pz = spec.wave_grid.nz - 2 * spec.wave_grid.npml;
  const int px = spec.wave_grid.nx - 2 * spec.wave_grid.npml;
  if (pz < nI || px < nI) {
    throw std::invalid_argument("assemble_objective: wave physical region must be at least the "
                                "hidden grid (upscaling only)");
  }

  auto graph = std::make_unique<TapeGraph>();
  const NodeId m0_node = graph->placeholder({spec.hidden_grid.unknowns()});
  const NodeId param_node = graph->placeholder({param_count(spec.family)});

  const std::vector<NodeId> windows =
      record_hidden_rollout(*graph, spec.family, spec.hidden_grid, m0_node, param_node,
                            spec.schedule.total_steps(), spec.schedule.substeps_per_window);

  graph->registry().register_op(make_upscale_op(nI, nI, pz, px));
  graph->registry().register_op(make_embed_op(spec.wave_grid));
  graph->registry().register_op(make_velocity_to_bulk_op(spec.rock));
  graph->registry().register_op(make_add_n_op());

  std::vector<NodeId> snapshot_nodes{m0_node};
  snapshot_nodes.insert(snapshot_nodes.end(), windows.begin(), windows.end());

  std::vector<NodeId> phase_nodes;
  for (int phase = 0; phase < spec.schedule.n_obs; ++phase) {
    const std::string op_name = "wave_misfit_phase" + std::to_string(phase);
    graph->registry().register_op(make_wave_phase_op(op_name, spec.wave_grid, spec.survey,
                                                     spec.wavelet, spec.rock.rho,
                                                     spec.observed[phase], spec.threads,
                                                     spec.adjoint_snapshot_stride));
    const NodeId up = graph->record("upscale", {snapshot_nodes[phase]});
    const NodeId emb = graph->record("embed_interior", {up});
    const NodeId K = graph->record("velocity_to_bulk", {emb});
    phase_nodes.push_back(graph->record(op_name, {K}));
  }
  const NodeId loss = graph->record("add_n", phase_nodes);

  return AssembledObjective(std::move(graph), param_node, m0_node, loss, std::move(phase_nodes),
                            spec.m0.values);
}

}  // namespace adjointlab
