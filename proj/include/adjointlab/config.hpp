#pragma once

#include "adjointlab/inverse.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace adjointlab {

/// Configuration problem with the offending field path in the message.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// One structured-text file fully determines a run.
struct RunConfig {
  ModelFamily family{};
  GridSpec2D hidden_grid;
  MultiScaleSchedule schedule;
  WaveGridSpec wave_grid;
  SurveyGeometry survey;
  RockPhysicsMap rock;
  double wavelet_f0 = 0.0;
  double wavelet_t0 = 0.0;

  struct InitialField {
    std::string kind = "blocks";  // "blocks" or "file"
    double amplitude = 0.0;
    std::string path;  // for kind == "file": raw field of the hidden interior
  } initial_field;

  Eigen::VectorXd true_params;
  Eigen::VectorXd init_params;
  ParamBounds bounds;
  double noise_sigma = 0.0;
  uint64_t seed = 0;
  std::string observed_dir;  // when set, invert reads records instead of synthesizing
  OptimizerConfig optimizer;
  int threads = 0;  // 0: ADJOINTLAB_THREADS env, then hardware concurrency
  int adjoint_snapshot_stride = 1;
  std::string output_dir = "out";
  std::vector<double> stability_dt_list{1e-2, 5e-3, 2.5e-3, 1.25e-3};
  std::vector<int> bench_grid_sizes{40, 56, 80, 112};
  int bench_nt = 300;

  void validate() const;
};

ModelFamily parse_family(const std::string& name);
std::string family_name(ModelFamily family);

RunConfig parse_config(const std::string& json_text);
RunConfig load_config_file(const std::string& path);
/// Canonical serialization; parse(serialize(c)) == c field for field.
std::string serialize_config(const RunConfig& config);

/// Materializes the inverse problem (initial field included) from a config.
InverseProblem make_problem(const RunConfig& config);

}  // namespace adjointlab
