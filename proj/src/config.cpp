#include "adjointlab/config.hpp"

#include "adjointlab/io.hpp"
#include "adjointlab/util.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace adjointlab {

using Json = nlohmann::ordered_json;

namespace {

const Json& require(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigError("field '" + path + "': expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError("field '" + path + "." + key + "': missing");
  return *it;
}

double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError("field '" + path + "': expected a number");
  return j.get<double>();
}

int integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError("field '" + path + "': expected an integer");
  return j.get<int>();
}

std::string text(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError("field '" + path + "': expected a string");
  return j.get<std::string>();
}

double named_number(const Json& j, const std::string& key, const std::string& path) {
  return number(require(j, key, path), path + "." + key);
}

int named_int(const Json& j, const std::string& key, const std::string& path) {
  return integer(require(j, key, path), path + "." + key);
}

Eigen::VectorXd param_vector(const Json& j, ModelFamily family, const std::string& path) {
  const std::vector<std::string> names = param_names(family);
  Eigen::VectorXd v(names.size());
  for (size_t i = 0; i < names.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = named_number(j, names[i], path);
  }
  return v;
}

}  // namespace

ModelFamily parse_family(const std::string& name) {
  if (name == "advection_diffusion") return ModelFamily::advection_diffusion;
  if (name == "time_fractional") return ModelFamily::time_fractional;
  if (name == "space_fractional") return ModelFamily::space_fractional;
  throw ConfigError("field 'model_family': unknown family '" + name + "'");
}

std::string family_name(ModelFamily family) {
  switch (family) {
    case ModelFamily::advection_diffusion:
      return "advection_diffusion";
    case ModelFamily::time_fractional:
      return "time_fractional";
    case ModelFamily::space_fractional:
      return "space_fractional";
  }
  throw std::logic_error("family_name: unknown family");
}

void RunConfig::validate() const {
  hidden_grid.validate();
  schedule.validate();
  wave_grid.validate();
  survey.validate(wave_grid);
  if (std::abs(schedule.dtau - hidden_grid.dtau) > 1e-15 * hidden_grid.dtau) {
    throw ConfigError("field 'schedule': dtau must equal hidden_grid.dtau");
  }
  if (!(wavelet_f0 > 0.0)) throw ConfigError("field 'wavelet.f0': must be positive");
  if (!(rock.m_base > 0.0)) throw ConfigError("field 'rock_physics.m_base': must be positive");
  if (!(rock.rho > 0.0)) throw ConfigError("field 'rock_physics.rho': must be positive");
  if (noise_sigma < 0.0) throw ConfigError("field 'noise_sigma': must be >= 0");
  if (initial_field.kind != "blocks" && initial_field.kind != "file") {
    throw ConfigError("field 'initial_field.kind': expected 'blocks' or 'file'");
  }
  if (adjoint_snapshot_stride < 1) {
    throw ConfigError("field 'adjoint_snapshot_stride': must be >= 1");
  }

  const int np = param_count(family);
  if (true_params.size() != np || init_params.size() != np) {
    throw ConfigError("field 'params': expected " + std::to_string(np) + " parameters");
  }
  if (!bounds.contains(init_params)) {
    throw ConfigError("field 'params.init': outside the declared bounds");
  }
  if (family != ModelFamily::advection_diffusion) {
    if (true_params(0) < kIndexBoundEps || true_params(0) > 1.0 - kIndexBoundEps) {
      throw ConfigError("field 'params.true': fractional index must lie in [1e-3, 1-1e-3]");
    }
  }

  // CFL with headroom for the perturbation amplitude (plus noise).
  const double amp = initial_field.kind == "blocks" ? std::abs(initial_field.amplitude) : 0.0;
  const double c_max = rock.m_base + amp + 6.0 * noise_sigma;
  const double cfl = c_max * wave_grid.dt * std::sqrt(2.0) / wave_grid.h;
  if (cfl > 1.0) {
    throw ConfigError("field 'wave_grid': CFL bound violated, c_max*dt*sqrt(2)/h = " +
                      std::to_string(cfl));
  }

  const int nI = hidden_grid.interior_per_dim();
  if (wave_grid.nz - 2 * wave_grid.npml < nI || wave_grid.nx - 2 * wave_grid.npml < nI) {
    throw ConfigError("field 'wave_grid': physical region smaller than the hidden grid "
                      "(upscaling only)");
  }
  for (double dt : stability_dt_list) {
    if (!(dt > 0.0)) throw ConfigError("field 'stability.dt_list': entries must be positive");
  }
  for (int n : bench_grid_sizes) {
    if (n <= 2 * wave_grid.npml) {
      throw ConfigError("field 'bench.grid_sizes': sizes must exceed twice npml");
    }
  }
}

RunConfig parse_config(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid structured text: ") + e.what());
  }

  RunConfig c;
  c.family = parse_family(text(require(j, "model_family", ""), "model_family"));

  const Json& hg = require(j, "hidden_grid", "");
  c.hidden_grid.n_per_dim = named_int(hg, "n_per_dim", "hidden_grid");
  c.hidden_grid.h = named_number(hg, "h", "hidden_grid");
  c.hidden_grid.dtau = named_number(hg, "dtau", "hidden_grid");
  c.hidden_grid.domain_length = c.hidden_grid.h * c.hidden_grid.n_per_dim;

  const Json& sc = require(j, "schedule", "");
  c.schedule.n_obs = named_int(sc, "n_obs", "schedule");
  c.schedule.substeps_per_window = named_int(sc, "substeps_per_window", "schedule");
  c.schedule.dtau = c.hidden_grid.dtau;

  const Json& wg = require(j, "wave_grid", "");
  c.wave_grid.nz = named_int(wg, "nz", "wave_grid");
  c.wave_grid.nx = named_int(wg, "nx", "wave_grid");
  c.wave_grid.h = named_number(wg, "h", "wave_grid");
  c.wave_grid.dt = named_number(wg, "dt", "wave_grid");
  c.wave_grid.nt = named_int(wg, "nt", "wave_grid");
  c.wave_grid.npml = named_int(wg, "npml", "wave_grid");
  if (wg.contains("reflection_coeff")) {
    c.wave_grid.reflection_coeff = named_number(wg, "reflection_coeff", "wave_grid");
  }
  if (wg.contains("kappa_max")) c.wave_grid.kappa_max = named_number(wg, "kappa_max", "wave_grid");

  const Json& sv = require(j, "survey", "");
  auto positions = [&](const char* key) {
    const Json& arr = require(sv, key, "survey");
    if (!arr.is_array()) throw ConfigError(std::string("field 'survey.") + key + "': expected an array");
    std::vector<std::pair<int, int>> out;
    for (size_t i = 0; i < arr.size(); ++i) {
      const Json& pos = arr[i];
      const std::string path = std::string("survey.") + key + "[" + std::to_string(i) + "]";
      if (!pos.is_array() || pos.size() != 2) throw ConfigError("field '" + path + "': expected [iz, ix]");
      out.emplace_back(integer(pos[0], path), integer(pos[1], path));
    }
    return out;
  };
  c.survey.sources = positions("sources");
  c.survey.receivers = positions("receivers");

  const Json& rp = require(j, "rock_physics", "");
  c.rock.m_base = named_number(rp, "m_base", "rock_physics");
  c.rock.rho = named_number(rp, "rho", "rock_physics");

  const Json& wl = require(j, "wavelet", "");
  c.wavelet_f0 = named_number(wl, "f0", "wavelet");
  c.wavelet_t0 = named_number(wl, "t0", "wavelet");

  const Json& mf = require(j, "initial_field", "");
  c.initial_field.kind = text(require(mf, "kind", "initial_field"), "initial_field.kind");
  if (c.initial_field.kind == "blocks") {
    c.initial_field.amplitude = named_number(mf, "amplitude", "initial_field");
  } else if (c.initial_field.kind == "file") {
    c.initial_field.path = text(require(mf, "path", "initial_field"), "initial_field.path");
  }

  const Json& pr = require(j, "params", "");
  c.true_params = param_vector(require(pr, "true", "params"), c.family, "params.true");
  if (pr.contains("init")) {
    c.init_params = param_vector(pr["init"], c.family, "params.init");
  } else {
    // Half the true coefficients; fractional indices start from 0.5.
    c.init_params = 0.5 * c.true_params;
    if (c.family != ModelFamily::advection_diffusion) c.init_params(0) = 0.5;
  }
  c.bounds = default_bounds(c.family);
  if (pr.contains("bounds")) {
    const Json& bj = pr["bounds"];
    const std::vector<std::string> names = param_names(c.family);
    for (size_t i = 0; i < names.size(); ++i) {
      if (!bj.contains(names[i])) continue;
      const Json& pair = bj[names[i]];
      const std::string path = "params.bounds." + names[i];
      if (!pair.is_array() || pair.size() != 2) throw ConfigError("field '" + path + "': expected [lo, hi]");
      c.bounds.lower(static_cast<Eigen::Index>(i)) = number(pair[0], path);
      c.bounds.upper(static_cast<Eigen::Index>(i)) = number(pair[1], path);
    }
  }

  c.noise_sigma = named_number(j, "noise_sigma", "");
  const Json& seed = require(j, "seed", "");
  if (!seed.is_number_integer() && !seed.is_number_unsigned()) {
    throw ConfigError("field 'seed': expected an integer");
  }
  c.seed = seed.get<uint64_t>();

  if (j.contains("optimizer")) {
    const Json& op = j["optimizer"];
    if (op.contains("memory")) c.optimizer.memory = named_int(op, "memory", "optimizer");
    if (op.contains("max_iter")) c.optimizer.max_iter = named_int(op, "max_iter", "optimizer");
    if (op.contains("f_rel_tol")) c.optimizer.f_rel_tol = named_number(op, "f_rel_tol", "optimizer");
    if (op.contains("grad_tol")) c.optimizer.grad_tol = named_number(op, "grad_tol", "optimizer");
  }
  if (j.contains("observed_dir")) c.observed_dir = text(j["observed_dir"], "observed_dir");
  if (j.contains("threads")) c.threads = named_int(j, "threads", "");
  if (j.contains("adjoint_snapshot_stride")) {
    c.adjoint_snapshot_stride = named_int(j, "adjoint_snapshot_stride", "");
  }
  if (j.contains("output_dir")) c.output_dir = text(j["output_dir"], "output_dir");
  if (j.contains("stability")) {
    const Json& st = require(j["stability"], "dt_list", "stability");
    c.stability_dt_list.clear();
    for (const auto& v : st) c.stability_dt_list.push_back(number(v, "stability.dt_list"));
  }
  if (j.contains("bench")) {
    const Json& bj = j["bench"];
    if (bj.contains("grid_sizes")) {
      c.bench_grid_sizes.clear();
      for (const auto& v : bj["grid_sizes"]) c.bench_grid_sizes.push_back(integer(v, "bench.grid_sizes"));
    }
    if (bj.contains("nt")) c.bench_nt = named_int(bj, "nt", "bench");
  }

  c.validate();
  return c;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& c) {
  Json j;
  j["model_family"] = family_name(c.family);
  j["hidden_grid"] = {{"n_per_dim", c.hidden_grid.n_per_dim},
                      {"h", c.hidden_grid.h},
                      {"dtau", c.hidden_grid.dtau}};
  j["schedule"] = {{"n_obs", c.schedule.n_obs},
                   {"substeps_per_window", c.schedule.substeps_per_window}};
  j["wave_grid"] = {{"nz", c.wave_grid.nz},     {"nx", c.wave_grid.nx},
                    {"h", c.wave_grid.h},       {"dt", c.wave_grid.dt},
                    {"nt", c.wave_grid.nt},     {"npml", c.wave_grid.npml},
                    {"reflection_coeff", c.wave_grid.reflection_coeff},
                    {"kappa_max", c.wave_grid.kappa_max}};
  Json sources = Json::array(), receivers = Json::array();
  for (const auto& [iz, ix] : c.survey.sources) sources.push_back({iz, ix});
  for (const auto& [iz, ix] : c.survey.receivers) receivers.push_back({iz, ix});
  j["survey"] = {{"sources", sources}, {"receivers", receivers}};
  j["rock_physics"] = {{"m_base", c.rock.m_base}, {"rho", c.rock.rho}};
  j["wavelet"] = {{"f0", c.wavelet_f0}, {"t0", c.wavelet_t0}};
  if (c.initial_field.kind == "blocks") {
    j["initial_field"] = {{"kind", "blocks"}, {"amplitude", c.initial_field.amplitude}};
  } else {
    j["initial_field"] = {{"kind", "file"}, {"path", c.initial_field.path}};
  }
  const std::vector<std::string> names = param_names(c.family);
  Json tp, ip, bp;
  for (size_t i = 0; i < names.size(); ++i) {
    tp[names[i]] = c.true_params(static_cast<Eigen::Index>(i));
    ip[names[i]] = c.init_params(static_cast<Eigen::Index>(i));
    bp[names[i]] = {c.bounds.lower(static_cast<Eigen::Index>(i)),
                    c.bounds.upper(static_cast<Eigen::Index>(i))};
  }
  j["params"] = {{"true", tp}, {"init", ip}, {"bounds", bp}};
  j["noise_sigma"] = c.noise_sigma;
  j["seed"] = c.seed;
  if (!c.observed_dir.empty()) j["observed_dir"] = c.observed_dir;
  j["optimizer"] = {{"memory", c.optimizer.memory},
                    {"max_iter", c.optimizer.max_iter},
                    {"f_rel_tol", c.optimizer.f_rel_tol},
                    {"grad_tol", c.optimizer.grad_tol}};
  j["threads"] = c.threads;
  j["adjoint_snapshot_stride"] = c.adjoint_snapshot_stride;
  j["output_dir"] = c.output_dir;
  j["stability"] = {{"dt_list", c.stability_dt_list}};
  j["bench"] = {{"grid_sizes", c.bench_grid_sizes}, {"nt", c.bench_nt}};
  return j.dump(2) + "\n";
}

InverseProblem make_problem(const RunConfig& c) {
  c.validate();
  InverseProblem p;
  p.family = c.family;
  p.true_params = c.true_params;
  p.init_params = c.init_params;
  p.bounds = c.bounds;
  p.hidden_grid = c.hidden_grid;
  p.schedule = c.schedule;
  p.wave_grid = c.wave_grid;
  p.survey = c.survey;
  p.wavelet = ricker(c.wavelet_f0, c.wavelet_t0, c.wave_grid.dt, c.wave_grid.nt);
  p.rock = c.rock;
  p.noise_sigma = c.noise_sigma;
  p.seed = c.seed;
  p.threads = resolve_threads(c.threads);
  p.adjoint_snapshot_stride = c.adjoint_snapshot_stride;
  if (c.initial_field.kind == "blocks") {
    p.m0 = HiddenField{initial_blocks_field(c.hidden_grid, c.initial_field.amplitude), 0};
  } else {
    const Eigen::MatrixXd m = read_raw_field(c.initial_field.path);
    const int nI = c.hidden_grid.interior_per_dim();
    if (m.rows() != nI || m.cols() != nI) {
      throw ConfigError("field 'initial_field.path': raw field dims do not match the hidden grid");
    }
    const Tensor t = Tensor::from_matrix(m);
    p.m0 = HiddenField{t.flat(), 0};
  }
  return p;
}

}  // namespace adjointlab
