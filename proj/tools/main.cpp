#include "adjointlab/config.hpp"
#include "adjointlab/io.hpp"
#include "adjointlab/util.hpp"
#include "adjointlab/verify.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace adjointlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitOptimizer = 4;
constexpr int kExitGradRegression = 5;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;  // overrides config output_dir when set
  int64_t seed = -1;    // overrides config seed when >= 0
  int threads = 0;      // overrides config threads when > 0
};

RunConfig load_with_overrides(const CommonArgs& args) {
  RunConfig cfg = load_config_file(args.config_path);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
  if (args.threads > 0) cfg.threads = args.threads;
  return cfg;
}

fs::path ensure_out_dir(const RunConfig& cfg) {
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

std::string phase_tag(int phase) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", phase);
  return buf;
}

int cmd_forward(const CommonArgs& args) {
  const RunConfig cfg = load_with_overrides(args);
  const fs::path dir = ensure_out_dir(cfg);
  InverseProblem problem = make_problem(cfg);

  // Snapshots of the hidden state actually observed (noise included), plus
  // the shot records simulated from them.
  const auto observed = generate_synthetic(problem);
  std::vector<HiddenField> snaps{problem.m0};
  if (problem.schedule.total_steps() > 0) {
    const auto rolled =
        simulate_hidden(problem.m0, problem.family, problem.true_params, problem.hidden_grid,
                        problem.schedule.total_steps(), problem.schedule.substeps_per_window);
    snaps.insert(snaps.end(), rolled.begin(), rolled.end());
  }
  const int nI = problem.hidden_grid.interior_per_dim();
  const CounterRng rng(problem.seed);
  for (int phase = 0; phase < problem.schedule.n_obs; ++phase) {
    Eigen::VectorXd coarse = snaps.at(phase).values;
    if (problem.noise_sigma > 0.0) {
      coarse += problem.noise_sigma *
                rng.normal_vector(static_cast<uint64_t>(phase) * problem.hidden_grid.unknowns(),
                                  coarse.size());
    }
    const Tensor t({nI, nI}, coarse);
    write_raw_field((dir / ("snapshot_" + phase_tag(phase) + ".raw")).string(), t.as_matrix());
    for (size_t s = 0; s < observed[phase].size(); ++s) {
      write_raw_field(
          (dir / ("record_phase" + phase_tag(phase) + "_src" + phase_tag(static_cast<int>(s)) +
                  ".raw"))
              .string(),
          observed[phase][s].traces);
    }
  }
  std::cout << "wrote " << problem.schedule.n_obs << " snapshots and "
            << problem.schedule.n_obs * problem.survey.sources.size() << " shot records to "
            << dir.string() << "\n";
  return kExitOk;
}

// Observed records as written by cmd_forward: one raw file per
// (phase, source), each receivers x nt.
std::vector<std::vector<ShotRecord>> read_observed_records(const std::string& dir,
                                                           const InverseProblem& problem) {
  std::vector<std::vector<ShotRecord>> observed(problem.schedule.n_obs);
  for (int phase = 0; phase < problem.schedule.n_obs; ++phase) {
    for (size_t s = 0; s < problem.survey.sources.size(); ++s) {
      const std::string path = dir + "/record_phase" + phase_tag(phase) + "_src" +
                               phase_tag(static_cast<int>(s)) + ".raw";
      ShotRecord rec;
      rec.traces = read_raw_field(path);
      if (rec.traces.rows() != static_cast<Eigen::Index>(problem.survey.receivers.size()) ||
          rec.traces.cols() != problem.wave_grid.nt) {
        throw ConfigError("field 'observed_dir': " + path + " does not match receivers x nt");
      }
      observed[phase].push_back(std::move(rec));
    }
  }
  return observed;
}

int cmd_invert(const CommonArgs& args) {
  const RunConfig cfg = load_with_overrides(args);
  const fs::path dir = ensure_out_dir(cfg);
  InverseProblem problem = make_problem(cfg);
  problem.observed = cfg.observed_dir.empty() ? generate_synthetic(problem)
                                              : read_observed_records(cfg.observed_dir, problem);

  const OptResult res = invert(problem, cfg.optimizer);

  {
    CsvWriter loss_csv((dir / "loss_history.csv").string(), {"iter", "loss", "grad_norm"});
    for (size_t k = 0; k < res.loss_history.size(); ++k) {
      loss_csv.row({std::to_string(k), csv_number(res.loss_history[k]),
                    csv_number(res.grad_norm_history[k])});
    }
  }
  {
    CsvWriter report_csv((dir / "recovery_report.csv").string(),
                         {"quantity", "true", "estimate", "reported"});
    for (const RecoveryRow& row : recovery_report(res, problem.true_params, problem.family)) {
      const std::string label = row.is_index ? row.name : row.name + "/" + row.name + "*";
      report_csv.row({label, csv_number(row.true_value), csv_number(row.estimate),
                      csv_number(row.reported)});
    }
  }
  std::cout << "terminated after " << res.iterations << " iterations ("
            << stop_reason_name(res.reason) << "), loss " << res.best_loss << "\n";
  return res.reason == StopReason::line_search_failure ? kExitOptimizer : kExitOk;
}

// Taylor remainder report: one row per registered operator of the assembled
// objective (perturbing all op inputs jointly), plus the end-to-end map.
int cmd_gradcheck(const CommonArgs& args) {
  const RunConfig cfg = load_with_overrides(args);
  const fs::path dir = ensure_out_dir(cfg);
  InverseProblem problem = make_problem(cfg);
  problem.observed = generate_synthetic(problem);
  AssembledObjective obj = assemble_objective(problem.objective_spec());

  const Eigen::VectorXd gammas = (Eigen::VectorXd(4) << 1e-1, 1e-2, 1e-3, 1e-4).finished();
  CsvWriter csv((dir / "gradcheck.csv").string(),
                {"operator", "first_order_slope", "second_order_slope", "inner_product_nonzero"});

  // Evaluate once at the initial guess so every node holds a representative
  // value to linearize around.
  obj.value(problem.init_params);
  TapeGraph& graph = obj.graph();
  const CounterRng rng(cfg.seed + 7);

  bool regression = false;
  uint64_t counter = 0;
  for (const std::string& name : graph.registry().names()) {
    // Find a node applying this op to harvest realistic input values; scan
    // step ops are tested on one application at the scan's own inputs
    // (the input layouts coincide: carry plus static parameters).
    const CustomOp* op = graph.registry().find(name);
    NodeId node_id = -1;
    for (NodeId id = 0; id < graph.num_nodes(); ++id) {
      const TapeNode& n = graph.node(id);
      if (n.op == op || (n.scan && n.scan->step_op == op)) {
        node_id = id;
        break;
      }
    }
    if (node_id < 0) continue;  // registered but unused

    const TapeNode& node = graph.node(node_id);
    std::vector<Tensor> base_inputs;
    std::vector<Eigen::Index> offsets{0};
    for (NodeId in : node.input_ids) {
      base_inputs.push_back(graph.value(in));
      offsets.push_back(offsets.back() + base_inputs.back().size());
    }
    const Eigen::Index total = offsets.back();

    auto split = [&](const Eigen::VectorXd& flat) {
      std::vector<Tensor> inputs = base_inputs;
      for (size_t k = 0; k < inputs.size(); ++k) {
        inputs[k].flat() = flat.segment(offsets[k], inputs[k].size());
      }
      return inputs;
    };
    const Eigen::VectorXd r = rng.normal_vector(counter, graph.value(node_id).size());
    counter += 1000000;

    ScalarFunctional F;
    F.value = [&, op](const Eigen::VectorXd& flat) {
      const std::vector<Tensor> inputs = split(flat);
      CustomOp::Inputs ptrs;
      for (const Tensor& t : inputs) ptrs.push_back(&t);
      std::any ctx;
      return r.dot(op->forward(ptrs, ctx).flat());
    };
    F.gradient = [&, op](const Eigen::VectorXd& flat) {
      const std::vector<Tensor> inputs = split(flat);
      CustomOp::Inputs ptrs;
      for (const Tensor& t : inputs) ptrs.push_back(&t);
      std::any ctx;
      const Tensor out = op->forward(ptrs, ctx);
      Tensor up = Tensor::zeros_like(out);
      up.flat() = r;
      const std::vector<Tensor> grads = op->backward(up, ctx, ptrs, out);
      Eigen::VectorXd g(total);
      for (size_t k = 0; k < grads.size(); ++k) g.segment(offsets[k], grads[k].size()) = grads[k].flat();
      return g;
    };

    Eigen::VectorXd c(total);
    for (size_t k = 0; k < base_inputs.size(); ++k) {
      c.segment(offsets[k], base_inputs[k].size()) = base_inputs[k].flat();
    }
    // Relative perturbation; wave-misfit inputs only move inside the physical
    // region (the CPML ring is masked by design).
    Eigen::VectorXd ct = rng.normal_vector(counter, total);
    counter += 1000000;
    ct *= 0.05 * std::max(c.norm(), 1.0) / std::max(ct.norm(), 1e-300);
    if (name.rfind("wave_misfit_phase", 0) == 0) {
      const auto& wgrid = problem.wave_grid;
      for (int i = 0; i < wgrid.nz; ++i) {
        for (int jx = 0; jx < wgrid.nx; ++jx) {
          if (wgrid.in_pml(i, jx)) ct(static_cast<Eigen::Index>(i) * wgrid.nx + jx) = 0.0;
        }
      }
    }

    try {
      const TaylorTestReport rep = taylor_remainder_test(F, c, ct, gammas);
      const bool exact_linear = rep.second_order_at_machine_precision;
      csv.row({name, csv_number(rep.first_order_slope),
               exact_linear ? "exact" : csv_number(rep.second_order_slope),
               rep.degenerate ? "0" : "1"});
      if (!rep.degenerate && !exact_linear && rep.second_order_slope < 1.5) regression = true;
    } catch (const std::exception& e) {
      std::cerr << "gradcheck: " << name << ": " << e.what() << "\n";
      return kExitNumerical;
    }
  }

  // End-to-end objective.
  {
    ScalarFunctional F;
    F.value = [&](const Eigen::VectorXd& w) { return obj.value(w); };
    F.gradient = [&](const Eigen::VectorXd& w) { return obj.value_and_gradient(w).second; };
    Eigen::VectorXd dir = rng.normal_vector(counter, problem.init_params.size());
    dir *= 0.2 * problem.init_params.norm() / std::max(dir.norm(), 1e-300);
    const TaylorTestReport rep = taylor_remainder_test(F, problem.init_params, dir, gammas);
    csv.row({"end_to_end", csv_number(rep.first_order_slope), csv_number(rep.second_order_slope),
             rep.degenerate ? "0" : "1"});
    if (!rep.degenerate && rep.second_order_slope < 1.5) regression = true;
  }
  csv.close();
  std::cout << "wrote " << (dir / "gradcheck.csv").string() << "\n";
  return regression ? kExitGradRegression : kExitOk;
}

int cmd_stability(const CommonArgs& args) {
  const RunConfig cfg = load_with_overrides(args);
  const fs::path dir = ensure_out_dir(cfg);

  // The diagnostic grid mirrors the hidden grid but is capped for the dense
  // sweeps of power iteration.
  GridSpec2D grid = cfg.hidden_grid;
  if (grid.n_per_dim > 17) {
    grid.n_per_dim = 17;
    grid.domain_length = grid.h * grid.n_per_dim;
  }
  const StabilityReport rep =
      stability_report(cfg.family, cfg.true_params, grid, cfg.stability_dt_list);

  {
    CsvWriter csv((dir / "stability_report.csv").string(),
                  {"dt", "rho", "max_caputo_row_sum", "max_param_jacobian_norm",
                   "assumption4_ratio", "surrogate_grad_norm"});
    for (const StabilityRow& row : rep.rows) {
      csv.row({csv_number(row.dt), csv_number(row.rho), csv_number(row.max_caputo_row_sum),
               csv_number(row.max_param_jacobian_norm), csv_number(row.assumption4_ratio),
               csv_number(row.surrogate_grad_norm)});
    }
  }
  {
    CsvWriter csv((dir / "stability_summary.csv").string(),
                  {"family", "rho_fit_exponent", "jacobian_fit_exponent", "assumption1_pass",
                   "assumption2_pass", "assumption3_pass", "assumption4_pass",
                   "gradient_bounded_pass"});
    csv.row({family_name(rep.family), csv_number(rep.rho_fit_exponent),
             csv_number(rep.jacobian_fit_exponent), rep.assumption1_pass ? "1" : "0",
             rep.assumption2_pass ? "1" : "0", rep.assumption3_pass ? "1" : "0",
             rep.assumption4_pass ? "1" : "0", rep.gradient_bounded_pass ? "1" : "0"});
  }
  std::cout << (rep.all_pass() ? "stability: all assumptions pass\n"
                               : "stability: at least one assumption fails\n");
  return kExitOk;
}

int cmd_bench(const CommonArgs& args) {
  const RunConfig cfg = load_with_overrides(args);
  const fs::path dir = ensure_out_dir(cfg);
  const int threads = resolve_threads(cfg.threads);

  CsvWriter csv((dir / "bench.csv").string(),
                {"dof", "forward_seconds", "backward_seconds", "backward_forward_ratio"});
  for (int n : cfg.bench_grid_sizes) {
    WaveGridSpec grid = cfg.wave_grid;
    grid.nz = n;
    grid.nx = n;
    grid.nt = cfg.bench_nt;

    MediumModel medium;
    medium.m = Eigen::MatrixXd::Zero(n, n);
    medium.m_base = cfg.rock.m_base;
    medium.rho = cfg.rock.rho;
    SurveyGeometry survey;
    survey.sources = {{grid.npml + 3, n / 2}};
    for (int k = 0; k < 8; ++k) {
      survey.receivers.push_back({grid.npml + 5, grid.npml + 2 + k * (n - 2 * grid.npml - 4) / 8});
    }
    const SourceWavelet wavelet = ricker(cfg.wavelet_f0, cfg.wavelet_t0, grid.dt, grid.nt);
    const std::vector<ShotRecord> observed{wave_forward(medium, survey, wavelet, grid, 0)};

    auto time_best_of = [](int reps, const std::function<void()>& fn) {
      double best = 1e300;
      for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
      }
      return best;
    };
    MediumModel probe = medium;
    probe.m = 20.0 * Eigen::MatrixXd::Ones(n, n);
    const double fwd = time_best_of(5, [&] { wave_forward(probe, survey, wavelet, grid, 0); });
    const double bwd = time_best_of(
        5, [&] { wave_gradient(probe, survey, wavelet, grid, observed, {1}, threads); });
    csv.row({std::to_string(n * n), csv_number(fwd), csv_number(bwd), csv_number(bwd / fwd)});
  }
  csv.close();
  std::cout << "wrote " << (dir / "bench.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PDE-constrained hidden-dynamics inversion from waveform observations"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "run configuration file")->required();
    sub->add_option("--out", args.out_dir, "output directory (overrides config)");
    sub->add_option("--seed", args.seed, "rng seed (overrides config)");
    sub->add_option("--threads", args.threads, "worker threads (overrides config)");
  };

  CLI::App* forward = app.add_subcommand("forward", "simulate snapshots and shot records");
  CLI::App* invert_cmd = app.add_subcommand("invert", "run the inversion and write reports");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Taylor remainder report per operator");
  CLI::App* stability = app.add_subcommand("stability", "time-step stability diagnostics");
  CLI::App* bench = app.add_subcommand("bench", "forward/backward wall time vs degrees of freedom");
  for (CLI::App* sub : {forward, invert_cmd, gradcheck, stability, bench}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (forward->parsed()) return cmd_forward(args);
    if (invert_cmd->parsed()) return cmd_invert(args);
    if (gradcheck->parsed()) return cmd_gradcheck(args);
    if (stability->parsed()) return cmd_stability(args);
    if (bench->parsed()) return cmd_bench(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitConfig;
}
