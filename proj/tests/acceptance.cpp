// Acceptance suite: runs the eight release criteria end to end on the
// desk-scale reference configurations and prints one pass/fail line per
// criterion. Exit status is the number of failed criteria.
//
// Usage: acceptance [N ...]   (default: all criteria)

#include "adjointlab/config.hpp"
#include "adjointlab/io.hpp"
#include "adjointlab/util.hpp"
#include "adjointlab/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace {
std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}
}  // namespace

using namespace adjointlab;
namespace fs = std::filesystem;

namespace {

#ifndef ADJOINTLAB_CONFIG_DIR
#error "ADJOINTLAB_CONFIG_DIR must be defined by the build"
#endif
#ifndef ADJOINTLAB_CLI_PATH
#error "ADJOINTLAB_CLI_PATH must be defined by the build"
#endif

RunConfig load_desk(const std::string& name) {
  return load_config_file(std::string(ADJOINTLAB_CONFIG_DIR) + "/" + name);
}

const Eigen::VectorXd kGammas = (Eigen::VectorXd(4) << 1e-1, 1e-2, 1e-3, 1e-4).finished();

struct SlopePair {
  double first = 0.0;
  double second = 0.0;
  bool ok(double first_tol = 0.15, double second_min = 1.9) const {
    return std::abs(first - 1.0) <= first_tol && second >= second_min;
  }
};

Eigen::MatrixXd interior_bump(const WaveGridSpec& g, double amplitude, int kz, int kx) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(g.nz, g.nx);
  const int lo_z = g.npml + 2, hi_z = g.nz - g.npml - 2;
  const int lo_x = g.npml + 2, hi_x = g.nx - g.npml - 2;
  for (int i = lo_z; i < hi_z; ++i) {
    for (int j = lo_x; j < hi_x; ++j) {
      const double sz = std::sin(kz * M_PI * double(i - lo_z) / (hi_z - 1 - lo_z));
      const double sx = std::sin(kx * M_PI * double(j - lo_x) / (hi_x - 1 - lo_x));
      out(i, j) = amplitude * sz * sx;
    }
  }
  return out;
}

double mittag_leffler(double alpha, double z) {
  double sum = 0.0;
  for (int j = 0; j < 200; ++j) {
    const double term = std::pow(z, j) / std::tgamma(alpha * j + 1.0);
    sum += term;
    if (std::abs(term) < 1e-18) break;
  }
  return sum;
}

// --- criterion 1: Taylor remainder slopes ---------------------------------

SlopePair taylor_ad_step(const RunConfig& cfg) {
  const GridSpec2D grid = cfg.hidden_grid;
  const CounterRng rng(11);
  const Eigen::VectorXd u0 = initial_blocks_field(grid, 100.0);
  const Eigen::VectorXd r = rng.normal_vector(0, grid.unknowns());
  const Eigen::Index n = grid.unknowns();

  ScalarFunctional F;
  F.value = [&](const Eigen::VectorXd& c) {
    const AdvectionDiffusionParams p{c(n), c(n + 1), c(n + 2)};
    return r.dot(ad_step_forward(HiddenField{c.head(n), 0}, p, grid).values);
  };
  F.gradient = [&](const Eigen::VectorXd& c) {
    const AdvectionDiffusionParams p{c(n), c(n + 1), c(n + 2)};
    const HiddenField u{c.head(n), 0};
    const HiddenField next = ad_step_forward(u, p, grid);
    const AdStepGradients back = ad_step_backward(r, next, u, p, grid);
    Eigen::VectorXd g(n + 3);
    g.head(n) = back.grad_u;
    g.tail(3) = back.grad_params;
    return g;
  };
  Eigen::VectorXd c(n + 3);
  c.head(n) = u0;
  c.tail(3) << 10.0, 0.1, -0.2;
  Eigen::VectorXd ct = rng.normal_vector(1000000, n + 3);
  ct *= 0.05 * c.norm() / ct.norm();
  const TaylorTestReport rep = taylor_remainder_test(F, c, ct, kGammas);
  return {rep.first_order_slope, rep.second_order_slope};
}

SlopePair taylor_wave(const RunConfig& cfg) {
  WaveGridSpec grid = cfg.wave_grid;
  SurveyGeometry survey;
  survey.sources = {cfg.survey.sources.at(0)};
  survey.receivers = cfg.survey.receivers;
  const SourceWavelet wavelet = ricker(cfg.wavelet_f0, cfg.wavelet_t0, grid.dt, grid.nt);

  MediumModel truth;
  truth.m = interior_bump(grid, 60.0, 2, 1);
  truth.m_base = cfg.rock.m_base;
  truth.rho = cfg.rock.rho;
  const std::vector<ShotRecord> observed{wave_forward(truth, survey, wavelet, grid, 0)};

  MediumModel base = truth;
  base.m = interior_bump(grid, 25.0, 1, 2);
  const Eigen::MatrixXd dir = interior_bump(grid, 10.0, 3, 2);

  ScalarFunctional F;
  F.value = [&](const Eigen::VectorXd& flat) {
    MediumModel mm = base;
    mm.m = flat.reshaped(grid.nz, grid.nx);
    return wave_misfit(wave_forward(mm, survey, wavelet, grid, 0), observed[0]);
  };
  F.gradient = [&](const Eigen::VectorXd& flat) {
    MediumModel mm = base;
    mm.m = flat.reshaped(grid.nz, grid.nx);
    return wave_gradient(mm, survey, wavelet, grid, observed).reshaped().eval();
  };
  const TaylorTestReport rep =
      taylor_remainder_test(F, base.m.reshaped(), dir.reshaped(), kGammas);
  return {rep.first_order_slope, rep.second_order_slope};
}

SlopePair taylor_end_to_end(const RunConfig& cfg) {
  InverseProblem problem = make_problem(cfg);
  problem.observed = generate_synthetic(problem);
  AssembledObjective obj = assemble_objective(problem.objective_spec());
  ScalarFunctional F;
  F.value = [&](const Eigen::VectorXd& w) { return obj.value(w); };
  F.gradient = [&](const Eigen::VectorXd& w) { return obj.value_and_gradient(w).second; };
  const CounterRng rng(13);
  Eigen::VectorXd dir = rng.normal_vector(0, problem.init_params.size());
  dir *= 0.2 * problem.init_params.norm() / dir.norm();
  const TaylorTestReport rep = taylor_remainder_test(F, problem.init_params, dir, kGammas);
  return {rep.first_order_slope, rep.second_order_slope};
}

bool criterion1(std::string& detail) {
  const RunConfig cfg = load_desk("desk_ad.json");
  const SlopePair a = taylor_ad_step(cfg);
  const SlopePair b = taylor_wave(cfg);
  const SlopePair c = taylor_end_to_end(cfg);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "slopes ad_step %.3f/%.3f, wave %.3f/%.3f, end-to-end %.3f/%.3f", a.first,
                a.second, b.first, b.second, c.first, c.second);
  detail = buf;
  return a.ok() && b.ok() && c.ok();
}

// --- criterion 2: Table 1 at desk scale ------------------------------------

bool criterion2(std::string& detail) {
  const RunConfig cfg = load_desk("desk_ad.json");
  InverseProblem problem = make_problem(cfg);
  problem.observed = generate_synthetic(problem);
  const OptResult res = invert(problem, cfg.optimizer);

  bool ratios_ok = true;
  std::ostringstream os;
  os << "ratios";
  for (const RecoveryRow& row : recovery_report(res, problem.true_params, problem.family)) {
    os << " " << row.name << "=" << short_num(row.reported);
    ratios_ok = ratios_ok && std::abs(row.reported - 1.0) <= 0.01;
  }
  const double g0 = res.grad_norm_history.front();
  const double g1 = res.grad_norm_history.back();
  const bool grad_ok = g1 <= 1e-8 * g0;
  os << ", grad " << short_num(g1 / g0) << "x initial";

  // Fig. 7 substitute: terminal losses monotone increasing in sigma.
  std::vector<double> terminal{res.best_loss};
  for (double sigma : {5.0, 10.0}) {
    InverseProblem noisy = make_problem(cfg);
    noisy.noise_sigma = sigma;
    noisy.observed = generate_synthetic(noisy);
    terminal.push_back(invert(noisy, cfg.optimizer).best_loss);
  }
  const bool monotone = terminal[0] < terminal[1] && terminal[1] < terminal[2];
  os << ", terminal losses " << short_num(terminal[0]) << " < "
     << short_num(terminal[1]) << " < " << short_num(terminal[2]);
  detail = os.str();
  return ratios_ok && grad_ok && monotone;
}

// --- criteria 3 and 4: fractional recovery tables ---------------------------

bool fractional_recovery(const std::string& config_name, const std::vector<double>& index_values,
                         std::string& detail) {
  bool ok = true;
  std::ostringstream os;
  for (double star : index_values) {
    RunConfig cfg = load_desk(config_name);
    cfg.true_params(0) = star;
    cfg.init_params(0) = 0.5;
    cfg.init_params(1) = 0.5 * cfg.true_params(1);
    InverseProblem problem = make_problem(cfg);
    problem.observed = generate_synthetic(problem);
    const OptResult res = invert(problem, cfg.optimizer);
    const auto rows = recovery_report(res, problem.true_params, problem.family);
    const double index_err = std::abs(rows[0].reported - star);
    const double a_err = std::abs(rows[1].reported - 1.0);
    const bool grad_ok =
        res.grad_norm_history.back() <= 1e-8 * res.grad_norm_history.front();
    ok = ok && index_err <= 0.01 && a_err <= 0.05 && grad_ok;
    os << rows[0].name << "*=" << star << " -> " << short_num(rows[0].reported)
       << " (a ratio " << short_num(rows[1].reported) << ") ";
  }
  detail = os.str();
  return ok;
}

bool criterion3(std::string& detail) {
  return fractional_recovery("desk_tfrac.json", {0.4, 0.8}, detail);
}

bool criterion4(std::string& detail) {
  return fractional_recovery("desk_sfrac.json", {0.2, 0.8}, detail);
}

// --- criterion 5: stability suite -------------------------------------------

bool criterion5(std::string& detail) {
  GridSpec2D grid{17, 0.5, 0.01, 8.5};  // 16x16 interior lattice

  // Spectral radius of the implicit update across three decades of dtau.
  bool rho_ok = true;
  double rho_worst = 0.0;
  const StabilityReport rho_rep =
      stability_report(ModelFamily::advection_diffusion,
                       (Eigen::VectorXd(3) << 10.0, 0.1, -0.2).finished(), grid,
                       {1e-1, 1e-2, 1e-3});
  for (const StabilityRow& row : rho_rep.rows) {
    rho_ok = rho_ok && row.rho < 1.0;
    rho_worst = std::max(rho_worst, row.rho);
  }

  // Closed-form multistep row sums.
  bool rows_ok = true;
  double row_worst = 0.0;
  for (double alpha : {0.2, 0.4, 0.6, 0.8}) {
    for (int i = 1; i <= 50; ++i) {
      const double s = caputo_row_sum(alpha, i);
      rows_ok = rows_ok && s < 1.0;
      row_worst = std::max(row_worst, s);
    }
  }

  // Empirical gradient-norm boundedness on the scalar surrogate across
  // dt halvings.
  bool grad_ok = true;
  double ratio_worst = 0.0;
  const std::vector<double> dts{1e-2, 5e-3, 2.5e-3, 1.25e-3};
  for (auto [family, params] :
       {std::pair{ModelFamily::advection_diffusion, (Eigen::VectorXd(3) << 2.0, 0.0, 0.0).finished()},
        std::pair{ModelFamily::time_fractional, (Eigen::VectorXd(2) << 0.6, 2.0).finished()}}) {
    const StabilityReport rep = stability_report(family, params, grid, dts);
    double gmin = 1e300, gmax = 0.0;
    for (const StabilityRow& row : rep.rows) {
      gmin = std::min(gmin, row.surrogate_grad_norm);
      gmax = std::max(gmax, row.surrogate_grad_norm);
    }
    grad_ok = grad_ok && gmax <= 2.0 * gmin;
    ratio_worst = std::max(ratio_worst, gmax / gmin);
  }

  char buf[200];
  std::snprintf(buf, sizeof(buf), "max rho %.6f, max row sum %.6f, worst grad ratio %.3fx",
                rho_worst, row_worst, ratio_worst);
  detail = buf;
  return rho_ok && rows_ok && grad_ok;
}

// --- criterion 6: adjoint oracle equivalence --------------------------------

bool criterion6(std::string& detail) {
  const CounterRng rng(21);
  bool ok = true;
  std::ostringstream os;

  // Dot-product transpose tests at 1e-12 for every stepper.
  {
    const GridSpec2D grid{6, 0.5, 0.02, 3.0};
    const AdvectionDiffusionParams p{3.0, 0.4, -0.6};
    const HiddenField u{rng.normal_vector(0, grid.unknowns()), 0};
    const HiddenField next = ad_step_forward(u, p, grid);
    const Eigen::VectorXd g = rng.normal_vector(100, grid.unknowns());
    const AdStepGradients back = ad_step_backward(g, next, u, p, grid);
    const double lhs = g.dot(next.values), rhs = back.grad_u.dot(u.values);
    ok = ok && std::abs(lhs - rhs) <= 1e-12 * std::max(std::abs(lhs), 1.0);
  }
  {
    const GridSpec2D grid{6, 0.5, 0.01, 3.0};
    const TimeFractionalParams p{0.65, 1.5};
    std::vector<HiddenField> hist;
    for (int k = 0; k < 4; ++k) hist.push_back(HiddenField{rng.normal_vector(200 + k * 50, grid.unknowns()), k});
    const HiddenField next = tfrac_step_forward(hist, p, grid);
    const Eigen::VectorXd g = rng.normal_vector(500, grid.unknowns());
    const TfracStepGradients back = tfrac_step_backward(g, next, hist, p, grid);
    double rhs = 0.0;
    for (size_t k = 0; k < hist.size(); ++k) rhs += back.grad_history[k].dot(hist[k].values);
    const double lhs = g.dot(next.values);
    ok = ok && std::abs(lhs - rhs) <= 1e-12 * std::max(std::abs(lhs), 1.0);
  }
  {
    const GridSpec2D grid{17, 0.5, 0.02, 8.5};
    const SpaceFractionalParams p{0.45, 2.0};
    const HiddenField u{rng.normal_vector(900, grid.unknowns()), 0};
    const HiddenField next = sfrac_step_forward(u, p, grid);
    const Eigen::VectorXd g = rng.normal_vector(1500, grid.unknowns());
    const SfracStepGradients back = sfrac_step_backward(g, next, u, p, grid);
    const double lhs = g.dot(next.values), rhs = back.grad_u.dot(u.values);
    ok = ok && std::abs(lhs - rhs) <= 1e-12 * std::max(std::abs(lhs), 1.0);
  }
  os << (ok ? "dot tests 1e-12 ok" : "dot tests FAILED");

  // Central-difference oracles per stepper at the stated tolerances.
  double worst_fd = 0.0;
  {
    const GridSpec2D grid{6, 0.5, 0.02, 3.0};
    const Eigen::VectorXd u0 = rng.normal_vector(2000, grid.unknowns());
    const Eigen::VectorXd r = rng.normal_vector(2100, grid.unknowns());
    auto F = [&](const Eigen::VectorXd& th) {
      return r.dot(ad_step_forward(HiddenField{u0, 0}, {th(0), th(1), th(2)}, grid).values);
    };
    const Eigen::VectorXd th = (Eigen::VectorXd(3) << 2.0, 0.3, -0.5).finished();
    const HiddenField next = ad_step_forward(HiddenField{u0, 0}, {th(0), th(1), th(2)}, grid);
    const AdStepGradients back = ad_step_backward(r, next, HiddenField{u0, 0}, {th(0), th(1), th(2)}, grid);
    const Eigen::VectorXd fd = fd_gradient(F, th, 1e-6);
    const double err = (Eigen::Vector3d(back.grad_params) - fd).norm() / fd.norm();
    ok = ok && err < 1e-6;
    worst_fd = std::max(worst_fd, err / 1e-6);
  }
  {
    const GridSpec2D grid{6, 0.5, 0.01, 3.0};
    const Eigen::VectorXd m0 = rng.normal_vector(3000, grid.unknowns());
    const Eigen::VectorXd r = rng.normal_vector(3100, grid.unknowns());
    auto F = [&](const Eigen::VectorXd& th) {
      const auto snaps = simulate_hidden(HiddenField{m0, 0}, ModelFamily::time_fractional, th,
                                         grid, 10, 10);
      return r.dot(snaps.back().values);
    };
    const Eigen::VectorXd th = (Eigen::VectorXd(2) << 0.65, 1.5).finished();
    TapeGraph g;
    const NodeId m0n = g.placeholder({grid.unknowns()});
    const NodeId pn = g.placeholder({2});
    const auto snaps = record_hidden_rollout(g, ModelFamily::time_fractional, grid, m0n, pn, 10, 10);
    CustomOp dot_op;
    dot_op.name = "dot_r";
    dot_op.forward = [r](const CustomOp::Inputs& in, std::any&) {
      return Tensor::scalar(r.dot(in[0]->flat()));
    };
    dot_op.backward = [r](const Tensor& up, const std::any&, const CustomOp::Inputs&, const Tensor&) {
      return std::vector<Tensor>{Tensor::from_vector(up.scalar_value() * r)};
    };
    g.registry().register_op(std::move(dot_op));
    const NodeId L = g.record("dot_r", {snaps.back()});
    g.forward_eval({{m0n, Tensor::from_vector(m0)}, {pn, Tensor::from_vector(th)}});
    const Eigen::VectorXd tape_grad = g.backward(L).at(pn).flat();
    const Eigen::VectorXd fd = fd_gradient(F, th, 1e-6);
    const double err = (tape_grad - fd).norm() / fd.norm();
    ok = ok && err < 1e-5;
    worst_fd = std::max(worst_fd, err / 1e-5);
  }
  {
    const GridSpec2D grid{17, 0.5, 0.02, 8.5};
    const Eigen::VectorXd u0 = rng.normal_vector(4000, grid.unknowns());
    const Eigen::VectorXd r = rng.normal_vector(4100, grid.unknowns());
    auto F = [&](const Eigen::VectorXd& th) {
      return r.dot(sfrac_step_forward(HiddenField{u0, 0}, {th(0), th(1)}, grid).values);
    };
    const Eigen::VectorXd th = (Eigen::VectorXd(2) << 0.45, 2.0).finished();
    const HiddenField next = sfrac_step_forward(HiddenField{u0, 0}, {th(0), th(1)}, grid);
    const SfracStepGradients back =
        sfrac_step_backward(r, next, HiddenField{u0, 0}, {th(0), th(1)}, grid);
    const Eigen::VectorXd fd = fd_gradient(F, th, 1e-6);
    const Eigen::VectorXd an = (Eigen::VectorXd(2) << back.grad_s, back.grad_a).finished();
    const double err = (an - fd).norm() / fd.norm();
    ok = ok && err < 1e-6;
    worst_fd = std::max(worst_fd, err / 1e-6);
  }
  os << ", FD oracles at " << short_num(worst_fd) << " of tolerance";

  // Checkpointed scan backward equals fully stored backward.
  {
    const GridSpec2D grid{6, 0.5, 0.02, 3.0};
    const Eigen::VectorXd m0 = rng.normal_vector(5000, grid.unknowns());
    const Eigen::VectorXd theta = (Eigen::VectorXd(3) << 2.0, 0.3, -0.4).finished();
    auto run = [&](int stride) {
      TapeGraph g;
      g.registry().register_op(make_ad_step_op(grid));
      CustomOp sum_op;
      sum_op.name = "sum_all";
      sum_op.forward = [](const CustomOp::Inputs& in, std::any&) {
        return Tensor::scalar(in[0]->flat().sum());
      };
      sum_op.backward = [](const Tensor& up, const std::any&, const CustomOp::Inputs& in,
                           const Tensor&) {
        Tensor gg = Tensor::zeros_like(*in[0]);
        gg.flat().setConstant(up.scalar_value());
        return std::vector<Tensor>{gg};
      };
      g.registry().register_op(std::move(sum_op));
      const NodeId m0n = g.placeholder({grid.unknowns()});
      const NodeId pn = g.placeholder({3});
      ScanSpec spec{g.registry().find("ad_step"), 10, {grid.unknowns()}, stride};
      const NodeId out = g.record_scan(spec, m0n, {pn});
      const NodeId L = g.record("sum_all", {out});
      g.forward_eval({{m0n, Tensor::from_vector(m0)}, {pn, Tensor::from_vector(theta)}});
      auto grads = g.backward(L);
      return std::make_pair(grads.at(m0n).flat(), grads.at(pn).flat());
    };
    const auto [gm_full, gp_full] = run(1);
    for (int stride : {3, 4, 10}) {
      const auto [gm, gp] = run(stride);
      ok = ok && (gm - gm_full).norm() <= 1e-12 * gm_full.norm() &&
           (gp - gp_full).norm() <= 1e-12 * gp_full.norm();
    }
    os << ", checkpointed scan == stored";
  }
  detail = os.str();
  return ok;
}

// --- criterion 7: time-fractional forward correctness -----------------------

bool criterion7(std::string& detail) {
  const double lambda = 1.0;
  const double dtau = 1e-3;
  const int n_steps = 1000;
  SparseMat A(1, 1);
  A.insert(0, 0) = lambda;
  A.makeCompressed();
  bool ok = true;
  std::ostringstream os;
  for (double alpha : {0.4, 0.8}) {
    std::vector<Eigen::VectorXd> hist{Eigen::VectorXd::Ones(1)};
    for (int k = 0; k < n_steps; ++k) hist.push_back(tfrac_update(A, hist, alpha, dtau));
    double max_err = 0.0;
    for (int k = 100; k <= n_steps; k += 100) {
      const double exact = mittag_leffler(alpha, -lambda * std::pow(k * dtau, alpha));
      max_err = std::max(max_err, std::abs(hist[k](0) - exact));
    }
    ok = ok && max_err < 1e-3;
    os << "alpha=" << alpha << " err=" << short_num(max_err) << " ";
  }
  detail = os.str();
  return ok;
}

// --- criterion 8: wall-time scaling of cmd_bench -----------------------------

bool criterion8(std::string& detail) {
  const fs::path out = fs::temp_directory_path() / "adjointlab_acceptance_bench";
  fs::create_directories(out);
  const std::string cmd = std::string(ADJOINTLAB_CLI_PATH) + " bench --config " +
                          ADJOINTLAB_CONFIG_DIR + "/desk_ad.json --out " + out.string() +
                          " >/dev/null 2>&1";
  if (std::system(cmd.c_str()) != 0) {
    detail = "cmd_bench failed";
    return false;
  }
  std::ifstream in(out / "bench.csv");
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> dof, fwd, bwd, ratio;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    if (cells.size() != 4) continue;
    dof.push_back(cells[0]);
    fwd.push_back(cells[1]);
    bwd.push_back(cells[2]);
    ratio.push_back(cells[3]);
  }
  if (dof.size() < 4) {
    detail = "bench sweep incomplete";
    return false;
  }
  const auto to_vec = [](const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()).eval();
  };
  const double slope_fwd = fit_loglog_slope(to_vec(dof), to_vec(fwd));
  const double slope_bwd = fit_loglog_slope(to_vec(dof), to_vec(bwd));
  double mean_ratio = 0.0;
  for (double r : ratio) mean_ratio += r;
  mean_ratio /= ratio.size();
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "time ~ dof^%.2f forward, dof^%.2f backward (<= 1.30 allows the log factor), "
                "backward/forward %.2fx",
                slope_fwd, slope_bwd, mean_ratio);
  detail = buf;
  // No worse than linear times a log factor over the sweep.
  return slope_fwd <= 1.30 && slope_bwd <= 1.30;
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;  // 0: no stated limit
  bool (*run)(std::string&);
};

const Criterion kCriteria[] = {
    {1, "Taylor remainder slopes (ad_step, wave misfit, end-to-end)", 120.0, criterion1},
    {2, "advection-diffusion recovery and noise monotonicity", 600.0, criterion2},
    {3, "time-fractional recovery (alpha* 0.4, 0.8)", 900.0, criterion3},
    {4, "space-fractional recovery (s* 0.2, 0.8)", 600.0, criterion4},
    {5, "stability suite (rho, row sums, gradient boundedness)", 60.0, criterion5},
    {6, "adjoint oracle equivalence (dot, FD, checkpointed scan)", 120.0, criterion6},
    {7, "time-fractional forward vs Mittag-Leffler series", 10.0, criterion7},
    {8, "bench wall-time scaling", 0.0, criterion8},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    std::string detail;
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = false;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0.0 && seconds > c.limit_seconds) {
      pass = false;
      detail += " [over the runtime limit]";
    }
    std::string budget;
    if (c.limit_seconds > 0.0) {
      budget = " <= " + std::to_string(static_cast<int>(c.limit_seconds)) + " s";
    }
    std::printf("[%s] criterion %d: %s — %s (%.1f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                detail.c_str(), seconds, budget.c_str());
    if (!pass) ++failures;
  }
  return failures;
}
