#include "adjointlab/inverse.hpp"

#include "adjointlab/util.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

namespace adjointlab {

const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::f_rel_tol:
      return "f_rel_tol";
    case StopReason::grad_tol:
      return "grad_tol";
    case StopReason::max_iterations:
      return "max_iterations";
    case StopReason::line_search_failure:
      return "line_search_failure";
  }
  return "unknown";
}

void InverseProblem::validate() const {
  hidden_grid.validate();
  schedule.validate();
  wave_grid.validate();
  survey.validate(wave_grid);
  const int np = param_count(family);
  if (init_params.size() != np || bounds.lower.size() != np || bounds.upper.size() != np) {
    throw std::invalid_argument("InverseProblem: parameter vector size mismatch");
  }
  if (!bounds.contains(init_params)) {
    throw std::invalid_argument("InverseProblem: init_params outside bounds");
  }
  if (family != ModelFamily::advection_diffusion) {
    // Fractional index is parameter 0 and must be boxed into [eps, 1-eps].
    if (bounds.lower(0) < kIndexBoundEps || bounds.upper(0) > 1.0 - kIndexBoundEps) {
      throw std::invalid_argument("InverseProblem: fractional index bounds must lie in [1e-3, 1-1e-3]");
    }
  }
  if (noise_sigma < 0.0) throw std::invalid_argument("InverseProblem: noise sigma must be >= 0");
  if (m0.values.size() != hidden_grid.unknowns()) {
    throw std::invalid_argument("InverseProblem: m0 does not match the hidden grid");
  }
}

ObjectiveSpec InverseProblem::objective_spec() const {
  ObjectiveSpec spec;
  spec.family = family;
  spec.hidden_grid = hidden_grid;
  spec.schedule = schedule;
  spec.wave_grid = wave_grid;
  spec.survey = survey;
  spec.wavelet = wavelet;
  spec.rock = rock;
  spec.m0 = m0;
  spec.observed = observed;
  spec.threads = threads;
  spec.adjoint_snapshot_stride = adjoint_snapshot_stride;
  return spec;
}

namespace {

Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                   const ParamBounds& bounds) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x(i) <= bounds.lower(i) && g(i) > 0.0) || (x(i) >= bounds.upper(i) && g(i) < 0.0)) {
      pg(i) = 0.0;
    }
  }
  return pg;
}

struct Evaluation {
  double alpha = 0.0;
  double f = 0.0;
  double dphi = 0.0;
  Eigen::VectorXd x, g;
};

}  // namespace

OptResult lbfgs_minimize(const ValueGradFn& fg, Eigen::VectorXd x0, const ParamBounds& bounds,
                         const OptimizerConfig& config) {
  if (bounds.lower.size() != x0.size() || bounds.upper.size() != x0.size()) {
    throw std::invalid_argument("lbfgs_minimize: bounds size mismatch");
  }
  OptResult out;
  Eigen::VectorXd x = bounds.project(x0);
  auto [f, g] = fg(x);
  out.function_evaluations = 1;
  out.trajectory.push_back(x);
  out.loss_history.push_back(f);
  out.grad_norm_history.push_back(projected_gradient(x, g, bounds).norm());
  out.best_params = x;
  out.best_loss = f;
  out.reason = StopReason::max_iterations;

  std::deque<Eigen::VectorXd> s_list, y_list;
  std::deque<double> rho_list;

  auto evaluate = [&](double alpha, const Eigen::VectorXd& d) {
    Evaluation ev;
    ev.alpha = alpha;
    ev.x = bounds.project(x + alpha * d);
    auto [fv, gv] = fg(ev.x);
    ++out.function_evaluations;
    ev.f = fv;
    ev.g = std::move(gv);
    ev.dphi = ev.g.dot(d);
    return ev;
  };

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    const Eigen::VectorXd pg = projected_gradient(x, g, bounds);
    if (pg.norm() <= config.grad_tol) {
      out.reason = StopReason::grad_tol;
      break;
    }

    // Two-loop recursion on the projected gradient; direction components that
    // push an active bound further out are removed so the search stays on the
    // free subspace.
    Eigen::VectorXd q = pg;
    const int mem = static_cast<int>(s_list.size());
    std::vector<double> alpha_coef(mem);
    for (int i = mem - 1; i >= 0; --i) {
      alpha_coef[i] = rho_list[i] * s_list[i].dot(q);
      q -= alpha_coef[i] * y_list[i];
    }
    if (mem > 0) {
      const double gamma = s_list.back().dot(y_list.back()) / y_list.back().squaredNorm();
      q *= gamma;
    }
    for (int i = 0; i < mem; ++i) {
      const double beta = rho_list[i] * y_list[i].dot(q);
      q += s_list[i] * (alpha_coef[i] - beta);
    }
    Eigen::VectorXd d = -q;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if ((x(i) <= bounds.lower(i) && d(i) < 0.0) || (x(i) >= bounds.upper(i) && d(i) > 0.0)) {
        d(i) = 0.0;
      }
    }
    double dphi0 = g.dot(d);
    if (!(dphi0 < 0.0)) {  // not a descent direction: reset to steepest descent
      s_list.clear();
      y_list.clear();
      rho_list.clear();
      d = -pg;
      dphi0 = g.dot(d);
    }

    // Strong Wolfe line search (bracket then zoom) on the projected path.
    const double phi0 = f;
    const double c1 = config.wolfe_c1, c2 = config.wolfe_c2;
    const double alpha0 = iter == 1 ? std::min(1.0, 1.0 / std::max(1.0, g.norm())) : 1.0;
    bool found = false;
    Evaluation accepted;
    int evals = 0;

    Evaluation lo, hi;
    bool bracketed = false;
    double alpha_prev = 0.0, f_prev = phi0, dphi_prev = dphi0;
    double alpha = alpha0;
    Eigen::VectorXd x_prev_ls = x, g_prev_ls = g;
    while (evals < config.max_line_search_evals) {
      Evaluation ev = evaluate(alpha, d);
      ++evals;
      if (ev.f > phi0 + c1 * ev.alpha * dphi0 || (evals > 1 && ev.f >= f_prev)) {
        lo = Evaluation{alpha_prev, f_prev, dphi_prev, x_prev_ls, g_prev_ls};
        hi = ev;
        bracketed = true;
        break;
      }
      if (std::abs(ev.dphi) <= -c2 * dphi0) {
        accepted = std::move(ev);
        found = true;
        break;
      }
      if (ev.dphi >= 0.0) {
        lo = ev;
        hi = Evaluation{alpha_prev, f_prev, dphi_prev, x_prev_ls, g_prev_ls};
        bracketed = true;
        break;
      }
      alpha_prev = ev.alpha;
      f_prev = ev.f;
      dphi_prev = ev.dphi;
      x_prev_ls = ev.x;
      g_prev_ls = ev.g;
      alpha = std::min(2.0 * alpha, 1e12);
    }
    if (bracketed && !found) {
      while (evals < config.max_line_search_evals) {
        const double amid = 0.5 * (lo.alpha + hi.alpha);
        Evaluation ev = evaluate(amid, d);
        ++evals;
        if (ev.f > phi0 + c1 * ev.alpha * dphi0 || ev.f >= lo.f) {
          hi = ev;
        } else {
          if (std::abs(ev.dphi) <= -c2 * dphi0) {
            accepted = std::move(ev);
            found = true;
            break;
          }
          if (ev.dphi * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
          lo = ev;
        }
        if (std::abs(hi.alpha - lo.alpha) <= 1e-16 * std::max(1.0, std::abs(hi.alpha))) break;
      }
      // Fall back to the best sufficient-decrease point found while zooming.
      if (!found && lo.alpha > 0.0 && lo.f < phi0) {
        accepted = lo;
        found = true;
      }
    }

    if (!found) {
      out.reason = StopReason::line_search_failure;
      break;
    }

    const Eigen::VectorXd s = accepted.x - x;
    const Eigen::VectorXd y = accepted.g - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      s_list.push_back(s);
      y_list.push_back(y);
      rho_list.push_back(1.0 / sy);
      if (static_cast<int>(s_list.size()) > config.memory) {
        s_list.pop_front();
        y_list.pop_front();
        rho_list.pop_front();
      }
    }

    const double f_old = f;
    x = accepted.x;
    f = accepted.f;
    g = accepted.g;
    out.trajectory.push_back(x);
    out.loss_history.push_back(f);
    out.grad_norm_history.push_back(projected_gradient(x, g, bounds).norm());
    out.iterations = iter;
    if (f < out.best_loss) {
      out.best_loss = f;
      out.best_params = x;
    }
    if (std::abs(f_old - f) <= config.f_rel_tol * std::max({std::abs(f_old), std::abs(f), 1.0})) {
      out.reason = StopReason::f_rel_tol;
      break;
    }
  }
  return out;
}

std::vector<std::vector<ShotRecord>> generate_synthetic(const InverseProblem& problem) {
  problem.validate();
  if (problem.true_params.size() != param_count(problem.family)) {
    throw std::invalid_argument("generate_synthetic: true_params not set for the family");
  }
  const GridSpec2D& grid = problem.hidden_grid;
  const int nI = grid.interior_per_dim();
  const int pz = problem.wave_grid.nz - 2 * problem.wave_grid.npml;
  const int px = problem.wave_grid.nx - 2 * problem.wave_grid.npml;

  std::vector<HiddenField> snaps{problem.m0};
  if (problem.schedule.total_steps() > 0) {
    const auto rolled =
        simulate_hidden(problem.m0, problem.family, problem.true_params, grid,
                        problem.schedule.total_steps(), problem.schedule.substeps_per_window);
    snaps.insert(snaps.end(), rolled.begin(), rolled.end());
  }

  const CounterRng rng(problem.seed);
  std::vector<std::vector<ShotRecord>> observed(problem.schedule.n_obs);
  for (int phase = 0; phase < problem.schedule.n_obs; ++phase) {
    Eigen::VectorXd coarse = snaps.at(phase).values;
    if (problem.noise_sigma > 0.0) {
      coarse += problem.noise_sigma *
                rng.normal_vector(static_cast<uint64_t>(phase) * grid.unknowns(), coarse.size());
    }
    const Tensor coarse_t({nI, nI}, coarse);
    const Eigen::MatrixXd fine = upscale_bilinear(coarse_t.as_matrix(), pz, px);
    MediumModel medium;
    medium.m = Eigen::MatrixXd::Zero(problem.wave_grid.nz, problem.wave_grid.nx);
    medium.m.block(problem.wave_grid.npml, problem.wave_grid.npml, pz, px) = fine;
    medium.m_base = problem.rock.m_base;
    medium.rho = problem.rock.rho;

    const int n_src = static_cast<int>(problem.survey.sources.size());
    observed[phase].resize(n_src);
    std::vector<ShotRecord>& shots = observed[phase];
    parallel_for(n_src, problem.threads, [&](int s) {
      shots[s] = wave_forward(medium, problem.survey, problem.wavelet, problem.wave_grid, s);
    });
  }
  return observed;
}

OptResult invert(const InverseProblem& problem, const OptimizerConfig& config) {
  problem.validate();
  if (problem.observed.empty()) {
    throw std::invalid_argument("invert: no observed data attached");
  }
  AssembledObjective objective = assemble_objective(problem.objective_spec());
  const ValueGradFn fg = [&objective](const Eigen::VectorXd& w) {
    return objective.value_and_gradient(w);
  };
  return lbfgs_minimize(fg, problem.init_params, problem.bounds, config);
}

std::vector<RecoveryRow> recovery_report(const OptResult& result,
                                         const Eigen::VectorXd& true_params, ModelFamily family) {
  const std::vector<std::string> names = param_names(family);
  if (true_params.size() != static_cast<Eigen::Index>(names.size()) ||
      result.best_params.size() != true_params.size()) {
    throw std::invalid_argument("recovery_report: parameter size mismatch");
  }
  std::vector<RecoveryRow> rows;
  for (size_t i = 0; i < names.size(); ++i) {
    RecoveryRow row;
    row.name = names[i];
    row.true_value = true_params(static_cast<Eigen::Index>(i));
    row.estimate = result.best_params(static_cast<Eigen::Index>(i));
    row.is_index = names[i] == "alpha" || names[i] == "s";
    row.reported = row.is_index ? row.estimate : row.estimate / row.true_value;
    rows.push_back(row);
  }
  return rows;
}

Eigen::VectorXd initial_blocks_field(const GridSpec2D& grid, double amplitude) {
  grid.validate();
  const int nI = grid.interior_per_dim();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(grid.unknowns());
  struct Patch {
    double cx, cy, hx, hy, value;
  };
  // Five piecewise-constant patches, zero margins on every side.
  const Patch patches[] = {
      {0.30, 0.30, 0.10, 0.10, 1.0},  {0.70, 0.30, 0.10, 0.08, -0.8},
      {0.30, 0.70, 0.08, 0.10, 0.6},  {0.70, 0.70, 0.10, 0.10, -0.5},
      {0.50, 0.50, 0.09, 0.09, 0.9},
  };
  for (int jj = 0; jj < nI; ++jj) {
    for (int ii = 0; ii < nI; ++ii) {
      const double x = (ii + 1.0) / grid.n_per_dim;
      const double y = (jj + 1.0) / grid.n_per_dim;
      for (const Patch& p : patches) {
        if (std::abs(x - p.cx) <= p.hx && std::abs(y - p.cy) <= p.hy) {
          v(jj * nI + ii) = amplitude * p.value;
          break;
        }
      }
    }
  }
  return v;
}

ParamBounds default_bounds(ModelFamily family) {
  ParamBounds b;
  const int np = param_count(family);
  b.lower.resize(np);
  b.upper.resize(np);
  if (family == ModelFamily::advection_diffusion) {
    b.lower << 0.0, -1e3, -1e3;
    b.upper << 1e4, 1e3, 1e3;
  } else {
    b.lower << kIndexBoundEps, 0.0;
    b.upper << 1.0 - kIndexBoundEps, 1e4;
  }
  return b;
}

}  // namespace adjointlab
