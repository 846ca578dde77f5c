#include "adjointlab/verify.hpp"

#include "adjointlab/util.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace adjointlab {

TaylorTestReport taylor_remainder_test(const ScalarFunctional& F, const Eigen::VectorXd& c,
                                       const Eigen::VectorXd& c_tilde,
                                       const Eigen::VectorXd& gammas) {
  if (gammas.size() < 2) throw std::invalid_argument("taylor_remainder_test: need >= 2 gammas");
  for (Eigen::Index i = 1; i < gammas.size(); ++i) {
    if (!(gammas(i) < gammas(i - 1))) {
      throw std::invalid_argument("taylor_remainder_test: gammas must be strictly decreasing");
    }
  }

  TaylorTestReport rep;
  rep.gammas = gammas;
  const double f0 = F.value(c);
  const Eigen::VectorXd g = F.gradient(c);
  rep.inner_product = c_tilde.dot(g);
  const double ip_scale = c_tilde.norm() * g.norm();
  rep.degenerate = std::abs(rep.inner_product) <= 1e-12 * std::max(ip_scale, 1e-300);

  rep.first_order_errors.resize(gammas.size());
  rep.second_order_errors.resize(gammas.size());
  for (Eigen::Index i = 0; i < gammas.size(); ++i) {
    const double gamma = gammas(i);
    const double f = F.value(c + gamma * c_tilde);
    rep.first_order_errors(i) = std::abs(f - f0);
    rep.second_order_errors(i) = std::abs(f - f0 - gamma * rep.inner_product);
  }

  const double floor = 100.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f0));
  rep.first_order_slope = fit_loglog_slope(gammas, rep.first_order_errors, floor);
  rep.second_order_slope = fit_loglog_slope(gammas, rep.second_order_errors, floor);
  rep.second_order_at_machine_precision = (rep.second_order_errors.array() <= floor).all();
  return rep;
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& F,
                            const Eigen::VectorXd& c, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_gradient: step must be positive");
  Eigen::VectorXd g(c.size());
  Eigen::VectorXd p = c;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    p(i) = c(i) + step;
    const double fp = F(p);
    p(i) = c(i) - step;
    const double fm = F(p);
    p(i) = c(i);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("fd_gradient: non-finite functional value");
    }
    g(i) = (fp - fm) / (2.0 * step);
  }
  return g;
}

double fd_directional(const std::function<double(const Eigen::VectorXd&)>& F,
                      const Eigen::VectorXd& c, const Eigen::VectorXd& dir, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_directional: step must be positive");
  const double fp = F(c + step * dir);
  const double fm = F(c - step * dir);
  if (!std::isfinite(fp) || !std::isfinite(fm)) {
    throw std::runtime_error("fd_directional: non-finite functional value");
  }
  return (fp - fm) / (2.0 * step);
}

double power_iteration_radius(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
                              Eigen::Index dim, uint64_t seed) {
  const CounterRng rng(seed);
  Eigen::VectorXd v = rng.normal_vector(0, dim);
  v.normalize();
  double rho = 0.0;
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXd w = apply(v);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    const double change = std::abs(nw - rho);
    rho = nw;
    v = w / nw;
    if (it > 2 && change < 1e-10 * std::max(rho, 1e-300)) return rho;
  }
  return rho;
}

namespace {

// Deterministic smooth field used as the diagnostic initial condition.
Eigen::VectorXd diagnostic_field(const GridSpec2D& grid) {
  const int nI = grid.interior_per_dim();
  Eigen::VectorXd v(grid.unknowns());
  for (int jj = 0; jj < nI; ++jj) {
    for (int ii = 0; ii < nI; ++ii) {
      const double x = (ii + 1.0) / grid.n_per_dim;
      const double y = (jj + 1.0) / grid.n_per_dim;
      v(jj * nI + ii) = std::sin(M_PI * x) * std::sin(M_PI * y) +
                        0.3 * std::sin(2.0 * M_PI * x) * std::sin(3.0 * M_PI * y);
    }
  }
  return v;
}

GridSpec2D with_dtau(GridSpec2D grid, double dt) {
  grid.dtau = dt;
  return grid;
}

double step_coefficient(ModelFamily family, const Eigen::VectorXd& params, double dt) {
  if (family == ModelFamily::time_fractional) {
    return std::tgamma(2.0 - params(0)) * std::pow(dt, params(0));
  }
  return dt;
}

double scheme_rho(ModelFamily family, const Eigen::VectorXd& params, const GridSpec2D& grid,
                  double dt) {
  if (family == ModelFamily::space_fractional) {
    // Diagonal in frequency space. The zero mode of the periodic lattice is
    // an exact invariant (multiplier 1); the radius below measures the decay
    // of every non-constant mode.
    const SpaceFractionalParams p{params(0), params(1)};
    const SpectralMultiplier sm = spectral_multiplier(with_dtau(grid, dt), p);
    double rho = 0.0;
    const int nI = grid.interior_per_dim();
    for (int r = 0; r < nI; ++r) {
      for (int c = 0; c < nI; ++c) {
        if (r == 0 && c == 0) continue;
        rho = std::max(rho, std::abs(sm.m(r, c)));
      }
    }
    return rho;
  }
  const AdvectionDiffusionParams ap =
      family == ModelFamily::advection_diffusion
          ? AdvectionDiffusionParams{params(0), params(1), params(2)}
          : AdvectionDiffusionParams{params(1), 0.0, 0.0};
  const SparseMat A = assemble_operator(grid, ap);
  const double coef = step_coefficient(family, params, dt);
  SparseMat sys(A.rows(), A.cols());
  sys.setIdentity();
  sys += coef * A;
  Eigen::SparseLU<SparseMat> lu(sys);
  if (lu.info() != Eigen::Success) {
    throw std::runtime_error("stability_report: factorization failed");
  }
  return power_iteration_radius([&](const Eigen::VectorXd& v) { return lu.solve(v).eval(); },
                                A.rows());
}

// Largest parameter-Jacobian column norm over a short trajectory, holding
// previous states fixed (the per-step partial, not the total derivative).
double max_param_jacobian_norm(ModelFamily family, const Eigen::VectorXd& params,
                               const GridSpec2D& grid0, double dt, int max_steps) {
  const GridSpec2D grid = with_dtau(grid0, dt);
  double worst = 0.0;

  if (family == ModelFamily::space_fractional) {
    const SpaceFractionalParams p{params(0), params(1)};
    HiddenField u{diagnostic_field(grid), 0};
    for (int k = 0; k < max_steps; ++k) {
      const SfracStepSensitivity sens = sfrac_step_param_sensitivity(u, p, grid);
      worst = std::max({worst, sens.du_ds.norm(), sens.du_da.norm()});
      u = sfrac_step_forward(u, p, grid);
    }
    return worst;
  }

  if (family == ModelFamily::advection_diffusion) {
    const AdvectionDiffusionParams p{params(0), params(1), params(2)};
    const SparseMat La = diffusion_part(grid);
    const SparseMat Bx = advection_x_part(grid);
    const SparseMat By = advection_y_part(grid);
    const SparseMat A = assemble_operator(grid, p);
    SparseMat sys(A.rows(), A.cols());
    sys.setIdentity();
    sys += dt * A;
    Eigen::SparseLU<SparseMat> lu(sys);
    HiddenField u{diagnostic_field(grid), 0};
    for (int k = 0; k < max_steps; ++k) {
      const Eigen::VectorXd u1 = lu.solve(u.values);
      worst = std::max({worst, (dt * lu.solve((La * u1).eval())).norm(),
                        (dt * lu.solve((Bx * u1).eval())).norm(),
                        (dt * lu.solve((By * u1).eval())).norm()});
      u.values = u1;
    }
    return worst;
  }

  // Time-fractional: track the diffusion-coefficient column. The
  // fractional-index sensitivity carries log(dt) factors that do not follow
  // the dt^alpha envelope this diagnostic fits.
  const double alpha = params(0);
  const double a = params(1);
  const double c = std::tgamma(2.0 - alpha) * std::pow(dt, alpha);
  const SparseMat La = diffusion_part(grid);
  SparseMat sys(La.rows(), La.cols());
  sys.setIdentity();
  sys += (c * a) * La;
  Eigen::SparseLU<SparseMat> lu(sys);
  std::vector<Eigen::VectorXd> history{diagnostic_field(grid)};
  const CaputoWeights w = caputo_weights(alpha, max_steps + 1);
  for (int k = 0; k < max_steps; ++k) {
    const int n = static_cast<int>(history.size()) - 1;
    Eigen::VectorXd rhs = w.G(n) * history[0];
    for (int j = 1; j <= n; ++j) rhs += (w.G(n - j) - w.G(n - j + 1)) * history[j];
    const Eigen::VectorXd u1 = lu.solve(rhs);
    const Eigen::VectorXd col_a = lu.solve((c * (La * u1)).eval());
    worst = std::max(worst, col_a.norm());
    history.push_back(u1);
  }
  return worst;
}

// Empirical ||DJ/Dtheta|| of the scalar surrogate problem d u/dt = -lambda u
// (Caputo derivative for the time-fractional family), J = (u(T) - d)^2 / 2,
// computed by an exact reverse sweep of the discrete scheme.
double surrogate_gradient_norm(ModelFamily family, const Eigen::VectorXd& params,
                               const GridSpec2D& grid, double dt) {
  const double T = 0.2;
  const int n = std::max(1, static_cast<int>(std::llround(T / dt)));
  const double target = 0.0;

  if (family == ModelFamily::advection_diffusion) {
    const double lambda = params(0);
    const double f = 1.0 / (1.0 + dt * lambda);
    std::vector<double> u(n + 1);
    u[0] = 1.0;
    for (int k = 0; k < n; ++k) u[k + 1] = u[k] * f;
    double lam = u[n] - target;
    double g = 0.0;
    for (int k = n - 1; k >= 0; --k) {
      g += lam * (-dt * u[k + 1] * f);
      lam *= f;
    }
    return std::abs(g);
  }

  if (family == ModelFamily::space_fractional) {
    // Small-grid surrogate: the spectral step is already diagonal per mode.
    const SpaceFractionalParams p{params(0), params(1)};
    GridSpec2D g2 = with_dtau(grid, dt);
    std::vector<HiddenField> traj{HiddenField{diagnostic_field(g2), 0}};
    for (int k = 0; k < n; ++k) traj.push_back(sfrac_step_forward(traj.back(), p, g2));
    Eigen::VectorXd lam = traj[n].values.array() - target;
    double gs = 0.0, ga = 0.0;
    for (int k = n - 1; k >= 0; --k) {
      const SfracStepGradients back = sfrac_step_backward(lam, traj[k + 1], traj[k], p, g2);
      gs += back.grad_s;
      ga += back.grad_a;
      lam = back.grad_u;
    }
    return std::hypot(gs, ga);
  }

  // Time-fractional scalar surrogate with the L1 scheme.
  const double alpha = params(0);
  const double lambda = params(1);
  const double c = std::tgamma(2.0 - alpha) * std::pow(dt, alpha);
  const double dc = c * (std::log(dt) - digamma(2.0 - alpha));
  const double denom = 1.0 + c * lambda;
  const CaputoWeights w = caputo_weights(alpha, n);
  const double e = 1.0 - alpha;
  auto dG = [&](int m) -> double {
    const double lead = -std::log(m + 1.0) * std::pow(m + 1.0, e);
    return m > 0 ? lead + std::log(static_cast<double>(m)) * std::pow(static_cast<double>(m), e)
                 : lead;
  };
  std::vector<double> u(n + 1);
  u[0] = 1.0;
  for (int m = 1; m <= n; ++m) {
    // Step m consumes u^0..u^{m-1}.
    const int nh = m - 1;
    double rhs = w.G(nh) * u[0];
    for (int k = 1; k <= nh; ++k) rhs += (w.G(nh - k) - w.G(nh - k + 1)) * u[k];
    u[m] = rhs / denom;
  }
  std::vector<double> adj(n + 1, 0.0);
  adj[n] = u[n] - target;
  double g_lambda = 0.0, g_alpha = 0.0;
  for (int m = n; m >= 1; --m) {
    const double lm = adj[m];
    if (lm == 0.0) continue;
    const int nh = m - 1;
    const double x = lm / denom;  // transpose solve of the 1x1 system
    adj[0] += w.G(nh) * x;
    for (int k = 1; k <= nh; ++k) adj[k] += (w.G(nh - k) - w.G(nh - k + 1)) * x;
    g_lambda += -x * c * u[m];
    double dr = dG(nh) * u[0];
    for (int k = 1; k <= nh; ++k) dr += (dG(nh - k) - dG(nh - k + 1)) * u[k];
    g_alpha += x * (dr - dc * lambda * u[m]);
  }
  return std::hypot(g_alpha, g_lambda);
}

}  // namespace

StabilityReport stability_report(ModelFamily family, const Eigen::VectorXd& params,
                                 const GridSpec2D& grid, const std::vector<double>& dt_list) {
  if (dt_list.empty()) throw std::invalid_argument("stability_report: empty dt list");
  for (size_t i = 0; i < dt_list.size(); ++i) {
    if (!(dt_list[i] > 0.0)) throw std::invalid_argument("stability_report: dt must be positive");
    if (i > 0 && !(dt_list[i] < dt_list[i - 1])) {
      throw std::invalid_argument("stability_report: dt list must be decreasing");
    }
  }
  grid.validate();

  const double alpha_for_rows = family == ModelFamily::time_fractional ? params(0) : 1.0;
  double max_row_sum = 0.0;
  for (int i = 1; i <= 50; ++i) max_row_sum = std::max(max_row_sum, caputo_row_sum(alpha_for_rows, i));

  StabilityReport rep;
  rep.family = family;
  const int jac_steps = 30;
  for (double dt : dt_list) {
    StabilityRow row;
    row.dt = dt;
    row.rho = scheme_rho(family, params, with_dtau(grid, dt), dt);
    row.max_caputo_row_sum = max_row_sum;
    row.max_param_jacobian_norm = max_param_jacobian_norm(family, params, grid, dt, jac_steps);
    row.assumption4_ratio = row.max_param_jacobian_norm / std::max(1.0 - row.rho, 1e-300);
    row.surrogate_grad_norm = surrogate_gradient_norm(family, params, grid, dt);
    rep.rows.push_back(row);
  }

  Eigen::VectorXd dts(rep.rows.size()), one_minus_rho(rep.rows.size()), jac(rep.rows.size());
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    dts(i) = rep.rows[i].dt;
    one_minus_rho(i) = 1.0 - rep.rows[i].rho;
    jac(i) = rep.rows[i].max_param_jacobian_norm;
  }
  rep.rho_fit_exponent = fit_loglog_slope(dts, one_minus_rho);
  rep.jacobian_fit_exponent = fit_loglog_slope(dts, jac);

  bool rows_ok = true, rho_ok = true, jac_ok = true;
  double ratio_min = std::numeric_limits<double>::infinity(), ratio_max = 0.0;
  double g_min = std::numeric_limits<double>::infinity(), g_max = 0.0;
  for (const StabilityRow& row : rep.rows) {
    rho_ok = rho_ok && row.rho < 1.0;
    rows_ok = rows_ok && (row.max_caputo_row_sum < 1.0 ||
                          (row.max_caputo_row_sum == 1.0 && row.rho < 1.0));
    jac_ok = jac_ok && std::isfinite(row.max_param_jacobian_norm);
    ratio_min = std::min(ratio_min, row.assumption4_ratio);
    ratio_max = std::max(ratio_max, row.assumption4_ratio);
    g_min = std::min(g_min, row.surrogate_grad_norm);
    g_max = std::max(g_max, row.surrogate_grad_norm);
  }
  rep.assumption1_pass = rows_ok;
  rep.assumption2_pass = rho_ok;
  rep.assumption3_pass = jac_ok && rep.jacobian_fit_exponent > 0.0;
  rep.assumption4_pass = ratio_min > 0.0 && ratio_max <= 10.0 * ratio_min;
  rep.gradient_bounded_pass = g_min > 0.0 && g_max <= 2.0 * g_min;
  return rep;
}

}  // namespace adjointlab
