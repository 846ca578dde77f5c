#include "adjointlab/dynamics.hpp"

#include "adjointlab/util.hpp"

#include <Eigen/SparseLU>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace adjointlab {

void GridSpec2D::validate() const {
  if (n_per_dim < 3) throw std::invalid_argument("GridSpec2D: n_per_dim must be >= 3");
  if (!(h > 0.0)) throw std::invalid_argument("GridSpec2D: h must be positive");
  if (!(dtau > 0.0)) throw std::invalid_argument("GridSpec2D: dtau must be positive");
  if (domain_length > 0.0) {
    const double ratio = h * n_per_dim / domain_length;
    if (ratio < 0.99 || ratio > 1.01) {
      throw std::invalid_argument("GridSpec2D: h * n_per_dim must match domain_length");
    }
  }
}

namespace {

// Interior index in the row-major ordering of the update scheme: first
// spatial index fastest.
inline int interior_index(int ii, int jj, int nI) { return jj * nI + ii; }

struct OperatorParts {
  SparseMat La;  // dA/da
  SparseMat Bx;  // dA/db1
  SparseMat By;  // dA/db2
};

std::shared_ptr<const OperatorParts> grid_parts(const GridSpec2D& grid) {
  grid.validate();
  static std::mutex mu;
  static std::map<std::pair<int, double>, std::shared_ptr<const OperatorParts>> cache;
  const std::pair<int, double> key{grid.n_per_dim, grid.h};
  std::scoped_lock lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  const int nI = grid.interior_per_dim();
  const int n = nI * nI;
  const double inv_h2 = 1.0 / (grid.h * grid.h);
  const double inv_2h = 1.0 / (2.0 * grid.h);

  std::vector<Eigen::Triplet<double>> la, bx, by;
  la.reserve(5 * n);
  bx.reserve(2 * n);
  by.reserve(2 * n);
  for (int jj = 0; jj < nI; ++jj) {
    for (int ii = 0; ii < nI; ++ii) {
      const int row = interior_index(ii, jj, nI);
      la.emplace_back(row, row, 4.0 * inv_h2);
      if (ii + 1 < nI) {
        la.emplace_back(row, interior_index(ii + 1, jj, nI), -inv_h2);
        bx.emplace_back(row, interior_index(ii + 1, jj, nI), -inv_2h);
      }
      if (ii > 0) {
        la.emplace_back(row, interior_index(ii - 1, jj, nI), -inv_h2);
        bx.emplace_back(row, interior_index(ii - 1, jj, nI), inv_2h);
      }
      if (jj + 1 < nI) {
        la.emplace_back(row, interior_index(ii, jj + 1, nI), -inv_h2);
        by.emplace_back(row, interior_index(ii, jj + 1, nI), -inv_2h);
      }
      if (jj > 0) {
        la.emplace_back(row, interior_index(ii, jj - 1, nI), -inv_h2);
        by.emplace_back(row, interior_index(ii, jj - 1, nI), inv_2h);
      }
    }
  }
  auto parts = std::make_shared<OperatorParts>();
  parts->La.resize(n, n);
  parts->Bx.resize(n, n);
  parts->By.resize(n, n);
  parts->La.setFromTriplets(la.begin(), la.end());
  parts->Bx.setFromTriplets(bx.begin(), bx.end());
  parts->By.setFromTriplets(by.begin(), by.end());
  cache.emplace(key, parts);
  return parts;
}

struct ImplicitSystem {
  SparseMat system;  // I + coef * A
  Eigen::SparseLU<SparseMat> lu;
};

// Factorizations are cached per (grid, params, coefficient) and reused by the
// transpose solve; a parameter change selects a different entry.
std::shared_ptr<ImplicitSystem> cached_system(const GridSpec2D& grid, double a, double b1, double b2,
                                              double coef) {
  using Key = std::tuple<int, double, double, double, double, double>;
  static std::mutex mu;
  static std::map<Key, std::shared_ptr<ImplicitSystem>> cache;
  const Key key{grid.n_per_dim, grid.h, coef, a, b1, b2};
  std::scoped_lock lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  if (cache.size() > 64) cache.clear();

  auto parts = grid_parts(grid);
  SparseMat A = a * parts->La + b1 * parts->Bx + b2 * parts->By;
  SparseMat sys(A.rows(), A.cols());
  sys.setIdentity();
  sys += coef * A;
  auto entry = std::make_shared<ImplicitSystem>();
  entry->system = std::move(sys);
  entry->lu.compute(entry->system);
  if (entry->lu.info() != Eigen::Success) {
    throw std::runtime_error("implicit solve: factorization failed (near-singular system)");
  }
  cache.emplace(key, entry);
  return entry;
}

void check_residual(const SparseMat& system, const Eigen::VectorXd& x, const Eigen::VectorXd& rhs,
                    const char* what) {
  const double res = (system * x - rhs).norm();
  if (res > 1e-12 * rhs.norm() + 1e-300) {
    throw std::runtime_error(std::string(what) + ": solver residual " + std::to_string(res) +
                             " exceeds tolerance (near-singular system)");
  }
}

void check_field(const HiddenField& u, const GridSpec2D& grid, const char* what) {
  if (u.values.size() != grid.unknowns()) {
    throw std::invalid_argument(std::string(what) + ": field size " + std::to_string(u.values.size()) +
                                " does not match grid unknowns " + std::to_string(grid.unknowns()));
  }
}

// ---- spectral helpers (periodic real-FFT lattice of the interior grid) ----

Eigen::MatrixXcd fft2(const Eigen::MatrixXd& in) {
  const Eigen::Index n = in.rows(), m = in.cols();
  Eigen::FFT<double> fft;
  Eigen::MatrixXcd tmp(n, m), out(n, m);
  Eigen::VectorXcd buf_in(n), buf_out(n);
  for (Eigen::Index c = 0; c < m; ++c) {
    buf_in = in.col(c).cast<std::complex<double>>();
    fft.fwd(buf_out, buf_in);
    tmp.col(c) = buf_out;
  }
  Eigen::VectorXcd row_in(m), row_out(m);
  for (Eigen::Index r = 0; r < n; ++r) {
    row_in = tmp.row(r).transpose();
    fft.fwd(row_out, row_in);
    out.row(r) = row_out.transpose();
  }
  return out;
}

Eigen::MatrixXd ifft2_real(const Eigen::MatrixXcd& in, const char* what) {
  const Eigen::Index n = in.rows(), m = in.cols();
  Eigen::FFT<double> fft;
  Eigen::MatrixXcd tmp(n, m), full(n, m);
  Eigen::VectorXcd row_in(m), row_out(m);
  for (Eigen::Index r = 0; r < n; ++r) {
    row_in = in.row(r).transpose();
    fft.inv(row_out, row_in);
    tmp.row(r) = row_out.transpose();
  }
  Eigen::VectorXcd buf_in(n), buf_out(n);
  for (Eigen::Index c = 0; c < m; ++c) {
    buf_in = tmp.col(c);
    fft.inv(buf_out, buf_in);
    full.col(c) = buf_out;
  }
  const double real_norm = full.real().norm();
  const double imag_norm = full.imag().norm();
  if (imag_norm > 1e-12 * std::max(real_norm, 1.0)) {
    throw std::runtime_error(std::string(what) + ": imaginary residue " + std::to_string(imag_norm) +
                             " too large");
  }
  return full.real();
}

Eigen::VectorXd signed_frequencies(int n, double h) {
  Eigen::VectorXd xi(n);
  for (int k = 0; k < n; ++k) {
    const int ks = (k <= n / 2) ? k : k - n;
    xi(k) = 2.0 * M_PI * ks / (n * h);
  }
  return xi;
}

void validate_sfrac(const SpaceFractionalParams& p) {
  if (!(p.s > 0.0 && p.s <= 1.0)) {
    throw std::invalid_argument("SpaceFractionalParams: s must lie in (0, 1]");
  }
  if (p.a < 0.0) throw std::invalid_argument("SpaceFractionalParams: a must be >= 0");
}

}  // namespace

SparseMat diffusion_part(const GridSpec2D& grid) { return grid_parts(grid)->La; }
SparseMat advection_x_part(const GridSpec2D& grid) { return grid_parts(grid)->Bx; }
SparseMat advection_y_part(const GridSpec2D& grid) { return grid_parts(grid)->By; }

SparseMat assemble_operator(const GridSpec2D& grid, const AdvectionDiffusionParams& params) {
  if (params.a < 0.0) throw std::invalid_argument("assemble_operator: a must be >= 0");
  auto parts = grid_parts(grid);
  SparseMat A = params.a * parts->La + params.b1 * parts->Bx + params.b2 * parts->By;
  return A;
}

HiddenField ad_step_forward(const HiddenField& u, const AdvectionDiffusionParams& params,
                            const GridSpec2D& grid) {
  check_field(u, grid, "ad_step_forward");
  if (params.a < 0.0) throw std::invalid_argument("ad_step_forward: a must be >= 0");
  auto sys = cached_system(grid, params.a, params.b1, params.b2, grid.dtau);
  Eigen::VectorXd next = sys->lu.solve(u.values);
  check_residual(sys->system, next, u.values, "ad_step_forward");
  return HiddenField{std::move(next), u.time_index + 1};
}

AdStepGradients ad_step_backward(const Eigen::VectorXd& upstream, const HiddenField& u_next,
                                 const HiddenField& u, const AdvectionDiffusionParams& params,
                                 const GridSpec2D& grid) {
  check_field(u_next, grid, "ad_step_backward");
  check_field(u, grid, "ad_step_backward");
  auto sys = cached_system(grid, params.a, params.b1, params.b2, grid.dtau);
  Eigen::VectorXd x = sys->lu.transpose().solve(upstream);
  check_residual(SparseMat(sys->system.transpose()), x, upstream, "ad_step_backward");
  auto parts = grid_parts(grid);
  AdStepGradients out;
  out.grad_params(0) = -grid.dtau * x.dot(parts->La * u_next.values);
  out.grad_params(1) = -grid.dtau * x.dot(parts->Bx * u_next.values);
  out.grad_params(2) = -grid.dtau * x.dot(parts->By * u_next.values);
  out.grad_u = std::move(x);
  return out;
}

CaputoWeights caputo_weights(double alpha, int n_steps) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("caputo_weights: alpha must lie in (0, 1)");
  }
  if (n_steps < 1) throw std::invalid_argument("caputo_weights: n_steps must be >= 1");
  CaputoWeights w;
  w.alpha = alpha;
  w.G.resize(n_steps + 1);
  const double e = 1.0 - alpha;
  for (int m = 0; m <= n_steps; ++m) {
    w.G(m) = std::pow(m + 1.0, e) - std::pow(static_cast<double>(m), e);
  }
  return w;
}

double caputo_row_sum(double alpha, int i) {
  if (i < 1) throw std::invalid_argument("caputo_row_sum: i must be >= 1");
  const double e = 1.0 - alpha;
  return 1.0 + std::pow(i - 1.0, e) - std::pow(i + 1.0, e);
}

Eigen::VectorXd tfrac_update(const SparseMat& op, const std::vector<Eigen::VectorXd>& history,
                             double alpha, double dtau) {
  if (history.empty()) throw std::invalid_argument("tfrac_update: empty history");
  const int n = static_cast<int>(history.size()) - 1;
  const CaputoWeights w = caputo_weights(alpha, std::max(n, 1));
  Eigen::VectorXd rhs = w.G(n) * history[0];
  for (int k = 1; k <= n; ++k) rhs += (w.G(n - k) - w.G(n - k + 1)) * history[k];
  const double c = std::tgamma(2.0 - alpha) * std::pow(dtau, alpha);
  SparseMat sys(op.rows(), op.cols());
  sys.setIdentity();
  sys += c * op;
  Eigen::SparseLU<SparseMat> lu(sys);
  if (lu.info() != Eigen::Success) throw std::runtime_error("tfrac_update: factorization failed");
  Eigen::VectorXd x = lu.solve(rhs);
  check_residual(sys, x, rhs, "tfrac_update");
  return x;
}

HiddenField tfrac_step_forward(const std::vector<HiddenField>& history,
                               const TimeFractionalParams& params, const GridSpec2D& grid) {
  if (history.empty()) throw std::invalid_argument("tfrac_step_forward: empty history");
  for (const auto& u : history) check_field(u, grid, "tfrac_step_forward");
  if (params.a < 0.0) throw std::invalid_argument("tfrac_step_forward: a must be >= 0");
  const int n = static_cast<int>(history.size()) - 1;
  const CaputoWeights w = caputo_weights(params.alpha, std::max(n, 1));
  Eigen::VectorXd rhs = w.G(n) * history[0].values;
  for (int k = 1; k <= n; ++k) rhs += (w.G(n - k) - w.G(n - k + 1)) * history[k].values;
  const double c = std::tgamma(2.0 - params.alpha) * std::pow(grid.dtau, params.alpha);
  auto sys = cached_system(grid, params.a, 0.0, 0.0, c);
  Eigen::VectorXd next = sys->lu.solve(rhs);
  check_residual(sys->system, next, rhs, "tfrac_step_forward");
  return HiddenField{std::move(next), history.back().time_index + 1};
}

TfracStepGradients tfrac_step_backward(const Eigen::VectorXd& upstream, const HiddenField& u_next,
                                       const std::vector<HiddenField>& history,
                                       const TimeFractionalParams& params, const GridSpec2D& grid) {
  if (history.empty()) throw std::invalid_argument("tfrac_step_backward: empty history");
  check_field(u_next, grid, "tfrac_step_backward");
  const int n = static_cast<int>(history.size()) - 1;
  const double alpha = params.alpha;
  const CaputoWeights w = caputo_weights(alpha, std::max(n, 1));
  const double c = std::tgamma(2.0 - alpha) * std::pow(grid.dtau, alpha);
  auto sys = cached_system(grid, params.a, 0.0, 0.0, c);
  Eigen::VectorXd x = sys->lu.transpose().solve(upstream);
  check_residual(SparseMat(sys->system.transpose()), x, upstream, "tfrac_step_backward");

  TfracStepGradients out;
  out.grad_history.resize(history.size());
  out.grad_history[0] = w.G(n) * x;
  for (int k = 1; k <= n; ++k) out.grad_history[k] = (w.G(n - k) - w.G(n - k + 1)) * x;

  auto parts = grid_parts(grid);
  const Eigen::VectorXd La_u = parts->La * u_next.values;
  out.grad_a = -c * x.dot(La_u);

  // d/dalpha of both the Caputo weights and the Gamma(2-alpha)*dtau^alpha
  // prefactor; the m = 0 log term is zero by continuity.
  const double e = 1.0 - alpha;
  auto dG = [&](int m) -> double {
    const double lead = -std::log(m + 1.0) * std::pow(m + 1.0, e);
    return m > 0 ? lead + std::log(static_cast<double>(m)) * std::pow(static_cast<double>(m), e) : lead;
  };
  Eigen::VectorXd dr = dG(n) * history[0].values;
  for (int k = 1; k <= n; ++k) dr += (dG(n - k) - dG(n - k + 1)) * history[k].values;
  const double dc = c * (std::log(grid.dtau) - digamma(2.0 - alpha));
  out.grad_alpha = x.dot(dr) - dc * params.a * x.dot(La_u);
  return out;
}

SpectralMultiplier spectral_multiplier(const GridSpec2D& grid, const SpaceFractionalParams& params) {
  grid.validate();
  validate_sfrac(params);
  const int nI = grid.interior_per_dim();
  const Eigen::VectorXd xi = signed_frequencies(nI, grid.h);
  SpectralMultiplier sm;
  sm.m.resize(nI, nI);
  sm.dm_ds.resize(nI, nI);
  sm.dm_da.resize(nI, nI);
  for (int r = 0; r < nI; ++r) {
    for (int c = 0; c < nI; ++c) {
      const double xi2 = xi(r) * xi(r) + xi(c) * xi(c);
      if (xi2 == 0.0) {
        sm.m(r, c) = 1.0;
        sm.dm_ds(r, c) = 0.0;
        sm.dm_da(r, c) = 0.0;
        continue;
      }
      const double pw = std::pow(xi2, params.s);
      const double denom = 1.0 + grid.dtau * params.a * pw;
      const double mult = 1.0 / denom;
      sm.m(r, c) = mult;
      sm.dm_ds(r, c) = -grid.dtau * params.a * pw * std::log(xi2) * mult * mult;
      sm.dm_da(r, c) = -grid.dtau * pw * mult * mult;
    }
  }
  return sm;
}

HiddenField sfrac_step_forward(const HiddenField& u, const SpaceFractionalParams& params,
                               const GridSpec2D& grid) {
  check_field(u, grid, "sfrac_step_forward");
  const int nI = grid.interior_per_dim();
  const SpectralMultiplier sm = spectral_multiplier(grid, params);
  const Eigen::Map<const Eigen::MatrixXd> field(u.values.data(), nI, nI);
  Eigen::MatrixXcd hat = fft2(field);
  hat.array() *= sm.m.array();
  const Eigen::MatrixXd next = ifft2_real(hat, "sfrac_step_forward");
  HiddenField out;
  out.values = Eigen::Map<const Eigen::VectorXd>(next.data(), next.size());
  out.time_index = u.time_index + 1;
  return out;
}

SfracStepGradients sfrac_step_backward(const Eigen::VectorXd& upstream, const HiddenField& u_next,
                                       const HiddenField& u, const SpaceFractionalParams& params,
                                       const GridSpec2D& grid) {
  check_field(u, grid, "sfrac_step_backward");
  (void)u_next;
  const int nI = grid.interior_per_dim();
  const SpectralMultiplier sm = spectral_multiplier(grid, params);

  const Eigen::Map<const Eigen::MatrixXd> g(upstream.data(), nI, nI);
  Eigen::MatrixXcd g_hat = fft2(g);
  g_hat.array() *= sm.m.array();
  const Eigen::MatrixXd gu = ifft2_real(g_hat, "sfrac_step_backward");

  const Eigen::Map<const Eigen::MatrixXd> field(u.values.data(), nI, nI);
  const Eigen::MatrixXcd u_hat = fft2(field);
  Eigen::MatrixXcd tmp = u_hat;
  tmp.array() *= sm.dm_ds.array();
  const Eigen::MatrixXd vs = ifft2_real(tmp, "sfrac_step_backward");
  tmp = u_hat;
  tmp.array() *= sm.dm_da.array();
  const Eigen::MatrixXd va = ifft2_real(tmp, "sfrac_step_backward");

  SfracStepGradients out;
  out.grad_u = Eigen::Map<const Eigen::VectorXd>(gu.data(), gu.size());
  out.grad_s = upstream.dot(Eigen::Map<const Eigen::VectorXd>(vs.data(), vs.size()));
  out.grad_a = upstream.dot(Eigen::Map<const Eigen::VectorXd>(va.data(), va.size()));
  return out;
}

SfracStepSensitivity sfrac_step_param_sensitivity(const HiddenField& u,
                                                  const SpaceFractionalParams& params,
                                                  const GridSpec2D& grid) {
  check_field(u, grid, "sfrac_step_param_sensitivity");
  const int nI = grid.interior_per_dim();
  const SpectralMultiplier sm = spectral_multiplier(grid, params);
  const Eigen::Map<const Eigen::MatrixXd> field(u.values.data(), nI, nI);
  const Eigen::MatrixXcd u_hat = fft2(field);
  Eigen::MatrixXcd tmp = u_hat;
  tmp.array() *= sm.dm_ds.array();
  const Eigen::MatrixXd vs = ifft2_real(tmp, "sfrac_step_param_sensitivity");
  tmp = u_hat;
  tmp.array() *= sm.dm_da.array();
  const Eigen::MatrixXd va = ifft2_real(tmp, "sfrac_step_param_sensitivity");
  SfracStepSensitivity out;
  out.du_ds = Eigen::Map<const Eigen::VectorXd>(vs.data(), vs.size());
  out.du_da = Eigen::Map<const Eigen::VectorXd>(va.data(), va.size());
  return out;
}

CustomOp make_ad_step_op(const GridSpec2D& grid) {
  grid.validate();
  CustomOp op;
  op.name = "ad_step";
  op.forward = [grid](const CustomOp::Inputs& inputs, std::any&) -> Tensor {
    if (inputs.size() != 2) throw std::invalid_argument("ad_step: expects (u, params)");
    if (inputs[1]->size() != 3) throw std::invalid_argument("ad_step: params must be [a, b1, b2]");
    const AdvectionDiffusionParams p{(*inputs[1])[0], (*inputs[1])[1], (*inputs[1])[2]};
    HiddenField u{inputs[0]->flat(), 0};
    return Tensor(inputs[0]->dims(), ad_step_forward(u, p, grid).values);
  };
  op.backward = [grid](const Tensor& upstream, const std::any&, const CustomOp::Inputs& inputs,
                       const Tensor& output) -> std::vector<Tensor> {
    const AdvectionDiffusionParams p{(*inputs[1])[0], (*inputs[1])[1], (*inputs[1])[2]};
    HiddenField u{inputs[0]->flat(), 0};
    HiddenField u_next{output.flat(), 1};
    AdStepGradients g = ad_step_backward(upstream.flat(), u_next, u, p, grid);
    return {Tensor(inputs[0]->dims(), std::move(g.grad_u)),
            Tensor(inputs[1]->dims(), g.grad_params)};
  };
  return op;
}

CustomOp make_tfrac_step_op(const GridSpec2D& grid) {
  grid.validate();
  CustomOp op;
  op.name = "tfrac_step";
  op.forward = [grid](const CustomOp::Inputs& inputs, std::any&) -> Tensor {
    if (inputs.size() < 2) throw std::invalid_argument("tfrac_step: expects (u^0..u^n, params)");
    const Tensor& pt = *inputs.back();
    if (pt.size() != 2) throw std::invalid_argument("tfrac_step: params must be [alpha, a]");
    const TimeFractionalParams p{pt[0], pt[1]};
    std::vector<HiddenField> history;
    for (size_t k = 0; k + 1 < inputs.size(); ++k) {
      history.push_back(HiddenField{inputs[k]->flat(), static_cast<int>(k)});
    }
    return Tensor(inputs[0]->dims(), tfrac_step_forward(history, p, grid).values);
  };
  op.backward = [grid](const Tensor& upstream, const std::any&, const CustomOp::Inputs& inputs,
                       const Tensor& output) -> std::vector<Tensor> {
    const Tensor& pt = *inputs.back();
    const TimeFractionalParams p{pt[0], pt[1]};
    std::vector<HiddenField> history;
    for (size_t k = 0; k + 1 < inputs.size(); ++k) {
      history.push_back(HiddenField{inputs[k]->flat(), static_cast<int>(k)});
    }
    HiddenField u_next{output.flat(), static_cast<int>(history.size())};
    TfracStepGradients g = tfrac_step_backward(upstream.flat(), u_next, history, p, grid);
    std::vector<Tensor> out;
    for (size_t k = 0; k < g.grad_history.size(); ++k) {
      out.push_back(Tensor(inputs[k]->dims(), std::move(g.grad_history[k])));
    }
    Tensor gp(pt.dims());
    gp[0] = g.grad_alpha;
    gp[1] = g.grad_a;
    out.push_back(std::move(gp));
    return out;
  };
  return op;
}

CustomOp make_sfrac_step_op(const GridSpec2D& grid) {
  grid.validate();
  CustomOp op;
  op.name = "sfrac_step";
  op.forward = [grid](const CustomOp::Inputs& inputs, std::any&) -> Tensor {
    if (inputs.size() != 2) throw std::invalid_argument("sfrac_step: expects (u, params)");
    if (inputs[1]->size() != 2) throw std::invalid_argument("sfrac_step: params must be [s, a]");
    const SpaceFractionalParams p{(*inputs[1])[0], (*inputs[1])[1]};
    HiddenField u{inputs[0]->flat(), 0};
    return Tensor(inputs[0]->dims(), sfrac_step_forward(u, p, grid).values);
  };
  op.backward = [grid](const Tensor& upstream, const std::any&, const CustomOp::Inputs& inputs,
                       const Tensor& output) -> std::vector<Tensor> {
    const SpaceFractionalParams p{(*inputs[1])[0], (*inputs[1])[1]};
    HiddenField u{inputs[0]->flat(), 0};
    HiddenField u_next{output.flat(), 1};
    SfracStepGradients g = sfrac_step_backward(upstream.flat(), u_next, u, p, grid);
    Tensor gp(inputs[1]->dims());
    gp[0] = g.grad_s;
    gp[1] = g.grad_a;
    return {Tensor(inputs[0]->dims(), std::move(g.grad_u)), std::move(gp)};
  };
  return op;
}

std::vector<NodeId> record_hidden_rollout(TapeGraph& graph, ModelFamily family,
                                          const GridSpec2D& grid, NodeId m0, NodeId params,
                                          int n_steps, int record_every) {
  if (n_steps < 0) throw std::invalid_argument("record_hidden_rollout: n_steps < 0");
  if (n_steps == 0) return {};
  if (record_every < 1 || n_steps % record_every != 0) {
    throw std::invalid_argument("record_hidden_rollout: record_every must divide n_steps");
  }

  std::vector<NodeId> snapshots;
  if (family == ModelFamily::time_fractional) {
    if (!graph.registry().find("tfrac_step")) graph.registry().register_op(make_tfrac_step_op(grid));
    std::vector<NodeId> history{m0};
    for (int t = 0; t < n_steps; ++t) {
      std::vector<NodeId> inputs = history;
      inputs.push_back(params);
      const NodeId next = graph.record("tfrac_step", inputs);
      history.push_back(next);
      if ((t + 1) % record_every == 0) snapshots.push_back(next);
    }
    return snapshots;
  }

  const char* op_name = family == ModelFamily::advection_diffusion ? "ad_step" : "sfrac_step";
  if (!graph.registry().find(op_name)) {
    graph.registry().register_op(family == ModelFamily::advection_diffusion
                                     ? make_ad_step_op(grid)
                                     : make_sfrac_step_op(grid));
  }
  ScanSpec spec;
  spec.step_op = graph.registry().find(op_name);
  spec.n_steps = record_every;
  spec.carry_shape = {grid.unknowns()};
  NodeId carry = m0;
  for (int w = 0; w < n_steps / record_every; ++w) {
    carry = graph.record_scan(spec, carry, {params});
    snapshots.push_back(carry);
  }
  return snapshots;
}

std::vector<HiddenField> simulate_hidden(const HiddenField& m0, ModelFamily family,
                                         const Eigen::VectorXd& params, const GridSpec2D& grid,
                                         int n_steps, int record_every) {
  if (n_steps == 0) return {};
  TapeGraph graph;
  const NodeId m0_node = graph.placeholder({grid.unknowns()});
  const NodeId param_node = graph.placeholder({params.size()});
  const std::vector<NodeId> snaps =
      record_hidden_rollout(graph, family, grid, m0_node, param_node, n_steps, record_every);
  auto values = graph.forward_eval(
      {{m0_node, Tensor::from_vector(m0.values)}, {param_node, Tensor::from_vector(params)}});
  std::vector<HiddenField> out;
  for (size_t i = 0; i < snaps.size(); ++i) {
    out.push_back(HiddenField{values.at(snaps[i]).flat(),
                              m0.time_index + static_cast<int>(i + 1) * record_every});
  }
  return out;
}

}  // namespace adjointlab
