#include "adjointlab/wave.hpp"

#include "adjointlab/util.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace adjointlab {

void WaveGridSpec::validate() const {
  if (nz <= 0 || nx <= 0) throw std::invalid_argument("WaveGridSpec: grid dims must be positive");
  if (!(h > 0.0)) throw std::invalid_argument("WaveGridSpec: h must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("WaveGridSpec: dt must be positive");
  if (nt <= 0) throw std::invalid_argument("WaveGridSpec: nt must be positive");
  if (npml < 1) throw std::invalid_argument("WaveGridSpec: npml must be >= 1");
  if (nz <= 2 * npml || nx <= 2 * npml) {
    throw std::invalid_argument("WaveGridSpec: grid must exceed twice the CPML thickness");
  }
  if (!(reflection_coeff > 0.0 && reflection_coeff < 1.0)) {
    throw std::invalid_argument("WaveGridSpec: reflection_coeff must lie in (0, 1)");
  }
  if (!(kappa_max >= 1.0)) throw std::invalid_argument("WaveGridSpec: kappa_max must be >= 1");
}

void WaveGridSpec::validate_cfl(double c_max) const {
  const double cfl = c_max * dt * std::sqrt(2.0) / h;
  if (cfl > 1.0) {
    throw std::invalid_argument("WaveGridSpec: CFL violation, c_max*dt*sqrt(2)/h = " +
                                std::to_string(cfl) + " > 1");
  }
}

bool WaveGridSpec::in_pml(int iz, int ix) const {
  return iz < npml || iz >= nz - npml || ix < npml || ix >= nx - npml;
}

Eigen::MatrixXd MediumModel::bulk_modulus() const {
  return ((m.array() + m_base).square() * rho).matrix();
}

void MediumModel::validate() const {
  if ((m.array() + m_base <= 0.0).any()) {
    throw std::invalid_argument("MediumModel: m + m_base must be positive everywhere");
  }
  if (!(rho > 0.0)) throw std::invalid_argument("MediumModel: rho must be positive");
}

void SurveyGeometry::validate(const WaveGridSpec& grid) const {
  auto check = [&](const std::pair<int, int>& pos, const char* kind) {
    const auto [iz, ix] = pos;
    if (iz <= grid.npml || iz >= grid.nz - 1 - grid.npml || ix <= grid.npml ||
        ix >= grid.nx - 1 - grid.npml) {
      throw std::invalid_argument(std::string(kind) + " (" + std::to_string(iz) + "," +
                                  std::to_string(ix) + ") not strictly inside the non-PML interior");
    }
  };
  if (sources.empty()) throw std::invalid_argument("SurveyGeometry: no sources");
  if (receivers.empty()) throw std::invalid_argument("SurveyGeometry: no receivers");
  for (const auto& s : sources) check(s, "source");
  for (const auto& r : receivers) check(r, "receiver");
}

SourceWavelet ricker(double f0, double t0, double dt, int nt) {
  if (!(f0 > 0.0)) throw std::invalid_argument("ricker: f0 must be positive");
  SourceWavelet w;
  w.f0 = f0;
  w.t0 = t0;
  w.samples.resize(nt);
  const double pf = M_PI * M_PI * f0 * f0;
  for (int n = 0; n < nt; ++n) {
    const double tau = n * dt - t0;
    w.samples(n) = (1.0 - 2.0 * pf * tau * tau) * std::exp(-pf * tau * tau);
  }
  return w;
}

namespace {

CpmlAxisProfile build_axis(int n, int npml, double dt, double f0, double d0, double kappa_max) {
  CpmlAxisProfile ax;
  ax.d.resize(n);
  ax.kappa.resize(n);
  ax.a_shift.resize(n);
  ax.b.resize(n);
  ax.c.resize(n);
  ax.d_h.resize(n);
  ax.kappa_h.resize(n);
  ax.a_shift_h.resize(n);
  ax.b_h.resize(n);
  ax.c_h.resize(n);

  auto fill = [&](double q, double& d, double& kappa, double& a_shift, double& b, double& c) {
    const double left = (npml - q) / npml;
    const double right = (q - (n - 1 - npml)) / npml;
    const double xn = std::clamp(std::max(left, right), 0.0, 1.0);
    d = d0 * xn * xn;
    kappa = 1.0 + (kappa_max - 1.0) * xn;
    a_shift = M_PI * f0 * (1.0 - xn);
    const double alpha = d / kappa + a_shift;
    const double eta = d / (kappa * kappa);
    b = std::exp(-alpha * dt);
    c = alpha > 0.0 ? eta * (b - 1.0) / alpha : 0.0;
  };

  for (int i = 0; i < n; ++i) {
    fill(static_cast<double>(i), ax.d(i), ax.kappa(i), ax.a_shift(i), ax.b(i), ax.c(i));
    fill(i + 0.5, ax.d_h(i), ax.kappa_h(i), ax.a_shift_h(i), ax.b_h(i), ax.c_h(i));
  }
  return ax;
}

}  // namespace

CPMLProfile build_cpml_profile(const WaveGridSpec& grid, double f0, double reflection_coeff,
                               double c_max, double kappa_max) {
  grid.validate();
  if (!(reflection_coeff > 0.0 && reflection_coeff < 1.0)) {
    throw std::invalid_argument("build_cpml_profile: reflection coefficient must lie in (0, 1)");
  }
  if (!(f0 > 0.0)) throw std::invalid_argument("build_cpml_profile: f0 must be positive");
  if (!(c_max > 0.0)) throw std::invalid_argument("build_cpml_profile: c_max must be positive");
  CPMLProfile prof;
  const double L = grid.npml * grid.h;
  prof.d0 = -3.0 * c_max * std::log(reflection_coeff) / (2.0 * L);  // polynomial degree 2
  prof.z = build_axis(grid.nz, grid.npml, grid.dt, f0, prof.d0, kappa_max);
  prof.x = build_axis(grid.nx, grid.npml, grid.dt, f0, prof.d0, kappa_max);
  return prof;
}

double wave_misfit(const ShotRecord& record, const ShotRecord& observed) {
  if (record.traces.rows() != observed.traces.rows() ||
      record.traces.cols() != observed.traces.cols()) {
    throw std::invalid_argument("wave_misfit: shape mismatch");
  }
  return 0.5 * (record.traces - observed.traces).squaredNorm();
}

namespace {

struct WaveFields {
  Eigen::MatrixXd p, vx, vz;
  Eigen::MatrixXd psi_dvx, psi_dvz;  // memory of d(vx)/dx, d(vz)/dz at p nodes
  Eigen::MatrixXd psi_dpx, psi_dpz;  // memory of dp/dx at vx nodes, dp/dz at vz nodes

  explicit WaveFields(const WaveGridSpec& g)
      : p(Eigen::MatrixXd::Zero(g.nz, g.nx)),
        vx(Eigen::MatrixXd::Zero(g.nz, g.nx)),
        vz(Eigen::MatrixXd::Zero(g.nz, g.nx)),
        psi_dvx(Eigen::MatrixXd::Zero(g.nz, g.nx)),
        psi_dvz(Eigen::MatrixXd::Zero(g.nz, g.nx)),
        psi_dpx(Eigen::MatrixXd::Zero(g.nz, g.nx)),
        psi_dpz(Eigen::MatrixXd::Zero(g.nz, g.nx)) {}
};

// Precomputed per-run constants.
struct StepConstants {
  const WaveGridSpec& grid;
  const CPMLProfile& prof;
  Eigen::MatrixXd dtK;
  Eigen::ArrayXd inv_kz, bz, cz;        // z axis, integer nodes
  Eigen::ArrayXd inv_kzh, bzh, czh;     // z axis, half nodes
  Eigen::ArrayXd inv_kx, inv_kxh;
  double inv_h, dt_rho;

  StepConstants(const Eigen::MatrixXd& K, double rho, const WaveGridSpec& g, const CPMLProfile& pr)
      : grid(g), prof(pr) {
    dtK = g.dt * K;
    inv_kz = pr.z.kappa.array().inverse();
    bz = pr.z.b.array();
    cz = pr.z.c.array();
    inv_kzh = pr.z.kappa_h.array().inverse();
    bzh = pr.z.b_h.array();
    czh = pr.z.c_h.array();
    inv_kx = pr.x.kappa.array().inverse();
    inv_kxh = pr.x.kappa_h.array().inverse();
    inv_h = 1.0 / g.h;
    dt_rho = g.dt / rho;
  }
};

// One leapfrog step: pressure update (with CPML memory refresh and source
// injection), then the staggered velocity updates.
void step_forward(WaveFields& f, const StepConstants& sc, int iz_src, int ix_src, double w_n) {
  const int nz = sc.grid.nz, nx = sc.grid.nx;
  const int m = nz - 1;

  for (int j = 0; j < nx; ++j) {
    Eigen::ArrayXd dvx = f.vx.col(j).array() * sc.inv_h;
    if (j > 0) dvx -= f.vx.col(j - 1).array() * sc.inv_h;
    f.psi_dvx.col(j) = sc.prof.x.b(j) * f.psi_dvx.col(j).array() + sc.prof.x.c(j) * dvx;

    Eigen::ArrayXd dvz(nz);
    dvz(0) = f.vz(0, j) * sc.inv_h;
    dvz.tail(m) = (f.vz.col(j).tail(m).array() - f.vz.col(j).head(m).array()) * sc.inv_h;
    f.psi_dvz.col(j) = sc.bz * f.psi_dvz.col(j).array() + sc.cz * dvz;

    f.p.col(j).array() -= sc.dtK.col(j).array() *
                          (dvx * sc.inv_kx(j) + f.psi_dvx.col(j).array() + dvz * sc.inv_kz +
                           f.psi_dvz.col(j).array());
  }
  f.p(iz_src, ix_src) += sc.dtK(iz_src, ix_src) * w_n;

  for (int j = 0; j + 1 < nx; ++j) {
    const Eigen::ArrayXd dpx = (f.p.col(j + 1).array() - f.p.col(j).array()) * sc.inv_h;
    f.psi_dpx.col(j) = sc.prof.x.b_h(j) * f.psi_dpx.col(j).array() + sc.prof.x.c_h(j) * dpx;
    f.vx.col(j).array() -=
        sc.dt_rho * (dpx * sc.inv_kxh(j) + f.psi_dpx.col(j).array());
  }
  for (int j = 0; j < nx; ++j) {
    const Eigen::ArrayXd dpz =
        (f.p.col(j).tail(m).array() - f.p.col(j).head(m).array()) * sc.inv_h;
    f.psi_dpz.col(j).head(m) =
        sc.bzh.head(m) * f.psi_dpz.col(j).head(m).array() + sc.czh.head(m) * dpz;
    f.vz.col(j).head(m).array() -=
        sc.dt_rho * (dpz * sc.inv_kzh.head(m) + f.psi_dpz.col(j).head(m).array());
  }
}

// Exact transpose of step_forward acting on the adjoint fields. `lp` arrives
// holding the adjoint of the post-update pressure (receiver residuals already
// injected); p_after/p_before feed the imaging condition for dJ/dK.
void step_adjoint(WaveFields& l, const StepConstants& sc, const Eigen::MatrixXd& K,
                  const Eigen::MatrixXd& p_after, const Eigen::MatrixXd& p_before,
                  Eigen::MatrixXd& gK) {
  const int nz = sc.grid.nz, nx = sc.grid.nx;
  const int m = nz - 1;

  // Transposed vz update.
  for (int j = 0; j < nx; ++j) {
    const Eigen::ArrayXd psi_eff =
        l.psi_dpz.col(j).head(m).array() - sc.dt_rho * l.vz.col(j).head(m).array();
    const Eigen::ArrayXd lt =
        -sc.dt_rho * sc.inv_kzh.head(m) * l.vz.col(j).head(m).array() + sc.czh.head(m) * psi_eff;
    l.psi_dpz.col(j).head(m) = sc.bzh.head(m) * psi_eff;
    l.p.col(j).tail(m).array() += lt * sc.inv_h;
    l.p.col(j).head(m).array() -= lt * sc.inv_h;
  }
  // Transposed vx update.
  for (int j = 0; j + 1 < nx; ++j) {
    const Eigen::ArrayXd psi_eff = l.psi_dpx.col(j).array() - sc.dt_rho * l.vx.col(j).array();
    const Eigen::ArrayXd lt =
        -sc.dt_rho * sc.inv_kxh(j) * l.vx.col(j).array() + sc.prof.x.c_h(j) * psi_eff;
    l.psi_dpx.col(j) = sc.prof.x.b_h(j) * psi_eff;
    l.p.col(j + 1).array() += lt * sc.inv_h;
    l.p.col(j).array() -= lt * sc.inv_h;
  }
  // Imaging condition and the transposed pressure update.
  for (int j = 0; j < nx; ++j) {
    gK.col(j).array() += l.p.col(j).array() *
                         (p_after.col(j).array() - p_before.col(j).array()) / K.col(j).array();

    const Eigen::ArrayXd psi_vx_eff =
        l.psi_dvx.col(j).array() - sc.dtK.col(j).array() * l.p.col(j).array();
    const Eigen::ArrayXd lt1 = -sc.dtK.col(j).array() * sc.inv_kx(j) * l.p.col(j).array() +
                               sc.prof.x.c(j) * psi_vx_eff;
    l.psi_dvx.col(j) = sc.prof.x.b(j) * psi_vx_eff;
    l.vx.col(j).array() += lt1 * sc.inv_h;
    if (j > 0) l.vx.col(j - 1).array() -= lt1 * sc.inv_h;

    const Eigen::ArrayXd psi_vz_eff =
        l.psi_dvz.col(j).array() - sc.dtK.col(j).array() * l.p.col(j).array();
    const Eigen::ArrayXd lt2 =
        -sc.dtK.col(j).array() * sc.inv_kz * l.p.col(j).array() + sc.cz * psi_vz_eff;
    l.psi_dvz.col(j) = sc.bz * psi_vz_eff;
    l.vz.col(j).array() += lt2 * sc.inv_h;
    l.vz.col(j).head(m).array() -= lt2.tail(m) * sc.inv_h;
  }
}

void check_finite(const WaveFields& f, int step) {
  if (!f.p.allFinite()) {
    throw std::runtime_error("wave propagation unstable: non-finite pressure at step " +
                             std::to_string(step));
  }
}

CPMLProfile make_profile(const Eigen::MatrixXd& K, double rho, const SourceWavelet& wavelet,
                         const WaveGridSpec& grid) {
  const double c_max = std::sqrt(K.maxCoeff() / rho);
  grid.validate_cfl(c_max);
  return build_cpml_profile(grid, wavelet.f0, grid.reflection_coeff, c_max, grid.kappa_max);
}

// Forward-pass storage for the adjoint: stride 1 keeps the pressure field of
// every step, stride k keeps the full state every k steps for window
// recomputation.
struct ForwardStorage {
  int stride = 1;
  std::vector<Eigen::MatrixXd> p_history;
  std::vector<WaveFields> states;
};

ShotRecord propagate_forward(const Eigen::MatrixXd& K, double rho, const CPMLProfile& prof,
                             const SurveyGeometry& geometry, const SourceWavelet& wavelet,
                             const WaveGridSpec& grid, int source_index,
                             ForwardStorage* storage) {
  const auto [iz_src, ix_src] = geometry.sources.at(source_index);
  const int n_recv = static_cast<int>(geometry.receivers.size());
  StepConstants sc(K, rho, grid, prof);
  WaveFields f(grid);
  ShotRecord rec;
  rec.traces.setZero(n_recv, grid.nt);
  if (storage && storage->stride == 1) {
    storage->p_history.clear();
    storage->p_history.reserve(grid.nt + 1);
    storage->p_history.push_back(f.p);
  }
  for (int n = 0; n < grid.nt; ++n) {
    if (storage && storage->stride > 1 && n % storage->stride == 0) storage->states.push_back(f);
    step_forward(f, sc, iz_src, ix_src, wavelet.samples(n));
    for (int r = 0; r < n_recv; ++r) {
      rec.traces(r, n) = f.p(geometry.receivers[r].first, geometry.receivers[r].second);
    }
    if (storage && storage->stride == 1) storage->p_history.push_back(f.p);
    if (n % 200 == 199) check_finite(f, n);
  }
  check_finite(f, grid.nt);
  return rec;
}

// Adjoint sweep for one shot over the stored forward pass; returns dJ_shot/dK
// (unmasked).
Eigen::MatrixXd propagate_adjoint(const Eigen::MatrixXd& K, double rho, const CPMLProfile& prof,
                                  const SurveyGeometry& geometry, const SourceWavelet& wavelet,
                                  const WaveGridSpec& grid, int source_index,
                                  const Eigen::MatrixXd& residual, ForwardStorage& storage) {
  StepConstants sc(K, rho, grid, prof);
  const int stride = storage.stride;
  const auto [iz_src, ix_src] = geometry.sources.at(source_index);

  WaveFields l(grid);
  Eigen::MatrixXd gK = Eigen::MatrixXd::Zero(grid.nz, grid.nx);
  const int n_recv = static_cast<int>(geometry.receivers.size());

  const int n_windows = stride == 1 ? 1 : static_cast<int>(storage.states.size());
  for (int w = n_windows - 1; w >= 0; --w) {
    int start = 0, end = grid.nt;
    std::vector<Eigen::MatrixXd> window_p;  // p before step `start` .. p after step `end-1`
    if (stride == 1) {
      window_p = std::move(storage.p_history);
    } else {
      start = w * stride;
      end = std::min(start + stride, grid.nt);
      WaveFields f = storage.states[w];
      window_p.reserve(end - start + 1);
      window_p.push_back(f.p);
      for (int n = start; n < end; ++n) {
        step_forward(f, sc, iz_src, ix_src, wavelet.samples(n));
        window_p.push_back(f.p);
      }
    }
    for (int n = end - 1; n >= start; --n) {
      for (int r = 0; r < n_recv; ++r) {
        l.p(geometry.receivers[r].first, geometry.receivers[r].second) += residual(r, n);
      }
      step_adjoint(l, sc, K, window_p[n - start + 1], window_p[n - start], gK);
    }
  }
  return gK;
}

void zero_pml(Eigen::MatrixXd& g, const WaveGridSpec& grid) {
  for (int j = 0; j < grid.nx; ++j) {
    for (int i = 0; i < grid.nz; ++i) {
      if (grid.in_pml(i, j)) g(i, j) = 0.0;
    }
  }
}

void validate_phase_inputs(const Eigen::MatrixXd& K, const SurveyGeometry& geometry,
                           const SourceWavelet& wavelet, const WaveGridSpec& grid,
                           const std::vector<ShotRecord>& observed) {
  grid.validate();
  geometry.validate(grid);
  if (K.rows() != grid.nz || K.cols() != grid.nx) {
    throw std::invalid_argument("wave phase: K shape does not match grid");
  }
  if ((K.array() <= 0.0).any()) throw std::invalid_argument("wave phase: K must be positive");
  if (wavelet.samples.size() != grid.nt) {
    throw std::invalid_argument("wave phase: wavelet length does not match nt");
  }
  if (observed.size() != geometry.sources.size()) {
    throw std::invalid_argument("wave phase: one observed record per source required");
  }
}

}  // namespace

ShotRecord wave_forward(const MediumModel& medium, const SurveyGeometry& geometry,
                        const SourceWavelet& wavelet, const WaveGridSpec& grid, int source_index,
                        std::vector<Eigen::MatrixXd>* p_history) {
  grid.validate();
  medium.validate();
  geometry.validate(grid);
  if (wavelet.samples.size() != grid.nt) {
    throw std::invalid_argument("wave_forward: wavelet length does not match nt");
  }
  const Eigen::MatrixXd K = medium.bulk_modulus();
  const CPMLProfile prof = make_profile(K, medium.rho, wavelet, grid);
  if (p_history == nullptr) {
    return propagate_forward(K, medium.rho, prof, geometry, wavelet, grid, source_index, nullptr);
  }
  ForwardStorage storage;
  const ShotRecord rec =
      propagate_forward(K, medium.rho, prof, geometry, wavelet, grid, source_index, &storage);
  *p_history = std::move(storage.p_history);
  return rec;
}

double wave_phase_misfit(const Eigen::MatrixXd& K, double rho, const SurveyGeometry& geometry,
                         const SourceWavelet& wavelet, const WaveGridSpec& grid,
                         const std::vector<ShotRecord>& observed, int threads) {
  validate_phase_inputs(K, geometry, wavelet, grid, observed);
  const CPMLProfile prof = make_profile(K, rho, wavelet, grid);
  const int n_src = static_cast<int>(geometry.sources.size());
  std::vector<double> misfits(n_src, 0.0);
  parallel_for(n_src, threads, [&](int s) {
    const ShotRecord rec = propagate_forward(K, rho, prof, geometry, wavelet, grid, s, nullptr);
    misfits[s] = wave_misfit(rec, observed[s]);
  });
  double total = 0.0;
  for (double m : misfits) total += m;  // deterministic reduction in source order
  return total;
}

Eigen::MatrixXd wave_phase_bulk_gradient(const Eigen::MatrixXd& K, double rho,
                                         const SurveyGeometry& geometry,
                                         const SourceWavelet& wavelet, const WaveGridSpec& grid,
                                         const std::vector<ShotRecord>& observed,
                                         const AdjointStorage& storage, int threads,
                                         double* misfit_out) {
  validate_phase_inputs(K, geometry, wavelet, grid, observed);
  const CPMLProfile prof = make_profile(K, rho, wavelet, grid);
  const int n_src = static_cast<int>(geometry.sources.size());
  std::vector<Eigen::MatrixXd> grads(n_src);
  std::vector<double> misfits(n_src, 0.0);
  parallel_for(n_src, threads, [&](int s) {
    ForwardStorage shot_storage;
    shot_storage.stride = std::max(storage.snapshot_stride, 1);
    const ShotRecord rec =
        propagate_forward(K, rho, prof, geometry, wavelet, grid, s, &shot_storage);
    const Eigen::MatrixXd residual = rec.traces - observed[s].traces;
    misfits[s] = 0.5 * residual.squaredNorm();
    grads[s] = propagate_adjoint(K, rho, prof, geometry, wavelet, grid, s, residual, shot_storage);
  });
  Eigen::MatrixXd gK = Eigen::MatrixXd::Zero(grid.nz, grid.nx);
  double total = 0.0;
  for (int s = 0; s < n_src; ++s) {
    gK += grads[s];
    total += misfits[s];
  }
  zero_pml(gK, grid);
  if (misfit_out) *misfit_out = total;
  return gK;
}

Eigen::MatrixXd wave_gradient(const MediumModel& medium, const SurveyGeometry& geometry,
                              const SourceWavelet& wavelet, const WaveGridSpec& grid,
                              const std::vector<ShotRecord>& observed, const AdjointStorage& storage,
                              int threads, double* misfit_out) {
  medium.validate();
  const Eigen::MatrixXd K = medium.bulk_modulus();
  const Eigen::MatrixXd gK = wave_phase_bulk_gradient(K, medium.rho, geometry, wavelet, grid,
                                                      observed, storage, threads, misfit_out);
  // Chain rule through dK/dm = 2 (m + m_base) rho; PML entries already zero.
  return (gK.array() * 2.0 * (medium.m.array() + medium.m_base) * medium.rho).matrix();
}

}  // namespace adjointlab
