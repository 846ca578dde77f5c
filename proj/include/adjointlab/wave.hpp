#pragma once

#include <Eigen/Core>

#include <utility>
#include <vector>

namespace adjointlab {

/// Staggered acoustic grid: first index is depth (z), second is distance (x).
struct WaveGridSpec {
  int nz = 0;
  int nx = 0;
  double h = 0.0;   // spacing (m)
  double dt = 0.0;  // time step (s)
  int nt = 0;       // number of steps
  int npml = 0;     // CPML thickness in grid points, on all four sides
  double reflection_coeff = 1e-3;  // CPML design reflection coefficient
  double kappa_max = 2.0;          // CPML stretching at the outer edge

  void validate() const;
  /// CFL bound c_max * dt * sqrt(2) / h <= 1 for the leapfrog update.
  void validate_cfl(double c_max) const;
  bool in_pml(int iz, int ix) const;
};

/// Velocity-perturbation medium; the propagator works on the bulk modulus
/// K = (m + m_base)^2 * rho.
struct MediumModel {
  Eigen::MatrixXd m;     // nz x nx perturbation (m/s)
  double m_base = 0.0;   // baseline velocity (m/s)
  double rho = 1.0;      // density (kg/m^3)

  double max_velocity() const { return m.maxCoeff() + m_base; }
  Eigen::MatrixXd bulk_modulus() const;
  void validate() const;  // m + m_base must stay positive
};

struct SurveyGeometry {
  std::vector<std::pair<int, int>> sources;    // (iz, ix)
  std::vector<std::pair<int, int>> receivers;  // (iz, ix)
  void validate(const WaveGridSpec& grid) const;
};

struct SourceWavelet {
  double f0 = 0.0;   // dominant frequency (Hz)
  double t0 = 0.0;   // delay (s)
  Eigen::VectorXd samples;  // length nt, peak normalized to 1
};

/// Ricker wavelet r(t) = (1 - 2 pi^2 f0^2 (t-t0)^2) exp(-pi^2 f0^2 (t-t0)^2)
/// sampled at t = n*dt.
SourceWavelet ricker(double f0, double t0, double dt, int nt);

/// Per-axis CPML coefficients at integer and staggered (half) positions.
/// In the physical region d = 0, kappa = 1 and the memory update is inert.
struct CpmlAxisProfile {
  Eigen::VectorXd d, kappa, a_shift, b, c;           // integer positions
  Eigen::VectorXd d_h, kappa_h, a_shift_h, b_h, c_h; // half positions
};

struct CPMLProfile {
  CpmlAxisProfile z, x;
  double d0 = 0.0;  // graded damping amplitude at the outer edge
};

/// Damping graded with polynomial degree 2 from 0 to
/// d0 = -(p+1) c_max ln(R) / (2 L_pml); kappa grades linearly 1 -> kappa_max
/// and the frequency shift grades linearly from pi*f0 down to 0 at the outer
/// edge. Memory-update coefficients b = exp(-alpha dt), c = eta (b-1)/alpha.
CPMLProfile build_cpml_profile(const WaveGridSpec& grid, double f0, double reflection_coeff,
                               double c_max, double kappa_max = 2.0);

struct ShotRecord {
  Eigen::MatrixXd traces;  // receivers x nt pressure samples
};

/// Half the squared trace mismatch, summed over receivers and time.
double wave_misfit(const ShotRecord& record, const ShotRecord& observed);

/// Snapshot policy for the adjoint pass: stride 1 stores the pressure field
/// every step; stride k > 1 stores the full state every k steps and
/// recomputes the pressure history window by window.
struct AdjointStorage {
  int snapshot_stride = 1;
};

/// Leapfrog stress-velocity propagation from quiescent initial conditions for
/// one source; pressure is sampled at the receivers after each update. With
/// `p_history` non-null the pressure field after every step is stored
/// (entry 0 is the initial field).
ShotRecord wave_forward(const MediumModel& medium, const SurveyGeometry& geometry,
                        const SourceWavelet& wavelet, const WaveGridSpec& grid, int source_index,
                        std::vector<Eigen::MatrixXd>* p_history = nullptr);

/// Sum of per-source misfits for one survey phase against observed records,
/// evaluated under a parallel map over sources with a deterministic
/// reduction. K is the bulk-modulus field.
double wave_phase_misfit(const Eigen::MatrixXd& K, double rho, const SurveyGeometry& geometry,
                         const SourceWavelet& wavelet, const WaveGridSpec& grid,
                         const std::vector<ShotRecord>& observed, int threads);

/// dJ/dK for one phase: time-reversed residual injection at the receivers,
/// adjoint propagation, and the cross-correlation imaging condition, summed
/// over sources. CPML-region entries are zeroed.
Eigen::MatrixXd wave_phase_bulk_gradient(const Eigen::MatrixXd& K, double rho,
                                         const SurveyGeometry& geometry,
                                         const SourceWavelet& wavelet, const WaveGridSpec& grid,
                                         const std::vector<ShotRecord>& observed,
                                         const AdjointStorage& storage, int threads,
                                         double* misfit_out = nullptr);

/// dJ/dm for the full observed set of one phase: the bulk-modulus gradient
/// chain-ruled through dK/dm = 2 (m + m_base) rho, CPML entries zeroed.
Eigen::MatrixXd wave_gradient(const MediumModel& medium, const SurveyGeometry& geometry,
                              const SourceWavelet& wavelet, const WaveGridSpec& grid,
                              const std::vector<ShotRecord>& observed,
                              const AdjointStorage& storage = {}, int threads = 1,
                              double* misfit_out = nullptr);

}  // namespace adjointlab
