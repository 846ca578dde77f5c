#include "adjointlab/coupling.hpp"

#include "adjointlab/inverse.hpp"
#include "adjointlab/util.hpp"
#include "adjointlab/verify.hpp"

#include <doctest.h>

#include <cmath>

using namespace adjointlab;

namespace {

// Mini two-scale problem: 12x12 hidden grid, 48x48 wave grid, two sources.
InverseProblem mini_problem(ModelFamily family, int n_obs = 3) {
  InverseProblem p;
  p.family = family;
  p.hidden_grid = {12, 3.0, 0.01, 36.0};
  p.schedule = {n_obs, 3, 0.01};
  p.wave_grid = {48, 48, 30.0, 0.003, 160, 10};
  const int row = p.wave_grid.npml + 5;
  p.survey.sources = {{row, 18}, {row, 30}};
  for (int k = 0; k < 8; ++k) p.survey.receivers.push_back({row + 2, 13 + k * 3});
  p.wavelet = ricker(8.0, 0.12, p.wave_grid.dt, p.wave_grid.nt);
  p.rock = {3000.0, 1.0};
  p.m0 = HiddenField{initial_blocks_field(p.hidden_grid, 80.0), 0};
  p.threads = 1;
  if (family == ModelFamily::advection_diffusion) {
    p.true_params = (Eigen::VectorXd(3) << 10.0, 0.1, -0.2).finished();
  } else if (family == ModelFamily::time_fractional) {
    p.true_params = (Eigen::VectorXd(2) << 0.8, 10.0).finished();
  } else {
    p.true_params = (Eigen::VectorXd(2) << 0.6, 10.0).finished();
  }
  p.init_params = 0.5 * p.true_params;
  if (family != ModelFamily::advection_diffusion) p.init_params(0) = 0.5;
  p.bounds = default_bounds(family);
  p.seed = 91;
  return p;
}

}  // namespace

TEST_CASE("upscale_bilinear") {
  SUBCASE("constant field stays constant") {
    const Eigen::MatrixXd coarse = Eigen::MatrixXd::Constant(5, 7, 3.25);
    const Eigen::MatrixXd fine = upscale_bilinear(coarse, 17, 23);
    CHECK((fine.array() - 3.25).abs().maxCoeff() < 1e-14);
  }

  SUBCASE("corner values are preserved exactly") {
    Eigen::MatrixXd coarse = CounterRng(3).normal_vector(0, 30).reshaped(5, 6);
    const Eigen::MatrixXd fine = upscale_bilinear(coarse, 19, 25);
    CHECK(fine(0, 0) == coarse(0, 0));
    CHECK(fine(18, 0) == coarse(4, 0));
    CHECK(fine(0, 24) == coarse(0, 5));
    CHECK(fine(18, 24) == coarse(4, 5));
  }

  SUBCASE("downscaling is rejected") {
    const Eigen::MatrixXd coarse = Eigen::MatrixXd::Zero(8, 8);
    CHECK_THROWS(upscale_bilinear(coarse, 4, 12));
  }

  SUBCASE("adjoint dot-product identity across random shapes") {
    for (uint64_t seed = 0; seed < 8; ++seed) {
      const CounterRng rng(40 + seed);
      const int sr = 2 + static_cast<int>(seed % 5), sc = 2 + static_cast<int>(seed / 2);
      const int tr = sr + 1 + static_cast<int>(10 * rng.uniform(0));
      const int tc = sc + 1 + static_cast<int>(10 * rng.uniform(1));
      const Eigen::MatrixXd x = rng.normal_vector(10, sr * sc).reshaped(sr, sc);
      const Eigen::MatrixXd y = rng.normal_vector(1000, tr * tc).reshaped(tr, tc);
      const Eigen::MatrixXd Ux = upscale_bilinear(x, tr, tc);
      const Eigen::MatrixXd Uty = upscale_bilinear_adjoint(y, sr, sc);
      const double lhs = (y.array() * Ux.array()).sum();
      const double rhs = (Uty.array() * x.array()).sum();
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(std::abs(lhs), 1.0));
    }
  }
}

TEST_CASE("velocity_to_bulk") {
  const RockPhysicsMap map{3500.0, 1.0};

  SUBCASE("baseline value") {
    const Eigen::MatrixXd K = velocity_to_bulk(Eigen::MatrixXd::Zero(4, 4), map);
    CHECK((K.array() - 1.225e7).abs().maxCoeff() < 1e-3);
  }

  SUBCASE("boundary of validity") {
    const double eps = 2.5;
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(2, 2, -map.m_base + eps);
    const Eigen::MatrixXd K = velocity_to_bulk(m, map);
    CHECK(K(0, 0) == doctest::Approx(eps * eps * map.rho));
    m(1, 1) = -map.m_base;
    CHECK_THROWS(velocity_to_bulk(m, map));
  }

  SUBCASE("backward matches finite differences") {
    const CustomOp op = make_velocity_to_bulk_op(map);
    const Eigen::VectorXd m = 100.0 * CounterRng(6).normal_vector(0, 12);
    const Eigen::VectorXd r = CounterRng(7).normal_vector(0, 12);
    auto F = [&](const Eigen::VectorXd& v) {
      std::any ctx;
      const Tensor in = Tensor::from_vector(v);
      return r.dot(op.forward({&in}, ctx).flat());
    };
    const Tensor in = Tensor::from_vector(m);
    std::any ctx;
    const Tensor out = op.forward({&in}, ctx);
    const auto grads = op.backward(Tensor::from_vector(r), ctx, {&in}, out);
    const Eigen::VectorXd fd = fd_gradient(F, m, 1e-4);
    CHECK((grads[0].flat() - fd).norm() < 1e-8 * fd.norm());
  }
}

TEST_CASE("embed op pads with zeros and crops on the way back") {
  WaveGridSpec g{30, 34, 30.0, 0.003, 10, 8};
  const CustomOp op = make_embed_op(g);
  const int pz = g.nz - 2 * g.npml, px = g.nx - 2 * g.npml;
  const Tensor in = Tensor::from_matrix(CounterRng(8).normal_vector(0, pz * px).reshaped(pz, px));
  std::any ctx;
  const Tensor out = op.forward({&in}, ctx);
  const Eigen::MatrixXd full = out.as_matrix();
  CHECK(full.rows() == g.nz);
  CHECK(full.block(g.npml, g.npml, pz, px) == in.as_matrix());
  CHECK(full.topRows(g.npml).norm() == 0.0);
  CHECK(full.rightCols(g.npml).norm() == 0.0);

  const Tensor up = Tensor::from_matrix(
      CounterRng(9).normal_vector(0, g.nz * g.nx).reshaped(g.nz, g.nx));
  const auto grads = op.backward(up, ctx, {&in}, out);
  CHECK(grads[0].as_matrix() == up.as_matrix().block(g.npml, g.npml, pz, px));
}

TEST_CASE("assembled objective") {
  InverseProblem p = mini_problem(ModelFamily::advection_diffusion);
  p.observed = generate_synthetic(p);
  AssembledObjective obj = assemble_objective(p.objective_spec());

  SUBCASE("zero residual at the true parameters") {
    const auto [loss, grad] = obj.value_and_gradient(p.true_params);
    CHECK(loss <= 1e-18);
    CHECK(grad.norm() <= 1e-9);
  }

  SUBCASE("loss equals the sum of independently computed phase misfits") {
    const Eigen::VectorXd w = (Eigen::VectorXd(3) << 6.0, 0.05, -0.1).finished();
    const double loss = obj.value(w);

    std::vector<HiddenField> snaps{p.m0};
    const auto rolled = simulate_hidden(p.m0, p.family, w, p.hidden_grid,
                                        p.schedule.total_steps(), p.schedule.substeps_per_window);
    snaps.insert(snaps.end(), rolled.begin(), rolled.end());

    const int nI = p.hidden_grid.interior_per_dim();
    const int pz = p.wave_grid.nz - 2 * p.wave_grid.npml;
    const int px = p.wave_grid.nx - 2 * p.wave_grid.npml;
    double total = 0.0;
    for (int phase = 0; phase < p.schedule.n_obs; ++phase) {
      const Tensor coarse({nI, nI}, snaps[phase].values);
      Eigen::MatrixXd m_full = Eigen::MatrixXd::Zero(p.wave_grid.nz, p.wave_grid.nx);
      m_full.block(p.wave_grid.npml, p.wave_grid.npml, pz, px) =
          upscale_bilinear(coarse.as_matrix(), pz, px);
      const Eigen::MatrixXd K = velocity_to_bulk(m_full, p.rock);
      total += wave_phase_misfit(K, p.rock.rho, p.survey, p.wavelet, p.wave_grid,
                                 p.observed[phase], 1);
      CHECK(obj.phase_misfit(phase) >= 0.0);
    }
    CHECK(std::abs(loss - total) <= 1e-12 * std::max(total, 1.0));
  }

  SUBCASE("structural counts: one misfit node per phase") {
    CHECK(obj.phase_misfit_nodes().size() == static_cast<size_t>(p.schedule.n_obs));
  }

  SUBCASE("parameter gradient matches finite differences") {
    const Eigen::VectorXd w = (Eigen::VectorXd(3) << 6.0, 0.05, -0.1).finished();
    const auto [loss, grad] = obj.value_and_gradient(w);
    (void)loss;
    auto F = [&](const Eigen::VectorXd& v) { return obj.value(v); };
    const Eigen::VectorXd fd = fd_gradient(F, w, 1e-5);
    CHECK((grad - fd).norm() < 1e-4 * fd.norm());
  }
}

TEST_CASE("end-to-end Taylor test per model family") {
  for (ModelFamily family : {ModelFamily::advection_diffusion, ModelFamily::time_fractional,
                             ModelFamily::space_fractional}) {
    InverseProblem p = mini_problem(family, 2);
    p.observed = generate_synthetic(p);
    AssembledObjective obj = assemble_objective(p.objective_spec());

    ScalarFunctional F;
    F.value = [&](const Eigen::VectorXd& w) { return obj.value(w); };
    F.gradient = [&](const Eigen::VectorXd& w) { return obj.value_and_gradient(w).second; };

    Eigen::VectorXd w0 = p.init_params;
    Eigen::VectorXd dir(w0.size());
    if (family == ModelFamily::advection_diffusion) {
      dir << 1.0, 0.02, -0.02;
    } else {
      dir << 0.05, 1.0;
    }
    const Eigen::VectorXd gammas = (Eigen::VectorXd(4) << 1e-1, 1e-2, 1e-3, 1e-4).finished();
    const TaylorTestReport rep = taylor_remainder_test(F, w0, dir, gammas);
    CHECK(!rep.degenerate);
    CHECK(rep.second_order_slope >= 1.9);
  }
}

TEST_CASE("gradient with respect to the initial configuration is available") {
  InverseProblem p = mini_problem(ModelFamily::advection_diffusion, 2);
  p.observed = generate_synthetic(p);
  AssembledObjective obj = assemble_objective(p.objective_spec());
  const Eigen::VectorXd w = 0.8 * p.true_params;
  const auto [loss, gm0] = obj.value_and_m0_gradient(w);
  CHECK(loss > 0.0);
  CHECK(gm0.size() == p.hidden_grid.unknowns());
  CHECK(gm0.norm() > 0.0);

  // Directional FD check through both the dynamics and the first phase.
  const Eigen::VectorXd dir = CounterRng(17).normal_vector(0, gm0.size());
  auto Fm0 = [&](double eps) {
    ObjectiveSpec spec = p.objective_spec();
    spec.m0.values += eps * dir;
    AssembledObjective o2 = assemble_objective(spec);
    return o2.value(w);
  };
  const double fd = (Fm0(1e-3) - Fm0(-1e-3)) / 2e-3;
  CHECK(std::abs(gm0.dot(dir) - fd) < 1e-4 * std::abs(fd));
}
