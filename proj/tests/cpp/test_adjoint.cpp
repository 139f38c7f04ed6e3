#include <cmath>
#include <random>

#include "chns/adjoint.hpp"
#include "chns/forward.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace chns;
using chns::testing::tiny_scenario;
using chns::testing::tracking_J;

namespace {

ScalarField target_field(const ScenarioData& s, const Trajectory& traj) {
  return make_profile_field(s.phi_d, s.eps, traj.states.back().sspace);
}

} // namespace

TEST_CASE("adjoint: zero terminal residual gives identically zero multipliers") {
  ScenarioData s = tiny_scenario(3, 0.5, 0.5);
  Control u = Control::zero(s.T, s.steps(), 2, 4);
  Trajectory traj = simulate(u, s);
  // phi_d := realized final state -> terminal source vanishes
  ScalarField phid = traj.states.back().phi;
  AdjointResult adj = adjoint_sweep(traj, phid, s);
  for (const auto& st : adj.states) {
    CHECK(st.p_v.x.lpNorm<Eigen::Infinity>() < 1e-13);
    CHECK(st.p_phi.x.lpNorm<Eigen::Infinity>() < 1e-13);
    CHECK(st.p_mu.x.lpNorm<Eigen::Infinity>() < 1e-13);
  }
}

TEST_CASE("adjoint: sweep is linear in the terminal residual") {
  ScenarioData s = tiny_scenario(3, 0.5, 0.5);
  Control u = Control::zero(s.T, s.steps(), 2, 4);
  u.u_B.setConstant(0.05);
  Trajectory traj = simulate(u, s);
  ScalarField phid = target_field(s, traj);

  AdjointResult a1 = adjoint_sweep(traj, phid, s);
  // scale the terminal residual by two: phi_d' = 2 phi_d - phi^M
  ScalarField phid2 = phid;
  phid2.x = 2.0 * phid.x - traj.states.back().phi.x;
  AdjointResult a2 = adjoint_sweep(traj, phid2, s);
  for (size_t m = 0; m < a1.states.size(); ++m) {
    CHECK((a2.states[m].p_v.x - 2.0 * a1.states[m].p_v.x).lpNorm<Eigen::Infinity>() <=
          1e-10 * (1.0 + a1.states[m].p_v.x.lpNorm<Eigen::Infinity>()));
    CHECK((a2.states[m].p_phi.x - 2.0 * a1.states[m].p_phi.x).lpNorm<Eigen::Infinity>() <=
          1e-10 * (1.0 + a1.states[m].p_phi.x.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("adjoint: p_v boundary trace is zero") {
  ScenarioData s = tiny_scenario(3, 0.5, 0.5);
  Control u = Control::zero(s.T, s.steps(), 2, 4);
  u.u_B.setConstant(0.1);
  u.u_V.setConstant(-0.1);
  Trajectory traj = simulate(u, s);
  AdjointResult adj = adjoint_sweep(traj, target_field(s, traj), s);
  for (const auto& st : adj.states)
    for (int dof : st.p_v.space->boundary_dofs()) CHECK(st.p_v.x[dof] == 0.0);
}

TEST_CASE("adjoint: pure Tikhonov direction when the adjoint vanishes") {
  ScenarioData s = tiny_scenario(2, 0.5, 0.5);
  Control u = Control::zero(s.T, s.steps(), 2, 4);
  u.u_V.setConstant(0.3);
  Trajectory traj = simulate(u, s);
  ScalarField phid = traj.states.back().phi; // zero adjoint
  AdjointResult adj = adjoint_sweep(traj, phid, s);
  Eigen::MatrixXd gV = gradient_uV(traj, adj, s);
  for (int m = 0; m < traj.M(); ++m)
    for (int l = 0; l < gV.cols(); ++l)
      CHECK(gV(m, l) ==
            doctest::Approx(s.weights.alpha * traj.tau[m] * s.weights.aV * 0.3).epsilon(1e-10));
  Eigen::MatrixXd gB = gradient_uB(traj, adj, s);
  CHECK(gB.lpNorm<Eigen::Infinity>() < 1e-12); // u_B = 0 and adjoint = 0
}

TEST_CASE("adjoint: duality against central finite differences (u_V and u_B)") {
  ScenarioData s = tiny_scenario(3, 0.5, 0.5);
  Control u = Control::zero(s.T, s.steps(), 2, 4);
  // generic base point
  u.u_V << 0.2, -0.1, 0.05, 0.3, -0.2, 0.1;
  u.u_B.setConstant(0.05);
  u.u_B(1, 2) = -0.2;

  Trajectory traj = simulate(u, s);
  ScalarField phid = target_field(s, traj);
  GradientU g = reduced_gradient(traj, phid, s, u);

  std::mt19937 rng(17);
  std::normal_distribution<double> dist;
  auto J_of = [&](const Control& uu) {
    Trajectory t = simulate(uu, s);
    return tracking_J(t, phid, s, uu);
  };

  for (int trial = 0; trial < 3; ++trial) {
    Control du = u.clone_shape_zero();
    for (int i = 0; i < du.u_V.rows(); ++i)
      for (int j = 0; j < du.u_V.cols(); ++j) du.u_V(i, j) = dist(rng);
    for (int i = 0; i < du.u_B.rows(); ++i)
      for (int j = 0; j < du.u_B.cols(); ++j) du.u_B(i, j) = dist(rng);

    const double dd_adj = gradient_pairing(g, du);
    double best = 1e300;
    for (double h : {1e-3, 1e-4, 1e-5}) {
      Control up = u, um = u;
      up.u_V += h * du.u_V;
      up.u_B += h * du.u_B;
      um.u_V -= h * du.u_V;
      um.u_B -= h * du.u_B;
      const double fd = (J_of(up) - J_of(um)) / (2.0 * h);
      best = std::min(best, std::abs(fd - dd_adj) / std::max(std::abs(fd), 1e-14));
    }
    CHECK(best <= 1e-4);
  }
}

TEST_CASE("adjoint: duality for the initial-value control") {
  ScenarioData s = tiny_scenario(3, 0.0, 0.0);
  s.weights = ControlWeights{0.05, 1.0, 0.0, 0.0};
  s.ansatz = AnsatzSet{};
  s.uI_mean = 0.0;

  auto cache = make_base_cache(s);
  Control u = Control::zero(s.T, s.steps(), 0, 0, cache->sspace);
  // interior-feasible base point: |u| <= 0.6, zero mean by symmetry
  for (int i = 0; i < u.u_I.x.size(); ++i) {
    const Vec2 p = cache->mesh->vertex(i);
    u.u_I.x[i] = 0.5 * std::sin(2 * M_PI * p.x()) * std::cos(M_PI * p.y());
  }

  Trajectory traj = simulate(u, s);
  ScalarField phid = target_field(s, traj);
  GradientU g = reduced_gradient(traj, phid, s, u);

  std::mt19937 rng(23);
  std::normal_distribution<double> dist;
  auto J_of = [&](const Control& uu) {
    Trajectory t = simulate(uu, s);
    return tracking_J(t, phid, s, uu);
  };

  for (int trial = 0; trial < 2; ++trial) {
    Control du = u.clone_shape_zero();
    for (int i = 0; i < du.u_I.x.size(); ++i) du.u_I.x[i] = dist(rng);
    du.u_I.x.array() -= du.u_I.x.mean(); // feasibility-preserving direction
    du.u_I.x *= 0.5 / du.u_I.x.lpNorm<Eigen::Infinity>();

    const double dd_adj = gradient_pairing(g, du);
    double best = 1e300;
    for (double h : {1e-3, 1e-4, 1e-5}) {
      Control up = u, um = u;
      up.u_I.x += h * du.u_I.x;
      um.u_I.x -= h * du.u_I.x;
      const double fd = (J_of(up) - J_of(um)) / (2.0 * h);
      best = std::min(best, std::abs(fd - dd_adj) / std::max(std::abs(fd), 1e-14));
    }
    CHECK(best <= 1e-3);
  }
}

TEST_CASE("adjoint: H1 Riesz representative pairs like the raw gradient") {
  ScenarioData s = tiny_scenario(2, 0.0, 0.0);
  s.weights = ControlWeights{0.05, 1.0, 0.0, 0.0};
  s.ansatz = AnsatzSet{};
  auto cache = make_base_cache(s);
  Control u = Control::zero(s.T, s.steps(), 0, 0, cache->sspace);
  u.u_I.x.setConstant(0.2);
  u.u_I.x[0] = -0.2; // break symmetry a little

  Trajectory traj = simulate(u, s);
  ScalarField phid = target_field(s, traj);
  GradientU g = reduced_gradient(traj, phid, s, u);

  // <g_riesz, w>_{H1} == <g_raw, w> for arbitrary w
  const Mesh& cm = u.u_I.space->mesh();
  const SpMat K = assemble_stiffness_p1(cm);
  const SpMat M = assemble_mass_p1(cm);
  std::mt19937 rng(3);
  std::normal_distribution<double> dist;
  Eigen::VectorXd w(cm.nv());
  for (int i = 0; i < w.size(); ++i) w[i] = dist(rng);
  const double lhs = g.g_I.x.dot(K * w) + g.g_I.x.dot(M * w);
  const double rhs = g.g_I_raw.dot(w);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}
