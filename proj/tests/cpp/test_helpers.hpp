#pragma once

#include <random>

#include "chns/adjoint.hpp"
#include "chns/forward.hpp"
#include "chns/scenario.hpp"

namespace chns::testing {

// Small two-phase scenario that exercises every coupling yet runs in
// fractions of a second: coarse mesh, wide interface, a few steps.
inline ScenarioData tiny_scenario(int steps = 3, double aV = 0.5, double aB = 0.5) {
  ScenarioData s;
  s.name = "tiny";
  s.materials.rho1 = 100.0;
  s.materials.rho2 = 10.0;
  s.materials.eta1 = 1.0;
  s.materials.eta2 = 0.1;
  s.sigma = 1.0;
  s.eps = 0.15;
  s.mobility = s.eps / 500.0;
  s.energy = FreeEnergy::relaxed_double_obstacle(1e4);
  s.K = Vec2(0.0, -0.981);
  s.tau0 = 0.01;
  s.T = steps * s.tau0;
  s.domain = Rect{0, 0, 1, 1};
  s.mesh_nx = 8;
  s.mesh_ny = 8;
  s.fixed_mesh = true;
  s.weights.alpha = 1e-4;
  s.weights.aI = 1.0 - aV - aB;
  s.weights.aV = aV;
  s.weights.aB = aB;
  s.phi0 = PhaseProfile{PhaseProfile::Kind::Circle, 0.0, Vec2(0.5, 0.55), 0.22, 0.5, +1.0};
  s.phi_d = PhaseProfile{PhaseProfile::Kind::Circle, 0.0, Vec2(0.5, 0.45), 0.22, 0.5, +1.0};

  // two tangential bumps per side wall, one volume bump pair
  auto wall = [&](BoundaryMarker m, double x0) {
    for (int i = 0; i < 2; ++i) {
      BumpAnsatz b;
      b.center = Vec2(x0, 0.3 + 0.4 * i);
      b.width = Vec2(0.25, 0.25);
      b.component = 1;
      b.placement = m;
      s.ansatz.boundary.push_back(b);
    }
  };
  wall(BoundaryMarker::Left, 0.0);
  wall(BoundaryMarker::Right, 1.0);
  for (int i = 0; i < 2; ++i) {
    BumpAnsatz b;
    b.center = Vec2(0.35 + 0.3 * i, 0.5);
    b.width = Vec2(0.25, 0.25);
    b.component = i;
    b.placement = BoundaryMarker::Interior;
    s.ansatz.volume.push_back(b);
  }
  return s;
}

inline double tracking_J(const Trajectory& traj, const ScalarField& phi_d,
                         const ScenarioData& scn, const Control& u) {
  const FieldState& fin = traj.states.back();
  ScalarField phid = (&phi_d.space->mesh() == fin.mesh.get())
                         ? phi_d
                         : interpolate(phi_d, fin.sspace);
  const SpMat M = assemble_mass_p1(*fin.mesh);
  const Eigen::VectorXd d = fin.phi.x - phid.x;
  return 0.5 * d.dot(M * d) + control_cost(u, scn.weights, scn.eps);
}

} // namespace chns::testing
