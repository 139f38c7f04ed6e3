#pragma once

#include "chns/forward.hpp"

namespace chns {

// Multipliers of one time level. p_v pairs with the momentum equation (zero
// boundary trace), p_p with the continuity equation, p_phi with the phase
// transport equation and p_mu with the chemical-potential equation.
struct AdjointState {
  VectorField p_v;
  ScalarField p_p, p_phi, p_mu;
  double gauge = 0.0;
  int step = 0;
};

// Raw directional-derivative rows of the reduced objective: pairing g with a
// control perturbation gives dJ[du] without any extra time weights.
struct GradientU {
  ScalarField g_I;       // H1 Riesz representative on the control mesh
  Eigen::MatrixXd g_V;   // per-step rows
  Eigen::MatrixXd g_B;
  Eigen::VectorXd g_I_raw; // assembled dual vector before the Riesz solve
};

struct AdjointResult {
  std::vector<AdjointState> states;           // index m-1 holds level m
  std::vector<Eigen::VectorXd> boundary_sens; // dL/dv_b^m, full v length
};

// Backward sweep: for m = M..1 solve the transpose of the forward step
// Jacobian with the cross-step couplings to levels m+1 and m+2 on the
// right-hand side and the tracking source at m = M.
AdjointResult adjoint_sweep(const Trajectory& traj, const ScalarField& phi_d,
                            const ScenarioData& scn);

// g_V^m = alpha tau aV u_V^m + ((f_l, p_v^m))_l
Eigen::MatrixXd gradient_uV(const Trajectory& traj, const AdjointResult& adj,
                            const ScenarioData& scn);
// g_B^m = alpha tau aB u_B^m + F_h, the discrete normal derivative realized
// by pairing the unconstrained adjoint momentum rows with the channel lifts.
Eigen::MatrixXd gradient_uB(const Trajectory& traj, const AdjointResult& adj,
                            const ScenarioData& scn);
// H1 Riesz representative of D_{u_I} J on the control mesh.
GradientU gradient_uI(const Trajectory& traj, const AdjointResult& adj, const ScenarioData& scn,
                      const Control& u);

// Convenience: full gradient for the active control families.
GradientU reduced_gradient(const Trajectory& traj, const ScalarField& phi_d,
                           const ScenarioData& scn, const Control& u);

// directional derivative <g, du> using the raw rows
double gradient_pairing(const GradientU& g, const Control& du);

} // namespace chns
