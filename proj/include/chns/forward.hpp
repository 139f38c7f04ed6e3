#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "chns/assembly.hpp"
#include "chns/control.hpp"
#include "chns/scenario.hpp"

namespace chns {

// One time level of the coupled system.
struct FieldState {
  std::shared_ptr<const Mesh> mesh;
  std::shared_ptr<const FeSpace> vspace; // P2 vector
  std::shared_ptr<const FeSpace> sspace; // P1 scalar
  VectorField v;
  ScalarField p, phi, mu;
  double time = 0.0;
};

struct NewtonReport {
  int iterations = 0;
  std::vector<double> residuals; // residual norm per iteration, incl. initial
  bool converged = false;
};

struct StepReport {
  NewtonReport newton;
  double cfl = 0.0; // max cell CFL of the transporting velocity
  double tau = 0.0;
};

struct Trajectory {
  std::vector<FieldState> states; // [0..M]
  std::vector<double> tau;        // per step, size M
  std::vector<StepReport> reports;
  std::vector<int> halving_steps; // step indices where tau halved
  Eigen::MatrixXd stepV;          // per-step control rows actually applied
  Eigen::MatrixXd stepB;
  Control control; // snapshot of the applied control
  double initial_mass = 0.0;

  int M() const { return static_cast<int>(tau.size()); }
};

// Monolithic step layout [v; p; phi; mu; gauge].
struct StepLayout {
  int nv2 = 0, ns = 0;
  int off_v = 0, off_p = 0, off_phi = 0, off_mu = 0, off_gauge = 0, N = 0;
  static StepLayout of(const Mesh& m);
};

// Per-mesh assembled data reused across steps, line searches and the adjoint
// sweep. Immutable once built apart from the cached LU patterns.
struct MeshCache {
  std::shared_ptr<const Mesh> mesh;
  std::shared_ptr<const FeSpace> vspace, sspace;
  StepLayout layout;
  BasisCache bc2, bc4, bc5;
  SpMat mass_s;           // P1 mass
  Eigen::VectorXd gauge;  // (psi_i, 1)
  std::vector<int> bdofs; // boundary velocity dofs
  std::vector<char> is_bdof;
  Eigen::MatrixXd blifts;               // boundary channel lifts (columns)
  std::vector<Eigen::VectorXd> vloads;  // volume channel load vectors
  std::shared_ptr<LuSolver> forward_lu; // step-system solver (pattern cached)
  std::shared_ptr<LuSolver> adjoint_lu;
  std::shared_ptr<LuSolver> ch_lu;

  MeshCache(std::shared_ptr<const Mesh> m, const ScenarioData& scn);
};

// Everything step assembly needs; lagged fields are already transferred to
// the step mesh (the projection P^m). Current-state pointers are only needed
// for Jacobians at a given iterate.
struct StepRefs {
  const ScenarioData* scn = nullptr;
  MeshCache* cache = nullptr;
  double tau = 0.0;
  bool init = false;

  const VectorField* v_prev = nullptr;    // v^{m-1} (v^0 in the init step)
  const ScalarField* phi_prev = nullptr;  // phi^{m-1} (phi^0)
  const ScalarField* phi_prev2 = nullptr; // phi^{m-2} (two-step only)
  const ScalarField* mu_prev = nullptr;   // mu^{m-1} (two-step only)

  const VectorField* v_cur = nullptr;
  const ScalarField* phi_cur = nullptr;
  const ScalarField* mu_cur = nullptr;

  Eigen::VectorXd bv_load;   // (B_V u_V^m, w)
  Eigen::VectorXd vb_values; // Dirichlet boundary values, full length
};

// Full weak Jacobian dR^m/dx^m at (v_cur, phi_cur, mu_cur); no Dirichlet row
// replacement. The forward Newton factors this matrix with boundary rows
// replaced, the adjoint sweep factors its transpose.
SpMat step_jacobian(const StepRefs& r);

// Weak residual R^m(x) of the two-step system at the monolithic vector x
// (no Dirichlet row replacement); test hook for Jacobian consistency.
Eigen::VectorXd step_residual(const StepRefs& r, const Eigen::VectorXd& x);

// Cross-step Jacobians for the adjoint right-hand side. `r` describes step k
// and the returned matrix is dR^k/dx^{k-1} resp. dR^k/dx^{k-2}, square in
// step k's layout (only v/phi/mu columns are populated). Column spaces refer
// to the transferred fields; compose with transfer matrices off the fixed
// mesh path.
SpMat cross_prev_jacobian(const StepRefs& r);
SpMat cross_prev2_jacobian(const StepRefs& r);
// dR^1/dphi^0: N x ns matrix for the initial-value control gradient.
SpMat init_dphi0_jacobian(const StepRefs& r);
// dR^2/dphi^0 equals cross_prev2_jacobian of the m=2 refs (density lag).

// Generic Newton iteration on R(x) = 0 with a caller-supplied assembly
// callback filling the residual and Jacobian at x.
using NewtonAssembler = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& R, SpMat& J)>;
NewtonReport newton_solve(const NewtonAssembler& assemble, Eigen::VectorXd& x, double tol,
                          int max_iter, LuSolver& lu);

// Initialization step (m = 1): Cahn-Hilliard pair by Newton with the v^0
// transport, then the linear momentum system.
FieldState init_step(const FieldState& state0, const StepRefs& refs, StepReport* report);

// Coupled two-step solve (m > 1) by Newton on the monolithic system.
FieldState two_step(const FieldState& prev, const StepRefs& refs, StepReport* report);

// Full forward run with CFL-triggered step halving.
Trajectory simulate(const Control& control, const ScenarioData& scn);

// Initial state from the scenario (phi0 profile or initial-value control).
FieldState make_initial_state(const ScenarioData& scn, const Control& control,
                              std::shared_ptr<MeshCache> cache);
std::shared_ptr<MeshCache> make_base_cache(const ScenarioData& scn);

// E(v^m, phi^m, phi^{m-1}): kinetic + Ginzburg-Landau with the lagged
// density weight, evaluated with the same quadrature as the W' assembly.
double discrete_energy(const FieldState& state, const ScalarField& phi_prev,
                       const ScenarioData& scn);
double phase_mass(const FieldState& state);
// max over cells of |v| tau / diam(T), |v| taken at the three vertices
double max_cfl(const FieldState& state, double tau);
// max over pressure test functions of |(div v, q)|
double divergence_defect(const FieldState& state);

} // namespace chns
