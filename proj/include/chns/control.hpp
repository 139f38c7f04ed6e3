#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "chns/fem.hpp"
#include "chns/mesh.hpp"

namespace chns {

// Squared-cosine bump: component `component` carries
// cos((pi/2)|xi^{-1}(x-m)|)^2 inside the unit ellipse of the width matrix,
// zero outside; the other component is zero.
struct BumpAnsatz {
  Vec2 center = Vec2::Zero();
  Vec2 width = Vec2::Ones(); // diagonal of the width matrix
  int component = 0;
  BoundaryMarker placement = BoundaryMarker::Interior; // Interior = volume force
};

double bump_eval_scalar(const BumpAnsatz& b, const Vec2& x);
Vec2 bump_eval(const BumpAnsatz& b, const Vec2& x);

// Volume and boundary ansatz channels. Boundary channels must be tangential
// to their segment; violations are a configuration error at setup time.
struct AnsatzSet {
  std::vector<BumpAnsatz> volume;
  std::vector<BumpAnsatz> boundary;

  int n_volume() const { return static_cast<int>(volume.size()); }
  int n_boundary() const { return static_cast<int>(boundary.size()); }
  void validate() const;
};

struct ControlWeights {
  double alpha = 1.0; // overall cost weight
  double aI = 0.0, aV = 0.0, aB = 0.0;
  void validate() const; // simplex constraint aI+aV+aB = 1, all >= 0
};

// Control triple: P1 initial phase field on its own control mesh plus
// piecewise-constant-in-time coefficient rows for the volume and boundary
// channels on a uniform sample grid over [0, T].
struct Control {
  ScalarField u_I;        // empty space pointer when initial control inactive
  Eigen::MatrixXd u_V;    // samples x volume channels
  Eigen::MatrixXd u_B;    // samples x boundary channels
  double T = 1.0;
  int samples = 1;

  static Control zero(double T, int samples, int nV, int nB,
                      std::shared_ptr<const FeSpace> uI_space = nullptr);

  // time average over (a, b], exact for the piecewise-constant representation
  Eigen::VectorXd average_V(double a, double b) const;
  Eigen::VectorXd average_B(double a, double b) const;

  // refine the sample grid by an integer factor (rows repeat; exact)
  void resample(int new_samples);

  Control clone_shape_zero() const;
};

// B_V u_V(t): nodal P2 representation of the bump superposition, mainly for
// inspection and output; assembly integrates the bumps directly.
VectorField apply_BV(const AnsatzSet& ansatz, const Eigen::VectorXd& uV_row,
                     std::shared_ptr<const FeSpace> space);

// Per-channel boundary dof vectors Pi^m(g_l) for a mesh; column l is the
// trace-projected lift of channel l (zero net flux, zero interior entries).
Eigen::MatrixXd boundary_channel_lifts(const AnsatzSet& ansatz, const FeSpace& space);

// Pi^m(B_B u_B) for one time sample given precomputed channel lifts.
Eigen::VectorXd apply_BB(const Eigen::MatrixXd& lifts, const Eigen::VectorXd& uB_row);

// weighted inner product on U:
// aI (grad aI, grad bI) + aV (aV,bV)_{L2(0,T)} + aB (aB,bB)_{L2(0,T)}
double inner_U(const Control& a, const Control& b, const ControlWeights& w);
double norm_U(const Control& a, const ControlWeights& w);

// (alpha/2) ( aI * GinzburgLandau(u_I) + aV |u_V|^2 + aB |u_B|^2 )
double control_cost(const Control& u, const ControlWeights& w, double eps);

} // namespace chns
