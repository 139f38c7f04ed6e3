#pragma once

#include <Eigen/Dense>
#include <vector>

#include "chns/fem.hpp"
#include "chns/mesh.hpp"

namespace chns {

// Values sampled at quadrature points, cell-major: index c*nq + q.
using QpScalar = std::vector<double>;
using QpVec = std::vector<Vec2>;
using QpMat = std::vector<Eigen::Matrix2d>;

// Reference-element basis data for one quadrature rule.
struct BasisCache {
  explicit BasisCache(const QuadratureRule& rule);
  QuadratureRule rule;
  int nq;
  // P1 values [q][i]
  std::vector<std::array<double, 3>> p1;
  // P2 values [q][i], local nodes [v0,v1,v2,m01,m12,m20]
  std::vector<std::array<double, 6>> p2;
  // P2 gradients in barycentric form: dN_i = sum_k coeff[q][i][k] * grad(lambda_k)
  std::vector<std::array<std::array<double, 3>, 6>> p2_dl;
};

// Per-cell geometry: barycentric gradients and area.
struct CellGeom {
  Vec2 dl[3];
  double area;
  Vec2 x[3]; // vertex coordinates
};
CellGeom cell_geom(const Mesh& mesh, int t);

// Physical coordinates of quadrature point q in cell geometry g.
inline Vec2 qp_coord(const CellGeom& g, const QuadratureRule& rule, int q) {
  const auto& l = rule.points[q];
  return l[0] * g.x[0] + l[1] * g.x[1] + l[2] * g.x[2];
}

// ---- field sampling ---------------------------------------------------

// P1 field values at all quadrature points.
QpScalar sample_p1(const ScalarField& f, const BasisCache& bc);
// P1 gradients (cellwise constant), one entry per cell.
QpVec gradients_p1(const ScalarField& f);
// P2 vector values at quadrature points.
QpVec sample_p2(const VectorField& f, const BasisCache& bc);
// P2 vector gradients at quadrature points (rows: component, cols: d/dx_j).
QpMat sample_grad_p2(const VectorField& f, const BasisCache& bc);
// Pointwise map of a sampled scalar.
QpScalar map_qp(const QpScalar& in, const std::function<double(double)>& f);

// ---- matrix kernels ----------------------------------------------------
// Every kernel accumulates triplets with the given row/column offsets.
// Tests use them directly; the time stepper composes them into the step
// Jacobian. Weight arrays may be empty, meaning weight one.

struct Sink {
  std::vector<Triplet>* trips;
  int ro = 0, co = 0;
  void add(int r, int c, double v) const {
    if (v != 0.0) trips->emplace_back(ro + r, co + c, v);
  }
};

// (w phi_j, psi_i), P1 x P1
void mass_p1(const Mesh& mesh, const BasisCache& bc, const QpScalar& w, Sink s);
// (w grad phi_j . grad psi_i), P1 x P1; w may be empty
void stiffness_p1(const Mesh& mesh, const BasisCache& bc, const QpScalar& w, Sink s);
// (w dv_j . w_i), P2 x P2
void mass_p2(const Mesh& mesh, const BasisCache& bc, const QpScalar& w, Sink s);
// (2 eta D dv_j : D w_i), P2 x P2
void viscous_p2(const Mesh& mesh, const BasisCache& bc, const QpScalar& eta, Sink s);
// sign * (div dv_j, q_i): rows P1, cols P2
void divergence(const Mesh& mesh, const BasisCache& bc, double sign, Sink s);
// sign * (dp_j, div w_i): rows P2, cols P1
void pressure_gradient(const Mesh& mesh, const BasisCache& bc, double sign, Sink s);
// sign * (dmu_j gphi . w_i): rows P2, cols P1 (the mu grad(phi) coupling)
void scalar_times_vec(const Mesh& mesh, const BasisCache& bc, const QpVec& gphi, double sign,
                      Sink s);
// (dv_j . gphi, psi_i): rows P1, cols P2 (transport of a frozen phase field)
void transport_p2(const Mesh& mesh, const BasisCache& bc, const QpVec& gphi, Sink s);
// a(b, dv_j, w_i) with frozen transport field b: rows P2, cols P2
void trilinear_second(const Mesh& mesh, const BasisCache& bc, const QpVec& b, Sink s);
// a(c * dv_j, V, w_i): derivative of the trilinear form in its first slot
// against a P2 direction; V given by values/gradients. rows P2, cols P2
void trilinear_first_p2(const Mesh& mesh, const BasisCache& bc, const QpScalar& c, const QpVec& V,
                        const QpMat& gV, Sink s);
// a(c dphi_j u, V, w_i): first-slot derivative against a P1 direction scaled
// by vector field u. rows P2, cols P1
void trilinear_first_p1(const Mesh& mesh, const BasisCache& bc, const QpScalar& c, const QpVec& u,
                        const QpVec& V, const QpMat& gV, Sink s);
// a(coef grad dmu_j, V, w_i): rows P2, cols P1 (diffuse-flux sensitivity)
void trilinear_first_gradp1(const Mesh& mesh, const BasisCache& bc, double coef, const QpVec& V,
                            const QpMat& gV, Sink s);
// (c dphi_j V . w_i): rows P2, cols P1
void p1_times_vec(const Mesh& mesh, const BasisCache& bc, const QpScalar& c, const QpVec& V,
                  Sink s);
// (2 c dphi_j D V : D w_i): rows P2, cols P1 (viscosity sensitivity)
void viscous_dphi(const Mesh& mesh, const BasisCache& bc, const QpScalar& c, const QpMat& gV,
                  Sink s);
// sign * (m grad dphi_j . w_i): rows P2, cols P1 (capillary sensitivity)
void grad_p1_times_scalar(const Mesh& mesh, const BasisCache& bc, const QpScalar& m, double sign,
                          Sink s);
// (V . grad dphi_j, psi_i): rows P1, cols P1 (transport sensitivity)
void transport_gradp1(const Mesh& mesh, const BasisCache& bc, const QpVec& V, Sink s);

// ---- load vectors -------------------------------------------------------

// (F, w_i) into out[off..], P2 test functions
void load_p2(const Mesh& mesh, const BasisCache& bc, const QpVec& F, Eigen::VectorXd& out,
             int off);
// (f, psi_i) into out[off..], P1 test functions
void load_p1(const Mesh& mesh, const BasisCache& bc, const QpScalar& f, Eigen::VectorXd& out,
             int off);

// ---- scalar integrals ----------------------------------------------------

double integrate(const Mesh& mesh, const BasisCache& bc, const QpScalar& f);

// Assembled matrices used standalone in tests and small solves.
SpMat assemble_mass_p1(const Mesh& mesh, int order = 2);
SpMat assemble_stiffness_p1(const Mesh& mesh, int order = 2);

} // namespace chns
