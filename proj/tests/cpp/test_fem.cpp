#include <cmath>
#include <random>

#include "chns/assembly.hpp"
#include "chns/errors.hpp"
#include "chns/fem.hpp"
#include "doctest.h"

using namespace chns;

namespace {

std::shared_ptr<const Mesh> make_mesh(int nx, int ny, Rect r = Rect{0, 0, 1, 1}) {
  return std::make_shared<Mesh>(build_rect_mesh(nx, ny, r));
}

// assemble sign*(div v, q) as a matrix
SpMat div_matrix(const Mesh& mesh, const FeSpace& v, const FeSpace& q) {
  BasisCache bc(quadrature(4));
  std::vector<Triplet> trips;
  divergence(mesh, bc, 1.0, Sink{&trips, 0, 0});
  SpMat B(q.ndof(), v.ndof());
  B.setFromTriplets(trips.begin(), trips.end());
  return B;
}

} // namespace

TEST_CASE("interpolate: identity, constants, linears") {
  auto coarse = make_mesh(4, 4);
  auto fine = std::make_shared<Mesh>(uniform_refine(*coarse));
  auto sc = FeSpace::p1(coarse);
  auto sf = FeSpace::p1(fine);

  ScalarField f(sc);
  for (int i = 0; i < coarse->nv(); ++i) f.x[i] = 0.7;
  ScalarField same = interpolate(f, sc);
  CHECK((same.x - f.x).norm() == 0.0);
  ScalarField up = interpolate(f, sf);
  for (int i = 0; i < fine->nv(); ++i) CHECK(up.x[i] == doctest::Approx(0.7).epsilon(1e-14));

  // linear field x + 2y reproduced exactly at fine nodes
  ScalarField lin(sc);
  for (int i = 0; i < coarse->nv(); ++i)
    lin.x[i] = coarse->vertex(i).x() + 2.0 * coarse->vertex(i).y();
  ScalarField lup = interpolate(lin, sf);
  for (int i = 0; i < fine->nv(); ++i) {
    const Vec2& p = fine->vertex(i);
    CHECK(lup.x[i] == doctest::Approx(p.x() + 2.0 * p.y()).epsilon(1e-14));
  }

  // the sparse transfer operator agrees with nodal interpolation
  SpMat T = interpolation_matrix(*sc, *sf);
  Eigen::VectorXd via_matrix = T * lin.x;
  CHECK((via_matrix - lup.x).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("trace projection: idempotence and flux constraint") {
  auto mesh = make_mesh(6, 9, Rect{0, 0, 1, 1.5});
  auto v2 = FeSpace::p2vec(mesh);

  // tangential bump on the left wall (no normal component anywhere)
  auto bump = [](const Vec2& x) -> Vec2 {
    if (x.x() > 1e-12) return Vec2::Zero();
    const double d = std::abs(x.y() - 0.7) / 0.3;
    return Vec2(0.0, d < 1.0 ? std::pow(std::cos(M_PI * d / 2.0), 2) : 0.0);
  };
  Eigen::VectorXd proj = trace_project(bump, *v2);
  CHECK(std::abs(boundary_flux(proj, *v2)) < 1e-12);

  // projecting the projection reproduces it (it is already a trace with zero flux)
  auto as_fun = [&](const Vec2& x) -> Vec2 {
    // evaluate proj on the boundary via nodal lookup: x is always a quadrature
    // point of a boundary edge, so locate it on the edge
    VectorField vf(v2);
    vf.x = proj;
    return vf.value_at(x);
  };
  Eigen::VectorXd proj2 = trace_project(as_fun, *v2);
  CHECK((proj2 - proj).lpNorm<Eigen::Infinity>() < 1e-10);

  // an outward normal field has its net flux removed
  auto normal_field = [](const Vec2& x) -> Vec2 {
    if (x.x() < 1e-12) return Vec2(-1, 0);
    if (x.x() > 1 - 1e-12) return Vec2(1, 0);
    if (x.y() < 1e-12) return Vec2(0, -1);
    if (x.y() > 1.5 - 1e-12) return Vec2(0, 1);
    return Vec2::Zero();
  };
  Eigen::VectorXd pn = trace_project(normal_field, *v2);
  CHECK(std::abs(boundary_flux(pn, *v2)) < 1e-11);
}

TEST_CASE("assembled forms: partition of unity, constants, viscous energy") {
  auto mesh = make_mesh(5, 5);
  SpMat M = assemble_mass_p1(*mesh);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh->nv());
  // total mass equals |Omega|
  CHECK(ones.dot(M * ones) == doctest::Approx(1.0).epsilon(1e-13));
  // row sums are the cell-patch areas (all positive)
  Eigen::VectorXd rowsum = M * ones;
  for (int i = 0; i < rowsum.size(); ++i) CHECK(rowsum[i] > 0.0);

  SpMat K = assemble_stiffness_p1(*mesh);
  CHECK((K * ones).lpNorm<Eigen::Infinity>() < 1e-13);

  // symmetric forms produce symmetric blocks
  CHECK((SpMat(M.transpose()) - M).norm() < 1e-13);
  CHECK((SpMat(K.transpose()) - K).norm() < 1e-13);

  // (2 eta Dv : Dv) with eta = 1 and v = (y, 0): Dv = [[0,.5],[.5,0]], energy = |Omega|
  auto v2 = FeSpace::p2vec(mesh);
  VectorField v(v2);
  const int nv = mesh->nv();
  for (int i = 0; i < nv; ++i) v.x[2 * i] = mesh->vertex(i).y();
  for (int e = 0; e < mesh->ne(); ++e) {
    const Edge& ed = mesh->edge(e);
    v.x[2 * (nv + e)] = 0.5 * (mesh->vertex(ed.a).y() + mesh->vertex(ed.b).y());
  }
  BasisCache bc(quadrature(4));
  std::vector<Triplet> trips;
  viscous_p2(*mesh, bc, {}, Sink{&trips, 0, 0});
  SpMat A(v2->ndof(), v2->ndof());
  A.setFromTriplets(trips.begin(), trips.end());
  CHECK(v.x.dot(A * v.x) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("trilinear form: antisymmetry and a hand-evaluated value") {
  auto mesh = make_mesh(4, 4);
  auto v2 = FeSpace::p2vec(mesh);
  BasisCache bc(quadrature(5));

  // random transport field sampled from a P2 field
  std::mt19937 rng(11);
  std::normal_distribution<double> dist;
  VectorField u(v2), w(v2), z(v2);
  for (int i = 0; i < v2->ndof(); ++i) {
    u.x[i] = dist(rng);
    w.x[i] = dist(rng);
    z.x[i] = dist(rng);
  }
  const QpVec uq = sample_p2(u, bc);
  std::vector<Triplet> trips;
  trilinear_second(*mesh, bc, uq, Sink{&trips, 0, 0});
  SpMat A(v2->ndof(), v2->ndof());
  A.setFromTriplets(trips.begin(), trips.end());

  // a(u,w,w) = 0 and a(u,w,z) = -a(u,z,w)
  const double aww = w.x.dot(A * w.x);
  CHECK(std::abs(aww) <= 1e-12 * u.x.norm() * w.x.squaredNorm());
  const double awz = z.x.dot(A * w.x);
  const double azw = w.x.dot(A * z.x);
  CHECK(awz == doctest::Approx(-azw).epsilon(1e-12));

  // u=(1,0), v=(x,0), w=(1,0) on the unit square: a = 1/2 int dx(x) - 0 = 1/2
  VectorField e1(v2), vx(v2);
  const int nv = mesh->nv();
  for (int i = 0; i < nv; ++i) {
    e1.x[2 * i] = 1.0;
    vx.x[2 * i] = mesh->vertex(i).x();
  }
  for (int e = 0; e < mesh->ne(); ++e) {
    const Edge& ed = mesh->edge(e);
    e1.x[2 * (nv + e)] = 1.0;
    vx.x[2 * (nv + e)] = 0.5 * (mesh->vertex(ed.a).x() + mesh->vertex(ed.b).x());
  }
  const QpVec e1q = sample_p2(e1, bc);
  std::vector<Triplet> trips2;
  trilinear_second(*mesh, bc, e1q, Sink{&trips2, 0, 0});
  SpMat A2(v2->ndof(), v2->ndof());
  A2.setFromTriplets(trips2.begin(), trips2.end());
  CHECK(e1.x.dot(A2 * vx.x) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("solve_sparse: identity and failure reporting") {
  SparseSystem sys;
  sys.A = SpMat(4, 4);
  sys.A.setIdentity();
  sys.b = Eigen::VectorXd::LinSpaced(4, 1, 4);
  Eigen::VectorXd x = solve_sparse(sys);
  CHECK((x - sys.b).norm() == 0.0);

  SparseSystem sing;
  sing.A = SpMat(2, 2);
  std::vector<Triplet> t{{0, 0, 1.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 1.0}};
  sing.A.setFromTriplets(t.begin(), t.end());
  sing.b = Eigen::VectorXd::Ones(2);
  sing.b[1] = 2.0; // inconsistent
  CHECK_THROWS_AS(solve_sparse(sing), SolverError);
}

namespace {

// P1 Poisson with homogeneous Dirichlet data and manufactured solution
// sin(pi x) sin(pi y); returns the L2 error
double poisson_l2_error(const Mesh& mesh) {
  auto mp = std::make_shared<Mesh>(mesh);
  auto p1 = FeSpace::p1(mp);
  BasisCache bc(quadrature(5));

  SparseSystem sys;
  std::vector<Triplet> trips;
  stiffness_p1(mesh, bc, {}, Sink{&trips, 0, 0});
  sys.A = SpMat(p1->ndof(), p1->ndof());
  sys.A.setFromTriplets(trips.begin(), trips.end());
  sys.b = Eigen::VectorXd::Zero(p1->ndof());

  QpScalar f(static_cast<size_t>(mesh.nt()) * bc.nq);
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    for (int q = 0; q < bc.nq; ++q) {
      const Vec2 x = qp_coord(g, bc.rule, q);
      f[t * bc.nq + q] = 2.0 * M_PI * M_PI * std::sin(M_PI * x.x()) * std::sin(M_PI * x.y());
    }
  }
  load_p1(mesh, bc, f, sys.b, 0);

  for (int dof : p1->boundary_dofs()) sys.dirichlet.emplace_back(dof, 0.0);
  ScalarField u(p1, solve_sparse(sys));

  const QpScalar uq = sample_p1(u, bc);
  double err2 = 0.0;
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    for (int q = 0; q < bc.nq; ++q) {
      const Vec2 x = qp_coord(g, bc.rule, q);
      const double d = uq[t * bc.nq + q] - std::sin(M_PI * x.x()) * std::sin(M_PI * x.y());
      err2 += bc.rule.weights[q] * 2.0 * g.area * d * d;
    }
  }
  return std::sqrt(err2);
}

} // namespace

TEST_CASE("Poisson manufactured solution: ~4x L2 decay per refinement") {
  Mesh m = build_rect_mesh(8, 8, Rect{0, 0, 1, 1});
  double prev = poisson_l2_error(m);
  for (int level = 0; level < 2; ++level) {
    m = uniform_refine(m);
    const double err = poisson_l2_error(m);
    const double ratio = prev / err;
    CHECK(ratio > 3.5);
    CHECK(ratio < 4.5);
    prev = err;
  }
}

TEST_CASE("Stokes (Taylor-Hood) lid-driven cavity: residual and discrete divergence") {
  auto mesh = make_mesh(8, 8);
  auto v2 = FeSpace::p2vec(mesh);
  auto q1 = FeSpace::p1(mesh);
  const int nv2 = v2->ndof(), np = q1->ndof();
  const int N = nv2 + np + 1;
  BasisCache bc(quadrature(4));

  std::vector<Triplet> trips;
  viscous_p2(*mesh, bc, {}, Sink{&trips, 0, 0});                 // nu = 1
  pressure_gradient(*mesh, bc, -1.0, Sink{&trips, 0, nv2});      // -(p, div w)
  divergence(*mesh, bc, 1.0, Sink{&trips, nv2, 0});              // (div v, q)
  // pressure gauge: mean-zero via multiplier
  Eigen::VectorXd cvec = Eigen::VectorXd::Zero(N);
  load_p1(*mesh, bc, {}, cvec, nv2);
  for (int i = 0; i < np; ++i) {
    trips.emplace_back(nv2 + i, nv2 + np, cvec[nv2 + i]);
    trips.emplace_back(nv2 + np, nv2 + i, cvec[nv2 + i]);
  }

  SparseSystem sys;
  sys.A = SpMat(N, N);
  sys.A.setFromTriplets(trips.begin(), trips.end());
  sys.b = Eigen::VectorXd::Zero(N);

  // lid: v = (1,0) on top, no-slip elsewhere
  const int nv = mesh->nv();
  auto node_pos = [&](int node) -> Vec2 {
    if (node < nv) return mesh->vertex(node);
    const Edge& ed = mesh->edge(node - nv);
    return 0.5 * (mesh->vertex(ed.a) + mesh->vertex(ed.b));
  };
  for (int dof : v2->boundary_dofs()) {
    const Vec2 p = node_pos(dof / 2);
    const bool top = p.y() > 1.0 - 1e-12;
    const double val = (top && dof % 2 == 0) ? 1.0 : 0.0;
    sys.dirichlet.emplace_back(dof, val);
  }

  Eigen::VectorXd x = solve_sparse(sys, 1e-12);

  // discrete divergence orthogonal to the pressure space
  SpMat B = div_matrix(*mesh, *v2, *q1);
  Eigen::VectorXd div = B * x.head(nv2);
  CHECK(div.lpNorm<Eigen::Infinity>() < 1e-10);
}

namespace {

// manufactured Stokes flow: u = (sin(pi x)cos(pi y), -cos(pi x)sin(pi y)),
// p = sin(pi x) sin(pi y) - 4/pi^2, f = 2 pi^2 u + grad p
struct StokesErr {
  double pressure_l2;
  double velocity_h1;
};

StokesErr stokes_manufactured(const Mesh& mesh) {
  auto mp = std::make_shared<Mesh>(mesh);
  auto v2 = FeSpace::p2vec(mp);
  auto q1 = FeSpace::p1(mp);
  const int nv2 = v2->ndof(), np = q1->ndof();
  const int N = nv2 + np + 1;
  BasisCache bc(quadrature(5));

  auto uex = [](const Vec2& x) {
    return Vec2(std::sin(M_PI * x.x()) * std::cos(M_PI * x.y()),
                -std::cos(M_PI * x.x()) * std::sin(M_PI * x.y()));
  };
  auto pex = [](const Vec2& x) {
    return std::sin(M_PI * x.x()) * std::sin(M_PI * x.y()) - 4.0 / (M_PI * M_PI);
  };

  std::vector<Triplet> trips;
  viscous_p2(mesh, bc, {}, Sink{&trips, 0, 0});
  pressure_gradient(mesh, bc, -1.0, Sink{&trips, 0, nv2});
  divergence(mesh, bc, 1.0, Sink{&trips, nv2, 0});
  Eigen::VectorXd cvec = Eigen::VectorXd::Zero(N);
  load_p1(mesh, bc, {}, cvec, nv2);
  for (int i = 0; i < np; ++i) {
    trips.emplace_back(nv2 + i, nv2 + np, cvec[nv2 + i]);
    trips.emplace_back(nv2 + np, nv2 + i, cvec[nv2 + i]);
  }
  SparseSystem sys;
  sys.A = SpMat(N, N);
  sys.A.setFromTriplets(trips.begin(), trips.end());
  sys.b = Eigen::VectorXd::Zero(N);

  QpVec f(static_cast<size_t>(mesh.nt()) * bc.nq);
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    for (int q = 0; q < bc.nq; ++q) {
      const Vec2 x = qp_coord(g, bc.rule, q);
      const Vec2 gradp(M_PI * std::cos(M_PI * x.x()) * std::sin(M_PI * x.y()),
                       M_PI * std::sin(M_PI * x.x()) * std::cos(M_PI * x.y()));
      f[t * bc.nq + q] = 2.0 * M_PI * M_PI * uex(x) + gradp;
    }
  }
  load_p2(mesh, bc, f, sys.b, 0);

  const int nv = mesh.nv();
  auto node_pos = [&](int node) -> Vec2 {
    if (node < nv) return mesh.vertex(node);
    const Edge& ed = mesh.edge(node - nv);
    return 0.5 * (mesh.vertex(ed.a) + mesh.vertex(ed.b));
  };
  for (int dof : v2->boundary_dofs()) {
    const Vec2 p = node_pos(dof / 2);
    sys.dirichlet.emplace_back(dof, dof % 2 == 0 ? uex(p).x() : uex(p).y());
  }

  Eigen::VectorXd x = solve_sparse(sys, 1e-11);

  VectorField vh(v2);
  vh.x = x.head(nv2);
  ScalarField ph(q1, x.segment(nv2, np));

  const QpScalar pq = sample_p1(ph, bc);
  const QpMat gvq = sample_grad_p2(vh, bc);
  double perr2 = 0.0, verr2 = 0.0;
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    for (int q = 0; q < bc.nq; ++q) {
      const Vec2 xq = qp_coord(g, bc.rule, q);
      const double w = bc.rule.weights[q] * 2.0 * g.area;
      const double dp = pq[t * bc.nq + q] - pex(xq);
      perr2 += w * dp * dp;
      Eigen::Matrix2d gex;
      gex(0, 0) = M_PI * std::cos(M_PI * xq.x()) * std::cos(M_PI * xq.y());
      gex(0, 1) = -M_PI * std::sin(M_PI * xq.x()) * std::sin(M_PI * xq.y());
      gex(1, 0) = M_PI * std::sin(M_PI * xq.x()) * std::sin(M_PI * xq.y());
      gex(1, 1) = -M_PI * std::cos(M_PI * xq.x()) * std::cos(M_PI * xq.y());
      verr2 += w * (gvq[t * bc.nq + q] - gex).squaredNorm();
    }
  }
  return {std::sqrt(perr2), std::sqrt(verr2)};
}

} // namespace

TEST_CASE("Stokes (Taylor-Hood) manufactured solution: ~O(h^2) convergence") {
  Mesh m = build_rect_mesh(8, 8, Rect{0, 0, 1, 1});
  StokesErr prev = stokes_manufactured(m);
  for (int level = 0; level < 2; ++level) {
    m = uniform_refine(m);
    const StokesErr err = stokes_manufactured(m);
    const double vratio = prev.velocity_h1 / err.velocity_h1;
    CHECK(vratio > 3.5);   // velocity H1 is O(h^2)
    CHECK(vratio < 4.5);
    // pressure L2 oscillates pre-asymptotically; monitor decrease only
    CHECK(err.pressure_l2 < prev.pressure_l2);
    prev = err;
  }
}

TEST_CASE("Taylor-Hood inf-sup monitor: divergence block stays bounded away from zero") {
  // smallest singular value of the scaled divergence block, monitored under
  // refinement (not asserted against a fixed constant)
  double prev_sigma = -1.0;
  Mesh m = build_rect_mesh(4, 4, Rect{0, 0, 1, 1});
  for (int level = 0; level < 2; ++level) {
    auto mp = std::make_shared<Mesh>(m);
    auto v2 = FeSpace::p2vec(mp);
    auto q1 = FeSpace::p1(mp);
    SpMat B = div_matrix(m, *v2, *q1);
    Eigen::MatrixXd Bd = Eigen::MatrixXd(B);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Bd);
    const auto& sv = svd.singularValues();
    // ignore the constant-pressure null direction: second-smallest value
    const double sigma = sv[sv.size() - 2];
    CHECK(sigma > 1e-3);
    if (prev_sigma > 0.0) CHECK(sigma > 0.2 * prev_sigma);
    prev_sigma = sigma;
    m = uniform_refine(m);
  }
}
