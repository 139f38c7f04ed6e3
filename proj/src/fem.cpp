#include "chns/fem.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "chns/errors.hpp"

namespace chns {

FeSpace::FeSpace(SpaceKind kind, std::shared_ptr<const Mesh> mesh)
    : kind_(kind), mesh_(std::move(mesh)) {
  switch (kind_) {
  case SpaceKind::P1Scalar:
  case SpaceKind::P1Pressure:
    ndof_ = mesh_->nv();
    break;
  case SpaceKind::P2Vector:
    ndof_ = 2 * (mesh_->nv() + mesh_->ne());
    break;
  }
}

void FeSpace::cell_dofs(int t, int* out) const {
  const auto& v = mesh_->tri(t).v;
  if (kind_ != SpaceKind::P2Vector) {
    out[0] = v[0];
    out[1] = v[1];
    out[2] = v[2];
    return;
  }
  const int nv = mesh_->nv();
  const int e01 = mesh_->edge_index(v[0], v[1]);
  const int e12 = mesh_->edge_index(v[1], v[2]);
  const int e20 = mesh_->edge_index(v[2], v[0]);
  const int nodes[6] = {v[0], v[1], v[2], nv + e01, nv + e12, nv + e20};
  for (int n = 0; n < 6; ++n) {
    out[2 * n] = 2 * nodes[n];
    out[2 * n + 1] = 2 * nodes[n] + 1;
  }
}

std::vector<int> FeSpace::boundary_dofs() const {
  std::set<int> nodes;
  const int nv = mesh_->nv();
  for (int e = 0; e < mesh_->ne(); ++e) {
    const Edge& ed = mesh_->edge(e);
    if (!ed.boundary()) continue;
    nodes.insert(ed.a);
    nodes.insert(ed.b);
    if (kind_ == SpaceKind::P2Vector) nodes.insert(nv + e);
  }
  std::vector<int> dofs;
  if (kind_ == SpaceKind::P2Vector) {
    for (int n : nodes) {
      dofs.push_back(2 * n);
      dofs.push_back(2 * n + 1);
    }
  } else {
    dofs.assign(nodes.begin(), nodes.end());
  }
  return dofs;
}

namespace {

// P2 shape values at barycentric l: vertices then midpoints of local edges
// (0,1), (1,2), (2,0)
inline void p2_values(const std::array<double, 3>& l, double* n) {
  n[0] = l[0] * (2 * l[0] - 1);
  n[1] = l[1] * (2 * l[1] - 1);
  n[2] = l[2] * (2 * l[2] - 1);
  n[3] = 4 * l[0] * l[1];
  n[4] = 4 * l[1] * l[2];
  n[5] = 4 * l[2] * l[0];
}

// gradients of the barycentric coordinates of cell t
inline void bary_gradients(const Mesh& mesh, int t, Vec2 g[3], double& area) {
  const auto& v = mesh.tri(t).v;
  const Vec2& a = mesh.vertex(v[0]);
  const Vec2& b = mesh.vertex(v[1]);
  const Vec2& c = mesh.vertex(v[2]);
  const double det = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
  area = 0.5 * det;
  g[0] = Vec2(b.y() - c.y(), c.x() - b.x()) / det;
  g[1] = Vec2(c.y() - a.y(), a.x() - c.x()) / det;
  g[2] = Vec2(a.y() - b.y(), b.x() - a.x()) / det;
}

} // namespace

double ScalarField::value_at(const Vec2& p) const {
  std::array<double, 3> l;
  const int t = space->mesh().locate(p, l, 1e-9);
  if (t < 0) throw std::runtime_error("ScalarField::value_at: point outside mesh");
  const auto& v = space->mesh().tri(t).v;
  return l[0] * x[v[0]] + l[1] * x[v[1]] + l[2] * x[v[2]];
}

Vec2 ScalarField::gradient_in_cell(int t) const {
  Vec2 g[3];
  double area;
  bary_gradients(space->mesh(), t, g, area);
  const auto& v = space->mesh().tri(t).v;
  return x[v[0]] * g[0] + x[v[1]] * g[1] + x[v[2]] * g[2];
}

Vec2 VectorField::value_at(const Vec2& p) const {
  std::array<double, 3> l;
  const Mesh& mesh = space->mesh();
  const int t = mesh.locate(p, l, 1e-9);
  if (t < 0) throw std::runtime_error("VectorField::value_at: point outside mesh");
  double n[6];
  p2_values(l, n);
  int dofs[12];
  space->cell_dofs(t, dofs);
  Vec2 val = Vec2::Zero();
  for (int k = 0; k < 6; ++k) {
    val.x() += n[k] * x[dofs[2 * k]];
    val.y() += n[k] * x[dofs[2 * k + 1]];
  }
  return val;
}

ScalarField interpolate(const ScalarField& source, std::shared_ptr<const FeSpace> target) {
  if (&source.space->mesh() == &target->mesh()) return ScalarField(target, source.x);
  ScalarField out(target);
  const Mesh& tm = target->mesh();
  for (int i = 0; i < tm.nv(); ++i) out.x[i] = source.value_at(tm.vertex(i));
  return out;
}

VectorField interpolate(const VectorField& source, std::shared_ptr<const FeSpace> target) {
  if (&source.space->mesh() == &target->mesh()) {
    VectorField out(target);
    out.x = source.x;
    return out;
  }
  VectorField out(target);
  const Mesh& tm = target->mesh();
  const int nv = tm.nv();
  for (int i = 0; i < nv; ++i) {
    const Vec2 val = source.value_at(tm.vertex(i));
    out.x[2 * i] = val.x();
    out.x[2 * i + 1] = val.y();
  }
  for (int e = 0; e < tm.ne(); ++e) {
    const Edge& ed = tm.edge(e);
    const Vec2 mid = 0.5 * (tm.vertex(ed.a) + tm.vertex(ed.b));
    const Vec2 val = source.value_at(mid);
    out.x[2 * (nv + e)] = val.x();
    out.x[2 * (nv + e) + 1] = val.y();
  }
  return out;
}

SpMat interpolation_matrix(const FeSpace& source, const FeSpace& target) {
  if (source.kind() != target.kind())
    throw std::invalid_argument("interpolation_matrix: space kinds must match");
  std::vector<Triplet> trips;
  const Mesh& sm = source.mesh();
  const Mesh& tm = target.mesh();
  const bool same = (&sm == &tm);

  auto locate_bary = [&](const Vec2& p, std::array<double, 3>& l) {
    const int t = sm.locate(p, l, 1e-9);
    if (t < 0) throw std::runtime_error("interpolation_matrix: point outside source mesh");
    return t;
  };

  if (source.kind() != SpaceKind::P2Vector) {
    for (int i = 0; i < tm.nv(); ++i) {
      if (same) {
        trips.emplace_back(i, i, 1.0);
        continue;
      }
      std::array<double, 3> l;
      const int t = locate_bary(tm.vertex(i), l);
      const auto& v = sm.tri(t).v;
      for (int k = 0; k < 3; ++k)
        if (std::abs(l[k]) > 1e-14) trips.emplace_back(i, v[k], l[k]);
    }
  } else {
    const int snv = sm.nv();
    auto emit = [&](int tnode, const Vec2& p) {
      if (same) {
        trips.emplace_back(2 * tnode, 2 * tnode, 1.0);
        trips.emplace_back(2 * tnode + 1, 2 * tnode + 1, 1.0);
        return;
      }
      std::array<double, 3> l;
      const int t = locate_bary(p, l);
      double n[6];
      p2_values(l, n);
      const auto& v = sm.tri(t).v;
      const int e01 = sm.edge_index(v[0], v[1]);
      const int e12 = sm.edge_index(v[1], v[2]);
      const int e20 = sm.edge_index(v[2], v[0]);
      const int nodes[6] = {v[0], v[1], v[2], snv + e01, snv + e12, snv + e20};
      for (int k = 0; k < 6; ++k)
        if (std::abs(n[k]) > 1e-14) {
          trips.emplace_back(2 * tnode, 2 * nodes[k], n[k]);
          trips.emplace_back(2 * tnode + 1, 2 * nodes[k] + 1, n[k]);
        }
    };
    for (int i = 0; i < tm.nv(); ++i) emit(i, tm.vertex(i));
    for (int e = 0; e < tm.ne(); ++e) {
      const Edge& ed = tm.edge(e);
      emit(tm.nv() + e, 0.5 * (tm.vertex(ed.a) + tm.vertex(ed.b)));
    }
  }
  SpMat T(target.ndof(), source.ndof());
  T.setFromTriplets(trips.begin(), trips.end());
  return T;
}

namespace {

// 4-point Gauss-Legendre on [0,1]
constexpr double kGauss4X[4] = {0.069431844202974, 0.330009478207572, 0.669990521792428,
                                0.930568155797026};
constexpr double kGauss4W[4] = {0.173927422568727, 0.326072577431273, 0.326072577431273,
                                0.173927422568727};

// P2 trace values on an edge parametrized from endpoint a to endpoint b;
// nodes [a, b, midpoint]
inline void p2_edge_values(double s, double* n) {
  n[0] = (1 - s) * (1 - 2 * s);
  n[1] = s * (2 * s - 1);
  n[2] = 4 * s * (1 - s);
}

// outward normal of a boundary edge of triangle t with vertices (a, b)
Vec2 outward_normal(const Mesh& mesh, const Edge& e) {
  const Vec2& a = mesh.vertex(e.a);
  const Vec2& b = mesh.vertex(e.b);
  Vec2 tangent = b - a;
  Vec2 n(tangent.y(), -tangent.x());
  n.normalize();
  const Vec2 c = mesh.tri_centroid(e.tris[0]);
  if (n.dot(0.5 * (a + b) - c) < 0) n = -n;
  return n;
}

} // namespace

Eigen::VectorXd trace_project(const std::function<Vec2(const Vec2&)>& g, const FeSpace& space) {
  if (space.kind() != SpaceKind::P2Vector)
    throw std::invalid_argument("trace_project: needs a P2 vector space");
  const Mesh& mesh = space.mesh();
  const int nv = mesh.nv();

  // compress boundary dofs
  std::vector<int> bdofs = space.boundary_dofs();
  std::vector<int> comp(space.ndof(), -1);
  for (size_t i = 0; i < bdofs.size(); ++i) comp[bdofs[i]] = static_cast<int>(i);
  const int nb = static_cast<int>(bdofs.size());

  std::vector<Triplet> trips;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nb + 1);

  for (int e = 0; e < mesh.ne(); ++e) {
    const Edge& ed = mesh.edge(e);
    if (!ed.boundary()) continue;
    const Vec2& A = mesh.vertex(ed.a);
    const Vec2& B = mesh.vertex(ed.b);
    const double len = (B - A).norm();
    const Vec2 nu = outward_normal(mesh, ed);
    const int nodes[3] = {ed.a, ed.b, nv + e};

    double M[3][3] = {};
    double b[3][2] = {};
    double c[3] = {}; // flux weights: integral of basis along the edge
    for (int q = 0; q < 4; ++q) {
      const double s = kGauss4X[q];
      const double w = kGauss4W[q] * len;
      double n[3];
      p2_edge_values(s, n);
      const Vec2 x = (1 - s) * A + s * B;
      const Vec2 gv = g(x);
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) M[i][j] += w * n[i] * n[j];
        b[i][0] += w * n[i] * gv.x();
        b[i][1] += w * n[i] * gv.y();
        c[i] += w * n[i];
      }
    }
    for (int i = 0; i < 3; ++i) {
      for (int comp_i = 0; comp_i < 2; ++comp_i) {
        const int gi = comp[2 * nodes[i] + comp_i];
        rhs[gi] += b[i][comp_i];
        for (int j = 0; j < 3; ++j) {
          const int gj = comp[2 * nodes[j] + comp_i];
          trips.emplace_back(gi, gj, M[i][j]);
        }
        // constraint column/row: integral of v.nu over the boundary
        const double cv = c[i] * nu[comp_i];
        trips.emplace_back(gi, nb, cv);
        trips.emplace_back(nb, gi, cv);
      }
    }
  }

  SpMat A(nb + 1, nb + 1);
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<SpMat> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("trace_project: singular boundary mass system");
  Eigen::VectorXd sol = lu.solve(rhs);

  Eigen::VectorXd full = Eigen::VectorXd::Zero(space.ndof());
  for (int i = 0; i < nb; ++i) full[bdofs[i]] = sol[i];
  return full;
}

double boundary_flux(const Eigen::VectorXd& vcoef, const FeSpace& space) {
  const Mesh& mesh = space.mesh();
  const int nv = mesh.nv();
  double flux = 0.0;
  for (int e = 0; e < mesh.ne(); ++e) {
    const Edge& ed = mesh.edge(e);
    if (!ed.boundary()) continue;
    const double len = (mesh.vertex(ed.b) - mesh.vertex(ed.a)).norm();
    const Vec2 nu = outward_normal(mesh, ed);
    const int nodes[3] = {ed.a, ed.b, nv + e};
    for (int q = 0; q < 4; ++q) {
      double n[3];
      p2_edge_values(kGauss4X[q], n);
      Vec2 v = Vec2::Zero();
      for (int i = 0; i < 3; ++i) {
        v.x() += n[i] * vcoef[2 * nodes[i]];
        v.y() += n[i] * vcoef[2 * nodes[i] + 1];
      }
      flux += kGauss4W[q] * len * v.dot(nu);
    }
  }
  return flux;
}

void SparseSystem::apply_dirichlet() {
  replace_rows_identity(A, b, dirichlet);
}

void replace_rows_identity(SpMat& A, Eigen::VectorXd& b,
                           const std::vector<std::pair<int, double>>& rows) {
  if (rows.empty()) return;
  std::vector<char> is_bc(A.rows(), 0);
  for (const auto& [i, val] : rows) {
    is_bc[i] = 1;
    b[i] = val;
  }
  // zero constrained rows in place, then set unit diagonal
  for (int col = 0; col < A.outerSize(); ++col)
    for (SpMat::InnerIterator it(A, col); it; ++it)
      if (is_bc[it.row()]) it.valueRef() = (it.row() == col) ? 1.0 : 0.0;
  // ensure diagonal entries exist
  for (const auto& [i, val] : rows)
    if (A.coeff(i, i) == 0.0) A.coeffRef(i, i) = 1.0;
}

Eigen::VectorXd solve_sparse(SparseSystem& system, double tol) {
  system.apply_dirichlet();
  LuSolver lu;
  lu.factorize(system.A);
  Eigen::VectorXd x = lu.solve(system.b);
  const double bn = system.b.norm();
  const double rn = (system.b - system.A * x).norm();
  if (!(rn <= tol * std::max(bn, 1e-300)) && !(bn == 0.0 && rn == 0.0))
    throw SolverError("solve_sparse: residual " + std::to_string(rn) + " exceeds tolerance", rn);
  return x;
}

void LuSolver::factorize(const SpMat& A) {
  if (!analyzed_ || A.rows() != n_ || A.nonZeros() != nnz_) {
    lu_.analyzePattern(A);
    analyzed_ = true;
    n_ = static_cast<int>(A.rows());
    nnz_ = A.nonZeros();
  }
  lu_.factorize(A);
  if (lu_.info() != Eigen::Success)
    throw SolverError("LuSolver: factorization failed (singular or ill-conditioned)", -1.0);
}

Eigen::VectorXd LuSolver::solve(const Eigen::VectorXd& b) const { return lu_.solve(b); }

} // namespace chns
