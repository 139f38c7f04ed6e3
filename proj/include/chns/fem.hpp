#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <memory>
#include <vector>

#include "chns/mesh.hpp"

namespace chns {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

enum class SpaceKind { P1Scalar, P2Vector, P1Pressure };

// Scalar P1 has one dof per vertex; vector P2 has two dofs per node, nodes
// being vertices followed by edge midpoints. Numbering is deterministic
// given the mesh.
class FeSpace {
public:
  FeSpace(SpaceKind kind, std::shared_ptr<const Mesh> mesh);

  SpaceKind kind() const { return kind_; }
  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  int ndof() const { return ndof_; }
  int dofs_per_cell() const { return kind_ == SpaceKind::P2Vector ? 12 : 3; }

  // global dofs of cell t; out must hold dofs_per_cell() entries.
  // P1: vertex dofs. P2 vector: (node, component) -> 2*node + component with
  // local nodes [v0,v1,v2, mid(v0,v1), mid(v1,v2), mid(v2,v0)].
  void cell_dofs(int t, int* out) const;

  // dof ids on the boundary (P2Vector: both components of boundary nodes)
  std::vector<int> boundary_dofs() const;

  static std::shared_ptr<FeSpace> p1(std::shared_ptr<const Mesh> m) {
    return std::make_shared<FeSpace>(SpaceKind::P1Scalar, std::move(m));
  }
  static std::shared_ptr<FeSpace> p2vec(std::shared_ptr<const Mesh> m) {
    return std::make_shared<FeSpace>(SpaceKind::P2Vector, std::move(m));
  }

private:
  SpaceKind kind_;
  std::shared_ptr<const Mesh> mesh_;
  int ndof_;
};

struct ScalarField {
  std::shared_ptr<const FeSpace> space;
  Eigen::VectorXd x;

  ScalarField() = default;
  explicit ScalarField(std::shared_ptr<const FeSpace> s)
      : space(std::move(s)), x(Eigen::VectorXd::Zero(space->ndof())) {}
  ScalarField(std::shared_ptr<const FeSpace> s, Eigen::VectorXd v)
      : space(std::move(s)), x(std::move(v)) {}

  // nodal evaluation helpers
  double value_at(const Vec2& p) const;
  Vec2 gradient_in_cell(int t) const; // P1 gradients are cellwise constant
};

struct VectorField {
  std::shared_ptr<const FeSpace> space; // P2Vector
  Eigen::VectorXd x;

  VectorField() = default;
  explicit VectorField(std::shared_ptr<const FeSpace> s)
      : space(std::move(s)), x(Eigen::VectorXd::Zero(space->ndof())) {}

  Vec2 value_at(const Vec2& p) const;
};

// Nodal interpolation onto the target space (the inter-mesh transfer P^m).
// Identity when source and target share the same mesh.
ScalarField interpolate(const ScalarField& source, std::shared_ptr<const FeSpace> target);
VectorField interpolate(const VectorField& source, std::shared_ptr<const FeSpace> target);

// Sparse transfer matrix T with (T u_src)_i = u_src(node_i of target);
// P1 -> P1 or P2 -> P2 (per component).
SpMat interpolation_matrix(const FeSpace& source, const FeSpace& target);

// L2(boundary) projection of g onto the P2 trace space subject to zero net
// flux through the boundary (one scalar multiplier). Returns the full-length
// velocity coefficient vector that is zero at interior dofs.
Eigen::VectorXd trace_project(const std::function<Vec2(const Vec2&)>& g, const FeSpace& space);

// Net boundary flux of boundary data held in a full-length P2 coefficient
// vector: integral of v.n over the boundary.
double boundary_flux(const Eigen::VectorXd& vcoef, const FeSpace& space);

// Square sparse system with Dirichlet rows replaced by identity rows.
struct SparseSystem {
  SpMat A;
  Eigen::VectorXd b;
  std::vector<std::pair<int, double>> dirichlet;

  void apply_dirichlet(); // row replacement; idempotent
};

// Deterministic sparse direct solve; throws SolverError if the relative
// residual exceeds tol.
Eigen::VectorXd solve_sparse(SparseSystem& system, double tol = 1e-12);

// Direct LU with pattern reuse across factorizations of structurally
// identical matrices.
class LuSolver {
public:
  void factorize(const SpMat& A);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

private:
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
  bool analyzed_ = false;
  int n_ = -1;
  long nnz_ = -1;
};

// Replace row i by the identity row for every (i, value) pair and set b_i.
void replace_rows_identity(SpMat& A, Eigen::VectorXd& b,
                           const std::vector<std::pair<int, double>>& rows);

} // namespace chns
