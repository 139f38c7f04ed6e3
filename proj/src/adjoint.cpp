#include "chns/adjoint.hpp"

#include <map>

#include "chns/errors.hpp"

namespace chns {

namespace {

struct SweepCaches {
  const ScenarioData* scn;
  std::map<const Mesh*, std::shared_ptr<MeshCache>> by_mesh;

  MeshCache* get(const std::shared_ptr<const Mesh>& mesh) {
    auto it = by_mesh.find(mesh.get());
    if (it == by_mesh.end())
      it = by_mesh.emplace(mesh.get(), std::make_shared<MeshCache>(mesh, *scn)).first;
    return it->second.get();
  }
};

// Transfer a lagged field to the step mesh when meshes differ (P^m).
ScalarField to_mesh(const ScalarField& f, const std::shared_ptr<const FeSpace>& space) {
  if (&f.space->mesh() == &space->mesh()) return f;
  return interpolate(f, space);
}
VectorField to_mesh(const VectorField& f, const std::shared_ptr<const FeSpace>& space) {
  if (&f.space->mesh() == &space->mesh()) {
    VectorField out(space);
    out.x = f.x;
    return out;
  }
  return interpolate(f, space);
}

struct StepData {
  StepRefs refs;
  ScalarField phi_prev, phi_prev2, mu_prev;
  VectorField v_prev;
};

// Build step-m references with transferred lagged fields; m is 1-based.
void build_refs(StepData& d, const Trajectory& traj, int m, MeshCache* cache,
                const ScenarioData& scn) {
  const FieldState& cur = traj.states[m];
  const FieldState& prev = traj.states[m - 1];
  d.refs.scn = &scn;
  d.refs.cache = cache;
  d.refs.tau = traj.tau[m - 1];
  d.refs.init = (m == 1);
  d.v_prev = to_mesh(prev.v, cache->vspace);
  d.phi_prev = to_mesh(prev.phi, cache->sspace);
  d.refs.v_prev = &d.v_prev;
  d.refs.phi_prev = &d.phi_prev;
  if (m >= 2) {
    d.mu_prev = to_mesh(prev.mu, cache->sspace);
    d.phi_prev2 = to_mesh(traj.states[m - 2].phi, cache->sspace);
    d.refs.mu_prev = &d.mu_prev;
    d.refs.phi_prev2 = &d.phi_prev2;
  }
  d.refs.v_cur = &cur.v;
  d.refs.phi_cur = &cur.phi;
  d.refs.mu_cur = &cur.mu;
  d.refs.bv_load = Eigen::VectorXd::Zero(cache->layout.nv2);
  d.refs.vb_values = Eigen::VectorXd::Zero(cache->layout.nv2);
}

// Zero-Dirichlet on the adjoint momentum boundary dofs: rows and columns of
// the transposed system.
void constrain_boundary(SpMat& A, Eigen::VectorXd& rhs, const MeshCache& c) {
  std::vector<char> is_b(A.rows(), 0);
  for (int d : c.bdofs) {
    is_b[c.layout.off_v + d] = 1;
    rhs[c.layout.off_v + d] = 0.0;
  }
  for (int col = 0; col < A.outerSize(); ++col)
    for (SpMat::InnerIterator it(A, col); it; ++it) {
      if (is_b[it.row()])
        it.valueRef() = (it.row() == col) ? 1.0 : 0.0;
      else if (is_b[col])
        it.valueRef() = 0.0;
    }
}

// Map a dual vector on the step-(k) system back to step-(k-j) unknowns when
// the meshes differ: multiply blockwise by the transposed transfer operators.
Eigen::VectorXd pull_back(const Eigen::VectorXd& y, MeshCache* from, MeshCache* to) {
  if (from->mesh.get() == to->mesh.get()) return y;
  const StepLayout& Lf = from->layout;
  const StepLayout& Lt = to->layout;
  const SpMat Tv = interpolation_matrix(*to->vspace, *from->vspace);
  const SpMat Ts = interpolation_matrix(*to->sspace, *from->sspace);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(Lt.N);
  out.segment(Lt.off_v, Lt.nv2) = Tv.transpose() * y.segment(Lf.off_v, Lf.nv2);
  out.segment(Lt.off_phi, Lt.ns) = Ts.transpose() * y.segment(Lf.off_phi, Lf.ns);
  out.segment(Lt.off_mu, Lt.ns) = Ts.transpose() * y.segment(Lf.off_mu, Lf.ns);
  return out;
}

} // namespace

AdjointResult adjoint_sweep(const Trajectory& traj, const ScalarField& phi_d,
                            const ScenarioData& scn) {
  const int M = traj.M();
  if (M < 1) throw std::invalid_argument("adjoint_sweep: empty trajectory");

  SweepCaches caches{&scn, {}};
  AdjointResult out;
  out.states.resize(M);
  out.boundary_sens.resize(M);

  // cross-coupling contributions C^T p pulled back to earlier steps
  std::vector<Eigen::VectorXd> y1(M + 1), y2(M + 1);

  for (int m = M; m >= 1; --m) {
    MeshCache* cache = caches.get(traj.states[m].mesh);
    const StepLayout& L = cache->layout;
    StepData d;
    build_refs(d, traj, m, cache, scn);

    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(L.N);
    if (m == M) {
      const ScalarField phid_m = to_mesh(phi_d, cache->sspace);
      rhs.segment(L.off_phi, L.ns) = cache->mass_s * (traj.states[M].phi.x - phid_m.x);
    }
    if (m + 1 <= M && y1[m].size()) rhs -= y1[m];
    if (m + 2 <= M && y2[m].size()) rhs -= y2[m];

    const SpMat K = step_jacobian(d.refs);
    const Eigen::VectorXd rhs_full = rhs;
    SpMat A = K.transpose();
    constrain_boundary(A, rhs, *cache);
    cache->adjoint_lu->factorize(A);
    Eigen::VectorXd p = cache->adjoint_lu->solve(rhs);

    AdjointState& st = out.states[m - 1];
    st.step = m;
    st.p_v = VectorField(cache->vspace);
    st.p_v.x = p.segment(L.off_v, L.nv2);
    st.p_p = ScalarField(cache->sspace, p.segment(L.off_p, L.ns));
    st.p_phi = ScalarField(cache->sspace, p.segment(L.off_phi, L.ns));
    st.p_mu = ScalarField(cache->sspace, p.segment(L.off_mu, L.ns));
    st.gauge = p[L.off_gauge];

    // dL/dv_b^m: unconstrained transposed rows at the boundary dofs
    {
      const Eigen::VectorXd KTp = K.transpose() * p;
      Eigen::VectorXd sens = Eigen::VectorXd::Zero(L.nv2);
      for (int dof : cache->bdofs)
        sens[dof] = rhs_full[L.off_v + dof] - KTp[L.off_v + dof];
      out.boundary_sens[m - 1] = std::move(sens);
    }

    // couplings of this step's residual to the two previous levels
    if (m >= 2) {
      const SpMat C1 = cross_prev_jacobian(d.refs);
      Eigen::VectorXd y = C1.transpose() * p;
      MeshCache* prev_cache = caches.get(traj.states[m - 1].mesh);
      y1[m - 1] = pull_back(y, cache, prev_cache);
    }
    if (m >= 3) {
      const SpMat C2 = cross_prev2_jacobian(d.refs);
      Eigen::VectorXd y = C2.transpose() * p;
      MeshCache* pp_cache = caches.get(traj.states[m - 2].mesh);
      y2[m - 2] = pull_back(y, cache, pp_cache);
    }
  }
  return out;
}

Eigen::MatrixXd gradient_uV(const Trajectory& traj, const AdjointResult& adj,
                            const ScenarioData& scn) {
  const int M = traj.M();
  const int nV = static_cast<int>(traj.stepV.cols());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(M, nV);
  if (nV == 0) return g;
  SweepCaches caches{&scn, {}};
  for (int m = 1; m <= M; ++m) {
    MeshCache* cache = caches.get(traj.states[m].mesh);
    for (int l = 0; l < nV; ++l)
      g(m - 1, l) = scn.weights.alpha * traj.tau[m - 1] * scn.weights.aV * traj.stepV(m - 1, l) +
                    cache->vloads[l].dot(adj.states[m - 1].p_v.x);
  }
  return g;
}

Eigen::MatrixXd gradient_uB(const Trajectory& traj, const AdjointResult& adj,
                            const ScenarioData& scn) {
  const int M = traj.M();
  const int nB = static_cast<int>(traj.stepB.cols());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(M, nB);
  if (nB == 0) return g;
  SweepCaches caches{&scn, {}};
  for (int m = 1; m <= M; ++m) {
    MeshCache* cache = caches.get(traj.states[m].mesh);
    const Eigen::VectorXd fh = cache->blifts.transpose() * adj.boundary_sens[m - 1];
    for (int l = 0; l < nB; ++l)
      g(m - 1, l) = scn.weights.alpha * traj.tau[m - 1] * scn.weights.aB * traj.stepB(m - 1, l) +
                    fh[l];
  }
  return g;
}

GradientU gradient_uI(const Trajectory& traj, const AdjointResult& adj, const ScenarioData& scn,
                      const Control& u) {
  if (!(scn.weights.aI > 0) || !u.u_I.space)
    throw std::invalid_argument("gradient_uI: initial-value control inactive");
  GradientU out;

  SweepCaches caches{&scn, {}};
  MeshCache* c1 = caches.get(traj.states[1].mesh);
  const StepLayout& L1 = c1->layout;

  StepData d1;
  build_refs(d1, traj, 1, c1, scn);
  const SpMat D1 = init_dphi0_jacobian(d1.refs);
  // full multiplier vector of step 1 to pair with D1
  Eigen::VectorXd p1 = Eigen::VectorXd::Zero(L1.N);
  p1.segment(L1.off_v, L1.nv2) = adj.states[0].p_v.x;
  p1.segment(L1.off_p, L1.ns) = adj.states[0].p_p.x;
  p1.segment(L1.off_phi, L1.ns) = adj.states[0].p_phi.x;
  p1.segment(L1.off_mu, L1.ns) = adj.states[0].p_mu.x;
  p1[L1.off_gauge] = adj.states[0].gauge;
  Eigen::VectorXd state_dual = D1.transpose() * p1; // on mesh_1 P1 dofs

  if (traj.M() >= 2) {
    MeshCache* c2 = caches.get(traj.states[2].mesh);
    const StepLayout& L2 = c2->layout;
    StepData d2;
    build_refs(d2, traj, 2, c2, scn);
    const SpMat C2 = cross_prev2_jacobian(d2.refs);
    Eigen::VectorXd p2 = Eigen::VectorXd::Zero(L2.N);
    p2.segment(L2.off_v, L2.nv2) = adj.states[1].p_v.x;
    p2.segment(L2.off_p, L2.ns) = adj.states[1].p_p.x;
    p2.segment(L2.off_phi, L2.ns) = adj.states[1].p_phi.x;
    p2.segment(L2.off_mu, L2.ns) = adj.states[1].p_mu.x;
    p2[L2.off_gauge] = adj.states[1].gauge;
    Eigen::VectorXd y = C2.transpose() * p2; // dual on step-2 layout
    Eigen::VectorXd yphi = y.segment(L2.off_phi, L2.ns);
    if (c2->mesh.get() != c1->mesh.get()) {
      const SpMat T12 = interpolation_matrix(*c1->sspace, *c2->sspace);
      yphi = T12.transpose() * yphi;
    }
    state_dual += yphi;
  }

  // pull back from the first state mesh to the control mesh
  Eigen::VectorXd raw;
  if (&u.u_I.space->mesh() == c1->mesh.get()) {
    raw = -state_dual;
  } else {
    const SpMat E = interpolation_matrix(*u.u_I.space, *c1->sspace);
    raw = -(E.transpose() * state_dual);
  }

  // control-cost part: (alpha/2) aI [ eps (grad u, grad w) + (W'_inf(u), w)/eps ]
  const Mesh& cm = u.u_I.space->mesh();
  const SpMat Kc = assemble_stiffness_p1(cm);
  raw += 0.5 * scn.weights.alpha * scn.weights.aI * scn.eps * (Kc * u.u_I.x);
  {
    BasisCache bc(quadrature(2));
    const QpScalar uq = sample_p1(u.u_I, bc);
    const QpScalar w = map_qp(uq, [&](double v) {
      const double vb = std::clamp(v, -1.0, 1.0);
      return 0.5 * scn.weights.alpha * scn.weights.aI * (-vb) / scn.eps;
    });
    Eigen::VectorXd load = Eigen::VectorXd::Zero(cm.nv());
    load_p1(cm, bc, w, load, 0);
    raw += load;
  }

  out.g_I_raw = raw;
  // H1 Riesz representative on the control mesh
  const SpMat Mc = assemble_mass_p1(cm);
  SparseSystem sys;
  sys.A = Kc + Mc;
  sys.b = raw;
  out.g_I = ScalarField(u.u_I.space, solve_sparse(sys, 1e-12));
  return out;
}

GradientU reduced_gradient(const Trajectory& traj, const ScalarField& phi_d,
                           const ScenarioData& scn, const Control& u) {
  const AdjointResult adj = adjoint_sweep(traj, phi_d, scn);
  GradientU g;
  if (scn.weights.aV > 0 || traj.stepV.cols() > 0) g.g_V = gradient_uV(traj, adj, scn);
  if (scn.weights.aB > 0 || traj.stepB.cols() > 0) g.g_B = gradient_uB(traj, adj, scn);
  if (scn.weights.aI > 0 && u.u_I.space) {
    GradientU gi = gradient_uI(traj, adj, scn, u);
    g.g_I = std::move(gi.g_I);
    g.g_I_raw = std::move(gi.g_I_raw);
  }
  return g;
}

double gradient_pairing(const GradientU& g, const Control& du) {
  double s = 0.0;
  if (g.g_V.size() > 0 && du.u_V.size() > 0) {
    if (g.g_V.rows() != du.u_V.rows())
      throw std::invalid_argument("gradient_pairing: step grid and control grid differ");
    s += (g.g_V.array() * du.u_V.array()).sum();
  }
  if (g.g_B.size() > 0 && du.u_B.size() > 0) {
    if (g.g_B.rows() != du.u_B.rows())
      throw std::invalid_argument("gradient_pairing: step grid and control grid differ");
    s += (g.g_B.array() * du.u_B.array()).sum();
  }
  if (g.g_I_raw.size() > 0 && du.u_I.space) s += g.g_I_raw.dot(du.u_I.x);
  return s;
}

} // namespace chns
