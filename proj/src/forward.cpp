#include "chns/forward.hpp"

#include <cmath>

#include "chns/errors.hpp"

namespace chns {

StepLayout StepLayout::of(const Mesh& m) {
  StepLayout l;
  l.nv2 = 2 * (m.nv() + m.ne());
  l.ns = m.nv();
  l.off_v = 0;
  l.off_p = l.nv2;
  l.off_phi = l.nv2 + l.ns;
  l.off_mu = l.nv2 + 2 * l.ns;
  l.off_gauge = l.nv2 + 3 * l.ns;
  l.N = l.off_gauge + 1;
  return l;
}

MeshCache::MeshCache(std::shared_ptr<const Mesh> m, const ScenarioData& scn)
    : mesh(std::move(m)),
      vspace(FeSpace::p2vec(mesh)),
      sspace(FeSpace::p1(mesh)),
      layout(StepLayout::of(*mesh)),
      bc2(quadrature(2)),
      bc4(quadrature(4)),
      bc5(quadrature(5)) {
  mass_s = assemble_mass_p1(*mesh);
  gauge = Eigen::VectorXd::Zero(layout.ns);
  load_p1(*mesh, bc2, {}, gauge, 0);
  bdofs = vspace->boundary_dofs();
  is_bdof.assign(layout.nv2, 0);
  for (int d : bdofs) is_bdof[d] = 1;

  if (scn.ansatz.n_boundary() > 0)
    blifts = boundary_channel_lifts(scn.ansatz, *vspace);
  else
    blifts = Eigen::MatrixXd::Zero(layout.nv2, 0);

  vloads.resize(scn.ansatz.n_volume());
  for (int l = 0; l < scn.ansatz.n_volume(); ++l) {
    QpVec F(static_cast<size_t>(mesh->nt()) * bc5.nq);
    for (int t = 0; t < mesh->nt(); ++t) {
      const CellGeom g = cell_geom(*mesh, t);
      for (int q = 0; q < bc5.nq; ++q)
        F[t * bc5.nq + q] = bump_eval(scn.ansatz.volume[l], qp_coord(g, bc5.rule, q));
    }
    vloads[l] = Eigen::VectorXd::Zero(layout.nv2);
    load_p2(*mesh, bc5, F, vloads[l], 0);
  }

  forward_lu = std::make_shared<LuSolver>();
  adjoint_lu = std::make_shared<LuSolver>();
  ch_lu = std::make_shared<LuSolver>();
}

namespace {

QpVec expand_cells(const QpVec& per_cell, int nq) {
  QpVec out(per_cell.size() * nq);
  for (size_t t = 0; t < per_cell.size(); ++t)
    for (int q = 0; q < nq; ++q) out[t * nq + q] = per_cell[t];
  return out;
}

QpScalar qp_constant(double v, int nt, int nq) {
  return QpScalar(static_cast<size_t>(nt) * nq, v);
}

// Per-step sampled data shared by the linear-part assembly, the Jacobian and
// the cross-step Jacobians.
struct StepSamples {
  QpScalar rho_prev, rho_prev2, eta_prev; // at bc5 points
  QpScalar drho_prev;                     // rho'(phi^{m-1})
  QpVec trans;                            // rho^{m-1} v^{m-1} + J^{m-1} at bc5
  QpVec gphi_prev4;                       // grad phi^{m-1}, expanded at bc4
  QpVec v_prev5;                          // v^{m-1} at bc5
};

StepSamples sample_two_step(const StepRefs& r) {
  const MeshCache& c = *r.cache;
  const Mesh& mesh = *c.mesh;
  const MaterialLaws& laws = r.scn->materials;
  StepSamples s;

  const QpScalar phi_prev5 = sample_p1(*r.phi_prev, c.bc5);
  const QpScalar phi_prev25 = sample_p1(*r.phi_prev2, c.bc5);
  s.rho_prev = map_qp(phi_prev5, [&](double p) { return laws.density(p); });
  s.rho_prev2 = map_qp(phi_prev25, [&](double p) { return laws.density(p); });
  s.eta_prev = map_qp(phi_prev5, [&](double p) { return laws.viscosity(p); });
  s.drho_prev = map_qp(phi_prev5, [&](double p) { return laws.ddensity(p); });

  s.v_prev5 = sample_p2(*r.v_prev, c.bc5);
  const QpVec gmu_prev = expand_cells(gradients_p1(*r.mu_prev), c.bc5.nq);
  const double jcoef = -laws.rho_delta() * r.scn->mobility;
  s.trans.resize(s.v_prev5.size());
  for (size_t i = 0; i < s.trans.size(); ++i)
    s.trans[i] = s.rho_prev[i] * s.v_prev5[i] + jcoef * gmu_prev[i];

  s.gphi_prev4 = expand_cells(gradients_p1(*r.phi_prev), c.bc4.nq);
  return s;
}

// Linear (frozen-coefficient) part of the two-step system plus the constant
// right-hand side. Everything except the W'_+ term.
void assemble_two_step_linear(const StepRefs& r, const StepSamples& s,
                              std::vector<Triplet>& trips, Eigen::VectorXd& b_const) {
  const MeshCache& c = *r.cache;
  const StepLayout& L = c.layout;
  const Mesh& mesh = *c.mesh;
  const ScenarioData& scn = *r.scn;
  const double inv_tau = 1.0 / r.tau;

  // momentum rows
  QpScalar rho_avg(s.rho_prev.size());
  for (size_t i = 0; i < rho_avg.size(); ++i)
    rho_avg[i] = 0.5 * (s.rho_prev[i] + s.rho_prev2[i]) * inv_tau;
  mass_p2(mesh, c.bc5, rho_avg, Sink{&trips, L.off_v, L.off_v});
  trilinear_second(mesh, c.bc5, s.trans, Sink{&trips, L.off_v, L.off_v});
  viscous_p2(mesh, c.bc5, s.eta_prev, Sink{&trips, L.off_v, L.off_v});
  pressure_gradient(mesh, c.bc4, -1.0, Sink{&trips, L.off_v, L.off_p});
  scalar_times_vec(mesh, c.bc4, s.gphi_prev4, -1.0, Sink{&trips, L.off_v, L.off_mu});

  // continuity rows + pressure gauge
  divergence(mesh, c.bc4, 1.0, Sink{&trips, L.off_p, L.off_v});
  for (int i = 0; i < L.ns; ++i) {
    trips.emplace_back(L.off_p + i, L.off_gauge, c.gauge[i]);
    trips.emplace_back(L.off_gauge, L.off_p + i, c.gauge[i]);
  }

  // transport rows
  for (int k = 0; k < c.mass_s.outerSize(); ++k)
    for (SpMat::InnerIterator it(c.mass_s, k); it; ++it) {
      trips.emplace_back(L.off_phi + it.row(), L.off_phi + it.col(), inv_tau * it.value());
      trips.emplace_back(L.off_mu + it.row(), L.off_mu + it.col(), -it.value());
    }
  {
    BasisCache bcs(quadrature(2));
    std::vector<Triplet> stiff;
    stiffness_p1(mesh, bcs, {}, Sink{&stiff, 0, 0});
    for (const auto& t : stiff) {
      trips.emplace_back(L.off_phi + t.row(), L.off_mu + t.col(), scn.mobility * t.value());
      trips.emplace_back(L.off_mu + t.row(), L.off_phi + t.col(),
                         scn.sigma * scn.eps * t.value());
    }
  }
  transport_p2(mesh, c.bc4, s.gphi_prev4, Sink{&trips, L.off_phi, L.off_v});

  // constant right-hand side
  b_const.setZero(L.N);
  QpVec F(s.v_prev5.size());
  for (size_t i = 0; i < F.size(); ++i)
    F[i] = inv_tau * s.rho_prev2[i] * s.v_prev5[i] + s.rho_prev[i] * scn.K;
  load_p2(mesh, c.bc5, F, b_const, L.off_v);
  b_const.segment(L.off_v, L.nv2) += r.bv_load;

  b_const.segment(L.off_phi, L.ns) += inv_tau * (c.mass_s * r.phi_prev->x);

  const QpScalar phi_prev5 = sample_p1(*r.phi_prev, c.bc5);
  const QpScalar wminus = map_qp(
      phi_prev5, [&](double p) { return -(scn.sigma / scn.eps) * scn.energy.dw_minus(p); });
  load_p1(mesh, c.bc5, wminus, b_const, L.off_mu);
}

// (sigma/eps)(W'_+(phi), Phi) into the potential rows.
void add_wplus_residual(const StepRefs& r, const Eigen::VectorXd& phi, Eigen::VectorXd& R,
                        int off_mu, bool freeze_at_zero_iterate, const Eigen::VectorXd* phi0) {
  const MeshCache& c = *r.cache;
  const ScenarioData& scn = *r.scn;
  ScalarField f(c.sspace);
  f.x = freeze_at_zero_iterate ? *phi0 : phi;
  const QpScalar pq = sample_p1(f, c.bc5);
  const QpScalar w =
      map_qp(pq, [&](double p) { return (scn.sigma / scn.eps) * scn.energy.dw_plus(p); });
  load_p1(*c.mesh, c.bc5, w, R, off_mu);
}

void add_wplus_jacobian(const StepRefs& r, const Eigen::VectorXd& phi, std::vector<Triplet>& trips,
                        int off_mu, int off_phi, bool freeze) {
  const MeshCache& c = *r.cache;
  const ScenarioData& scn = *r.scn;
  ScalarField f(c.sspace);
  f.x = phi;
  const QpScalar pq = sample_p1(f, c.bc5);
  const QpScalar w = map_qp(pq, [&](double p) {
    return freeze ? 0.0 : (scn.sigma / scn.eps) * scn.energy.d2w_plus(p);
  });
  mass_p1(*c.mesh, c.bc5, w, Sink{&trips, off_mu, off_phi});
}

// Momentum + continuity blocks of the init step given (phi1, mu1); used by
// the sequential forward solve and by the monolithic init Jacobian.
struct InitMomentumData {
  QpScalar rho1, rho0, eta1, drho1;
  QpVec trans; // rho(phi1) v0 + J1
  QpVec v0_5;
};

InitMomentumData sample_init(const StepRefs& r, const Eigen::VectorXd& phi1,
                             const Eigen::VectorXd& mu1) {
  const MeshCache& c = *r.cache;
  const MaterialLaws& laws = r.scn->materials;
  InitMomentumData d;
  ScalarField p1f(c.sspace);
  p1f.x = phi1;
  ScalarField m1f(c.sspace);
  m1f.x = mu1;
  const QpScalar phi1q = sample_p1(p1f, c.bc5);
  const QpScalar phi0q = sample_p1(*r.phi_prev, c.bc5);
  d.rho1 = map_qp(phi1q, [&](double p) { return laws.density(p); });
  d.rho0 = map_qp(phi0q, [&](double p) { return laws.density(p); });
  d.eta1 = map_qp(phi1q, [&](double p) { return laws.viscosity(p); });
  d.drho1 = map_qp(phi1q, [&](double p) { return laws.ddensity(p); });
  d.v0_5 = sample_p2(*r.v_prev, c.bc5);
  const QpVec gmu1 = expand_cells(gradients_p1(m1f), c.bc5.nq);
  const double jcoef = -laws.rho_delta() * r.scn->mobility;
  d.trans.resize(d.v0_5.size());
  for (size_t i = 0; i < d.trans.size(); ++i)
    d.trans[i] = d.rho1[i] * d.v0_5[i] + jcoef * gmu1[i];
  return d;
}

void assemble_init_momentum(const StepRefs& r, const InitMomentumData& d,
                            std::vector<Triplet>& trips, int off_v, int off_p, int off_gauge,
                            Eigen::VectorXd* rhs, const Eigen::VectorXd* mu1) {
  const MeshCache& c = *r.cache;
  const StepLayout& L = c.layout;
  const Mesh& mesh = *c.mesh;
  const double inv_tau = 1.0 / r.tau;

  QpScalar rho_avg(d.rho1.size());
  for (size_t i = 0; i < rho_avg.size(); ++i)
    rho_avg[i] = 0.5 * (d.rho1[i] + d.rho0[i]) * inv_tau;
  mass_p2(mesh, c.bc5, rho_avg, Sink{&trips, off_v, off_v});
  trilinear_second(mesh, c.bc5, d.trans, Sink{&trips, off_v, off_v});
  viscous_p2(mesh, c.bc5, d.eta1, Sink{&trips, off_v, off_v});
  pressure_gradient(mesh, c.bc4, -1.0, Sink{&trips, off_v, off_p});
  divergence(mesh, c.bc4, 1.0, Sink{&trips, off_p, off_v});
  for (int i = 0; i < L.ns; ++i) {
    trips.emplace_back(off_p + i, off_gauge, c.gauge[i]);
    trips.emplace_back(off_gauge, off_p + i, c.gauge[i]);
  }

  if (rhs) {
    ScalarField m1f(c.sspace);
    m1f.x = *mu1;
    const QpScalar mu1q = sample_p1(m1f, c.bc5);
    const QpVec gphi0 = expand_cells(gradients_p1(*r.phi_prev), c.bc5.nq);
    QpVec F(d.v0_5.size());
    for (size_t i = 0; i < F.size(); ++i)
      F[i] = inv_tau * d.rho0[i] * d.v0_5[i] + mu1q[i] * gphi0[i] + d.rho0[i] * r.scn->K;
    load_p2(mesh, c.bc5, F, *rhs, off_v);
    rhs->segment(off_v, L.nv2) += r.bv_load;
  }
}

} // namespace

Eigen::VectorXd step_residual(const StepRefs& r, const Eigen::VectorXd& x) {
  if (r.init) throw std::invalid_argument("step_residual: two-step flavor only");
  const MeshCache& c = *r.cache;
  const StepLayout& L = c.layout;
  const StepSamples s = sample_two_step(r);
  std::vector<Triplet> lin;
  Eigen::VectorXd b_const;
  assemble_two_step_linear(r, s, lin, b_const);
  SpMat K(L.N, L.N);
  K.setFromTriplets(lin.begin(), lin.end());
  Eigen::VectorXd R = K * x - b_const;
  add_wplus_residual(r, x.segment(L.off_phi, L.ns), R, L.off_mu, false, nullptr);
  return R;
}

NewtonReport newton_solve(const NewtonAssembler& assemble, Eigen::VectorXd& x, double tol,
                          int max_iter, LuSolver& lu) {
  NewtonReport rep;
  Eigen::VectorXd R;
  SpMat J;
  for (int it = 0; it <= max_iter; ++it) {
    assemble(x, R, J);
    const double rn = R.norm();
    rep.residuals.push_back(rn);
    if (rn <= tol) {
      rep.converged = true;
      rep.iterations = it;
      return rep;
    }
    if (it == max_iter) break;
    lu.factorize(J);
    x -= lu.solve(R);
    rep.iterations = it + 1;
  }
  throw NewtonError("newton_solve: no convergence within max_iter", rep.residuals);
}

SpMat step_jacobian(const StepRefs& r) {
  const MeshCache& c = *r.cache;
  const StepLayout& L = c.layout;
  const Mesh& mesh = *c.mesh;
  const ScenarioData& scn = *r.scn;
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(mesh.nt()) * 400);

  if (!r.init) {
    const StepSamples s = sample_two_step(r);
    Eigen::VectorXd scratch; // the linear-part assembler also fills the rhs
    assemble_two_step_linear(r, s, trips, scratch);
    add_wplus_jacobian(r, r.phi_cur->x, trips, L.off_mu, L.off_phi, scn.newton.freeze_w_plus);
  } else {
    const InitMomentumData d = sample_init(r, r.phi_cur->x, r.mu_cur->x);
    assemble_init_momentum(r, d, trips, L.off_v, L.off_p, L.off_gauge, nullptr, nullptr);

    // momentum sensitivities to the current-step (phi, mu)
    const QpVec v1_5 = sample_p2(*r.v_cur, c.bc5);
    const QpMat gv1_5 = sample_grad_p2(*r.v_cur, c.bc5);
    ScalarField p1f(c.sspace);
    p1f.x = r.phi_cur->x;
    const QpScalar dtauhalf = map_qp(sample_p1(p1f, c.bc5), [&](double p) {
      return 0.5 * scn.materials.ddensity(p) / r.tau;
    });
    p1_times_vec(mesh, c.bc5, dtauhalf, v1_5, Sink{&trips, L.off_v, L.off_phi});
    const QpScalar drho = map_qp(sample_p1(p1f, c.bc5),
                                 [&](double p) { return scn.materials.ddensity(p); });
    trilinear_first_p1(mesh, c.bc5, drho, d.v0_5, v1_5, gv1_5, Sink{&trips, L.off_v, L.off_phi});
    const QpScalar deta = map_qp(sample_p1(p1f, c.bc5),
                                 [&](double p) { return scn.materials.dviscosity(p); });
    viscous_dphi(mesh, c.bc5, deta, gv1_5, Sink{&trips, L.off_v, L.off_phi});

    const QpVec gphi0_5 = expand_cells(gradients_p1(*r.phi_prev), c.bc5.nq);
    scalar_times_vec(mesh, c.bc5, gphi0_5, -1.0, Sink{&trips, L.off_v, L.off_mu});
    trilinear_first_gradp1(mesh, c.bc5, -scn.materials.rho_delta() * scn.mobility, v1_5, gv1_5,
                           Sink{&trips, L.off_v, L.off_mu});

    // Cahn-Hilliard rows (transport uses v^0: no velocity column)
    const double inv_tau = 1.0 / r.tau;
    for (int k = 0; k < c.mass_s.outerSize(); ++k)
      for (SpMat::InnerIterator it(c.mass_s, k); it; ++it) {
        trips.emplace_back(L.off_phi + it.row(), L.off_phi + it.col(), inv_tau * it.value());
        trips.emplace_back(L.off_mu + it.row(), L.off_mu + it.col(), -it.value());
      }
    BasisCache bcs(quadrature(2));
    std::vector<Triplet> stiff;
    stiffness_p1(mesh, bcs, {}, Sink{&stiff, 0, 0});
    for (const auto& t : stiff) {
      trips.emplace_back(L.off_phi + t.row(), L.off_mu + t.col(), scn.mobility * t.value());
      trips.emplace_back(L.off_mu + t.row(), L.off_phi + t.col(), scn.sigma * scn.eps * t.value());
    }
    add_wplus_jacobian(r, r.phi_cur->x, trips, L.off_mu, L.off_phi, scn.newton.freeze_w_plus);
  }

  SpMat J(L.N, L.N);
  J.setFromTriplets(trips.begin(), trips.end());
  return J;
}

SpMat cross_prev_jacobian(const StepRefs& r) {
  // dR^k/dx^{k-1} in step k's layout; r describes step k (two-step flavor).
  const MeshCache& c = *r.cache;
  const StepLayout& L = c.layout;
  const Mesh& mesh = *c.mesh;
  const ScenarioData& scn = *r.scn;
  const MaterialLaws& laws = scn.materials;
  const double inv_tau = 1.0 / r.tau;
  std::vector<Triplet> trips;

  const StepSamples s = sample_two_step(r);
  const QpVec vk5 = sample_p2(*r.v_cur, c.bc5);
  const QpMat gvk5 = sample_grad_p2(*r.v_cur, c.bc5);

  // v columns: mass lag and transport-field sensitivity
  QpScalar neg_rho_prev2(s.rho_prev2.size());
  for (size_t i = 0; i < neg_rho_prev2.size(); ++i) neg_rho_prev2[i] = -inv_tau * s.rho_prev2[i];
  mass_p2(mesh, c.bc5, neg_rho_prev2, Sink{&trips, L.off_v, L.off_v});
  trilinear_first_p2(mesh, c.bc5, s.rho_prev, vk5, gvk5, Sink{&trips, L.off_v, L.off_v});

  // phi columns, momentum rows
  QpScalar half_drho_tau(s.drho_prev.size());
  for (size_t i = 0; i < half_drho_tau.size(); ++i)
    half_drho_tau[i] = 0.5 * inv_tau * s.drho_prev[i];
  p1_times_vec(mesh, c.bc5, half_drho_tau, vk5, Sink{&trips, L.off_v, L.off_phi});
  trilinear_first_p1(mesh, c.bc5, s.drho_prev, s.v_prev5, vk5, gvk5,
                     Sink{&trips, L.off_v, L.off_phi});
  ScalarField phiprevf(c.sspace);
  phiprevf.x = r.phi_prev->x;
  const QpScalar deta = map_qp(sample_p1(phiprevf, c.bc5),
                               [&](double p) { return laws.dviscosity(p); });
  viscous_dphi(mesh, c.bc5, deta, gvk5, Sink{&trips, L.off_v, L.off_phi});
  ScalarField muk(c.sspace);
  muk.x = r.mu_cur->x;
  const QpScalar muk4 = sample_p1(muk, c.bc4);
  grad_p1_times_scalar(mesh, c.bc4, muk4, -1.0, Sink{&trips, L.off_v, L.off_phi});
  {
    QpVec Kv(s.drho_prev.size());
    QpScalar neg_drho(s.drho_prev.size());
    for (size_t i = 0; i < Kv.size(); ++i) {
      Kv[i] = scn.K;
      neg_drho[i] = -s.drho_prev[i];
    }
    p1_times_vec(mesh, c.bc5, neg_drho, Kv, Sink{&trips, L.off_v, L.off_phi});
  }

  // mu columns, momentum rows: diffuse-flux sensitivity
  trilinear_first_gradp1(mesh, c.bc5, -laws.rho_delta() * scn.mobility, vk5, gvk5,
                         Sink{&trips, L.off_v, L.off_mu});

  // transport rows: -(1/tau)(dphi, Psi) + (v^k grad dphi, Psi)
  for (int k = 0; k < c.mass_s.outerSize(); ++k)
    for (SpMat::InnerIterator it(c.mass_s, k); it; ++it)
      trips.emplace_back(L.off_phi + it.row(), L.off_phi + it.col(), -inv_tau * it.value());
  const QpVec vk4 = sample_p2(*r.v_cur, c.bc4);
  transport_gradp1(mesh, c.bc4, vk4, Sink{&trips, L.off_phi, L.off_phi});

  // potential rows: (sigma/eps) W''_-(phi^{k-1}) mass
  const QpScalar w2m = map_qp(sample_p1(phiprevf, c.bc5), [&](double p) {
    return (scn.sigma / scn.eps) * scn.energy.d2w_minus(p);
  });
  mass_p1(mesh, c.bc5, w2m, Sink{&trips, L.off_mu, L.off_phi});

  SpMat C(L.N, L.N);
  C.setFromTriplets(trips.begin(), trips.end());
  return C;
}

SpMat cross_prev2_jacobian(const StepRefs& r) {
  // dR^k/dphi^{k-2}: only the lagged density in the momentum mass term.
  const MeshCache& c = *r.cache;
  const StepLayout& L = c.layout;
  const Mesh& mesh = *c.mesh;
  const MaterialLaws& laws = r.scn->materials;
  const double inv_tau = 1.0 / r.tau;
  std::vector<Triplet> trips;

  ScalarField phi2f(c.sspace);
  phi2f.x = r.phi_prev2->x;
  const QpScalar drho2 = map_qp(sample_p1(phi2f, c.bc5), [&](double p) {
    return inv_tau * laws.ddensity(p);
  });
  const QpVec vk5 = sample_p2(*r.v_cur, c.bc5);
  QpVec V(vk5.size());
  const QpVec vprev5 = sample_p2(*r.v_prev, c.bc5);
  for (size_t i = 0; i < V.size(); ++i) V[i] = 0.5 * vk5[i] - vprev5[i];
  p1_times_vec(mesh, c.bc5, drho2, V, Sink{&trips, L.off_v, L.off_phi});

  SpMat C(L.N, L.N);
  C.setFromTriplets(trips.begin(), trips.end());
  return C;
}

SpMat init_dphi0_jacobian(const StepRefs& r) {
  const MeshCache& c = *r.cache;
  const StepLayout& L = c.layout;
  const Mesh& mesh = *c.mesh;
  const ScenarioData& scn = *r.scn;
  const MaterialLaws& laws = scn.materials;
  const double inv_tau = 1.0 / r.tau;
  std::vector<Triplet> trips;

  ScalarField phi0f(c.sspace);
  phi0f.x = r.phi_prev->x;
  const QpScalar phi0_5 = sample_p1(phi0f, c.bc5);
  const QpScalar drho0 = map_qp(phi0_5, [&](double p) { return laws.ddensity(p); });

  // momentum rows: mass-term and gravity sensitivities, capillary term
  const QpVec v1_5 = sample_p2(*r.v_cur, c.bc5);
  const QpVec v0_5 = sample_p2(*r.v_prev, c.bc5);
  QpVec V(v1_5.size());
  for (size_t i = 0; i < V.size(); ++i) V[i] = inv_tau * (0.5 * v1_5[i] - v0_5[i]);
  p1_times_vec(mesh, c.bc5, drho0, V, Sink{&trips, L.off_v, 0});
  ScalarField mu1f(c.sspace);
  mu1f.x = r.mu_cur->x;
  const QpScalar mu1_5 = sample_p1(mu1f, c.bc5);
  grad_p1_times_scalar(mesh, c.bc5, mu1_5, -1.0, Sink{&trips, L.off_v, 0});
  {
    QpVec Kv(drho0.size());
    QpScalar neg_drho(drho0.size());
    for (size_t i = 0; i < Kv.size(); ++i) {
      Kv[i] = scn.K;
      neg_drho[i] = -drho0[i];
    }
    p1_times_vec(mesh, c.bc5, neg_drho, Kv, Sink{&trips, L.off_v, 0});
  }

  // transport rows: -(1/tau)(P^1 dphi, Psi) + (v^0 grad dphi, Psi)
  for (int k = 0; k < c.mass_s.outerSize(); ++k)
    for (SpMat::InnerIterator it(c.mass_s, k); it; ++it)
      trips.emplace_back(L.off_phi + it.row(), it.col(), -inv_tau * it.value());
  const QpVec v0_4 = sample_p2(*r.v_prev, c.bc4);
  transport_gradp1(mesh, c.bc4, v0_4, Sink{&trips, L.off_phi, 0});

  // potential rows: (sigma/eps) W''_-(phi^0)
  const QpScalar w2m = map_qp(phi0_5, [&](double p) {
    return (scn.sigma / scn.eps) * scn.energy.d2w_minus(p);
  });
  mass_p1(mesh, c.bc5, w2m, Sink{&trips, L.off_mu, 0});

  SpMat C(L.N, L.ns);
  C.setFromTriplets(trips.begin(), trips.end());
  return C;
}

FieldState init_step(const FieldState& state0, const StepRefs& refs, StepReport* report) {
  const MeshCache& c = *refs.cache;
  const StepLayout& L = c.layout;
  const Mesh& mesh = *c.mesh;
  const ScenarioData& scn = *refs.scn;
  const double inv_tau = 1.0 / refs.tau;

  // --- Cahn-Hilliard pair, unknowns [phi; mu] ---
  std::vector<Triplet> ch_lin;
  for (int k = 0; k < c.mass_s.outerSize(); ++k)
    for (SpMat::InnerIterator it(c.mass_s, k); it; ++it) {
      ch_lin.emplace_back(it.row(), it.col(), inv_tau * it.value());
      ch_lin.emplace_back(L.ns + it.row(), L.ns + it.col(), -it.value());
    }
  {
    BasisCache bcs(quadrature(2));
    std::vector<Triplet> stiff;
    stiffness_p1(mesh, bcs, {}, Sink{&stiff, 0, 0});
    for (const auto& t : stiff) {
      ch_lin.emplace_back(t.row(), L.ns + t.col(), scn.mobility * t.value());
      ch_lin.emplace_back(L.ns + t.row(), t.col(), scn.sigma * scn.eps * t.value());
    }
  }
  SpMat K_ch(2 * L.ns, 2 * L.ns);
  K_ch.setFromTriplets(ch_lin.begin(), ch_lin.end());

  Eigen::VectorXd b_ch = Eigen::VectorXd::Zero(2 * L.ns);
  b_ch.head(L.ns) = inv_tau * (c.mass_s * refs.phi_prev->x);
  {
    // transport load (v^0 grad phi^0, Psi)
    const QpVec v0_4 = sample_p2(*refs.v_prev, c.bc4);
    const QpVec gphi0 = expand_cells(gradients_p1(*refs.phi_prev), c.bc4.nq);
    QpScalar adv(v0_4.size());
    for (size_t i = 0; i < adv.size(); ++i) adv[i] = -v0_4[i].dot(gphi0[i]);
    load_p1(mesh, c.bc4, adv, b_ch, 0);
    const QpScalar phi0_5 = sample_p1(*refs.phi_prev, c.bc5);
    const QpScalar wminus = map_qp(
        phi0_5, [&](double p) { return -(scn.sigma / scn.eps) * scn.energy.dw_minus(p); });
    load_p1(mesh, c.bc5, wminus, b_ch, L.ns);
  }

  Eigen::VectorXd z(2 * L.ns);
  z.head(L.ns) = refs.phi_prev->x;
  z.tail(L.ns).setZero();

  const Eigen::VectorXd phi_guess = refs.phi_prev->x;
  NewtonReport nrep = newton_solve(
      [&](const Eigen::VectorXd& x, Eigen::VectorXd& R, SpMat& J) {
        R = K_ch * x - b_ch;
        ScalarField phif(c.sspace);
        // frozen variant evaluates W'_+ at the initial guess
        phif.x = scn.newton.freeze_w_plus ? phi_guess : Eigen::VectorXd(x.head(L.ns));
        const QpScalar pq = sample_p1(phif, c.bc5);
        const QpScalar wp = map_qp(
            pq, [&](double p) { return (scn.sigma / scn.eps) * scn.energy.dw_plus(p); });
        load_p1(mesh, c.bc5, wp, R, L.ns);

        std::vector<Triplet> jt = ch_lin;
        if (!scn.newton.freeze_w_plus) {
          ScalarField cur(c.sspace);
          cur.x = x.head(L.ns);
          const QpScalar w2 = map_qp(sample_p1(cur, c.bc5), [&](double p) {
            return (scn.sigma / scn.eps) * scn.energy.d2w_plus(p);
          });
          mass_p1(mesh, c.bc5, w2, Sink{&jt, L.ns, 0});
        }
        J = SpMat(2 * L.ns, 2 * L.ns);
        J.setFromTriplets(jt.begin(), jt.end());
      },
      z, scn.newton.tol, scn.newton.max_iter, *c.ch_lu);

  FieldState out;
  out.mesh = c.mesh;
  out.vspace = c.vspace;
  out.sspace = c.sspace;
  out.phi = ScalarField(c.sspace, z.head(L.ns));
  out.mu = ScalarField(c.sspace, z.tail(L.ns));

  // --- linear momentum system, unknowns [v; p; gauge] ---
  const InitMomentumData d = sample_init(refs, out.phi.x, out.mu.x);
  std::vector<Triplet> trips;
  const int Nm = L.nv2 + L.ns + 1;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(Nm);
  assemble_init_momentum(refs, d, trips, 0, L.nv2, L.nv2 + L.ns, &rhs, &out.mu.x);

  SparseSystem sys;
  sys.A = SpMat(Nm, Nm);
  sys.A.setFromTriplets(trips.begin(), trips.end());
  sys.b = rhs;
  for (int dof : c.bdofs) sys.dirichlet.emplace_back(dof, refs.vb_values[dof]);
  Eigen::VectorXd x = solve_sparse(sys, 1e-10);

  out.v = VectorField(c.vspace);
  out.v.x = x.head(L.nv2);
  out.p = ScalarField(c.sspace, x.segment(L.nv2, L.ns));
  out.time = state0.time + refs.tau;

  if (report) {
    report->newton = nrep;
    report->tau = refs.tau;
    report->cfl = max_cfl(state0, refs.tau);
  }
  return out;
}

FieldState two_step(const FieldState& prev, const StepRefs& refs, StepReport* report) {
  const MeshCache& c = *refs.cache;
  const StepLayout& L = c.layout;
  const ScenarioData& scn = *refs.scn;

  const StepSamples s = sample_two_step(refs);
  std::vector<Triplet> lin;
  lin.reserve(static_cast<size_t>(c.mesh->nt()) * 400);
  Eigen::VectorXd b_const;
  assemble_two_step_linear(refs, s, lin, b_const);
  SpMat K_lin(L.N, L.N);
  K_lin.setFromTriplets(lin.begin(), lin.end());

  Eigen::VectorXd x(L.N);
  x.segment(L.off_v, L.nv2) = refs.v_prev->x;
  x.segment(L.off_p, L.ns) = prev.p.x; // prev already transferred if needed
  x.segment(L.off_phi, L.ns) = refs.phi_prev->x;
  x.segment(L.off_mu, L.ns) = refs.mu_prev->x;
  x[L.off_gauge] = 0.0;
  for (int dof : c.bdofs) x[L.off_v + dof] = refs.vb_values[dof];

  const Eigen::VectorXd phi_guess = refs.phi_prev->x;

  NewtonReport nrep = newton_solve(
      [&](const Eigen::VectorXd& xc, Eigen::VectorXd& R, SpMat& J) {
        R = K_lin * xc - b_const;
        add_wplus_residual(refs, xc.segment(L.off_phi, L.ns), R, L.off_mu,
                           scn.newton.freeze_w_plus, &phi_guess);
        std::vector<Triplet> jt = lin;
        add_wplus_jacobian(refs, xc.segment(L.off_phi, L.ns), jt, L.off_mu, L.off_phi,
                           scn.newton.freeze_w_plus);
        J = SpMat(L.N, L.N);
        J.setFromTriplets(jt.begin(), jt.end());
        // Dirichlet velocity rows
        std::vector<std::pair<int, double>> rows;
        rows.reserve(c.bdofs.size());
        Eigen::VectorXd dummy = Eigen::VectorXd::Zero(L.N);
        for (int dof : c.bdofs) {
          R[L.off_v + dof] = xc[L.off_v + dof] - refs.vb_values[dof];
          rows.emplace_back(L.off_v + dof, 0.0);
        }
        replace_rows_identity(J, dummy, rows);
      },
      x, scn.newton.tol, scn.newton.max_iter, *c.forward_lu);

  FieldState out;
  out.mesh = c.mesh;
  out.vspace = c.vspace;
  out.sspace = c.sspace;
  out.v = VectorField(c.vspace);
  out.v.x = x.segment(L.off_v, L.nv2);
  out.p = ScalarField(c.sspace, x.segment(L.off_p, L.ns));
  out.phi = ScalarField(c.sspace, x.segment(L.off_phi, L.ns));
  out.mu = ScalarField(c.sspace, x.segment(L.off_mu, L.ns));
  out.time = prev.time + refs.tau;

  if (report) {
    report->newton = nrep;
    report->tau = refs.tau;
    report->cfl = max_cfl(prev, refs.tau);
  }
  return out;
}

std::shared_ptr<MeshCache> make_base_cache(const ScenarioData& scn) {
  auto mesh = std::make_shared<Mesh>(build_rect_mesh(scn.mesh_nx, scn.mesh_ny, scn.domain));
  return std::make_shared<MeshCache>(mesh, scn);
}

FieldState make_initial_state(const ScenarioData& scn, const Control& control,
                              std::shared_ptr<MeshCache> cache) {
  FieldState st;
  st.mesh = cache->mesh;
  st.vspace = cache->vspace;
  st.sspace = cache->sspace;
  st.time = 0.0;
  if (scn.weights.aI > 0 && control.u_I.space) {
    st.phi = interpolate(control.u_I, cache->sspace);
  } else {
    st.phi = make_profile_field(scn.phi0, scn.eps, cache->sspace);
  }
  st.mu = ScalarField(cache->sspace);
  st.p = ScalarField(cache->sspace);
  st.v = VectorField(cache->vspace);
  if (scn.v0) {
    const Mesh& mesh = *cache->mesh;
    const int nv = mesh.nv();
    for (int i = 0; i < nv; ++i) {
      const Vec2 val = scn.v0(mesh.vertex(i));
      st.v.x[2 * i] = val.x();
      st.v.x[2 * i + 1] = val.y();
    }
    for (int e = 0; e < mesh.ne(); ++e) {
      const Edge& ed = mesh.edge(e);
      const Vec2 val = scn.v0(0.5 * (mesh.vertex(ed.a) + mesh.vertex(ed.b)));
      st.v.x[2 * (nv + e)] = val.x();
      st.v.x[2 * (nv + e) + 1] = val.y();
    }
  }
  return st;
}

Trajectory simulate(const Control& control, const ScenarioData& scn) {
  scn.validate();
  auto cache = make_base_cache(scn);
  Trajectory traj;
  traj.control = control;
  traj.states.push_back(make_initial_state(scn, control, cache));
  traj.initial_mass = phase_mass(traj.states[0]);

  std::vector<Eigen::VectorXd> rowsV, rowsB;
  double t = 0.0;
  double tau = scn.tau0;
  int m = 1;
  const double Tend = scn.T;

  while (t < Tend - 1e-12 * Tend) {
    const FieldState& prev = traj.states.back();

    // CFL check with the previous velocity; halve until satisfied
    if (scn.cfl_halving) {
      int halved = 0;
      while (max_cfl(prev, tau) > 1.0 && halved < scn.max_halvings) {
        tau *= 0.5;
        ++halved;
        traj.halving_steps.push_back(m);
      }
      if (max_cfl(prev, tau) > 1.0)
        throw StepError("simulate: CFL not satisfiable within max_halvings", m);
    }

    double tau_step = tau;
    const double remaining = Tend - t;
    if (remaining < 1.5 * tau) tau_step = remaining; // land exactly on T

    auto run_step = [&](double dt) -> std::pair<FieldState, StepReport> {
      StepRefs refs;
      refs.scn = &scn;
      refs.cache = cache.get();
      refs.tau = dt;
      refs.init = (m == 1);
      refs.v_prev = &prev.v;
      refs.phi_prev = &prev.phi;
      refs.mu_prev = (m == 1) ? nullptr : &prev.mu;
      refs.phi_prev2 = (m == 1) ? nullptr : &traj.states[m - 2].phi;

      const Eigen::VectorXd uV = control.average_V(t, t + dt);
      const Eigen::VectorXd uB = control.average_B(t, t + dt);
      refs.bv_load = Eigen::VectorXd::Zero(cache->layout.nv2);
      for (int l = 0; l < uV.size(); ++l)
        if (uV[l] != 0.0) refs.bv_load += uV[l] * cache->vloads[l];
      refs.vb_values = cache->blifts.cols() > 0
                           ? Eigen::VectorXd(cache->blifts * uB)
                           : Eigen::VectorXd::Zero(cache->layout.nv2);

      StepReport rep;
      FieldState next = (m == 1) ? init_step(prev, refs, &rep) : two_step(prev, refs, &rep);
      rowsV.push_back(uV);
      rowsB.push_back(uB);
      return {std::move(next), rep};
    };

    try {
      auto [next, rep] = run_step(tau_step);
      traj.states.push_back(std::move(next));
      traj.reports.push_back(rep);
      traj.tau.push_back(tau_step);
      t += tau_step;
    } catch (const NewtonError&) {
      // adaptive remedy: halve the step and retry once
      tau *= 0.5;
      traj.halving_steps.push_back(m);
      tau_step = tau;
      try {
        auto [next, rep] = run_step(tau_step);
        traj.states.push_back(std::move(next));
        traj.reports.push_back(rep);
        traj.tau.push_back(tau_step);
        t += tau_step;
      } catch (const NewtonError&) {
        throw StepError("simulate: Newton failed twice at step " + std::to_string(m), m);
      }
    }
    ++m;
    if (m > 200000) throw StepError("simulate: runaway step count", m);
  }

  const int M = traj.M();
  traj.stepV = Eigen::MatrixXd::Zero(M, control.u_V.cols());
  traj.stepB = Eigen::MatrixXd::Zero(M, control.u_B.cols());
  for (int k = 0; k < M; ++k) {
    if (rowsV[k].size()) traj.stepV.row(k) = rowsV[k].transpose();
    if (rowsB[k].size()) traj.stepB.row(k) = rowsB[k].transpose();
  }
  return traj;
}

double discrete_energy(const FieldState& state, const ScalarField& phi_prev,
                       const ScenarioData& scn) {
  const Mesh& mesh = *state.mesh;
  BasisCache bc(quadrature(5));
  const QpScalar phiq = sample_p1(state.phi, bc);
  const QpScalar phiprevq = sample_p1(phi_prev, bc);
  const QpVec vq = sample_p2(state.v, bc);
  const QpVec gphi = gradients_p1(state.phi);

  double E = 0.0;
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const double grad2 = gphi[t].squaredNorm();
    for (int q = 0; q < bc.nq; ++q) {
      const double w = bc.rule.weights[q] * 2.0 * g.area;
      const size_t i = t * bc.nq + q;
      E += w * (0.5 * scn.materials.density(phiprevq[i]) * vq[i].squaredNorm() +
                0.5 * scn.sigma * scn.eps * grad2 +
                (scn.sigma / scn.eps) * scn.energy.w(phiq[i]));
    }
  }
  return E;
}

double phase_mass(const FieldState& state) {
  BasisCache bc(quadrature(2));
  Eigen::VectorXd g = Eigen::VectorXd::Zero(state.mesh->nv());
  load_p1(*state.mesh, bc, {}, g, 0);
  return g.dot(state.phi.x);
}

double max_cfl(const FieldState& state, double tau) {
  const Mesh& mesh = *state.mesh;
  double c = 0.0;
  for (int t = 0; t < mesh.nt(); ++t) {
    const auto& v = mesh.tri(t).v;
    double vmax = 0.0;
    for (int k = 0; k < 3; ++k) {
      const Vec2 vv(state.v.x[2 * v[k]], state.v.x[2 * v[k] + 1]);
      vmax = std::max(vmax, vv.norm());
    }
    c = std::max(c, vmax * tau / mesh.tri_diameter(t));
  }
  return c;
}

double divergence_defect(const FieldState& state) {
  const Mesh& mesh = *state.mesh;
  BasisCache bc(quadrature(4));
  std::vector<Triplet> trips;
  divergence(mesh, bc, 1.0, Sink{&trips, 0, 0});
  SpMat B(mesh.nv(), state.vspace->ndof());
  B.setFromTriplets(trips.begin(), trips.end());
  return (B * state.v.x).lpNorm<Eigen::Infinity>();
}

} // namespace chns
