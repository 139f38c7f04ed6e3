#include "chns/assembly.hpp"

#include <functional>

namespace chns {

BasisCache::BasisCache(const QuadratureRule& r) : rule(r), nq(r.size()) {
  p1.resize(nq);
  p2.resize(nq);
  p2_dl.resize(nq);
  for (int q = 0; q < nq; ++q) {
    const auto& l = r.points[q];
    p1[q] = {l[0], l[1], l[2]};
    p2[q] = {l[0] * (2 * l[0] - 1), l[1] * (2 * l[1] - 1), l[2] * (2 * l[2] - 1),
             4 * l[0] * l[1],       4 * l[1] * l[2],       4 * l[2] * l[0]};
    auto& d = p2_dl[q];
    for (auto& row : d) row = {0, 0, 0};
    for (int k = 0; k < 3; ++k) d[k][k] = 4 * l[k] - 1;
    d[3][0] = 4 * l[1];
    d[3][1] = 4 * l[0];
    d[4][1] = 4 * l[2];
    d[4][2] = 4 * l[1];
    d[5][2] = 4 * l[0];
    d[5][0] = 4 * l[2];
  }
}

CellGeom cell_geom(const Mesh& mesh, int t) {
  CellGeom g;
  const auto& v = mesh.tri(t).v;
  g.x[0] = mesh.vertex(v[0]);
  g.x[1] = mesh.vertex(v[1]);
  g.x[2] = mesh.vertex(v[2]);
  const double det = (g.x[1].x() - g.x[0].x()) * (g.x[2].y() - g.x[0].y()) -
                     (g.x[1].y() - g.x[0].y()) * (g.x[2].x() - g.x[0].x());
  g.area = 0.5 * det;
  g.dl[0] = Vec2(g.x[1].y() - g.x[2].y(), g.x[2].x() - g.x[1].x()) / det;
  g.dl[1] = Vec2(g.x[2].y() - g.x[0].y(), g.x[0].x() - g.x[2].x()) / det;
  g.dl[2] = Vec2(g.x[0].y() - g.x[1].y(), g.x[1].x() - g.x[0].x()) / det;
  return g;
}

namespace {

// gradients of the six P2 shape functions at quadrature point q
inline void p2_grads(const BasisCache& bc, const CellGeom& g, int q, Vec2 gn[6]) {
  for (int i = 0; i < 6; ++i) {
    const auto& c = bc.p2_dl[q][i];
    gn[i] = c[0] * g.dl[0] + c[1] * g.dl[1] + c[2] * g.dl[2];
  }
}

inline double wq(const BasisCache& bc, const CellGeom& g, int q) {
  // reference weights sum to 1/2; physical scale is 2*area
  return bc.rule.weights[q] * 2.0 * g.area;
}

} // namespace

QpScalar sample_p1(const ScalarField& f, const BasisCache& bc) {
  const Mesh& mesh = f.space->mesh();
  QpScalar out(static_cast<size_t>(mesh.nt()) * bc.nq);
  for (int t = 0; t < mesh.nt(); ++t) {
    const auto& v = mesh.tri(t).v;
    for (int q = 0; q < bc.nq; ++q) {
      const auto& l = bc.p1[q];
      out[t * bc.nq + q] = l[0] * f.x[v[0]] + l[1] * f.x[v[1]] + l[2] * f.x[v[2]];
    }
  }
  return out;
}

QpVec gradients_p1(const ScalarField& f) {
  const Mesh& mesh = f.space->mesh();
  QpVec out(mesh.nt());
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& v = mesh.tri(t).v;
    out[t] = f.x[v[0]] * g.dl[0] + f.x[v[1]] * g.dl[1] + f.x[v[2]] * g.dl[2];
  }
  return out;
}

QpVec sample_p2(const VectorField& f, const BasisCache& bc) {
  const Mesh& mesh = f.space->mesh();
  QpVec out(static_cast<size_t>(mesh.nt()) * bc.nq, Vec2::Zero());
  int dofs[12];
  for (int t = 0; t < mesh.nt(); ++t) {
    f.space->cell_dofs(t, dofs);
    for (int q = 0; q < bc.nq; ++q) {
      Vec2 val = Vec2::Zero();
      for (int k = 0; k < 6; ++k) {
        val.x() += bc.p2[q][k] * f.x[dofs[2 * k]];
        val.y() += bc.p2[q][k] * f.x[dofs[2 * k + 1]];
      }
      out[t * bc.nq + q] = val;
    }
  }
  return out;
}

QpMat sample_grad_p2(const VectorField& f, const BasisCache& bc) {
  const Mesh& mesh = f.space->mesh();
  QpMat out(static_cast<size_t>(mesh.nt()) * bc.nq, Eigen::Matrix2d::Zero());
  int dofs[12];
  Vec2 gn[6];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    f.space->cell_dofs(t, dofs);
    for (int q = 0; q < bc.nq; ++q) {
      p2_grads(bc, g, q, gn);
      Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
      for (int k = 0; k < 6; ++k) {
        m.row(0) += f.x[dofs[2 * k]] * gn[k].transpose();
        m.row(1) += f.x[dofs[2 * k + 1]] * gn[k].transpose();
      }
      out[t * bc.nq + q] = m;
    }
  }
  return out;
}

QpScalar map_qp(const QpScalar& in, const std::function<double(double)>& f) {
  QpScalar out(in.size());
  for (size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return out;
}

void mass_p1(const Mesh& mesh, const BasisCache& bc, const QpScalar& w, Sink s) {
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& v = mesh.tri(t).v;
    double loc[3][3] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const double ww = wq(bc, g, q) * (w.empty() ? 1.0 : w[t * bc.nq + q]);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) loc[i][j] += ww * bc.p1[q][i] * bc.p1[q][j];
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s.add(v[i], v[j], loc[i][j]);
  }
}

void stiffness_p1(const Mesh& mesh, const BasisCache& bc, const QpScalar& w, Sink s) {
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& v = mesh.tri(t).v;
    double wsum = 0.0;
    for (int q = 0; q < bc.nq; ++q) wsum += wq(bc, g, q) * (w.empty() ? 1.0 : w[t * bc.nq + q]);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s.add(v[i], v[j], wsum * g.dl[i].dot(g.dl[j]));
  }
}

void mass_p2(const Mesh& mesh, const BasisCache& bc, const QpScalar& w, Sink s) {
  int dofs[12];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const FeSpace* dummy = nullptr;
    (void)dummy;
    double loc[6][6] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const double ww = wq(bc, g, q) * (w.empty() ? 1.0 : w[t * bc.nq + q]);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) loc[i][j] += ww * bc.p2[q][i] * bc.p2[q][j];
    }
    // per-component blocks
    const auto& v = mesh.tri(t).v;
    const int nv = mesh.nv();
    const int nodes[6] = {v[0], v[1], v[2], nv + mesh.edge_index(v[0], v[1]),
                          nv + mesh.edge_index(v[1], v[2]), nv + mesh.edge_index(v[2], v[0])};
    for (int n = 0; n < 6; ++n) {
      dofs[2 * n] = 2 * nodes[n];
      dofs[2 * n + 1] = 2 * nodes[n] + 1;
    }
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        for (int c = 0; c < 2; ++c) s.add(dofs[2 * i + c], dofs[2 * j + c], loc[i][j]);
  }
}

namespace {

inline void p2_cell_dofs(const Mesh& mesh, int t, int dofs[12]) {
  const auto& v = mesh.tri(t).v;
  const int nv = mesh.nv();
  const int nodes[6] = {v[0], v[1], v[2], nv + mesh.edge_index(v[0], v[1]),
                        nv + mesh.edge_index(v[1], v[2]), nv + mesh.edge_index(v[2], v[0])};
  for (int n = 0; n < 6; ++n) {
    dofs[2 * n] = 2 * nodes[n];
    dofs[2 * n + 1] = 2 * nodes[n] + 1;
  }
}

} // namespace

void viscous_p2(const Mesh& mesh, const BasisCache& bc, const QpScalar& eta, Sink s) {
  int dofs[12];
  Vec2 gn[6];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    p2_cell_dofs(mesh, t, dofs);
    double loc[12][12] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const double ww = wq(bc, g, q) * (eta.empty() ? 1.0 : eta[t * bc.nq + q]);
      p2_grads(bc, g, q, gn);
      // 2 eta D_j : D_i = eta [ delta_cd (gj.gi) + gj_d gi_c ]
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
          const double dot = gn[i].dot(gn[j]);
          for (int c = 0; c < 2; ++c)
            for (int d = 0; d < 2; ++d) {
              const double val = ww * ((c == d ? dot : 0.0) + gn[j][d] * gn[i][c]);
              loc[2 * i + d][2 * j + c] += val;
            }
        }
    }
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j)
        if (loc[i][j] != 0.0) s.add(dofs[i], dofs[j], loc[i][j]);
  }
}

void divergence(const Mesh& mesh, const BasisCache& bc, double sign, Sink s) {
  int dofs[12];
  Vec2 gn[6];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& v = mesh.tri(t).v;
    p2_cell_dofs(mesh, t, dofs);
    double loc[3][12] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const double ww = wq(bc, g, q) * sign;
      p2_grads(bc, g, q, gn);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 6; ++j)
          for (int c = 0; c < 2; ++c) loc[i][2 * j + c] += ww * bc.p1[q][i] * gn[j][c];
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 12; ++j)
        if (loc[i][j] != 0.0) s.add(v[i], dofs[j], loc[i][j]);
  }
}

void pressure_gradient(const Mesh& mesh, const BasisCache& bc, double sign, Sink s) {
  int dofs[12];
  Vec2 gn[6];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& v = mesh.tri(t).v;
    p2_cell_dofs(mesh, t, dofs);
    double loc[12][3] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const double ww = wq(bc, g, q) * sign;
      p2_grads(bc, g, q, gn);
      for (int i = 0; i < 6; ++i)
        for (int c = 0; c < 2; ++c)
          for (int j = 0; j < 3; ++j) loc[2 * i + c][j] += ww * bc.p1[q][j] * gn[i][c];
    }
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 3; ++j)
        if (loc[i][j] != 0.0) s.add(dofs[i], v[j], loc[i][j]);
  }
}

void scalar_times_vec(const Mesh& mesh, const BasisCache& bc, const QpVec& gphi, double sign,
                      Sink s) {
  int dofs[12];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& v = mesh.tri(t).v;
    p2_cell_dofs(mesh, t, dofs);
    double loc[12][3] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const double ww = wq(bc, g, q) * sign;
      const Vec2& gp = gphi[t * bc.nq + q];
      for (int i = 0; i < 6; ++i)
        for (int c = 0; c < 2; ++c)
          for (int j = 0; j < 3; ++j)
            loc[2 * i + c][j] += ww * bc.p1[q][j] * gp[c] * bc.p2[q][i];
    }
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 3; ++j)
        if (loc[i][j] != 0.0) s.add(dofs[i], v[j], loc[i][j]);
  }
}

void transport_p2(const Mesh& mesh, const BasisCache& bc, const QpVec& gphi, Sink s) {
  int dofs[12];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& v = mesh.tri(t).v;
    p2_cell_dofs(mesh, t, dofs);
    double loc[3][12] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const double ww = wq(bc, g, q);
      const Vec2& gp = gphi[t * bc.nq + q];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 6; ++j)
          for (int c = 0; c < 2; ++c)
            loc[i][2 * j + c] += ww * bc.p1[q][i] * bc.p2[q][j] * gp[c];
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 12; ++j)
        if (loc[i][j] != 0.0) s.add(v[i], dofs[j], loc[i][j]);
  }
}

void trilinear_second(const Mesh& mesh, const BasisCache& bc, const QpVec& b, Sink s) {
  int dofs[12];
  Vec2 gn[6];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    p2_cell_dofs(mesh, t, dofs);
    double loc[6][6] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const double ww = 0.5 * wq(bc, g, q);
      p2_grads(bc, g, q, gn);
      const Vec2& u = b[t * bc.nq + q];
      double adv[6];
      for (int k = 0; k < 6; ++k) adv[k] = gn[k].dot(u);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
          loc[i][j] += ww * (adv[j] * bc.p2[q][i] - adv[i] * bc.p2[q][j]);
    }
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        if (loc[i][j] != 0.0)
          for (int c = 0; c < 2; ++c) s.add(dofs[2 * i + c], dofs[2 * j + c], loc[i][j]);
  }
}

void trilinear_first_p2(const Mesh& mesh, const BasisCache& bc, const QpScalar& c, const QpVec& V,
                        const QpMat& gV, Sink s) {
  int dofs[12];
  Vec2 gn[6];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    p2_cell_dofs(mesh, t, dofs);
    double loc[12][12] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const size_t idx = t * bc.nq + q;
      const double ww = 0.5 * wq(bc, g, q) * (c.empty() ? 1.0 : c[idx]);
      p2_grads(bc, g, q, gn);
      const Eigen::Matrix2d& G = gV[idx];
      const Vec2& Vv = V[idx];
      for (int j = 0; j < 6; ++j)
        for (int cj = 0; cj < 2; ++cj)
          for (int i = 0; i < 6; ++i)
            for (int ci = 0; ci < 2; ++ci)
              loc[2 * i + ci][2 * j + cj] +=
                  ww * bc.p2[q][j] * (bc.p2[q][i] * G(ci, cj) - gn[i][cj] * Vv[ci]);
    }
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j)
        if (loc[i][j] != 0.0) s.add(dofs[i], dofs[j], loc[i][j]);
  }
}

void trilinear_first_p1(const Mesh& mesh, const BasisCache& bc, const QpScalar& c, const QpVec& u,
                        const QpVec& V, const QpMat& gV, Sink s) {
  int dofs[12];
  Vec2 gn[6];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& vv = mesh.tri(t).v;
    p2_cell_dofs(mesh, t, dofs);
    double loc[12][3] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const size_t idx = t * bc.nq + q;
      const double ww = 0.5 * wq(bc, g, q) * (c.empty() ? 1.0 : c[idx]);
      if (ww == 0.0) continue;
      p2_grads(bc, g, q, gn);
      const Vec2 Gu = gV[idx] * u[idx];
      const Vec2& Vv = V[idx];
      for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 6; ++i)
          for (int ci = 0; ci < 2; ++ci)
            loc[2 * i + ci][j] +=
                ww * bc.p1[q][j] * (bc.p2[q][i] * Gu[ci] - gn[i].dot(u[idx]) * Vv[ci]);
    }
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 3; ++j)
        if (loc[i][j] != 0.0) s.add(dofs[i], vv[j], loc[i][j]);
  }
}

void trilinear_first_gradp1(const Mesh& mesh, const BasisCache& bc, double coef, const QpVec& V,
                            const QpMat& gV, Sink s) {
  int dofs[12];
  Vec2 gn[6];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& vv = mesh.tri(t).v;
    p2_cell_dofs(mesh, t, dofs);
    double loc[12][3] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const size_t idx = t * bc.nq + q;
      const double ww = 0.5 * wq(bc, g, q);
      p2_grads(bc, g, q, gn);
      const Eigen::Matrix2d& G = gV[idx];
      const Vec2& Vv = V[idx];
      for (int j = 0; j < 3; ++j) {
        const Vec2 uj = coef * g.dl[j]; // grad of P1 basis j, scaled
        const Vec2 Gu = G * uj;
        for (int i = 0; i < 6; ++i)
          for (int ci = 0; ci < 2; ++ci)
            loc[2 * i + ci][j] += ww * (bc.p2[q][i] * Gu[ci] - gn[i].dot(uj) * Vv[ci]);
      }
    }
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 3; ++j)
        if (loc[i][j] != 0.0) s.add(dofs[i], vv[j], loc[i][j]);
  }
}

void p1_times_vec(const Mesh& mesh, const BasisCache& bc, const QpScalar& c, const QpVec& V,
                  Sink s) {
  int dofs[12];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& vv = mesh.tri(t).v;
    p2_cell_dofs(mesh, t, dofs);
    double loc[12][3] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const size_t idx = t * bc.nq + q;
      const double ww = wq(bc, g, q) * (c.empty() ? 1.0 : c[idx]);
      if (ww == 0.0) continue;
      const Vec2& Vv = V[idx];
      for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 6; ++i)
          for (int ci = 0; ci < 2; ++ci)
            loc[2 * i + ci][j] += ww * bc.p1[q][j] * Vv[ci] * bc.p2[q][i];
    }
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 3; ++j)
        if (loc[i][j] != 0.0) s.add(dofs[i], vv[j], loc[i][j]);
  }
}

void viscous_dphi(const Mesh& mesh, const BasisCache& bc, const QpScalar& c, const QpMat& gV,
                  Sink s) {
  int dofs[12];
  Vec2 gn[6];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& vv = mesh.tri(t).v;
    p2_cell_dofs(mesh, t, dofs);
    double loc[12][3] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const size_t idx = t * bc.nq + q;
      const double ww = wq(bc, g, q) * (c.empty() ? 1.0 : c[idx]);
      if (ww == 0.0) continue;
      p2_grads(bc, g, q, gn);
      const Eigen::Matrix2d DV = 0.5 * (gV[idx] + gV[idx].transpose());
      for (int i = 0; i < 6; ++i) {
        const Vec2 Dg = DV * gn[i];
        for (int ci = 0; ci < 2; ++ci)
          for (int j = 0; j < 3; ++j)
            loc[2 * i + ci][j] += ww * 2.0 * bc.p1[q][j] * Dg[ci];
      }
    }
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 3; ++j)
        if (loc[i][j] != 0.0) s.add(dofs[i], vv[j], loc[i][j]);
  }
}

void grad_p1_times_scalar(const Mesh& mesh, const BasisCache& bc, const QpScalar& m, double sign,
                          Sink s) {
  int dofs[12];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& vv = mesh.tri(t).v;
    p2_cell_dofs(mesh, t, dofs);
    double loc[12][3] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const double ww = wq(bc, g, q) * sign * (m.empty() ? 1.0 : m[t * bc.nq + q]);
      for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 6; ++i)
          for (int ci = 0; ci < 2; ++ci)
            loc[2 * i + ci][j] += ww * g.dl[j][ci] * bc.p2[q][i];
    }
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 3; ++j)
        if (loc[i][j] != 0.0) s.add(dofs[i], vv[j], loc[i][j]);
  }
}

void transport_gradp1(const Mesh& mesh, const BasisCache& bc, const QpVec& V, Sink s) {
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& vv = mesh.tri(t).v;
    double loc[3][3] = {};
    for (int q = 0; q < bc.nq; ++q) {
      const double ww = wq(bc, g, q);
      const Vec2& Vv = V[t * bc.nq + q];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) loc[i][j] += ww * bc.p1[q][i] * Vv.dot(g.dl[j]);
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (loc[i][j] != 0.0) s.add(vv[i], vv[j], loc[i][j]);
  }
}

void load_p2(const Mesh& mesh, const BasisCache& bc, const QpVec& F, Eigen::VectorXd& out,
             int off) {
  int dofs[12];
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    p2_cell_dofs(mesh, t, dofs);
    for (int q = 0; q < bc.nq; ++q) {
      const double ww = wq(bc, g, q);
      const Vec2& Fv = F[t * bc.nq + q];
      for (int i = 0; i < 6; ++i) {
        out[off + dofs[2 * i]] += ww * bc.p2[q][i] * Fv.x();
        out[off + dofs[2 * i + 1]] += ww * bc.p2[q][i] * Fv.y();
      }
    }
  }
}

void load_p1(const Mesh& mesh, const BasisCache& bc, const QpScalar& f, Eigen::VectorXd& out,
             int off) {
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const auto& v = mesh.tri(t).v;
    for (int q = 0; q < bc.nq; ++q) {
      const double ww = wq(bc, g, q) * (f.empty() ? 1.0 : f[t * bc.nq + q]);
      for (int i = 0; i < 3; ++i) out[off + v[i]] += ww * bc.p1[q][i];
    }
  }
}

double integrate(const Mesh& mesh, const BasisCache& bc, const QpScalar& f) {
  double s = 0.0;
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    for (int q = 0; q < bc.nq; ++q) s += wq(bc, g, q) * f[t * bc.nq + q];
  }
  return s;
}

SpMat assemble_mass_p1(const Mesh& mesh, int order) {
  BasisCache bc(quadrature(order));
  std::vector<Triplet> trips;
  mass_p1(mesh, bc, {}, Sink{&trips, 0, 0});
  SpMat M(mesh.nv(), mesh.nv());
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

SpMat assemble_stiffness_p1(const Mesh& mesh, int order) {
  BasisCache bc(quadrature(order));
  std::vector<Triplet> trips;
  stiffness_p1(mesh, bc, {}, Sink{&trips, 0, 0});
  SpMat K(mesh.nv(), mesh.nv());
  K.setFromTriplets(trips.begin(), trips.end());
  return K;
}

} // namespace chns
