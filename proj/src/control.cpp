#include "chns/control.hpp"

#include <cmath>
#include <stdexcept>

#include "chns/assembly.hpp"
#include "chns/errors.hpp"
#include "chns/material.hpp"

namespace chns {

double bump_eval_scalar(const BumpAnsatz& b, const Vec2& x) {
  const Vec2 d((x.x() - b.center.x()) / b.width.x(), (x.y() - b.center.y()) / b.width.y());
  const double r = d.norm();
  if (r > 1.0) return 0.0;
  const double c = std::cos(0.5 * M_PI * r);
  return c * c;
}

Vec2 bump_eval(const BumpAnsatz& b, const Vec2& x) {
  Vec2 v = Vec2::Zero();
  v[b.component] = bump_eval_scalar(b, x);
  return v;
}

void AnsatzSet::validate() const {
  std::vector<std::string> problems;
  for (size_t l = 0; l < boundary.size(); ++l) {
    const auto& b = boundary[l];
    const bool side = b.placement == BoundaryMarker::Left || b.placement == BoundaryMarker::Right;
    const bool lid = b.placement == BoundaryMarker::Bottom || b.placement == BoundaryMarker::Top;
    if (!side && !lid)
      problems.push_back("boundary ansatz " + std::to_string(l) + " has no boundary placement");
    // tangential: side walls carry the y component, bottom/top the x component
    else if ((side && b.component != 1) || (lid && b.component != 0))
      problems.push_back("boundary ansatz " + std::to_string(l) +
                         " is not tangential to its segment");
  }
  for (size_t l = 0; l < volume.size(); ++l)
    if (volume[l].placement != BoundaryMarker::Interior)
      problems.push_back("volume ansatz " + std::to_string(l) + " must have interior placement");
  if (!problems.empty()) throw ConfigError(problems);
}

void ControlWeights::validate() const {
  std::vector<std::string> problems;
  if (aI < 0 || aV < 0 || aB < 0) problems.push_back("control weights must be non-negative");
  if (std::abs(aI + aV + aB - 1.0) > 1e-12)
    problems.push_back("control weights must satisfy aI + aV + aB = 1");
  if (alpha <= 0) problems.push_back("alpha must be positive");
  if (!problems.empty()) throw ConfigError(problems);
}

Control Control::zero(double T, int samples, int nV, int nB,
                      std::shared_ptr<const FeSpace> uI_space) {
  Control c;
  c.T = T;
  c.samples = samples;
  c.u_V = Eigen::MatrixXd::Zero(samples, nV);
  c.u_B = Eigen::MatrixXd::Zero(samples, nB);
  if (uI_space) c.u_I = ScalarField(std::move(uI_space));
  return c;
}

namespace {

Eigen::VectorXd average_rows(const Eigen::MatrixXd& rows, double T, int samples, double a,
                             double b) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(rows.cols());
  if (rows.cols() == 0 || b <= a) return out;
  const double dt = T / samples;
  const int k0 = std::clamp(static_cast<int>(std::floor(a / dt)), 0, samples - 1);
  const int k1 = std::clamp(static_cast<int>(std::ceil(b / dt)) - 1, k0, samples - 1);
  for (int k = k0; k <= k1; ++k) {
    const double lo = std::max(a, k * dt);
    const double hi = std::min(b, (k + 1) * dt);
    if (hi > lo) out += (hi - lo) * rows.row(k).transpose();
  }
  return out / (b - a);
}

} // namespace

Eigen::VectorXd Control::average_V(double a, double b) const {
  return average_rows(u_V, T, samples, a, b);
}

Eigen::VectorXd Control::average_B(double a, double b) const {
  return average_rows(u_B, T, samples, a, b);
}

void Control::resample(int new_samples) {
  if (new_samples == samples) return;
  if (new_samples <= 0 || new_samples % samples != 0)
    throw std::invalid_argument("Control::resample: new grid must refine the old one");
  const int f = new_samples / samples;
  Eigen::MatrixXd V(new_samples, u_V.cols()), B(new_samples, u_B.cols());
  for (int k = 0; k < new_samples; ++k) {
    V.row(k) = u_V.row(k / f);
    B.row(k) = u_B.row(k / f);
  }
  u_V = std::move(V);
  u_B = std::move(B);
  samples = new_samples;
}

Control Control::clone_shape_zero() const {
  Control c = *this;
  c.u_V.setZero();
  c.u_B.setZero();
  if (c.u_I.space) c.u_I.x.setZero();
  return c;
}

VectorField apply_BV(const AnsatzSet& ansatz, const Eigen::VectorXd& uV_row,
                     std::shared_ptr<const FeSpace> space) {
  VectorField f(space);
  const Mesh& mesh = space->mesh();
  const int nv = mesh.nv();
  auto node_pos = [&](int node) -> Vec2 {
    if (node < nv) return mesh.vertex(node);
    const Edge& ed = mesh.edge(node - nv);
    return 0.5 * (mesh.vertex(ed.a) + mesh.vertex(ed.b));
  };
  const int nnodes = nv + mesh.ne();
  for (int n = 0; n < nnodes; ++n) {
    const Vec2 x = node_pos(n);
    Vec2 val = Vec2::Zero();
    for (int l = 0; l < ansatz.n_volume(); ++l) val += uV_row[l] * bump_eval(ansatz.volume[l], x);
    f.x[2 * n] = val.x();
    f.x[2 * n + 1] = val.y();
  }
  return f;
}

Eigen::MatrixXd boundary_channel_lifts(const AnsatzSet& ansatz, const FeSpace& space) {
  ansatz.validate();
  Eigen::MatrixXd lifts(space.ndof(), ansatz.n_boundary());
  for (int l = 0; l < ansatz.n_boundary(); ++l) {
    const BumpAnsatz& b = ansatz.boundary[l];
    lifts.col(l) = trace_project([&](const Vec2& x) { return bump_eval(b, x); }, space);
  }
  return lifts;
}

Eigen::VectorXd apply_BB(const Eigen::MatrixXd& lifts, const Eigen::VectorXd& uB_row) {
  if (uB_row.size() != lifts.cols())
    throw std::invalid_argument("apply_BB: channel count mismatch");
  return lifts * uB_row;
}

double inner_U(const Control& a, const Control& b, const ControlWeights& w) {
  if (a.samples != b.samples || a.u_V.cols() != b.u_V.cols() || a.u_B.cols() != b.u_B.cols())
    throw std::invalid_argument("inner_U: incompatible control shapes");
  double s = 0.0;
  const double dt = a.T / a.samples;
  if (w.aV > 0 && a.u_V.cols() > 0) s += w.aV * dt * (a.u_V.array() * b.u_V.array()).sum();
  if (w.aB > 0 && a.u_B.cols() > 0) s += w.aB * dt * (a.u_B.array() * b.u_B.array()).sum();
  if (w.aI > 0 && a.u_I.space) {
    if (!b.u_I.space || b.u_I.x.size() != a.u_I.x.size())
      throw std::invalid_argument("inner_U: incompatible u_I shapes");
    const SpMat K = assemble_stiffness_p1(a.u_I.space->mesh());
    s += w.aI * a.u_I.x.dot(K * b.u_I.x);
  }
  return s;
}

double norm_U(const Control& a, const ControlWeights& w) { return std::sqrt(inner_U(a, a, w)); }

double control_cost(const Control& u, const ControlWeights& w, double eps) {
  double s = 0.0;
  const double dt = u.T / u.samples;
  if (w.aV > 0 && u.u_V.cols() > 0) s += w.aV * dt * u.u_V.array().square().sum();
  if (w.aB > 0 && u.u_B.cols() > 0) s += w.aB * dt * u.u_B.array().square().sum();
  if (w.aI > 0 && u.u_I.space) s += w.aI * double_obstacle_cost(u.u_I, eps);
  return 0.5 * w.alpha * s;
}

} // namespace chns
