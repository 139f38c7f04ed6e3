#include "chns/material.hpp"

#include <cmath>
#include <stdexcept>

#include "chns/errors.hpp"

namespace chns {

double MaterialLaws::density(double phi) const {
  const double p = std::clamp(phi, phi_a, phi_b);
  return 0.5 * ((rho2 - rho1) * p + (rho1 + rho2));
}

double MaterialLaws::viscosity(double phi) const {
  const double p = std::clamp(phi, phi_a, phi_b);
  return 0.5 * ((eta2 - eta1) * p + (eta1 + eta2));
}

double MaterialLaws::ddensity(double phi) const {
  return (phi > phi_a && phi < phi_b) ? 0.5 * (rho2 - rho1) : 0.0;
}

double MaterialLaws::dviscosity(double phi) const {
  return (phi > phi_a && phi < phi_b) ? 0.5 * (eta2 - eta1) : 0.0;
}

FreeEnergy FreeEnergy::polynomial() {
  FreeEnergy f;
  f.family_ = EnergyFamily::Polynomial;
  return f;
}

FreeEnergy FreeEnergy::relaxed_double_obstacle(double s) {
  if (s <= 0.0) throw std::invalid_argument("relaxed_double_obstacle: s must be positive");
  FreeEnergy f;
  f.family_ = EnergyFamily::RelaxedDoubleObstacle;
  f.s_ = s;
  f.xi_ = (1.0 + 2.0 * s + std::sqrt(4.0 * s + 1.0)) / (2.0 * s);
  // shift chosen so W(+-1) = 0
  const double lam1 = f.xi_ - 1.0;
  f.shift_ = -(0.5 * (1.0 - f.xi_ * f.xi_) + (s / 3.0) * lam1 * lam1 * lam1);
  return f;
}

FreeEnergy FreeEnergy::double_obstacle() {
  FreeEnergy f;
  f.family_ = EnergyFamily::DoubleObstacle;
  return f;
}

namespace {

// lambda(y) = max(0, y-1) + min(0, y+1): distance beyond the well plateau
inline double lam(double y) {
  if (y > 1.0) return y - 1.0;
  if (y < -1.0) return y + 1.0;
  return 0.0;
}

} // namespace

double FreeEnergy::eval(EnergyPart part, int order, double x) const {
  if (order < 0 || order > 2) throw std::invalid_argument("FreeEnergy::eval: order must be 0..2");

  switch (family_) {
  case EnergyFamily::Polynomial: {
    // W = (1-x^2)^2/4 split as W+ = (x^4+1)/4, W- = -x^2/2
    auto plus = [&](int o) {
      if (o == 0) return 0.25 * (x * x * x * x + 1.0);
      if (o == 1) return x * x * x;
      return 3.0 * x * x;
    };
    auto minus = [&](int o) {
      if (o == 0) return -0.5 * x * x;
      if (o == 1) return -x;
      return -1.0;
    };
    if (part == EnergyPart::Plus) return plus(order);
    if (part == EnergyPart::Minus) return minus(order);
    return plus(order) + minus(order);
  }
  case EnergyFamily::RelaxedDoubleObstacle: {
    const double y = xi_ * x;
    const double l = lam(y);
    auto plus = [&](int o) {
      if (o == 0) return (s_ / 3.0) * std::abs(l) * l * l;
      if (o == 1) return s_ * xi_ * std::abs(l) * l;
      return 2.0 * s_ * xi_ * xi_ * std::abs(l);
    };
    auto minus = [&](int o) {
      if (o == 0) return 0.5 * (1.0 - y * y) + shift_;
      if (o == 1) return -xi_ * xi_ * x;
      return -xi_ * xi_;
    };
    if (part == EnergyPart::Plus) return plus(order);
    if (part == EnergyPart::Minus) return minus(order);
    return plus(order) + minus(order);
  }
  case EnergyFamily::DoubleObstacle: {
    // nonsmooth; derivatives are meaningful only inside the box
    const bool inside = std::abs(x) <= 1.0;
    auto total = [&](int o) {
      if (o == 0) return inside ? 0.5 * (1.0 - x * x) : 0.0;
      if (o == 1) return inside ? -x : 0.0;
      return inside ? -1.0 : 0.0;
    };
    if (part == EnergyPart::Plus) return 0.0;
    return total(order);
  }
  }
  return 0.0;
}

double double_obstacle_cost(const ScalarField& u, double eps) {
  for (int i = 0; i < u.x.size(); ++i)
    if (std::abs(u.x[i]) > 1.0 + 1e-12)
      throw ConstraintError("double_obstacle_cost: |u| exceeds 1 at a node");

  const Mesh& mesh = u.space->mesh();
  const BasisCache bc(quadrature(2)); // integrand is quadratic in u
  const QpScalar uq = sample_p1(u, bc);
  const QpVec gu = gradients_p1(u);
  double cost = 0.0;
  for (int t = 0; t < mesh.nt(); ++t) {
    const CellGeom g = cell_geom(mesh, t);
    const double grad2 = gu[t].squaredNorm();
    for (int q = 0; q < bc.nq; ++q) {
      const double w = bc.rule.weights[q] * 2.0 * g.area;
      const double uu = std::clamp(uq[t * bc.nq + q], -1.0, 1.0);
      cost += w * (0.5 * eps * grad2 + (0.5 * (1.0 - uu * uu)) / eps);
    }
  }
  return cost;
}

} // namespace chns
