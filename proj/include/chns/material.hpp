#pragma once

#include "chns/assembly.hpp"
#include "chns/fem.hpp"

namespace chns {

// Affine density/viscosity in phi with constant clamps outside (phi_a, phi_b).
struct MaterialLaws {
  double rho1 = 1.0, rho2 = 1.0;
  double eta1 = 1.0, eta2 = 1.0;
  double phi_a = -1.1, phi_b = 1.1;

  double rho_delta() const { return 0.5 * (rho2 - rho1); }

  double density(double phi) const;
  double viscosity(double phi) const;
  // slopes of the clamped laws: constant on (phi_a, phi_b), zero outside
  double ddensity(double phi) const;
  double dviscosity(double phi) const;
};

enum class EnergyFamily { Polynomial, RelaxedDoubleObstacle, DoubleObstacle };
enum class EnergyPart { Total, Plus, Minus };

// Double-well free energy with convex/concave splitting W = W+ + W-.
// The relaxed double-obstacle family penalizes excursions beyond the wells
// cubically with relaxation parameter s; xi places the minima at +-1 and
// the constant shift makes W(+-1) = 0.
class FreeEnergy {
public:
  static FreeEnergy polynomial();
  static FreeEnergy relaxed_double_obstacle(double s);
  static FreeEnergy double_obstacle();

  EnergyFamily family() const { return family_; }
  double s() const { return s_; }
  double xi() const { return xi_; }
  double shift() const { return shift_; }

  // derivative `order` (0..2) of the requested part at x
  double eval(EnergyPart part, int order, double x) const;

  double w(double x) const { return eval(EnergyPart::Total, 0, x); }
  double dw_plus(double x) const { return eval(EnergyPart::Plus, 1, x); }
  double dw_minus(double x) const { return eval(EnergyPart::Minus, 1, x); }
  double d2w_plus(double x) const { return eval(EnergyPart::Plus, 2, x); }
  double d2w_minus(double x) const { return eval(EnergyPart::Minus, 2, x); }

private:
  EnergyFamily family_ = EnergyFamily::Polynomial;
  double s_ = 0.0;
  double xi_ = 0.0;
  double shift_ = 0.0;
};

// Ginzburg-Landau cost of a P1 field with the double-obstacle density:
// integral of (eps/2)|grad u|^2 + W_inf(u)/eps. Throws ConstraintError if
// any nodal value leaves [-1, 1] beyond roundoff.
double double_obstacle_cost(const ScalarField& u, double eps);

} // namespace chns
