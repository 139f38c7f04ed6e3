#pragma once

#include <functional>
#include <optional>
#include <string>

#include "chns/control.hpp"
#include "chns/material.hpp"

namespace chns {

// Circular or stratified sine-ramp phase profile: the value ramps through
// sin(d/eps) across a band of width pi*eps around the zero level set and is
// +-1 outside.
struct PhaseProfile {
  enum class Kind { Constant, Circle, Stratified };
  Kind kind = Kind::Constant;
  double constant = 0.0;
  Vec2 center = Vec2(0.5, 0.5);
  double radius = 0.25;
  double y0 = 0.5;      // interface height for stratified profiles
  double inside = -1.0; // value approached inside the circle / below y0

  double eval(const Vec2& x, double eps) const;
};

// P1 interpolation of a circular sine-ramp profile.
ScalarField make_phase_profile(const Vec2& center, double r, double eps,
                               std::shared_ptr<const FeSpace> space, double inside = -1.0);
ScalarField make_profile_field(const PhaseProfile& p, double eps,
                               std::shared_ptr<const FeSpace> space);

struct NewtonConfig {
  double tol = 1e-10; // absolute, algebraic residual norm
  int max_iter = 25;
  bool freeze_w_plus = false; // structure test: treat W'_+ explicitly
};

struct AdaptConfig {
  double theta = 0.5;    // Doerfler fraction
  double v_max = 3e-4;   // largest admissible cell volume
  double v_min = 1e-6;   // smallest admissible cell volume
  static double v_min_for(double eps) {
    const double d = M_PI * eps / 8.0;
    return 0.5 * d * d;
  }
};

// Everything a forward run needs. Presets fill this from the two benchmark
// configurations; the config layer allows key=value overrides.
struct ScenarioData {
  std::string name = "custom";

  MaterialLaws materials;
  FreeEnergy energy = FreeEnergy::relaxed_double_obstacle(1e4);
  double sigma = 1.0;    // scaled surface tension
  double eps = 0.04;     // interface width parameter
  double mobility = 0.04 / 500.0;
  Vec2 K = Vec2(0.0, -0.981); // gravitational acceleration
  double T = 1.0;
  double tau0 = 5e-3;

  int mesh_nx = 32, mesh_ny = 32;
  Rect domain{0, 0, 1, 1};
  bool fixed_mesh = true;
  bool adapt_state_mesh = false; // re-adapt the state mesh between steps
  AdaptConfig adapt;

  NewtonConfig newton;
  ControlWeights weights;
  AnsatzSet ansatz;
  int control_samples = 0; // 0: one sample per base step

  PhaseProfile phi0;   // used when aI = 0
  PhaseProfile phi_d;  // tracking target
  double uI_init = 0.0;      // initial constant for u_I when aI > 0
  double uI_mean = 0.0;      // prescribed mean of u_I (mass compatibility)
  int control_mesh_nx = 0;   // 0: same as state mesh
  int control_mesh_ny = 0;

  bool cfl_halving = true;
  int max_halvings = 12;

  std::function<Vec2(const Vec2&)> v0; // initial velocity; null = rest

  int steps() const { return std::max(1, static_cast<int>(std::llround(T / tau0))); }
  int samples() const { return control_samples > 0 ? control_samples : steps(); }
  void validate() const;
};

// The two benchmark configurations at publication scale plus desk-scale
// variants sized to run in minutes (deltas documented in the README).
ScenarioData preset_rising_bubble();
ScenarioData preset_rising_bubble_desk();
ScenarioData preset_initial_reconstruction();
ScenarioData preset_initial_reconstruction_desk();
ScenarioData preset_by_name(const std::string& name);
std::vector<std::string> preset_names();

} // namespace chns
