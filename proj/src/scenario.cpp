#include "chns/scenario.hpp"

#include <cmath>

#include "chns/errors.hpp"

namespace chns {

double PhaseProfile::eval(const Vec2& x, double eps) const {
  switch (kind) {
  case Kind::Constant:
    return constant;
  case Kind::Circle: {
    const double d = (x - center).norm() - radius;
    double v;
    if (std::abs(d) / eps <= M_PI / 2.0)
      v = std::sin(d / eps);
    else
      v = d > 0 ? 1.0 : -1.0;
    return inside < 0 ? v : -v;
  }
  case Kind::Stratified: {
    const double d = x.y() - y0;
    double v;
    if (std::abs(d) / eps <= M_PI / 2.0)
      v = std::sin(d / eps);
    else
      v = d > 0 ? 1.0 : -1.0;
    return inside < 0 ? v : -v; // `inside` refers to the region below y0
  }
  }
  return 0.0;
}

ScalarField make_phase_profile(const Vec2& center, double r, double eps,
                               std::shared_ptr<const FeSpace> space, double inside) {
  if (r <= 0) throw std::invalid_argument("make_phase_profile: radius must be positive");
  PhaseProfile p;
  p.kind = PhaseProfile::Kind::Circle;
  p.center = center;
  p.radius = r;
  p.inside = inside;
  return make_profile_field(p, eps, std::move(space));
}

ScalarField make_profile_field(const PhaseProfile& p, double eps,
                               std::shared_ptr<const FeSpace> space) {
  ScalarField f(space);
  const Mesh& mesh = space->mesh();
  for (int i = 0; i < mesh.nv(); ++i) f.x[i] = p.eval(mesh.vertex(i), eps);
  return f;
}

void ScenarioData::validate() const {
  std::vector<std::string> problems;
  if (sigma <= 0) problems.push_back("sigma must be positive");
  if (eps <= 0) problems.push_back("eps must be positive");
  if (mobility <= 0) problems.push_back("mobility must be positive");
  if (T <= 0) problems.push_back("T must be positive");
  if (tau0 <= 0) problems.push_back("tau0 must be positive");
  if (mesh_nx < 1 || mesh_ny < 1) problems.push_back("mesh cell counts must be >= 1");
  if (!problems.empty()) throw ConfigError(problems);
  weights.validate();
  ansatz.validate();
}

namespace {

// 10 tangential bumps per wall, supports touching the wall corners with value
// zero there.
void add_wall_bumps(AnsatzSet& a, BoundaryMarker wall, double lo, double hi, double fixed_coord,
                    double width, int count) {
  const bool side = wall == BoundaryMarker::Left || wall == BoundaryMarker::Right;
  const double first = lo + width;
  const double last = hi - width;
  for (int i = 0; i < count; ++i) {
    BumpAnsatz b;
    const double s = count == 1 ? 0.5 * (first + last) : first + (last - first) * i / (count - 1);
    b.center = side ? Vec2(fixed_coord, s) : Vec2(s, fixed_coord);
    b.width = Vec2(width, width);
    b.component = side ? 1 : 0;
    b.placement = wall;
    a.boundary.push_back(b);
  }
}

AnsatzSet rising_bubble_ansatz(bool with_volume) {
  AnsatzSet a;
  // side walls active; widths 1.5/10 per the wall length
  add_wall_bumps(a, BoundaryMarker::Left, 0.0, 1.5, 0.0, 1.5 / 10.0, 10);
  add_wall_bumps(a, BoundaryMarker::Right, 0.0, 1.5, 1.0, 1.5 / 10.0, 10);
  if (with_volume) {
    const Vec2 centers[4] = {{0.3, 0.5}, {0.7, 0.5}, {0.3, 1.0}, {0.7, 1.0}};
    for (int l = 0; l < 4; ++l) {
      BumpAnsatz b;
      b.center = centers[l];
      b.width = Vec2(0.2, 0.2);
      b.component = l % 2;
      b.placement = BoundaryMarker::Interior;
      a.volume.push_back(b);
    }
  }
  return a;
}

} // namespace

ScenarioData preset_rising_bubble() {
  ScenarioData s;
  s.name = "rising_bubble";
  s.materials.rho1 = 1000.0;
  s.materials.rho2 = 100.0;
  s.materials.eta1 = 10.0;
  s.materials.eta2 = 1.0;
  s.sigma = 15.5972;
  s.eps = 0.04;
  s.mobility = s.eps / 500.0;
  s.energy = FreeEnergy::relaxed_double_obstacle(1e4);
  s.K = Vec2(0.0, -0.981);
  s.T = 1.0;
  s.tau0 = 5e-3;
  s.domain = Rect{0, 0, 1, 1.5};
  s.mesh_nx = 32;
  s.mesh_ny = 48;
  s.fixed_mesh = false;
  s.adapt_state_mesh = true;
  s.adapt.v_max = 3e-4;
  s.adapt.v_min = AdaptConfig::v_min_for(s.eps);
  s.weights.alpha = 1e-10;
  s.weights.aI = 0.0;
  s.weights.aV = 0.0;
  s.weights.aB = 1.0;
  s.ansatz = rising_bubble_ansatz(false);
  s.phi0 = PhaseProfile{PhaseProfile::Kind::Circle, 0.0, Vec2(0.5, 0.75), 0.25, 0.0, +1.0};
  s.phi_d = PhaseProfile{PhaseProfile::Kind::Circle, 0.0, Vec2(0.5, 0.5), 0.25, 0.0, +1.0};
  return s;
}

ScenarioData preset_rising_bubble_desk() {
  ScenarioData s = preset_rising_bubble();
  s.name = "rising_bubble_desk";
  s.eps = 0.08;
  s.mobility = s.eps / 500.0;
  s.T = 0.5;
  s.tau0 = 0.0125;
  s.fixed_mesh = true;
  s.adapt_state_mesh = false;
  s.adapt.v_min = AdaptConfig::v_min_for(s.eps);
  s.ansatz = rising_bubble_ansatz(true); // volume channels for gradient checks
  return s;
}

ScenarioData preset_initial_reconstruction() {
  ScenarioData s;
  s.name = "initial_reconstruction";
  s.materials.rho1 = 1000.0;
  s.materials.rho2 = 1.0;
  s.materials.eta1 = 10.0;
  s.materials.eta2 = 0.1;
  s.sigma = 1.245;
  s.eps = 0.02;
  s.mobility = s.eps / 500.0;
  s.energy = FreeEnergy::relaxed_double_obstacle(1e4);
  s.K = Vec2(0.0, -0.981);
  s.T = 1.5;
  s.tau0 = 5e-3;
  s.domain = Rect{0, 0, 1, 1};
  s.mesh_nx = 32;
  s.mesh_ny = 32;
  s.fixed_mesh = false;
  s.adapt_state_mesh = true;
  s.adapt.v_max = 3e-4;
  s.adapt.v_min = AdaptConfig::v_min_for(s.eps);
  s.weights.alpha = 0.2;
  s.weights.aI = 1.0;
  s.weights.aV = 0.0;
  s.weights.aB = 0.0;
  s.phi_d = PhaseProfile{PhaseProfile::Kind::Circle, 0.0, Vec2(0.5, 0.6), 0.1763040551, 0.0, +1.0};
  s.uI_init = -0.8;
  s.uI_mean = -0.8; // mass-compatible with the target circle
  return s;
}

ScenarioData preset_initial_reconstruction_desk() {
  ScenarioData s = preset_initial_reconstruction();
  s.name = "initial_reconstruction_desk";
  s.eps = 0.04;
  s.mobility = s.eps / 500.0;
  s.T = 0.5;
  s.tau0 = 0.02;
  s.fixed_mesh = true;
  s.adapt_state_mesh = false;
  s.adapt.v_min = AdaptConfig::v_min_for(s.eps);
  // zero-mean variant: stratified target, heavy fluid below
  s.phi_d = PhaseProfile{PhaseProfile::Kind::Stratified, 0.0, Vec2(0.5, 0.5), 0.25, 0.5, -1.0};
  s.uI_init = 0.0;
  s.uI_mean = 0.0;
  return s;
}

ScenarioData preset_by_name(const std::string& name) {
  if (name == "rising_bubble") return preset_rising_bubble();
  if (name == "rising_bubble_desk") return preset_rising_bubble_desk();
  if (name == "initial_reconstruction") return preset_initial_reconstruction();
  if (name == "initial_reconstruction_desk") return preset_initial_reconstruction_desk();
  if (name == "custom") return ScenarioData{};
  throw ConfigError({"unknown preset '" + name + "'"});
}

std::vector<std::string> preset_names() {
  return {"rising_bubble", "rising_bubble_desk", "initial_reconstruction",
          "initial_reconstruction_desk", "custom"};
}

} // namespace chns
