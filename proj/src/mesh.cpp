#include "chns/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "chns/errors.hpp"

namespace chns {

namespace {

inline std::int64_t pack(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::int64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x()));
}

} // namespace

int Mesh::edge_index(int a, int b) const {
  auto it = edge_lookup_.find(pack(a, b));
  return it == edge_lookup_.end() ? -1 : it->second;
}

std::array<int, 3> Mesh::tri_edges(int t) const {
  const auto& v = tris_[t].v;
  return {edge_index(v[0], v[1]), edge_index(v[1], v[2]), edge_index(v[2], v[0])};
}

double Mesh::tri_area(int t) const {
  const auto& v = tris_[t].v;
  return signed_area(vertices_[v[0]], vertices_[v[1]], vertices_[v[2]]);
}

double Mesh::tri_diameter(int t) const {
  const auto& v = tris_[t].v;
  double d = 0.0;
  for (int k = 0; k < 3; ++k)
    d = std::max(d, (vertices_[v[k]] - vertices_[v[(k + 1) % 3]]).norm());
  return d;
}

double Mesh::total_area() const {
  double s = 0.0;
  for (int t = 0; t < nt(); ++t) s += tri_area(t);
  return s;
}

Vec2 Mesh::tri_centroid(int t) const {
  const auto& v = tris_[t].v;
  return (vertices_[v[0]] + vertices_[v[1]] + vertices_[v[2]]) / 3.0;
}

Rect Mesh::bounding_box() const { return bbox_; }

int Mesh::locate(const Vec2& x, std::array<double, 3>& bary, double tol) const {
  auto test = [&](int t) -> bool {
    const auto& v = tris_[t].v;
    const Vec2& a = vertices_[v[0]];
    const Vec2& b = vertices_[v[1]];
    const Vec2& c = vertices_[v[2]];
    const double area = signed_area(a, b, c);
    const double l0 = signed_area(x, b, c) / area;
    const double l1 = signed_area(a, x, c) / area;
    const double l2 = 1.0 - l0 - l1;
    if (l0 >= -tol && l1 >= -tol && l2 >= -tol) {
      bary = {l0, l1, l2};
      return true;
    }
    return false;
  };

  if (bins_x_ > 0) {
    const double fx = (x.x() - bbox_.x0) / bbox_.width();
    const double fy = (x.y() - bbox_.y0) / bbox_.height();
    int bx = std::clamp(static_cast<int>(fx * bins_x_), 0, bins_x_ - 1);
    int by = std::clamp(static_cast<int>(fy * bins_y_), 0, bins_y_ - 1);
    for (int t : bins_[by * bins_x_ + bx])
      if (test(t)) return t;
  }
  // fallback sweep; also catches points on bin borders
  for (int t = 0; t < nt(); ++t)
    if (test(t)) return t;
  return -1;
}

void Mesh::finalize() {
  edges_.clear();
  edge_lookup_.clear();
  for (int t = 0; t < nt(); ++t) {
    const auto& v = tris_[t].v;
    for (int k = 0; k < 3; ++k) {
      int a = v[k], b = v[(k + 1) % 3];
      const std::int64_t key = pack(a, b);
      auto it = edge_lookup_.find(key);
      if (it == edge_lookup_.end()) {
        Edge e;
        e.a = std::min(a, b);
        e.b = std::max(a, b);
        e.tris = {t, -1};
        edge_lookup_.emplace(key, static_cast<int>(edges_.size()));
        edges_.push_back(e);
      } else {
        edges_[it->second].tris[1] = t;
      }
    }
  }
  for (auto& e : edges_) {
    if (e.boundary()) {
      auto it = boundary_markers_.find(pack(e.a, e.b));
      e.marker = (it == boundary_markers_.end()) ? BoundaryMarker::Interior : it->second;
    }
  }

  // locator bins
  bbox_ = Rect{vertices_[0].x(), vertices_[0].y(), vertices_[0].x(), vertices_[0].y()};
  for (const auto& p : vertices_) {
    bbox_.x0 = std::min(bbox_.x0, p.x());
    bbox_.y0 = std::min(bbox_.y0, p.y());
    bbox_.x1 = std::max(bbox_.x1, p.x());
    bbox_.y1 = std::max(bbox_.y1, p.y());
  }
  const int target = std::max(1, static_cast<int>(std::sqrt(nt() / 2.0)));
  bins_x_ = bins_y_ = target;
  bins_.assign(static_cast<size_t>(bins_x_) * bins_y_, {});
  for (int t = 0; t < nt(); ++t) {
    const auto& v = tris_[t].v;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (int k = 0; k < 3; ++k) {
      xmin = std::min(xmin, vertices_[v[k]].x());
      xmax = std::max(xmax, vertices_[v[k]].x());
      ymin = std::min(ymin, vertices_[v[k]].y());
      ymax = std::max(ymax, vertices_[v[k]].y());
    }
    int bx0 = std::clamp(static_cast<int>((xmin - bbox_.x0) / bbox_.width() * bins_x_), 0, bins_x_ - 1);
    int bx1 = std::clamp(static_cast<int>((xmax - bbox_.x0) / bbox_.width() * bins_x_), 0, bins_x_ - 1);
    int by0 = std::clamp(static_cast<int>((ymin - bbox_.y0) / bbox_.height() * bins_y_), 0, bins_y_ - 1);
    int by1 = std::clamp(static_cast<int>((ymax - bbox_.y0) / bbox_.height() * bins_y_), 0, bins_y_ - 1);
    for (int by = by0; by <= by1; ++by)
      for (int bx = bx0; bx <= bx1; ++bx)
        bins_[by * bins_x_ + bx].push_back(t);
  }
}

Mesh build_rect_mesh(int nx, int ny, const Rect& extent) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("build_rect_mesh: cell counts must be >= 1");
  if (extent.width() <= 0.0 || extent.height() <= 0.0)
    throw std::invalid_argument("build_rect_mesh: extent must have positive side lengths");

  Mesh m;
  m.vertices_.reserve(static_cast<size_t>(nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      m.vertices_.emplace_back(extent.x0 + extent.width() * i / nx,
                               extent.y0 + extent.height() * j / ny);

  auto vid = [&](int i, int j) { return j * (nx + 1) + i; };

  // Two triangles per cell sharing the lower-left/upper-right diagonal,
  // stored so the diagonal is the refinement edge of both.
  m.tris_.reserve(static_cast<size_t>(2) * nx * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
      Triangle t1;
      t1.v = {c, a, b};
      t1.parent = static_cast<int>(m.tris_.size());
      m.tris_.push_back(t1);
      Triangle t2;
      t2.v = {a, c, d};
      t2.parent = static_cast<int>(m.tris_.size());
      m.tris_.push_back(t2);
    }

  auto mark_segment = [&](int va, int vb, BoundaryMarker bm) {
    m.boundary_markers_[pack(va, vb)] = bm;
  };
  for (int i = 0; i < nx; ++i) {
    mark_segment(vid(i, 0), vid(i + 1, 0), BoundaryMarker::Bottom);
    mark_segment(vid(i, ny), vid(i + 1, ny), BoundaryMarker::Top);
  }
  for (int j = 0; j < ny; ++j) {
    mark_segment(vid(0, j), vid(0, j + 1), BoundaryMarker::Left);
    mark_segment(vid(nx, j), vid(nx, j + 1), BoundaryMarker::Right);
  }

  m.finalize();
  return m;
}

namespace {

// Working state for one bisection pass. Triangles are kept in a grow-only
// array with tombstones; adjacency is maintained incrementally so the
// compatibility recursion sees a consistent picture.
struct BisectWork {
  std::vector<Vec2> vertices;
  std::vector<Triangle> tris;
  std::vector<char> alive;
  std::vector<int> ancestor; // index into the input mesh
  std::unordered_map<std::int64_t, std::array<int, 2>> adj;
  std::unordered_map<std::int64_t, int> midpoint;
  std::unordered_map<std::int64_t, BoundaryMarker> markers;

  void adj_remove(int a, int b, int t) {
    auto& e = adj[pack(a, b)];
    if (e[0] == t)
      e[0] = e[1], e[1] = -1;
    else if (e[1] == t)
      e[1] = -1;
  }
  void adj_add(int a, int b, int t) {
    auto it = adj.find(pack(a, b));
    if (it == adj.end())
      adj[pack(a, b)] = {t, -1};
    else
      it->second[1] = t;
  }
  int neighbor_across(int a, int b, int t) const {
    auto it = adj.find(pack(a, b));
    if (it == adj.end()) return -1;
    return it->second[0] == t ? it->second[1] : it->second[0];
  }

  int midpoint_of(int a, int b) {
    const auto key = pack(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const int id = static_cast<int>(vertices.size());
    vertices.push_back(0.5 * (vertices[a] + vertices[b]));
    midpoint.emplace(key, id);
    // split an inherited boundary marker
    auto mk = markers.find(key);
    if (mk != markers.end()) {
      markers[pack(a, id)] = mk->second;
      markers[pack(id, b)] = mk->second;
      markers.erase(mk);
    }
    return id;
  }

  // Split triangle t across its refinement edge using midpoint w.
  // Children: (peak, base0, mid) and (base1, peak, mid).
  void split(int t, int w) {
    const auto v = tris[t].v;
    alive[t] = 0;
    adj_remove(v[0], v[1], t);
    adj_remove(v[1], v[2], t);
    adj_remove(v[2], v[0], t);

    Triangle c1;
    c1.v = {v[2], v[0], w};
    c1.parent = ancestor[t];
    Triangle c2;
    c2.v = {v[1], v[2], w};
    c2.parent = ancestor[t];

    const int i1 = static_cast<int>(tris.size());
    tris.push_back(c1);
    alive.push_back(1);
    ancestor.push_back(ancestor[t]);
    const int i2 = static_cast<int>(tris.size());
    tris.push_back(c2);
    alive.push_back(1);
    ancestor.push_back(ancestor[t]);

    adj_add(c1.v[0], c1.v[1], i1);
    adj_add(c1.v[1], c1.v[2], i1);
    adj_add(c1.v[2], c1.v[0], i1);
    adj_add(c2.v[0], c2.v[1], i2);
    adj_add(c2.v[1], c2.v[2], i2);
    adj_add(c2.v[2], c2.v[0], i2);
  }

  // Bisect t, recursively refining the neighbor across the refinement edge
  // first whenever the pair is incompatible.
  void refine(int t) {
    if (!alive[t]) return;
    while (true) {
      const auto v = tris[t].v;
      const int n = neighbor_across(v[0], v[1], t);
      if (n < 0) { // boundary refinement edge
        const int w = midpoint_of(v[0], v[1]);
        split(t, w);
        return;
      }
      const auto nv = tris[n].v;
      if (pack(nv[0], nv[1]) == pack(v[0], v[1])) {
        // compatible pair: one shared midpoint, both split
        const int w = midpoint_of(v[0], v[1]);
        split(t, w);
        split(n, w);
        return;
      }
      refine(n); // afterwards the new neighbor has (v0,v1) as its base
    }
  }
};

} // namespace

Mesh bisect(const Mesh& mesh, const std::vector<int>& marked) {
  if (marked.empty()) return mesh;
  for (int t : marked)
    if (t < 0 || t >= mesh.nt()) throw std::invalid_argument("bisect: marked index out of range");

  BisectWork w;
  w.vertices = mesh.vertices_;
  w.tris = mesh.tris_;
  w.alive.assign(mesh.tris_.size(), 1);
  w.ancestor.resize(mesh.tris_.size());
  for (int t = 0; t < mesh.nt(); ++t) w.ancestor[t] = t;
  w.markers = mesh.boundary_markers_;
  for (const auto& e : mesh.edges_) {
    w.adj[pack(e.a, e.b)] = e.tris;
  }

  for (int t : marked) w.refine(t);

  Mesh out;
  out.vertices_ = std::move(w.vertices);
  out.boundary_markers_ = std::move(w.markers);
  out.generation_ = mesh.generation_ + 1;
  out.tris_.reserve(w.tris.size());
  for (size_t t = 0; t < w.tris.size(); ++t)
    if (w.alive[t]) {
      Triangle tri = w.tris[t];
      tri.parent = w.ancestor[t];
      out.tris_.push_back(tri);
    }
  out.finalize();
  return out;
}

Mesh uniform_refine(const Mesh& mesh) {
  std::vector<int> all(mesh.nt());
  for (int t = 0; t < mesh.nt(); ++t) all[t] = t;
  Mesh half = bisect(mesh, all);
  all.resize(half.nt());
  for (int t = 0; t < half.nt(); ++t) all[t] = t;
  return bisect(half, all);
}

QuadratureRule quadrature(int order) {
  if (order < 1 || order > 6) throw std::invalid_argument("quadrature: order must be in [1,6]");
  QuadratureRule r;
  r.order = order;
  auto push = [&](double l0, double l1, double w) {
    r.points.push_back({l0, l1, 1.0 - l0 - l1});
    r.weights.push_back(w * 0.5); // tables normalized to unit total
  };
  auto push3 = [&](double a, double w) { // permutations of (1-2a, a, a)
    push(1.0 - 2.0 * a, a, w);
    push(a, 1.0 - 2.0 * a, w);
    push(a, a, w);
  };
  auto push6 = [&](double a, double b, double w) { // permutations of (1-a-b, a, b)
    const double c = 1.0 - a - b;
    push(c, a, w);
    push(c, b, w);
    push(a, c, w);
    push(b, c, w);
    push(a, b, w);
    push(b, a, w);
  };

  switch (order) {
  case 1:
    push(1.0 / 3.0, 1.0 / 3.0, 1.0);
    break;
  case 2:
    push3(1.0 / 6.0, 1.0 / 3.0);
    break;
  case 3:
  case 4:
    // Dunavant degree 4 (all weights positive, unlike the 4-point degree-3 rule)
    push3(0.445948490915965, 0.223381589678011);
    push3(0.091576213509771, 0.109951743655322);
    break;
  case 5:
    push(1.0 / 3.0, 1.0 / 3.0, 0.225);
    push3(0.470142064105115, 0.132394152788506);
    push3(0.101286507323456, 0.125939180544827);
    break;
  case 6:
    push3(0.249286745170910, 0.116786275726379);
    push3(0.063089014491502, 0.050844906370207);
    push6(0.310352451033785, 0.636502499121399, 0.082851075618374);
    break;
  }
  return r;
}

} // namespace chns
