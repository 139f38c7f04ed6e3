#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

namespace chns {

using Vec2 = Eigen::Vector2d;

enum class BoundaryMarker : std::uint8_t { Interior = 0, Left, Right, Bottom, Top };

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
};

// Triangle with newest-vertex-bisection bookkeeping: vertices are stored
// counterclockwise with the refinement edge (v[0], v[1]) and peak v[2].
// `parent` is the index of the triangle in the previous mesh this one
// descends from (its own index if it survived a refinement unchanged).
struct Triangle {
  std::array<int, 3> v{};
  int parent = -1;
};

struct Edge {
  int a = -1, b = -1;              // vertex ids, a < b
  std::array<int, 2> tris{-1, -1}; // adjacent triangles, tris[1] == -1 on boundary
  BoundaryMarker marker = BoundaryMarker::Interior;
  bool boundary() const { return tris[1] < 0; }
};

// Conforming triangulation of a polygonal domain. Immutable after
// construction; refinement produces a new mesh value.
class Mesh {
public:
  int nv() const { return static_cast<int>(vertices_.size()); }
  int nt() const { return static_cast<int>(tris_.size()); }
  int ne() const { return static_cast<int>(edges_.size()); }

  const Vec2& vertex(int i) const { return vertices_[i]; }
  const Triangle& tri(int t) const { return tris_[t]; }
  const Edge& edge(int e) const { return edges_[e]; }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return tris_; }
  const std::vector<Edge>& edges() const { return edges_; }

  int generation() const { return generation_; }

  // index of edge (a,b) in either orientation, or -1
  int edge_index(int a, int b) const;
  // the three edges of triangle t, edge k opposite local vertex k is not
  // guaranteed; local edge k connects (v[k], v[(k+1)%3])
  std::array<int, 3> tri_edges(int t) const;

  double tri_area(int t) const;
  double tri_diameter(int t) const;
  double total_area() const;
  Vec2 tri_centroid(int t) const;

  // Point location with barycentric output. Returns -1 if x lies outside all
  // cells by more than `tol` in barycentric distance.
  int locate(const Vec2& x, std::array<double, 3>& bary, double tol = 1e-10) const;

  // corners of the axis-aligned bounding box
  Rect bounding_box() const;

  friend Mesh build_rect_mesh(int nx, int ny, const Rect& extent);
  friend Mesh bisect(const Mesh& mesh, const std::vector<int>& marked);

private:
  void finalize(); // rebuild edge table, adjacency, locator bins

  std::vector<Vec2> vertices_;
  std::vector<Triangle> tris_;
  std::vector<Edge> edges_;
  std::unordered_map<std::int64_t, int> edge_lookup_;
  // markers of boundary edges keyed by packed vertex pair; carried through
  // refinements so children inherit the parent segment marker
  std::unordered_map<std::int64_t, BoundaryMarker> boundary_markers_;
  int generation_ = 0;

  // uniform-grid locator
  int bins_x_ = 0, bins_y_ = 0;
  Rect bbox_;
  std::vector<std::vector<int>> bins_;
};

// nx-by-ny grid of cells on `extent`, each cell split along the
// lower-left/upper-right diagonal; the diagonal is every triangle's
// refinement edge, which makes the initial mesh NVB-compatible.
Mesh build_rect_mesh(int nx, int ny, const Rect& extent);

// Bisect all marked triangles (newest-vertex bisection) and close the mesh
// so it stays conforming. Empty marking returns the input unchanged.
Mesh bisect(const Mesh& mesh, const std::vector<int>& marked);

// Two sweeps of bisect-everything; quarters every triangle.
Mesh uniform_refine(const Mesh& mesh);

// Quadrature on the reference triangle {x,y >= 0, x+y <= 1}; weights sum to
// the reference area 1/2 and are positive for all supported orders.
struct QuadratureRule {
  int order = 0;
  std::vector<std::array<double, 3>> points; // barycentric coordinates
  std::vector<double> weights;
  int size() const { return static_cast<int>(weights.size()); }
};

// Rule exact for polynomials up to `order`, 1 <= order <= 6.
QuadratureRule quadrature(int order);

} // namespace chns
