#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "rtlod/types.hpp"

namespace rtlod {

using Triangle = std::array<int, 3>;
/// Vertex pair (a, b) with a < b. The global edge normal is the tangent
/// b - a rotated clockwise.
using Edge = std::array<int, 2>;

/// Conforming triangulation of a simply connected planar domain.
///
/// Local edge i of a triangle is the edge opposite its vertex i. The sign
/// stored per (triangle, local edge) is +1 when the global edge normal points
/// out of the triangle and -1 otherwise. Immutable once built.
class Mesh {
 public:
  Mesh() = default;

  /// Builds topology from a vertex cloud and triangle list. Negatively
  /// oriented triangles are flipped; degenerate ones are rejected.
  static Mesh from_triangles(std::vector<Point> vertices,
                             std::vector<Triangle> triangles);

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Edge>& edges() const { return edges_; }

  const Point& vertex(int v) const { return vertices_[v]; }
  const Triangle& triangle(int t) const { return triangles_[t]; }
  const Edge& edge(int e) const { return edges_[e]; }

  const std::array<int, 3>& triangle_edges(int t) const {
    return triangle_edges_[t];
  }
  const std::array<int, 3>& triangle_edge_signs(int t) const {
    return triangle_edge_signs_[t];
  }
  /// Adjacent triangles of an edge; the second entry is -1 on the boundary.
  const std::array<int, 2>& edge_triangles(int e) const {
    return edge_triangles_[e];
  }
  bool is_boundary_edge(int e) const { return edge_triangles_[e][1] < 0; }
  bool is_boundary_vertex(int v) const { return boundary_vertex_[v] != 0; }

  std::span<const int> triangles_of_vertex(int v) const {
    return {vertex_triangles_.data() + vertex_offsets_[v],
            vertex_triangles_.data() + vertex_offsets_[v + 1]};
  }

  double area(int t) const { return areas_[t]; }
  const std::vector<double>& areas() const { return areas_; }
  double total_area() const;
  Point centroid(int t) const;
  double edge_length(int e) const;
  /// Unit normal of the global edge orientation.
  Point edge_normal(int e) const;
  Point edge_midpoint(int e) const;

  /// Largest element diameter H.
  double h_max() const { return h_max_; }
  double h_min() const { return h_min_; }
  /// Quasi-uniformity ratio min_T diam(T) / H.
  double quasi_uniformity() const { return h_max_ > 0 ? h_min_ / h_max_ : 0.0; }
  int num_boundary_edges() const;

  /// Barycentric coordinates of p with respect to triangle t.
  std::array<double, 3> barycentric(int t, Point p) const;
  /// Gradient of the barycentric coordinate of local vertex k (constant).
  Point barycentric_gradient(int t, int k) const;

 private:
  std::vector<Point> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Edge> edges_;
  std::vector<std::array<int, 3>> triangle_edges_;
  std::vector<std::array<int, 3>> triangle_edge_signs_;
  std::vector<std::array<int, 2>> edge_triangles_;
  std::vector<int> vertex_offsets_;
  std::vector<int> vertex_triangles_;
  std::vector<std::uint8_t> boundary_vertex_;
  std::vector<double> areas_;
  double h_max_ = 0.0;
  double h_min_ = 0.0;
};

/// Coarse-to-fine containment for two nested triangulations.
struct NestingMap {
  std::vector<std::vector<int>> fine_cells_of_coarse;
  std::vector<int> coarse_of_fine;
  /// H / h; 2^levels when produced by uniform refinement.
  int factor = 1;
  /// s with h = H / 2^s, or -1 if the factor is not a power of two.
  int levels = 0;

  int num_coarse() const { return static_cast<int>(fine_cells_of_coarse.size()); }
  int num_fine() const { return static_cast<int>(coarse_of_fine.size()); }
};

/// Bucket-grid point location. Holds a reference to the mesh.
class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh);

  /// Triangle containing p (barycentric tolerance `tol`), or -1.
  int locate(Point p, double tol = 1e-12) const;
  const std::vector<int>& candidates(Point p) const;

 private:
  const Mesh* mesh_;
  double x0_ = 0, y0_ = 0, bw_ = 1, bh_ = 1;
  int nb_ = 1;
  std::vector<std::vector<int>> buckets_;
};

/// Ordered set of coarse triangles, e.g. an element patch N^m(T).
struct ElementSet {
  std::vector<int> cells;  // sorted ascending
  int layers = 0;

  bool contains(int t) const;
  std::size_t size() const { return cells.size(); }
};

/// nx x ny rectangles, each split along its lower-left to upper-right diagonal.
Mesh build_structured_mesh(int nx, int ny, const Rect& domain);

/// Red refinement applied `levels` times.
std::pair<Mesh, NestingMap> refine_uniform(const Mesh& mesh, int levels);

/// Locates every fine triangle inside the coarse mesh. Throws InvalidArgument
/// when some fine triangle is not contained in a single coarse triangle.
NestingMap build_nesting(const Mesh& coarse, const Mesh& fine);

/// m-layer vertex-connected patch around triangle t.
ElementSet element_patch(const Mesh& mesh, int t, int m);

/// Triangles having vertex z as a corner.
ElementSet vertex_patch(const Mesh& mesh, int z);

/// Plain-text listing of vertices and triangles (0-based indices).
void write_mesh_text(const Mesh& mesh, std::ostream& out);

}  // namespace rtlod
