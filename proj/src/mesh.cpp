#include "rtlod/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "rtlod/errors.hpp"

namespace rtlod {

namespace {

double signed_area(Point a, Point b, Point c) { return 0.5 * cross(b - a, c - a); }

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

Mesh Mesh::from_triangles(std::vector<Point> vertices,
                          std::vector<Triangle> triangles) {
  Mesh mesh;
  const int nv = static_cast<int>(vertices.size());
  const int nt = static_cast<int>(triangles.size());
  mesh.vertices_ = std::move(vertices);
  mesh.triangles_ = std::move(triangles);
  mesh.areas_.resize(nt);
  mesh.h_max_ = 0.0;
  mesh.h_min_ = nt > 0 ? std::numeric_limits<double>::infinity() : 0.0;

  for (int t = 0; t < nt; ++t) {
    auto& tri = mesh.triangles_[t];
    for (int v : tri) {
      if (v < 0 || v >= nv) {
        throw InvalidArgument("triangle " + std::to_string(t) +
                              " references a nonexistent vertex");
      }
    }
    const auto& P = mesh.vertices_;
    double a = signed_area(P[tri[0]], P[tri[1]], P[tri[2]]);
    if (a < 0) {
      std::swap(tri[1], tri[2]);
      a = -a;
    }
    if (!(a > 0)) {
      throw InvalidArgument("triangle " + std::to_string(t) + " is degenerate");
    }
    mesh.areas_[t] = a;
    const double diam = std::max({distance(P[tri[0]], P[tri[1]]),
                                  distance(P[tri[1]], P[tri[2]]),
                                  distance(P[tri[2]], P[tri[0]])});
    mesh.h_max_ = std::max(mesh.h_max_, diam);
    mesh.h_min_ = std::min(mesh.h_min_, diam);
  }

  // vertex -> triangle incidence (CSR)
  mesh.vertex_offsets_.assign(nv + 1, 0);
  for (const auto& tri : mesh.triangles_) {
    for (int v : tri) ++mesh.vertex_offsets_[v + 1];
  }
  std::partial_sum(mesh.vertex_offsets_.begin(), mesh.vertex_offsets_.end(),
                   mesh.vertex_offsets_.begin());
  mesh.vertex_triangles_.resize(mesh.vertex_offsets_[nv]);
  {
    std::vector<int> fill(mesh.vertex_offsets_.begin(), mesh.vertex_offsets_.end() - 1);
    for (int t = 0; t < nt; ++t) {
      for (int v : mesh.triangles_[t]) mesh.vertex_triangles_[fill[v]++] = t;
    }
  }

  // Edges are numbered in order of first appearance; lookup goes through the
  // incidence list of the lower vertex.
  std::vector<std::vector<std::pair<int, int>>> edges_at(nv);  // (other, edge)
  mesh.triangle_edges_.resize(nt);
  mesh.triangle_edge_signs_.resize(nt);
  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles_[t];
    for (int i = 0; i < 3; ++i) {
      const int from = tri[(i + 1) % 3];
      const int to = tri[(i + 2) % 3];
      const int a = std::min(from, to);
      const int b = std::max(from, to);
      int e = -1;
      for (const auto& [other, idx] : edges_at[a]) {
        if (other == b) {
          e = idx;
          break;
        }
      }
      if (e < 0) {
        e = static_cast<int>(mesh.edges_.size());
        mesh.edges_.push_back({a, b});
        mesh.edge_triangles_.push_back({t, -1});
        edges_at[a].emplace_back(b, e);
      } else {
        if (mesh.edge_triangles_[e][1] >= 0) {
          throw InvalidArgument("edge shared by more than two triangles");
        }
        mesh.edge_triangles_[e][1] = t;
      }
      mesh.triangle_edges_[t][i] = e;
      // Counter-clockwise traversal from -> to has an outward clockwise normal.
      mesh.triangle_edge_signs_[t][i] = from < to ? 1 : -1;
    }
  }

  mesh.boundary_vertex_.assign(nv, 0);
  for (int e = 0; e < mesh.num_edges(); ++e) {
    if (mesh.edge_triangles_[e][1] < 0) {
      mesh.boundary_vertex_[mesh.edges_[e][0]] = 1;
      mesh.boundary_vertex_[mesh.edges_[e][1]] = 1;
    }
  }
  return mesh;
}

double Mesh::total_area() const {
  return std::accumulate(areas_.begin(), areas_.end(), 0.0);
}

Point Mesh::centroid(int t) const {
  const auto& tri = triangles_[t];
  return (1.0 / 3.0) * (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]);
}

double Mesh::edge_length(int e) const {
  return distance(vertices_[edges_[e][0]], vertices_[edges_[e][1]]);
}

Point Mesh::edge_normal(int e) const {
  const Point t = vertices_[edges_[e][1]] - vertices_[edges_[e][0]];
  const double len = std::hypot(t.x, t.y);
  return {t.y / len, -t.x / len};
}

Point Mesh::edge_midpoint(int e) const {
  return 0.5 * (vertices_[edges_[e][0]] + vertices_[edges_[e][1]]);
}

int Mesh::num_boundary_edges() const {
  return static_cast<int>(std::count_if(edge_triangles_.begin(), edge_triangles_.end(),
                                        [](const auto& et) { return et[1] < 0; }));
}

std::array<double, 3> Mesh::barycentric(int t, Point p) const {
  const auto& tri = triangles_[t];
  const Point a = vertices_[tri[0]];
  const Point b = vertices_[tri[1]];
  const Point c = vertices_[tri[2]];
  const double det = cross(b - a, c - a);
  const double l1 = cross(p - a, c - a) / det;
  const double l2 = cross(b - a, p - a) / det;
  return {1.0 - l1 - l2, l1, l2};
}

Point Mesh::barycentric_gradient(int t, int k) const {
  const auto& tri = triangles_[t];
  const Point a = vertices_[tri[(k + 1) % 3]];
  const Point b = vertices_[tri[(k + 2) % 3]];
  // lambda_k vanishes on edge (a, b); its gradient is the inward normal
  // scaled by |ab| / (2 |T|).
  const Point d = b - a;
  const double s = 1.0 / (2.0 * areas_[t]);
  return {-d.y * s, d.x * s};
}

bool ElementSet::contains(int t) const {
  return std::binary_search(cells.begin(), cells.end(), t);
}

Mesh build_structured_mesh(int nx, int ny, const Rect& domain) {
  if (nx < 1 || ny < 1) {
    throw InvalidArgument("structured mesh needs at least one cell per direction");
  }
  if (domain.degenerate()) {
    throw InvalidArgument("degenerate domain");
  }
  std::vector<Point> vertices;
  vertices.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j) {
    // Exact endpoints keep boundary coordinates free of round-off.
    const double y = j == ny ? domain.y1 : domain.y0 + domain.height() * j / ny;
    for (int i = 0; i <= nx; ++i) {
      const double x = i == nx ? domain.x1 : domain.x0 + domain.width() * i / nx;
      vertices.push_back({x, y});
    }
  }
  std::vector<Triangle> triangles;
  triangles.reserve(2 * static_cast<std::size_t>(nx) * ny);
  const auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int v00 = vid(i, j), v10 = vid(i + 1, j);
      const int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      triangles.push_back({v00, v10, v11});
      triangles.push_back({v00, v11, v01});
    }
  }
  return Mesh::from_triangles(std::move(vertices), std::move(triangles));
}

std::pair<Mesh, NestingMap> refine_uniform(const Mesh& mesh, int levels) {
  if (levels < 0) throw InvalidArgument("refinement levels must be nonnegative");
  NestingMap map;
  map.levels = levels;
  map.factor = 1 << levels;
  map.fine_cells_of_coarse.resize(mesh.num_triangles());
  map.coarse_of_fine.resize(mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    map.fine_cells_of_coarse[t] = {t};
    map.coarse_of_fine[t] = t;
  }
  Mesh current = mesh;
  for (int level = 0; level < levels; ++level) {
    std::vector<Point> vertices = current.vertices();
    const int nv = current.num_vertices();
    for (int e = 0; e < current.num_edges(); ++e) {
      vertices.push_back(current.edge_midpoint(e));
    }
    std::vector<Triangle> triangles;
    triangles.reserve(4 * static_cast<std::size_t>(current.num_triangles()));
    for (int t = 0; t < current.num_triangles(); ++t) {
      const auto& p = current.triangle(t);
      const auto& e = current.triangle_edges(t);
      const int m0 = nv + e[0], m1 = nv + e[1], m2 = nv + e[2];
      triangles.push_back({p[0], m2, m1});
      triangles.push_back({m2, p[1], m0});
      triangles.push_back({m1, m0, p[2]});
      triangles.push_back({m0, m1, m2});
    }
    current = Mesh::from_triangles(std::move(vertices), std::move(triangles));
    std::vector<int> coarse_of_fine(current.num_triangles());
    for (int t = 0; t < current.num_triangles(); ++t) {
      coarse_of_fine[t] = map.coarse_of_fine[t / 4];
    }
    map.coarse_of_fine = std::move(coarse_of_fine);
  }
  for (auto& cells : map.fine_cells_of_coarse) cells.clear();
  for (int t = 0; t < static_cast<int>(map.coarse_of_fine.size()); ++t) {
    map.fine_cells_of_coarse[map.coarse_of_fine[t]].push_back(t);
  }
  return {std::move(current), std::move(map)};
}

PointLocator::PointLocator(const Mesh& mesh) : mesh_(&mesh) {
  const int nt = mesh.num_triangles();
  double x1 = -std::numeric_limits<double>::infinity(), y1 = x1;
  x0_ = std::numeric_limits<double>::infinity();
  y0_ = x0_;
  for (const auto& p : mesh.vertices()) {
    x0_ = std::min(x0_, p.x);
    y0_ = std::min(y0_, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  nb_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(nt))));
  bw_ = (x1 - x0_) / nb_;
  bh_ = (y1 - y0_) / nb_;
  buckets_.resize(static_cast<std::size_t>(nb_) * nb_);
  for (int t = 0; t < nt; ++t) {
    double tx0 = x1, ty0 = y1, tx1 = x0_, ty1 = y0_;
    for (int v : mesh.triangle(t)) {
      tx0 = std::min(tx0, mesh.vertex(v).x);
      ty0 = std::min(ty0, mesh.vertex(v).y);
      tx1 = std::max(tx1, mesh.vertex(v).x);
      ty1 = std::max(ty1, mesh.vertex(v).y);
    }
    const int i0 = std::clamp(static_cast<int>((tx0 - x0_) / bw_), 0, nb_ - 1);
    const int i1 = std::clamp(static_cast<int>((tx1 - x0_) / bw_), 0, nb_ - 1);
    const int j0 = std::clamp(static_cast<int>((ty0 - y0_) / bh_), 0, nb_ - 1);
    const int j1 = std::clamp(static_cast<int>((ty1 - y0_) / bh_), 0, nb_ - 1);
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) buckets_[static_cast<std::size_t>(j) * nb_ + i].push_back(t);
    }
  }
}

const std::vector<int>& PointLocator::candidates(Point p) const {
  const int i = std::clamp(static_cast<int>((p.x - x0_) / bw_), 0, nb_ - 1);
  const int j = std::clamp(static_cast<int>((p.y - y0_) / bh_), 0, nb_ - 1);
  return buckets_[static_cast<std::size_t>(j) * nb_ + i];
}

int PointLocator::locate(Point p, double tol) const {
  for (int t : candidates(p)) {
    const auto lam = mesh_->barycentric(t, p);
    if (lam[0] >= -tol && lam[1] >= -tol && lam[2] >= -tol) return t;
  }
  return -1;
}

NestingMap build_nesting(const Mesh& coarse, const Mesh& fine) {
  const int nc = coarse.num_triangles();
  const int nf = fine.num_triangles();
  if (nc == 0 || nf < nc) throw InvalidArgument("meshes are not nested");
  const PointLocator locator(coarse);

  constexpr double tol = 1e-10;
  NestingMap map;
  map.fine_cells_of_coarse.resize(nc);
  map.coarse_of_fine.assign(nf, -1);
  for (int f = 0; f < nf; ++f) {
    const Point c = fine.centroid(f);
    for (int t : locator.candidates(c)) {
      const auto lam = coarse.barycentric(t, c);
      if (lam[0] < -tol || lam[1] < -tol || lam[2] < -tol) continue;
      bool inside = true;
      for (int v : fine.triangle(f)) {
        const auto lv = coarse.barycentric(t, fine.vertex(v));
        inside = inside && lv[0] > -tol && lv[1] > -tol && lv[2] > -tol;
      }
      if (!inside) {
        throw InvalidArgument("meshes are not nested: fine triangle " +
                              std::to_string(f) + " straddles coarse triangles");
      }
      map.coarse_of_fine[f] = t;
      map.fine_cells_of_coarse[t].push_back(f);
      break;
    }
    if (map.coarse_of_fine[f] < 0) {
      throw InvalidArgument("meshes are not nested: fine triangle " +
                            std::to_string(f) + " lies outside the coarse mesh");
    }
  }
  for (int t = 0; t < nc; ++t) {
    double sum = 0.0;
    for (int f : map.fine_cells_of_coarse[t]) sum += fine.area(f);
    if (std::abs(sum - coarse.area(t)) > 1e-10 * coarse.area(t)) {
      throw InvalidArgument("meshes are not nested: children of coarse triangle " +
                            std::to_string(t) + " do not cover it");
    }
  }
  const double ratio = std::sqrt(static_cast<double>(nf) / nc);
  map.factor = static_cast<int>(std::lround(ratio));
  map.levels = -1;
  if (map.factor * map.factor * nc == nf) {
    for (int s = 0; (1 << s) <= map.factor; ++s) {
      if ((1 << s) == map.factor) map.levels = s;
    }
  }
  return map;
}

ElementSet element_patch(const Mesh& mesh, int t, int m) {
  if (t < 0 || t >= mesh.num_triangles()) {
    throw InvalidArgument("element index " + std::to_string(t) + " out of range");
  }
  if (m < 0) throw InvalidArgument("patch layer count must be nonnegative");
  std::vector<std::uint8_t> in_patch(mesh.num_triangles(), 0);
  std::vector<std::uint8_t> vertex_seen(mesh.num_vertices(), 0);
  std::vector<int> cells{t};
  std::vector<int> frontier{t};
  in_patch[t] = 1;
  for (int layer = 0; layer < m && !frontier.empty(); ++layer) {
    std::vector<int> next;
    for (int c : frontier) {
      for (int v : mesh.triangle(c)) {
        if (vertex_seen[v]) continue;
        vertex_seen[v] = 1;
        for (int n : mesh.triangles_of_vertex(v)) {
          if (!in_patch[n]) {
            in_patch[n] = 1;
            next.push_back(n);
          }
        }
      }
    }
    cells.insert(cells.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  std::sort(cells.begin(), cells.end());
  return {std::move(cells), m};
}

ElementSet vertex_patch(const Mesh& mesh, int z) {
  if (z < 0 || z >= mesh.num_vertices()) {
    throw InvalidArgument("vertex index " + std::to_string(z) + " out of range");
  }
  auto span = mesh.triangles_of_vertex(z);
  std::vector<int> cells(span.begin(), span.end());
  std::sort(cells.begin(), cells.end());
  return {std::move(cells), 0};
}

void write_mesh_text(const Mesh& mesh, std::ostream& out) {
  const auto old_precision = out.precision(17);
  out << "vertices " << mesh.num_vertices() << '\n';
  for (const auto& p : mesh.vertices()) out << p.x << ' ' << p.y << '\n';
  out << "triangles " << mesh.num_triangles() << '\n';
  for (const auto& t : mesh.triangles()) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out.precision(old_precision);
}

}  // namespace rtlod
