#pragma once

#include <memory>
#include <random>

#include "rtlod/fespace.hpp"
#include "rtlod/mesh.hpp"

namespace rtlod::testing {

/// Structured coarse mesh on the unit square and its uniform refinement.
struct TwoGrid {
  MeshPtr coarse;
  MeshPtr fine;
  NestingMap map;
  RTSpace vH;
  RTSpace vh;
  PressureSpace qH;
  PressureSpace qh;

  static TwoGrid make(int n, int levels, Rect domain = {}) {
    auto c = std::make_shared<const Mesh>(build_structured_mesh(n, n, domain));
    auto [f, m] = refine_uniform(*c, levels);
    auto fp = std::make_shared<const Mesh>(std::move(f));
    return TwoGrid{c, fp, std::move(m), RTSpace(c), RTSpace(fp), PressureSpace(c),
                   PressureSpace(fp)};
  }
};

inline Vector random_vector(int n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(gen);
  return v;
}

inline double max_abs(const SparseMatrix& m) {
  double r = 0.0;
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) r = std::max(r, std::abs(it.value()));
  }
  return r;
}

}  // namespace rtlod::testing
