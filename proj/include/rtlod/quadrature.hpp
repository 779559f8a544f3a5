#pragma once

#include <array>

#include "rtlod/types.hpp"

namespace rtlod::quad {

/// Barycentric point and weight (weights sum to 1; scale by the area).
struct TriPoint {
  std::array<double, 3> lambda;
  double weight;
};

/// Edge-midpoint rule, exact for quadratics.
inline constexpr std::array<TriPoint, 3> kDegree2 = {{
    {{0.0, 0.5, 0.5}, 1.0 / 3.0},
    {{0.5, 0.0, 0.5}, 1.0 / 3.0},
    {{0.5, 0.5, 0.0}, 1.0 / 3.0},
}};

/// Six-point symmetric rule (Dunavant), exact for quartics.
inline constexpr std::array<TriPoint, 6> kDegree4 = {{
    {{0.445948490915965, 0.445948490915965, 0.108103018168070}, 0.223381589678011},
    {{0.445948490915965, 0.108103018168070, 0.445948490915965}, 0.223381589678011},
    {{0.108103018168070, 0.445948490915965, 0.445948490915965}, 0.223381589678011},
    {{0.091576213509771, 0.091576213509771, 0.816847572980459}, 0.109951743655322},
    {{0.091576213509771, 0.816847572980459, 0.091576213509771}, 0.109951743655322},
    {{0.816847572980459, 0.091576213509771, 0.091576213509771}, 0.109951743655322},
}};

/// Two-point Gauss rule on [0, 1], exact for cubics.
inline constexpr std::array<std::array<double, 2>, 2> kGauss2 = {{
    {0.2113248654051871, 0.5},
    {0.7886751345948129, 0.5},
}};

inline Point map_point(const std::array<double, 3>& lambda, Point a, Point b, Point c) {
  return {lambda[0] * a.x + lambda[1] * b.x + lambda[2] * c.x,
          lambda[0] * a.y + lambda[1] * b.y + lambda[2] * c.y};
}

}  // namespace rtlod::quad
