#pragma once

// Minimisation of coordinate-separable convex objectives over the simplex.
//
//   minimize  sum_a  -theta_a p_a + w phi_a(p_a) + kappa (p_a log p_a - prior_a p_a)
//   s.t.      p >= 0, sum_a p_a = 1
//
// The KKT system reduces to one scalar multiplier lambda: each coordinate is the
// p_a(lambda) >= 0 solving psi_a'(p) = -lambda, and sum_a p_a(lambda) = 1 is a
// monotone scalar equation.

#include "regmdp/types.hpp"

#include <vector>

namespace regmdp::detail {

enum class Shape {
  linear,   // phi(p) = slope * p
  entropy,  // phi(p) = p log p + slope * p
  power,    // phi(p) = p^q / (q - 1)
  barrier,  // phi(p) = -log(cap - p), +inf for p >= cap
};

struct Coord {
  Shape shape = Shape::linear;
  Scalar slope = 0;
  Scalar q = 2;
  Scalar cap = 1;
};

/// phi_a(p), including +inf outside the barrier domain.
Scalar coord_value(const Coord& c, Scalar p);
/// phi_a'(p); callers clamp p away from zero for entropy/power(q<1).
Scalar coord_derivative(const Coord& c, Scalar p);

/// Solves the problem above. `prior` is only read when kappa > 0.
Vector solve_separable(const std::vector<Coord>& coords, const Vector& theta, Scalar w, Scalar kappa,
                       const Vector& prior);

}  // namespace regmdp::detail
