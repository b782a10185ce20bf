#include "separable.hpp"

#include "regmdp/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace regmdp::detail {

namespace {

constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();
constexpr int kMaxOuter = 400;
constexpr int kMaxInner = 100;

Scalar coord_curvature(const Coord& c, Scalar p) {
  switch (c.shape) {
    case Shape::linear: return 0;
    case Shape::entropy: return 1 / p;
    case Shape::power: return c.q * std::pow(p, c.q - 2);
    case Shape::barrier: return 1 / ((c.cap - p) * (c.cap - p));
  }
  return 0;
}

struct Point {
  Scalar p;
  Scalar dp;  // dp / dlambda
};

// Root in u = log p of F(u) = -theta + lambda + w phi'(e^u) + kappa (u + 1 - prior), kappa > 0.
// F is strictly increasing in u. `u_warm` carries the previous root of the
// same coordinate across outer iterations, where lambda moves only slightly.
Point log_newton(const Coord& c, Scalar theta, Scalar w, Scalar kappa, Scalar prior, Scalar lambda, Scalar& u_warm) {
  constexpr Scalar kMaxLog = 700;
  const Scalar u_limit = c.shape == Shape::barrier ? std::log(c.cap) : kMaxLog;
  auto F = [&](Scalar u) {
    const Scalar p = std::exp(u);
    if (c.shape == Shape::barrier && p >= c.cap) return kInf;
    return -theta + lambda + w * coord_derivative(c, p) + kappa * (u + 1 - prior);
  };
  auto dF = [&](Scalar u) {
    const Scalar p = std::exp(u);
    return p * w * coord_curvature(c, p) + kappa;
  };

  Scalar u = std::isfinite(u_warm) ? u_warm : (theta - lambda) / kappa - 1 + prior;
  Scalar lo = -kInf, hi = u_limit;
  if (u >= hi) u = c.shape == Shape::barrier ? hi - 1 : hi;
  for (int it = 0; it < kMaxInner; ++it) {
    const Scalar f = F(u);
    if (f == 0) break;
    if (f > 0) hi = u; else lo = u;
    Scalar next = u - f / dF(u);
    if (!(next < hi)) next = std::isfinite(lo) ? 0.5 * (lo + hi) : 0.5 * (u + hi);
    if (!(next > lo)) next = std::isfinite(lo) ? 0.5 * (lo + hi) : u - 1;
    next = std::max(next, u - kMaxLog);
    const bool done = std::abs(next - u) <= 1e-14 * std::max<Scalar>(1, std::abs(u));
    u = next;
    if (done) break;
  }
  u_warm = u;
  const Scalar p = std::exp(u);
  return {p, -1 / (w * coord_curvature(c, p) + kappa / p)};
}

// Wright omega function: the solution w of w + log w = x, by Fritsch's
// iteration (cubically convergent) from a two-branch starting guess.
Scalar wright_omega(Scalar x) {
  if (x < -745) return std::exp(x);
  Scalar w = x > 1 ? x - std::log(x) : 0.82 * std::log1p(std::exp(x));
  for (int it = 0; it < 8; ++it) {
    const Scalar z = x - std::log(w) - w;
    const Scalar q = 2 * (1 + w) * (1 + w + 2 * z / 3);
    const Scalar eps = z / (1 + w) * (q - z) / (q - 2 * z);
    w *= 1 + eps;
    if (std::abs(eps) <= 1e-16) break;
  }
  return w;
}

// Minimiser over p >= 0 of psi_a(p) + lambda p for a curved coordinate.
Point coord_argmin(const Coord& c, Scalar theta, Scalar w, Scalar kappa, Scalar prior, Scalar lambda, Scalar& u_warm) {
  if (kappa > 0) {
    if (c.shape == Shape::linear) {
      const Scalar p = std::exp((theta - lambda - w * c.slope) / kappa - 1 + prior);
      return {p, -p / kappa};
    }
    if (c.shape == Shape::entropy) {
      const Scalar beta = w + kappa;
      const Scalar p = std::exp((theta - w * c.slope + kappa * prior - lambda) / beta - 1);
      return {p, -p / beta};
    }
    if (c.shape == Shape::power && c.q == 2) {
      // 2 w p + kappa log p = theta - lambda - kappa (1 - prior); with x = 2 w p / kappa
      // this reads x + log x = const.
      const Scalar rhs = (theta - lambda) / kappa - 1 + prior + std::log(2 * w / kappa);
      const Scalar p = kappa / (2 * w) * wright_omega(rhs);
      return {p, -1 / (2 * w + kappa / p)};
    }
    return log_newton(c, theta, w, kappa, prior, lambda, u_warm);
  }

  const Scalar d = theta - lambda;
  switch (c.shape) {
    case Shape::entropy: {
      const Scalar p = std::exp((d - w * c.slope) / w - 1);
      return {p, -p / w};
    }
    case Shape::power: {
      if (c.q > 1) {
        if (d <= 0) return {0, 0};
      } else if (d >= 0) {
        return {kInf, -kInf};
      }
      const Scalar base = (c.q - 1) * d / (w * c.q);
      const Scalar p = std::pow(base, 1 / (c.q - 1));
      if (p == 0) return {0, 0};
      return {p, -1 / (w * coord_curvature(c, p))};
    }
    case Shape::barrier: {
      if (d <= w / c.cap) return {0, 0};
      const Scalar p = c.cap - w / d;
      return {p, -w / (d * d)};
    }
    case Shape::linear: break;
  }
  return {0, 0};
}

}  // namespace

Scalar coord_value(const Coord& c, Scalar p) {
  switch (c.shape) {
    case Shape::linear: return c.slope * p;
    case Shape::entropy: return (p > 0 ? p * std::log(p) : 0) + c.slope * p;
    case Shape::power: return std::pow(p, c.q) / (c.q - 1);
    case Shape::barrier: return p >= c.cap ? kInf : -std::log(c.cap - p);
  }
  return 0;
}

Scalar coord_derivative(const Coord& c, Scalar p) {
  switch (c.shape) {
    case Shape::linear: return c.slope;
    case Shape::entropy: return std::log(p) + 1 + c.slope;
    case Shape::power: return c.q * std::pow(p, c.q - 1) / (c.q - 1);
    case Shape::barrier: return 1 / (c.cap - p);
  }
  return 0;
}

Vector solve_separable(const std::vector<Coord>& coords, const Vector& theta, Scalar w, Scalar kappa,
                       const Vector& prior) {
  const Index n = theta.size();
  auto all = [&](Shape s) {
    for (const auto& c : coords)
      if (c.shape != s) return false;
    return true;
  };
  Vector slope(n);
  for (Index a = 0; a < n; ++a) slope(a) = coords[static_cast<std::size_t>(a)].slope;

  // Closed forms.
  if (kappa == 0) {
    if (all(Shape::linear)) return argmax_vertex(theta - w * slope);
    if (all(Shape::entropy)) return softmax((theta - w * slope) / w);
    bool sparsemax = all(Shape::power);
    for (const auto& c : coords) sparsemax = sparsemax && c.q == 2;
    if (sparsemax) return project_simplex(theta / (2 * w));
  } else {
    if (all(Shape::entropy)) return softmax((theta - w * slope + kappa * prior) / (w + kappa));
    if (all(Shape::linear)) return softmax((theta - w * slope) / kappa + prior);
  }

  bool only_barriers = true;
  Scalar capacity = 0;
  for (const auto& c : coords) {
    only_barriers = only_barriers && c.shape == Shape::barrier;
    capacity += c.cap;
  }
  if (only_barriers && capacity <= 1)
    throw InfeasibleError("barrier caps sum to " + std::to_string(capacity) + " <= 1; no feasible policy");

  // Linear coordinates only exist as a separate set when kappa == 0.
  Index best_linear = -1;
  Scalar lambda_linear = -kInf;
  if (kappa == 0) {
    for (Index a = 0; a < n; ++a) {
      if (coords[static_cast<std::size_t>(a)].shape != Shape::linear) continue;
      const Scalar v = theta(a) - w * slope(a);
      if (best_linear < 0 || v > lambda_linear) {
        best_linear = a;
        lambda_linear = v;
      }
    }
  }

  Vector p = Vector::Zero(n);
  std::vector<Scalar> warm(static_cast<std::size_t>(n), std::numeric_limits<Scalar>::quiet_NaN());
  auto evaluate = [&](Scalar lambda, Scalar& sum, Scalar& dsum) {
    sum = 0;
    dsum = 0;
    for (Index a = 0; a < n; ++a) {
      const Coord& c = coords[static_cast<std::size_t>(a)];
      if (kappa == 0 && c.shape == Shape::linear) {
        p(a) = 0;
        continue;
      }
      const Point pt = coord_argmin(c, theta(a), w, kappa, kappa > 0 ? prior(a) : 0, lambda, warm[static_cast<std::size_t>(a)]);
      p(a) = pt.p;
      sum += pt.p;
      dsum += pt.dp;
    }
  };

  Scalar sum, dsum;
  Scalar lo, hi;
  if (best_linear >= 0) {
    evaluate(lambda_linear, sum, dsum);
    if (sum <= 1) {
      p(best_linear) += 1 - sum;
      return p / p.sum();
    }
    lo = lambda_linear;
    Scalar step = 1;
    hi = lo + step;
    for (evaluate(hi, sum, dsum); sum > 1; evaluate(hi, sum, dsum)) {
      lo = hi;
      step *= 2;
      hi = lo + step;
    }
  } else {
    // With kappa > 0 the multiplier of the pure-entropy problem is a close
    // starting point; the step scale follows the curvature weights.
    Scalar start = theta.maxCoeff();
    Scalar step = 1;
    if (kappa > 0) {
      Vector z(n);
      for (Index a = 0; a < n; ++a) z(a) = theta(a) / kappa - 1 + prior(a);
      start = kappa * log_sum_exp(z);
      step = std::max<Scalar>(1e-8, std::min<Scalar>(1, w + kappa));
    }
    // The sum is convex and decreasing in lambda for kappa > 0, so plain
    // Newton from the entropy multiplier converges monotonically after at
    // most one overshoot. The bracket below is the fallback.
    if (kappa > 0) {
      Scalar lambda = start;
      for (int it = 0; it < kMaxOuter; ++it) {
        evaluate(lambda, sum, dsum);
        const Scalar residual = sum - 1;
        if (std::abs(residual) <= 16 * std::numeric_limits<Scalar>::epsilon()) return p / p.sum();
        if (!(dsum < 0 && std::isfinite(dsum) && std::isfinite(sum))) break;
        const Scalar next = lambda - residual / dsum;
        if (!std::isfinite(next) || next == lambda) {
          if (std::abs(residual) <= 1e-12) return p / p.sum();
          break;
        }
        lambda = next;
      }
      std::fill(warm.begin(), warm.end(), std::numeric_limits<Scalar>::quiet_NaN());
    }
    evaluate(start, sum, dsum);
    if (sum >= 1) {
      lo = start;
      hi = start + step;
      for (evaluate(hi, sum, dsum); sum > 1; evaluate(hi, sum, dsum)) {
        lo = hi;
        step *= 2;
        hi = lo + step;
      }
    } else {
      hi = start;
      lo = start - step;
      for (evaluate(lo, sum, dsum); sum < 1; evaluate(lo, sum, dsum)) {
        hi = lo;
        step *= 2;
        lo = hi - step;
      }
    }
  }

  // Safeguarded Newton on sum_a p_a(lambda) = 1, bracket [lo, hi].
  Scalar lambda = 0.5 * (lo + hi);
  for (int it = 0; it < kMaxOuter; ++it) {
    evaluate(lambda, sum, dsum);
    const Scalar residual = sum - 1;
    if (std::abs(residual) <= 16 * std::numeric_limits<Scalar>::epsilon()) break;
    if (residual > 0) lo = lambda; else hi = lambda;
    Scalar next = (dsum < 0 && std::isfinite(dsum)) ? lambda - residual / dsum : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == lambda || hi - lo <= 2 * std::numeric_limits<Scalar>::epsilon() * std::max<Scalar>(1, std::abs(lambda))) {
      evaluate(next, sum, dsum);
      break;
    }
    lambda = next;
  }
  return p / p.sum();
}

}  // namespace regmdp::detail
