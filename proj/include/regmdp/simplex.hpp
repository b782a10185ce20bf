#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

namespace regmdp {

template <class Derived>
using PlainVector = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>;

/// True when p is nonnegative (up to -slack) and sums to one within slack.
template <class Derived>
bool on_simplex(const Eigen::MatrixBase<Derived>& p, typename Derived::Scalar slack = 1e-12) {
  if (p.size() == 0 || !p.allFinite()) return false;
  return p.minCoeff() >= -slack && std::abs(p.sum() - 1) <= slack;
}

/// exp(z - max z) normalised; finite for any finite input.
template <class Derived>
PlainVector<Derived> softmax(const Eigen::MatrixBase<Derived>& z) {
  using std::exp;
  PlainVector<Derived> out = (z.array() - z.maxCoeff()).exp().matrix();
  return out / out.sum();
}

/// log sum exp(z), evaluated with max-subtraction.
template <class Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& z) {
  using std::log;
  const auto m = z.maxCoeff();
  return m + log((z.array() - m).exp().sum());
}

/**
 * Euclidean projection onto the probability simplex (sparsemax).
 * Sort-and-threshold: find the largest k with v_(k) + (1 - sum_{j<=k} v_(j))/k > 0.
 */
template <class Derived>
PlainVector<Derived> project_simplex(const Eigen::MatrixBase<Derived>& v) {
  using S = typename Derived::Scalar;
  const auto n = v.size();
  std::vector<S> sorted(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) sorted[static_cast<std::size_t>(i)] = v(i);
  std::sort(sorted.begin(), sorted.end(), std::greater<S>());
  S cumulative = 0;
  S threshold = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    cumulative += sorted[static_cast<std::size_t>(k)];
    const S t = (cumulative - 1) / static_cast<S>(k + 1);
    if (sorted[static_cast<std::size_t>(k)] - t > 0) threshold = t;
  }
  PlainVector<Derived> out = (v.array() - threshold).max(S(0)).matrix();
  return out / out.sum();
}

/// One-hot vector on the first maximiser of v.
template <class Derived>
PlainVector<Derived> argmax_vertex(const Eigen::MatrixBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  PlainVector<Derived> out = PlainVector<Derived>::Zero(v.size());
  out(best) = 1;
  return out;
}

}  // namespace regmdp
