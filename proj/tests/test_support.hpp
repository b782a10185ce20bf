#pragma once

#include "regmdp/mdp.hpp"
#include "regmdp/regularizer.hpp"
#include "regmdp/rng.hpp"
#include "regmdp/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace regmdp::testing {

// Deterministic MDP from a successor table: next[s][a] is the unique successor.
inline Mdp deterministic_mdp(const std::vector<std::vector<Index>>& next, const Matrix& reward, Scalar gamma) {
  const auto ns = static_cast<Index>(next.size());
  const auto na = static_cast<Index>(next[0].size());
  Matrix p = Matrix::Zero(ns * na, ns);
  for (Index s = 0; s < ns; ++s)
    for (Index a = 0; a < na; ++a) p(s * na + a, next[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]) = 1;
  return Mdp(ns, na, p, reward, gamma);
}

// Single state with |A| self-loops.
inline Mdp single_state(const std::vector<Scalar>& rewards, Scalar gamma) {
  Matrix r(1, static_cast<Index>(rewards.size()));
  for (std::size_t a = 0; a < rewards.size(); ++a) r(0, static_cast<Index>(a)) = rewards[a];
  return deterministic_mdp({std::vector<Index>(rewards.size(), 0)}, r, gamma);
}

// Random MDP with dense random transition rows (not the sparse generator).
inline Mdp dense_random_mdp(Index ns, Index na, std::uint64_t seed, Scalar gamma) {
  Rng rng(seed, 99);
  Matrix p(ns * na, ns);
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index j = 0; j < ns; ++j) p(i, j) = rng.uniform() + 0.05;
    p.row(i) /= p.row(i).sum();
  }
  Matrix r(ns, na);
  for (Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform();
  return Mdp(ns, na, p, r, gamma);
}

// Uniform random point on the simplex (normalised exponentials).
inline Vector random_simplex(Rng& rng, Index n, Scalar floor = 0) {
  Vector p(n);
  for (Index i = 0; i < n; ++i) p(i) = -std::log(1 - rng.uniform()) + floor;
  return p / p.sum();
}

inline Policy random_policy(Rng& rng, Index ns, Index na, Scalar floor = 0.01) {
  Policy pi(Matrix(ns, na));
  for (Index s = 0; s < ns; ++s) pi.probs.row(s) = random_simplex(rng, na, floor).transpose();
  return pi;
}

// One instance of every shipped regularizer kind, sized for (ns, na).
inline std::vector<Regularizer> all_kinds(Index ns, Index na) {
  Rng rng(17, 3);
  Matrix ref(ns, na), weights(ns, na);
  for (Index s = 0; s < ns; ++s) {
    ref.row(s) = random_simplex(rng, na, 0.2).transpose();
    for (Index a = 0; a < na; ++a) weights(s, a) = rng.uniform();
  }
  std::vector<StateAction> pairs;
  for (Index s = 0; s < ns; ++s) pairs.emplace_back(s, s % na);
  return {Regularizer::shannon(),
          Regularizer::kl_to_reference(Policy(ref)),
          Regularizer::tsallis(2),
          Regularizer::tsallis(1.5),
          Regularizer::tsallis(0.5),
          Regularizer::weighted_l1(weights),
          Regularizer::log_barrier(pairs, 0.6),
          Regularizer::zero()};
}

inline std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "regmdp_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace regmdp::testing
