#pragma once

#include "regmdp/types.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace regmdp {

using SparseKernel = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

/**
 * Finite discounted MDP (S, A, P, r, gamma).
 *
 * The kernel is held twice: densely as an (|S|*|A|) x |S| matrix whose row
 * s*|A|+a is P(.|s,a), and as a row-major sparse matrix with the same layout
 * for expectation sums. Instances are immutable after construction.
 */
class Mdp {
 public:
  /// Validates every invariant; throws ValidationError on violation.
  Mdp(Index n_states, Index n_actions, Matrix transition, Matrix reward, Scalar discount);

  Index n_states() const { return n_states_; }
  Index n_actions() const { return n_actions_; }
  Scalar discount() const { return discount_; }

  /// (|S|*|A|) x |S|, row s*|A|+a holds P(.|s,a).
  const Matrix& transition() const { return transition_; }
  const SparseKernel& kernel() const { return kernel_; }
  /// |S| x |A| rewards in [0, 1].
  const Matrix& reward() const { return reward_; }

  Scalar p(Index s, Index a, Index next) const { return transition_(s * n_actions_ + a, next); }
  Index pair_index(Index s, Index a) const { return s * n_actions_ + a; }

  /// E_{s'~P(.|s,a)}[v(s')] for every pair, reshaped to |S| x |A|.
  Matrix expect(const Vector& v) const;

  /// State-to-state kernel P_pi(s, s') = sum_a pi(a|s) P(s'|s,a).
  Matrix state_kernel(const Policy& pi) const;

  bool operator==(const Mdp& other) const;

 private:
  Index n_states_;
  Index n_actions_;
  Matrix transition_;
  SparseKernel kernel_;
  Matrix reward_;
  Scalar discount_;
};

using StateAction = std::pair<Index, Index>;

/// Base MDP plus the pair set Psi whose probabilities must stay below pi_max.
struct ConstrainedInstance {
  Mdp base;
  std::vector<StateAction> forbidden_pairs;
  Scalar pi_max;
};

/**
 * Random instance: every (s,a) has exactly `support_size` successors drawn
 * uniformly without replacement (the origin state may be among them), each with
 * probability 1/support_size; r(s,a) = U_{s,a} * U_s with independent uniforms.
 * A pure function of its arguments.
 */
Mdp generate_random_mdp(Index n_states, Index n_actions, Index support_size, std::uint64_t seed,
                        Scalar discount = 0.9);

/// Probability above which an action counts as supported by a policy.
inline constexpr Scalar kSupportThreshold = 1e-6;

/// Samples n_pairs distinct supported pairs of `optimal_policy` uniformly without replacement.
ConstrainedInstance build_constrained_instance(const Mdp& mdp, const Policy& optimal_policy,
                                               Index n_pairs, Scalar pi_max, std::uint64_t seed);

// --- persistence -----------------------------------------------------------

std::string mdp_to_json(const Mdp& mdp);
Mdp mdp_from_json(const std::string& text);

void save_mdp(const Mdp& mdp, const std::filesystem::path& path);
Mdp load_mdp(const std::filesystem::path& path);

/// FNV-1a over the canonical serialisation.
std::uint64_t content_hash(const Mdp& mdp);
std::string hash_hex(std::uint64_t h);

// Pair-set files hold {"pi_max": x, "pairs": [[s, a], ...]}.
void save_pairs(const ConstrainedInstance& inst, const std::filesystem::path& path);
std::pair<std::vector<StateAction>, Scalar> load_pairs(const std::filesystem::path& path);

/// Formats a double with 17 significant digits ("%.17g").
std::string format_real(double x);

}  // namespace regmdp
