#pragma once

#include "regmdp/mdp.hpp"
#include "regmdp/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace regmdp {

enum class RegKind { shannon, kl_to_reference, tsallis, weighted_l1, log_barrier, zero };

/**
 * Per-state convex regularizer h_s on the probability simplex.
 *
 * Every shipped kind is coordinate-separable, h_s(p) = sum_a phi_{s,a}(p_a) + const,
 * which is what lets the greedy and proximal solvers reduce to a scalar dual
 * root. Instances are immutable and may be shared freely between threads.
 *
 *   shannon       sum_a p_a log p_a
 *   kl            sum_a p_a log(p_a / ref_s(a))
 *   tsallis(q)    (sum_a p_a^q - 1) / (q - 1)     (negative Tsallis entropy)
 *   weighted_l1   sum_a w_{s,a} p_a
 *   log_barrier   sum_{(s,a) in Psi} -log(pi_max - p_a), +inf once p_a >= pi_max
 *   zero          0
 */
class Regularizer {
 public:
  static Regularizer shannon();
  static Regularizer kl_to_reference(Policy reference);
  static Regularizer tsallis(Scalar q);
  static Regularizer weighted_l1(Matrix weights);
  static Regularizer log_barrier(std::vector<StateAction> pairs, Scalar pi_max);
  static Regularizer zero();

  RegKind kind() const { return kind_; }
  /// Modulus of strong convexity w.r.t. the l1 norm (0 when merely convex).
  Scalar strong_convexity_l1() const { return mu_; }
  /// sup_p |h_s(p)| bound for |A| actions, or nullopt when h is unbounded on the simplex.
  std::optional<Scalar> bound_B(Index n_actions) const;

  Regularizer with_strong_convexity(Scalar mu) const;
  Regularizer with_bound(Scalar bound) const;

  Scalar tsallis_q() const { return q_; }
  Scalar pi_max() const { return pi_max_; }
  const Matrix& table() const { return table_; }
  const std::vector<StateAction>& pairs() const { return pairs_; }
  /// Actions of state s that carry a barrier term.
  const std::vector<Index>& constrained_actions(Index s) const;

  /// Canonical spec string (paths are echoed when the instance came from a file).
  const std::string& spec() const { return spec_; }
  Regularizer with_spec(std::string spec) const;

 private:
  Regularizer(RegKind kind, Scalar mu) : kind_(kind), mu_(mu) {}

  RegKind kind_;
  Scalar mu_ = 0;
  std::optional<Scalar> bound_override_;
  Scalar q_ = 2;
  Scalar pi_max_ = 1;
  Matrix table_;  // reference policy or weights
  std::vector<StateAction> pairs_;
  std::vector<std::vector<Index>> per_state_;
  std::string spec_;
};

/// Parses a CLI spec: shannon | kl:ref=<path> | tsallis:q=<real> | l1:weights=<path> |
/// logbarrier:pairs=<path>,pimax=<real> | zero. Throws ParameterError.
Regularizer parse_regularizer(const std::string& spec);

// Slack allowed when checking that an argument lies on the simplex.
inline constexpr Scalar kSimplexSlack = 1e-12;

/// h_s(p); +inf outside the effective domain. Throws DomainError when p is off the simplex.
Scalar eval_h(const Regularizer& reg, Index s, const Vector& p);

/// Canonical element of the subdifferential of h_s at p.
Vector subgradient(const Regularizer& reg, Index s, const Vector& p);

/// Generalised Bregman divergence h(p) - h(q) - <xi_s, p - q>.
Scalar bregman(const Regularizer& reg, Index s, const Vector& p, const Vector& q, const Vector& xi_s);

/// argmax_p <theta, p> - weight * h_s(p) over the simplex. Closed forms are exact;
/// the numeric dual route is solved to machine precision, so `tol` is only validated.
Vector regularized_greedy(const Regularizer& reg, Index s, const Vector& theta, Scalar weight, Scalar tol = 1e-12);

/// Value of the greedy problem, max_p <theta, p> - weight * h_s(p).
Scalar regularized_greedy_value(const Regularizer& reg, Index s, const Vector& theta, Scalar weight);

/// Objective of the mirror-descent subproblem:
/// -<q_row, p> + tau h(p) + (1/eta) D(p, pi_row; xi_row).
Scalar subproblem_objective(const Regularizer& reg, Index s, const Vector& p, const Vector& q_row,
                            const Vector& pi_row, const Vector& xi_row, Scalar eta, Scalar tau);

/**
 * eps_opt-suboptimal oracle for the mirror-descent subproblem.
 *
 * The exact minimiser is regularized_greedy((eta q + xi) / (1 + eta tau), 1). With
 * eps_opt > 0 the returned point is moved towards pi_row for as long as the
 * objective stays within eps_opt of the minimum, i.e. it spends the whole budget.
 */
Vector solve_subproblem(const Regularizer& reg, Index s, const Vector& q_row, const Vector& pi_row,
                        const Vector& xi_row, Scalar eta, Scalar tau, Scalar eps_opt);

/// KL-proximal step: argmin_p -<q_row, p> + tau h_s(p) + (1/eta) KL(p || pi_row).
/// Zero coordinates of pi_row are clamped to 1e-15 so the divergence stays finite.
Vector kl_proximal_step(const Regularizer& reg, Index s, const Vector& q_row, const Vector& pi_row, Scalar eta,
                        Scalar tau);

/// Probability floor used wherever a logarithm of a policy entry is taken.
inline constexpr Scalar kProbClamp = 1e-15;

}  // namespace regmdp
