#pragma once

#include "regmdp/mdp.hpp"
#include "regmdp/regularizer.hpp"
#include "regmdp/types.hpp"

#include <cstdint>

namespace regmdp {

struct Evaluation {
  ValueTable v;
  QTable q;
};

/// Exact (V, Q) of pi under tau * h by a dense LU solve of (I - gamma P_pi) V = c.
/// tau = 0 gives the unregularized values and ignores `reg`.
Evaluation evaluate_policy_exact(const Mdp& mdp, const Regularizer& reg, Scalar tau, const Policy& pi);

/// Generalized Bellman operator applied to Q. Requires tau > 0 unless reg is zero.
QTable regularized_bellman(const Mdp& mdp, const Regularizer& reg, Scalar tau, const QTable& q);

struct Optimum {
  QTable q;
  ValueTable v;
  Policy pi;
  long iterations = 0;
  Scalar residual = 0;  // final ||T(Q) - Q||_inf
};

/// Q*_tau by value iteration from Q = 0, stopped once ||Q - Q*||_inf <= tol is
/// certified by the contraction bound. Throws ConvergenceError after 10^6 sweeps.
Optimum compute_optimal(const Mdp& mdp, const Regularizer& reg, Scalar tau, Scalar tol);

/// d = (1 - gamma) e_{s0} + gamma P_pi^T d.
Vector discounted_visitation(const Mdp& mdp, const Policy& pi, Index s0);

/// d_{s0}(s) Q^pi(s, a) / (1 - gamma) for the unregularized value of s0.
Matrix policy_gradient_unregularized(const Mdp& mdp, const Policy& pi, Index s0);

enum class NoiseMode { uniform, adversarial_sign };

struct EvalNoiseSpec {
  Scalar eps_eval = 0;
  NoiseMode mode = NoiseMode::uniform;
  std::uint64_t seed = 0;
};

/// Q^pi_tau plus bounded noise. `draw` selects an independent noise sample for
/// the same seed, so iteration k of a solver passes draw = k.
QTable noisy_evaluate(const Mdp& mdp, const Regularizer& reg, Scalar tau, const Policy& pi,
                      const EvalNoiseSpec& noise, std::uint64_t draw = 0);

/// Adds the noise sample `draw` of `noise` to q in place.
void add_eval_noise(Matrix& q, const EvalNoiseSpec& noise, std::uint64_t draw);

/// Per-state max-norm of the difference of two policies in l1.
Scalar max_l1_distance(const Policy& a, const Policy& b);

/// Greedy policy of a Q table: regularized_greedy(Q(s,.), tau) per state, or
/// the first-argmax vertex when tau == 0.
Policy greedy_policy(const Regularizer& reg, Scalar tau, const Matrix& q);

}  // namespace regmdp
