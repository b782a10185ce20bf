#pragma once

#include "regmdp/mdp.hpp"
#include "regmdp/policy_eval.hpp"
#include "regmdp/regularizer.hpp"
#include "regmdp/types.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace regmdp {

enum class Algorithm { gpmd, approx_gpmd, pmd, reg_pi };
enum class InitPolicy { h_minimizer, uniform, user };

const char* to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

inline constexpr Scalar kInfiniteEta = std::numeric_limits<Scalar>::infinity();

/// Snapshot handed to SolverConfig::observer once per iterate k, after the
/// iterate has been evaluated. `q` is the exact Q^{(k)}; `xi` is null for
/// methods without a dual iterate.
struct IterateView {
  long k;
  const Policy& pi;
  const DualTable* xi;
  const Evaluation& exact;
};

using IterateObserver = std::function<void(const IterateView&)>;

struct SolverConfig {
  Algorithm algorithm = Algorithm::gpmd;
  Scalar eta = 1;  // kInfiniteEta only for reg_pi
  Scalar tau = 1;
  long max_iters = 100;
  Scalar eps_opt = 0;
  EvalNoiseSpec noise;
  InitPolicy init = InitPolicy::h_minimizer;
  Policy user_policy;                   // read when init == user
  std::optional<DualTable> initial_xi;  // default: subgradient of h at pi^{(0)}
  std::shared_ptr<const Optimum> reference;
  std::optional<Scalar> target_q_gap;  // stop once q_gap <= target (needs a reference)
  IterateObserver observer;
  std::uint64_t seed = 0;

  /// Throws ParameterError on any violated invariant.
  void validate() const;
};

struct TraceRecord {
  long iter = 0;
  Scalar q_gap = 0;
  Scalar v_gap = 0;
  Scalar xi_gap = 0;
  Scalar pi_l1_gap = 0;
  Scalar elapsed_ms = 0;
};

/// One record per iterate k = 0, 1, ... Gap columns are measured against the
/// reference optimum when one is supplied. Without it, q_gap carries the
/// Bellman residual ||T(Q^{(k)}) - Q^{(k)}||_inf and the other gaps are NaN; a
/// column that does not exist for the method (xi for PMD) is NaN as well.
struct ConvergenceTrace {
  std::vector<TraceRecord> records;
  std::vector<std::pair<std::string, std::string>> metadata;
  bool has_reference = false;
  bool target_reached = false;

  /// First iterate whose q_gap is <= eps, if any.
  std::optional<long> first_below(Scalar eps) const;
  const TraceRecord& back() const { return records.back(); }
};

struct RunResult {
  Policy pi;
  DualTable xi;  // empty for pmd
  ConvergenceTrace trace;
};

RunResult gpmd_run(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg);
RunResult approx_gpmd_run(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg);
RunResult pmd_run(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg);
RunResult reg_policy_iteration_run(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg);

/// Dispatches on cfg.algorithm.
RunResult run_solver(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg);

/// pi^{(0)} and xi^{(0)} as the solvers construct them.
Policy initial_policy(const Regularizer& reg, const SolverConfig& cfg, Index n_states, Index n_actions);

// ---------------------------------------------------------------------------

struct StageRecord {
  int stage = 0;
  Scalar tau = 0;
  long iterations = 0;  // GPMD updates performed in the stage
  Scalar q_gap = 0;     // ||Q* - Q^{pi}||_inf, unregularized, at the end of the stage
  Scalar bound = 0;     // 3 tau B / (1 - gamma)
};

struct AdaptiveResult {
  Policy pi;
  DualTable xi;
  std::vector<StageRecord> stages;
  ConvergenceTrace trace;  // one record per stage, q_gap column only
};

/// T_i = ceil((1 + eta tau) / ((1 - gamma) eta tau) * log(8 / (1 - gamma))).
long adaptive_stage_length(Scalar eta, Scalar tau, Scalar gamma);

/// Stage-wise GPMD with tau halving. `unregularized_optimum` defaults to
/// compute_optimal(zero, tol 1e-10). Throws ParameterError when h is unbounded.
AdaptiveResult adaptive_gpmd_run(const Mdp& mdp, const Regularizer& reg, Scalar eta, int n_stages,
                                 std::shared_ptr<const Optimum> unregularized_optimum = nullptr);

// ---------------------------------------------------------------------------

struct BoundReport {
  Scalar alpha = 0;
  Scalar rate = 0;
  Scalar c1 = 0;
  Scalar c2 = 0;
  Scalar c3 = 0;
  Scalar gamma = 0;
  Scalar tau = 0;
  Scalar eps_opt = 0;
  bool strongly_convex = false;

  /// Exact-GPMD envelopes for iterate k >= 1. Index 0 holds C1 itself.
  std::vector<Scalar> q_envelope;
  std::vector<Scalar> v_envelope;
  std::vector<Scalar> pi_envelope;  // only meaningful for strongly convex h
  /// Approximate-GPMD envelope gamma (rate^{k-1} C1 + C) with C = C3 when h is
  /// 1-strongly convex and C2 otherwise.
  std::vector<Scalar> approx_q_envelope;

  Scalar floor_constant() const { return strongly_convex ? c3 : c2; }
  /// Iterations k after which gamma rate^k C1 <= eps.
  long iterations_for(Scalar eps) const;
};

/// Bound constants for a run started from (xi0, Q0); envelopes have
/// cfg.max_iters + 1 entries.
BoundReport bound_report(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg, const Optimum& reference,
                         const DualTable& xi0, const QTable& q0);

}  // namespace regmdp
