#include "regmdp/verify.hpp"

#include "regmdp/mdp.hpp"
#include "regmdp/policy_eval.hpp"
#include "regmdp/regularizer.hpp"
#include "regmdp/rng.hpp"
#include "regmdp/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace regmdp {

namespace {

// Stream for the randomness of verification inputs; disjoint from library streams.
constexpr std::uint64_t kVerifyStream = 41;

class Suite {
 public:
  explicit Suite(std::string name) : name_(std::move(name)) {}

  // Records value <= bound.
  void check(const std::string& property, Scalar value, Scalar bound) {
    PropertyResult& r = slot(property);
    const Scalar excess = value - bound;
    ++r.checks;
    r.worst = std::max(r.worst, std::isnan(excess) ? std::numeric_limits<Scalar>::infinity() : excess);
    r.passed = r.passed && excess <= 0;
  }

  std::vector<PropertyResult> take() { return std::move(results_); }

 private:
  PropertyResult& slot(const std::string& property) {
    for (auto& r : results_)
      if (r.name == property) return r;
    results_.push_back({name_, property});
    return results_.back();
  }

  std::string name_;
  std::vector<PropertyResult> results_;
};

Vector random_simplex(Rng& rng, Index n, Scalar floor) {
  Vector p(n);
  for (Index i = 0; i < n; ++i) p(i) = -std::log(1 - rng.uniform()) + floor;
  return p / p.sum();
}

Policy random_policy(Rng& rng, Index ns, Index na, Scalar floor) {
  Policy pi(Matrix(ns, na));
  for (Index s = 0; s < ns; ++s) pi.probs.row(s) = random_simplex(rng, na, floor).transpose();
  return pi;
}

// One instance of every shipped kind for an ns x na problem.
std::vector<Regularizer> shipped_regularizers(Index ns, Index na, std::uint64_t seed) {
  Rng rng(seed, kVerifyStream + 1);
  Matrix ref(ns, na), weights(ns, na);
  for (Index s = 0; s < ns; ++s) {
    ref.row(s) = random_simplex(rng, na, 0.2).transpose();
    for (Index a = 0; a < na; ++a) weights(s, a) = rng.uniform();
  }
  std::vector<StateAction> pairs;
  for (Index s = 0; s < ns; ++s) pairs.emplace_back(s, s % na);
  const Scalar cap = std::min<Scalar>(0.9, 1.5 / static_cast<Scalar>(na));
  return {Regularizer::shannon(),
          Regularizer::kl_to_reference(Policy(ref)),
          Regularizer::tsallis(2),
          Regularizer::tsallis(1.5),
          Regularizer::weighted_l1(weights),
          Regularizer::log_barrier(pairs, cap),
          Regularizer::zero()};
}

// Moves p towards uniform until it lies in the domain of h_s.
Vector feasible(const Regularizer& reg, Index s, Vector p) {
  const Vector u = Vector::Constant(p.size(), Scalar(1) / static_cast<Scalar>(p.size()));
  for (int it = 0; it < 60 && !std::isfinite(eval_h(reg, s, p)); ++it) p = 0.5 * (p + u);
  return p;
}

Policy feasible(const Regularizer& reg, Policy pi) {
  for (Index s = 0; s < pi.n_states(); ++s) pi.probs.row(s) = feasible(reg, s, pi.row(s).transpose()).transpose();
  return pi;
}

Scalar max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

struct Iterate {
  Policy pi;
  Matrix q;
  Vector v;
  Matrix xi;
};

std::vector<Iterate> record_run(const Mdp& m, const Regularizer& reg, SolverConfig cfg, RunResult* out = nullptr) {
  std::vector<Iterate> its;
  cfg.observer = [&](const IterateView& v) {
    its.push_back({v.pi, v.exact.q.q, v.exact.v.v, v.xi ? v.xi->xi : Matrix()});
  };
  RunResult r = run_solver(m, reg, cfg);
  if (out) *out = std::move(r);
  return its;
}

// ---------------------------------------------------------------------------

std::vector<PropertyResult> bellman_suite(std::uint64_t seed) {
  Suite suite("bellman");
  const Mdp m = generate_random_mdp(12, 4, 4, seed, 0.9);
  Rng rng(seed, kVerifyStream);
  const Scalar tau = 0.1, tol = 1e-10;
  for (const auto& reg : shipped_regularizers(12, 4, seed)) {
    for (int trial = 0; trial < 5; ++trial) {
      Matrix q1(12, 4), q2(12, 4);
      for (Index i = 0; i < q1.size(); ++i) {
        q1.data()[i] = rng.uniform(-5, 15);
        q2.data()[i] = rng.uniform(-5, 15);
      }
      const Matrix t1 = regularized_bellman(m, reg, tau, {q1}).q;
      const Matrix t2 = regularized_bellman(m, reg, tau, {q2}).q;
      suite.check("contraction ||TQ1 - TQ2|| <= gamma ||Q1 - Q2|| + 1e-9", max_abs(t1 - t2),
                  m.discount() * max_abs(q1 - q2) + 1e-9);
    }
    const Optimum opt = compute_optimal(m, reg, tau, tol);
    const Matrix tq = regularized_bellman(m, reg, tau, opt.q).q;
    suite.check("fixed point ||TQ* - Q*|| <= 2 tol", max_abs(tq - opt.q.q), 2 * tol);
    // The greedy policy of Q* attains the regularized value V*.
    const Evaluation ev = evaluate_policy_exact(m, reg, tau, opt.pi);
    suite.check("Q of the greedy policy matches Q* within 2 tol / (1 - gamma)", max_abs(ev.q.q - opt.q.q),
                2 * tol / (1 - m.discount()) + 1e-9);
  }
  return suite.take();
}

std::vector<PropertyResult> lemmas_suite(std::uint64_t seed) {
  Suite suite("lemmas");
  const Index ns = 10, na = 4;
  const Mdp m = generate_random_mdp(ns, na, 4, seed, 0.9);
  Rng rng(seed, kVerifyStream);
  const auto regs = shipped_regularizers(ns, na, seed);

  for (const auto& reg : regs) {
    SolverConfig cfg;
    cfg.eta = 0.8;
    cfg.tau = 0.1;
    cfg.max_iters = 40;
    cfg.init = InitPolicy::uniform;
    const auto its = record_run(m, reg, cfg);
    for (std::size_t k = 1; k < its.size(); ++k) {
      suite.check("monotone V^{(k+1)} >= V^{(k)} - 1e-9", -(its[k].v - its[k - 1].v).minCoeff(), 1e-9);
      suite.check("monotone Q^{(k+1)} >= Q^{(k)} - 1e-9", -(its[k].q - its[k - 1].q).minCoeff(), 1e-9);
    }
    // xi - subgradient is constant on the support of pi and no larger off it.
    if (reg.kind() != RegKind::weighted_l1 && reg.kind() != RegKind::zero) {
      for (const auto& it : its) {
        for (Index s = 0; s < ns; ++s) {
          const Vector p = it.pi.row(s).transpose();
          const Vector d = it.xi.row(s).transpose() - subgradient(reg, s, p);
          Scalar sum = 0, sq = 0;
          int n = 0;
          for (Index a = 0; a < na; ++a)
            if (p(a) > 1e-9) {
              sum += d(a);
              sq += d(a) * d(a);
              ++n;
            }
          const Scalar mean = sum / n;
          suite.check("xi is a shifted subgradient: support variance <= 1e-7", sq / n - mean * mean, 1e-7);
          for (Index a = 0; a < na; ++a)
            if (p(a) <= 1e-9) suite.check("xi is a shifted subgradient: off-support excess <= 1e-7", d(a) - mean, 1e-7);
        }
      }
    }
  }

  for (const auto& reg : regs) {
    const Scalar tau = 0.3;
    for (int trial = 0; trial < 3; ++trial) {
      const Policy pi = feasible(reg, random_policy(rng, ns, na, 0.05));
      const Policy pj = feasible(reg, random_policy(rng, ns, na, 0.05));
      const Evaluation e_pi = evaluate_policy_exact(m, reg, tau, pi);
      const Evaluation e_pj = evaluate_policy_exact(m, reg, tau, pj);
      for (Index s = 0; s < ns; ++s) {
        const Vector d = discounted_visitation(m, pj, s);
        Scalar sum = 0;
        for (Index t = 0; t < ns; ++t) {
          const Vector a = pj.row(t).transpose(), b = pi.row(t).transpose();
          sum += d(t) * (e_pi.q.q.row(t).dot(a - b) - tau * eval_h(reg, t, a) + tau * eval_h(reg, t, b));
        }
        suite.check("performance difference identity within 1e-8",
                    std::abs(e_pj.v.v(s) - e_pi.v.v(s) - sum / (1 - m.discount())), 1e-8);
      }
    }
  }

  for (const auto& reg : regs) {
    for (int trial = 0; trial < 10; ++trial) {
      const Index s = trial % ns;
      const Scalar eta = 0.3 + trial, tau = 0.25;
      const Vector pi = feasible(reg, s, random_simplex(rng, na, 0.05));
      const Vector xi = subgradient(reg, s, pi) + Vector::Constant(na, rng.uniform(-2, 2));
      Vector q(na);
      for (Index a = 0; a < na; ++a) q(a) = rng.uniform(0, 4);
      const Vector xi_next = (xi + eta * q) / (1 + eta * tau);
      const Vector pi_next = solve_subproblem(reg, s, q, pi, xi, eta, tau, 0);
      const Vector p = feasible(reg, s, random_simplex(rng, na, 0));
      const Scalar lhs = (1 + eta * tau) * bregman(reg, s, p, pi_next, xi_next) + bregman(reg, s, pi_next, pi, xi) -
                         bregman(reg, s, p, pi, xi);
      const Scalar rhs = eta * (q.dot(pi_next - p) + tau * eval_h(reg, s, p) - tau * eval_h(reg, s, pi_next));
      suite.check("three-point identity within 1e-7", std::abs(lhs - rhs), 1e-7 * std::max<Scalar>(1, std::abs(rhs)));

      const Scalar shift = rng.uniform(-10, 10);
      const Scalar base = bregman(reg, s, p, pi, xi);
      suite.check("Bregman divergence is nonnegative", -base, 1e-12);
      suite.check("Bregman divergence ignores constant shifts of xi",
                  std::abs(bregman(reg, s, p, pi, xi + Vector::Constant(na, shift)) - base), 1e-10);
    }
  }

  const Policy pi = random_policy(rng, ns, na, 0.2);
  const Index s0 = 0;
  const Matrix grad = policy_gradient_unregularized(m, pi, s0);
  auto value = [&](const Policy& p) { return evaluate_policy_exact(m, Regularizer::zero(), 0, p).v.v(s0); };
  const Scalar h = 1e-6;
  for (Index s = 0; s < ns; ++s)
    for (Index a = 0; a + 1 < na; ++a) {
      const Index b = a + 1;
      Policy plus = pi, minus = pi;
      plus.probs(s, a) += h;
      plus.probs(s, b) -= h;
      minus.probs(s, a) -= h;
      minus.probs(s, b) += h;
      const Scalar fd = (value(plus) - value(minus)) / (2 * h);
      const Scalar analytic = grad(s, a) - grad(s, b);
      suite.check("policy gradient matches central differences (1e-5 relative)", std::abs(fd - analytic),
                  1e-5 * std::max<Scalar>(1, std::abs(analytic)));
    }
  return suite.take();
}

std::vector<PropertyResult> theorem1_suite(std::uint64_t seed) {
  Suite suite("theorem1");
  const Mdp m = generate_random_mdp(20, 5, 4, seed, 0.9);
  for (const auto& reg : shipped_regularizers(20, 5, seed)) {
    const Scalar tau = 0.05;
    const auto ref = std::make_shared<Optimum>(compute_optimal(m, reg, tau, 1e-11));
    for (Scalar eta : {0.1, 1.0, 10.0}) {
      SolverConfig cfg;
      cfg.eta = eta;
      cfg.tau = tau;
      cfg.max_iters = 100;
      cfg.reference = ref;
      RunResult run;
      const auto its = record_run(m, reg, cfg, &run);
      const BoundReport b = bound_report(m, reg, cfg, *ref, DualTable{its[0].xi}, QTable{its[0].q});
      const auto& rec = run.trace.records;
      const Scalar alpha = b.alpha;
      for (std::size_t k = 1; k < rec.size(); ++k) {
        suite.check("q_gap(k+1) <= gamma rate^k C1 + 1e-7", rec[k].q_gap, b.q_envelope[k] + 1e-7);
        suite.check("v_gap(k+1) <= (gamma + 2) rate^k C1 + 1e-7", rec[k].v_gap, b.v_envelope[k] + 1e-7);
        if (reg.kind() == RegKind::shannon)
          suite.check("pi_l1_gap(k+1) <= rate^k C1 / tau + 1e-7 (shannon)", rec[k].pi_l1_gap, b.pi_envelope[k] + 1e-7);
        suite.check("xi recursion: xi_gap(k+1) <= alpha xi_gap(k) + (1 - alpha) q_gap(k) + 1e-9", rec[k].xi_gap,
                    alpha * rec[k - 1].xi_gap + (1 - alpha) * rec[k - 1].q_gap + 1e-9);
      }
    }
  }
  return suite.take();
}

std::vector<PropertyResult> theorem2_suite(std::uint64_t seed) {
  Suite suite("theorem2");
  const Mdp m = generate_random_mdp(20, 5, 4, seed, 0.9);
  for (const auto& reg : {Regularizer::shannon(), Regularizer::tsallis(2)}) {
    const Scalar tau = 0.05;
    const auto ref = std::make_shared<Optimum>(compute_optimal(m, reg, tau, 1e-11));
    for (NoiseMode mode : {NoiseMode::uniform, NoiseMode::adversarial_sign}) {
      for (Scalar eps_opt : {0.0, 0.01}) {
        SolverConfig cfg;
        cfg.algorithm = Algorithm::approx_gpmd;
        cfg.eta = 2;
        cfg.tau = tau;
        cfg.max_iters = 300;
        cfg.eps_opt = eps_opt;
        cfg.noise = {0.01, mode, seed};
        cfg.reference = ref;
        RunResult run;
        const auto its = record_run(m, reg, cfg, &run);
        const BoundReport b = bound_report(m, reg, cfg, *ref, DualTable{its[0].xi}, QTable{its[0].q});
        const auto& rec = run.trace.records;
        for (std::size_t k = 1; k < rec.size(); ++k)
          suite.check("q_gap(k+1) <= gamma (rate^k C1 + C) + 1e-6", rec[k].q_gap, b.approx_q_envelope[k] + 1e-6);
        suite.check("terminal q_gap <= gamma C + 1e-6", rec.back().q_gap, b.gamma * b.floor_constant() + 1e-6);
      }
    }
  }
  // eta = infinity with eps_opt = 0: gamma^k ||Q* - Q0|| + 2 gamma eps_eval / (1 - gamma)^2.
  for (const auto& reg : {Regularizer::shannon(), Regularizer::tsallis(2)}) {
    const Scalar tau = 0.05, eps = 0.01, g = m.discount();
    const auto ref = std::make_shared<Optimum>(compute_optimal(m, reg, tau, 1e-11));
    SolverConfig cfg;
    cfg.algorithm = Algorithm::reg_pi;
    cfg.eta = kInfiniteEta;
    cfg.tau = tau;
    cfg.max_iters = 60;
    cfg.reference = ref;
    // Regularized policy iteration driven by noisy Q estimates, one draw per step.
    Policy pi = Policy::uniform(20, 5);
    const EvalNoiseSpec noise{eps, NoiseMode::uniform, seed};
    const Scalar q0 = max_abs(ref->q.q - evaluate_policy_exact(m, reg, tau, pi).q.q);
    for (long k = 0; k < cfg.max_iters; ++k) {
      const QTable q_hat = noisy_evaluate(m, reg, tau, pi, noise, static_cast<std::uint64_t>(k));
      pi = greedy_policy(reg, tau, q_hat.q);
      const Scalar gap = max_abs(ref->q.q - evaluate_policy_exact(m, reg, tau, pi).q.q);
      suite.check("noisy reg-PI: q_gap(k+1) <= gamma^(k+1) q_gap(0) + 2 gamma eps / (1 - gamma)^2 + 1e-6", gap,
                  std::pow(g, static_cast<Scalar>(k + 1)) * q0 + 2 * g * eps / ((1 - g) * (1 - g)) + 1e-6);
    }
  }
  return suite.take();
}

std::vector<PropertyResult> theorem4_suite(std::uint64_t seed) {
  Suite suite("theorem4");
  const Mdp m = generate_random_mdp(20, 5, 4, seed, 0.9);
  const auto zero_opt = std::make_shared<Optimum>(compute_optimal(m, Regularizer::zero(), 0, 1e-10));
  for (const auto& reg : {Regularizer::shannon(), Regularizer::tsallis(2)}) {
    const AdaptiveResult r = adaptive_gpmd_run(m, reg, 1, 6, zero_opt);
    for (const auto& st : r.stages) {
      suite.check("stage gap <= 3 tau_i B / (1 - gamma) + 1e-6", st.q_gap, st.bound + 1e-6);
      suite.check("stage length equals T_i + 1",
                  std::abs(static_cast<Scalar>(st.iterations - adaptive_stage_length(1, st.tau, m.discount()) - 1)), 0);
    }
    suite.check("six stages with tau halving", std::abs(r.stages.back().tau - 1.0 / 32), 0);
  }
  return suite.take();
}

std::vector<PropertyResult> oracle_suite(std::uint64_t seed) {
  Suite suite("oracle");
  for (std::uint64_t i = 0; i < 10; ++i) {
    const Mdp m = generate_random_mdp(3, 2, 2, seed + i, 0.9);
    for (const auto& reg : shipped_regularizers(3, 2, seed + i)) {
      const Scalar tau = 0.1;
      const auto ref = std::make_shared<Optimum>(compute_optimal(m, reg, tau, 1e-10));
      SolverConfig cfg;
      cfg.eta = 10;
      cfg.tau = tau;
      cfg.max_iters = 500;
      cfg.reference = ref;
      const RunResult r = gpmd_run(m, reg, cfg);
      suite.check("GPMD after 500 iterations within 1e-8 of Q*", r.trace.back().q_gap, 1e-8);
    }
    // Classical value iteration, written out against P and r directly.
    Matrix q = Matrix::Zero(3, 2);
    for (int sweep = 0; sweep < 2000; ++sweep) {
      Matrix next(3, 2);
      for (Index s = 0; s < 3; ++s)
        for (Index a = 0; a < 2; ++a) {
          Scalar e = 0;
          for (Index t = 0; t < 3; ++t) e += m.p(s, a, t) * q.row(t).maxCoeff();
          next(s, a) = m.reward()(s, a) + m.discount() * e;
        }
      q = next;
    }
    SolverConfig pi_cfg;
    pi_cfg.algorithm = Algorithm::reg_pi;
    pi_cfg.eta = kInfiniteEta;
    pi_cfg.tau = 0;
    pi_cfg.max_iters = 20;
    pi_cfg.init = InitPolicy::uniform;
    const RunResult r = reg_policy_iteration_run(m, Regularizer::zero(), pi_cfg);
    const Matrix q_pi = evaluate_policy_exact(m, Regularizer::zero(), 0, r.pi).q.q;
    suite.check("reg-PI (zero regularizer) Q matches value iteration within 1e-8", max_abs(q_pi - q), 1e-8);
  }
  return suite.take();
}

}  // namespace

const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names{"bellman", "lemmas", "theorem1", "theorem2", "theorem4", "oracle"};
  return names;
}

std::vector<PropertyResult> run_verify_suite(const std::string& suite, std::uint64_t seed) {
  if (suite == "bellman") return bellman_suite(seed);
  if (suite == "lemmas") return lemmas_suite(seed);
  if (suite == "theorem1") return theorem1_suite(seed);
  if (suite == "theorem2") return theorem2_suite(seed);
  if (suite == "theorem4") return theorem4_suite(seed);
  if (suite == "oracle") return oracle_suite(seed);
  throw ParameterError("unknown verify suite '" + suite +
                       "' (expected bellman, lemmas, theorem1, theorem2, theorem4 or oracle)");
}

}  // namespace regmdp
