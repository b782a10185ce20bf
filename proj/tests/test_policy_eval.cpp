#include "doctest.h"
#include "test_support.hpp"

#include "regmdp/policy_eval.hpp"

#include <cmath>

using namespace regmdp;
using regmdp::testing::deterministic_mdp;
using regmdp::testing::dense_random_mdp;
using regmdp::testing::random_policy;
using regmdp::testing::single_state;

namespace {

Mdp chain(Scalar gamma) {
  Matrix r(2, 1);
  r << 0, 1;
  return deterministic_mdp({{1}, {1}}, r, gamma);
}

// Plain value iteration on the unregularized problem, written independently of
// the library's Bellman operator.
Matrix value_iteration_oracle(const Mdp& m, int sweeps) {
  Matrix q = Matrix::Zero(m.n_states(), m.n_actions());
  for (int k = 0; k < sweeps; ++k) {
    Matrix next(q.rows(), q.cols());
    for (Index s = 0; s < m.n_states(); ++s)
      for (Index a = 0; a < m.n_actions(); ++a) {
        Scalar e = 0;
        for (Index t = 0; t < m.n_states(); ++t) e += m.p(s, a, t) * q.row(t).maxCoeff();
        next(s, a) = m.reward()(s, a) + m.discount() * e;
      }
    q = next;
  }
  return q;
}

}  // namespace

TEST_CASE("evaluate_policy_exact: spec examples") {
  const auto sh = Regularizer::shannon();
  const auto one = evaluate_policy_exact(single_state({1}, 0.9), Regularizer::zero(), 0, Policy::uniform(1, 1));
  CHECK(one.v.v(0) == doctest::Approx(10).epsilon(1e-14));
  CHECK(one.q.q(0, 0) == doctest::Approx(10).epsilon(1e-14));

  const auto two = evaluate_policy_exact(single_state({1, 1}, 0.5), sh, 1, Policy::uniform(1, 2));
  CHECK(two.v.v(0) == doctest::Approx((1 + std::log(2.0)) / 0.5).epsilon(1e-14));
  CHECK(two.v.v(0) == doctest::Approx(3.386294).epsilon(1e-6));

  const auto c = evaluate_policy_exact(chain(0.5), Regularizer::zero(), 0, Policy::uniform(2, 1));
  CHECK(c.v.v(0) == doctest::Approx(1).epsilon(1e-14));
  CHECK(c.v.v(1) == doctest::Approx(2).epsilon(1e-14));
}

TEST_CASE("evaluate_policy_exact: fixed-point residual and V-Q consistency") {
  const Mdp m = dense_random_mdp(12, 4, 3, 0.95);
  Rng rng(4, 1);
  const auto sh = Regularizer::shannon();
  for (int trial = 0; trial < 5; ++trial) {
    const Policy pi = random_policy(rng, 12, 4);
    const Scalar tau = 0.3;
    const auto ev = evaluate_policy_exact(m, sh, tau, pi);
    for (Index s = 0; s < 12; ++s) {
      const Vector p = pi.row(s).transpose();
      const Scalar consistency = ev.q.q.row(s).dot(p) - tau * eval_h(sh, s, p);
      CHECK(std::abs(consistency - ev.v.v(s)) <= 1e-10);
    }
    const Vector rhs = (pi.probs.cwiseProduct(m.reward())).rowwise().sum() +
                       m.discount() * m.state_kernel(pi) * ev.v.v;
    Vector reg_term(12);
    for (Index s = 0; s < 12; ++s) reg_term(s) = tau * eval_h(sh, s, pi.row(s).transpose());
    CHECK((rhs - reg_term - ev.v.v).cwiseAbs().maxCoeff() <= 1e-10 / (1 - m.discount()));
  }
}

TEST_CASE("evaluate_policy_exact: domain and shape errors") {
  const Mdp m = single_state({0.5, 0.5}, 0.9);
  Policy bad(Matrix(1, 2));
  bad.probs << 0.5, 0.5;
  const auto barrier = Regularizer::log_barrier({{0, 0}}, 0.3);
  CHECK_THROWS_AS(evaluate_policy_exact(m, barrier, 1, bad), DomainError);
  CHECK_NOTHROW(evaluate_policy_exact(m, barrier, 0, bad));
  CHECK_THROWS_AS(evaluate_policy_exact(m, barrier, -1, bad), ParameterError);
  CHECK_THROWS_AS(evaluate_policy_exact(m, barrier, 1, Policy::uniform(2, 2)), ParameterError);
}

TEST_CASE("regularized_bellman: spec examples") {
  const Mdp c = chain(0.5);
  const QTable t0 = regularized_bellman(c, Regularizer::zero(), 0, {Matrix::Zero(2, 1)});
  CHECK(t0.q == c.reward());

  const Mdp m = single_state({0.5, 0.5}, 0.9);
  const QTable t = regularized_bellman(m, Regularizer::shannon(), 1, {Matrix::Zero(1, 2)});
  CHECK(t.q(0, 0) == doctest::Approx(0.5 + 0.9 * std::log(2.0)).epsilon(1e-14));
  CHECK(t.q(0, 0) == doctest::Approx(1.123832).epsilon(1e-6));

  CHECK_THROWS_AS(regularized_bellman(m, Regularizer::shannon(), 0, {Matrix::Zero(1, 2)}), ParameterError);
  Matrix nan_q = Matrix::Zero(1, 2);
  nan_q(0, 1) = std::nan("");
  CHECK_THROWS_AS(regularized_bellman(m, Regularizer::shannon(), 1, {nan_q}), ParameterError);
  CHECK_THROWS_AS(regularized_bellman(m, Regularizer::log_barrier({{0, 0}, {0, 1}}, 0.4), 1, {Matrix::Zero(1, 2)}),
                  InfeasibleError);
}

TEST_CASE("regularized_bellman: contraction and fixed point") {
  const Mdp m = dense_random_mdp(8, 3, 6, 0.9);
  Rng rng(6, 6);
  const auto sh = Regularizer::shannon();
  for (int trial = 0; trial < 20; ++trial) {
    Matrix q1(8, 3), q2(8, 3);
    for (Index i = 0; i < q1.size(); ++i) {
      q1.data()[i] = rng.uniform(-5, 5);
      q2.data()[i] = rng.uniform(-5, 5);
    }
    const Scalar before = (q1 - q2).cwiseAbs().maxCoeff();
    const Scalar after = (regularized_bellman(m, sh, 0.2, {q1}).q - regularized_bellman(m, sh, 0.2, {q2}).q)
                             .cwiseAbs()
                             .maxCoeff();
    CHECK(after <= m.discount() * before + 1e-9);
  }
  const Scalar tol = 1e-10;
  const Optimum opt = compute_optimal(m, sh, 0.2, tol);
  CHECK((regularized_bellman(m, sh, 0.2, opt.q).q - opt.q.q).cwiseAbs().maxCoeff() <= 2 * tol);
}

TEST_CASE("compute_optimal: spec examples") {
  const Optimum one = compute_optimal(single_state({0, 0}, 0.9), Regularizer::shannon(), 1, 1e-10);
  CHECK(one.v.v(0) == doctest::Approx(10 * std::log(2.0)).epsilon(1e-10));
  CHECK(std::abs(one.pi.probs(0, 0) - 0.5) < 1e-12);

  // Symmetric rewards: every action identical, so the entropy optimum is uniform.
  Matrix r = Matrix::Constant(3, 4, 0.3);
  r.row(1).setConstant(0.8);
  const Mdp sym = deterministic_mdp({{1, 1, 1, 1}, {2, 2, 2, 2}, {0, 0, 0, 0}}, r, 0.8);
  const Optimum u = compute_optimal(sym, Regularizer::shannon(), 0.5, 1e-10);
  CHECK((u.pi.probs.array() - 0.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("compute_optimal: zero regularizer matches plain value iteration") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Mdp m = dense_random_mdp(3, 2, seed, 0.9);
    const Scalar tol = 1e-10;
    const Optimum opt = compute_optimal(m, Regularizer::zero(), 0, tol);
    const Matrix oracle = value_iteration_oracle(m, 600);
    CHECK((opt.q.q - oracle).cwiseAbs().maxCoeff() <= tol);
    for (Index s = 0; s < 3; ++s) {
      Index best = 0;
      oracle.row(s).maxCoeff(&best);
      CHECK(opt.pi.probs(s, best) == 1);
    }
  }
}

TEST_CASE("compute_optimal: optimality against random policies") {
  const Mdp m = dense_random_mdp(6, 3, 10, 0.85);
  const Scalar tol = 1e-10;
  Rng rng(10, 1);
  for (const auto& reg : {Regularizer::shannon(), Regularizer::tsallis(2), Regularizer::zero()}) {
    const Scalar tau = reg.kind() == RegKind::zero ? 0 : 0.1;
    const Optimum opt = compute_optimal(m, reg, tau, tol);
    // V* equals the exact value of pi*.
    const auto ev = evaluate_policy_exact(m, reg, tau, opt.pi);
    CHECK((ev.v.v - opt.v.v).cwiseAbs().maxCoeff() <= 4 * tol);
    for (int trial = 0; trial < 20; ++trial) {
      const Policy pi = random_policy(rng, 6, 3);
      const Vector v = evaluate_policy_exact(m, reg, tau, pi).v.v;
      CHECK((opt.v.v - v).minCoeff() >= -2 * tol);
    }
  }
  CHECK_THROWS_AS(compute_optimal(m, Regularizer::shannon(), 0.1, 0), ParameterError);
  CHECK_THROWS_AS(compute_optimal(m, Regularizer::shannon(), 0, 1e-6), ParameterError);
}

TEST_CASE("discounted_visitation: spec examples") {
  const Vector a = discounted_visitation(single_state({1}, 0.9), Policy::uniform(1, 1), 0);
  CHECK(a(0) == doctest::Approx(1));
  const Vector c = discounted_visitation(chain(0.5), Policy::uniform(2, 1), 0);
  CHECK(c(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(c(1) == doctest::Approx(0.5).epsilon(1e-14));
  const Mdp m0 = dense_random_mdp(5, 2, 3, 0.0);
  const Vector e = discounted_visitation(m0, Policy::uniform(5, 2), 3);
  CHECK(e(3) == 1);
  CHECK(e.sum() == doctest::Approx(1));

  const Mdp m = dense_random_mdp(7, 3, 3, 0.93);
  Rng rng(1, 2);
  const Vector d = discounted_visitation(m, random_policy(rng, 7, 3), 2);
  CHECK(d.minCoeff() >= 0);
  CHECK(std::abs(d.sum() - 1) <= 1e-10);
  CHECK_THROWS_AS(discounted_visitation(m, Policy::uniform(7, 3), 7), ParameterError);
}

TEST_CASE("policy_gradient_unregularized: spec examples") {
  const Mdp m0 = dense_random_mdp(4, 3, 2, 0.0);
  const Matrix g0 = policy_gradient_unregularized(m0, Policy::uniform(4, 3), 1);
  CHECK((g0.row(1) - m0.reward().row(1)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(g0.row(0).cwiseAbs().maxCoeff() == 0);

  const Matrix g = policy_gradient_unregularized(single_state({1, 0}, 0.5), Policy::uniform(1, 2), 0);
  CHECK(g(0, 0) == doctest::Approx(3).epsilon(1e-14));
  CHECK(g(0, 1) == doctest::Approx(1).epsilon(1e-14));
}

TEST_CASE("policy_gradient_unregularized: central differences on tangent directions") {
  const Mdp m = generate_random_mdp(5, 3, 3, 21);
  Rng rng(21, 9);
  const Policy pi = random_policy(rng, 5, 3, 0.2);
  const Index s0 = 0;
  const Matrix grad = policy_gradient_unregularized(m, pi, s0);
  auto value = [&](const Policy& p) { return evaluate_policy_exact(m, Regularizer::zero(), 0, p).v.v(s0); };
  const Scalar h = 1e-6;
  for (Index s = 0; s < 5; ++s)
    for (Index a = 0; a < 3; ++a)
      for (Index b = 0; b < 3; ++b) {
        if (a == b) continue;
        Policy plus = pi, minus = pi;
        plus.probs(s, a) += h;
        plus.probs(s, b) -= h;
        minus.probs(s, a) -= h;
        minus.probs(s, b) += h;
        const Scalar fd = (value(plus) - value(minus)) / (2 * h);
        const Scalar analytic = grad(s, a) - grad(s, b);
        CHECK(std::abs(fd - analytic) <= 1e-5 * std::max<Scalar>(1, std::abs(analytic)));
      }
}

TEST_CASE("performance-difference identity") {
  const Mdp m = dense_random_mdp(6, 3, 13, 0.9);
  Rng rng(13, 5);
  for (const auto& reg : {Regularizer::shannon(), Regularizer::tsallis(2)}) {
    const Scalar tau = 0.3;
    for (int trial = 0; trial < 5; ++trial) {
      const Policy pi = random_policy(rng, 6, 3);
      const Policy pj = random_policy(rng, 6, 3);
      const auto e_pi = evaluate_policy_exact(m, reg, tau, pi);
      const auto e_pj = evaluate_policy_exact(m, reg, tau, pj);
      for (Index s = 0; s < 6; ++s) {
        const Vector d = discounted_visitation(m, pj, s);
        Scalar sum = 0;
        for (Index t = 0; t < 6; ++t) {
          const Vector a = pj.row(t).transpose(), b = pi.row(t).transpose();
          sum += d(t) * (e_pi.q.q.row(t).dot(a - b) - tau * eval_h(reg, t, a) + tau * eval_h(reg, t, b));
        }
        CHECK(std::abs(e_pj.v.v(s) - e_pi.v.v(s) - sum / (1 - m.discount())) <= 1e-8);
      }
    }
  }
}

TEST_CASE("noisy_evaluate: bounded, exact at zero, deterministic") {
  const Mdp m = dense_random_mdp(5, 3, 2, 0.9);
  const auto sh = Regularizer::shannon();
  const Policy pi = Policy::uniform(5, 3);
  const Matrix exact = evaluate_policy_exact(m, sh, 0.1, pi).q.q;

  CHECK(noisy_evaluate(m, sh, 0.1, pi, {0, NoiseMode::uniform, 3}).q == exact);

  const Matrix adv = noisy_evaluate(m, sh, 0.1, pi, {0.1, NoiseMode::adversarial_sign, 3}).q;
  CHECK(((adv - exact).cwiseAbs().array() - 0.1).abs().maxCoeff() < 1e-14);
  CHECK((adv - exact).maxCoeff() > 0);
  CHECK((adv - exact).minCoeff() < 0);

  const EvalNoiseSpec spec{0.05, NoiseMode::uniform, 9};
  const Matrix u1 = noisy_evaluate(m, sh, 0.1, pi, spec, 4).q;
  const Matrix u2 = noisy_evaluate(m, sh, 0.1, pi, spec, 4).q;
  const Matrix u3 = noisy_evaluate(m, sh, 0.1, pi, spec, 5).q;
  CHECK(u1 == u2);
  CHECK(u1 != u3);
  CHECK((u1 - exact).cwiseAbs().maxCoeff() <= 0.05);
  CHECK_THROWS_AS(noisy_evaluate(m, sh, 0.1, pi, {-1, NoiseMode::uniform, 0}), ParameterError);
}
