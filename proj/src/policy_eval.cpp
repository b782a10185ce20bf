#include "regmdp/policy_eval.hpp"

#include "regmdp/rng.hpp"
#include "regmdp/simplex.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>

namespace regmdp {

namespace {

constexpr long kMaxValueIterations = 1'000'000;

void check_shapes(const Mdp& mdp, const Policy& pi) {
  if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions())
    throw ParameterError("policy shape does not match the MDP");
}

// Weight used for the inner greedy problem; the zero regularizer is
// insensitive to it, so it also accepts tau <= 0.
Scalar greedy_weight(const Regularizer& reg, Scalar tau, const char* who) {
  if (reg.kind() == RegKind::zero) return 1;
  if (!(tau > 0)) throw ParameterError(std::string(who) + ": tau must be positive");
  return tau;
}

Vector state_values(const Regularizer& reg, Scalar weight, const Matrix& q) {
  Vector m(q.rows());
  for (Index s = 0; s < q.rows(); ++s) m(s) = regularized_greedy_value(reg, s, q.row(s).transpose(), weight);
  return m;
}

}  // namespace

Evaluation evaluate_policy_exact(const Mdp& mdp, const Regularizer& reg, Scalar tau, const Policy& pi) {
  check_shapes(mdp, pi);
  if (!(tau >= 0)) throw ParameterError("evaluate_policy_exact: tau must be nonnegative");
  const Index n = mdp.n_states();
  Vector c = (pi.probs.cwiseProduct(mdp.reward())).rowwise().sum();
  if (tau > 0) {
    for (Index s = 0; s < n; ++s) {
      const Scalar h = eval_h(reg, s, pi.row(s).transpose());
      if (!std::isfinite(h))
        throw DomainError("evaluate_policy_exact: policy leaves the domain of h at state " + std::to_string(s));
      c(s) -= tau * h;
    }
  }
  const Scalar gamma = mdp.discount();
  Matrix system = Matrix::Identity(n, n) - gamma * mdp.state_kernel(pi);
  Evaluation out;
  out.v.v = Eigen::PartialPivLU<Matrix>(system).solve(c);
  out.q.q = mdp.reward() + gamma * mdp.expect(out.v.v);
  return out;
}

QTable regularized_bellman(const Mdp& mdp, const Regularizer& reg, Scalar tau, const QTable& q) {
  if (q.q.rows() != mdp.n_states() || q.q.cols() != mdp.n_actions())
    throw ParameterError("regularized_bellman: Q shape does not match the MDP");
  if (!q.q.allFinite()) throw ParameterError("regularized_bellman: Q must be finite");
  const Scalar w = greedy_weight(reg, tau, "regularized_bellman");
  return {mdp.reward() + mdp.discount() * mdp.expect(state_values(reg, w, q.q))};
}

Optimum compute_optimal(const Mdp& mdp, const Regularizer& reg, Scalar tau, Scalar tol) {
  if (!(tol > 0)) throw ParameterError("compute_optimal: tol must be positive");
  const Scalar w = greedy_weight(reg, tau, "compute_optimal");
  const Scalar gamma = mdp.discount();
  const Scalar stop = gamma > 0 ? tol * (1 - gamma) / (2 * gamma) : std::numeric_limits<Scalar>::infinity();

  Optimum out;
  Matrix q = Matrix::Zero(mdp.n_states(), mdp.n_actions());
  Scalar residual = std::numeric_limits<Scalar>::infinity();
  long it = 0;
  for (; it < kMaxValueIterations; ++it) {
    Matrix next = mdp.reward() + gamma * mdp.expect(state_values(reg, w, q));
    residual = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (residual <= stop) break;
  }
  if (residual > stop)
    throw ConvergenceError("compute_optimal: iteration cap reached with residual " + format_real(residual), residual);

  out.iterations = it + 1;
  out.residual = residual;
  out.pi = greedy_policy(reg, reg.kind() == RegKind::zero ? 0 : tau, q);
  out.v.v.resize(mdp.n_states());
  for (Index s = 0; s < mdp.n_states(); ++s) {
    const Vector p = out.pi.row(s).transpose();
    out.v.v(s) = q.row(s).dot(p) - (reg.kind() == RegKind::zero ? 0 : tau * eval_h(reg, s, p));
  }
  out.q.q = std::move(q);
  return out;
}

Vector discounted_visitation(const Mdp& mdp, const Policy& pi, Index s0) {
  check_shapes(mdp, pi);
  const Index n = mdp.n_states();
  if (s0 < 0 || s0 >= n) throw ParameterError("discounted_visitation: start state out of range");
  const Scalar gamma = mdp.discount();
  Matrix system = Matrix::Identity(n, n) - gamma * mdp.state_kernel(pi).transpose();
  Vector rhs = Vector::Zero(n);
  rhs(s0) = 1 - gamma;
  return Eigen::PartialPivLU<Matrix>(system).solve(rhs);
}

Matrix policy_gradient_unregularized(const Mdp& mdp, const Policy& pi, Index s0) {
  const Vector d = discounted_visitation(mdp, pi, s0);
  const Matrix q = evaluate_policy_exact(mdp, Regularizer::zero(), 0, pi).q.q;
  return (d.asDiagonal() * q) / (1 - mdp.discount());
}

void add_eval_noise(Matrix& q, const EvalNoiseSpec& noise, std::uint64_t draw) {
  if (!(noise.eps_eval >= 0)) throw ParameterError("eval noise: eps_eval must be nonnegative");
  if (noise.eps_eval == 0) return;
  std::uint64_t mix = draw;
  Rng rng(noise.seed ^ splitmix64(mix), streams::kEvalNoise);
  for (Index s = 0; s < q.rows(); ++s) {
    for (Index a = 0; a < q.cols(); ++a) {
      const Scalar e = noise.mode == NoiseMode::uniform ? rng.uniform(-noise.eps_eval, noise.eps_eval)
                                                        : ((rng() >> 63) ? noise.eps_eval : -noise.eps_eval);
      q(s, a) += e;
    }
  }
}

QTable noisy_evaluate(const Mdp& mdp, const Regularizer& reg, Scalar tau, const Policy& pi,
                      const EvalNoiseSpec& noise, std::uint64_t draw) {
  if (!(noise.eps_eval >= 0)) throw ParameterError("noisy_evaluate: eps_eval must be nonnegative");
  QTable q = evaluate_policy_exact(mdp, reg, tau, pi).q;
  add_eval_noise(q.q, noise, draw);
  return q;
}

Scalar max_l1_distance(const Policy& a, const Policy& b) {
  if (a.n_states() != b.n_states() || a.n_actions() != b.n_actions())
    throw ParameterError("max_l1_distance: policy shapes differ");
  return (a.probs - b.probs).cwiseAbs().rowwise().sum().maxCoeff();
}

Policy greedy_policy(const Regularizer& reg, Scalar tau, const Matrix& q) {
  Policy pi(Matrix(q.rows(), q.cols()));
  for (Index s = 0; s < q.rows(); ++s) {
    const Vector row = q.row(s).transpose();
    pi.probs.row(s) = (tau == 0 ? argmax_vertex(row) : regularized_greedy(reg, s, row, tau)).transpose();
  }
  return pi;
}

}  // namespace regmdp
