#include "regmdp/solvers.hpp"

#include <chrono>
#include <cmath>

namespace regmdp {

namespace {

using Clock = std::chrono::steady_clock;
constexpr Scalar kNaN = std::numeric_limits<Scalar>::quiet_NaN();

Scalar max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }
Scalar max_abs(const Vector& v) { return v.cwiseAbs().maxCoeff(); }

DualTable subgradients(const Regularizer& reg, const Policy& pi) {
  DualTable xi{Matrix(pi.n_states(), pi.n_actions())};
  for (Index s = 0; s < pi.n_states(); ++s) xi.xi.row(s) = subgradient(reg, s, pi.row(s).transpose()).transpose();
  return xi;
}

std::string run_id(std::uint64_t mdp_hash, const SolverConfig& cfg, const std::string& reg_spec) {
  // FNV-1a over the fields that determine the run.
  std::uint64_t h = 1469598103934665603ULL ^ mdp_hash;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  mix(to_string(cfg.algorithm));
  mix(format_real(cfg.eta));
  mix(format_real(cfg.tau));
  mix(std::to_string(cfg.max_iters));
  mix(format_real(cfg.eps_opt));
  mix(format_real(cfg.noise.eps_eval));
  mix(std::to_string(cfg.noise.seed));
  mix(reg_spec);
  return hash_hex(h).substr(0, 12);
}

const char* init_name(InitPolicy p) {
  switch (p) {
    case InitPolicy::h_minimizer: return "h_minimizer";
    case InitPolicy::uniform: return "uniform";
    case InitPolicy::user: return "user";
  }
  return "?";
}

// Fills trace records, evaluates stop conditions and forwards to the observer.
class Recorder {
 public:
  Recorder(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg)
      : mdp_(mdp), reg_(reg), cfg_(cfg) {
    trace_.has_reference = cfg.reference != nullptr;
    const std::uint64_t hash = content_hash(mdp);
    auto& md = trace_.metadata;
    md.emplace_back("algorithm", to_string(cfg.algorithm));
    md.emplace_back("eta", std::isinf(cfg.eta) ? "inf" : format_real(cfg.eta));
    md.emplace_back("tau", format_real(cfg.tau));
    md.emplace_back("max_iters", std::to_string(cfg.max_iters));
    md.emplace_back("eps_opt", format_real(cfg.eps_opt));
    md.emplace_back("eps_eval", format_real(cfg.noise.eps_eval));
    md.emplace_back("noise_mode", cfg.noise.mode == NoiseMode::uniform ? "uniform" : "adversarial_sign");
    md.emplace_back("noise_seed", std::to_string(cfg.noise.seed));
    md.emplace_back("init", init_name(cfg.init));
    md.emplace_back("seed", std::to_string(cfg.seed));
    md.emplace_back("regularizer", reg.spec());
    md.emplace_back("mdp_hash", hash_hex(hash));
    md.emplace_back("reference", trace_.has_reference ? "supplied" : "none (q_gap is the Bellman residual)");
    md.emplace_back("run_id", run_id(hash, cfg, reg.spec()));
    start_ = Clock::now();
  }

  // Returns true when the requested target gap has been reached.
  bool record(long k, const Policy& pi, const DualTable* xi, const Evaluation& ev) {
    TraceRecord r;
    r.iter = k;
    if (const Optimum* ref = cfg_.reference.get()) {
      r.q_gap = max_abs(Matrix(ref->q.q - ev.q.q));
      r.v_gap = max_abs(Vector(ref->v.v - ev.v.v));
      r.xi_gap = xi ? max_abs(Matrix(ref->q.q - cfg_.tau * xi->xi)) : kNaN;
      r.pi_l1_gap = max_l1_distance(ref->pi, pi);
    } else {
      const bool unregularized = cfg_.tau == 0;
      const Regularizer& reg = unregularized ? zero_ : reg_;
      r.q_gap = max_abs(Matrix(regularized_bellman(mdp_, reg, unregularized ? 1 : cfg_.tau, ev.q).q - ev.q.q));
      r.v_gap = r.xi_gap = r.pi_l1_gap = kNaN;
    }
    r.elapsed_ms = std::chrono::duration<Scalar, std::milli>(Clock::now() - start_).count();
    trace_.records.push_back(r);
    if (cfg_.observer) cfg_.observer(IterateView{k, pi, xi, ev});
    if (cfg_.target_q_gap && trace_.has_reference && r.q_gap <= *cfg_.target_q_gap) {
      trace_.target_reached = true;
      return true;
    }
    return false;
  }

  ConvergenceTrace take() {
    trace_.metadata.emplace_back("iterations", std::to_string(trace_.records.empty() ? 0 : trace_.records.back().iter));
    if (cfg_.target_q_gap)
      trace_.metadata.emplace_back("target_q_gap", format_real(*cfg_.target_q_gap) +
                                                       (trace_.target_reached ? " (reached)" : " (not reached)"));
    return std::move(trace_);
  }

 private:
  const Mdp& mdp_;
  const Regularizer& reg_;
  const SolverConfig& cfg_;
  Regularizer zero_ = Regularizer::zero();
  Clock::time_point start_;
  ConvergenceTrace trace_;
};

void check_against_mdp(const Mdp& mdp, const SolverConfig& cfg) {
  cfg.validate();
  if (cfg.init == InitPolicy::user &&
      (cfg.user_policy.n_states() != mdp.n_states() || cfg.user_policy.n_actions() != mdp.n_actions()))
    throw ParameterError("solver: user initial policy has the wrong shape");
  if (cfg.initial_xi &&
      (cfg.initial_xi->xi.rows() != mdp.n_states() || cfg.initial_xi->xi.cols() != mdp.n_actions()))
    throw ParameterError("solver: initial xi has the wrong shape");
  if (cfg.reference && (cfg.reference->q.q.rows() != mdp.n_states() || cfg.reference->q.q.cols() != mdp.n_actions()))
    throw ParameterError("solver: reference optimum has the wrong shape");
}

RunResult gpmd_core(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg, bool approximate) {
  check_against_mdp(mdp, cfg);
  if (std::isinf(cfg.eta)) throw ParameterError("gpmd: eta must be finite (use reg_pi for the infinite limit)");
  if (!approximate && (cfg.eps_opt != 0 || cfg.noise.eps_eval != 0))
    throw ParameterError("gpmd: exact GPMD requires eps_opt = 0 and eps_eval = 0");

  Recorder rec(mdp, reg, cfg);
  Policy pi = initial_policy(reg, cfg, mdp.n_states(), mdp.n_actions());
  DualTable xi = cfg.initial_xi ? *cfg.initial_xi : subgradients(reg, pi);
  const Scalar eta = cfg.eta, tau = cfg.tau;
  const Scalar denom = 1 + eta * tau;

  for (long k = 0;; ++k) {
    const Evaluation ev = evaluate_policy_exact(mdp, reg, tau, pi);
    if (rec.record(k, pi, &xi, ev) || k == cfg.max_iters) break;

    Matrix q_hat = ev.q.q;
    if (approximate) add_eval_noise(q_hat, cfg.noise, static_cast<std::uint64_t>(k));
    Matrix xi_next = (eta * q_hat + xi.xi) / denom;
    for (Index s = 0; s < mdp.n_states(); ++s) {
      if (approximate && cfg.eps_opt > 0) {
        pi.probs.row(s) = solve_subproblem(reg, s, q_hat.row(s).transpose(), pi.row(s).transpose(),
                                           xi.xi.row(s).transpose(), eta, tau, cfg.eps_opt)
                              .transpose();
      } else {
        pi.probs.row(s) = regularized_greedy(reg, s, xi_next.row(s).transpose(), 1).transpose();
      }
    }
    xi.xi = std::move(xi_next);
  }
  return {std::move(pi), std::move(xi), rec.take()};
}

}  // namespace

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::gpmd: return "gpmd";
    case Algorithm::approx_gpmd: return "approx_gpmd";
    case Algorithm::pmd: return "pmd";
    case Algorithm::reg_pi: return "reg_pi";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& name) {
  for (Algorithm a : {Algorithm::gpmd, Algorithm::approx_gpmd, Algorithm::pmd, Algorithm::reg_pi})
    if (name == to_string(a)) return a;
  throw ParameterError("unknown algorithm '" + name + "' (expected gpmd, approx_gpmd, pmd or reg_pi)");
}

void SolverConfig::validate() const {
  const bool pi_path = algorithm == Algorithm::reg_pi;
  if (pi_path ? !(tau >= 0) : !(tau > 0)) throw ParameterError("solver: tau must be positive");
  if (!(eta > 0)) throw ParameterError("solver: eta must be positive");
  if (std::isinf(eta) && !pi_path) throw ParameterError("solver: an infinite eta is reserved for reg_pi");
  if (max_iters < 1) throw ParameterError("solver: max_iters must be positive");
  if (!(eps_opt >= 0)) throw ParameterError("solver: eps_opt must be nonnegative");
  if (!(noise.eps_eval >= 0)) throw ParameterError("solver: eps_eval must be nonnegative");
  if (target_q_gap && !reference) throw ParameterError("solver: a target q_gap needs a reference optimum");
  if (init == InitPolicy::user) user_policy.validate();
}

std::optional<long> ConvergenceTrace::first_below(Scalar eps) const {
  for (const auto& r : records)
    if (r.q_gap <= eps) return r.iter;
  return std::nullopt;
}

Policy initial_policy(const Regularizer& reg, const SolverConfig& cfg, Index n_states, Index n_actions) {
  switch (cfg.init) {
    case InitPolicy::uniform: return Policy::uniform(n_states, n_actions);
    case InitPolicy::user: return cfg.user_policy;
    case InitPolicy::h_minimizer: break;
  }
  Policy pi(Matrix(n_states, n_actions));
  const Vector zero = Vector::Zero(n_actions);
  for (Index s = 0; s < n_states; ++s) pi.probs.row(s) = regularized_greedy(reg, s, zero, 1).transpose();
  return pi;
}

RunResult gpmd_run(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg) {
  return gpmd_core(mdp, reg, cfg, false);
}

RunResult approx_gpmd_run(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg) {
  return gpmd_core(mdp, reg, cfg, true);
}

RunResult pmd_run(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg) {
  check_against_mdp(mdp, cfg);
  if (std::isinf(cfg.eta)) throw ParameterError("pmd: eta must be finite");
  Policy pi = initial_policy(reg, cfg, mdp.n_states(), mdp.n_actions());
  if (pi.probs.minCoeff() <= 0) throw ParameterError("pmd: the initial policy must be strictly positive");

  Recorder rec(mdp, reg, cfg);
  for (long k = 0;; ++k) {
    const Evaluation ev = evaluate_policy_exact(mdp, reg, cfg.tau, pi);
    if (rec.record(k, pi, nullptr, ev) || k == cfg.max_iters) break;
    for (Index s = 0; s < mdp.n_states(); ++s)
      pi.probs.row(s) =
          kl_proximal_step(reg, s, ev.q.q.row(s).transpose(), pi.row(s).transpose(), cfg.eta, cfg.tau).transpose();
  }
  return {std::move(pi), DualTable{}, rec.take()};
}

RunResult reg_policy_iteration_run(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg) {
  check_against_mdp(mdp, cfg);
  const Scalar tau = cfg.tau;
  Policy pi = initial_policy(reg, cfg, mdp.n_states(), mdp.n_actions());
  // The eta -> infinity limit of the xi recursion is xi^{(k+1)} = Q^{(k)} / tau.
  DualTable xi = tau > 0 ? subgradients(reg, pi) : DualTable{};
  Recorder rec(mdp, reg, cfg);
  for (long k = 0;; ++k) {
    const Evaluation ev = evaluate_policy_exact(mdp, reg, tau, pi);
    if (rec.record(k, pi, tau > 0 ? &xi : nullptr, ev) || k == cfg.max_iters) break;
    pi = greedy_policy(reg, tau, ev.q.q);
    if (tau > 0) xi.xi = ev.q.q / tau;
  }
  return {std::move(pi), std::move(xi), rec.take()};
}

RunResult run_solver(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::gpmd: return gpmd_run(mdp, reg, cfg);
    case Algorithm::approx_gpmd: return approx_gpmd_run(mdp, reg, cfg);
    case Algorithm::pmd: return pmd_run(mdp, reg, cfg);
    case Algorithm::reg_pi: return reg_policy_iteration_run(mdp, reg, cfg);
  }
  throw ParameterError("run_solver: unknown algorithm");
}

// ---------------------------------------------------------------------------

long adaptive_stage_length(Scalar eta, Scalar tau, Scalar gamma) {
  if (!(eta > 0) || !(tau > 0) || !(gamma >= 0 && gamma < 1))
    throw ParameterError("adaptive stage length: needs eta, tau > 0 and gamma in [0, 1)");
  const Scalar t = (1 + eta * tau) / ((1 - gamma) * eta * tau) * std::log(8 / (1 - gamma));
  return static_cast<long>(std::ceil(t));
}

AdaptiveResult adaptive_gpmd_run(const Mdp& mdp, const Regularizer& reg, Scalar eta, int n_stages,
                                 std::shared_ptr<const Optimum> unregularized_optimum) {
  const auto bound = reg.bound_B(mdp.n_actions());
  if (!bound) throw ParameterError("adaptive GPMD: the regularizer must be bounded on the simplex");
  if (n_stages < 1) throw ParameterError("adaptive GPMD: n_stages must be positive");
  if (!(eta > 0) || std::isinf(eta)) throw ParameterError("adaptive GPMD: eta must be positive and finite");
  if (!unregularized_optimum)
    unregularized_optimum = std::make_shared<Optimum>(compute_optimal(mdp, Regularizer::zero(), 0, 1e-10));

  const Scalar gamma = mdp.discount();
  AdaptiveResult out;
  out.trace.metadata = {{"algorithm", "adaptive_gpmd"},
                        {"eta", format_real(eta)},
                        {"stages", std::to_string(n_stages)},
                        {"bound_B", format_real(*bound)},
                        {"regularizer", reg.spec()},
                        {"mdp_hash", hash_hex(content_hash(mdp))}};
  out.trace.has_reference = true;

  Scalar tau = 1;
  DualTable xi{Matrix::Zero(mdp.n_states(), mdp.n_actions())};
  const auto start = Clock::now();
  long total = 0;
  for (int i = 0; i < n_stages; ++i) {
    SolverConfig cfg;
    cfg.algorithm = Algorithm::gpmd;
    cfg.eta = eta;
    cfg.tau = tau;
    cfg.max_iters = adaptive_stage_length(eta, tau, gamma) + 1;
    cfg.init = InitPolicy::user;
    // pi^{(0)} = argmin -<xi, p> + h(p); with xi = 0 this is argmin h.
    cfg.user_policy = greedy_policy(reg, 1, xi.xi);
    cfg.initial_xi = xi;
    RunResult stage = gpmd_run(mdp, reg, cfg);

    const Matrix q_pi = evaluate_policy_exact(mdp, Regularizer::zero(), 0, stage.pi).q.q;
    StageRecord sr;
    sr.stage = i;
    sr.tau = tau;
    sr.iterations = stage.trace.back().iter;
    sr.q_gap = max_abs(Matrix(unregularized_optimum->q.q - q_pi));
    sr.bound = 3 * tau * *bound / (1 - gamma);
    out.stages.push_back(sr);
    total += sr.iterations;

    TraceRecord tr;
    tr.iter = total;
    tr.q_gap = sr.q_gap;
    tr.v_gap = tr.xi_gap = tr.pi_l1_gap = kNaN;
    tr.elapsed_ms = std::chrono::duration<Scalar, std::milli>(Clock::now() - start).count();
    out.trace.records.push_back(tr);

    out.pi = std::move(stage.pi);
    xi.xi = 2 * stage.xi.xi;
    tau /= 2;
  }
  out.xi = DualTable{xi.xi / 2};
  return out;
}

// ---------------------------------------------------------------------------

long BoundReport::iterations_for(Scalar eps) const {
  if (!(eps > 0)) throw ParameterError("iterations_for: eps must be positive");
  const Scalar lead = gamma * c1;
  if (lead <= eps) return 0;
  if (rate <= 0) return 1;
  return static_cast<long>(std::ceil(std::log(eps / lead) / std::log(rate)));
}

BoundReport bound_report(const Mdp& mdp, const Regularizer& reg, const SolverConfig& cfg, const Optimum& reference,
                         const DualTable& xi0, const QTable& q0) {
  BoundReport b;
  b.gamma = mdp.discount();
  b.tau = cfg.tau;
  b.eps_opt = cfg.eps_opt;
  b.alpha = std::isinf(cfg.eta) ? 0 : 1 / (1 + cfg.eta * cfg.tau);
  b.rate = 1 - (1 - b.alpha) * (1 - b.gamma);
  b.strongly_convex = reg.strong_convexity_l1() >= 1;

  const Scalar q_term = max_abs(Matrix(reference.q.q - q0.q));
  const Scalar xi_term = xi0.xi.size() ? max_abs(Matrix(reference.q.q - cfg.tau * xi0.xi)) : 0;
  b.c1 = q_term + 2 * b.alpha * xi_term;

  const Scalar g = b.gamma, e_eval = cfg.noise.eps_eval, e_opt = cfg.eps_opt;
  const Scalar mix = g / ((1 - g) * (1 - b.alpha));
  b.c2 = ((2 + 2 * mix) * e_eval + (1 + 2 * mix) * e_opt) / (1 - g);
  b.c3 = ((2 + e_eval * g / (cfg.tau * (1 - g))) * e_eval + (1 + 4 * mix) * e_opt) / (1 - g);

  const auto n = static_cast<std::size_t>(cfg.max_iters + 1);
  b.q_envelope.resize(n);
  b.v_envelope.resize(n);
  b.pi_envelope.resize(n);
  b.approx_q_envelope.resize(n);
  const Scalar floor = b.floor_constant();
  b.q_envelope[0] = b.c1;
  b.v_envelope[0] = b.c1;
  b.pi_envelope[0] = b.c1 / cfg.tau;
  b.approx_q_envelope[0] = b.c1 + floor;
  Scalar power = 1;  // rate^{k-1}
  for (std::size_t k = 1; k < n; ++k) {
    b.q_envelope[k] = g * power * b.c1;
    b.v_envelope[k] = (g + 2) * power * b.c1;
    b.pi_envelope[k] = power * b.c1 / cfg.tau;
    b.approx_q_envelope[k] = g * (power * b.c1 + floor);
    power *= b.rate;
  }
  return b;
}

}  // namespace regmdp
