#include "regmdp/regularizer.hpp"

#include "regmdp/simplex.hpp"
#include "separable.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace regmdp {

namespace {

constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

std::vector<detail::Coord> coords_for(const Regularizer& reg, Index s, Index n) {
  using detail::Coord;
  using detail::Shape;
  std::vector<Coord> coords(static_cast<std::size_t>(n));
  switch (reg.kind()) {
    case RegKind::shannon:
      for (auto& c : coords) c.shape = Shape::entropy;
      break;
    case RegKind::kl_to_reference:
      if (reg.table().cols() != n || s >= reg.table().rows())
        throw ParameterError("kl regularizer: reference table does not cover state " + std::to_string(s));
      for (Index a = 0; a < n; ++a) coords[static_cast<std::size_t>(a)] = {Shape::entropy, -std::log(reg.table()(s, a))};
      break;
    case RegKind::tsallis:
      for (auto& c : coords) {
        c.shape = Shape::power;
        c.q = reg.tsallis_q();
      }
      break;
    case RegKind::weighted_l1:
      if (reg.table().cols() != n || s >= reg.table().rows())
        throw ParameterError("l1 regularizer: weight table does not cover state " + std::to_string(s));
      for (Index a = 0; a < n; ++a) coords[static_cast<std::size_t>(a)].slope = reg.table()(s, a);
      break;
    case RegKind::log_barrier:
      for (Index a : reg.constrained_actions(s)) {
        if (a >= n) throw ParameterError("log barrier: action index out of range");
        coords[static_cast<std::size_t>(a)] = {Shape::barrier, 0, 2, reg.pi_max()};
      }
      break;
    case RegKind::zero: break;
  }
  return coords;
}

Scalar constant_term(const Regularizer& reg) {
  return reg.kind() == RegKind::tsallis ? -1 / (reg.tsallis_q() - 1) : 0;
}

void require_simplex(const Vector& p, const char* what) {
  if (!on_simplex(p, kSimplexSlack)) throw DomainError(std::string(what) + ": argument is not on the simplex");
}

Matrix load_table(const std::filesystem::path& path, const char* key) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (doc.is_object()) {
    if (!doc.contains(key)) throw ParseError(path.string() + ": missing field '" + key + "'");
    doc = doc[key];
  }
  if (!doc.is_array() || doc.empty() || !doc[0].is_array())
    throw ParseError(path.string() + ": expected a 2-D array of numbers");
  const auto rows = static_cast<Index>(doc.size());
  const auto cols = static_cast<Index>(doc[0].size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = doc[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw ParseError(path.string() + ": row " + std::to_string(i) + " has the wrong length");
    for (Index j = 0; j < cols; ++j) {
      if (!row[static_cast<std::size_t>(j)].is_number())
        throw ParseError(path.string() + ": entry [" + std::to_string(i) + "][" + std::to_string(j) + "] is not a number");
      m(i, j) = row[static_cast<std::size_t>(j)].get<Scalar>();
    }
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

Regularizer Regularizer::shannon() {
  Regularizer r(RegKind::shannon, 1);
  r.spec_ = "shannon";
  return r;
}

Regularizer Regularizer::kl_to_reference(Policy reference) {
  reference.validate();
  if (reference.probs.minCoeff() <= 0) throw ParameterError("kl regularizer: reference must be strictly positive");
  Regularizer r(RegKind::kl_to_reference, 1);
  r.table_ = std::move(reference.probs);
  r.spec_ = "kl";
  return r;
}

Regularizer Regularizer::tsallis(Scalar q) {
  if (!(q > 0) || q == 1 || !std::isfinite(q)) throw ParameterError("tsallis regularizer: q must be positive and != 1");
  Regularizer r(RegKind::tsallis, 0);
  r.q_ = q;
  r.spec_ = "tsallis:q=" + format_real(q);
  return r;
}

Regularizer Regularizer::weighted_l1(Matrix weights) {
  if (weights.size() == 0 || !weights.allFinite() || weights.minCoeff() < 0)
    throw ParameterError("l1 regularizer: weights must be finite and nonnegative");
  Regularizer r(RegKind::weighted_l1, 0);
  r.table_ = std::move(weights);
  r.spec_ = "l1";
  return r;
}

Regularizer Regularizer::log_barrier(std::vector<StateAction> pairs, Scalar pi_max) {
  if (pairs.empty()) throw ParameterError("log barrier: the constrained pair set is empty");
  if (!(pi_max > 0 && pi_max <= 1)) throw ParameterError("log barrier: pi_max must lie in (0, 1]");
  Regularizer r(RegKind::log_barrier, 0);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  Index max_state = 0;
  for (const auto& [s, a] : pairs) {
    if (s < 0 || a < 0) throw ParameterError("log barrier: negative index in pair set");
    max_state = std::max(max_state, s);
  }
  r.per_state_.resize(static_cast<std::size_t>(max_state + 1));
  for (const auto& [s, a] : pairs) r.per_state_[static_cast<std::size_t>(s)].push_back(a);
  r.pairs_ = std::move(pairs);
  r.pi_max_ = pi_max;
  r.spec_ = "logbarrier:pimax=" + format_real(pi_max);
  return r;
}

Regularizer Regularizer::zero() {
  Regularizer r(RegKind::zero, 0);
  r.spec_ = "zero";
  return r;
}

const std::vector<Index>& Regularizer::constrained_actions(Index s) const {
  static const std::vector<Index> kNone;
  if (s < 0 || s >= static_cast<Index>(per_state_.size())) return kNone;
  return per_state_[static_cast<std::size_t>(s)];
}

std::optional<Scalar> Regularizer::bound_B(Index n_actions) const {
  if (bound_override_) return bound_override_;
  const auto a = static_cast<Scalar>(n_actions);
  switch (kind_) {
    case RegKind::shannon: return std::log(a) + 1;
    case RegKind::kl_to_reference: return -std::log(table_.minCoeff()) + 1;
    case RegKind::tsallis: return std::abs(std::pow(a, 1 - q_) - 1) / std::abs(q_ - 1) + 1;
    case RegKind::weighted_l1: return table_.maxCoeff() + 1;
    case RegKind::log_barrier: return std::nullopt;
    case RegKind::zero: return 2;
  }
  return std::nullopt;
}

Regularizer Regularizer::with_strong_convexity(Scalar mu) const {
  if (!(mu >= 0)) throw ParameterError("strong convexity modulus must be nonnegative");
  Regularizer r = *this;
  r.mu_ = mu;
  return r;
}

Regularizer Regularizer::with_bound(Scalar bound) const {
  if (!(bound > 0) || !std::isfinite(bound)) throw ParameterError("regularizer bound must be positive and finite");
  Regularizer r = *this;
  r.bound_override_ = bound;
  return r;
}

Regularizer Regularizer::with_spec(std::string spec) const {
  Regularizer r = *this;
  r.spec_ = std::move(spec);
  return r;
}

Regularizer parse_regularizer(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  std::vector<std::pair<std::string, std::string>> args;
  if (colon != std::string::npos) {
    std::stringstream rest(spec.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ParameterError("regularizer spec '" + spec + "': expected key=value in '" + item + "'");
      args.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
  }
  auto get = [&](const std::string& key) -> std::string {
    for (const auto& [k, v] : args)
      if (k == key) return v;
    throw ParameterError("regularizer spec '" + spec + "': missing '" + key + "'");
  };
  auto real = [&](const std::string& key) {
    const std::string v = get(key);
    try {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ParameterError("regularizer spec '" + spec + "': '" + key + "' is not a number");
    }
  };

  if (name == "shannon" && args.empty()) return Regularizer::shannon();
  if (name == "zero" && args.empty()) return Regularizer::zero();
  if (name == "tsallis") return Regularizer::tsallis(real("q"));
  if (name == "kl") return Regularizer::kl_to_reference(Policy(load_table(get("ref"), "probs"))).with_spec(spec);
  if (name == "l1") return Regularizer::weighted_l1(load_table(get("weights"), "weights")).with_spec(spec);
  if (name == "logbarrier") {
    auto [pairs, file_pi_max] = load_pairs(get("pairs"));
    bool has_pimax = false;
    for (const auto& kv : args) has_pimax = has_pimax || kv.first == "pimax";
    return Regularizer::log_barrier(std::move(pairs), has_pimax ? real("pimax") : file_pi_max).with_spec(spec);
  }
  throw ParameterError("unknown regularizer spec '" + spec + "'");
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

Scalar eval_h(const Regularizer& reg, Index s, const Vector& p) {
  require_simplex(p, "eval_h");
  const auto coords = coords_for(reg, s, p.size());
  Scalar total = constant_term(reg);
  for (Index a = 0; a < p.size(); ++a) {
    const Scalar v = detail::coord_value(coords[static_cast<std::size_t>(a)], std::max<Scalar>(p(a), 0));
    if (v == kInf) return kInf;
    total += v;
  }
  return total;
}

Vector subgradient(const Regularizer& reg, Index s, const Vector& p) {
  require_simplex(p, "subgradient");
  const auto coords = coords_for(reg, s, p.size());
  Vector g(p.size());
  for (Index a = 0; a < p.size(); ++a) {
    const auto& c = coords[static_cast<std::size_t>(a)];
    Scalar x = std::max<Scalar>(p(a), 0);
    if (c.shape == detail::Shape::entropy || (c.shape == detail::Shape::power && c.q < 1)) x = std::max(x, kProbClamp);
    if (c.shape == detail::Shape::barrier && x >= c.cap)
      throw DomainError("subgradient: p(" + std::to_string(a) + ") reaches the barrier cap");
    g(a) = detail::coord_derivative(c, x);
  }
  return g;
}

Scalar bregman(const Regularizer& reg, Index s, const Vector& p, const Vector& q, const Vector& xi_s) {
  const Scalar hq = eval_h(reg, s, q);
  if (hq == kInf) throw DomainError("bregman: q lies outside the effective domain");
  const Scalar hp = eval_h(reg, s, p);
  if (hp == kInf) return kInf;
  return hp - hq - xi_s.dot(p - q);
}

Vector regularized_greedy(const Regularizer& reg, Index s, const Vector& theta, Scalar weight, Scalar tol) {
  if (!theta.allFinite()) throw ParameterError("regularized_greedy: theta must be finite");
  if (!(weight > 0)) throw ParameterError("regularized_greedy: weight must be positive");
  if (!(tol > 0)) throw ParameterError("regularized_greedy: tol must be positive");
  return detail::solve_separable(coords_for(reg, s, theta.size()), theta, weight, 0, Vector());
}

Scalar regularized_greedy_value(const Regularizer& reg, Index s, const Vector& theta, Scalar weight) {
  const Vector p = regularized_greedy(reg, s, theta, weight);
  return theta.dot(p) - weight * eval_h(reg, s, p);
}

Scalar subproblem_objective(const Regularizer& reg, Index s, const Vector& p, const Vector& q_row,
                            const Vector& pi_row, const Vector& xi_row, Scalar eta, Scalar tau) {
  const Scalar hp = eval_h(reg, s, p);
  if (hp == kInf) return kInf;
  return -q_row.dot(p) + tau * hp + bregman(reg, s, p, pi_row, xi_row) / eta;
}

Vector solve_subproblem(const Regularizer& reg, Index s, const Vector& q_row, const Vector& pi_row,
                        const Vector& xi_row, Scalar eta, Scalar tau, Scalar eps_opt) {
  if (!(eta > 0) || !(tau > 0)) throw ParameterError("solve_subproblem: eta and tau must be positive");
  if (!(eps_opt >= 0)) throw ParameterError("solve_subproblem: eps_opt must be nonnegative");
  const Vector theta = (eta * q_row + xi_row) / (1 + eta * tau);
  const Vector best = regularized_greedy(reg, s, theta, 1);
  if (eps_opt == 0) return best;

  // f is convex along [best, pi_row] and minimal at best, so the excess is
  // monotone in t; bisect for the largest admissible step.
  const Scalar f_best = subproblem_objective(reg, s, best, q_row, pi_row, xi_row, eta, tau);
  const Vector dir = pi_row - best;
  auto excess = [&](Scalar t) {
    return subproblem_objective(reg, s, best + t * dir, q_row, pi_row, xi_row, eta, tau) - f_best;
  };
  if (excess(1) <= eps_opt) return pi_row;
  Scalar lo = 0, hi = 1;
  for (int it = 0; it < 60; ++it) {
    const Scalar mid = 0.5 * (lo + hi);
    if (excess(mid) <= eps_opt) lo = mid; else hi = mid;
  }
  Vector out = (best + lo * dir).cwiseMax(0);
  return out / out.sum();
}

Vector kl_proximal_step(const Regularizer& reg, Index s, const Vector& q_row, const Vector& pi_row, Scalar eta,
                        Scalar tau) {
  if (!(eta > 0) || !(tau > 0)) throw ParameterError("kl_proximal_step: eta and tau must be positive");
  const Vector prior = pi_row.cwiseMax(kProbClamp).array().log().matrix();
  return detail::solve_separable(coords_for(reg, s, q_row.size()), q_row, tau, 1 / eta, prior);
}

}  // namespace regmdp
