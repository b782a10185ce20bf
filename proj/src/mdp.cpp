#include "regmdp/mdp.hpp"

#include "regmdp/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace regmdp {

namespace {

std::string pair_name(Index s, Index a) {
  return "(" + std::to_string(s) + "," + std::to_string(a) + ")";
}

}  // namespace

void Policy::validate() const {
  if (probs.rows() == 0 || probs.cols() == 0) throw ValidationError("policy: empty table");
  for (Index s = 0; s < probs.rows(); ++s) {
    if (!probs.row(s).allFinite() || probs.row(s).minCoeff() < 0.0)
      throw ValidationError("policy: row " + std::to_string(s) + " has negative or non-finite entries");
    if (std::abs(probs.row(s).sum() - 1.0) > kStochasticTol)
      throw ValidationError("policy: row " + std::to_string(s) + " does not sum to 1");
  }
}

Mdp::Mdp(Index n_states, Index n_actions, Matrix transition, Matrix reward, Scalar discount)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      discount_(discount) {
  if (n_states_ <= 0 || n_actions_ <= 0) throw ValidationError("mdp: n_states and n_actions must be positive");
  if (!(discount_ >= 0.0 && discount_ < 1.0)) throw ValidationError("mdp: discount must lie in [0, 1)");
  if (transition_.rows() != n_states_ * n_actions_ || transition_.cols() != n_states_)
    throw ValidationError("mdp: transition has wrong shape");
  if (reward_.rows() != n_states_ || reward_.cols() != n_actions_) throw ValidationError("mdp: reward has wrong shape");

  for (Index s = 0; s < n_states_; ++s) {
    for (Index a = 0; a < n_actions_; ++a) {
      const Scalar r = reward_(s, a);
      if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("mdp: reward" + pair_name(s, a) + " outside [0, 1]");
      const auto row = transition_.row(pair_index(s, a));
      if (!row.allFinite() || row.minCoeff() < 0.0)
        throw ValidationError("mdp: transition row" + pair_name(s, a) + " has negative or non-finite entries");
      if (std::abs(row.sum() - 1.0) > kStochasticTol)
        throw ValidationError("mdp: transition row" + pair_name(s, a) + " sums to " + format_real(row.sum()));
    }
  }
  kernel_ = transition_.sparseView(0.0, 0.0);
  kernel_.makeCompressed();
}

Matrix Mdp::expect(const Vector& v) const {
  Vector flat = kernel_ * v;
  return Eigen::Map<const Matrix>(flat.data(), n_states_, n_actions_);
}

Matrix Mdp::state_kernel(const Policy& pi) const {
  Matrix out = Matrix::Zero(n_states_, n_states_);
  for (Index s = 0; s < n_states_; ++s) {
    for (Index a = 0; a < n_actions_; ++a) {
      const Scalar w = pi.probs(s, a);
      if (w == 0.0) continue;
      for (SparseKernel::InnerIterator it(kernel_, pair_index(s, a)); it; ++it) out(s, it.col()) += w * it.value();
    }
  }
  return out;
}

bool Mdp::operator==(const Mdp& other) const {
  return n_states_ == other.n_states_ && n_actions_ == other.n_actions_ && discount_ == other.discount_ &&
         transition_ == other.transition_ && reward_ == other.reward_;
}

Mdp generate_random_mdp(Index n_states, Index n_actions, Index support_size, std::uint64_t seed, Scalar discount) {
  if (n_states <= 0 || n_actions <= 0) throw ParameterError("generate: n_states and n_actions must be positive");
  if (support_size <= 0 || support_size > n_states)
    throw ParameterError("generate: support_size must lie in [1, n_states]");

  Rng support_rng(seed, streams::kSupport);
  Rng pair_rng(seed, streams::kRewardPair);
  Rng state_rng(seed, streams::kRewardState);

  Matrix transition = Matrix::Zero(n_states * n_actions, n_states);
  std::vector<Index> pool(static_cast<std::size_t>(n_states));
  const Scalar mass = Scalar(1) / Scalar(support_size);
  for (Index row = 0; row < n_states * n_actions; ++row) {
    std::iota(pool.begin(), pool.end(), Index{0});
    // Partial Fisher-Yates: the first support_size slots are a uniform sample.
    for (Index i = 0; i < support_size; ++i) {
      const auto j = i + static_cast<Index>(support_rng.below(static_cast<std::uint64_t>(n_states - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
      transition(row, pool[static_cast<std::size_t>(i)]) = mass;
    }
  }

  Vector u_state(n_states);
  for (Index s = 0; s < n_states; ++s) u_state(s) = state_rng.uniform();
  Matrix reward(n_states, n_actions);
  for (Index s = 0; s < n_states; ++s)
    for (Index a = 0; a < n_actions; ++a) reward(s, a) = pair_rng.uniform() * u_state(s);

  return Mdp(n_states, n_actions, std::move(transition), std::move(reward), discount);
}

ConstrainedInstance build_constrained_instance(const Mdp& mdp, const Policy& optimal_policy, Index n_pairs,
                                               Scalar pi_max, std::uint64_t seed) {
  if (n_pairs <= 0) throw ParameterError("constrained instance: n_pairs must be positive");
  if (!(pi_max > 0.0 && pi_max <= 1.0)) throw ParameterError("constrained instance: pi_max must lie in (0, 1]");
  if (optimal_policy.n_states() != mdp.n_states() || optimal_policy.n_actions() != mdp.n_actions())
    throw ParameterError("constrained instance: policy shape does not match the MDP");
  optimal_policy.validate();

  std::vector<StateAction> supported;
  for (Index s = 0; s < mdp.n_states(); ++s)
    for (Index a = 0; a < mdp.n_actions(); ++a)
      if (optimal_policy.probs(s, a) > kSupportThreshold) supported.emplace_back(s, a);
  if (static_cast<Index>(supported.size()) < n_pairs)
    throw ValidationError("constrained instance: only " + std::to_string(supported.size()) +
                          " supported pairs, " + std::to_string(n_pairs) + " requested");

  Rng rng(seed, streams::kConstraintPairs);
  for (Index i = 0; i < n_pairs; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(supported.size()) -
                                                      static_cast<std::uint64_t>(i)));
    std::swap(supported[static_cast<std::size_t>(i)], supported[j]);
  }
  supported.resize(static_cast<std::size_t>(n_pairs));
  std::sort(supported.begin(), supported.end());
  return ConstrainedInstance{mdp, std::move(supported), pi_max};
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string mdp_to_json(const Mdp& mdp) {
  std::ostringstream os;
  os << "{\n  \"format_version\": 1,\n";
  os << "  \"n_states\": " << mdp.n_states() << ",\n";
  os << "  \"n_actions\": " << mdp.n_actions() << ",\n";
  os << "  \"gamma\": " << format_real(mdp.discount()) << ",\n";
  os << "  \"reward\": [";
  for (Index s = 0; s < mdp.n_states(); ++s) {
    for (Index a = 0; a < mdp.n_actions(); ++a) {
      if (s + a > 0) os << ", ";
      os << format_real(mdp.reward()(s, a));
    }
  }
  os << "],\n  \"transitions\": [\n";
  const auto& k = mdp.kernel();
  for (Index row = 0; row < k.rows(); ++row) {
    os << "    {\"successors\": [";
    bool first = true;
    for (SparseKernel::InnerIterator it(k, row); it; ++it) {
      os << (first ? "" : ", ") << it.col();
      first = false;
    }
    os << "], \"probs\": [";
    first = true;
    for (SparseKernel::InnerIterator it(k, row); it; ++it) {
      os << (first ? "" : ", ") << format_real(it.value());
      first = false;
    }
    os << "]}" << (row + 1 < k.rows() ? "," : "") << "\n";
  }
  os << "  ]\n}\n";
  return os.str();
}

namespace {

using nlohmann::json;

const json& field(const json& obj, const char* name, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(name);
  if (it == obj.end()) throw ParseError(where + ": missing field '" + name + "'");
  return *it;
}

Index as_index(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ParseError(where + ": expected an integer");
  return j.get<Index>();
}

Scalar as_real(const json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  return j.get<Scalar>();
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace

Mdp mdp_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("mdp file: line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
  const Index version = as_index(field(doc, "format_version", "mdp"), "format_version");
  if (version != 1) throw ParseError("mdp file: unsupported format_version " + std::to_string(version));
  const Index ns = as_index(field(doc, "n_states", "mdp"), "n_states");
  const Index na = as_index(field(doc, "n_actions", "mdp"), "n_actions");
  const Scalar gamma = as_real(field(doc, "gamma", "mdp"), "gamma");
  if (ns <= 0 || na <= 0) throw ValidationError("mdp file: n_states and n_actions must be positive");

  const json& rj = field(doc, "reward", "mdp");
  Matrix reward(ns, na);
  if (rj.is_array() && static_cast<Index>(rj.size()) == ns && !rj.empty() && rj[0].is_array()) {
    // Nested rows are accepted on input; the writer always emits the flat form.
    for (Index s = 0; s < ns; ++s) {
      const json& row = rj[static_cast<std::size_t>(s)];
      const std::string where = "reward[" + std::to_string(s) + "]";
      if (!row.is_array() || static_cast<Index>(row.size()) != na)
        throw ParseError("mdp file: " + where + " must hold n_actions numbers");
      for (Index a = 0; a < na; ++a)
        reward(s, a) = as_real(row[static_cast<std::size_t>(a)], where + "[" + std::to_string(a) + "]");
    }
  } else {
    if (!rj.is_array() || static_cast<Index>(rj.size()) != ns * na)
      throw ParseError("mdp file: field 'reward' must be an array of n_states*n_actions numbers");
    for (Index i = 0; i < ns * na; ++i)
      reward(i / na, i % na) = as_real(rj[static_cast<std::size_t>(i)], "reward[" + std::to_string(i) + "]");
  }

  const json& tj = field(doc, "transitions", "mdp");
  if (!tj.is_array() || static_cast<Index>(tj.size()) != ns * na)
    throw ParseError("mdp file: field 'transitions' must hold n_states*n_actions entries");
  Matrix transition = Matrix::Zero(ns * na, ns);
  for (Index row = 0; row < ns * na; ++row) {
    const std::string where = "transitions[" + std::to_string(row) + "]";
    const json& entry = tj[static_cast<std::size_t>(row)];
    const json& succ = field(entry, "successors", where);
    const json& probs = field(entry, "probs", where);
    if (!succ.is_array() || !probs.is_array() || succ.size() != probs.size())
      throw ParseError(where + ": 'successors' and 'probs' must be arrays of equal length");
    for (std::size_t i = 0; i < succ.size(); ++i) {
      const Index next = as_index(succ[i], where + ".successors[" + std::to_string(i) + "]");
      if (next < 0 || next >= ns) throw ValidationError(where + ": successor index out of range");
      transition(row, next) += as_real(probs[i], where + ".probs[" + std::to_string(i) + "]");
    }
  }
  return Mdp(ns, na, std::move(transition), std::move(reward), gamma);
}

void save_mdp(const Mdp& mdp, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << mdp_to_json(mdp);
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

Mdp load_mdp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return mdp_from_json(ss.str());
}

std::uint64_t content_hash(const Mdp& mdp) {
  const std::string text = mdp_to_json(mdp);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_pairs(const ConstrainedInstance& inst, const std::filesystem::path& path) {
  json doc;
  doc["pi_max"] = inst.pi_max;
  doc["pairs"] = json::array();
  for (const auto& [s, a] : inst.forbidden_pairs) doc["pairs"].push_back({s, a});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << "\n";
}

std::pair<std::vector<StateAction>, Scalar> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("pairs file: line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
  Scalar pi_max = 1.0;
  if (doc.contains("pi_max")) pi_max = as_real(doc["pi_max"], "pi_max");
  const json& pj = field(doc, "pairs", "pairs file");
  if (!pj.is_array()) throw ParseError("pairs file: 'pairs' must be an array");
  std::vector<StateAction> pairs;
  for (std::size_t i = 0; i < pj.size(); ++i) {
    const std::string where = "pairs[" + std::to_string(i) + "]";
    if (!pj[i].is_array() || pj[i].size() != 2) throw ParseError(where + ": expected [state, action]");
    pairs.emplace_back(as_index(pj[i][0], where), as_index(pj[i][1], where));
  }
  return {std::move(pairs), pi_max};
}

}  // namespace regmdp
