// regmdp: instance generation, single solves, grid comparisons and runtime
// property checks for regularized tabular MDPs.
//
//   regmdp generate --states 200 --actions 50 --support 20 --seed 7 --out mdp.json
//   regmdp solve --mdp mdp.json --reg tsallis:q=2 --tau 1e-3 --eta 0.1 --algo gpmd --iters 500 --reference
//   regmdp compare --preset tsallis --seed 7 --out runs/
//   regmdp verify --suite theorem1
//
// Exit status: 0 success, 1 runtime failure, 2 usage error.

#include "regmdp/experiments.hpp"
#include "regmdp/mdp.hpp"
#include "regmdp/policy_eval.hpp"
#include "regmdp/regularizer.hpp"
#include "regmdp/solvers.hpp"
#include "regmdp/trace_io.hpp"
#include "regmdp/verify.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace regmdp;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Scalar> parse_grid(const std::string& text) {
  std::vector<Scalar> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(parse_real(item));
    } catch (const ParseError&) {
      throw UsageError("--etas: '" + item + "' is not a number");
    }
  }
  return out;
}

std::vector<Algorithm> parse_algorithms(const std::string& text) {
  std::vector<Algorithm> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_algorithm(item));
  return out;
}

NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "uniform") return NoiseMode::uniform;
  if (s == "adversarial_sign") return NoiseMode::adversarial_sign;
  throw UsageError("--noise-mode: expected uniform or adversarial_sign, got '" + s + "'");
}

InitPolicy parse_init(const std::string& s) {
  if (s == "h_minimizer") return InitPolicy::h_minimizer;
  if (s == "uniform") return InitPolicy::uniform;
  throw UsageError("--init: expected h_minimizer or uniform, got '" + s + "'");
}

// Flags shared by solve and compare. Each one overrides the config file only
// when it was given on the command line.
struct RunFlags {
  std::string config;
  std::string mdp;
  std::string preset;
  std::string reg;
  std::string algo;
  std::string etas;
  Scalar eta = 0;
  Scalar tau = 0;
  long iters = 0;
  Scalar eps_opt = 0;
  Scalar eps_eval = 0;
  std::string noise_mode;
  std::uint64_t noise_seed = 0;
  Scalar target = 0;
  std::uint64_t seed = 0;
  int seeds = 0;
  long states = 0, actions = 0, support = 0;
  std::string out;

  std::map<std::string, CLI::Option*> opts;

  bool given(const std::string& name) const {
    auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

void add_common(CLI::App* cmd, RunFlags& f) {
  f.opts["config"] = cmd->add_option("--config", f.config, "JSON experiment config; flags override its values");
  f.opts["mdp"] = cmd->add_option("--mdp", f.mdp, "MDP file (otherwise the generator is used)");
  f.opts["reg"] = cmd->add_option("--reg", f.reg, "regularizer spec, e.g. shannon, tsallis:q=2, logbarrier:pairs=p.json");
  f.opts["tau"] = cmd->add_option("--tau", f.tau, "regularization weight")->check(CLI::NonNegativeNumber);
  f.opts["iters"] = cmd->add_option("--iters", f.iters, "iterations per run")->check(CLI::PositiveNumber);
  f.opts["eps_opt"] = cmd->add_option("--eps-opt", f.eps_opt, "subproblem suboptimality budget")->check(CLI::NonNegativeNumber);
  f.opts["eps_eval"] = cmd->add_option("--eps-eval", f.eps_eval, "evaluation noise level")->check(CLI::NonNegativeNumber);
  f.opts["noise_mode"] = cmd->add_option("--noise-mode", f.noise_mode, "uniform or adversarial_sign");
  f.opts["noise_seed"] = cmd->add_option("--noise-seed", f.noise_seed, "seed of the evaluation noise");
  f.opts["target"] = cmd->add_option("--target", f.target, "stop once q_gap falls to this value")->check(CLI::PositiveNumber);
  f.opts["seed"] = cmd->add_option("--seed", f.seed, "instance seed");
  f.opts["states"] = cmd->add_option("--states", f.states, "generator: number of states")->check(CLI::Range(1L, 1L << 30));
  f.opts["actions"] = cmd->add_option("--actions", f.actions, "generator: number of actions")->check(CLI::Range(1L, 1L << 30));
  f.opts["support"] = cmd->add_option("--support", f.support, "generator: successors per pair")->check(CLI::Range(1L, 1L << 30));
  f.opts["out"] = cmd->add_option("--out", f.out, "output directory");
}

ExperimentConfig build_config(const RunFlags& f) {
  ExperimentConfig c;
  if (f.given("preset")) c = preset_config(f.preset);
  if (f.given("config")) c = experiment_config_from_json(read_file(f.config), c);
  if (f.given("mdp")) c.mdp_path = f.mdp;
  if (f.given("reg")) c.regularizer = f.reg;
  if (f.given("algo")) c.algorithms = parse_algorithms(f.algo);
  if (f.given("eta")) c.etas = {f.eta};
  if (f.given("etas")) c.etas = parse_grid(f.etas);
  if (f.given("tau")) c.tau = f.tau;
  if (f.given("iters")) c.max_iters = f.iters;
  if (f.given("eps_opt")) c.eps_opt = f.eps_opt;
  if (f.given("eps_eval")) c.noise.eps_eval = f.eps_eval;
  if (f.given("noise_mode")) c.noise.mode = parse_noise_mode(f.noise_mode);
  if (f.given("noise_seed")) c.noise.seed = f.noise_seed;
  if (f.given("target")) c.target_q_gap = f.target;
  if (f.given("seed")) c.seed = f.seed;
  if (f.given("seeds")) c.n_seeds = f.seeds;
  if (f.given("states")) c.generator.states = f.states;
  if (f.given("actions")) c.generator.actions = f.actions;
  if (f.given("support")) c.generator.support = f.support;
  if (f.given("out")) c.out_dir = f.out;
  return c;
}

// --- generate --------------------------------------------------------------

int cmd_generate(long states, long actions, long support, std::uint64_t seed, Scalar discount, const std::string& out) {
  if (support > states) throw UsageError("--support: must not exceed --states");
  const Mdp m = generate_random_mdp(states, actions, support, seed, discount);
  fs::path path = out;
  if (fs::is_directory(path)) path /= "mdp.json";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_mdp(m, path);
  std::cout << "wrote " << path.string() << "\n" << "hash " << hash_hex(content_hash(m)) << "\n";
  return kOk;
}

// --- solve -----------------------------------------------------------------

int cmd_solve(const RunFlags& f, bool reference, const std::string& init) {
  if (f.given("algo") && f.algo == "reg_pi" && f.given("eta"))
    throw UsageError("--eta: not meaningful for --algo reg_pi (the step is infinite)");
  ExperimentConfig c = build_config(f);
  if (!f.given("out") && !f.given("config")) c.out_dir = ".";
  if (c.algorithms.size() != 1) throw UsageError("--algo: solve runs exactly one algorithm");
  const Algorithm algo = c.algorithms.front();
  if (algo != Algorithm::reg_pi && c.etas.size() != 1) throw UsageError("--eta: solve needs exactly one learning rate");
  if (c.target_q_gap && !reference) throw UsageError("--target: needs --reference");
  if (algo == Algorithm::reg_pi) c.etas = {1};
  if (c.constrained()) throw UsageError("--preset: use compare for presets");
  c.n_seeds = 1;
  c.validate();

  const auto& g = c.generator;
  const Mdp m = c.mdp_path ? load_mdp(*c.mdp_path) : generate_random_mdp(g.states, g.actions, g.support, c.seed, g.discount);
  const Regularizer reg = parse_regularizer(c.regularizer);

  SolverConfig sc;
  sc.algorithm = algo;
  sc.eta = algo == Algorithm::reg_pi ? kInfiniteEta : c.etas.front();
  sc.tau = c.tau;
  sc.max_iters = c.max_iters;
  sc.eps_opt = c.eps_opt;
  sc.noise = c.noise;
  sc.seed = c.seed;
  sc.target_q_gap = c.target_q_gap;
  sc.init = init.empty() ? (algo == Algorithm::pmd ? InitPolicy::uniform : InitPolicy::h_minimizer) : parse_init(init);
  if (reference) {
    if (c.tau == 0 && reg.kind() != RegKind::zero) throw UsageError("--tau: the reference needs tau > 0");
    sc.reference = std::make_shared<Optimum>(compute_optimal(m, reg, c.tau, 1e-10));
  }
  const RunResult r = run_solver(m, reg, sc);

  fs::create_directories(c.out_dir);
  const fs::path path = c.out_dir / "trace.csv";
  save_trace_csv(r.trace, path);
  const TraceRecord& last = r.trace.back();
  std::cout << "algorithm " << to_string(algo) << "  iterations " << last.iter << "\n"
            << (r.trace.has_reference ? "q_gap " : "bellman_residual ") << format_real(last.q_gap) << "\n";
  if (c.target_q_gap && !r.trace.target_reached)
    std::cout << "target " << format_real(*c.target_q_gap) << " not reached (trace flagged)\n";
  std::cout << "wrote " << path.string() << "\n";
  return kOk;
}

// --- compare ---------------------------------------------------------------

int cmd_compare(const RunFlags& f) {
  ExperimentConfig c = build_config(f);
  if (f.given("etas") && c.etas.empty()) throw UsageError("--etas: the eta grid is empty");
  if (c.etas.empty()) throw UsageError("--etas: the eta grid is empty");
  c.validate();
  const int workers = worker_count_from_env();
  const ExperimentResult res = run_experiment(c, workers);
  write_experiment(res, c.out_dir);

  std::printf("%-12s %-8s %-6s %-24s %s\n", "algo", "eta", "seed", "final q_gap", "first iter <= 1e-6");
  for (const auto& run : res.runs) {
    const auto hit = run.result.trace.first_below(1e-6);
    std::printf("%-12s %-8s %-6llu %-24s %s\n", to_string(run.algorithm), format_real(run.eta).c_str(),
                static_cast<unsigned long long>(run.seed), format_real(run.result.trace.back().q_gap).c_str(),
                hit ? std::to_string(*hit).c_str() : "-");
  }
  std::cout << "wrote " << res.runs.size() << " traces and " << (c.out_dir / "compare.csv").string() << "\n";
  return kOk;
}

// --- verify ----------------------------------------------------------------

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out) {
  const auto& names = verify_suite_names();
  if (std::find(names.begin(), names.end(), suite) == names.end())
    throw UsageError("--suite: unknown suite '" + suite + "'");
  bool all = true;
  const auto results = run_verify_suite(suite, seed);
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream csv(fs::path(out) / ("verify_" + suite + ".csv"));
    csv << "suite,property,passed,checks,worst_excess\n";
    for (const auto& r : results)
      csv << r.suite << ",\"" << r.name << "\"," << (r.passed ? 1 : 0) << ',' << r.checks << ',' << format_real(r.worst) << '\n';
    if (!csv) throw std::runtime_error("failed writing verify results to " + out);
  }
  for (const auto& r : results) {
    std::printf("%s  %s  (%ld checks, worst excess %s)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.checks,
                format_real(r.worst).c_str());
    all = all && r.passed;
  }
  return all ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Solvers and experiments for regularized tabular MDPs"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "write a random instance");
  long states = 200, actions = 50, support = 20;
  std::uint64_t gen_seed = 0;
  Scalar discount = 0.9;
  std::string gen_out = "mdp.json";
  gen->add_option("--states", states, "number of states")->check(CLI::Range(1L, 1L << 30));
  gen->add_option("--actions", actions, "number of actions")->check(CLI::Range(1L, 1L << 30));
  gen->add_option("--support", support, "successors per state-action pair")->check(CLI::Range(1L, 1L << 30));
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--discount", discount, "discount factor")->check(CLI::Range(0.0, 0.999999999));
  gen->add_option("--out", gen_out, "output file, or directory for mdp.json");

  RunFlags solve_flags;
  bool reference = false;
  std::string init;
  auto* solve = app.add_subcommand("solve", "run one algorithm and write trace.csv");
  add_common(solve, solve_flags);
  solve_flags.opts["algo"] = solve->add_option("--algo", solve_flags.algo, "gpmd, approx_gpmd, pmd or reg_pi")->required();
  solve_flags.opts["eta"] = solve->add_option("--eta", solve_flags.eta, "learning rate")->check(CLI::PositiveNumber);
  solve->add_option("--init", init, "h_minimizer or uniform");
  solve->add_flag("--reference", reference, "compute the optimum first and fill the gap columns");

  RunFlags cmp_flags;
  auto* compare = app.add_subcommand("compare", "run an (algorithm, eta, seed) grid");
  add_common(compare, cmp_flags);
  cmp_flags.opts["preset"] = compare->add_option("--preset", cmp_flags.preset, "tsallis or constrained")
                                 ->check(CLI::IsMember({"tsallis", "constrained"}));
  cmp_flags.opts["algo"] = compare->add_option("--algos", cmp_flags.algo, "comma-separated algorithms");
  cmp_flags.opts["etas"] = compare->add_option("--etas", cmp_flags.etas, "comma-separated eta grid");
  cmp_flags.opts["seeds"] = compare->add_option("--seeds", cmp_flags.seeds, "number of seeds")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "run a property suite");
  std::string suite;
  std::uint64_t verify_seed = 1;
  verify->add_option("--suite", suite, "bellman, lemmas, theorem1, theorem2, theorem4 or oracle")->required();
  verify->add_option("--seed", verify_seed, "instance seed");
  std::string verify_out;
  verify->add_option("--out", verify_out, "directory for verify_<suite>.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\nrun with --help for usage\n";
    return kUsage;
  }

  try {
    if (*gen) return cmd_generate(states, actions, support, gen_seed, discount, gen_out);
    if (*solve) return cmd_solve(solve_flags, reference, init);
    if (*compare) return cmd_compare(cmp_flags);
    if (*verify) return cmd_verify(suite, verify_seed, verify_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
