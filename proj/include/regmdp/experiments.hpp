#pragma once

#include "regmdp/mdp.hpp"
#include "regmdp/regularizer.hpp"
#include "regmdp/solvers.hpp"
#include "regmdp/trace_io.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace regmdp {

struct GeneratorParams {
  Index states = 200;
  Index actions = 50;
  Index support = 20;
  Scalar discount = 0.9;
};

/**
 * A batch of solver runs on one instance family.
 *
 * Every (algorithm, eta, seed) triple is one run. Seeds are seed, seed + 1,
 * ..., seed + n_seeds - 1 and each seed draws its own instance when the MDP
 * comes from the generator. The "constrained" preset first solves the
 * unregularized instance, samples the pair set from the optimal policy and
 * then runs with the log barrier on those pairs.
 *
 * JSON form (all keys optional):
 *   {"preset": "tsallis", "mdp": "file.json" | {"states": 200, ...},
 *    "regularizer": "tsallis:q=2", "algorithms": ["gpmd", "pmd"],
 *    "etas": [0.01, 0.1, 1, 10], "tau": 0.001, "max_iters": 2000,
 *    "eps_opt": 0, "noise": {"eps_eval": 0, "mode": "uniform", "seed": 0},
 *    "target_q_gap": 1e-6, "out": "dir", "seed": 7, "seeds": 5,
 *    "pairs": 10, "pi_max": 0.1}
 */
struct ExperimentConfig {
  std::string preset;  // empty, "tsallis" or "constrained"
  std::optional<std::filesystem::path> mdp_path;
  GeneratorParams generator;
  std::string regularizer = "tsallis:q=2";
  std::vector<Algorithm> algorithms{Algorithm::gpmd, Algorithm::pmd};
  std::vector<Scalar> etas{0.01, 0.1, 1, 10};
  Scalar tau = 1e-3;
  long max_iters = 2000;
  Scalar eps_opt = 0;
  EvalNoiseSpec noise;
  std::optional<Scalar> target_q_gap;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 7;
  int n_seeds = 5;
  Index constraint_pairs = 10;
  Scalar pi_max = 0.1;

  bool constrained() const { return preset == "constrained"; }
  std::vector<std::uint64_t> seeds() const;
  /// Throws ParameterError.
  void validate() const;
};

/// The two reference experiments: "tsallis" and "constrained".
ExperimentConfig preset_config(const std::string& name);

/// Overlays the keys present in `text` on `base`. Throws ParseError/ParameterError.
ExperimentConfig experiment_config_from_json(const std::string& text, ExperimentConfig base = {});

struct ExperimentInstance {
  Mdp mdp;
  Regularizer reg;
  std::shared_ptr<const Optimum> reference;  // compute_optimal at tol 1e-10
  std::vector<StateAction> pairs;            // constrained preset only
  Scalar pi_max = 0;
};

ExperimentInstance build_instance(const ExperimentConfig& cfg, std::uint64_t seed);

/// Solves the unregularized problem by policy iteration and samples the
/// constrained pairs from its optimal policy.
ConstrainedInstance sample_constraints(const Mdp& mdp, Index n_pairs, Scalar pi_max, std::uint64_t seed);

struct ExperimentRun {
  Algorithm algorithm;
  Scalar eta;
  std::uint64_t seed;
  RunResult result;
};

struct ExperimentResult {
  std::vector<std::uint64_t> seeds;
  std::vector<ExperimentInstance> instances;  // one per seed
  std::vector<ExperimentRun> runs;  // sorted by (algorithm, eta, seed) in config order
  std::vector<CompareRow> mean;     // q_gap averaged over seeds per (algorithm, eta, iter)
};

/// Worker count from REGMDP_THREADS (unset or 0 means hardware concurrency).
int worker_count_from_env();

/// Runs the whole grid on up to `workers` threads. Results do not depend on
/// the worker count.
ExperimentResult run_experiment(const ExperimentConfig& cfg, int workers);

/// Mean q_gap over the runs of each (algorithm, eta). Iterations beyond the
/// shortest trace of a group (early stops) are averaged over the runs that
/// reached them.
std::vector<CompareRow> mean_traces(const std::vector<ExperimentRun>& runs);

/// Per-run trace file name, e.g. "gpmd_eta0.1_seed7.csv".
std::string run_file_name(const ExperimentRun& run);

/// Writes every per-run trace plus compare.csv into `dir`. Constrained runs also
/// get mdp_seed<k>.json and pairs_seed<k>.json so single solves can be replayed.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace regmdp
