#include "regmdp/experiments.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace regmdp {

using nlohmann::json;

std::vector<std::uint64_t> ExperimentConfig::seeds() const {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < n_seeds; ++i) out.push_back(seed + static_cast<std::uint64_t>(i));
  return out;
}

void ExperimentConfig::validate() const {
  if (!preset.empty() && preset != "tsallis" && preset != "constrained")
    throw ParameterError("unknown preset '" + preset + "' (expected tsallis or constrained)");
  if (algorithms.empty()) throw ParameterError("experiment: at least one algorithm is required");
  bool needs_eta = false;
  for (Algorithm a : algorithms) needs_eta = needs_eta || a != Algorithm::reg_pi;
  if (needs_eta && etas.empty()) throw ParameterError("experiment: the eta grid is empty");
  for (Scalar e : etas)
    if (!(e > 0) || std::isinf(e)) throw ParameterError("experiment: eta values must be positive and finite");
  if (needs_eta ? !(tau > 0) : !(tau >= 0)) throw ParameterError("experiment: tau must be positive");
  if (max_iters < 1) throw ParameterError("experiment: max_iters must be positive");
  if (n_seeds < 1) throw ParameterError("experiment: seeds must be positive");
  if (!(eps_opt >= 0) || !(noise.eps_eval >= 0)) throw ParameterError("experiment: error budgets must be nonnegative");
  if (generator.states < 1 || generator.actions < 1) throw ParameterError("experiment: empty state or action space");
  if (generator.support < 1 || generator.support > generator.states)
    throw ParameterError("experiment: support must lie in [1, states]");
  if (constrained() && (constraint_pairs < 1 || !(pi_max > 0 && pi_max < 1)))
    throw ParameterError("experiment: constrained preset needs pairs >= 1 and pi_max in (0, 1)");
}

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  if (name == "tsallis") {
    c.regularizer = "tsallis:q=2";
  } else if (name == "constrained") {
    c.regularizer = "logbarrier";
  } else {
    throw ParameterError("unknown preset '" + name + "' (expected tsallis or constrained)");
  }
  return c;
}

ExperimentConfig experiment_config_from_json(const std::string& text, ExperimentConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("experiment config: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("experiment config: top level must be an object");
  try {
    if (j.contains("preset")) {
      ExperimentConfig p = preset_config(j["preset"].get<std::string>());
      p.out_dir = base.out_dir;
      base = p;
    }
    if (j.contains("mdp")) {
      const json& m = j["mdp"];
      if (m.is_string()) {
        base.mdp_path = m.get<std::string>();
      } else {
        base.generator.states = m.value("states", base.generator.states);
        base.generator.actions = m.value("actions", base.generator.actions);
        base.generator.support = m.value("support", base.generator.support);
        base.generator.discount = m.value("discount", base.generator.discount);
      }
    }
    if (j.contains("regularizer")) base.regularizer = j["regularizer"].get<std::string>();
    if (j.contains("algorithms")) {
      base.algorithms.clear();
      for (const auto& a : j["algorithms"]) base.algorithms.push_back(parse_algorithm(a.get<std::string>()));
    }
    if (j.contains("etas")) base.etas = j["etas"].get<std::vector<Scalar>>();
    base.tau = j.value("tau", base.tau);
    base.max_iters = j.value("max_iters", base.max_iters);
    base.eps_opt = j.value("eps_opt", base.eps_opt);
    if (j.contains("noise")) {
      const json& n = j["noise"];
      base.noise.eps_eval = n.value("eps_eval", base.noise.eps_eval);
      base.noise.seed = n.value("seed", base.noise.seed);
      if (n.contains("mode")) {
        const auto mode = n["mode"].get<std::string>();
        if (mode == "uniform") base.noise.mode = NoiseMode::uniform;
        else if (mode == "adversarial_sign") base.noise.mode = NoiseMode::adversarial_sign;
        else throw ParameterError("experiment config: unknown noise mode '" + mode + "'");
      }
    }
    if (j.contains("target_q_gap") && !j["target_q_gap"].is_null()) base.target_q_gap = j["target_q_gap"].get<Scalar>();
    if (j.contains("out")) base.out_dir = j["out"].get<std::string>();
    base.seed = j.value("seed", base.seed);
    base.n_seeds = j.value("seeds", base.n_seeds);
    base.constraint_pairs = j.value("pairs", base.constraint_pairs);
    base.pi_max = j.value("pi_max", base.pi_max);
  } catch (const json::exception& e) {
    throw ParseError(std::string("experiment config: ") + e.what());
  }
  return base;
}

ConstrainedInstance sample_constraints(const Mdp& mdp, Index n_pairs, Scalar pi_max, std::uint64_t seed) {
  SolverConfig pi_cfg;
  pi_cfg.algorithm = Algorithm::reg_pi;
  pi_cfg.eta = kInfiniteEta;
  pi_cfg.tau = 0;
  // Policy iteration terminates after finitely many improvements; far fewer
  // than 100 on generator instances.
  pi_cfg.max_iters = 100;
  const RunResult pi = reg_policy_iteration_run(mdp, Regularizer::zero(), pi_cfg);
  return build_constrained_instance(mdp, pi.pi, n_pairs, pi_max, seed);
}

ExperimentInstance build_instance(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto& g = cfg.generator;
  Mdp mdp = cfg.mdp_path ? load_mdp(*cfg.mdp_path) : generate_random_mdp(g.states, g.actions, g.support, seed, g.discount);
  ExperimentInstance inst{mdp, Regularizer::zero(), nullptr, {}, 0};
  if (cfg.constrained()) {
    ConstrainedInstance c = sample_constraints(mdp, cfg.constraint_pairs, cfg.pi_max, seed);
    inst.pairs = c.forbidden_pairs;
    inst.pi_max = c.pi_max;
    inst.reg = Regularizer::log_barrier(c.forbidden_pairs, c.pi_max);
  } else {
    inst.reg = parse_regularizer(cfg.regularizer);
  }
  inst.reference = std::make_shared<Optimum>(compute_optimal(inst.mdp, inst.reg, cfg.tau, 1e-10));
  return inst;
}

int worker_count_from_env() {
  const char* env = std::getenv("REGMDP_THREADS");
  long n = 0;
  if (env && *env) {
    char* end = nullptr;
    n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 0) throw ParameterError("REGMDP_THREADS must be a nonnegative integer");
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return static_cast<int>(n);
}

namespace {

// Runs jobs[0..n) on up to `workers` threads; the first exception is rethrown.
template <class Job>
void parallel_for(std::size_t n, int workers, Job job) {
  const std::size_t w = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, int workers) {
  cfg.validate();
  const auto seeds = cfg.seeds();
  std::vector<std::optional<ExperimentInstance>> instances(seeds.size());
  parallel_for(seeds.size(), workers, [&](std::size_t i) { instances[i] = build_instance(cfg, seeds[i]); });

  struct Job {
    Algorithm algo;
    Scalar eta;
    std::size_t seed_index;
  };
  std::vector<Job> jobs;
  for (Algorithm a : cfg.algorithms) {
    const std::vector<Scalar> grid = a == Algorithm::reg_pi ? std::vector<Scalar>{kInfiniteEta} : cfg.etas;
    for (Scalar eta : grid)
      for (std::size_t s = 0; s < seeds.size(); ++s) jobs.push_back({a, eta, s});
  }

  std::vector<std::optional<ExperimentRun>> done(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    const ExperimentInstance& inst = *instances[job.seed_index];
    SolverConfig sc;
    sc.algorithm = job.algo;
    sc.eta = job.eta;
    sc.tau = cfg.tau;
    sc.max_iters = cfg.max_iters;
    sc.eps_opt = cfg.eps_opt;
    sc.noise = cfg.noise;
    sc.reference = inst.reference;
    sc.target_q_gap = cfg.target_q_gap;
    sc.seed = seeds[job.seed_index];
    // PMD needs a strictly positive start; every method starts from it so the
    // curves share their first point.
    sc.init = InitPolicy::uniform;
    done[i] = ExperimentRun{job.algo, job.eta, seeds[job.seed_index], run_solver(inst.mdp, inst.reg, sc)};
  });

  ExperimentResult out;
  out.seeds = seeds;
  for (auto& inst : instances) out.instances.push_back(std::move(*inst));
  for (auto& r : done) out.runs.push_back(std::move(*r));
  out.mean = mean_traces(out.runs);
  return out;
}

std::vector<CompareRow> mean_traces(const std::vector<ExperimentRun>& runs) {
  std::vector<CompareRow> rows;
  std::size_t i = 0;
  while (i < runs.size()) {
    std::size_t j = i;
    while (j < runs.size() && runs[j].algorithm == runs[i].algorithm && runs[j].eta == runs[i].eta) ++j;
    std::size_t longest = 0;
    for (std::size_t r = i; r < j; ++r) longest = std::max(longest, runs[r].result.trace.records.size());
    for (std::size_t k = 0; k < longest; ++k) {
      Scalar sum = 0;
      int n = 0;
      long iter = 0;
      for (std::size_t r = i; r < j; ++r) {
        const auto& rec = runs[r].result.trace.records;
        if (k < rec.size()) {
          sum += rec[k].q_gap;
          iter = rec[k].iter;
          ++n;
        }
      }
      rows.push_back({to_string(runs[i].algorithm), runs[i].eta, iter, sum / n});
    }
    i = j;
  }
  return rows;
}

std::string run_file_name(const ExperimentRun& run) {
  std::string name = to_string(run.algorithm);
  if (!std::isinf(run.eta)) name += "_eta" + format_real(run.eta);
  return name + "_seed" + std::to_string(run.seed) + ".csv";
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& run : result.runs) save_trace_csv(run.result.trace, dir / run_file_name(run));
  for (std::size_t i = 0; i < result.instances.size(); ++i) {
    const ExperimentInstance& inst = result.instances[i];
    if (inst.pairs.empty()) continue;
    const std::string tag = "_seed" + std::to_string(result.seeds[i]) + ".json";
    save_mdp(inst.mdp, dir / ("mdp" + tag));
    save_pairs(ConstrainedInstance{inst.mdp, inst.pairs, inst.pi_max}, dir / ("pairs" + tag));
  }
  std::ofstream out(dir / "compare.csv");
  if (!out) throw std::runtime_error("cannot write " + (dir / "compare.csv").string());
  write_compare_csv(result.mean, out);
}

}  // namespace regmdp
