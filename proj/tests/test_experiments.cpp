#include "doctest.h"
#include "test_support.hpp"

#include "regmdp/experiments.hpp"
#include "regmdp/verify.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

using namespace regmdp;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c = preset_config("tsallis");
  c.generator = {12, 4, 3, 0.9};
  c.tau = 0.05;
  c.etas = {0.5, 5};
  c.max_iters = 40;
  c.n_seeds = 3;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("preset definitions") {
  const ExperimentConfig t = preset_config("tsallis");
  CHECK(t.generator.states == 200);
  CHECK(t.generator.actions == 50);
  CHECK(t.generator.support == 20);
  CHECK(t.tau == 1e-3);
  CHECK(t.regularizer == "tsallis:q=2");
  CHECK(t.etas == std::vector<Scalar>{0.01, 0.1, 1, 10});
  CHECK(t.algorithms == std::vector<Algorithm>{Algorithm::gpmd, Algorithm::pmd});
  CHECK(t.n_seeds == 5);
  const ExperimentConfig c = preset_config("constrained");
  CHECK(c.constrained());
  CHECK(c.constraint_pairs == 10);
  CHECK(c.pi_max == 0.1);
  CHECK_THROWS_AS(preset_config("atari"), ParameterError);
  CHECK(t.seeds() == std::vector<std::uint64_t>{7, 8, 9, 10, 11});
}

TEST_CASE("experiment config JSON overlays and validation") {
  const ExperimentConfig c = experiment_config_from_json(
      R"({"preset": "constrained", "mdp": {"states": 30, "support": 5}, "algorithms": ["gpmd"],
          "etas": [2], "tau": 0.01, "max_iters": 50, "noise": {"eps_eval": 0.1, "mode": "adversarial_sign", "seed": 3},
          "target_q_gap": 1e-6, "seed": 4, "seeds": 2, "pairs": 3, "pi_max": 0.2, "out": "x"})");
  CHECK(c.constrained());
  CHECK(c.generator.states == 30);
  CHECK(c.generator.actions == 50);
  CHECK(c.generator.support == 5);
  CHECK(c.algorithms == std::vector<Algorithm>{Algorithm::gpmd});
  CHECK(c.etas == std::vector<Scalar>{2});
  CHECK(c.noise.mode == NoiseMode::adversarial_sign);
  CHECK(c.noise.seed == 3);
  CHECK(c.target_q_gap == 1e-6);
  CHECK(c.constraint_pairs == 3);
  CHECK(c.out_dir == "x");
  CHECK_NOTHROW(c.validate());

  CHECK(experiment_config_from_json(R"({"mdp": "m.json"})").mdp_path == std::filesystem::path("m.json"));
  CHECK_THROWS_AS(experiment_config_from_json("{"), ParseError);
  CHECK_THROWS_AS(experiment_config_from_json("[1]"), ParseError);
  CHECK_THROWS_AS(experiment_config_from_json(R"({"tau": "big"})"), ParseError);
  CHECK_THROWS_AS(experiment_config_from_json(R"({"algorithms": ["npg"]})"), ParameterError);

  ExperimentConfig bad = small_config();
  bad.etas.clear();
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = small_config();
  bad.algorithms.clear();
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = small_config();
  bad.generator.support = 0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = small_config();
  bad.algorithms = {Algorithm::reg_pi};
  bad.etas.clear();
  CHECK_NOTHROW(bad.validate());
}

TEST_CASE("constrained instances sample supported pairs of the unregularized optimum") {
  ExperimentConfig c = preset_config("constrained");
  c.generator = {30, 6, 5, 0.9};
  c.constraint_pairs = 5;
  const ExperimentInstance inst = build_instance(c, 3);
  REQUIRE(inst.pairs.size() == 5);
  const Optimum zero = compute_optimal(inst.mdp, Regularizer::zero(), 0, 1e-12);
  std::set<StateAction> seen;
  for (const auto& [s, a] : inst.pairs) {
    CHECK(zero.pi.probs(s, a) == 1);
    seen.insert({s, a});
  }
  CHECK(seen.size() == 5);
  CHECK(inst.reg.kind() == RegKind::log_barrier);
  for (const auto& [s, a] : inst.pairs) CHECK(inst.reference->pi.probs(s, a) < 0.1);
  CHECK(build_instance(c, 3).pairs == inst.pairs);
}

TEST_CASE("grid runs do not depend on the worker count") {
  const ExperimentConfig c = small_config();
  const ExperimentResult one = run_experiment(c, 1);
  const ExperimentResult four = run_experiment(c, 4);
  REQUIRE(one.runs.size() == 2 * 2 * 3);
  REQUIRE(four.runs.size() == one.runs.size());
  for (std::size_t i = 0; i < one.runs.size(); ++i) {
    CHECK(one.runs[i].algorithm == four.runs[i].algorithm);
    CHECK(one.runs[i].eta == four.runs[i].eta);
    CHECK(one.runs[i].seed == four.runs[i].seed);
    const auto &a = one.runs[i].result.trace.records, &b = four.runs[i].result.trace.records;
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].q_gap == b[k].q_gap);
      CHECK(a[k].pi_l1_gap == b[k].pi_l1_gap);
    }
  }
  REQUIRE(one.mean.size() == four.mean.size());
  for (std::size_t i = 0; i < one.mean.size(); ++i) CHECK(one.mean[i].q_gap == four.mean[i].q_gap);
  CHECK(one.runs[0].algorithm == Algorithm::gpmd);
  CHECK(one.runs[0].eta == 0.5);
  CHECK(one.runs[0].seed == 11);
  CHECK(one.runs[2].seed == 13);
}

TEST_CASE("mean traces average over seeds") {
  const ExperimentConfig c = small_config();
  const ExperimentResult r = run_experiment(c, 1);
  REQUIRE(r.mean.size() == 4 * 41);
  for (std::size_t g = 0; g < 4; ++g) {
    for (long k = 0; k <= 40; k += 13) {
      Scalar sum = 0;
      for (std::size_t s = 0; s < 3; ++s) sum += r.runs[g * 3 + s].result.trace.records[static_cast<std::size_t>(k)].q_gap;
      const CompareRow& row = r.mean[g * 41 + static_cast<std::size_t>(k)];
      CHECK(row.iter == k);
      CHECK(row.algo == to_string(r.runs[g * 3].algorithm));
      CHECK(row.q_gap == doctest::Approx(sum / 3).epsilon(1e-15));
    }
  }

  // Ragged groups from early stops.
  ExperimentRun a{Algorithm::gpmd, 1, 0, {}}, b{Algorithm::gpmd, 1, 1, {}};
  a.result.trace.records = {{0, 4, 0, 0, 0, 0}, {1, 2, 0, 0, 0, 0}};
  b.result.trace.records = {{0, 2, 0, 0, 0, 0}, {1, 1, 0, 0, 0, 0}, {2, 0.5, 0, 0, 0, 0}};
  const auto m = mean_traces({a, b});
  REQUIRE(m.size() == 3);
  CHECK(m[0].q_gap == 3);
  CHECK(m[1].q_gap == 1.5);
  CHECK(m[2].q_gap == 0.5);
}

TEST_CASE("experiment files") {
  ExperimentConfig c = preset_config("constrained");
  c.generator = {15, 12, 3, 0.9};
  c.constraint_pairs = 3;
  c.etas = {5};
  c.max_iters = 10;
  c.n_seeds = 2;
  const ExperimentResult r = run_experiment(c, 2);
  const auto dir = testing::temp_path("experiment_out");
  std::filesystem::remove_all(dir);
  write_experiment(r, dir);
  for (const auto& run : r.runs) {
    const ConvergenceTrace t = load_trace_csv(dir / run_file_name(run));
    CHECK(t.records.back().q_gap == run.result.trace.back().q_gap);
  }
  CHECK(run_file_name(r.runs[0]) == "gpmd_eta5_seed7.csv");
  std::ifstream in(dir / "compare.csv");
  const auto rows = read_compare_csv(in);
  CHECK(rows.size() == r.mean.size());
  CHECK(std::filesystem::exists(dir / "pairs_seed8.json"));
  const auto [pairs, pi_max] = load_pairs(dir / "pairs_seed8.json");
  CHECK(pairs == r.instances[1].pairs);
  CHECK(pi_max == 0.1);
  CHECK(load_mdp(dir / "mdp_seed8.json") == r.instances[1].mdp);
}

TEST_CASE("REGMDP_THREADS") {
  ::setenv("REGMDP_THREADS", "3", 1);
  CHECK(worker_count_from_env() == 3);
  ::setenv("REGMDP_THREADS", "0", 1);
  CHECK(worker_count_from_env() >= 1);
  ::setenv("REGMDP_THREADS", "many", 1);
  CHECK_THROWS_AS(worker_count_from_env(), ParameterError);
  ::unsetenv("REGMDP_THREADS");
  CHECK(worker_count_from_env() >= 1);
}

TEST_CASE("verify suites pass on their default instances") {
  for (const auto& name : verify_suite_names()) {
    for (const auto& r : run_verify_suite(name, 1)) {
      CAPTURE(name);
      CAPTURE(r.name);
      CHECK(r.passed);
      CHECK(r.checks > 0);
    }
  }
  CHECK_THROWS_AS(run_verify_suite("theorem3", 1), ParameterError);
}
