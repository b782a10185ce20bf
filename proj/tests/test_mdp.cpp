#include "doctest.h"
#include "test_support.hpp"

#include "regmdp/mdp.hpp"

#include <fstream>
#include <set>

using namespace regmdp;
using regmdp::testing::temp_path;

TEST_CASE("generator: benchmark-sized instance has 20 successors of mass 1/20") {
  const Mdp m = generate_random_mdp(200, 50, 20, 7);
  CHECK(m.n_states() == 200);
  CHECK(m.n_actions() == 50);
  for (Index row = 0; row < m.transition().rows(); ++row) {
    Index nonzero = 0;
    for (Index j = 0; j < 200; ++j) {
      const Scalar v = m.transition()(row, j);
      if (v != 0) {
        ++nonzero;
        CHECK(v == doctest::Approx(1.0 / 20).epsilon(1e-15));
      }
    }
    REQUIRE(nonzero == 20);
    CHECK(std::abs(m.transition().row(row).sum() - 1) <= 1e-12);
  }
  CHECK(m.reward().minCoeff() >= 0);
  CHECK(m.reward().maxCoeff() <= 1);
}

TEST_CASE("generator: degenerate shapes") {
  const Mdp one = generate_random_mdp(1, 1, 1, 3);
  CHECK(one.p(0, 0, 0) == 1);

  const Mdp full = generate_random_mdp(4, 2, 4, 3);
  for (Index row = 0; row < 8; ++row)
    for (Index j = 0; j < 4; ++j) CHECK(full.transition()(row, j) == 0.25);
}

TEST_CASE("generator: rejects bad support sizes") {
  CHECK_THROWS_AS(generate_random_mdp(5, 2, 0, 1), ParameterError);
  CHECK_THROWS_AS(generate_random_mdp(5, 2, 6, 1), ParameterError);
}

TEST_CASE("generator: deterministic in the seed, sensitive to it") {
  const Mdp a = generate_random_mdp(30, 4, 5, 11);
  const Mdp b = generate_random_mdp(30, 4, 5, 11);
  const Mdp c = generate_random_mdp(30, 4, 5, 12);
  CHECK(a == b);
  CHECK(content_hash(a) == content_hash(b));
  CHECK_FALSE(a == c);
}

TEST_CASE("generator: reward is the product of a pair and a state uniform") {
  const Mdp m = generate_random_mdp(50, 10, 3, 5);
  // E[U V] = 1/4 and E[(U V)^2] = 1/9 for independent uniforms.
  CHECK(m.reward().mean() == doctest::Approx(0.25).epsilon(0.15));
  CHECK(m.reward().array().square().mean() == doctest::Approx(1.0 / 9).epsilon(0.15));
}

TEST_CASE("mdp: invariant violations are validation errors") {
  Matrix p = Matrix::Constant(2, 2, 0.5);
  Matrix r = Matrix::Constant(2, 1, 0.5);
  CHECK_NOTHROW(Mdp(2, 1, p, r, 0.9));
  Matrix bad_p = p;
  bad_p(0, 0) = 0.4;
  CHECK_THROWS_AS(Mdp(2, 1, bad_p, r, 0.9), ValidationError);
  Matrix bad_r = r;
  bad_r(1, 0) = 1.5;
  CHECK_THROWS_AS(Mdp(2, 1, p, bad_r, 0.9), ValidationError);
  CHECK_THROWS_AS(Mdp(2, 1, p, r, 1.0), ValidationError);
  CHECK_THROWS_AS(Mdp(2, 1, p, r, -0.1), ValidationError);
}

TEST_CASE("mdp: expectation and state kernel agree with the dense kernel") {
  const Mdp m = generate_random_mdp(6, 3, 2, 9);
  Vector v = Vector::LinSpaced(6, -1, 4);
  const Matrix e = m.expect(v);
  for (Index s = 0; s < 6; ++s)
    for (Index a = 0; a < 3; ++a) CHECK(e(s, a) == doctest::Approx(m.transition().row(s * 3 + a).dot(v)));
  const Policy pi = Policy::uniform(6, 3);
  const Matrix k = m.state_kernel(pi);
  for (Index s = 0; s < 6; ++s) CHECK(k.row(s).sum() == doctest::Approx(1));
}

TEST_CASE("persistence: bit-exact round trip") {
  const Mdp m = generate_random_mdp(200, 50, 20, 7);
  const auto path = temp_path("roundtrip.json");
  save_mdp(m, path);
  const Mdp back = load_mdp(path);
  CHECK(back == m);
  CHECK((back.reward().array() == m.reward().array()).all());
  CHECK(back.discount() == m.discount());
}

TEST_CASE("persistence: awkward reals survive the round trip") {
  Matrix r(1, 2);
  r << 0.1, 1.0 / 3.0;
  Matrix p(2, 1);
  p << 1, 1;
  const Mdp m(1, 2, p, r, 0.99);
  const Mdp back = mdp_from_json(mdp_to_json(m));
  CHECK(back.reward()(0, 1) == 1.0 / 3.0);
  CHECK(back.discount() == 0.99);
}

TEST_CASE("persistence: nested reward rows are accepted") {
  const std::string text = R"({"format_version": 1, "n_states": 2, "n_actions": 1, "gamma": 0.5,
    "reward": [[0.25], [0.75]], "transitions": [{"successors": [1], "probs": [1]}, {"successors": [0, 1], "probs": [0.5, 0.5]}]})";
  const Mdp m = mdp_from_json(text);
  CHECK(m.reward()(1, 0) == 0.75);
  CHECK(m.p(1, 0, 0) == 0.5);
}

TEST_CASE("persistence: a row summing to 0.9 is a validation error") {
  const std::string text = R"({"format_version": 1, "n_states": 1, "n_actions": 1, "gamma": 0.9,
    "reward": [0.5], "transitions": [{"successors": [0], "probs": [0.9]}]})";
  CHECK_THROWS_AS(mdp_from_json(text), ValidationError);
}

TEST_CASE("persistence: truncated or malformed files are parse errors with location") {
  const std::string full = mdp_to_json(generate_random_mdp(3, 2, 2, 1));
  CHECK_THROWS_AS(mdp_from_json(full.substr(0, full.size() / 2)), ParseError);
  try {
    mdp_from_json(full.substr(0, full.size() / 2));
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }

  const std::string wrong_type = R"({"format_version": 1, "n_states": 1, "n_actions": 1, "gamma": 0.9,
    "reward": [0.5], "transitions": [{"successors": [0], "probs": ["x"]}]})";
  try {
    mdp_from_json(wrong_type);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("transitions[0].probs[0]") != std::string::npos);
  }

  const std::string wrong_version = R"({"format_version": 2, "n_states": 1, "n_actions": 1, "gamma": 0.9,
    "reward": [[0.5]], "transitions": [{"successors": [0], "probs": [1]}]})";
  CHECK_THROWS_AS(mdp_from_json(wrong_version), ParseError);
  CHECK_THROWS_AS(load_mdp(temp_path("does_not_exist.json")), std::runtime_error);
}

TEST_CASE("constrained instance: support sampling") {
  const Mdp m = generate_random_mdp(3, 2, 2, 4);
  Policy det(Matrix::Zero(3, 2));
  det.probs(0, 1) = 1;
  det.probs(1, 0) = 1;
  det.probs(2, 1) = 1;
  const auto inst = build_constrained_instance(m, det, 3, 0.1, 5);
  const std::vector<StateAction> expected{{0, 1}, {1, 0}, {2, 1}};
  CHECK(inst.forbidden_pairs == expected);
  CHECK(inst.pi_max == 0.1);

  CHECK_THROWS_AS(build_constrained_instance(m, det, 0, 0.1, 5), ParameterError);
  CHECK_THROWS_AS(build_constrained_instance(m, det, 4, 0.1, 5), ValidationError);

  const Mdp big = generate_random_mdp(40, 6, 4, 4);
  const auto many = build_constrained_instance(big, Policy::uniform(40, 6), 10, 0.1, 8);
  std::set<StateAction> distinct(many.forbidden_pairs.begin(), many.forbidden_pairs.end());
  CHECK(distinct.size() == 10);
  const auto again = build_constrained_instance(big, Policy::uniform(40, 6), 10, 0.1, 8);
  CHECK(again.forbidden_pairs == many.forbidden_pairs);
}

TEST_CASE("constrained instance: pair files round trip") {
  const Mdp m = generate_random_mdp(10, 3, 2, 4);
  const auto inst = build_constrained_instance(m, Policy::uniform(10, 3), 4, 0.25, 1);
  const auto path = temp_path("pairs.json");
  save_pairs(inst, path);
  const auto [pairs, pi_max] = load_pairs(path);
  CHECK(pairs == inst.forbidden_pairs);
  CHECK(pi_max == 0.25);
}

TEST_CASE("policy validation") {
  CHECK_NOTHROW(Policy::uniform(3, 4).validate());
  Policy bad = Policy::uniform(2, 2);
  bad.probs(1, 0) = 0.6;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.probs(1, 0) = -0.5;
  bad.probs(1, 1) = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
