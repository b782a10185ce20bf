#include "doctest.h"
#include "test_support.hpp"

#include "regmdp/trace_io.hpp"

#include <cmath>
#include <limits>
#include <sstream>

using namespace regmdp;

namespace {

bool same_bits(Scalar a, Scalar b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

ConvergenceTrace awkward_trace() {
  ConvergenceTrace t;
  t.metadata = {{"algorithm", "gpmd"}, {"regularizer", "logbarrier:pairs=a,b.json,pimax=0.1"}, {"reference", "supplied"}};
  t.has_reference = true;
  const Scalar nan = std::numeric_limits<Scalar>::quiet_NaN();
  t.records.push_back({0, 0.1, 1.0 / 3.0, nan, 2, 0});
  t.records.push_back({1, 5e-324, std::nextafter(1.0, 2.0), 1e300, 0.30000000000000004, 12.5});
  t.records.push_back({7, 0, -0.0, std::numeric_limits<Scalar>::min(), 1e-17, 1e6 + 0.1});
  return t;
}

}  // namespace

TEST_CASE("trace CSV round trip is exact") {
  const ConvergenceTrace t = awkward_trace();
  std::ostringstream out;
  write_trace_csv(t, out);
  const std::string text = out.str();
  CHECK(text.find(std::string(kTraceHeader) + "\n") != std::string::npos);
  CHECK(text.rfind("# algorithm: gpmd\n", 0) == 0);

  std::istringstream in(text);
  const ConvergenceTrace back = read_trace_csv(in);
  REQUIRE(back.records.size() == t.records.size());
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    const auto &a = t.records[i], &b = back.records[i];
    CHECK(a.iter == b.iter);
    CHECK(same_bits(a.q_gap, b.q_gap));
    CHECK(same_bits(a.v_gap, b.v_gap));
    CHECK(same_bits(a.xi_gap, b.xi_gap));
    CHECK(same_bits(a.pi_l1_gap, b.pi_l1_gap));
    CHECK(same_bits(a.elapsed_ms, b.elapsed_ms));
  }
  CHECK(back.metadata == t.metadata);
  CHECK(back.has_reference);

  std::ostringstream again;
  write_trace_csv(back, again);
  CHECK(again.str() == text);
}

TEST_CASE("trace CSV from a real run reparses bit for bit") {
  const Mdp m = testing::dense_random_mdp(6, 3, 4, 0.9);
  SolverConfig cfg;
  cfg.eta = 2;
  cfg.tau = 0.1;
  cfg.max_iters = 30;
  const RunResult r = gpmd_run(m, Regularizer::shannon(), cfg);
  const auto path = testing::temp_path("trace_rt.csv");
  save_trace_csv(r.trace, path);
  const ConvergenceTrace back = load_trace_csv(path);
  REQUIRE(back.records.size() == 31);
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    CHECK(back.records[i].q_gap == r.trace.records[i].q_gap);
    CHECK(std::isnan(back.records[i].v_gap));
  }
  CHECK_FALSE(back.has_reference);
}

TEST_CASE("trace CSV parse errors name the line") {
  auto fails = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      read_trace_csv(in);
    } catch (const ParseError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  const std::string h = std::string(kTraceHeader) + "\n";
  CHECK(fails("", "missing header"));
  CHECK(fails("iter,q_gap\n", "line 1"));
  CHECK(fails(h + "0,1,1,1,1\n", "line 2"));
  CHECK(fails(h + "0,1,1,1,1,x\n", "'x'"));
  CHECK(fails(h + "0,1,1,1,1,1\n0,1,1,1,1,1\n", "increase"));
  CHECK(fails(h + "0.5,1,1,1,1,1\n", "integer"));
  CHECK(fails("# no colon here\n" + h, "key: value"));
  CHECK(fails(h + "# late\n", "after the header"));
}

TEST_CASE("compare CSV round trip") {
  const std::vector<CompareRow> rows{{"gpmd", 0.01, 0, 2.5}, {"pmd", 10, 2000, 1.0 / 7}, {"reg_pi", INFINITY, 3, 0}};
  std::ostringstream out;
  write_compare_csv(rows, out);
  CHECK(out.str().rfind("algo,eta,iter,q_gap\n", 0) == 0);
  std::istringstream in(out.str());
  const auto back = read_compare_csv(in);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].algo == rows[i].algo);
    CHECK(back[i].eta == rows[i].eta);
    CHECK(back[i].iter == rows[i].iter);
    CHECK(back[i].q_gap == rows[i].q_gap);
  }
  std::istringstream bad("algo,eta\n");
  CHECK_THROWS_AS(read_compare_csv(bad), ParseError);
}

TEST_CASE("parse_real") {
  CHECK(std::isnan(parse_real("nan")));
  CHECK(std::isnan(parse_real("-nan")));
  CHECK(parse_real("inf") == INFINITY);
  CHECK(parse_real("-1e-3") == -1e-3);
  CHECK(parse_real(format_real(0.1)) == 0.1);
  CHECK_THROWS_AS(parse_real(""), ParseError);
  CHECK_THROWS_AS(parse_real("1.0x"), ParseError);
}
