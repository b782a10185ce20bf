#pragma once

#include "regmdp/types.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace regmdp {

/// Outcome of one runtime property check. `worst` is the largest observed
/// value of the checked quantity minus its bound (<= 0 when the property holds).
struct PropertyResult {
  std::string suite;
  std::string name;
  bool passed = true;
  Scalar worst = -std::numeric_limits<Scalar>::infinity();
  long checks = 0;
};

/// bellman, lemmas, theorem1, theorem2, theorem4, oracle.
const std::vector<std::string>& verify_suite_names();

/// Runs one suite on instances seeded from `seed`. Throws ParameterError for an
/// unknown suite name.
std::vector<PropertyResult> run_verify_suite(const std::string& suite, std::uint64_t seed);

}  // namespace regmdp
