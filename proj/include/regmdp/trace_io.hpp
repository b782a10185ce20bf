#pragma once

#include "regmdp/solvers.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace regmdp {

// Trace files start with "# key: value" metadata lines, then the header
// iter,q_gap,v_gap,xi_gap,pi_l1_gap,elapsed_ms and one row per iterate.
// Reals use 17 significant digits, so a written trace reparses bit for bit
// (NaN columns are written as "nan").
inline constexpr const char* kTraceHeader = "iter,q_gap,v_gap,xi_gap,pi_l1_gap,elapsed_ms";

void write_trace_csv(const ConvergenceTrace& trace, std::ostream& out);
ConvergenceTrace read_trace_csv(std::istream& in);

void save_trace_csv(const ConvergenceTrace& trace, const std::filesystem::path& path);
ConvergenceTrace load_trace_csv(const std::filesystem::path& path);

/// One row of the long-format comparison table.
struct CompareRow {
  std::string algo;
  Scalar eta = 0;
  long iter = 0;
  Scalar q_gap = 0;
};

inline constexpr const char* kCompareHeader = "algo,eta,iter,q_gap";

void write_compare_csv(const std::vector<CompareRow>& rows, std::ostream& out);
std::vector<CompareRow> read_compare_csv(std::istream& in);

/// Parses a real written by format_real, including "nan" and "inf".
Scalar parse_real(const std::string& text);

}  // namespace regmdp
