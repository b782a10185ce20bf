#include "regmdp/trace_io.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace regmdp {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

long parse_long(const std::string& text, const std::string& where) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty()) throw ParseError(where + ": expected an integer, got '" + text + "'");
  return v;
}

}  // namespace

Scalar parse_real(const std::string& text) {
  if (text == "nan" || text == "-nan") return std::numeric_limits<Scalar>::quiet_NaN();
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  const Scalar v = std::strtod(begin, &end);
  if (text.empty() || end != begin + text.size()) throw ParseError("expected a real number, got '" + text + "'");
  return v;
}

void write_trace_csv(const ConvergenceTrace& trace, std::ostream& out) {
  for (const auto& [key, value] : trace.metadata) out << "# " << key << ": " << value << '\n';
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.iter << ',' << format_real(r.q_gap) << ',' << format_real(r.v_gap) << ',' << format_real(r.xi_gap) << ','
        << format_real(r.pi_l1_gap) << ',' << format_real(r.elapsed_ms) << '\n';
  }
}

ConvergenceTrace read_trace_csv(std::istream& in) {
  ConvergenceTrace trace;
  std::string line;
  long lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    const std::string where = "trace line " + std::to_string(lineno);
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (header) throw ParseError(where + ": metadata after the header");
      const std::string body = line.substr(line.size() > 1 && line[1] == ' ' ? 2 : 1);
      const auto colon = body.find(": ");
      if (colon == std::string::npos) throw ParseError(where + ": metadata must read '# key: value'");
      trace.metadata.emplace_back(body.substr(0, colon), body.substr(colon + 2));
      continue;
    }
    if (!header) {
      if (line != kTraceHeader) throw ParseError(where + ": expected header '" + kTraceHeader + "'");
      header = true;
      continue;
    }
    const auto cells = split(line);
    if (cells.size() != 6) throw ParseError(where + ": expected 6 columns, found " + std::to_string(cells.size()));
    TraceRecord r;
    r.iter = parse_long(cells[0], where);
    try {
      r.q_gap = parse_real(cells[1]);
      r.v_gap = parse_real(cells[2]);
      r.xi_gap = parse_real(cells[3]);
      r.pi_l1_gap = parse_real(cells[4]);
      r.elapsed_ms = parse_real(cells[5]);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!trace.records.empty() && r.iter <= trace.records.back().iter)
      throw ParseError(where + ": iteration numbers must increase");
    trace.records.push_back(r);
  }
  if (!header) throw ParseError("trace: missing header line");
  for (const auto& [key, value] : trace.metadata) {
    if (key == "reference") trace.has_reference = value == "supplied";
    if (key == "target_q_gap") trace.target_reached = value.find("(reached)") != std::string::npos;
  }
  return trace;
}

void save_trace_csv(const ConvergenceTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_trace_csv(trace, out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ConvergenceTrace load_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_trace_csv(in);
}

void write_compare_csv(const std::vector<CompareRow>& rows, std::ostream& out) {
  out << kCompareHeader << '\n';
  for (const auto& r : rows) out << r.algo << ',' << format_real(r.eta) << ',' << r.iter << ',' << format_real(r.q_gap) << '\n';
}

std::vector<CompareRow> read_compare_csv(std::istream& in) {
  std::vector<CompareRow> rows;
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line) || strip_cr(line) != kCompareHeader)
    throw ParseError("compare table: expected header '" + std::string(kCompareHeader) + "'");
  ++lineno;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string where = "compare line " + std::to_string(lineno);
    const auto cells = split(line);
    if (cells.size() != 4) throw ParseError(where + ": expected 4 columns");
    CompareRow r;
    r.algo = cells[0];
    try {
      r.eta = parse_real(cells[1]);
      r.q_gap = parse_real(cells[3]);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    r.iter = parse_long(cells[2], where);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace regmdp
