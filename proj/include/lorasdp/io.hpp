#pragma once

// Text formats. All indices are 1-based on disk and 0-based in memory.
//
//   SDPA sparse (.dat-s)  m / nblocks / block sizes / b / "mat blk i j v"*
//   edge list             "n [edges]" then "u v [w]"*
//   observations          "n2 n1" then "i j value"*

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lorasdp/errors.hpp"
#include "lorasdp/problem.hpp"

namespace lorasdp {

namespace detail {

// Splits a line on whitespace and the SDPA punctuation  , { } ( ).
inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ' ' || ch == '\t' || ch == '\r' || ch == ',' || ch == '{' || ch == '}' ||
        ch == '(' || ch == ')') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline bool starts_numeric(std::string_view s) {
  if (s.empty()) return false;
  const char c = s[0];
  return (c >= '0' && c <= '9') || c == '+' || c == '-' || c == '.';
}

inline double to_double(const std::string& s, std::size_t line) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v))
    throw ParseError(line, "expected a number, got '" + s + "'");
  return v;
}

inline long long to_integer(const std::string& s, std::size_t line) {
  const double v = to_double(s, line);
  if (v != std::floor(v) || std::abs(v) > 9.0e15)
    throw ParseError(line, "expected an integer, got '" + s + "'");
  return static_cast<long long>(v);
}

inline bool is_comment(std::string_view line) {
  const auto first = line.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return true;
  return line[first] == '"' || line[first] == '*' || line[first] == '#';
}

}  // namespace detail

// Reads an SDPA sparse file with a single semidefinite block. The SDPA
// convention  max <F0, X>  s.t. <Fi, X> = c_i  becomes  min <-F0, X>.
// Duplicate entries are summed; a note is appended to `warnings` if given.
inline SdpProblem parse_sdpa(std::istream& in, std::vector<std::string>* warnings = nullptr) {
  std::string line;
  std::size_t lineno = 0;
  long long m = -1;
  long long nblocks = -1;
  std::vector<long long> block_sizes;
  std::vector<double> b;

  // Header values may be spread over lines arbitrarily; consume tokens until
  // m, nblocks, the block sizes and b are all known.
  auto header_done = [&] {
    return m >= 0 && nblocks >= 0 && static_cast<long long>(block_sizes.size()) == nblocks &&
           static_cast<long long>(b.size()) == m;
  };
  while (!header_done() && std::getline(in, line)) {
    ++lineno;
    if (detail::is_comment(line)) continue;
    for (auto& f : detail::split_fields(line)) {
      // Text after the numbers of a header line (as in "2 =mdim") is a comment.
      if (!detail::starts_numeric(f)) break;
      if (header_done()) throw ParseError(lineno, "unexpected trailing value in header");
      if (m < 0) {
        m = detail::to_integer(f, lineno);
        if (m < 1) throw ParseError(lineno, "constraint count must be positive");
      } else if (nblocks < 0) {
        nblocks = detail::to_integer(f, lineno);
        if (nblocks < 1) throw ParseError(lineno, "block count must be positive");
        if (nblocks != 1)
          throw UnsupportedFeature("only a single semidefinite block is supported (file has " +
                                   std::to_string(nblocks) + " blocks)");
      } else if (static_cast<long long>(block_sizes.size()) < nblocks) {
        const long long s = detail::to_integer(f, lineno);
        if (s < 0) throw UnsupportedFeature("linear (diagonal) blocks are not supported");
        if (s == 0) throw ParseError(lineno, "block size must be nonzero");
        block_sizes.push_back(s);
      } else {
        b.push_back(detail::to_double(f, lineno));
      }
    }
  }
  if (!header_done()) throw ParseError(lineno, "truncated header");

  const auto n = static_cast<std::size_t>(block_sizes[0]);
  std::vector<SparseEntry> c;
  std::vector<std::vector<SparseEntry>> a(static_cast<std::size_t>(m));
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_comment(line)) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != 5) throw ParseError(lineno, "expected 5 fields 'mat blk i j value'");
    const long long mat = detail::to_integer(f[0], lineno);
    const long long blk = detail::to_integer(f[1], lineno);
    const long long i = detail::to_integer(f[2], lineno);
    const long long j = detail::to_integer(f[3], lineno);
    const double v = detail::to_double(f[4], lineno);
    if (mat < 0 || mat > m) throw ParseError(lineno, "matrix number out of range");
    if (blk != 1) throw ParseError(lineno, "block number out of range");
    if (i < 1 || j < 1 || i > static_cast<long long>(n) || j > static_cast<long long>(n))
      throw ParseError(lineno, "entry index out of range");
    SparseEntry e{static_cast<Index>(i - 1), static_cast<Index>(j - 1), v};
    if (mat == 0) {
      e.value = -v;
      c.push_back(e);
    } else {
      a[static_cast<std::size_t>(mat - 1)].push_back(e);
    }
  }

  std::size_t merged = canonicalize(c);
  ConstraintSet cs;
  std::size_t total = 0;
  for (const auto& ai : a) total += ai.size();
  cs.reserve(a.size(), total);
  for (auto& ai : a) {
    merged += cs.push_back(std::move(ai));
  }
  if (merged > 0 && warnings)
    warnings->push_back("summed " + std::to_string(merged) + " duplicate entries");
  return SdpProblem(n, SymmetricSparse{n, std::move(c)}, std::move(cs), std::move(b),
                    Sense::kMaximize);
}

inline SdpProblem parse_sdpa(const std::string& text, std::vector<std::string>* warnings = nullptr) {
  std::istringstream in(text);
  return parse_sdpa(in, warnings);
}

// Writes the problem in SDPA sparse form (the inverse of parse_sdpa).
inline void write_sdpa(const SdpProblem& p, std::ostream& out) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << p.m() << "\n1\n" << p.n() << "\n";
  for (std::size_t i = 0; i < p.m(); ++i) out << (i ? " " : "") << p.b()[i];
  out << "\n";
  for (const auto& e : p.C().entries)
    out << "0 1 " << e.row + 1 << ' ' << e.col + 1 << ' ' << -e.value << "\n";
  for (std::size_t i = 0; i < p.m(); ++i)
    for (const auto& e : p.A()[i])
      out << i + 1 << " 1 " << e.row + 1 << ' ' << e.col + 1 << ' ' << e.value << "\n";
}

inline std::string write_sdpa(const SdpProblem& p) {
  std::ostringstream out;
  write_sdpa(p, out);
  return out.str();
}

// Header "n" (a second number, e.g. the Gset edge count, is ignored), then
// "u v [w]" lines. Self-loops are rejected; repeated edges are summed.
inline GraphEdgeList parse_edge_list(std::istream& in, std::vector<std::string>* warnings = nullptr) {
  std::string line;
  std::size_t lineno = 0;
  GraphEdgeList g;
  bool have_header = false;
  std::vector<SparseEntry> raw;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_comment(line)) continue;
    const auto f = detail::split_fields(line);
    if (!have_header) {
      if (f.empty() || f.size() > 2) throw ParseError(lineno, "expected header 'n'");
      const long long n = detail::to_integer(f[0], lineno);
      if (n < 0) throw ParseError(lineno, "vertex count must be non-negative");
      g.n = static_cast<std::size_t>(n);
      have_header = true;
      continue;
    }
    if (f.size() != 2 && f.size() != 3) throw ParseError(lineno, "expected 'u v [w]'");
    const long long u = detail::to_integer(f[0], lineno);
    const long long v = detail::to_integer(f[1], lineno);
    const double w = f.size() == 3 ? detail::to_double(f[2], lineno) : 1.0;
    if (u < 1 || v < 1 || u > static_cast<long long>(g.n) || v > static_cast<long long>(g.n))
      throw ParseError(lineno, "vertex index out of range");
    if (u == v) throw ParseError(lineno, "self-loop");
    raw.push_back({static_cast<Index>(u - 1), static_cast<Index>(v - 1), w});
  }
  if (!have_header) throw ParseError(lineno, "missing header");
  const std::size_t merged = canonicalize(raw);
  if (merged > 0 && warnings)
    warnings->push_back("summed " + std::to_string(merged) + " repeated edges");
  g.edges.reserve(raw.size());
  for (const auto& e : raw) g.edges.push_back({e.row, e.col, e.value});
  return g;
}

inline void write_edge_list(const GraphEdgeList& g, std::ostream& out) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << g.n << "\n";
  for (const auto& e : g.edges) out << e.u + 1 << ' ' << e.v + 1 << ' ' << e.w << "\n";
}

inline ObservationSet parse_observations(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  ObservationSet o;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_comment(line)) continue;
    const auto f = detail::split_fields(line);
    if (!have_header) {
      if (f.size() != 2) throw ParseError(lineno, "expected header 'n2 n1'");
      const long long rows = detail::to_integer(f[0], lineno);
      const long long cols = detail::to_integer(f[1], lineno);
      if (rows < 1 || cols < 1) throw ParseError(lineno, "matrix shape must be positive");
      o.rows = static_cast<std::size_t>(rows);
      o.cols = static_cast<std::size_t>(cols);
      have_header = true;
      continue;
    }
    if (f.size() != 3) throw ParseError(lineno, "expected 'i j value'");
    const long long i = detail::to_integer(f[0], lineno);
    const long long j = detail::to_integer(f[1], lineno);
    if (i < 1 || j < 1 || i > static_cast<long long>(o.rows) || j > static_cast<long long>(o.cols))
      throw ParseError(lineno, "observation index out of range");
    o.obs.push_back({static_cast<Index>(i - 1), static_cast<Index>(j - 1),
                     detail::to_double(f[2], lineno)});
  }
  if (!have_header) throw ParseError(lineno, "missing header");
  return o;
}

inline void write_observations(const ObservationSet& o, std::ostream& out) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << o.rows << ' ' << o.cols << "\n";
  for (const auto& ob : o.obs) out << ob.i + 1 << ' ' << ob.j + 1 << ' ' << ob.value << "\n";
}

}  // namespace lorasdp
