#pragma once

// Matrix Market coordinate files and newline-delimited marginal files.

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tws/error.hpp"
#include "tws/sparse.hpp"

namespace tws {

namespace detail {

inline std::string lowercase(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

inline double parse_real(const std::string& tok, std::size_t line) {
  // strtod accepts "inf"/"nan"; reject them explicitly below.
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw ParseError("malformed number '" + tok + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + tok + "'", line);
  return v;
}

inline std::size_t parse_index(const std::string& tok, std::size_t line) {
  std::size_t v = 0;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec == std::errc::result_out_of_range) throw ParseError("index overflow '" + tok + "'", line);
  if (ec != std::errc() || ptr != last) throw ParseError("malformed index '" + tok + "'", line);
  return v;
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

/// Reads a coordinate-format Matrix Market stream (real or integer field,
/// general or symmetric symmetry). Symmetric files are expanded on load.
inline SparseMatrix read_matrix_market(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty matrix market input", 0);
  ++line_no;
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket" || detail::lowercase(object) != "matrix" ||
      detail::lowercase(format) != "coordinate")
    throw ParseError("expected '%%MatrixMarket matrix coordinate ...' header", line_no);
  field = detail::lowercase(field);
  symmetry = detail::lowercase(symmetry);
  if (field != "real" && field != "integer" && field != "double")
    throw ParseError("unsupported field '" + field + "'", line_no);
  if (symmetry != "general" && symmetry != "symmetric")
    throw ParseError("unsupported symmetry '" + symmetry + "'", line_no);
  const bool symmetric = symmetry == "symmetric";

  // Skip comments and blank lines up to the size line.
  std::size_t rows = 0, cols = 0, entries = 0;
  bool have_size = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '%' || line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    std::istringstream ss(line);
    std::string a, b, c, extra;
    if (!(ss >> a >> b >> c) || (ss >> extra)) throw ParseError("malformed size line", line_no);
    rows = detail::parse_index(a, line_no);
    cols = detail::parse_index(b, line_no);
    entries = detail::parse_index(c, line_no);
    have_size = true;
    break;
  }
  if (!have_size) throw ParseError("missing size line", line_no);
  if (symmetric && rows != cols) throw ParseError("symmetric matrix must be square", line_no);

  std::vector<Triplet> triplets;
  triplets.reserve(symmetric ? 2 * entries : entries);
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '%' || line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    std::istringstream ss(line);
    std::string a, b, c, extra;
    if (!(ss >> a >> b >> c) || (ss >> extra)) throw ParseError("malformed entry line", line_no);
    const std::size_t i = detail::parse_index(a, line_no);
    const std::size_t j = detail::parse_index(b, line_no);
    const double v = detail::parse_real(c, line_no);
    if (i == 0 || j == 0 || i > rows || j > cols)
      throw ParseError("index (" + a + ", " + b + ") outside declared shape", line_no);
    if (++seen > entries) throw ParseError("more entries than declared", line_no);
    triplets.push_back({i - 1, j - 1, v});
    if (symmetric && i != j) triplets.push_back({j - 1, i - 1, v});
  }
  if (seen != entries) throw ParseError("fewer entries than declared", line_no);
  try {
    return SparseMatrix::from_triplets(triplets, rows, cols);
  } catch (const ConstructionError& e) {
    throw ParseError(e.what(), 0);
  }
}

inline void write_matrix_market(std::ostream& out, const SparseMatrix& a) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.n_rows() << ' ' << a.n_cols() << ' ' << a.nnz() << '\n';
  for (const auto& t : a.to_triplets())
    out << t.row + 1 << ' ' << t.col + 1 << ' ' << detail::format_real(t.value) << '\n';
}

inline SparseMatrix load_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'", 0);
  return read_matrix_market(in);
}

inline void store_matrix_market(const std::filesystem::path& path, const SparseMatrix& a) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  write_matrix_market(out, a);
}

/// One decimal value per line; blank lines are ignored.
inline Vector read_marginal(std::istream& in) {
  Vector out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    out.push_back(detail::parse_real(line.substr(first, last - first + 1), line_no));
  }
  return out;
}

inline Vector load_marginal(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'", 0);
  return read_marginal(in);
}

inline void store_marginal(const std::filesystem::path& path, std::span<const double> m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (double v : m) out << detail::format_real(v) << '\n';
}

}  // namespace tws
