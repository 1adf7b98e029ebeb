#pragma once

// Flat CSV tables for slices, measures and solutions, and a JSON writer that
// prints every double with 17 significant digits.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lattice_bsde/errors.hpp"
#include "lattice_bsde/scenario.hpp"
#include "lattice_bsde/solver.hpp"

namespace lattice_bsde {

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  require(end != s.c_str() && *end == '\0', ErrorCode::ConfigInvalid, "not a number: '" + s + "'");
  return x;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Inverse of ScenarioTree::word_string.
inline std::size_t node_from_word_string(const ScenarioTree& tree, const std::string& word, int& depth) {
  if (word == "-") {
    depth = 0;
    return 0;
  }
  std::vector<int> letters;
  if (tree.branching() <= 10) {
    for (char c : word) {
      require(c >= '0' && c <= '9', ErrorCode::ConfigInvalid, "bad node word '" + word + "'");
      letters.push_back(c - '0');
    }
  } else {
    std::istringstream in(word);
    std::string part;
    while (std::getline(in, part, '.')) letters.push_back(std::stoi(part));
  }
  require(static_cast<int>(letters.size()) <= tree.horizon(), ErrorCode::DepthMismatch, "node word too long");
  depth = static_cast<int>(letters.size());
  return tree.node_from_word(letters);
}

// ---------------------------------------------------------------------------
// Slices

inline void write_slice_csv(std::ostream& out, const ScenarioTree& tree, const Slice& values) {
  const int depth = tree.depth_of(values.size());
  out << "node,value\n";
  for (std::size_t i = 0; i < values.size(); ++i) out << tree.word_string(depth, i) << ',' << format_double(values[i]) << '\n';
}

inline Slice read_slice_csv(std::istream& in, const ScenarioTree& tree) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ConfigInvalid, "empty slice CSV");
  std::map<std::size_t, double> values;
  int depth = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == 2, ErrorCode::ConfigInvalid, "slice CSV rows need two cells");
    int d = 0;
    const std::size_t node = node_from_word_string(tree, cells[0], d);
    require(depth < 0 || d == depth, ErrorCode::DepthMismatch, "slice CSV mixes depths");
    depth = d;
    values[node] = parse_double(cells[1]);
  }
  require(depth >= 0 && values.size() == tree.nodes_at(depth), ErrorCode::DepthMismatch, "slice CSV is incomplete");
  Slice out(values.size());
  for (const auto& [node, v] : values) out[node] = v;
  return out;
}

// ---------------------------------------------------------------------------
// Measures

inline void write_measure_csv(std::ostream& out, const ScenarioTree& tree, const Measure& measure) {
  out << "time,node";
  for (int j = 0; j < tree.branching(); ++j) out << ",p" << j;
  out << '\n';
  for (int n = 1; n <= tree.horizon(); ++n) {
    for (std::size_t node = 0; node < tree.nodes_at(n - 1); ++node) {
      out << n << ',' << tree.word_string(n - 1, node);
      const Vector& p = measure.kernel(n, node);
      for (int j = 0; j < tree.branching(); ++j) out << ',' << format_double(p[j]);
      out << '\n';
    }
  }
}

inline Measure read_measure_csv(std::istream& in, const ScenarioTree& tree) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ConfigInvalid, "empty measure CSV");
  VectorProcess kernel(tree, Vector::Constant(tree.branching(), 1.0 / tree.branching()));
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == static_cast<std::size_t>(tree.branching()) + 2, ErrorCode::ConfigInvalid,
            "measure CSV row has the wrong number of cells");
    const int n = std::stoi(cells[0]);
    int depth = 0;
    const std::size_t node = node_from_word_string(tree, cells[1], depth);
    require(n >= 1 && n <= tree.horizon() && depth == n - 1, ErrorCode::DepthMismatch, "measure CSV time/node mismatch");
    Vector p(tree.branching());
    for (int j = 0; j < tree.branching(); ++j) p[j] = parse_double(cells[static_cast<std::size_t>(j) + 2]);
    kernel.set(n, node, p);
    ++rows;
  }
  std::size_t expected = 0;
  for (int n = 1; n <= tree.horizon(); ++n) expected += tree.nodes_at(n - 1);
  require(rows == expected, ErrorCode::DepthMismatch, "measure CSV is incomplete");
  return Measure(tree, std::move(kernel));
}

// ---------------------------------------------------------------------------
// Solutions: one row per (time n, depth-n node) with Y_n and Z_{n+1} at that node.

inline void write_solution_csv(std::ostream& out, const ScenarioTree& tree, const Solution& sol) {
  out << "time,node,Y";
  for (int k = 1; k <= tree.dim(); ++k) out << ",Z" << k;
  out << '\n';
  for (int n = 0; n <= sol.horizon(); ++n) {
    for (std::size_t node = 0; node < tree.nodes_at(n); ++node) {
      out << n << ',' << tree.word_string(n, node) << ',' << format_double(sol.Y.at(n)[node]);
      for (int k = 0; k < tree.dim(); ++k) {
        out << ',';
        if (n < sol.horizon()) out << format_double(sol.Z.at(n + 1, node)[k]);
      }
      out << '\n';
    }
  }
}

inline Solution read_solution_csv(std::istream& in, const ScenarioTree& tree) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ConfigInvalid, "empty solution CSV");
  const int N = tree.horizon();
  Solution sol{AdaptedField{std::vector<Slice>(static_cast<std::size_t>(N) + 1)},
               VectorProcess(tree, Vector::Zero(tree.dim()))};
  for (int n = 0; n <= N; ++n) sol.Y.at(n).assign(tree.nodes_at(n), std::numeric_limits<double>::quiet_NaN());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == static_cast<std::size_t>(tree.dim()) + 3, ErrorCode::ConfigInvalid,
            "solution CSV row has the wrong number of cells");
    const int n = std::stoi(cells[0]);
    int depth = 0;
    const std::size_t node = node_from_word_string(tree, cells[1], depth);
    require(n == depth, ErrorCode::DepthMismatch, "solution CSV time/node mismatch");
    sol.Y.at(n)[node] = parse_double(cells[2]);
    if (n < N) {
      Vector z(tree.dim());
      for (int k = 0; k < tree.dim(); ++k) z[k] = parse_double(cells[static_cast<std::size_t>(k) + 3]);
      sol.Z.set(n + 1, node, z);
    }
  }
  for (int n = 0; n <= N; ++n) {
    for (double y : sol.Y.at(n)) require(!std::isnan(y), ErrorCode::DepthMismatch, "solution CSV is incomplete");
  }
  return sol;
}

// ---------------------------------------------------------------------------
// JSON

using Json = nlohmann::ordered_json;

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

namespace detail {

inline void write_json_string(std::ostream& out, const std::string& s) {
  out << Json(s).dump();
}

inline void write_json(std::ostream& out, const Json& j, int indent, int level) {
  const std::string pad(static_cast<std::size_t>(indent * (level + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * level), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out << "{}";
        return;
      }
      out << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out << ",\n";
        first = false;
        out << pad;
        write_json_string(out, it.key());
        out << ": ";
        write_json(out, it.value(), indent, level + 1);
      }
      out << '\n' << close << '}';
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out << "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      const bool nested = std::any_of(j.begin(), j.end(), [](const Json& v) { return v.is_structured(); });
      out << (nested ? "[\n" : "[");
      bool first = true;
      for (const auto& v : j) {
        if (!first) out << (nested ? ",\n" : ", ");
        first = false;
        if (nested) out << pad;
        write_json(out, v, indent, level + 1);
      }
      if (nested) out << '\n' << close;
      out << ']';
      return;
    }
    case Json::value_t::number_float: {
      const double x = j.get<double>();
      // JSON has no infinities or NaN.
      if (std::isfinite(x)) {
        out << format_double(x);
      } else {
        out << "null";
      }
      return;
    }
    default:
      out << j.dump();
  }
}

}  // namespace detail

inline void write_json(std::ostream& out, const Json& j) {
  detail::write_json(out, j, 2, 0);
  out << '\n';
}

}  // namespace lattice_bsde
