#pragma once

// The JSON run configuration: parsing with field-path diagnostics and
// builders for bases, drivers and payoffs. Every validation failure is a
// ConfigInvalid error whose message starts with the offending path, e.g.
// "$.driver.belief[2]: must be positive".

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lattice_bsde/convex.hpp"
#include "lattice_bsde/drivers.hpp"
#include "lattice_bsde/feynman_kac.hpp"
#include "lattice_bsde/io.hpp"
#include "lattice_bsde/lattice.hpp"
#include "lattice_bsde/scenario.hpp"

namespace lattice_bsde {

namespace config {

[[noreturn]] inline void invalid(const std::string& path, const std::string& msg) {
  fail(ErrorCode::ConfigInvalid, path + ": " + msg);
}

inline const Json& need(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) invalid(path, "must be an object");
  auto it = obj.find(key);
  if (it == obj.end()) invalid(path + "." + key, "missing required field");
  return *it;
}

inline const Json* maybe(const Json& obj, const std::string& key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) invalid(path, "must be a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) invalid(path, "must be finite");
  return x;
}

inline double positive(const Json& j, const std::string& path) {
  const double x = number(j, path);
  if (!(x > 0.0)) invalid(path, "must be positive");
  return x;
}

inline long long integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) invalid(path, "must be an integer");
  return j.get<long long>();
}

inline std::string text(const Json& j, const std::string& path) {
  if (!j.is_string()) invalid(path, "must be a string");
  return j.get<std::string>();
}

inline bool flag(const Json& j, const std::string& path) {
  if (!j.is_boolean()) invalid(path, "must be true or false");
  return j.get<bool>();
}

inline Vector vector(const Json& j, const std::string& path, Eigen::Index size = -1) {
  if (!j.is_array()) invalid(path, "must be an array of numbers");
  if (size >= 0 && static_cast<Eigen::Index>(j.size()) != size) {
    invalid(path, "must have " + std::to_string(size) + " entries, found " + std::to_string(j.size()));
  }
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

/// Rows of a matrix.
inline Matrix matrix(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) invalid(path, "must be a non-empty array of rows");
  const Vector first = vector(j[0], path + "[0]");
  Matrix m(static_cast<Eigen::Index>(j.size()), first.size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    m.row(static_cast<Eigen::Index>(r)) = vector(j[r], path + "[" + std::to_string(r) + "]", first.size()).transpose();
  }
  return m;
}

inline Vector simplex_point(const Json& j, const std::string& path, int branching, bool interior) {
  const Vector p = vector(j, path, branching);
  for (int k = 0; k < branching; ++k) {
    if (interior ? !(p[k] > 0.0) : p[k] < 0.0) {
      invalid(path + "[" + std::to_string(k) + "]", interior ? "must be positive" : "must be nonnegative");
    }
  }
  if (std::abs(p.sum() - 1.0) > 1e-12 * branching) invalid(path, "entries must sum to 1");
  return p;
}

}  // namespace config

struct RunConfig {
  Json raw;
  std::optional<Basis> basis;
  int horizon = 0;
  std::size_t max_paths = ScenarioTree::default_path_cap;
  std::optional<Vector> reference;
  std::uint64_t seed = 1;
  double tolerance = 1e-8;
  unsigned threads = 1;
  std::string engine = "auto";

  int dim() const { return basis->dim(); }
};

inline Basis parse_basis(const Json& j, const std::string& path) {
  if (!j.is_object()) config::invalid(path, "must be an object with `vectors` or `covariance`");
  const Json* vectors = config::maybe(j, "vectors");
  const Json* covariance = config::maybe(j, "covariance");
  if ((vectors != nullptr) == (covariance != nullptr)) config::invalid(path, "give exactly one of `vectors` or `covariance`");
  try {
    if (covariance) return Basis::from_covariance(config::matrix(*covariance, path + ".covariance"));
    if (!vectors->is_array() || vectors->empty()) config::invalid(path + ".vectors", "must be a non-empty array");
    std::vector<Vector> cols;
    for (std::size_t k = 0; k < vectors->size(); ++k) {
      cols.push_back(config::vector((*vectors)[k], path + ".vectors[" + std::to_string(k) + "]"));
    }
    const auto d = static_cast<Eigen::Index>(cols.front().size());
    if (const Json* dj = config::maybe(j, "d"); dj && config::integer(*dj, path + ".d") != d) {
      config::invalid(path + ".d", "does not match the vector length");
    }
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k].size() != d) config::invalid(path + ".vectors[" + std::to_string(k) + "]", "length differs from the first vector");
    }
    if (static_cast<Eigen::Index>(cols.size()) == d) return Basis::from_vectors(cols);
    if (static_cast<Eigen::Index>(cols.size()) == d + 1) {
      Matrix v(d, d + 1);
      for (Eigen::Index k = 0; k <= d; ++k) v.col(k) = cols[static_cast<std::size_t>(k)];
      return Basis::from_matrix(v);
    }
    config::invalid(path + ".vectors", "need d vectors v_1..v_d or d+1 vectors v_0..v_d of length d");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid) throw;
    config::invalid(path, e.what());
  }
}

inline RunConfig parse_config(const Json& j) {
  RunConfig c;
  c.raw = j;
  if (!j.is_object()) config::invalid("$", "config must be a JSON object");
  c.basis = parse_basis(config::need(j, "basis", "$"), "$.basis");
  const long long horizon = config::integer(config::need(j, "horizon", "$"), "$.horizon");
  if (horizon < 1) config::invalid("$.horizon", "must be at least 1");
  if (horizon > 1000) config::invalid("$.horizon", "must be at most 1000");
  c.horizon = static_cast<int>(horizon);
  if (const Json* m = config::maybe(j, "max_paths")) {
    const long long cap = config::integer(*m, "$.max_paths");
    if (cap < 1) config::invalid("$.max_paths", "must be positive");
    c.max_paths = static_cast<std::size_t>(cap);
  }
  if (const Json* r = config::maybe(j, "reference")) {
    c.reference = config::simplex_point(*r, "$.reference", c.basis->branching(), true);
  }
  if (const Json* s = config::maybe(j, "seed")) {
    if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<long long>() >= 0)) {
      config::invalid("$.seed", "must be a nonnegative integer");
    }
    c.seed = s->get<std::uint64_t>();
  }
  if (const Json* t = config::maybe(j, "tolerance")) c.tolerance = config::positive(*t, "$.tolerance");
  if (const Json* t = config::maybe(j, "threads")) {
    const long long n = config::integer(*t, "$.threads");
    if (n < 1) config::invalid("$.threads", "must be at least 1");
    c.threads = static_cast<unsigned>(n);
  }
  if (const Json* e = config::maybe(j, "engine")) {
    c.engine = config::text(*e, "$.engine");
    if (c.engine != "auto" && c.engine != "tree" && c.engine != "lattice") {
      config::invalid("$.engine", "must be one of auto, tree, lattice");
    }
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigInvalid, path + ": cannot open config file");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::ConfigInvalid, path + ": " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Drivers

inline DriverPtr build_driver(const Json& j, const std::string& path, const ScenarioTree& tree,
                              const std::optional<Vector>& reference = std::nullopt);

namespace detail {

inline Vector belief_from(const Json& j, const std::string& path, int branching, const std::optional<Vector>& reference) {
  // Without an explicit belief the reference measure (uniform by default) is used.
  if (const Json* b = config::maybe(j, "belief")) return config::simplex_point(*b, path + ".belief", branching, true);
  if (reference) return *reference;
  return Vector::Constant(branching, 1.0 / branching);
}

inline EntropicSpec entropic_spec_from(const Json& j, const std::string& path, const ScenarioTree& tree,
                                       const std::optional<Vector>& reference) {
  const Vector belief = belief_from(j, path, tree.branching(), reference);
  const double gamma = config::positive(config::need(j, "risk_aversion", path), path + ".risk_aversion");
  double shift = 1.0;
  if (const Json* b = config::maybe(j, "shift")) shift = config::positive(*b, path + ".shift");
  return entropic_spec(tree, belief, gamma, shift);
}

}  // namespace detail

/// Entropic drivers with `risk_aversion_slope` s use G(x) = gamma e^{s^T x} at x = X_{n-1}.
inline std::optional<MarkovDriver> markov_form(const Json& j, const std::string& path, const Basis& basis,
                                               const std::optional<Vector>& reference = std::nullopt) {
  const std::string kind = config::text(config::need(j, "kind", path), path + ".kind");
  if (kind != "entropic") return std::nullopt;
  const Json* slope = config::maybe(j, "risk_aversion_slope");
  if (!slope) return std::nullopt;
  const Vector s = config::vector(*slope, path + ".risk_aversion_slope", basis.dim());
  const Vector belief = detail::belief_from(j, path, basis.branching(), reference);
  const double gamma = config::positive(config::need(j, "risk_aversion", path), path + ".risk_aversion");
  if (const Json* b = config::maybe(j, "shift"); b && config::positive(*b, path + ".shift") != 1.0) {
    config::invalid(path + ".shift", "state-dependent risk aversion supports only shift 1");
  }
  return entropic_markov(basis, belief, gamma, s);
}

inline DriverPtr build_driver(const Json& j, const std::string& path, const ScenarioTree& tree,
                              const std::optional<Vector>& reference) {
  const std::string kind = config::text(config::need(j, "kind", path), path + ".kind");
  if (kind == "zero") return zero_driver(tree);
  if (kind == "entropic") {
    if (config::maybe(j, "risk_aversion_slope")) {
      // The risk aversion varies with X_{n-1}; build per node.
      const Vector s = config::vector(*config::maybe(j, "risk_aversion_slope"), path + ".risk_aversion_slope", tree.dim());
      EntropicSpec spec = detail::entropic_spec_from(j, path, tree, reference);
      const double gamma = spec.risk_aversion.at(1, 0);
      for (int n = 1; n <= tree.horizon(); ++n) {
        for (std::size_t node = 0; node < tree.nodes_at(n - 1); ++node) {
          spec.risk_aversion.set(n, node, gamma * std::exp(s.dot(tree.position(n - 1, node))));
        }
      }
      return entropic_driver(tree, std::move(spec));
    }
    return entropic_driver(tree, detail::entropic_spec_from(j, path, tree, reference));
  }
  if (kind == "linear") {
    const Vector a = config::vector(config::need(j, "slope", path), path + ".slope", tree.dim());
    double b = 0.0;
    if (const Json* s = config::maybe(j, "shift")) b = config::number(*s, path + ".shift");
    return linear_driver(tree, constant_process(tree, a), constant_process(tree, b));
  }
  if (kind == "worstcase") {
    const Json* kernels = config::maybe(j, "kernels");
    if (!kernels) return worstcase_driver(tree);
    if (!kernels->is_array() || kernels->empty()) config::invalid(path + ".kernels", "must be a non-empty array");
    std::vector<VectorProcess> ks;
    for (std::size_t k = 0; k < kernels->size(); ++k) {
      ks.push_back(constant_process(
          tree, config::simplex_point((*kernels)[k], path + ".kernels[" + std::to_string(k) + "]", tree.branching(), false)));
    }
    return worstcase_driver(tree, std::move(ks));
  }
  if (kind == "supconv") {
    const Json& children = config::need(j, "children", path);
    if (!children.is_array() || children.empty()) config::invalid(path + ".children", "must be a non-empty array");
    std::vector<DriverPtr> drivers;
    for (std::size_t k = 0; k < children.size(); ++k) {
      drivers.push_back(build_driver(children[k], path + ".children[" + std::to_string(k) + "]", tree, reference));
    }
    std::vector<EntropicSpec> specs;
    for (const auto& d : drivers) {
      if (const auto* e = dynamic_cast<const EntropicDriver*>(d.get())) specs.push_back(e->spec());
    }
    bool closed = config::maybe(j, "closed_form") ? config::flag(j["closed_form"], path + ".closed_form") : true;
    if (closed && specs.size() == drivers.size() && drivers.size() > 1) {
      return entropic_driver(tree, entropic_sup_convolution(tree, specs).spec);
    }
    return sup_convolution(std::move(drivers));
  }
  config::invalid(path + ".kind", "unknown driver kind '" + kind + "' (entropic, linear, worstcase, supconv, zero)");
}

/// The driver as f_n(x, z) when its parameters do not depend on the node, or
/// only on X_{n-1} through the risk aversion slope. Node-independent drivers are
/// built once on a one-period tree and evaluated there.
inline std::optional<MarkovDriver> lattice_driver(const Json& j, const std::string& path, const Basis& basis,
                                                  const std::optional<Vector>& reference = std::nullopt) {
  const std::string kind = config::text(config::need(j, "kind", path), path + ".kind");
  if (kind == "entropic") {
    if (auto f = markov_form(j, path, basis, reference)) return f;
  } else if (kind == "supconv") {
    const Json& children = config::need(j, "children", path);
    if (!children.is_array()) config::invalid(path + ".children", "must be a non-empty array");
    for (const auto& c : children) {
      if (config::maybe(c, "risk_aversion_slope") || (c.is_object() && c.value("kind", "") == "supconv")) return std::nullopt;
    }
  } else if (kind != "linear" && kind != "worstcase" && kind != "zero") {
    config::invalid(path + ".kind", "unknown driver kind '" + kind + "' (entropic, linear, worstcase, supconv, zero)");
  }
  auto one = std::make_shared<const ScenarioTree>(basis, 1);
  DriverPtr d = build_driver(j, path, *one, reference);
  return [one, d](int, const Vector&, const Vector& z) { return d->value(1, 0, z); };
}

// ---------------------------------------------------------------------------
// Payoffs

inline bool payoff_is_markov(const Json& j) {
  const std::string kind = j.value("kind", "");
  return kind == "linear" || kind == "call" || kind == "indicator";
}

/// Payoffs that are functions of X_N.
inline MarkovTerminal markov_payoff(const Json& j, const std::string& path, int dim) {
  const std::string kind = config::text(config::need(j, "kind", path), path + ".kind");
  const Vector w = config::vector(config::need(j, "weights", path), path + ".weights", dim);
  if (kind == "linear") {
    double c = 0.0;
    if (const Json* k = config::maybe(j, "constant")) c = config::number(*k, path + ".constant");
    return [w, c](const Vector& x) { return w.dot(x) + c; };
  }
  if (kind == "call") {
    const double k = config::number(config::need(j, "strike", path), path + ".strike");
    return [w, k](const Vector& x) { return std::max(w.dot(x) - k, 0.0); };
  }
  if (kind == "indicator") {
    const double k = config::number(config::need(j, "threshold", path), path + ".threshold");
    return [w, k](const Vector& x) { return w.dot(x) >= k ? 1.0 : 0.0; };
  }
  config::invalid(path + ".kind", "payoff kind '" + kind + "' is not a function of X_N");
}

inline Slice build_payoff(const Json& j, const std::string& path, const ScenarioTree& tree) {
  const std::string kind = config::text(config::need(j, "kind", path), path + ".kind");
  if (payoff_is_markov(j)) return terminal_of_position(tree, markov_payoff(j, path, tree.dim()));
  if (kind == "variance_leg") {
    // notional * (sum_k |Delta X_{k,asset}|^2 - strike), asset counted from 1.
    long long asset = 1;
    if (const Json* a = config::maybe(j, "asset")) asset = config::integer(*a, path + ".asset");
    if (asset < 1 || asset > tree.dim()) config::invalid(path + ".asset", "must be between 1 and d");
    double notional = 1.0, strike = 0.0;
    if (const Json* n = config::maybe(j, "notional")) notional = config::number(*n, path + ".notional");
    if (const Json* s = config::maybe(j, "strike")) strike = config::number(*s, path + ".strike");
    Slice acc{0.0};
    for (int n = 1; n <= tree.horizon(); ++n) {
      Slice next(tree.nodes_at(n));
      for (std::size_t i = 0; i < next.size(); ++i) {
        const double step = tree.increment(i)[asset - 1];
        next[i] = acc[tree.parent(i)] + step * step;
      }
      acc = std::move(next);
    }
    for (double& x : acc) x = notional * (x - strike);
    return acc;
  }
  if (kind == "table") {
    if (const Json* values = config::maybe(j, "values")) {
      const Vector v = config::vector(*values, path + ".values", static_cast<Eigen::Index>(tree.leaves()));
      return Slice(v.data(), v.data() + v.size());
    }
    const Json& words = config::need(j, "by_word", path);
    if (!words.is_object()) config::invalid(path + ".by_word", "must map leaf words to numbers");
    Slice out(tree.leaves(), std::numeric_limits<double>::quiet_NaN());
    for (auto it = words.begin(); it != words.end(); ++it) {
      const std::string p = path + ".by_word." + it.key();
      int depth = 0;
      std::size_t node = 0;
      try {
        node = node_from_word_string(tree, it.key(), depth);
      } catch (const Error& e) {
        config::invalid(p, e.what());
      }
      if (depth != tree.horizon()) config::invalid(p, "must be a leaf word of length N");
      out[node] = config::number(it.value(), p);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (std::isnan(out[i])) config::invalid(path + ".by_word", "missing leaf " + tree.word_string(tree.horizon(), i));
    }
    return out;
  }
  config::invalid(path + ".kind", "unknown payoff kind '" + kind + "' (linear, call, indicator, variance_leg, table)");
}

}  // namespace lattice_bsde
