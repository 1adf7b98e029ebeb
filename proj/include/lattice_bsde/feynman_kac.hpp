#pragma once

// Markov case g_n(z) = f_n(X_{n-1}, z), Y_N = h(X_N): the recursion
//   u_{n-1}(x) = u_n(x) + L u_n(x) + f_n(x, (v v^T)^{-1} v N u_n(x))
// on the recombining lattice. A point reachable at time n is the multiset of
// letters, i.e. multiplicities (n_0, ..., n_d) with sum n, so there are
// C(n+d, d) of them instead of (d+1)^n tree nodes.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lattice_bsde/drivers.hpp"
#include "lattice_bsde/lattice.hpp"
#include "lattice_bsde/parallel.hpp"
#include "lattice_bsde/scenario.hpp"

namespace lattice_bsde {

using Multiplicity = std::vector<int>;

/// C(n+d, d).
inline std::size_t reachable_count(int dim, int n) {
  std::size_t c = 1;
  for (int k = 1; k <= dim; ++k) c = c * static_cast<std::size_t>(n + k) / static_cast<std::size_t>(k);
  return c;
}

/// Number of paths reaching the point: n! / (n_0! ... n_d!).
inline double lattice_multiplicity(const Multiplicity& m) {
  double out = 1.0;
  int total = 0;
  for (int c : m) {
    for (int k = 1; k <= c; ++k) out = out * static_cast<double>(++total) / static_cast<double>(k);
  }
  return out;
}

/// All multiplicity vectors of length d+1 summing to n, in lexicographic order.
inline std::vector<Multiplicity> reachable_points(int dim, int n) {
  std::vector<Multiplicity> out;
  Multiplicity m(static_cast<std::size_t>(dim) + 1, 0);
  std::function<void(int, int)> rec = [&](int slot, int left) {
    if (slot == dim) {
      m[slot] = left;
      out.push_back(m);
      return;
    }
    for (int c = 0; c <= left; ++c) {
      m[slot] = c;
      rec(slot + 1, left - c);
    }
  };
  rec(0, n);
  return out;
}

inline Vector coordinates(const Basis& basis, const Multiplicity& m) {
  Vector x = Vector::Zero(basis.dim());
  for (int j = 0; j < basis.branching(); ++j) {
    if (m[j] != 0) x += static_cast<double>(m[j]) * basis.vertex(j);
  }
  return x;
}

/// u_n on the points reachable at time n.
struct LatticeSlice {
  int time = 0;
  std::vector<Multiplicity> points;
  std::vector<Vector> coords;
  std::vector<double> values;
  std::map<Multiplicity, std::size_t> index;

  LatticeSlice() = default;
  LatticeSlice(const Basis& basis, int n) : time(n), points(reachable_points(basis.dim(), n)) {
    coords.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      coords.push_back(coordinates(basis, points[i]));
      index.emplace(points[i], i);
    }
    values.assign(points.size(), 0.0);
  }

  std::size_t find(const Multiplicity& m) const {
    auto it = index.find(m);
    if (it == index.end()) fail(ErrorCode::UnreachablePoint, "point not reachable at time " + std::to_string(time));
    return it->second;
  }
  double at(const Multiplicity& m) const { return values[find(m)]; }
};

struct Generators {
  double L = 0.0;  // (1/(d+1)) sum_j (u(x+v_j) - u(x))
  Vector N;        // (u(x+v_j) - u(x))_j
};

/// L u and N u for a function u on R^d.
inline Generators discrete_generators(const Basis& basis, const std::function<double(const Vector&)>& u,
                                      const Vector& x) {
  Generators g;
  g.N.resize(basis.branching());
  const double ux = u(x);
  for (int j = 0; j < basis.branching(); ++j) g.N[j] = u(x + basis.vertex(j)) - ux;
  g.L = g.N.mean();
  return g;
}

/// L u and N u for a lattice slice at time n, at a point reachable at time n
/// whose neighbours x + v_j are points reachable at time n+1 (next).
inline Generators discrete_generators(const LatticeSlice& current, const LatticeSlice& next, const Multiplicity& x) {
  const double ux = current.at(x);
  Generators g;
  g.N.resize(static_cast<Eigen::Index>(x.size()));
  Multiplicity child = x;
  for (std::size_t j = 0; j < x.size(); ++j) {
    ++child[j];
    g.N[static_cast<Eigen::Index>(j)] = next.at(child) - ux;
    --child[j];
  }
  g.L = g.N.mean();
  return g;
}

using MarkovTerminal = std::function<double(const Vector& x)>;
/// f_n(x, z) with x = X_{n-1}.
using MarkovDriver = std::function<double(int n, const Vector& x, const Vector& z)>;

struct MarkovSolution {
  std::vector<LatticeSlice> u;         // times 0..N
  std::vector<std::vector<Vector>> z;  // z[n-1][i]: Z_n at point i of time n-1
  std::size_t evaluated_points = 0;

  int horizon() const { return static_cast<int>(u.size()) - 1; }
};

/// Backward recursion on reachable points. u_n(x) at a time-(n-1) point is
/// never needed: it cancels in u + L u (the mean over neighbours) and in
/// (v v^T)^{-1} v N u, since v 1 = 0.
inline MarkovSolution markov_solve(const Basis& basis, int horizon, const MarkovTerminal& h, const MarkovDriver& f,
                                   const Execution& exec = {}) {
  require(horizon >= 1, ErrorCode::DepthMismatch, "horizon must be at least 1");
  MarkovSolution sol;
  sol.u.resize(static_cast<std::size_t>(horizon) + 1);
  sol.z.resize(static_cast<std::size_t>(horizon));
  std::atomic<std::size_t> counter{0};

  LatticeSlice& last = sol.u[horizon];
  last = LatticeSlice(basis, horizon);
  parallel_for(last.points.size(), exec, [&](std::size_t i) {
    last.values[i] = h(last.coords[i]);
    counter.fetch_add(1, std::memory_order_relaxed);
  });

  for (int n = horizon; n >= 1; --n) {
    const LatticeSlice& next = sol.u[n];
    LatticeSlice current(basis, n - 1);
    auto& zs = sol.z[n - 1];
    zs.assign(current.points.size(), Vector::Zero(basis.dim()));
    parallel_for(current.points.size(), exec, [&](std::size_t i) {
      Vector y(basis.branching());
      Multiplicity child = current.points[i];
      for (int j = 0; j < basis.branching(); ++j) {
        ++child[j];
        y[j] = next.at(child);
        --child[j];
      }
      const AffineParts parts = affine_decompose(basis, y);
      const double g = f(n, current.coords[i], parts.slope);
      if (!std::isfinite(g)) fail(ErrorCode::DriverEvaluationFailed, "Markov driver returned a non-finite value");
      current.values[i] = parts.level + g;
      zs[i] = parts.slope;
      counter.fetch_add(1, std::memory_order_relaxed);
    });
    sol.u[n - 1] = std::move(current);
  }
  sol.evaluated_points = counter.load();
  return sol;
}

/// sum_{n=0..N} C(n+d, d).
inline std::size_t markov_point_budget(int dim, int horizon) {
  std::size_t total = 0;
  for (int n = 0; n <= horizon; ++n) total += reachable_count(dim, n);
  return total;
}

/// The path-tree driver g_n(node, z) = f_n(X_{n-1}(node), z).
inline DriverPtr markov_driver(const ScenarioTree& tree, MarkovDriver f, DriverTraits traits = {}) {
  auto value = [&tree, f = std::move(f)](int n, std::size_t node, const Vector& z) {
    return f(n, tree.position(n - 1, node), z);
  };
  return function_driver(tree.basis(), std::move(value), {}, traits);
}

inline Slice markov_terminal(const ScenarioTree& tree, const MarkovTerminal& h) {
  return terminal_of_position(tree, h);
}

/// Locally entropic Markov driver with belief p, B = 1 and risk aversion gamma e^{s^T x}.
inline MarkovDriver entropic_markov(const Basis& basis, Vector belief, double gamma, Vector slope) {
  require(is_interior_simplex(belief), ErrorCode::BeliefNotInterior, "Markov belief is not interior");
  require(gamma > 0.0, ErrorCode::NotConcave, "risk aversion must be positive");
  return [basis, belief = std::move(belief), gamma, slope = std::move(slope)](int, const Vector& x, const Vector& z) {
    const double g = slope.size() == 0 ? gamma : gamma * std::exp(slope.dot(x));
    return entropic_value(basis, belief, g, 1.0, z);
  };
}

}  // namespace lattice_bsde
