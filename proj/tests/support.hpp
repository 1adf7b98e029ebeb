#pragma once

// Shared helpers for the tests: random instances and brute-force path
// enumeration used as an independent oracle for the recursive solvers.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "lattice_bsde.hpp"

namespace testing_support {

using namespace lattice_bsde;

inline Basis triangular_basis() {
  Vector v1(2), v2(2);
  v1 << 0.0, -2.0 / std::sqrt(6.0);
  v2 << std::sqrt(3.0) / std::sqrt(6.0), 1.0 / std::sqrt(6.0);
  return Basis::from_vectors({v1, v2});
}

inline Basis binomial_basis() {
  Vector v1(1);
  v1 << 1.0;
  return Basis::from_vectors({v1});
}

/// A well conditioned random basis: identity-ish generators plus noise.
inline Basis random_basis(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> normal(0.0, 0.3);
  std::vector<Vector> gens;
  for (int k = 0; k < d; ++k) {
    Vector g = Vector::Zero(d);
    g[k] = 1.0;
    for (int i = 0; i < d; ++i) g[i] += normal(rng);
    gens.push_back(g);
  }
  return Basis::from_vectors(gens);
}

inline Vector random_simplex(std::mt19937_64& rng, int size, double floor = 0.05) {
  std::uniform_real_distribution<double> u(floor, 1.0);
  Vector p(size);
  for (int j = 0; j < size; ++j) p[j] = u(rng);
  return p / p.sum();
}

inline Slice random_slice(std::mt19937_64& rng, std::size_t size, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Slice s(size);
  for (double& x : s) x = normal(rng);
  return s;
}

inline Vector random_vector(std::mt19937_64& rng, int size, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(size);
  for (int i = 0; i < size; ++i) v[i] = normal(rng);
  return v;
}

/// A random point of Theta well inside it.
inline Vector random_theta(std::mt19937_64& rng, const Basis& basis) {
  return basis.vectors() * random_simplex(rng, basis.branching(), 0.2);
}

/// Letters of every leaf, enumerated without the tree's index arithmetic.
inline std::vector<std::vector<int>> all_words(int branching, int horizon) {
  std::vector<std::vector<int>> out{{}};
  for (int n = 0; n < horizon; ++n) {
    std::vector<std::vector<int>> next;
    for (const auto& w : out) {
      for (int j = 0; j < branching; ++j) {
        auto c = w;
        c.push_back(j);
        next.push_back(c);
      }
    }
    out = std::move(next);
  }
  return out;
}

/// sum over paths of prob(word) * f(word), where prob multiplies kernel(step, prefix)[letter].
inline double enumerate_sum(int branching, int horizon,
                       const std::function<Vector(int, const std::vector<int>&)>& kernel,
                       const std::function<double(const std::vector<int>&)>& f) {
  double total = 0.0;
  for (const auto& w : all_words(branching, horizon)) {
    double prob = 1.0;
    std::vector<int> prefix;
    for (int n = 1; n <= horizon; ++n) {
      prob *= kernel(n, prefix)[w[static_cast<std::size_t>(n - 1)]];
      prefix.push_back(w[static_cast<std::size_t>(n - 1)]);
    }
    total += prob * f(w);
  }
  return total;
}

inline std::size_t leaf_index(int branching, const std::vector<int>& word) {
  std::size_t i = 0;
  for (int j : word) i = i * static_cast<std::size_t>(branching) + static_cast<std::size_t>(j);
  return i;
}

inline Vector position_of(const Basis& basis, const std::vector<int>& word) {
  Vector x = Vector::Zero(basis.dim());
  for (int j : word) x += basis.vectors().col(j);
  return x;
}

inline double max_abs(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace testing_support
