#pragma once

// Recovering the driver of a translation-invariant, filtration-consistent
// nonlinear expectation: g_n(z) = E_{n-1}(z^T Delta X_n).

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "lattice_bsde/drivers.hpp"
#include "lattice_bsde/solver.hpp"

namespace lattice_bsde {

struct ExtractionOptions {
  std::size_t spot_checks = 8;
  std::uint64_t seed = 0xe77;
  double tolerance = 1e-9;
};

namespace detail {

inline Slice random_slice(const ScenarioTree& tree, int depth, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Slice s(tree.nodes_at(depth));
  for (double& x : s) x = normal(rng);
  return s;
}

inline double max_gap(const Slice& a, const Slice& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline void spot_check(bool ok, const std::string& what, double gap) {
  if (!ok) fail(ErrorCode::InconsistentExpectation, what + " fails (gap " + std::to_string(gap) + ")");
}

}  // namespace detail

/// Spot checks of constants, tower, locality and translation on random payoffs.
inline void check_expectation(const ScenarioTree& tree, const ConditionalExpectation& op,
                              const ExtractionOptions& opts = {}) {
  std::mt19937_64 rng(opts.seed);
  const int N = tree.horizon();
  auto within = [&](double gap, const Slice& ref) {
    double scale = 1.0;
    for (double x : ref) scale = std::max(scale, std::abs(x));
    return gap <= opts.tolerance * scale;
  };
  for (std::size_t k = 0; k < opts.spot_checks; ++k) {
    std::uniform_int_distribution<int> pick(0, N);
    int m = pick(rng), n = pick(rng);
    if (n > m) std::swap(n, m);

    const double c = std::normal_distribution<double>(0.0, 3.0)(rng);
    const Slice constant(tree.nodes_at(m), c);
    const Slice got = op(constant, m, n);
    const Slice want(tree.nodes_at(n), c);
    double gap = detail::max_gap(got, want);
    detail::spot_check(within(gap, want), "constant preservation", gap);

    const Slice y = detail::random_slice(tree, N, rng);
    const Slice direct = op(y, N, n);
    const Slice nested = op(op(y, N, m), m, n);
    gap = detail::max_gap(direct, nested);
    detail::spot_check(within(gap, direct), "tower property", gap);

    // Locality with A = {one random node at depth n}.
    const std::size_t atom = std::uniform_int_distribution<std::size_t>(0, tree.nodes_at(n) - 1)(rng);
    Slice indicator(tree.nodes_at(n), 0.0);
    indicator[atom] = 1.0;
    const Slice lifted = lift(tree, indicator, N);
    Slice masked = y;
    for (std::size_t i = 0; i < masked.size(); ++i) masked[i] *= lifted[i];
    Slice local = op(masked, N, n);
    Slice expected = direct;
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] *= indicator[i];
    gap = detail::max_gap(local, expected);
    detail::spot_check(within(gap, expected), "locality", gap);

    const Slice eta = detail::random_slice(tree, n, rng);
    const Slice eta_lifted = lift(tree, eta, N);
    Slice shifted = y;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += eta_lifted[i];
    const Slice translated = op(shifted, N, n);
    Slice want_t = direct;
    for (std::size_t i = 0; i < want_t.size(); ++i) want_t[i] += eta[i];
    gap = detail::max_gap(translated, want_t);
    detail::spot_check(within(gap, want_t), "translation invariance", gap);
  }
}

/// g_n(node, z) = E_{n-1}(z^T Delta X_n) at the node. The returned driver holds
/// a reference to the tree and a copy of the operator.
inline DriverPtr extract_driver(const ScenarioTree& tree, ConditionalExpectation op,
                                const ExtractionOptions& opts = {}) {
  check_expectation(tree, op, opts);
  auto value = [&tree, op = std::move(op)](int n, std::size_t node, const Vector& z) {
    const Vector steps = tree.basis().vectors().transpose() * z;
    Slice payoff(tree.nodes_at(n));
    for (std::size_t i = 0; i < payoff.size(); ++i) payoff[i] = steps[tree.last_letter(i)];
    return op(payoff, n, n - 1).at(node);
  };
  return function_driver(tree.basis(), std::move(value));
}

}  // namespace lattice_bsde
