#pragma once

// Backward induction for Delta Y_n = -g_n(Z_n) + Z_n^T Delta X_n and the
// results built on it: g-expectations, the linear closed form, translation,
// comparison and the robust representation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "lattice_bsde/convex.hpp"
#include "lattice_bsde/drivers.hpp"
#include "lattice_bsde/parallel.hpp"
#include "lattice_bsde/scenario.hpp"

namespace lattice_bsde {

struct Solution {
  AdaptedField Y;
  VectorProcess Z;

  int horizon() const { return Y.horizon(); }
  double initial() const { return Y.at(0).front(); }
};

/// Child values (Y(child 0), ..., Y(child d)) of a depth-(n-1) node.
inline Vector children_of(const ScenarioTree& tree, const Slice& next, std::size_t node) {
  Vector y(tree.branching());
  for (int j = 0; j < tree.branching(); ++j) y[j] = next[tree.child(node, j)];
  return y;
}

/// Solves with terminal condition at depth m = depth of the slice (usually N).
inline Solution solve(const ScenarioTree& tree, const Driver& driver, const Slice& terminal, const Execution& exec = {}) {
  const int m = tree.depth_of(terminal.size());
  require(driver.dim() == tree.dim(), ErrorCode::DepthMismatch, "driver and tree dimensions differ");
  Solution sol{AdaptedField{std::vector<Slice>(static_cast<std::size_t>(m) + 1)},
               VectorProcess(tree, m, Vector::Zero(tree.dim()))};
  sol.Y.at(m) = terminal;
  const Basis& basis = tree.basis();
  for (int n = m; n >= 1; --n) {
    const Slice& next = sol.Y.at(n);
    Slice current(tree.nodes_at(n - 1));
    parallel_for(current.size(), exec, [&](std::size_t node) {
      const AffineParts parts = affine_decompose(basis, children_of(tree, next, node));
      const double g = driver.value(n, node, parts.slope);
      if (!std::isfinite(g)) {
        fail(ErrorCode::DriverEvaluationFailed, driver.kind() + " driver returned a non-finite value at time " +
                                                    std::to_string(n) + ", node " + tree.word_string(n - 1, node));
      }
      current[node] = parts.level + g;
      sol.Z.set(n, node, parts.slope);
    });
    sol.Y.at(n - 1) = std::move(current);
  }
  return sol;
}

inline Slice g_expectation(const ScenarioTree& tree, const Driver& driver, const Slice& terminal, int n,
                           const Execution& exec = {}) {
  return solve(tree, driver, terminal, exec).Y.at(n);
}

/// max over nodes and times of |Delta Y_n + g_n(Z_n) - Z_n^T Delta X_n|.
inline double max_residual(const ScenarioTree& tree, const Driver& driver, const Solution& sol) {
  double worst = 0.0;
  for (int n = 1; n <= sol.horizon(); ++n) {
    const Slice& prev = sol.Y.at(n - 1);
    const Slice& next = sol.Y.at(n);
    for (std::size_t node = 0; node < prev.size(); ++node) {
      const Vector& z = sol.Z.at(n, node);
      const double g = driver.value(n, node, z);
      for (int j = 0; j < tree.branching(); ++j) {
        const double r = next[tree.child(node, j)] - prev[node] + g - z.dot(tree.basis().vertex(j));
        worst = std::max(worst, std::abs(r));
      }
    }
  }
  return worst;
}

struct ConditionalFormulas {
  /// Ybar_{n,j} = Y_n at child j of each depth-(n-1) node.
  std::vector<Vector> ybar;
  /// |Y_{n-1} - E_Q[Y_n | F_{n-1}] - g_n(Z_n)|
  double level_residual = 0.0;
  /// |Z_n - (v v^T)^{-1} v Ybar_n|
  double slope_residual = 0.0;
  /// |Z_n - (d+1) (v v^T)^{-1} E_Q[Y_n Delta X_n | F_{n-1}]|
  double covariance_residual = 0.0;
};

inline ConditionalFormulas conditional_formulas(const ScenarioTree& tree, const Driver& driver, const Solution& sol,
                                                int n) {
  require(n >= 1 && n <= sol.horizon(), ErrorCode::DepthMismatch, "time out of range");
  const Basis& basis = tree.basis();
  const double b = tree.branching();
  ConditionalFormulas out;
  const Slice& prev = sol.Y.at(n - 1);
  for (std::size_t node = 0; node < prev.size(); ++node) {
    Vector y = children_of(tree, sol.Y.at(n), node);
    const Vector& z = sol.Z.at(n, node);
    out.level_residual = std::max(out.level_residual, std::abs(prev[node] - y.mean() - driver.value(n, node, z)));
    out.slope_residual = std::max(out.slope_residual, (z - basis.projector() * y).cwiseAbs().maxCoeff());
    const Vector moment = basis.vectors() * y / b;
    out.covariance_residual = std::max(out.covariance_residual, (z - b * basis.gram_inv() * moment).cwiseAbs().maxCoeff());
    out.ybar.push_back(std::move(y));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear drivers g_n(z) = A_n^T z + B_n

/// The kernel Phat_n with v Phat_n = A_n and 1^T Phat_n = 1.
inline Measure linear_measure(const ScenarioTree& tree, const VectorProcess& slope) {
  VectorProcess kernel = constant_process(tree, Vector::Constant(tree.branching(), 1.0 / tree.branching()));
  for (int n = 1; n <= tree.horizon(); ++n) {
    for (std::size_t node = 0; node < slope.stored(n); ++node) {
      Vector p = barycentric(tree.basis(), slope.at(n, node));
      if (p.minCoeff() < -tolerance::theta_membership) {
        fail(ErrorCode::SlopeOutsideTheta, "slope at time " + std::to_string(n) + " lies outside Theta");
      }
      p = p.cwiseMax(0.0);
      if (slope.stored(n) == 1) {
        kernel.set_shared(n, p);
      } else {
        kernel.set(n, node, p);
      }
    }
  }
  return Measure(std::move(kernel));
}

/// E^g_n(Y) = Ehat[Y + sum_{i>n} B_i | F_n] with Ehat from linear_measure.
inline Solution solve_linear(const ScenarioTree& tree, const VectorProcess& slope, const ScalarProcess& shift,
                             const Slice& terminal) {
  require(tree.depth_of(terminal.size()) == tree.horizon(), ErrorCode::DepthMismatch, "terminal must be a leaf slice");
  const Measure measure = linear_measure(tree, slope);
  const int N = tree.horizon();
  Solution sol{AdaptedField{std::vector<Slice>(static_cast<std::size_t>(N) + 1)},
               VectorProcess(tree, Vector::Zero(tree.dim()))};
  sol.Y.at(N) = terminal;
  for (int n = N; n >= 1; --n) {
    const Slice& next = sol.Y.at(n);
    Slice current(tree.nodes_at(n - 1));
    for (std::size_t node = 0; node < current.size(); ++node) {
      const Vector y = children_of(tree, next, node);
      current[node] = measure.kernel(n, node).dot(y) + shift.at(n, node);
      sol.Z.set(n, node, tree.basis().projector() * y);
    }
    sol.Y.at(n - 1) = std::move(current);
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Translation

struct TranslationReport {
  Solution shifted;  // solution for h_n = g_n + B_n
  /// max_l |E^h_l(Y) - E^g_l(Y + sum_{i>l} B_i)|
  double level_gap = 0.0;
  /// max_n |Z^h_n - Z_n of E^g(Y + sum_{i>=n} B_i)|
  double slope_gap = 0.0;
};

inline TranslationReport translate(const ScenarioTree& tree, const DriverPtr& driver, const ScalarProcess& shift,
                                   const Slice& terminal, const Execution& exec = {}) {
  TranslationReport out;
  const DriverPtr h = shifted_driver(driver, shift);
  out.shifted = solve(tree, *h, terminal, exec);
  const int N = tree.horizon();
  for (int level = 0; level <= N; ++level) {
    const Slice tail = path_sum(tree, shift, level + 1);
    Slice shifted_terminal = terminal;
    for (std::size_t i = 0; i < tail.size(); ++i) shifted_terminal[i] += tail[i];
    const Solution ref = solve(tree, *driver, shifted_terminal, exec);
    const Slice& a = out.shifted.Y.at(level);
    const Slice& b = ref.Y.at(level);
    for (std::size_t i = 0; i < a.size(); ++i) out.level_gap = std::max(out.level_gap, std::abs(a[i] - b[i]));
    if (level + 1 <= N) {
      const int n = level + 1;
      for (std::size_t node = 0; node < tree.nodes_at(n - 1); ++node) {
        out.slope_gap =
            std::max(out.slope_gap, (out.shifted.Z.at(n, node) - ref.Z.at(n, node)).cwiseAbs().maxCoeff());
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison

struct CompareReport {
  /// min over all nodes and times of E^(1)_n - E^(2)_n.
  double min_margin = std::numeric_limits<double>::infinity();
  std::vector<double> min_margin_by_depth;
  std::size_t violations = 0;
  bool holds() const { return violations == 0; }
};

/// Checks E^(1)_n >= E^(2)_n - tol under the comparison hypotheses, which are
/// verified first on samples.
inline CompareReport compare(const ScenarioTree& tree, const Driver& driver1, const Driver& driver2,
                             const Slice& terminal1, const Slice& terminal2, const SamplingOptions& sampling = {},
                             double tol = 1e-10) {
  require(terminal1.size() == terminal2.size(), ErrorCode::DepthMismatch, "terminals differ in size");
  for (std::size_t i = 0; i < terminal1.size(); ++i) {
    if (terminal1[i] < terminal2[i]) {
      fail(ErrorCode::PreconditionUnverifiable, "terminal 1 is below terminal 2 at leaf " + std::to_string(i));
    }
  }
  std::mt19937_64 rng(sampling.seed);
  for (int n = 1; n <= tree.horizon(); ++n) {
    for (std::size_t node : detail::sample_nodes(tree.nodes_at(n - 1), sampling.max_nodes_per_time)) {
      for (std::size_t k = 0; k < sampling.pairs_per_node; ++k) {
        const Vector z = detail::normal_vector(rng, tree.dim(), sampling.scales[k % sampling.scales.size()]);
        if (driver1.value(n, node, z) < driver2.value(n, node, z) - sampling.tolerance) {
          fail(ErrorCode::PreconditionUnverifiable,
               "driver 1 is below driver 2 at a sampled point, time " + std::to_string(n));
        }
      }
    }
  }
  const bool balanced1 = driver1.traits().balanced && check_balance(driver1, tree, sampling).balanced();
  const bool balanced2 = !balanced1 && driver2.traits().balanced && check_balance(driver2, tree, sampling).balanced();
  require(balanced1 || balanced2, ErrorCode::PreconditionUnverifiable, "neither driver passes the balance check");

  const Solution s1 = solve(tree, driver1, terminal1);
  const Solution s2 = solve(tree, driver2, terminal2);
  CompareReport report;
  for (int n = 0; n <= s1.horizon(); ++n) {
    double depth_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s1.Y.at(n).size(); ++i) {
      const double margin = s1.Y.at(n)[i] - s2.Y.at(n)[i];
      depth_min = std::min(depth_min, margin);
      if (margin < -tol) ++report.violations;
    }
    report.min_margin_by_depth.push_back(depth_min);
    report.min_margin = std::min(report.min_margin, depth_min);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Robust representation

struct RobustOptions {
  LegendreOptions legendre{};
  double gap_threshold = 1e-6;
  std::size_t alternatives = 20;
  std::uint64_t seed = 0x0b5;
  double tolerance = 1e-9;
};

struct RobustResult {
  double value = 0.0;         // E^g_0(Y)
  Measure minimizer{VectorProcess{}};
  double expectation = 0.0;   // Ehat[Y] under the minimizer
  double penalty = 0.0;       // c^g_0(Phat)
  double gap = 0.0;           // |value - expectation - penalty|
  bool certified = false;     // gap below the threshold
  std::size_t alternatives_checked = 0;
  std::size_t alternatives_infinite = 0;
  /// min over alternatives of Ehat'[Y] + c(Phat') - value; nonnegative when the min property holds.
  double worst_alternative_margin = std::numeric_limits<double>::infinity();
};

/// Ehat[sum_i b_i(v Phat_i)] by backward recursion; +infinity propagates.
inline Extended penalty(const ScenarioTree& tree, const Driver& driver, const Measure& measure,
                        const LegendreOptions& opts = {}) {
  Slice acc(tree.leaves(), 0.0);
  for (int n = tree.horizon(); n >= 1; --n) {
    Slice prev(tree.nodes_at(n - 1));
    for (std::size_t node = 0; node < prev.size(); ++node) {
      const Vector& p = measure.kernel(n, node);
      const Extended b = legendre_b(driver, n, node, tree.basis().vectors() * p, opts);
      if (b.is_infinite()) return Extended::infinity();
      double mean = 0.0;
      for (int j = 0; j < tree.branching(); ++j) mean += p[j] * acc[tree.child(node, j)];
      prev[node] = mean + b.value();
    }
    acc = std::move(prev);
  }
  return Extended(acc.front());
}

inline RobustResult robust_representation(const ScenarioTree& tree, const Driver& driver, const Slice& terminal,
                                          const RobustOptions& opts = {}) {
  require(driver.traits().concave, ErrorCode::NotConcave, "robust representation needs a concave driver");
  const Solution sol = solve(tree, driver, terminal);
  RobustResult out;
  out.value = sol.initial();

  VectorProcess kernel(tree, Vector::Zero(tree.branching()));
  for (int n = 1; n <= tree.horizon(); ++n) {
    for (std::size_t node = 0; node < tree.nodes_at(n - 1); ++node) {
      auto grad = driver.supergradient(n, node, sol.Z.at(n, node));
      require(grad.has_value(), ErrorCode::PreconditionUnverifiable, "driver provides no supergradient");
      Vector p = barycentric(tree.basis(), *grad);
      require(p.minCoeff() >= -tolerance::theta_membership, ErrorCode::PenaltyDiverged,
              "supergradient outside Theta at time " + std::to_string(n));
      p = p.cwiseMax(0.0);
      kernel.set(n, node, p / p.sum());
    }
  }
  out.minimizer = Measure(std::move(kernel));
  out.expectation = expectation(tree, out.minimizer, terminal);
  const Extended c = penalty(tree, driver, out.minimizer, opts.legendre);
  if (c.is_infinite()) fail(ErrorCode::PenaltyDiverged, "penalty is infinite at the constructed minimizer");
  out.penalty = c.value();
  out.gap = std::abs(out.value - out.expectation - out.penalty);
  out.certified = out.gap <= opts.gap_threshold;

  std::mt19937_64 rng(opts.seed);
  std::exponential_distribution<double> draw(1.0);
  for (std::size_t k = 0; k < opts.alternatives; ++k) {
    VectorProcess alt(tree, Vector::Zero(tree.branching()));
    for (int n = 1; n <= tree.horizon(); ++n) {
      for (std::size_t node = 0; node < tree.nodes_at(n - 1); ++node) {
        Vector p(tree.branching());
        for (int j = 0; j < tree.branching(); ++j) p[j] = draw(rng);
        // Half of the alternatives are perturbations of the minimizer.
        if (k % 2 == 1) p = out.minimizer.kernel(n, node) + 0.05 * p / p.sum();
        alt.set(n, node, p / p.sum());
      }
    }
    const Measure m(std::move(alt));
    const Extended ck = penalty(tree, driver, m, opts.legendre);
    ++out.alternatives_checked;
    if (ck.is_infinite()) {
      ++out.alternatives_infinite;
      continue;
    }
    out.worst_alternative_margin =
        std::min(out.worst_alternative_margin, expectation(tree, m, terminal) + ck.value() - out.value);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinear conditional expectations as operators on slices

/// Maps a slice at depth `from` to its conditional value at depth `to` <= from.
using ConditionalExpectation = std::function<Slice(const Slice&, int from, int to)>;

inline ConditionalExpectation measure_operator(const ScenarioTree& tree, Measure measure) {
  return [&tree, measure = std::move(measure)](const Slice& values, int from, int to) {
    require(tree.depth_of(values.size()) == from, ErrorCode::DepthMismatch, "slice depth differs from `from`");
    return conditional_expectation(tree, measure, values, to);
  };
}

/// Minimum over the subtree: E^g for the worst-case driver over all of Theta.
inline ConditionalExpectation worstcase_operator(const ScenarioTree& tree) {
  return [&tree](const Slice& values, int from, int to) {
    require(tree.depth_of(values.size()) == from && to <= from && to >= 0, ErrorCode::DepthMismatch,
            "bad depths for the worst-case operator");
    Slice out = values;
    for (int depth = from; depth > to; --depth) {
      Slice parent(tree.nodes_at(depth - 1));
      for (std::size_t i = 0; i < parent.size(); ++i) {
        double lo = out[tree.child(i, 0)];
        for (int j = 1; j < tree.branching(); ++j) lo = std::min(lo, out[tree.child(i, j)]);
        parent[i] = lo;
      }
      out = std::move(parent);
    }
    return out;
  };
}

inline ConditionalExpectation g_operator(const ScenarioTree& tree, DriverPtr driver) {
  return [&tree, driver = std::move(driver)](const Slice& values, int from, int to) {
    require(tree.depth_of(values.size()) == from && to <= from && to >= 0, ErrorCode::DepthMismatch,
            "bad depths for the g-expectation operator");
    return solve(tree, *driver, values).Y.at(to);
  };
}

}  // namespace lattice_bsde
