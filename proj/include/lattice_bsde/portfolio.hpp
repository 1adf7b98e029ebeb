#pragma once

// Monetary utility maximisation: maximise E^g_0(H + W_N(0, pi)) over
// predictable strategies pi. The optimum is pi* = Z_dagger - Z_H - Z_g.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lattice_bsde/drivers.hpp"
#include "lattice_bsde/optimize.hpp"
#include "lattice_bsde/solver.hpp"

namespace lattice_bsde {

struct HedgeResult {
  double price = 0.0;  // E_Q[H]
  VectorProcess z_hedge;
};

/// H = E_Q[H] + sum_n Z^H_n^T Delta X_n: the zero-driver solution.
inline HedgeResult hedge(const ScenarioTree& tree, const Slice& terminal, const Execution& exec = {}) {
  const DriverPtr zero = zero_driver(tree);
  Solution sol = solve(tree, *zero, terminal, exec);
  return {sol.initial(), std::move(sol.Z)};
}

/// max over paths |H - price - W_N(0, Z^H)|.
inline double replication_residual(const ScenarioTree& tree, const Slice& terminal, const HedgeResult& h) {
  const Slice gains = stochastic_integral(tree, h.z_hedge);
  double worst = 0.0;
  for (std::size_t i = 0; i < terminal.size(); ++i) worst = std::max(worst, std::abs(terminal[i] - h.price - gains[i]));
  return worst;
}

/// E^g_0(H + w + W_N(0, pi)).
inline double utility_of_strategy(const ScenarioTree& tree, const Driver& driver, const Slice& terminal,
                                  const VectorProcess& pi, double initial_wealth = 0.0) {
  Slice total = stochastic_integral(tree, pi);
  for (std::size_t i = 0; i < total.size(); ++i) total[i] += terminal[i] + initial_wealth;
  return solve(tree, driver, total).initial();
}

struct InvestOptions {
  std::size_t certificate_samples = 200;
  std::uint64_t seed = 0x1a7e57;
  double certificate_tolerance = 1e-9;
  double initial_wealth = 0.0;
  OptimizerOptions optimizer{};
  /// Extra random seeds for the numeric argmax search (uniqueness probe).
  std::size_t argmax_seeds = 4;
  double uniqueness_tolerance = 1e-6;
  Execution exec{};
};

struct InvestmentResult {
  VectorProcess z_dagger;
  VectorProcess z_hedge;
  VectorProcess z_g;
  VectorProcess z_star;
  VectorProcess pi_star;
  ScalarProcess driver_at_dagger;  // g_n(Z_dagger_n)
  AdaptedField y_star;             // E_Q[H | F_n] + sum_{i>n} E_Q[g_i(Z_dagger_i) | F_n]
  double value = 0.0;              // E^g_0(H + w + W_N(0, pi*)) by an independent solve
  double identity_gap = 0.0;       // |value - w - Y*_0|
  double decomposition_gap = 0.0;  // max |Z* - Z_H - Z_g|
  bool numeric_argmax = false;
  std::size_t non_unique_argmax = 0;
  std::size_t certificate_samples = 0;
  /// min over sampled strategies of value - utility(pi); the max claim needs this >= -tol.
  double certificate_margin = std::numeric_limits<double>::infinity();
  bool certified = true;
};

struct ArgmaxSearch {
  Vector z;
  bool numeric = false;
  bool unique = true;
};

/// A maximiser of z -> g_n(z) at a node; closed form when the driver has one.
inline ArgmaxSearch find_argmax(const Driver& driver, int n, std::size_t node, const InvestOptions& opts,
                                std::mt19937_64& rng) {
  if (auto a = driver.argmax(n, node)) return {*a, false, true};
  auto objective = [&](const Vector& z) { return driver.value(n, node, z); };
  std::vector<Vector> seeds{Vector::Zero(driver.dim())};
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < opts.argmax_seeds; ++k) {
    Vector s(driver.dim());
    for (int i = 0; i < driver.dim(); ++i) s[i] = normal(rng);
    seeds.push_back(std::move(s));
  }
  std::vector<std::pair<Vector, double>> found;
  for (const Vector& seed : seeds) {
    if (driver.traits().has_gradient) {
      auto grad = [&](const Vector& z) { return *driver.gradient(n, node, z); };
      const AscentResult r = gradient_ascent(objective, grad, seed, opts.optimizer);
      if (r.diverged || !(r.converged || r.gradient_norm <= 1e-6)) {
        fail(ErrorCode::NoArgmax, driver.kind() + " driver has no maximiser at time " + std::to_string(n));
      }
      found.emplace_back(r.x, r.value);
    } else {
      const GridResult g = grid_maximize(objective, seed, 10.0 * seed.norm() + 10.0, opts.optimizer);
      found.emplace_back(g.x, g.value);
    }
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& f : found) best = std::max(best, f.second);
  // Among maximal candidates take the lowest norm.
  const double slack = opts.uniqueness_tolerance * std::max(1.0, std::abs(best));
  std::optional<Vector> pick;
  bool unique = true;
  for (const auto& f : found) {
    if (f.second < best - slack) continue;
    if (pick && (f.first - *pick).norm() > opts.uniqueness_tolerance * std::max(1.0, pick->norm())) unique = false;
    if (!pick || f.first.norm() < pick->norm()) pick = f.first;
  }
  return {*pick, true, unique};
}

inline InvestmentResult optimal_invest(const ScenarioTree& tree, const Driver& driver, const Slice& terminal,
                                       const InvestOptions& opts = {}) {
  require(tree.depth_of(terminal.size()) == tree.horizon(), ErrorCode::DepthMismatch, "endowment must be a leaf slice");
  const int N = tree.horizon();
  const Vector zero = Vector::Zero(tree.dim());
  InvestmentResult out;
  out.z_dagger = VectorProcess(tree, zero);
  out.driver_at_dagger = ScalarProcess(tree, 0.0);
  std::mt19937_64 rng(opts.seed);
  for (int n = 1; n <= N; ++n) {
    for (std::size_t node = 0; node < tree.nodes_at(n - 1); ++node) {
      const ArgmaxSearch a = find_argmax(driver, n, node, opts, rng);
      out.numeric_argmax = out.numeric_argmax || a.numeric;
      if (!a.unique) ++out.non_unique_argmax;
      out.z_dagger.set(n, node, a.z);
      out.driver_at_dagger.set(n, node, driver.value(n, node, a.z));
    }
  }

  // (Y*, Z*) solves Delta Y* = -g_n(Z_dagger_n) + Z*^T Delta X with Y*_N = H.
  const DriverPtr frozen = linear_driver(tree, constant_process(tree, zero), out.driver_at_dagger);
  Solution star = solve(tree, *frozen, terminal, opts.exec);
  out.y_star = std::move(star.Y);
  out.z_star = std::move(star.Z);
  out.z_hedge = hedge(tree, terminal, opts.exec).z_hedge;
  out.z_g = hedge(tree, path_sum(tree, out.driver_at_dagger), opts.exec).z_hedge;

  out.pi_star = VectorProcess(tree, zero);
  for (int n = 1; n <= N; ++n) {
    for (std::size_t node = 0; node < tree.nodes_at(n - 1); ++node) {
      const Vector zh = out.z_hedge.at(n, node), zg = out.z_g.at(n, node);
      out.pi_star.set(n, node, out.z_dagger.at(n, node) - zh - zg);
      out.decomposition_gap =
          std::max(out.decomposition_gap, (out.z_star.at(n, node) - zh - zg).cwiseAbs().maxCoeff());
    }
  }
  out.value = utility_of_strategy(tree, driver, terminal, out.pi_star, opts.initial_wealth);
  out.identity_gap = std::abs(out.value - opts.initial_wealth - out.y_star.at(0).front());

  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < opts.certificate_samples; ++k) {
    // Alternate between unrelated strategies and small perturbations of pi*.
    const double scale = k % 2 == 0 ? 1.0 : 0.1;
    VectorProcess pi(tree, zero);
    for (int n = 1; n <= N; ++n) {
      for (std::size_t node = 0; node < tree.nodes_at(n - 1); ++node) {
        Vector s(tree.dim());
        for (int i = 0; i < tree.dim(); ++i) s[i] = scale * normal(rng);
        pi.set(n, node, k % 2 == 0 ? s : Vector(out.pi_star.at(n, node) + s));
      }
    }
    const double u = utility_of_strategy(tree, driver, terminal, pi, opts.initial_wealth);
    out.certificate_margin = std::min(out.certificate_margin, out.value - u);
    ++out.certificate_samples;
  }
  out.certified = out.certificate_samples == 0 || out.certificate_margin >= -opts.certificate_tolerance;
  return out;
}

// ---------------------------------------------------------------------------
// Entropic closed forms

struct MertonReport {
  VectorProcess exact;   // (1/G)(v v^T)^{-1} v log Phat
  VectorProcess scaled;  // ((d+1)/G)(v v^T)^{-1} Ehat[Delta X]
  VectorProcess literal; // (1/G)(v v^T)^{-1} Ehat[Delta X]
  double scaled_gap = 0.0;
  double literal_gap = 0.0;
};

/// Z_dagger next to its first-order approximation. Near Q, log p = log q + (d+1)(p - q) + O(|p - q|^2),
/// so the approximation that matches to second order carries the factor d+1.
inline MertonReport merton_term(const ScenarioTree& tree, const EntropicSpec& spec) {
  const Vector zero = Vector::Zero(tree.dim());
  MertonReport out{VectorProcess(tree, zero), VectorProcess(tree, zero), VectorProcess(tree, zero)};
  const Basis& basis = tree.basis();
  const double b = tree.branching();
  for (int n = 1; n <= tree.horizon(); ++n) {
    for (std::size_t node = 0; node < tree.nodes_at(n - 1); ++node) {
      const Vector& p = spec.belief.at(n, node);
      const double g = spec.risk_aversion.at(n, node);
      const Vector exact = entropic_argmax(basis, p, g);
      const Vector drift = basis.gram_inv() * (basis.vectors() * p) / g;
      out.exact.set(n, node, exact);
      out.scaled.set(n, node, b * drift);
      out.literal.set(n, node, drift);
      out.scaled_gap = std::max(out.scaled_gap, (exact - b * drift).cwiseAbs().maxCoeff());
      out.literal_gap = std::max(out.literal_gap, (exact - drift).cwiseAbs().maxCoeff());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Variance swap market

inline Basis variance_swap_basis(double c) {
  require(c != 0.0, ErrorCode::SingularBasis, "variance swap scale c must be nonzero");
  Matrix v(2, 3);
  v << 0.0, 1.0, -1.0, -2.0 * c, c, c;
  return Basis::from_matrix(v);
}

struct VarianceSwapCheck {
  ScenarioTree tree;
  std::size_t nodes_checked = 0;
  std::size_t mismatches = 0;
  double max_error = 0.0;
};

/// Checks X_{n,2} = c (3 sum_{k<=n} |Delta X_{k,1}|^2 - 2n) at every node of every depth.
inline VarianceSwapCheck variance_swap_market(double c, int horizon) {
  VarianceSwapCheck out{ScenarioTree(variance_swap_basis(c), horizon)};
  const ScenarioTree& tree = out.tree;
  std::vector<double> squares{0.0};
  for (int n = 1; n <= horizon; ++n) {
    std::vector<double> next(tree.nodes_at(n));
    for (std::size_t i = 0; i < next.size(); ++i) {
      const double step = tree.increment(i)[0];
      next[i] = squares[tree.parent(i)] + step * step;
      const double x2 = tree.position(n, i)[1];
      const double expected = c * (3.0 * next[i] - 2.0 * n);
      const double err = std::abs(x2 - expected);
      out.max_error = std::max(out.max_error, err);
      if (x2 != expected) ++out.mismatches;
      ++out.nodes_checked;
    }
    squares = std::move(next);
  }
  return out;
}

}  // namespace lattice_bsde
