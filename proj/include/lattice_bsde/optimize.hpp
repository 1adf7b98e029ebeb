#pragma once

// Small unconstrained maximisers for concave objectives in a handful of
// dimensions. Used for numeric Legendre transforms, sup-convolutions and
// argmax searches.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "lattice_bsde/errors.hpp"
#include "lattice_bsde/lattice.hpp"

namespace lattice_bsde {

struct OptimizerOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;
  /// Iterates beyond this norm are reported as divergence (objective unbounded above).
  double divergence_norm = 1e7;
  int grid_points = 21;
  int grid_levels = 60;
  /// Largest dimension the grid fallback accepts.
  int grid_max_dim = 3;
};

struct AscentResult {
  Vector x;
  double value = -std::numeric_limits<double>::infinity();
  double gradient_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
};

/// Damped gradient ascent with Barzilai-Borwein step lengths and Armijo
/// backtracking. objective(x) -> double, gradient(x) -> Vector.
template <class Objective, class Gradient>
AscentResult gradient_ascent(Objective&& objective, Gradient&& gradient, Vector x,
                             const OptimizerOptions& opts = {}) {
  AscentResult out;
  double fx = objective(x);
  Vector gx = gradient(x);
  double step = 1.0 / std::max(1.0, gx.norm());
  int stalls = 0;
  for (out.iterations = 0; out.iterations < opts.max_iterations; ++out.iterations) {
    const double gnorm2 = gx.squaredNorm();
    if (std::sqrt(gnorm2) <= opts.gradient_tolerance) {
      out.converged = true;
      break;
    }
    double t = step;
    Vector trial = x + t * gx;
    double ft = objective(trial);
    while (!(ft >= fx + 1e-4 * t * gnorm2) && t > 1e-30) {
      t *= 0.5;
      trial = x + t * gx;
      ft = objective(trial);
    }
    if (!(ft >= fx)) {
      // No ascent possible at machine precision: the iterate is as good as it gets.
      out.converged = std::sqrt(gnorm2) <= 1e3 * opts.gradient_tolerance;
      break;
    }
    const Vector s = trial - x;
    const Vector g_new = gradient(trial);
    const double curvature = -s.dot(g_new - gx);
    step = curvature > 0.0 ? s.squaredNorm() / curvature : 2.0 * t;
    step = std::clamp(step, 1e-12, 1e12);
    stalls = (ft - fx <= 1e-16 * std::max(1.0, std::abs(fx))) ? stalls + 1 : 0;
    x = trial;
    fx = ft;
    gx = g_new;
    if (x.norm() > opts.divergence_norm) {
      out.diverged = true;
      break;
    }
    if (stalls >= 5) {
      out.converged = gx.norm() <= 1e3 * opts.gradient_tolerance;
      break;
    }
  }
  out.x = std::move(x);
  out.value = fx;
  out.gradient_norm = gx.norm();
  return out;
}

/// Damped Newton steps with a finite-difference Hessian of the gradient. Cheap
/// in the few dimensions used here and much better than first-order steps on
/// the nearly flat tails of log-sum-exp objectives.
template <class Objective, class Gradient>
AscentResult newton_polish(Objective&& objective, Gradient&& gradient, const AscentResult& start,
                           const OptimizerOptions& opts = {}, int max_steps = 50) {
  AscentResult out = start;
  Vector x = start.x;
  double fx = objective(x);
  Vector gx = gradient(x);
  const auto dim = x.size();
  for (int it = 0; it < max_steps; ++it) {
    if (gx.norm() <= opts.gradient_tolerance) {
      out.converged = true;
      break;
    }
    const double h = 1e-5 * std::max(1.0, x.norm());
    Matrix hess(dim, dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
      Vector up = x, down = x;
      up[k] += h;
      down[k] -= h;
      hess.col(k) = (gradient(up) - gradient(down)) / (2.0 * h);
    }
    Matrix neg = -0.5 * (hess + hess.transpose());
    // Levenberg-style shift until -H is positive definite.
    double shift = 0.0;
    Eigen::LLT<Matrix> llt;
    for (int tries = 0; tries < 30; ++tries) {
      llt.compute(neg + shift * Matrix::Identity(dim, dim));
      if (llt.info() == Eigen::Success) break;
      shift = shift == 0.0 ? 1e-12 * std::max(1.0, neg.norm()) : 10.0 * shift;
    }
    if (llt.info() != Eigen::Success) break;
    const Vector dir = llt.solve(gx);
    double t = 1.0;
    Vector trial = x + dir;
    double ft = objective(trial);
    while (!(ft >= fx) && t > 1e-12) {
      t *= 0.5;
      trial = x + t * dir;
      ft = objective(trial);
    }
    if (!(ft >= fx)) break;
    const Vector g_new = gradient(trial);
    const bool progress = g_new.norm() < gx.norm() || ft > fx;
    x = trial;
    fx = ft;
    gx = g_new;
    if (!progress) break;
  }
  out.x = x;
  out.value = fx;
  out.gradient_norm = gx.norm();
  out.converged = out.converged || out.gradient_norm <= opts.gradient_tolerance;
  return out;
}

struct GridResult {
  Vector x;
  double value = -std::numeric_limits<double>::infinity();
};

/// Coarse-to-fine grid search on the box center +- half_width.
template <class Objective>
GridResult grid_maximize(Objective&& objective, const Vector& center, double half_width,
                         const OptimizerOptions& opts = {}) {
  const auto dim = static_cast<int>(center.size());
  require(dim <= opts.grid_max_dim, ErrorCode::OptimizerFailed,
          "grid search limited to " + std::to_string(opts.grid_max_dim) + " dimensions");
  GridResult best{center, objective(center)};
  if (dim == 0) return best;
  const int points = std::max(3, opts.grid_points);
  double h = half_width;
  Vector c = center;
  std::vector<int> idx(static_cast<std::size_t>(dim));
  for (int level = 0; level < opts.grid_levels && h > 1e-13; ++level) {
    std::fill(idx.begin(), idx.end(), 0);
    const double cell = 2.0 * h / (points - 1);
    while (true) {
      Vector x(dim);
      for (int k = 0; k < dim; ++k) x[k] = c[k] - h + cell * idx[k];
      const double fx = objective(x);
      if (fx > best.value) best = {x, fx};
      int k = 0;
      while (k < dim && ++idx[k] == points) idx[k++] = 0;
      if (k == dim) break;
    }
    c = best.x;
    h = 2.0 * cell;
  }
  return best;
}

}  // namespace lattice_bsde
