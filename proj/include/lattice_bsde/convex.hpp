#pragma once

// Convex-analytic operations on concave drivers: the Legendre transform
// b_n(theta) = sup_z {g_n(z) - z^T theta} and sup-convolutions.

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lattice_bsde/drivers.hpp"
#include "lattice_bsde/optimize.hpp"

namespace lattice_bsde {

struct LegendreOptions {
  /// Use a driver's closed-form conjugate when it has one.
  bool use_closed_form = true;
  OptimizerOptions optimizer{};
};

namespace detail {

// After divergence: the sup is infinite when phi keeps growing linearly along
// the escape ray, and finite (approached asymptotically) when it flattens out.
template <class Phi>
Extended classify_divergence(Phi&& phi, const Vector& x, double value) {
  const double ahead = phi(2.0 * x);
  if (!std::isfinite(ahead) || ahead - value > 1e-6 * x.norm()) return Extended::infinity();
  return Extended(std::max(value, ahead));
}

}  // namespace detail

/// b_n(theta) at a node. Returns +infinity off Theta (the sup diverges there
/// for balanced drivers) and wherever the ascent escapes with linear growth.
inline Extended legendre_b(const Driver& driver, int n, std::size_t node, const Vector& theta,
                           const LegendreOptions& opts = {}) {
  require(driver.traits().concave, ErrorCode::NotConcave, "Legendre transform needs a concave driver");
  if (opts.use_closed_form) {
    if (auto b = driver.conjugate(n, node, theta)) return *b;
  }
  if (!in_theta(driver.basis(), theta)) return Extended::infinity();

  auto phi = [&](const Vector& z) { return driver.value(n, node, z) - z.dot(theta); };
  Vector seed = Vector::Zero(driver.dim());
  if (auto a = driver.argmax(n, node)) seed = *a;

  if (driver.traits().has_gradient) {
    auto grad = [&](const Vector& z) { return Vector(*driver.gradient(n, node, z) - theta); };
    const AscentResult r = gradient_ascent(phi, grad, seed, opts.optimizer);
    if (r.diverged) return detail::classify_divergence(phi, r.x, r.value);
    if (r.converged || r.gradient_norm <= 1e-6) return Extended(r.value);
    // Slow convergence along a flat direction: treat like an escape.
    return detail::classify_divergence(phi, r.x, r.value);
  }
  const GridResult g = grid_maximize(phi, seed, 10.0 * seed.norm() + 10.0, opts.optimizer);
  return Extended(g.value);
}

// ---------------------------------------------------------------------------
// Sup-convolution g = g^(1) box ... box g^(m)

struct SupConvolutionOptions {
  OptimizerOptions optimizer{};
  /// Gradient norm accepted when the ascent stops short of its tolerance.
  double accept_gradient = 1e-6;
};

class SupConvolutionDriver final : public Driver {
 public:
  SupConvolutionDriver(std::vector<DriverPtr> children, SupConvolutionOptions opts = {})
      : Driver(children.empty() ? fail_empty() : children.front()->basis()),
        children_(std::move(children)),
        opts_(opts) {
    has_gradient_ = true;
    has_argmax_ = true;
    balanced_ = true;
    for (const auto& c : children_) {
      require(c->traits().concave, ErrorCode::NotConcave, "sup-convolution of a non-concave driver");
      require(c->dim() == dim(), ErrorCode::DepthMismatch, "children have different dimensions");
      has_gradient_ = has_gradient_ && c->traits().has_gradient;
      has_argmax_ = has_argmax_ && c->traits().has_argmax;
      balanced_ = balanced_ && c->traits().balanced;
    }
  }

  struct Allocation {
    std::vector<Vector> parts;  // x_1..x_m, summing to z
    double value = 0.0;
  };

  /// The maximising split of z among the children.
  Allocation allocate(int n, std::size_t node, const Vector& z) const {
    const auto m = children_.size();
    if (m == 1) return {{z}, children_[0]->value(n, node, z)};
    const int d = dim();
    const auto free_dim = static_cast<Eigen::Index>((m - 1) * static_cast<std::size_t>(d));

    auto unpack = [&](const Vector& x) {
      std::vector<Vector> parts(m);
      Vector rest = z;
      for (std::size_t i = 0; i + 1 < m; ++i) {
        parts[i] = x.segment(static_cast<Eigen::Index>(i) * d, d);
        rest -= parts[i];
      }
      parts[m - 1] = rest;
      return parts;
    };
    auto objective = [&](const Vector& x) {
      const auto parts = unpack(x);
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += children_[i]->value(n, node, parts[i]);
      return acc;
    };

    std::vector<Vector> seeds;
    Vector equal(free_dim);
    for (std::size_t i = 0; i + 1 < m; ++i) equal.segment(static_cast<Eigen::Index>(i) * d, d) = z / double(m);
    seeds.push_back(equal);
    if (has_argmax_) {
      std::vector<Vector> tops(m);
      Vector total = Vector::Zero(d);
      bool ok = true;
      for (std::size_t i = 0; i < m; ++i) {
        auto a = children_[i]->argmax(n, node);
        if (!a) {
          ok = false;
          break;
        }
        tops[i] = *a;
        total += *a;
      }
      if (ok) {
        Vector adapted(free_dim);
        const Vector spread = (z - total) / double(m);
        for (std::size_t i = 0; i + 1 < m; ++i) adapted.segment(static_cast<Eigen::Index>(i) * d, d) = tops[i] + spread;
        seeds.push_back(adapted);
      }
    }

    if (has_gradient_) {
      auto gradient = [&](const Vector& x) {
        const auto parts = unpack(x);
        const Vector last = *children_[m - 1]->gradient(n, node, parts[m - 1]);
        Vector g(free_dim);
        for (std::size_t i = 0; i + 1 < m; ++i) {
          g.segment(static_cast<Eigen::Index>(i) * d, d) = *children_[i]->gradient(n, node, parts[i]) - last;
        }
        return g;
      };
      std::optional<AscentResult> best;
      for (const Vector& seed : seeds) {
        AscentResult r = gradient_ascent(objective, gradient, seed, opts_.optimizer);
        if (!r.converged && !r.diverged) r = newton_polish(objective, gradient, r, opts_.optimizer);
        if (!best || r.value > best->value) best = std::move(r);
      }
      require(!best->diverged, ErrorCode::OptimizerFailed, "sup-convolution allocation diverged");
      require(best->converged || best->gradient_norm <= opts_.accept_gradient, ErrorCode::OptimizerFailed,
              "sup-convolution allocation did not converge (gradient norm " + std::to_string(best->gradient_norm) +
                  ")");
      return {unpack(best->x), best->value};
    }
    GridResult best{Vector(), -std::numeric_limits<double>::infinity()};
    for (const Vector& seed : seeds) {
      GridResult g = grid_maximize(objective, seed, 10.0 * z.norm() + 10.0, opts_.optimizer);
      if (g.value > best.value) best = std::move(g);
    }
    return {unpack(best.x), best.value};
  }

  double value(int n, std::size_t node, const Vector& z) const override { return allocate(n, node, z).value; }

  /// At the optimal split all children share one gradient, which is the gradient of the convolution.
  std::optional<Vector> gradient(int n, std::size_t node, const Vector& z) const override {
    if (!has_gradient_) return std::nullopt;
    const Allocation a = allocate(n, node, z);
    return children_.back()->gradient(n, node, a.parts.back());
  }

  std::optional<Vector> argmax(int n, std::size_t node) const override {
    if (!has_argmax_) return std::nullopt;
    Vector total = Vector::Zero(dim());
    for (const auto& c : children_) {
      auto a = c->argmax(n, node);
      if (!a) return std::nullopt;
      total += *a;
    }
    return total;
  }

  DriverTraits traits() const override { return {true, balanced_, has_gradient_, has_argmax_}; }
  std::string kind() const override { return "supconv"; }

  const std::vector<DriverPtr>& children() const { return children_; }

 private:
  [[noreturn]] static const Basis& fail_empty() { fail(ErrorCode::EmptySet, "sup-convolution of no drivers"); }

  std::vector<DriverPtr> children_;
  SupConvolutionOptions opts_;
  bool has_gradient_ = false;
  bool has_argmax_ = false;
  bool balanced_ = false;
};

inline DriverPtr sup_convolution(std::vector<DriverPtr> drivers, SupConvolutionOptions opts = {}) {
  require(!drivers.empty(), ErrorCode::EmptySet, "sup-convolution of no drivers");
  if (drivers.size() == 1) {
    require(drivers.front()->traits().concave, ErrorCode::NotConcave, "sup-convolution of a non-concave driver");
    return drivers.front();
  }
  return std::make_shared<SupConvolutionDriver>(std::move(drivers), opts);
}

// ---------------------------------------------------------------------------
// Closed form for entropic drivers

struct EntropicAggregate {
  EntropicSpec spec;
  /// C_n = sum_j prod_i Phat^(i)_{n,j}^{G_n / G^(i)_n}, at most 1.
  ScalarProcess normalizer;
};

struct NodeAggregate {
  Vector belief;
  double risk_aversion = 0.0;
  double shift = 1.0;
  double normalizer = 1.0;
};

/// 1/G = sum 1/G_i, Ptilde proportional to prod p_i^{G/G_i}, and the shift
/// B = C prod B_i^{G/G_i} so that -(1/G) log B collects -(1/G) log C and the
/// children's shifts.
inline NodeAggregate aggregate_entropic(const std::vector<Vector>& beliefs, const std::vector<double>& risk_aversions,
                                        const std::vector<double>& shifts) {
  NodeAggregate out;
  double inv = 0.0;
  for (double g : risk_aversions) inv += 1.0 / g;
  out.risk_aversion = 1.0 / inv;
  Vector log_mix = Vector::Zero(beliefs.front().size());
  double log_shift = 0.0;
  for (std::size_t i = 0; i < beliefs.size(); ++i) {
    const double w = out.risk_aversion / risk_aversions[i];
    log_mix += w * beliefs[i].array().log().matrix();
    log_shift += w * std::log(shifts[i]);
  }
  const Vector mix = log_mix.array().exp();
  out.normalizer = mix.sum();
  out.belief = mix / out.normalizer;
  out.shift = std::exp(log_shift) * out.normalizer;
  return out;
}

inline EntropicAggregate entropic_sup_convolution(const ScenarioTree& tree, const std::vector<EntropicSpec>& specs) {
  require(!specs.empty(), ErrorCode::EmptySet, "no entropic specs to aggregate");
  const Vector q = Vector::Constant(tree.branching(), 1.0 / tree.branching());
  EntropicAggregate out{{constant_process(tree, q), constant_process(tree, 1.0), constant_process(tree, 1.0)},
                        constant_process(tree, 1.0)};
  for (int n = 1; n <= tree.horizon(); ++n) {
    std::size_t count = 1;
    for (const auto& s : specs) {
      count = std::max({count, s.belief.stored(n), s.risk_aversion.stored(n), s.shift.stored(n)});
    }
    std::vector<Vector> beliefs(specs.size());
    std::vector<double> gammas(specs.size()), shifts(specs.size());
    for (std::size_t node = 0; node < count; ++node) {
      for (std::size_t i = 0; i < specs.size(); ++i) {
        beliefs[i] = specs[i].belief.at(n, node);
        gammas[i] = specs[i].risk_aversion.at(n, node);
        shifts[i] = specs[i].shift.at(n, node);
      }
      const NodeAggregate a = aggregate_entropic(beliefs, gammas, shifts);
      if (count == 1) {
        out.spec.belief.set_shared(n, a.belief);
        out.spec.risk_aversion.set_shared(n, a.risk_aversion);
        out.spec.shift.set_shared(n, a.shift);
        out.normalizer.set_shared(n, a.normalizer);
      } else {
        out.spec.belief.set(n, node, a.belief);
        out.spec.risk_aversion.set(n, node, a.risk_aversion);
        out.spec.shift.set(n, node, a.shift);
        out.normalizer.set(n, node, a.normalizer);
      }
    }
  }
  return out;
}

}  // namespace lattice_bsde
