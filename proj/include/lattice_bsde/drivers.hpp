#pragma once

// Drivers g_n(z) of the backward equation and the checks that place them in
// the nested classes: any driver, balanced drivers, concave balanced drivers.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lattice_bsde/errors.hpp"
#include "lattice_bsde/lattice.hpp"
#include "lattice_bsde/scenario.hpp"

namespace lattice_bsde {

/// A real number or +infinity. Infinity is only ever produced by infinity().
class Extended {
 public:
  explicit Extended(double value) : value_(value), infinite_(false) {}
  static Extended infinity() {
    Extended e(0.0);
    e.infinite_ = true;
    return e;
  }
  bool is_infinite() const { return infinite_; }
  double value() const {
    require(!infinite_, ErrorCode::PenaltyDiverged, "value requested from +infinity");
    return value_;
  }

 private:
  double value_;
  bool infinite_;
};

struct DriverTraits {
  bool concave = false;
  bool balanced = false;
  bool has_gradient = false;
  bool has_argmax = false;
};

/// g_n(omega, z): time n in 1..N, a node at depth n-1, and z in R^d.
/// Implementations are immutable and their member functions are pure, so a
/// driver can be evaluated concurrently.
class Driver {
 public:
  explicit Driver(Basis basis) : basis_(std::move(basis)) {}
  virtual ~Driver() = default;

  virtual double value(int n, std::size_t node, const Vector& z) const = 0;
  virtual std::optional<Vector> gradient(int, std::size_t, const Vector&) const { return std::nullopt; }
  /// Equals the gradient for differentiable drivers.
  virtual std::optional<Vector> supergradient(int n, std::size_t node, const Vector& z) const {
    return gradient(n, node, z);
  }
  /// A maximiser of z -> g_n(z), when the family knows one.
  virtual std::optional<Vector> argmax(int, std::size_t) const { return std::nullopt; }
  /// b_n(theta) = sup_z {g_n(z) - z^T theta} when known in closed form.
  virtual std::optional<Extended> conjugate(int, std::size_t, const Vector&) const { return std::nullopt; }
  virtual DriverTraits traits() const = 0;
  virtual std::string kind() const = 0;

  const Basis& basis() const { return basis_; }
  int dim() const { return basis_.dim(); }

 private:
  Basis basis_;
};

using DriverPtr = std::shared_ptr<const Driver>;

// ---------------------------------------------------------------------------
// Locally entropic drivers

/// g_n(z) = -(1/G_n) log sum_j exp(-G_n z^T v_j) Phat_{n,j} - (1/G_n) log B_n.
struct EntropicSpec {
  VectorProcess belief;
  ScalarProcess risk_aversion;
  ScalarProcess shift;
};

inline EntropicSpec entropic_spec(const ScenarioTree& tree, const Vector& belief, double risk_aversion,
                                  double shift = 1.0) {
  return {constant_process(tree, belief), constant_process(tree, risk_aversion), constant_process(tree, shift)};
}

inline double log_sum_exp(const Vector& s) {
  const double top = s.maxCoeff();
  return top + std::log((s.array() - top).exp().sum());
}

inline double entropic_value(const Basis& basis, const Vector& belief, double risk_aversion, double shift,
                             const Vector& z) {
  const Vector exponent =
      -risk_aversion * (basis.vectors().transpose() * z) + belief.array().log().matrix();
  return -(log_sum_exp(exponent) + std::log(shift)) / risk_aversion;
}

/// The tilted kernel Phat_n(z): weights proportional to exp(-G z^T v_j) Phat_j.
inline Vector entropic_tilt(const Basis& basis, const Vector& belief, double risk_aversion, const Vector& z) {
  Vector s = -risk_aversion * (basis.vectors().transpose() * z) + belief.array().log().matrix();
  s.array() -= s.maxCoeff();
  Vector w = s.array().exp();
  return w / w.sum();
}

/// The unique maximiser (1/G) (v v^T)^{-1} v log Phat.
inline Vector entropic_argmax(const Basis& basis, const Vector& belief, double risk_aversion) {
  return basis.projector() * belief.array().log().matrix() / risk_aversion;
}

/// D_KL(q || p) = sum_j q_j log(q_j / p_j).
inline double kl_divergence(const Vector& q, const Vector& p) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < q.size(); ++j) {
    if (q[j] > 0.0) acc += q[j] * std::log(q[j] / p[j]);
  }
  return acc;
}

class EntropicDriver final : public Driver {
 public:
  EntropicDriver(const ScenarioTree& tree, EntropicSpec spec) : Driver(tree.basis()), spec_(std::move(spec)) {
    require(spec_.belief.horizon() == tree.horizon() && spec_.risk_aversion.horizon() == tree.horizon() &&
                spec_.shift.horizon() == tree.horizon(),
            ErrorCode::DepthMismatch, "entropic spec horizon differs from the tree");
    for (int n = 1; n <= tree.horizon(); ++n) {
      for (std::size_t i = 0; i < spec_.belief.stored(n); ++i) {
        const Vector& p = spec_.belief.at(n, i);
        require(p.size() == tree.branching() && is_interior_simplex(p), ErrorCode::BeliefNotInterior,
                "belief at time " + std::to_string(n) + " is not in the open simplex");
      }
      for (std::size_t i = 0; i < spec_.risk_aversion.stored(n); ++i) {
        require(spec_.risk_aversion.at(n, i) > 0.0, ErrorCode::NotConcave, "risk aversion must be positive");
      }
      for (std::size_t i = 0; i < spec_.shift.stored(n); ++i) {
        require(spec_.shift.at(n, i) > 0.0, ErrorCode::DriverEvaluationFailed, "shift B must be positive");
      }
    }
  }

  double value(int n, std::size_t node, const Vector& z) const override {
    return entropic_value(basis(), spec_.belief.at(n, node), spec_.risk_aversion.at(n, node),
                          spec_.shift.at(n, node), z);
  }

  std::optional<Vector> gradient(int n, std::size_t node, const Vector& z) const override {
    return Vector(basis().vectors() *
                  entropic_tilt(basis(), spec_.belief.at(n, node), spec_.risk_aversion.at(n, node), z));
  }

  std::optional<Vector> argmax(int n, std::size_t node) const override {
    return entropic_argmax(basis(), spec_.belief.at(n, node), spec_.risk_aversion.at(n, node));
  }

  // -(1/G) log sum e^{-G y_j} p_j = min_q {q^T y + KL(q||p)/G}, and theta = v q fixes q.
  std::optional<Extended> conjugate(int n, std::size_t node, const Vector& theta) const override {
    Vector q = barycentric(basis(), theta);
    if (q.minCoeff() < -tolerance::theta_membership) return Extended::infinity();
    q = q.cwiseMax(0.0);
    q /= q.sum();
    const double g = spec_.risk_aversion.at(n, node);
    return Extended((kl_divergence(q, spec_.belief.at(n, node)) - std::log(spec_.shift.at(n, node))) / g);
  }

  DriverTraits traits() const override { return {true, true, true, true}; }
  std::string kind() const override { return "entropic"; }

  const EntropicSpec& spec() const { return spec_; }

 private:
  EntropicSpec spec_;
};

inline DriverPtr entropic_driver(const ScenarioTree& tree, EntropicSpec spec) {
  return std::make_shared<EntropicDriver>(tree, std::move(spec));
}

// ---------------------------------------------------------------------------
// Linear drivers

/// g_n(z) = A_n^T z + B_n.
class LinearDriver final : public Driver {
 public:
  LinearDriver(const ScenarioTree& tree, VectorProcess slope, ScalarProcess shift)
      : Driver(tree.basis()), slope_(std::move(slope)), shift_(std::move(shift)) {
    require(slope_.horizon() == tree.horizon() && shift_.horizon() == tree.horizon(), ErrorCode::DepthMismatch,
            "linear driver horizon differs from the tree");
    balanced_ = true;
    zero_slope_ = true;
    for (int n = 1; n <= tree.horizon(); ++n) {
      for (std::size_t i = 0; i < slope_.stored(n); ++i) {
        const Vector& a = slope_.at(n, i);
        require(a.size() == tree.dim(), ErrorCode::DepthMismatch, "slope has wrong dimension");
        balanced_ = balanced_ && in_theta(basis(), a);
        zero_slope_ = zero_slope_ && a.isZero(0.0);
      }
    }
  }

  double value(int n, std::size_t node, const Vector& z) const override {
    return slope_.at(n, node).dot(z) + shift_.at(n, node);
  }
  std::optional<Vector> gradient(int n, std::size_t node, const Vector&) const override {
    return slope_.at(n, node);
  }
  std::optional<Vector> argmax(int n, std::size_t node) const override {
    if (!slope_.at(n, node).isZero(0.0)) return std::nullopt;
    return Vector(Vector::Zero(dim()));
  }
  std::optional<Extended> conjugate(int n, std::size_t node, const Vector& theta) const override {
    const Vector& a = slope_.at(n, node);
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((theta - a).cwiseAbs().maxCoeff() <= 1e-12 * scale) return Extended(shift_.at(n, node));
    return Extended::infinity();
  }

  DriverTraits traits() const override { return {true, balanced_, true, zero_slope_}; }
  std::string kind() const override { return "linear"; }

  const VectorProcess& slope() const { return slope_; }
  const ScalarProcess& shift() const { return shift_; }

 private:
  VectorProcess slope_;
  ScalarProcess shift_;
  bool balanced_ = false;
  bool zero_slope_ = false;
};

inline DriverPtr linear_driver(const ScenarioTree& tree, VectorProcess slope, ScalarProcess shift) {
  return std::make_shared<LinearDriver>(tree, std::move(slope), std::move(shift));
}

inline DriverPtr zero_driver(const ScenarioTree& tree) {
  return linear_driver(tree, constant_process(tree, Vector(Vector::Zero(tree.dim()))), constant_process(tree, 0.0));
}

// ---------------------------------------------------------------------------
// Worst-case drivers g_n(z) = min over a set Theta_n of z^T theta

/// theta in conv(points)? Points are columns. Enumerates subsets of at most
/// dim+1 points (Caratheodory) and solves for barycentric weights.
inline bool in_convex_hull(const Matrix& points, const Vector& theta, double tol = tolerance::theta_membership) {
  const auto m = static_cast<int>(points.cols());
  const auto d = static_cast<int>(points.rows());
  const int max_size = std::min(m, d + 1);
  const double scale = std::max({1.0, points.cwiseAbs().maxCoeff(), theta.cwiseAbs().maxCoeff()});
  std::vector<int> subset;
  std::function<bool(int)> search = [&](int start) -> bool {
    if (!subset.empty()) {
      const auto k = static_cast<Eigen::Index>(subset.size());
      Matrix system(d + 1, k);
      for (Eigen::Index c = 0; c < k; ++c) {
        system.col(c).head(d) = points.col(subset[c]);
        system(d, c) = 1.0;
      }
      Vector rhs(d + 1);
      rhs.head(d) = theta;
      rhs[d] = 1.0;
      const Vector lambda = system.colPivHouseholderQr().solve(rhs);
      if ((system * lambda - rhs).cwiseAbs().maxCoeff() <= tol * scale && lambda.minCoeff() >= -tol) return true;
    }
    if (static_cast<int>(subset.size()) == max_size) return false;
    for (int c = start; c < m; ++c) {
      subset.push_back(c);
      if (search(c + 1)) return true;
      subset.pop_back();
    }
    return false;
  };
  return search(0);
}

class WorstCaseDriver final : public Driver {
 public:
  /// Theta_n = Theta (all vertices).
  explicit WorstCaseDriver(const ScenarioTree& tree) : Driver(tree.basis()), full_(true) {}

  /// Theta_n = {v P^(1)_n, ..., v P^(m)_n}.
  WorstCaseDriver(const ScenarioTree& tree, std::vector<VectorProcess> kernels)
      : Driver(tree.basis()), full_(false), kernels_(std::move(kernels)) {
    require(!kernels_.empty(), ErrorCode::EmptySet, "worst-case driver needs at least one kernel");
    zero_inside_ = true;
    for (const auto& k : kernels_) {
      require(k.horizon() == tree.horizon(), ErrorCode::DepthMismatch, "kernel horizon differs from the tree");
      for (int n = 1; n <= tree.horizon(); ++n) {
        for (std::size_t i = 0; i < k.stored(n); ++i) {
          require(is_simplex(k.at(n, i)), ErrorCode::EmptySet, "worst-case kernel is not a probability vector");
        }
      }
    }
    for (int n = 1; n <= tree.horizon(); ++n) {
      std::size_t count = 1;
      for (const auto& k : kernels_) count = std::max(count, k.stored(n));
      for (std::size_t i = 0; i < count; ++i) {
        zero_inside_ = zero_inside_ && in_convex_hull(thetas(n, i), Vector::Zero(dim()));
      }
    }
  }

  /// Columns are the points of Theta_n at the node.
  Matrix thetas(int n, std::size_t node) const {
    if (full_) return basis().vectors();
    Matrix out(dim(), static_cast<Eigen::Index>(kernels_.size()));
    for (std::size_t k = 0; k < kernels_.size(); ++k) {
      out.col(static_cast<Eigen::Index>(k)) = basis().vectors() * kernels_[k].at(n, node);
    }
    return out;
  }

  double value(int n, std::size_t node, const Vector& z) const override {
    if (full_) return theta_min(basis(), z).value;
    return (thetas(n, node).transpose() * z).minCoeff();
  }

  std::optional<Vector> supergradient(int n, std::size_t node, const Vector& z) const override {
    const Matrix points = thetas(n, node);
    Eigen::Index best = 0;
    (points.transpose() * z).minCoeff(&best);
    return Vector(points.col(best));
  }

  std::optional<Vector> argmax(int, std::size_t) const override {
    if (!zero_inside_) return std::nullopt;
    return Vector(Vector::Zero(dim()));
  }

  std::optional<Extended> conjugate(int n, std::size_t node, const Vector& theta) const override {
    const bool inside = full_ ? in_theta(basis(), theta) : in_convex_hull(thetas(n, node), theta);
    return inside ? Extended(0.0) : Extended::infinity();
  }

  DriverTraits traits() const override { return {true, true, false, zero_inside_}; }
  std::string kind() const override { return "worstcase"; }

  bool full() const { return full_; }
  const std::vector<VectorProcess>& kernels() const { return kernels_; }

 private:
  bool full_;
  std::vector<VectorProcess> kernels_;
  bool zero_inside_ = true;  // 0 = v (1/(d+1)) lies in Theta
};

inline DriverPtr worstcase_driver(const ScenarioTree& tree) { return std::make_shared<WorstCaseDriver>(tree); }

inline DriverPtr worstcase_driver(const ScenarioTree& tree, std::vector<VectorProcess> kernels) {
  return std::make_shared<WorstCaseDriver>(tree, std::move(kernels));
}

// ---------------------------------------------------------------------------
// Adapters

/// h_n(z) = g_n(z) + B_n.
class ShiftedDriver final : public Driver {
 public:
  ShiftedDriver(DriverPtr base, ScalarProcess shift)
      : Driver(base->basis()), base_(std::move(base)), shift_(std::move(shift)) {}

  double value(int n, std::size_t node, const Vector& z) const override {
    return base_->value(n, node, z) + shift_.at(n, node);
  }
  std::optional<Vector> gradient(int n, std::size_t node, const Vector& z) const override {
    return base_->gradient(n, node, z);
  }
  std::optional<Vector> supergradient(int n, std::size_t node, const Vector& z) const override {
    return base_->supergradient(n, node, z);
  }
  std::optional<Vector> argmax(int n, std::size_t node) const override { return base_->argmax(n, node); }
  std::optional<Extended> conjugate(int n, std::size_t node, const Vector& theta) const override {
    auto b = base_->conjugate(n, node, theta);
    if (!b || b->is_infinite()) return b;
    return Extended(b->value() + shift_.at(n, node));
  }
  DriverTraits traits() const override { return base_->traits(); }
  std::string kind() const override { return "shifted(" + base_->kind() + ")"; }

 private:
  DriverPtr base_;
  ScalarProcess shift_;
};

inline DriverPtr shifted_driver(DriverPtr base, ScalarProcess shift) {
  return std::make_shared<ShiftedDriver>(std::move(base), std::move(shift));
}

/// A driver from user callables.
class FunctionDriver final : public Driver {
 public:
  using ValueFn = std::function<double(int, std::size_t, const Vector&)>;
  using GradientFn = std::function<Vector(int, std::size_t, const Vector&)>;
  using ArgmaxFn = std::function<std::optional<Vector>(int, std::size_t)>;

  FunctionDriver(Basis basis, ValueFn value, GradientFn gradient, DriverTraits traits, ArgmaxFn argmax = {},
                 std::string kind = "function")
      : Driver(std::move(basis)),
        value_(std::move(value)),
        gradient_(std::move(gradient)),
        argmax_(std::move(argmax)),
        traits_(traits),
        kind_(std::move(kind)) {
    traits_.has_gradient = static_cast<bool>(gradient_);
    traits_.has_argmax = traits_.has_argmax && static_cast<bool>(argmax_);
  }

  double value(int n, std::size_t node, const Vector& z) const override { return value_(n, node, z); }
  std::optional<Vector> gradient(int n, std::size_t node, const Vector& z) const override {
    if (!gradient_) return std::nullopt;
    return gradient_(n, node, z);
  }
  std::optional<Vector> argmax(int n, std::size_t node) const override {
    if (!argmax_) return std::nullopt;
    return argmax_(n, node);
  }
  DriverTraits traits() const override { return traits_; }
  std::string kind() const override { return kind_; }

 private:
  ValueFn value_;
  GradientFn gradient_;
  ArgmaxFn argmax_;
  DriverTraits traits_;
  std::string kind_;
};

inline DriverPtr function_driver(Basis basis, FunctionDriver::ValueFn value, FunctionDriver::GradientFn gradient = {},
                                 DriverTraits traits = {}, FunctionDriver::ArgmaxFn argmax = {}) {
  return std::make_shared<FunctionDriver>(std::move(basis), std::move(value), std::move(gradient), traits,
                                          std::move(argmax));
}

// ---------------------------------------------------------------------------
// Sampling checks

struct SamplingOptions {
  std::size_t pairs_per_node = 200;
  std::vector<double> scales{0.1, 1.0, 10.0};
  /// Nodes checked per time; evenly spaced when the slice is larger. 0 = all nodes.
  std::size_t max_nodes_per_time = 64;
  std::uint64_t seed = 0x5eed;
  double tolerance = 1e-9;
};

namespace detail {
inline std::vector<std::size_t> sample_nodes(std::size_t count, std::size_t cap) {
  std::vector<std::size_t> nodes;
  if (cap == 0 || count <= cap) {
    nodes.resize(count);
    for (std::size_t i = 0; i < count; ++i) nodes[i] = i;
    return nodes;
  }
  for (std::size_t k = 0; k < cap; ++k) nodes.push_back(k * (count - 1) / (cap - 1));
  return nodes;
}

inline Vector normal_vector(std::mt19937_64& rng, int dim, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector z(dim);
  for (int k = 0; k < dim; ++k) z[k] = normal(rng);
  return z;
}
}  // namespace detail

struct BalanceReport {
  /// min over samples of g(z2) - g(z1) - min_theta theta^T (z2 - z1).
  double worst_margin = std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  std::size_t gradient_outside_theta = 0;
  std::size_t pairs_checked = 0;
  std::size_t gradients_checked = 0;
  bool balanced() const { return violations == 0 && gradient_outside_theta == 0; }
};

/// Samples (z1, z2) pairs per node and time and reports the worst violation of
/// the balance inequality; with a gradient, also checks grad g in Theta.
inline BalanceReport check_balance(const Driver& driver, const ScenarioTree& tree, const SamplingOptions& opts = {}) {
  BalanceReport report;
  std::mt19937_64 rng(opts.seed);
  const bool with_gradient = driver.traits().has_gradient;
  for (int n = 1; n <= tree.horizon(); ++n) {
    for (std::size_t node : detail::sample_nodes(tree.nodes_at(n - 1), opts.max_nodes_per_time)) {
      for (std::size_t k = 0; k < opts.pairs_per_node; ++k) {
        const double scale = opts.scales[k % opts.scales.size()];
        const Vector z1 = detail::normal_vector(rng, tree.dim(), scale);
        const Vector z2 = detail::normal_vector(rng, tree.dim(), scale);
        const double margin =
            driver.value(n, node, z2) - driver.value(n, node, z1) - theta_min(tree.basis(), z2 - z1).value;
        report.worst_margin = std::min(report.worst_margin, margin);
        if (margin < -opts.tolerance) ++report.violations;
        ++report.pairs_checked;
        if (with_gradient) {
          if (auto g = driver.gradient(n, node, z1); g && !in_theta(tree.basis(), *g)) ++report.gradient_outside_theta;
          ++report.gradients_checked;
        }
      }
    }
  }
  return report;
}

struct GradientReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  bool passed(double tol = 1e-5) const { return max_relative_error <= tol; }
};

/// Central finite differences with step h against the analytic gradient.
inline GradientReport check_gradient(const Driver& driver, const ScenarioTree& tree, std::size_t samples_per_time = 20,
                                     std::uint64_t seed = 0x9ad, double h = 1e-5) {
  GradientReport report;
  if (!driver.traits().has_gradient) return report;
  std::mt19937_64 rng(seed);
  for (int n = 1; n <= tree.horizon(); ++n) {
    const std::size_t nodes = tree.nodes_at(n - 1);
    std::uniform_int_distribution<std::size_t> pick(0, nodes - 1);
    for (std::size_t s = 0; s < samples_per_time; ++s) {
      const std::size_t node = pick(rng);
      const Vector z = detail::normal_vector(rng, tree.dim(), 1.0);
      const Vector g = *driver.gradient(n, node, z);
      Vector fd(tree.dim());
      for (int k = 0; k < tree.dim(); ++k) {
        Vector up = z, down = z;
        up[k] += h;
        down[k] -= h;
        fd[k] = (driver.value(n, node, up) - driver.value(n, node, down)) / (2.0 * h);
      }
      const double rel = (fd - g).norm() / std::max(1.0, g.norm());
      report.max_relative_error = std::max(report.max_relative_error, rel);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace lattice_bsde
