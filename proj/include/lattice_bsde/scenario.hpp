#pragma once

// The filtered probability space: the full (d+1)-ary path tree of depth N,
// adapted and predictable fields on it, and one-step kernels (measures).
//
// A node at depth n is the word (j_1, ..., j_n) in {0..d}^n, stored as the
// base-(d+1) integer j_1 (d+1)^{n-1} + ... + j_n. Children of node i are
// i (d+1) + j, so parent/child arithmetic is O(1) and each depth is one
// contiguous array.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lattice_bsde/errors.hpp"
#include "lattice_bsde/lattice.hpp"

namespace lattice_bsde {

using Slice = std::vector<double>;

class ScenarioTree {
 public:
  static constexpr std::size_t default_path_cap = 1'000'000;

  ScenarioTree(Basis basis, int horizon, std::size_t path_cap = default_path_cap)
      : basis_(std::move(basis)), horizon_(horizon), branching_(basis_.branching()) {
    require(horizon >= 1, ErrorCode::DepthMismatch, "horizon must be at least 1");
    sizes_.assign(static_cast<std::size_t>(horizon) + 1, 1);
    for (int n = 1; n <= horizon; ++n) {
      const std::size_t prev = sizes_[n - 1];
      if (prev > path_cap / static_cast<std::size_t>(branching_)) {
        fail(ErrorCode::TreeTooLarge, std::to_string(branching_) + "^" + std::to_string(horizon) +
                                          " paths exceed the cap of " + std::to_string(path_cap));
      }
      sizes_[n] = prev * static_cast<std::size_t>(branching_);
    }
    if (sizes_.back() > path_cap) {
      fail(ErrorCode::TreeTooLarge, std::to_string(branching_) + "^" + std::to_string(horizon) +
                                        " paths exceed the cap of " + std::to_string(path_cap));
    }
  }

  const Basis& basis() const { return basis_; }
  int dim() const { return basis_.dim(); }
  int horizon() const { return horizon_; }
  int branching() const { return branching_; }
  std::size_t nodes_at(int depth) const { return sizes_.at(static_cast<std::size_t>(depth)); }
  std::size_t leaves() const { return sizes_.back(); }

  std::size_t child(std::size_t node, int letter) const {
    return node * static_cast<std::size_t>(branching_) + static_cast<std::size_t>(letter);
  }
  std::size_t parent(std::size_t node) const { return node / static_cast<std::size_t>(branching_); }
  int last_letter(std::size_t node) const {
    return static_cast<int>(node % static_cast<std::size_t>(branching_));
  }

  /// Depth of a slice from its size; DepthMismatch if the size is not a power of d+1 up to N.
  int depth_of(std::size_t slice_size) const {
    for (int n = 0; n <= horizon_; ++n) {
      if (sizes_[n] == slice_size) return n;
    }
    fail(ErrorCode::DepthMismatch, "slice of size " + std::to_string(slice_size) + " matches no depth");
  }

  std::vector<int> word(int depth, std::size_t node) const {
    std::vector<int> letters(static_cast<std::size_t>(depth));
    for (int k = depth - 1; k >= 0; --k) {
      letters[k] = last_letter(node);
      node = parent(node);
    }
    return letters;
  }

  /// Letters as decimal digits, "-" for the root.
  std::string word_string(int depth, std::size_t node) const {
    if (depth == 0) return "-";
    std::string out;
    for (int letter : word(depth, node)) {
      if (branching_ <= 10) {
        out.push_back(static_cast<char>('0' + letter));
      } else {
        if (!out.empty()) out.push_back('.');
        out += std::to_string(letter);
      }
    }
    return out;
  }

  std::size_t node_from_word(const std::vector<int>& letters) const {
    std::size_t node = 0;
    for (int letter : letters) {
      require(letter >= 0 && letter < branching_, ErrorCode::DepthMismatch, "letter out of range");
      node = child(node, letter);
    }
    return node;
  }

  /// Multiplicities (n_0, ..., n_d) of the letters along the path.
  std::vector<int> letter_counts(int depth, std::size_t node) const {
    std::vector<int> counts(static_cast<std::size_t>(branching_), 0);
    for (int k = 0; k < depth; ++k) {
      ++counts[last_letter(node)];
      node = parent(node);
    }
    return counts;
  }

  /// X_n at the node, computed as sum_j n_j v_j from the letter counts so that
  /// recombining paths give bitwise identical coordinates.
  Vector position(int depth, std::size_t node) const {
    const auto counts = letter_counts(depth, node);
    Vector x = Vector::Zero(dim());
    for (int j = 0; j < branching_; ++j) {
      if (counts[j] != 0) x += static_cast<double>(counts[j]) * basis_.vertex(j);
    }
    return x;
  }

  /// Delta X_n = v_{j_n} at a depth-n node.
  Vector increment(std::size_t node) const { return basis_.vertex(last_letter(node)); }

 private:
  Basis basis_;
  int horizon_;
  int branching_;
  std::vector<std::size_t> sizes_;
};

/// One value per node for each depth 0..m. slices[n] is the F_n-measurable slice.
struct AdaptedField {
  std::vector<Slice> slices;

  int horizon() const { return static_cast<int>(slices.size()) - 1; }
  const Slice& at(int depth) const { return slices.at(static_cast<std::size_t>(depth)); }
  Slice& at(int depth) { return slices.at(static_cast<std::size_t>(depth)); }
};

/// Values indexed by time n = 1..N and by a node at depth n-1.
///
/// A time slice may hold a single shared value (a deterministic coordinate);
/// at() then returns it for every node. set() expands a shared slice to per-node
/// storage on first write.
template <class T>
class PredictableField {
 public:
  PredictableField() = default;

  /// Per-node storage filled with value.
  PredictableField(const ScenarioTree& tree, const T& value)
      : branching_(tree.branching()), times_(static_cast<std::size_t>(tree.horizon())) {
    for (int n = 1; n <= tree.horizon(); ++n) times_[n - 1].assign(tree.nodes_at(n - 1), value);
  }

  /// Per-node storage for times 1..horizon only (horizon <= tree horizon).
  PredictableField(const ScenarioTree& tree, int horizon, const T& value)
      : branching_(tree.branching()), times_(static_cast<std::size_t>(horizon)) {
    require(horizon >= 0 && horizon <= tree.horizon(), ErrorCode::DepthMismatch, "field horizon exceeds the tree");
    for (int n = 1; n <= horizon; ++n) times_[n - 1].assign(tree.nodes_at(n - 1), value);
  }

  /// Shared per-time values; per_time[n-1] is the time-n coordinate.
  static PredictableField deterministic(int branching, std::vector<T> per_time) {
    PredictableField f;
    f.branching_ = branching;
    f.times_.resize(per_time.size());
    for (std::size_t k = 0; k < per_time.size(); ++k) f.times_[k] = {std::move(per_time[k])};
    return f;
  }

  static PredictableField constant(int branching, int horizon, const T& value) {
    return deterministic(branching, std::vector<T>(static_cast<std::size_t>(horizon), value));
  }

  int horizon() const { return static_cast<int>(times_.size()); }

  bool is_shared(int n) const { return times_.at(static_cast<std::size_t>(n - 1)).size() == 1; }

  /// True when every time slice is shared (no dependence on the node).
  bool is_deterministic() const {
    for (std::size_t k = 0; k < times_.size(); ++k) {
      if (times_[k].size() != 1) return false;
    }
    return true;
  }

  const T& at(int n, std::size_t node) const {
    const auto& slice = times_.at(static_cast<std::size_t>(n - 1));
    return slice.size() == 1 ? slice[0] : slice.at(node);
  }

  void set(int n, std::size_t node, const T& value) {
    auto& slice = times_.at(static_cast<std::size_t>(n - 1));
    const std::size_t full = nodes_before(n);
    if (slice.size() != full) {
      const T fill = slice.empty() ? value : slice[0];
      slice.assign(full, fill);
    }
    slice.at(node) = value;
  }

  /// Makes the time-n coordinate a single shared value.
  void set_shared(int n, const T& value) { times_.at(static_cast<std::size_t>(n - 1)) = {value}; }

  /// Number of stored entries at time n (1 when shared).
  std::size_t stored(int n) const { return times_.at(static_cast<std::size_t>(n - 1)).size(); }

  int branching() const { return branching_; }

 private:
  std::size_t nodes_before(int n) const {
    std::size_t count = 1;
    for (int k = 1; k < n; ++k) count *= static_cast<std::size_t>(branching_);
    return count;
  }

  int branching_ = 2;
  std::vector<std::vector<T>> times_;
};

using ScalarProcess = PredictableField<double>;
using VectorProcess = PredictableField<Vector>;

inline ScalarProcess constant_process(const ScenarioTree& tree, double value) {
  return ScalarProcess::constant(tree.branching(), tree.horizon(), value);
}

inline VectorProcess constant_process(const ScenarioTree& tree, const Vector& value) {
  return VectorProcess::constant(tree.branching(), tree.horizon(), value);
}

/// A measure on F_N given by its one-step conditional kernels P_{n, .} in the simplex.
class Measure {
 public:
  explicit Measure(VectorProcess kernel) : kernel_(std::move(kernel)) {}

  Measure(const ScenarioTree& tree, VectorProcess kernel) : kernel_(std::move(kernel)) { validate(tree); }

  const Vector& kernel(int n, std::size_t node) const { return kernel_.at(n, node); }
  const VectorProcess& kernels() const { return kernel_; }

  void validate(const ScenarioTree& tree, double tol = tolerance::simplex) const {
    require(kernel_.horizon() == tree.horizon(), ErrorCode::DepthMismatch, "kernel horizon differs from tree");
    for (int n = 1; n <= tree.horizon(); ++n) {
      const std::size_t count = kernel_.stored(n);
      for (std::size_t i = 0; i < count; ++i) {
        const Vector& p = kernel_.at(n, i);
        require(p.size() == tree.branching() && is_simplex(p, tol), ErrorCode::NonEquivalent,
                "kernel at time " + std::to_string(n) + " is not a probability vector");
      }
    }
  }

  bool is_interior(const ScenarioTree& tree, double eps = tolerance::interior) const {
    for (int n = 1; n <= tree.horizon(); ++n) {
      for (std::size_t i = 0; i < kernel_.stored(n); ++i) {
        if (kernel_.at(n, i).minCoeff() < eps) return false;
      }
    }
    return true;
  }

 private:
  VectorProcess kernel_;
};

/// The unique martingale measure: uniform kernel 1/(d+1) at every node.
inline Measure martingale_measure(const ScenarioTree& tree) {
  return Measure(constant_process(tree, Vector::Constant(tree.branching(), 1.0 / tree.branching())));
}

inline Measure measure_from_kernel(const ScenarioTree& tree, const Vector& p) {
  return Measure(tree, constant_process(tree, p));
}

/// E[field | F_to] under the measure, for a slice at depth from >= to.
inline Slice conditional_expectation(const ScenarioTree& tree, const Measure& measure, Slice values,
                                     int to_depth) {
  int depth = tree.depth_of(values.size());
  require(to_depth >= 0 && to_depth <= depth, ErrorCode::DepthMismatch,
          "cannot condition a depth-" + std::to_string(depth) + " field on F_" + std::to_string(to_depth));
  const int b = tree.branching();
  for (; depth > to_depth; --depth) {
    Slice parent(tree.nodes_at(depth - 1));
    for (std::size_t i = 0; i < parent.size(); ++i) {
      const Vector& p = measure.kernel(depth, i);
      double acc = 0.0;
      for (int j = 0; j < b; ++j) acc += p[j] * values[tree.child(i, j)];
      parent[i] = acc;
    }
    values = std::move(parent);
  }
  return values;
}

inline Slice conditional_expectation(const ScenarioTree& tree, const Measure& measure, const AdaptedField& field,
                                     int to_depth) {
  return conditional_expectation(tree, measure, field.at(field.horizon()), to_depth);
}

inline double expectation(const ScenarioTree& tree, const Measure& measure, const Slice& values) {
  return conditional_expectation(tree, measure, values, 0).front();
}

/// Probability of every leaf path.
inline Slice path_weights(const ScenarioTree& tree, const Measure& measure) {
  Slice weights{1.0};
  for (int n = 1; n <= tree.horizon(); ++n) {
    Slice next(tree.nodes_at(n));
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const Vector& p = measure.kernel(n, i);
      for (int j = 0; j < tree.branching(); ++j) next[tree.child(i, j)] = weights[i] * p[j];
    }
    weights = std::move(next);
  }
  return weights;
}

/// The density martingale L_n = prod_k sum_j (Phat_kj / P_kj) 1{Delta X_k = v_j}.
inline AdaptedField density(const ScenarioTree& tree, const Measure& measure, const Measure& reference) {
  AdaptedField out;
  out.slices.push_back({1.0});
  for (int n = 1; n <= tree.horizon(); ++n) {
    Slice next(tree.nodes_at(n));
    const Slice& prev = out.slices.back();
    for (std::size_t i = 0; i < prev.size(); ++i) {
      const Vector& p = measure.kernel(n, i);
      const Vector& ref = reference.kernel(n, i);
      for (int j = 0; j < tree.branching(); ++j) {
        double ratio = 0.0;
        if (ref[j] > 0.0) {
          ratio = p[j] / ref[j];
        } else if (p[j] > 0.0) {
          fail(ErrorCode::NonEquivalent, "reference kernel vanishes where the measure is positive at time " +
                                             std::to_string(n));
        }
        next[tree.child(i, j)] = prev[i] * ratio;
      }
    }
    out.slices.push_back(std::move(next));
  }
  return out;
}

/// Builds a depth-m slice from a function of (depth, node).
template <class F>
Slice make_slice(const ScenarioTree& tree, int depth, F&& f) {
  Slice out(tree.nodes_at(depth));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(i);
  return out;
}

/// Terminal payoff h(X_N).
template <class F>
Slice terminal_of_position(const ScenarioTree& tree, F&& h) {
  return make_slice(tree, tree.horizon(), [&](std::size_t i) { return h(tree.position(tree.horizon(), i)); });
}

/// sum_{i = from..N} B_i along each path, as a leaf slice.
inline Slice path_sum(const ScenarioTree& tree, const ScalarProcess& b, int from = 1) {
  Slice acc{0.0};
  for (int n = 1; n <= tree.horizon(); ++n) {
    Slice next(tree.nodes_at(n));
    for (std::size_t i = 0; i < acc.size(); ++i) {
      const double add = n >= from ? b.at(n, i) : 0.0;
      for (int j = 0; j < tree.branching(); ++j) next[tree.child(i, j)] = acc[i] + add;
    }
    acc = std::move(next);
  }
  return acc;
}

/// Gains sum_{n=1..N} pi_n^T Delta X_n along each path (the wealth W_N(0, pi)).
inline Slice stochastic_integral(const ScenarioTree& tree, const VectorProcess& pi) {
  Slice acc{0.0};
  for (int n = 1; n <= tree.horizon(); ++n) {
    Slice next(tree.nodes_at(n));
    for (std::size_t i = 0; i < acc.size(); ++i) {
      const Vector& strategy = pi.at(n, i);
      for (int j = 0; j < tree.branching(); ++j) {
        next[tree.child(i, j)] = acc[i] + strategy.dot(tree.basis().vectors().col(j));
      }
    }
    acc = std::move(next);
  }
  return acc;
}

/// Broadcasts a depth-n slice to depth m >= n (the same random variable on a finer partition).
inline Slice lift(const ScenarioTree& tree, const Slice& values, int to_depth) {
  int depth = tree.depth_of(values.size());
  require(to_depth >= depth, ErrorCode::DepthMismatch, "cannot lift to a coarser depth");
  Slice out = values;
  for (; depth < to_depth; ++depth) {
    Slice next(tree.nodes_at(depth + 1));
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (int j = 0; j < tree.branching(); ++j) next[tree.child(i, j)] = out[i];
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace lattice_bsde
