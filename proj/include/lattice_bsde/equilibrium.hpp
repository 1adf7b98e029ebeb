#pragma once

// General equilibrium of m agents trading the d assets: clearing checks,
// supply normalisation, the single-agent equilibrium belief recurrence, the
// representative agent and heterogeneous entropic beliefs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lattice_bsde/convex.hpp"
#include "lattice_bsde/drivers.hpp"
#include "lattice_bsde/feynman_kac.hpp"
#include "lattice_bsde/portfolio.hpp"
#include "lattice_bsde/solver.hpp"

namespace lattice_bsde {

struct Agent {
  DriverPtr driver;
  Slice endowment;  // H^(i), a leaf slice
  std::string name;
};

inline const EntropicDriver* as_entropic(const DriverPtr& d) { return dynamic_cast<const EntropicDriver*>(d.get()); }

struct NormalizedMarket {
  std::vector<Agent> agents;  // agent 0 carries the aggregate endowment
  VectorProcess supply;       // identically zero
  Slice aggregate;            // sum_i H^(i) + sum_n H_n^T Delta X_n
};

inline NormalizedMarket normalize_supply(const ScenarioTree& tree, const std::vector<Agent>& agents,
                                         const VectorProcess& supply) {
  require(!agents.empty(), ErrorCode::EmptySet, "market has no agents");
  NormalizedMarket out;
  out.aggregate = stochastic_integral(tree, supply);
  for (const Agent& a : agents) {
    require(a.endowment.size() == tree.leaves(), ErrorCode::DepthMismatch, "endowment must be a leaf slice");
    for (std::size_t i = 0; i < a.endowment.size(); ++i) out.aggregate[i] += a.endowment[i];
  }
  out.agents = agents;
  out.agents[0].endowment = out.aggregate;
  for (std::size_t k = 1; k < out.agents.size(); ++k) out.agents[k].endowment.assign(tree.leaves(), 0.0);
  out.supply = constant_process(tree, Vector(Vector::Zero(tree.dim())));
  return out;
}

inline VectorProcess zero_supply(const ScenarioTree& tree) {
  return constant_process(tree, Vector(Vector::Zero(tree.dim())));
}

struct EquilibriumOptions {
  double tolerance = 1e-8;
  InvestOptions invest = [] {
    InvestOptions o;
    o.certificate_samples = 0;
    return o;
  }();
};

struct EquilibriumReport {
  std::vector<InvestmentResult> agents;
  VectorProcess net_demand;  // sum_i pi^(i)_n - H_n
  double max_residual = 0.0;
  bool in_equilibrium = false;
};

inline EquilibriumReport check_equilibrium(const ScenarioTree& tree, const std::vector<Agent>& agents,
                                           const VectorProcess& supply, const EquilibriumOptions& opts = {}) {
  require(!agents.empty(), ErrorCode::EmptySet, "market has no agents");
  EquilibriumReport report;
  for (const Agent& a : agents) report.agents.push_back(optimal_invest(tree, *a.driver, a.endowment, opts.invest));
  report.net_demand = VectorProcess(tree, Vector::Zero(tree.dim()));
  for (int n = 1; n <= tree.horizon(); ++n) {
    for (std::size_t node = 0; node < tree.nodes_at(n - 1); ++node) {
      Vector net = -supply.at(n, node);
      for (const auto& r : report.agents) net += r.pi_star.at(n, node);
      report.max_residual = std::max(report.max_residual, net.cwiseAbs().maxCoeff());
      report.net_demand.set(n, node, net);
    }
  }
  report.in_equilibrium = report.max_residual < opts.tolerance;
  return report;
}

inline EquilibriumReport check_equilibrium(const ScenarioTree& tree, const std::vector<Agent>& agents,
                                           const EquilibriumOptions& opts = {}) {
  return check_equilibrium(tree, agents, zero_supply(tree), opts);
}

// ---------------------------------------------------------------------------
// Single agent

struct EquilibriumBelief {
  EntropicSpec spec;
  AdaptedField values;  // E^g_n(H) under the equilibrium driver
};

inline Vector softmax(const Vector& s) {
  Vector w = (s.array() - s.maxCoeff()).exp();
  return w / w.sum();
}

/// Phat_{n,j} proportional to exp(G_n Ybar_{n,j}), computed backward: E^g_n(H)
/// only involves the drivers after time n, which are already fixed.
inline EquilibriumBelief single_agent_equilibrium_belief(const ScenarioTree& tree, const ScalarProcess& risk_aversion,
                                                         const ScalarProcess& shift, const Slice& terminal) {
  const int N = tree.horizon();
  require(tree.depth_of(terminal.size()) == N, ErrorCode::DepthMismatch, "endowment must be a leaf slice");
  EquilibriumBelief out{{VectorProcess(tree, Vector::Constant(tree.branching(), 1.0 / tree.branching())),
                         risk_aversion, shift},
                        AdaptedField{std::vector<Slice>(static_cast<std::size_t>(N) + 1)}};
  out.values.at(N) = terminal;
  for (int n = N; n >= 1; --n) {
    const Slice& next = out.values.at(n);
    Slice current(tree.nodes_at(n - 1));
    for (std::size_t node = 0; node < current.size(); ++node) {
      const double g = risk_aversion.at(n, node);
      require(g > 0.0, ErrorCode::NotConcave, "risk aversion must be positive");
      const Vector ybar = children_of(tree, next, node);
      const Vector p = softmax(g * ybar);
      out.spec.belief.set(n, node, p);
      const AffineParts parts = affine_decompose(tree.basis(), ybar);
      current[node] = parts.level + entropic_value(tree.basis(), p, g, shift.at(n, node), parts.slope);
    }
    out.values.at(n - 1) = std::move(current);
  }
  return out;
}

/// max over paths of |dQ/dPhat - exp(-sum_n G_n (E_n - E_{n-1})) prod_n B_n|, relative to max(1, |dQ/dPhat|).
inline double radon_nikodym_gap(const ScenarioTree& tree, const EquilibriumBelief& eq) {
  const double q = 1.0 / tree.branching();
  Slice ratio{1.0}, exponent{0.0}, shifts{1.0};
  for (int n = 1; n <= tree.horizon(); ++n) {
    Slice r(tree.nodes_at(n)), e(tree.nodes_at(n)), s(tree.nodes_at(n));
    for (std::size_t node = 0; node < ratio.size(); ++node) {
      const Vector& p = eq.spec.belief.at(n, node);
      const double g = eq.spec.risk_aversion.at(n, node);
      for (int j = 0; j < tree.branching(); ++j) {
        const std::size_t c = tree.child(node, j);
        r[c] = ratio[node] * q / p[j];
        e[c] = exponent[node] - g * (eq.values.at(n)[c] - eq.values.at(n - 1)[node]);
        s[c] = shifts[node] * eq.spec.shift.at(n, node);
      }
    }
    ratio = std::move(r);
    exponent = std::move(e);
    shifts = std::move(s);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < ratio.size(); ++i) {
    const double rhs = std::exp(exponent[i]) * shifts[i];
    worst = std::max(worst, std::abs(ratio[i] - rhs) / std::max(1.0, std::abs(ratio[i])));
  }
  return worst;
}

/// For constant gamma and B = 1: max over paths of |dQ/dPhat - e^{-gamma H} / Ehat[e^{-gamma H}]| (relative).
inline double exponential_density_gap(const ScenarioTree& tree, const EquilibriumBelief& eq, double gamma,
                                       const Slice& terminal) {
  const Measure phat(eq.spec.belief);
  const Slice weights = path_weights(tree, phat);
  double norm = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) norm += weights[i] * std::exp(-gamma * terminal[i]);
  const double q = std::pow(1.0 / tree.branching(), tree.horizon());
  double worst = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double lhs = q / weights[i];
    const double rhs = std::exp(-gamma * terminal[i]) / norm;
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// General belief families f_n(z, p)

struct BeliefRoot {
  Vector p;
  bool unique = true;
};

struct BeliefFamily {
  /// f_n(z, p) at a depth-(n-1) node.
  std::function<double(int, std::size_t, const Vector&, const Vector&)> value;
  /// grad_z f_n(z, p); optional.
  std::function<Vector(int, std::size_t, const Vector&, const Vector&)> gradient;
  /// A p in the simplex with grad_z f_n(z, p) = 0, or nothing.
  std::function<std::optional<BeliefRoot>(int, std::size_t, const Vector&)> root;
};

struct GeneralEquilibrium {
  VectorProcess belief;
  VectorProcess z_dagger;
  AdaptedField values;
  DriverPtr driver;  // g_n(z) = f_n(z, Phat_n)
  std::size_t non_unique_roots = 0;
};

inline GeneralEquilibrium general_single_agent_equilibrium(const ScenarioTree& tree, const BeliefFamily& family,
                                                           const Slice& terminal) {
  const int N = tree.horizon();
  require(tree.depth_of(terminal.size()) == N, ErrorCode::DepthMismatch, "endowment must be a leaf slice");
  GeneralEquilibrium out;
  out.belief = VectorProcess(tree, Vector::Constant(tree.branching(), 1.0 / tree.branching()));
  out.z_dagger = VectorProcess(tree, Vector::Zero(tree.dim()));
  out.values.slices.resize(static_cast<std::size_t>(N) + 1);
  out.values.at(N) = terminal;
  for (int n = N; n >= 1; --n) {
    const Slice& next = out.values.at(n);
    Slice current(tree.nodes_at(n - 1));
    for (std::size_t node = 0; node < current.size(); ++node) {
      const AffineParts parts = affine_decompose(tree.basis(), children_of(tree, next, node));
      auto root = family.root(n, node, parts.slope);
      if (!root) fail(ErrorCode::NoRoot, "belief solver found no root at time " + std::to_string(n));
      if (!root->unique) ++out.non_unique_roots;
      out.belief.set(n, node, root->p);
      out.z_dagger.set(n, node, parts.slope);
      current[node] = parts.level + family.value(n, node, parts.slope, root->p);
    }
    out.values.at(n - 1) = std::move(current);
  }
  const VectorProcess belief = out.belief;
  const VectorProcess top = out.z_dagger;
  FunctionDriver::GradientFn grad;
  if (family.gradient) {
    grad = [f = family.gradient, belief](int n, std::size_t node, const Vector& z) {
      return f(n, node, z, belief.at(n, node));
    };
  }
  out.driver = std::make_shared<FunctionDriver>(
      tree.basis(),
      [f = family.value, belief](int n, std::size_t node, const Vector& z) { return f(n, node, z, belief.at(n, node)); },
      grad, DriverTraits{true, true, false, true},
      [top](int n, std::size_t node) -> std::optional<Vector> { return top.at(n, node); }, "belief-family");
  return out;
}

/// f_n(z, p) = -(1/G_n) log sum_j e^{-G_n z^T v_j} p_j - (1/G_n) log B_n. The root
/// of grad_z f = 0 is p = softmax(G_n v^T z), unique.
inline BeliefFamily entropic_family(const Basis& basis, const ScalarProcess& risk_aversion, const ScalarProcess& shift) {
  BeliefFamily f;
  f.value = [basis, risk_aversion, shift](int n, std::size_t node, const Vector& z, const Vector& p) {
    return entropic_value(basis, p, risk_aversion.at(n, node), shift.at(n, node), z);
  };
  f.gradient = [basis, risk_aversion](int n, std::size_t node, const Vector& z, const Vector& p) {
    return Vector(basis.vectors() * entropic_tilt(basis, p, risk_aversion.at(n, node), z));
  };
  f.root = [basis, risk_aversion](int n, std::size_t node, const Vector& z) -> std::optional<BeliefRoot> {
    return BeliefRoot{softmax(risk_aversion.at(n, node) * (basis.vectors().transpose() * z)), true};
  };
  return f;
}

// ---------------------------------------------------------------------------
// Markov single-agent equilibrium on the lattice

struct MarkovEquilibrium {
  MarkovSolution solution;
  std::vector<std::vector<Vector>> belief;  // belief[n-1][i]: p_n at point i of time n-1
};

/// v log p_n(x) = gamma_n(x) v N u_n(x): p_n(x) = softmax(gamma_n(x) u_n(x + v_j)).
inline MarkovEquilibrium markov_equilibrium_belief(const Basis& basis, int horizon, const MarkovTerminal& h,
                                                   const std::function<double(int, const Vector&)>& gamma) {
  MarkovEquilibrium out;
  out.solution.u.resize(static_cast<std::size_t>(horizon) + 1);
  out.solution.z.resize(static_cast<std::size_t>(horizon));
  out.belief.resize(static_cast<std::size_t>(horizon));
  LatticeSlice& last = out.solution.u[horizon];
  last = LatticeSlice(basis, horizon);
  for (std::size_t i = 0; i < last.points.size(); ++i) last.values[i] = h(last.coords[i]);
  out.solution.evaluated_points = last.points.size();
  for (int n = horizon; n >= 1; --n) {
    const LatticeSlice& next = out.solution.u[n];
    LatticeSlice current(basis, n - 1);
    auto& zs = out.solution.z[n - 1];
    auto& ps = out.belief[n - 1];
    for (std::size_t i = 0; i < current.points.size(); ++i) {
      Vector y(basis.branching());
      Multiplicity child = current.points[i];
      for (int j = 0; j < basis.branching(); ++j) {
        ++child[j];
        y[j] = next.at(child);
        --child[j];
      }
      const double g = gamma(n, current.coords[i]);
      const Vector p = softmax(g * y);
      const AffineParts parts = affine_decompose(basis, y);
      current.values[i] = parts.level + entropic_value(basis, p, g, 1.0, parts.slope);
      zs.push_back(parts.slope);
      ps.push_back(p);
      ++out.solution.evaluated_points;
    }
    out.solution.u[n - 1] = std::move(current);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Representative agent

struct RepresentativeOptions {
  EquilibriumOptions equilibrium{};
  SupConvolutionOptions supconv{};
  double tolerance = 1e-8;
};

struct RepresentativeResult {
  Agent agent;
  bool closed_form = false;
  std::optional<EntropicAggregate> aggregate;
  InvestmentResult rep;
  EquilibriumReport market;
  double z_dagger_gap = 0.0;  // max |Z_dagger(rep) - sum_i Z_dagger^(i)|
  double pi_gap = 0.0;        // max |pi*(rep) - sum_i pi^(i)|
  bool rep_in_equilibrium = false;
  bool market_in_equilibrium = false;
  bool consistent(double tol = 1e-8) const {
    return z_dagger_gap <= tol && pi_gap <= tol && rep_in_equilibrium == market_in_equilibrium;
  }
};

/// Agents are taken with zero total supply (see normalize_supply).
inline RepresentativeResult representative_agent(const ScenarioTree& tree, const std::vector<Agent>& agents,
                                                 const RepresentativeOptions& opts = {}) {
  require(!agents.empty(), ErrorCode::EmptySet, "market has no agents");
  RepresentativeResult out;
  out.agent.name = "representative";
  out.agent.endowment.assign(tree.leaves(), 0.0);
  for (const Agent& a : agents) {
    for (std::size_t i = 0; i < a.endowment.size(); ++i) out.agent.endowment[i] += a.endowment[i];
  }
  bool all_entropic = true;
  std::vector<EntropicSpec> specs;
  std::vector<DriverPtr> drivers;
  for (const Agent& a : agents) {
    drivers.push_back(a.driver);
    if (const EntropicDriver* e = as_entropic(a.driver)) {
      specs.push_back(e->spec());
    } else {
      all_entropic = false;
    }
  }
  if (agents.size() == 1) {
    out.agent.driver = agents.front().driver;
    out.closed_form = true;
  } else if (all_entropic) {
    out.aggregate = entropic_sup_convolution(tree, specs);
    out.agent.driver = entropic_driver(tree, out.aggregate->spec);
    out.closed_form = true;
  } else {
    out.agent.driver = sup_convolution(drivers, opts.supconv);
  }

  out.market = check_equilibrium(tree, agents, opts.equilibrium);
  out.rep = optimal_invest(tree, *out.agent.driver, out.agent.endowment, opts.equilibrium.invest);
  out.market_in_equilibrium = out.market.in_equilibrium;
  double rep_residual = 0.0;
  for (int n = 1; n <= tree.horizon(); ++n) {
    for (std::size_t node = 0; node < tree.nodes_at(n - 1); ++node) {
      Vector zsum = Vector::Zero(tree.dim()), pisum = Vector::Zero(tree.dim());
      for (const auto& r : out.market.agents) {
        zsum += r.z_dagger.at(n, node);
        pisum += r.pi_star.at(n, node);
      }
      out.z_dagger_gap = std::max(out.z_dagger_gap, (out.rep.z_dagger.at(n, node) - zsum).cwiseAbs().maxCoeff());
      out.pi_gap = std::max(out.pi_gap, (out.rep.pi_star.at(n, node) - pisum).cwiseAbs().maxCoeff());
      rep_residual = std::max(rep_residual, out.rep.pi_star.at(n, node).cwiseAbs().maxCoeff());
    }
  }
  out.rep_in_equilibrium = rep_residual < opts.equilibrium.tolerance;
  return out;
}

// ---------------------------------------------------------------------------
// Betting under heterogeneous beliefs

/// P2 proportional to P1^{-gamma2/gamma1}; the aggregate belief of the two agents is then uniform.
inline Vector betting_counterparty(const Vector& p1, double gamma1, double gamma2) {
  require(is_interior_simplex(p1), ErrorCode::BeliefNotInterior, "P1 must be interior");
  require(gamma1 > 0.0 && gamma2 > 0.0, ErrorCode::NotConcave, "risk aversions must be positive");
  return softmax(-(gamma2 / gamma1) * p1.array().log().matrix());
}

}  // namespace lattice_bsde
