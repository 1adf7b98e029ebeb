// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance [output dir for the CLI runs]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "lattice_bsde/cli.hpp"
#include "support.hpp"

using namespace lattice_bsde;
using namespace testing_support;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Appends a measured quantity to the detail and folds its check into pass.
struct Tally {
  Outcome out;
  void check(bool ok, const std::string& what) {
    out.pass = out.pass && ok;
    if (!out.detail.empty()) out.detail += "; ";
    out.detail += what + (ok ? "" : " [failed]");
  }
};

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vector uniform(int size) { return Vector::Constant(size, 1.0 / size); }

double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Random SPD matrix with a floor on its spectrum.
Matrix random_spd(std::mt19937_64& rng, int d) {
  Matrix a(d, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) a(i, j) = normal(rng);
  }
  return a * a.transpose() + 0.1 * Matrix::Identity(d, d);
}

// Leaf index of word w in a tree of the given branching, and the node of its length-k prefix.
std::size_t prefix_node(int branching, const std::vector<int>& w, int k) {
  return leaf_index(branching, std::vector<int>(w.begin(), w.begin() + k));
}

// ---------------------------------------------------------------------------

Outcome affine_decomposition() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  Tally t;
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const Basis b = random_basis(rng, 1 + rep % 3);
    const Vector y = random_vector(rng, b.branching(), 3.0);
    const AffineParts parts = affine_decompose(b, y);
    worst = std::max(worst, (affine_reconstruct(b, parts.level, parts.slope) - y).cwiseAbs().maxCoeff());
  }
  t.check(worst < 1e-10, "reconstruction " + sci(worst));

  // d = 1: slope A in (-1, 1) gives the kernel ((1 - A)/2, (1 + A)/2).
  bool exact = true;
  for (int rep = 0; rep < 1000; ++rep) {
    Vector a(1);
    a << uniform_real(rng, -1.0, 1.0);
    const Vector p = barycentric(binomial_basis(), a);
    exact = exact && p[0] == (1.0 - a[0]) / 2.0 && p[1] == (1.0 + a[0]) / 2.0;
  }
  t.check(exact, std::string("binomial weights ") + (exact ? "exact" : "inexact"));
  const double elapsed = seconds_since(t0);
  t.check(elapsed < 1.0, "runtime " + sci(elapsed) + " s");
  return t.out;
}

Outcome martingale_measure_moments() {
  std::mt19937_64 rng(202);
  Tally t;
  double moment_gap = 0.0;
  for (int rep = 0; rep < 30; ++rep) {
    const int d = 1 + rep % 3;
    const ScenarioTree tree(random_basis(rng, d), 1);
    const Measure q = martingale_measure(tree);
    Vector mean = Vector::Zero(d);
    Matrix second = Matrix::Zero(d, d);
    for (int k = 0; k < d; ++k) {
      Slice xk(tree.leaves());
      for (std::size_t i = 0; i < xk.size(); ++i) xk[i] = tree.increment(i)[k];
      mean[k] = expectation(tree, q, xk);
      for (int l = 0; l < d; ++l) {
        Slice xkl(tree.leaves());
        for (std::size_t i = 0; i < xkl.size(); ++i) xkl[i] = tree.increment(i)[k] * tree.increment(i)[l];
        second(k, l) = expectation(tree, q, xkl);
      }
    }
    const Matrix v = tree.basis().vectors();
    moment_gap = std::max(moment_gap, mean.cwiseAbs().maxCoeff());
    moment_gap = std::max(moment_gap, (second - v * v.transpose() / (d + 1)).cwiseAbs().maxCoeff());
  }
  t.check(moment_gap < 1e-12, "moments " + sci(moment_gap));

  double rel = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const Matrix s = random_spd(rng, 1 + rep % 3);
    rel = std::max(rel, (Basis::from_covariance(s).gram() - s).cwiseAbs().maxCoeff() / s.cwiseAbs().maxCoeff());
  }
  t.check(rel < 1e-10, "covariance round trip " + sci(rel));
  return t.out;
}

Outcome solver_closed_forms() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(303);
  Tally t;
  double zero_gap = 0.0, entropic_gap = 0.0, linear_gap = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 1 + rep % 2, N = 1 + rep % 5;
    const ScenarioTree tree(random_basis(rng, d), N);
    const int m = d + 1;
    const Slice y = random_slice(rng, tree.leaves());
    const auto at_leaf = [&](const std::vector<int>& w) { return y[leaf_index(m, w)]; };

    const double mean = enumerate_sum(m, N, [&](int, const std::vector<int>&) { return uniform(m); }, at_leaf);
    zero_gap = std::max(zero_gap, std::abs(solve(tree, *zero_driver(tree), y).initial() - mean));

    const Vector p = random_simplex(rng, m);
    const double gamma = uniform_real(rng, 0.3, 3.0);
    const double exp_mean = enumerate_sum(m, N, [&](int, const std::vector<int>&) { return p; },
                                          [&](const std::vector<int>& w) { return std::exp(-gamma * at_leaf(w)); });
    const double ent = solve(tree, *entropic_driver(tree, entropic_spec(tree, p, gamma, 1.0)), y).initial();
    entropic_gap = std::max(entropic_gap, std::abs(ent + std::log(exp_mean) / gamma));

    // Node-dependent slope in Theta and shift; the value is the tilted mean of Y plus the shifts along the path.
    VectorProcess a(tree, Vector::Zero(d));
    ScalarProcess b(tree, 0.0);
    for (int n = 1; n <= N; ++n) {
      for (std::size_t i = 0; i < tree.nodes_at(n - 1); ++i) {
        a.set(n, i, random_theta(rng, tree.basis()));
        b.set(n, i, random_vector(rng, 1)[0]);
      }
    }
    const double oracle = enumerate_sum(
        m, N,
        [&](int n, const std::vector<int>& prefix) {
          return barycentric(tree.basis(), a.at(n, leaf_index(m, prefix)));
        },
        [&](const std::vector<int>& w) {
          double acc = at_leaf(w);
          for (int n = 1; n <= N; ++n) acc += b.at(n, prefix_node(m, w, n - 1));
          return acc;
        });
    linear_gap = std::max(linear_gap, std::abs(solve(tree, *linear_driver(tree, a, b), y).initial() - oracle));
  }
  t.check(zero_gap < 1e-12, "zero driver " + sci(zero_gap));
  t.check(entropic_gap < 1e-10, "entropic " + sci(entropic_gap));
  t.check(linear_gap < 1e-10, "linear " + sci(linear_gap));
  const double elapsed = seconds_since(t0);
  t.check(elapsed < 30.0, "runtime " + sci(elapsed) + " s");
  return t.out;
}

Outcome comparison() {
  std::mt19937_64 rng(404);
  Tally t;
  std::size_t violations = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 200; ++rep) {
    const int d = 1 + rep % 2;
    const ScenarioTree tree(random_basis(rng, d), 2 + rep % 3);
    const Vector p = random_simplex(rng, d + 1);
    const double gamma = uniform_real(rng, 0.3, 3.0);
    DriverPtr g1, g2;
    switch (rep % 3) {
      case 0:  // Jensen: the linear driver at the belief's mean dominates the entropic one.
        g1 = linear_driver(tree, constant_process(tree, Vector(tree.basis().vectors() * p)),
                           constant_process(tree, uniform_real(rng, 0.0, 0.5)));
        g2 = entropic_driver(tree, entropic_spec(tree, p, gamma, 1.0));
        break;
      case 1:  // Higher risk aversion lowers the entropic driver.
        g1 = entropic_driver(tree, entropic_spec(tree, p, gamma, 1.0));
        g2 = entropic_driver(tree, entropic_spec(tree, p, gamma * uniform_real(rng, 1.0, 3.0), 1.0));
        break;
      default:  // Larger shift lowers it too.
        g1 = entropic_driver(tree, entropic_spec(tree, p, gamma, 1.0));
        g2 = entropic_driver(tree, entropic_spec(tree, p, gamma, uniform_real(rng, 1.0, 2.0)));
    }
    const Slice y2 = random_slice(rng, tree.leaves());
    Slice y1 = y2;
    for (double& x : y1) x += rep % 2 == 0 ? std::abs(random_vector(rng, 1)[0]) : 0.0;
    SamplingOptions s;
    s.seed = static_cast<std::uint64_t>(rep);
    const CompareReport r = compare(tree, *g1, *g2, y1, y2, s, 1e-10);
    violations += r.violations;
    min_margin = std::min(min_margin, r.min_margin);
  }
  t.check(violations == 0, std::to_string(violations) + " violations, min margin " + sci(min_margin));
  return t.out;
}

Outcome robust_representation_check() {
  std::mt19937_64 rng(505);
  Tally t;
  // Finite Theta: two kernels, d = 1, N = 4. The g-expectation is the minimum over
  // every node-wise choice of kernel, 2^15 measures.
  const int N = 4;
  const ScenarioTree tree(binomial_basis(), N);
  double brute_gap = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const Vector k0 = random_simplex(rng, 2), k1 = random_simplex(rng, 2);
    const Slice y = random_slice(rng, tree.leaves());
    const double value =
        solve(tree, *worstcase_driver(tree, {constant_process(tree, k0), constant_process(tree, k1)}), y).initial();
    const std::size_t inner = (std::size_t{1} << N) - 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t mask = 0; mask < (std::size_t{1} << inner); ++mask) {
      const auto pick = [&](int n, const std::vector<int>& prefix) {
        const std::size_t slot = ((std::size_t{1} << (n - 1)) - 1) + leaf_index(2, prefix);
        return (mask >> slot) & 1U ? k1 : k0;
      };
      best = std::min(best, enumerate_sum(2, N, pick, [&](const std::vector<int>& w) { return y[leaf_index(2, w)]; }));
    }
    brute_gap = std::max(brute_gap, std::abs(value - best));
  }
  t.check(brute_gap < 1e-9, "brute force " + sci(brute_gap));

  double cert_gap = 0.0, worst_alt = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 20; ++rep) {
    const ScenarioTree et(random_basis(rng, 1 + rep % 2), 3);
    EntropicSpec spec = entropic_spec(et, random_simplex(rng, et.branching()), uniform_real(rng, 0.3, 3.0), 1.0);
    for (std::size_t i = 0; i < et.nodes_at(1); ++i) spec.belief.set(2, i, random_simplex(rng, et.branching()));
    const RobustResult r = robust_representation(et, *entropic_driver(et, spec), random_slice(rng, et.leaves()));
    cert_gap = std::max(cert_gap, r.gap);
    worst_alt = std::min(worst_alt, r.worst_alternative_margin);
  }
  t.check(cert_gap < 1e-6, "entropic certificate " + sci(cert_gap));
  t.check(worst_alt >= -1e-9, "alternatives margin " + sci(worst_alt));
  return t.out;
}

Outcome feynman_kac() {
  std::mt19937_64 rng(606);
  Tally t;
  double worst = 0.0;
  bool budget = true;
  for (int rep = 0; rep < 20; ++rep) {
    const int d = 1 + rep % 3;
    const int N = d == 1 ? 8 : (d == 2 ? 7 : 5);
    const ScenarioTree tree(random_basis(rng, d), N);
    const Vector w = random_vector(rng, d), slope = random_vector(rng, d, 0.1);
    const double strike = random_vector(rng, 1)[0];
    const MarkovTerminal h = [w, strike](const Vector& x) { return std::max(w.dot(x) - strike, 0.0) + 0.1 * std::sin(x.sum()); };
    const MarkovDriver f = rep % 4 == 3 ? MarkovDriver([](int, const Vector&, const Vector&) { return 0.0; })
                                        : entropic_markov(tree.basis(), random_simplex(rng, d + 1),
                                                          uniform_real(rng, 0.3, 2.0), slope);
    const MarkovSolution lat = markov_solve(tree.basis(), N, h, f);
    const Solution sol = solve(tree, *markov_driver(tree, f), markov_terminal(tree, h));
    for (int n = 0; n <= N; ++n) {
      for (std::size_t i = 0; i < tree.nodes_at(n); ++i) {
        const double u = lat.u[static_cast<std::size_t>(n)].at(tree.letter_counts(n, i));
        worst = std::max(worst, std::abs(u - sol.Y.at(n)[i]));
      }
    }
    budget = budget && lat.evaluated_points <= markov_point_budget(d, N);
  }
  t.check(worst < 1e-10, "lattice vs tree " + sci(worst));
  t.check(budget, std::string("point budget ") + (budget ? "respected" : "exceeded"));
  return t.out;
}

Outcome optimal_investment() {
  std::mt19937_64 rng(707);
  Tally t;
  double margin = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 10; ++rep) {
    const ScenarioTree tree(random_basis(rng, 1 + rep % 2), 3);
    EntropicSpec spec = entropic_spec(tree, random_simplex(rng, tree.branching()), uniform_real(rng, 0.3, 3.0), 1.0);
    for (std::size_t i = 0; i < tree.nodes_at(1); ++i) {
      spec.belief.set(2, i, random_simplex(rng, tree.branching()));
      spec.risk_aversion.set(2, i, uniform_real(rng, 0.3, 3.0));
    }
    InvestOptions opts;
    opts.certificate_samples = 200;
    opts.seed = static_cast<std::uint64_t>(rep);
    const InvestmentResult r = optimal_invest(tree, *entropic_driver(tree, spec), random_slice(rng, tree.leaves()), opts);
    margin = std::min(margin, r.certificate_margin);
  }
  t.check(margin >= -1e-9, "certificate margin " + sci(margin));

  // H = 0 with beliefs and risk aversions that depend on time only.
  double kl_gap = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const int d = 1 + rep % 2, N = 4;
    const ScenarioTree tree(random_basis(rng, d), N);
    EntropicSpec spec = entropic_spec(tree, uniform(d + 1), 1.0, 1.0);
    double oracle = 0.0;
    for (int n = 1; n <= N; ++n) {
      const Vector p = random_simplex(rng, d + 1);
      const double g = uniform_real(rng, 0.3, 3.0);
      for (std::size_t i = 0; i < tree.nodes_at(n - 1); ++i) {
        spec.belief.set(n, i, p);
        spec.risk_aversion.set(n, i, g);
      }
      double kl = 0.0;
      for (int j = 0; j <= d; ++j) kl += std::log((1.0 / (d + 1)) / p[j]) / (d + 1);
      oracle += kl / g;
    }
    InvestOptions opts;
    opts.certificate_samples = 0;
    const InvestmentResult r = optimal_invest(tree, *entropic_driver(tree, spec), Slice(tree.leaves(), 0.0), opts);
    kl_gap = std::max(kl_gap, std::abs(r.value - oracle));
  }
  t.check(kl_gap < 1e-10, "KL value " + sci(kl_gap));
  return t.out;
}

Outcome variance_swap() {
  const double c = 0.5;
  const int N = 6;
  const Basis b = variance_swap_basis(c);
  Tally t;
  std::size_t checked = 0, mismatches = 0;
  // Walk every path directly from the vertices.
  for (const auto& w : all_words(3, N)) {
    Vector x = Vector::Zero(2);
    double squares = 0.0;
    for (int n = 1; n <= N; ++n) {
      const Vector step = b.vertex(w[static_cast<std::size_t>(n - 1)]);
      x += step;
      squares += step[0] * step[0];
      ++checked;
      if (x[1] != c * (3.0 * squares - 2.0 * n)) ++mismatches;
    }
  }
  t.check(mismatches == 0, std::to_string(mismatches) + " mismatches over " + std::to_string(checked) + " path steps");
  const VarianceSwapCheck lib = variance_swap_market(c, N);
  t.check(lib.mismatches == 0, "library check " + std::to_string(lib.nodes_checked) + " nodes");
  return t.out;
}

Outcome equilibrium_belief() {
  std::mt19937_64 rng(909);
  Tally t;
  double clearing = 0.0, perturbed = std::numeric_limits<double>::infinity(), rn = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const ScenarioTree tree(random_basis(rng, 1 + rep % 2), 3);
    ScalarProcess g(tree, 1.0);
    for (int n = 1; n <= 3; ++n) {
      for (std::size_t i = 0; i < tree.nodes_at(n - 1); ++i) g.set(n, i, uniform_real(rng, 0.3, 3.0));
    }
    const Slice h = random_slice(rng, tree.leaves());
    const EquilibriumBelief eq = single_agent_equilibrium_belief(tree, g, constant_process(tree, 1.0), h);
    clearing = std::max(clearing, check_equilibrium(tree, {{entropic_driver(tree, eq.spec), h, "agent"}}).max_residual);
    rn = std::max(rn, radon_nikodym_gap(tree, eq));

    // Pull the belief at one node a fifth of the way toward uniform.
    EntropicSpec bent = eq.spec;
    const int n = uniform_int(rng, 1, 3);
    const std::size_t node = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(tree.nodes_at(n - 1)) - 1));
    bent.belief.set(n, node, 0.8 * bent.belief.at(n, node) + 0.2 * uniform(tree.branching()));
    perturbed = std::min(perturbed, check_equilibrium(tree, {{entropic_driver(tree, bent), h, "agent"}}).max_residual);
  }
  t.check(clearing < 1e-8, "clearing " + sci(clearing));
  t.check(perturbed > 1e-4, "perturbed min " + sci(perturbed));
  t.check(rn < 1e-9, "Radon-Nikodym " + sci(rn));
  return t.out;
}

Outcome representative_and_heterogeneity() {
  std::mt19937_64 rng(1010);
  Tally t;
  std::size_t agree = 0, in_eq = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const ScenarioTree tree(random_basis(rng, 1 + rep % 2), 2);
    const int m = 2 + rep % 2;
    std::vector<double> gammas;
    for (int k = 0; k < m; ++k) gammas.push_back(uniform_real(rng, 0.5, 3.0));
    std::vector<Slice> endow;
    for (int k = 0; k < m; ++k) endow.push_back(random_slice(rng, tree.leaves()));
    std::vector<Agent> agents;
    if (rep % 2 == 0) {
      for (int k = 0; k < m; ++k) {
        agents.push_back({entropic_driver(tree, entropic_spec(tree, random_simplex(rng, tree.branching()), gammas[k], 1.0)),
                          endow[static_cast<std::size_t>(k)], "agent"});
      }
    } else {
      // Everyone holds the equilibrium belief of the aggregate endowment.
      double inv = 0.0;
      for (double g : gammas) inv += 1.0 / g;
      Slice total(tree.leaves(), 0.0);
      for (const auto& e : endow) {
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += e[i];
      }
      const EquilibriumBelief eq =
          single_agent_equilibrium_belief(tree, constant_process(tree, 1.0 / inv), constant_process(tree, 1.0), total);
      for (int k = 0; k < m; ++k) {
        EntropicSpec spec{eq.spec.belief, constant_process(tree, gammas[k]), constant_process(tree, 1.0)};
        agents.push_back({entropic_driver(tree, spec), endow[static_cast<std::size_t>(k)], "agent"});
      }
    }
    const RepresentativeResult r = representative_agent(tree, agents);
    agree += r.rep_in_equilibrium == r.market_in_equilibrium ? 1 : 0;
    in_eq += r.market_in_equilibrium ? 1 : 0;
  }
  t.check(agree == 50 && in_eq > 0 && in_eq < 50,
          "flags agree " + std::to_string(agree) + "/50 (" + std::to_string(in_eq) + " in equilibrium)");

  double closed_vs_numeric = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const ScenarioTree tree(random_basis(rng, 1 + rep % 2), 1);
    std::vector<EntropicSpec> specs;
    std::vector<DriverPtr> drivers;
    for (int k = 0; k < 2 + rep % 2; ++k) {
      specs.push_back(entropic_spec(tree, random_simplex(rng, tree.branching()), uniform_real(rng, 0.5, 3.0), 1.0));
      drivers.push_back(entropic_driver(tree, specs.back()));
    }
    const DriverPtr closed = entropic_driver(tree, entropic_sup_convolution(tree, specs).spec);
    const DriverPtr numeric = sup_convolution(drivers);
    for (int k = 0; k < 5; ++k) {
      const Vector z = random_vector(rng, tree.dim());
      closed_vs_numeric = std::max(closed_vs_numeric, std::abs(closed->value(1, 0, z) - numeric->value(1, 0, z)));
    }
  }
  t.check(closed_vs_numeric < 1e-6, "closed form vs numeric " + sci(closed_vs_numeric));

  double top = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int size = uniform_int(rng, 2, 4), m = uniform_int(rng, 2, 4);
    std::vector<Vector> beliefs;
    std::vector<double> gammas, shifts;
    for (int k = 0; k < m; ++k) {
      beliefs.push_back(random_simplex(rng, size, rep % 10 == 0 ? 0.0 : 0.05));
      gammas.push_back(uniform_real(rng, 0.1, 10.0));
      shifts.push_back(1.0);
    }
    if (rep % 7 == 0) beliefs.assign(static_cast<std::size_t>(m), beliefs.front());
    top = std::max(top, aggregate_entropic(beliefs, gammas, shifts).normalizer);
  }
  t.check(top <= 1.0 + 1e-12, "max normalizer " + sci(top));

  bool betting = true;
  double smallest = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 10; ++rep) {
    const ScenarioTree tree(random_basis(rng, 1 + rep % 2), 3);
    const double g1 = uniform_real(rng, 0.5, 3.0), g2 = uniform_real(rng, 0.5, 3.0);
    const Vector p1 = random_simplex(rng, tree.branching(), 0.1);
    const Vector p2 = betting_counterparty(p1, g1, g2);
    const Slice zero(tree.leaves(), 0.0);
    const EquilibriumReport r = check_equilibrium(tree, {{entropic_driver(tree, entropic_spec(tree, p1, g1, 1.0)), zero, "1"},
                                                         {entropic_driver(tree, entropic_spec(tree, p2, g2, 1.0)), zero, "2"}});
    betting = betting && r.in_equilibrium;
    for (int n = 1; n <= 3; ++n) {
      for (std::size_t i = 0; i < tree.nodes_at(n - 1); ++i) {
        const Vector& a = r.agents[0].pi_star.at(n, i);
        const Vector& b = r.agents[1].pi_star.at(n, i);
        betting = betting && (a + b).cwiseAbs().maxCoeff() < 1e-10;
        smallest = std::min(smallest, a.cwiseAbs().maxCoeff());
      }
    }
  }
  t.check(betting && smallest > 1e-6, "betting: opposite strategies, smallest position " + sci(smallest));
  return t.out;
}

Outcome driver_extraction() {
  std::mt19937_64 rng(1111);
  Tally t;
  double entropic_gap = 0.0, worst_gap = 0.0;
  for (int rep = 0; rep < 2; ++rep) {
    const ScenarioTree tree(random_basis(rng, 1 + rep), 3);
    EntropicSpec spec = entropic_spec(tree, random_simplex(rng, tree.branching()), uniform_real(rng, 0.5, 2.0), 1.0);
    const DriverPtr entropic = entropic_driver(tree, spec);
    const ConditionalExpectation e_op = g_operator(tree, entropic);
    const ConditionalExpectation w_op = worstcase_operator(tree);
    const DriverPtr e_back = extract_driver(tree, e_op);
    const DriverPtr w_back = extract_driver(tree, w_op);
    for (int k = 0; k < 25; ++k) {
      const Slice y = random_slice(rng, tree.leaves());
      const Solution se = solve(tree, *e_back, y), sw = solve(tree, *w_back, y);
      for (int n = 0; n < 3; ++n) {
        const Slice te = e_op(y, 3, n), tw = w_op(y, 3, n);
        for (std::size_t i = 0; i < te.size(); ++i) {
          entropic_gap = std::max(entropic_gap, std::abs(se.Y.at(n)[i] - te[i]));
          worst_gap = std::max(worst_gap, std::abs(sw.Y.at(n)[i] - tw[i]));
        }
      }
    }
  }
  t.check(entropic_gap < 1e-8, "entropic " + sci(entropic_gap));
  t.check(worst_gap < 1e-8, "worst case " + sci(worst_gap));
  return t.out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome cli_determinism(const std::filesystem::path& out) {
  Tally t;
  const std::vector<std::pair<std::string, std::string>> runs{
      {"solve", "binomial"},   {"solve", "zero_variance"},     {"solve", "entropic_lattice"},
      {"robust", "robust"},    {"invest", "invest"},           {"equilibrium", "equilibrium"},
      {"equilibrium", "equilibrium_belief"}, {"check", "check"}};
  std::size_t identical = 0;
  for (const auto& [command, name] : runs) {
    const std::string cfg = std::string(LATTICE_BSDE_CONFIG_DIR) + "/" + name + ".json";
    std::string first;
    bool same = true;
    for (int k = 0; k < 2; ++k) {
      const auto dir = out / (name + "_" + std::to_string(k));
      std::ostringstream err;
      const int code = run({command, "--config", cfg, "--out", dir.string(), "--seed", "17"}, err);
      if (code != 0) {
        t.check(false, name + " exit " + std::to_string(code) + ": " + err.str());
        same = false;
        break;
      }
      const std::string bytes = slurp(dir / "summary.json");
      if (k == 0) first = bytes;
      same = same && !bytes.empty() && bytes == first;
    }
    identical += same ? 1 : 0;
  }
  t.check(identical == runs.size(),
          std::to_string(identical) + "/" + std::to_string(runs.size()) + " configs byte-identical");
  return t.out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path out =
      argc > 1 ? std::filesystem::path(argv[1]) : std::filesystem::temp_directory_path() / "lattice_bsde_acceptance";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"affine decomposition", affine_decomposition},
      {"martingale measure", martingale_measure_moments},
      {"solver vs closed forms", solver_closed_forms},
      {"comparison", comparison},
      {"robust representation", robust_representation_check},
      {"Feynman-Kac equivalence", feynman_kac},
      {"optimal investment", optimal_investment},
      {"variance swap", variance_swap},
      {"equilibrium sufficiency and necessity", equilibrium_belief},
      {"representative agent and heterogeneity", representative_and_heterogeneity},
      {"driver extraction", driver_extraction},
      {"CLI determinism", [&out] { return cli_determinism(out); }},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %2zu %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
