#pragma once

// Command-line front end. `run` parses the arguments, loads the JSON config,
// dispatches the subcommand and writes its artifacts into --out. Exit status:
// 0 on success, 2 on validation errors, 3 on numerical failures.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lattice_bsde/config.hpp"
#include "lattice_bsde/equilibrium.hpp"
#include "lattice_bsde/feynman_kac.hpp"
#include "lattice_bsde/io.hpp"
#include "lattice_bsde/portfolio.hpp"
#include "lattice_bsde/solver.hpp"

namespace lattice_bsde {

namespace cli {

struct Context {
  RunConfig config;
  std::filesystem::path out;
  Execution exec;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::ConfigInvalid, path.string() + ": cannot write");
  f << text;
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ostringstream s;
  write_json(s, j);
  write_file(path, s.str());
}

inline Json header(const Context& ctx, const std::string& command) {
  Json j;
  j["command"] = command;
  j["d"] = ctx.config.dim();
  j["horizon"] = ctx.config.horizon;
  j["seed"] = ctx.config.seed;
  j["tolerance"] = ctx.config.tolerance;
  return j;
}

inline ScenarioTree make_tree(const Context& ctx) {
  return ScenarioTree(*ctx.config.basis, ctx.config.horizon, ctx.config.max_paths);
}

inline const Json& section(const Context& ctx, const std::string& key) { return config::need(ctx.config.raw, key, "$"); }

inline const Json* optional_section(const Context& ctx, const std::string& key) {
  return config::maybe(ctx.config.raw, key);
}

inline DriverPtr driver(const Context& ctx, const ScenarioTree& tree) {
  return build_driver(section(ctx, "driver"), "$.driver", tree, ctx.config.reference);
}

inline Slice payoff(const Context& ctx, const ScenarioTree& tree, const std::string& key = "payoff") {
  if (const Json* p = optional_section(ctx, key)) return build_payoff(*p, "$." + key, tree);
  return Slice(tree.leaves(), 0.0);
}

/// A JSON array of Z-type vectors at the root.
inline Json root_vector(const VectorProcess& z) { return to_json(z.at(1, 0)); }

inline std::string multiplicity_string(const Multiplicity& m) {
  std::string s;
  for (std::size_t k = 0; k < m.size(); ++k) s += (k ? "." : "") + std::to_string(m[k]);
  return s;
}

// ---------------------------------------------------------------------------

inline bool use_lattice(const Context& ctx) {
  const std::string& engine = ctx.config.engine;
  if (engine == "tree") return false;
  const Json* payoff = optional_section(ctx, "payoff");
  const bool markov_payoff = payoff && payoff_is_markov(*payoff);
  std::optional<MarkovDriver> f;
  if (markov_payoff) f = lattice_driver(section(ctx, "driver"), "$.driver", *ctx.config.basis, ctx.config.reference);
  if (engine == "lattice" && !f) {
    config::invalid("$.engine", "the lattice engine needs a Markov driver and a payoff of X_N (linear, call, indicator)");
  }
  return f.has_value();
}

inline int solve_lattice(const Context& ctx) {
  const Basis& basis = *ctx.config.basis;
  const int N = ctx.config.horizon;
  const MarkovDriver f = *lattice_driver(section(ctx, "driver"), "$.driver", basis, ctx.config.reference);
  const MarkovTerminal h = markov_payoff(section(ctx, "payoff"), "$.payoff", basis.dim());
  const MarkovSolution sol = markov_solve(basis, N, h, f, ctx.exec);

  std::ostringstream csv;
  csv << "time,point";
  for (int k = 1; k <= basis.dim(); ++k) csv << ",x" << k;
  csv << ",Y";
  for (int k = 1; k <= basis.dim(); ++k) csv << ",Z" << k;
  csv << '\n';
  for (int n = 0; n <= N; ++n) {
    const LatticeSlice& u = sol.u[static_cast<std::size_t>(n)];
    for (std::size_t i = 0; i < u.points.size(); ++i) {
      csv << n << ',' << multiplicity_string(u.points[i]);
      for (int k = 0; k < basis.dim(); ++k) csv << ',' << format_double(u.coords[i][k]);
      csv << ',' << format_double(u.values[i]);
      for (int k = 0; k < basis.dim(); ++k) {
        csv << ',';
        if (n < N) csv << format_double(sol.z[static_cast<std::size_t>(n)][i][k]);
      }
      csv << '\n';
    }
  }
  write_file(ctx.out / "lattice.csv", csv.str());

  Json j = header(ctx, "solve");
  j["engine"] = "lattice";
  j["Y0"] = sol.u[0].values[0];
  j["Z1"] = to_json(sol.z[0][0]);
  j["evaluated_points"] = sol.evaluated_points;
  j["point_budget"] = markov_point_budget(basis.dim(), N);
  write_json_file(ctx.out / "summary.json", j);
  return 0;
}

inline int solve_tree(const Context& ctx) {
  const ScenarioTree tree = make_tree(ctx);
  const DriverPtr g = driver(ctx, tree);
  const Slice terminal = payoff(ctx, tree);
  const Solution sol = solve(tree, *g, terminal, ctx.exec);
  std::ostringstream csv;
  write_solution_csv(csv, tree, sol);
  write_file(ctx.out / "solution.csv", csv.str());

  Json j = header(ctx, "solve");
  j["engine"] = "tree";
  j["paths"] = tree.leaves();
  j["driver"] = g->kind();
  j["Y0"] = sol.initial();
  j["Z1"] = root_vector(sol.Z);
  j["max_residual"] = max_residual(tree, *g, sol);
  write_json_file(ctx.out / "summary.json", j);
  return 0;
}

inline int cmd_solve(const Context& ctx) { return use_lattice(ctx) ? solve_lattice(ctx) : solve_tree(ctx); }

inline int cmd_robust(const Context& ctx) {
  const ScenarioTree tree = make_tree(ctx);
  const DriverPtr g = driver(ctx, tree);
  const Slice terminal = payoff(ctx, tree);
  RobustOptions opts;
  opts.seed = ctx.config.seed;
  if (const Json* r = optional_section(ctx, "robust")) {
    if (const Json* a = config::maybe(*r, "alternatives")) {
      const long long n = config::integer(*a, "$.robust.alternatives");
      if (n < 0) config::invalid("$.robust.alternatives", "must be nonnegative");
      opts.alternatives = static_cast<std::size_t>(n);
    }
    if (const Json* nl = config::maybe(*r, "numeric_legendre")) {
      opts.legendre.use_closed_form = !config::flag(*nl, "$.robust.numeric_legendre");
    }
    if (const Json* t = config::maybe(*r, "gap_threshold")) opts.gap_threshold = config::positive(*t, "$.robust.gap_threshold");
  }
  const RobustResult r = robust_representation(tree, *g, terminal, opts);
  std::ostringstream csv;
  write_measure_csv(csv, tree, r.minimizer);
  write_file(ctx.out / "measure.csv", csv.str());

  Json j = header(ctx, "robust");
  j["driver"] = g->kind();
  j["value"] = r.value;
  j["expectation"] = r.expectation;
  j["penalty"] = r.penalty;
  j["gap"] = r.gap;
  j["certified"] = r.certified;
  j["alternatives_checked"] = r.alternatives_checked;
  j["alternatives_infinite"] = r.alternatives_infinite;
  j["worst_alternative_margin"] = r.worst_alternative_margin;
  write_json_file(ctx.out / "summary.json", j);
  return 0;
}

inline void strategy_rows(std::ostringstream& csv, const ScenarioTree& tree, const std::string& agent,
                          const InvestmentResult& r) {
  for (int n = 1; n <= tree.horizon(); ++n) {
    for (std::size_t node = 0; node < tree.nodes_at(n - 1); ++node) {
      csv << agent << ',' << n << ',' << tree.word_string(n - 1, node);
      for (int k = 0; k < tree.dim(); ++k) csv << ',' << format_double(r.pi_star.at(n, node)[k]);
      for (int k = 0; k < tree.dim(); ++k) csv << ',' << format_double(r.z_dagger.at(n, node)[k]);
      csv << '\n';
    }
  }
}

inline std::string strategy_header(int dim) {
  std::string s = "agent,time,node";
  for (int k = 1; k <= dim; ++k) s += ",pi" + std::to_string(k);
  for (int k = 1; k <= dim; ++k) s += ",zdagger" + std::to_string(k);
  return s + "\n";
}

inline Json investment_json(const InvestmentResult& r) {
  Json j;
  j["value"] = r.value;
  j["pi1"] = root_vector(r.pi_star);
  j["z_dagger1"] = root_vector(r.z_dagger);
  j["identity_gap"] = r.identity_gap;
  j["decomposition_gap"] = r.decomposition_gap;
  j["numeric_argmax"] = r.numeric_argmax;
  j["non_unique_argmax"] = r.non_unique_argmax;
  j["certificate_samples"] = r.certificate_samples;
  j["certificate_margin"] = r.certificate_margin;
  j["certified"] = r.certified;
  return j;
}

inline int cmd_invest(const Context& ctx) {
  const ScenarioTree tree = make_tree(ctx);
  const DriverPtr g = driver(ctx, tree);
  const Slice terminal = payoff(ctx, tree);
  InvestOptions opts;
  opts.seed = ctx.config.seed;
  opts.exec = ctx.exec;
  opts.certificate_tolerance = std::max(opts.certificate_tolerance, ctx.config.tolerance * 0.1);
  if (const Json* s = optional_section(ctx, "invest")) {
    if (const Json* n = config::maybe(*s, "samples")) {
      const long long k = config::integer(*n, "$.invest.samples");
      if (k < 0) config::invalid("$.invest.samples", "must be nonnegative");
      opts.certificate_samples = static_cast<std::size_t>(k);
    }
    if (const Json* w = config::maybe(*s, "initial_wealth")) opts.initial_wealth = config::number(*w, "$.invest.initial_wealth");
  }
  const InvestmentResult r = optimal_invest(tree, *g, terminal, opts);
  std::ostringstream csv;
  csv << strategy_header(tree.dim());
  strategy_rows(csv, tree, "investor", r);
  write_file(ctx.out / "strategies.csv", csv.str());

  Json j = header(ctx, "invest");
  j["driver"] = g->kind();
  j["initial_wealth"] = opts.initial_wealth;
  const Json details = investment_json(r);
  for (auto it = details.begin(); it != details.end(); ++it) j[it.key()] = it.value();
  write_json_file(ctx.out / "summary.json", j);
  return 0;
}

inline std::vector<Agent> agents(const Context& ctx, const ScenarioTree& tree) {
  const Json& list = section(ctx, "agents");
  if (!list.is_array() || list.empty()) config::invalid("$.agents", "must be a non-empty array");
  std::vector<Agent> out;
  for (std::size_t k = 0; k < list.size(); ++k) {
    const std::string path = "$.agents[" + std::to_string(k) + "]";
    Agent a;
    a.name = "agent" + std::to_string(k + 1);
    if (const Json* n = config::maybe(list[k], "name")) a.name = config::text(*n, path + ".name");
    a.driver = build_driver(config::need(list[k], "driver", path), path + ".driver", tree, ctx.config.reference);
    if (const Json* e = config::maybe(list[k], "endowment")) {
      a.endowment = build_payoff(*e, path + ".endowment", tree);
    } else {
      a.endowment.assign(tree.leaves(), 0.0);
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline int cmd_equilibrium(const Context& ctx) {
  const ScenarioTree tree = make_tree(ctx);
  EquilibriumOptions opts;
  opts.tolerance = ctx.config.tolerance;
  opts.invest.seed = ctx.config.seed;
  opts.invest.exec = ctx.exec;

  const Json* settings = optional_section(ctx, "equilibrium");
  VectorProcess supply = zero_supply(tree);
  if (const Json* s = optional_section(ctx, "supply")) supply = constant_process(tree, config::vector(*s, "$.supply", tree.dim()));

  std::vector<Agent> market;
  Json j = header(ctx, "equilibrium");
  std::optional<EquilibriumBelief> belief;
  if (const Json* b = settings ? config::maybe(*settings, "belief") : nullptr) {
    // One entropic agent holding the aggregate endowment; the belief is solved for.
    const double gamma = config::positive(config::need(*b, "risk_aversion", "$.equilibrium.belief"),
                                          "$.equilibrium.belief.risk_aversion");
    Slice aggregate = stochastic_integral(tree, supply);
    if (optional_section(ctx, "agents")) {
      for (const Agent& a : agents(ctx, tree)) {
        for (std::size_t i = 0; i < aggregate.size(); ++i) aggregate[i] += a.endowment[i];
      }
    } else {
      const Slice h = payoff(ctx, tree);
      for (std::size_t i = 0; i < aggregate.size(); ++i) aggregate[i] += h[i];
    }
    belief = single_agent_equilibrium_belief(tree, constant_process(tree, gamma), constant_process(tree, 1.0), aggregate);
    market.push_back({entropic_driver(tree, belief->spec), aggregate, "representative"});
    supply = zero_supply(tree);
    j["mode"] = "belief";
    j["radon_nikodym_gap"] = radon_nikodym_gap(tree, *belief);
    j["density_gap"] = exponential_density_gap(tree, *belief, gamma, aggregate);
    std::ostringstream csv;
    write_measure_csv(csv, tree, Measure(belief->spec.belief));
    write_file(ctx.out / "measure.csv", csv.str());
  } else {
    market = agents(ctx, tree);
    j["mode"] = "check";
  }

  const EquilibriumReport report = check_equilibrium(tree, market, supply, opts);
  Json eq;
  eq["in_equilibrium"] = report.in_equilibrium;
  eq["max_residual"] = report.max_residual;
  Json list = Json::array();
  for (std::size_t k = 0; k < market.size(); ++k) {
    Json a;
    a["name"] = market[k].name;
    a["driver"] = market[k].driver->kind();
    const Json details = investment_json(report.agents[k]);
    for (auto it = details.begin(); it != details.end(); ++it) a[it.key()] = it.value();
    list.push_back(a);
  }
  eq["agents"] = list;

  const bool representative = settings && config::maybe(*settings, "representative") &&
                              config::flag((*settings)["representative"], "$.equilibrium.representative");
  if (representative) {
    const NormalizedMarket normalized = normalize_supply(tree, market, supply);
    RepresentativeOptions ropts;
    ropts.equilibrium = opts;
    const RepresentativeResult rep = representative_agent(tree, normalized.agents, ropts);
    Json r;
    r["closed_form"] = rep.closed_form;
    r["driver"] = rep.agent.driver->kind();
    r["z_dagger_gap"] = rep.z_dagger_gap;
    r["pi_gap"] = rep.pi_gap;
    r["rep_in_equilibrium"] = rep.rep_in_equilibrium;
    r["market_in_equilibrium"] = rep.market_in_equilibrium;
    r["consistent"] = rep.consistent(ctx.config.tolerance);
    eq["representative"] = r;
  }
  write_json_file(ctx.out / "equilibrium.json", eq);

  std::ostringstream csv;
  csv << strategy_header(tree.dim());
  for (std::size_t k = 0; k < market.size(); ++k) strategy_rows(csv, tree, market[k].name, report.agents[k]);
  write_file(ctx.out / "strategies.csv", csv.str());

  j["agents"] = market.size();
  j["in_equilibrium"] = report.in_equilibrium;
  j["max_residual"] = report.max_residual;
  write_json_file(ctx.out / "summary.json", j);
  return 0;
}

inline int cmd_check(const Context& ctx) {
  const ScenarioTree tree = make_tree(ctx);
  const DriverPtr g = driver(ctx, tree);
  SamplingOptions sampling;
  sampling.seed = ctx.config.seed;
  if (const Json* c = optional_section(ctx, "check")) {
    if (const Json* p = config::maybe(*c, "pairs")) {
      const long long n = config::integer(*p, "$.check.pairs");
      if (n < 1) config::invalid("$.check.pairs", "must be positive");
      sampling.pairs_per_node = static_cast<std::size_t>(n);
    }
    if (const Json* m = config::maybe(*c, "max_nodes")) {
      const long long n = config::integer(*m, "$.check.max_nodes");
      if (n < 1) config::invalid("$.check.max_nodes", "must be positive");
      sampling.max_nodes_per_time = static_cast<std::size_t>(n);
    }
  }
  const BalanceReport balance = check_balance(*g, tree, sampling);
  const GradientReport gradient = check_gradient(*g, tree, 20, ctx.config.seed);

  Json j = header(ctx, "check");
  j["driver"] = g->kind();
  const DriverTraits t = g->traits();
  j["traits"] = {{"concave", t.concave}, {"balanced", t.balanced}, {"has_gradient", t.has_gradient}, {"has_argmax", t.has_argmax}};
  j["balance"] = {{"balanced", balance.balanced()},
                  {"worst_margin", balance.worst_margin},
                  {"violations", balance.violations},
                  {"gradient_outside_theta", balance.gradient_outside_theta},
                  {"pairs_checked", balance.pairs_checked},
                  {"gradients_checked", balance.gradients_checked}};
  j["gradient"] = {{"checked", gradient.checked},
                   {"max_relative_error", gradient.max_relative_error},
                   {"passed", gradient.passed()}};

  // Invariants of a solve: the BSDE residual and a CSV round trip.
  const Slice terminal = payoff(ctx, tree);
  const Solution sol = solve(tree, *g, terminal, ctx.exec);
  std::stringstream csv;
  write_solution_csv(csv, tree, sol);
  const Solution back = read_solution_csv(csv, tree);
  const double residual = max_residual(tree, *g, sol);
  const double roundtrip = max_residual(tree, *g, back);
  double level = 0.0, slope = 0.0, covariance = 0.0;
  for (int n = 1; n <= tree.horizon(); ++n) {
    const ConditionalFormulas cf = conditional_formulas(tree, *g, sol, n);
    level = std::max(level, cf.level_residual);
    slope = std::max(slope, cf.slope_residual);
    covariance = std::max(covariance, cf.covariance_residual);
  }
  j["invariants"] = {{"residual", residual},
                     {"roundtrip_residual", roundtrip},
                     {"level_residual", level},
                     {"slope_residual", slope},
                     {"covariance_residual", covariance}};
  const double tol = ctx.config.tolerance;
  j["passed"] = balance.balanced() == t.balanced && (!t.has_gradient || gradient.passed()) && residual <= tol &&
                roundtrip <= tol;
  write_json_file(ctx.out / "summary.json", j);
  return 0;
}

}  // namespace cli

/// Runs the command line. Diagnostics go to `err`.
inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Backward stochastic difference equations on lattices", "lattice_bsde_cli"};
  app.require_subcommand(1);
  std::string config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> tol;
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "RNG seed for sampling-based checks");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--tol", tol, "tolerance")->check(CLI::PositiveNumber);
  std::string command;
  for (const char* name : {"solve", "robust", "invest", "equilibrium", "check"}) {
    app.add_subcommand(name)->fallthrough()->callback([&command, name] { command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    err << o.str() << e2.str();
    return code == 0 ? 0 : 2;
  }

  try {
    cli::Context ctx{load_config(config_path), out_dir, {}};
    if (seed) ctx.config.seed = *seed;
    if (threads) ctx.config.threads = *threads;
    if (tol) ctx.config.tolerance = *tol;
    ctx.exec.threads = ctx.config.threads;
    std::error_code ec;
    std::filesystem::create_directories(ctx.out, ec);
    if (ec || !std::filesystem::is_directory(ctx.out)) {
      fail(ErrorCode::ConfigInvalid, out_dir + ": output directory is not writable");
    }
    if (command == "solve") return cli::cmd_solve(ctx);
    if (command == "robust") return cli::cmd_robust(ctx);
    if (command == "invest") return cli::cmd_invest(ctx);
    if (command == "equilibrium") return cli::cmd_equilibrium(ctx);
    return cli::cmd_check(ctx);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::ConfigInvalid || e.code() == ErrorCode::TreeTooLarge ? 2 : 3;
  } catch (const Json::exception& e) {
    err << "error: ConfigInvalid: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
}

inline int run(const std::vector<std::string>& args, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"lattice_bsde_cli"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), err);
}

}  // namespace lattice_bsde
