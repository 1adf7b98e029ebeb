#include <gtest/gtest.h>

#include "support.hpp"

using namespace lattice_bsde;
using namespace testing_support;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

DriverPtr entropic(const ScenarioTree& tree, const Vector& p, double gamma, double shift = 1.0) {
  return entropic_driver(tree, entropic_spec(tree, p, gamma, shift));
}

}  // namespace

TEST(Legendre, WorstCaseIsIndicatorOfTheta) {
  const ScenarioTree tree(binomial_basis(), 1);
  const DriverPtr g = worstcase_driver(tree, {constant_process(tree, vec({0.3, 0.7})), constant_process(tree, vec({0.6, 0.4}))});
  EXPECT_EQ(legendre_b(*g, 1, 0, vec({0.1})).value(), 0.0);
  EXPECT_EQ(legendre_b(*g, 1, 0, vec({0.4})).value(), 0.0);
  EXPECT_TRUE(legendre_b(*g, 1, 0, vec({0.5})).is_infinite());
  EXPECT_TRUE(legendre_b(*g, 1, 0, vec({-0.9})).is_infinite());
}

TEST(Legendre, LinearDriver) {
  const ScenarioTree tree(binomial_basis(), 1);
  const DriverPtr g = linear_driver(tree, constant_process(tree, vec({0.2})), constant_process(tree, 0.7));
  EXPECT_EQ(legendre_b(*g, 1, 0, vec({0.2})).value(), 0.7);
  EXPECT_TRUE(legendre_b(*g, 1, 0, vec({0.3})).is_infinite());
}

TEST(Legendre, EntropicClosedFormAgainstGrid) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 5; ++rep) {
    const ScenarioTree tree(random_basis(rng, 2), 1);
    const DriverPtr g = entropic(tree, random_simplex(rng, 3), 1.5, 1.2);
    const Vector theta = random_theta(rng, tree.basis());
    const double closed = legendre_b(*g, 1, 0, theta).value();
    LegendreOptions numeric;
    numeric.use_closed_form = false;
    EXPECT_NEAR(legendre_b(*g, 1, 0, theta, numeric).value(), closed, 1e-8);
    const GridResult grid = grid_maximize([&](const Vector& z) { return g->value(1, 0, z) - z.dot(theta); },
                                          Vector::Zero(2), 30.0);
    EXPECT_NEAR(grid.value, closed, 1e-6);
  }
}

TEST(Legendre, EntropicOutsideThetaIsInfinite) {
  const ScenarioTree tree(binomial_basis(), 1);
  const DriverPtr g = entropic(tree, vec({0.4, 0.6}), 1.0);
  LegendreOptions numeric;
  numeric.use_closed_form = false;
  EXPECT_TRUE(legendre_b(*g, 1, 0, vec({1.5})).is_infinite());
  EXPECT_TRUE(legendre_b(*g, 1, 0, vec({1.5}), numeric).is_infinite());
}

TEST(SupConvolution, SingleDriverIsItself) {
  const ScenarioTree tree(binomial_basis(), 1);
  const DriverPtr g = entropic(tree, vec({0.4, 0.6}), 1.0);
  EXPECT_EQ(sup_convolution({g}).get(), g.get());
}

TEST(SupConvolution, CommonBeliefHasHarmonicRiskAversion) {
  const ScenarioTree tree(triangular_basis(), 1);
  const Vector p = vec({0.2, 0.3, 0.5});
  const EntropicAggregate agg =
      entropic_sup_convolution(tree, {entropic_spec(tree, p, 2.0, 1.0), entropic_spec(tree, p, 3.0, 1.0)});
  EXPECT_NEAR(agg.spec.risk_aversion.at(1, 0), 1.2, 1e-14);
  EXPECT_LT(max_abs(agg.spec.belief.at(1, 0) - p), 1e-14);
  EXPECT_NEAR(agg.normalizer.at(1, 0), 1.0, 1e-14);
}

TEST(SupConvolution, HeterogeneousClosedForm) {
  // gamma1 = gamma2 = 2, p = (1/2, 1/2), q = (1/4, 3/4); values from a separate scalar optimisation.
  const ScenarioTree tree(binomial_basis(), 1);
  const EntropicAggregate agg = entropic_sup_convolution(
      tree, {entropic_spec(tree, vec({0.5, 0.5}), 2.0, 1.0), entropic_spec(tree, vec({0.25, 0.75}), 2.0, 1.0)});
  EXPECT_NEAR(agg.spec.risk_aversion.at(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(agg.normalizer.at(1, 0), 0.9659258262890682, 1e-14);
  const Vector expected = vec({std::sqrt(1.0 / 8.0), std::sqrt(3.0 / 8.0)}) / 0.9659258262890682;
  EXPECT_LT(max_abs(agg.spec.belief.at(1, 0) - expected), 1e-14);
  const DriverPtr closed = entropic_driver(tree, agg.spec);
  EXPECT_NEAR(closed->value(1, 0, vec({0.3})), 0.0715993191287288, 1e-13);
  const DriverPtr numeric = sup_convolution({entropic(tree, vec({0.5, 0.5}), 2.0), entropic(tree, vec({0.25, 0.75}), 2.0)});
  EXPECT_NEAR(numeric->value(1, 0, vec({0.3})), 0.0715993191287288, 1e-6);
}

TEST(SupConvolution, ClosedFormMatchesNumericOnRandomInstances) {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const ScenarioTree tree(random_basis(rng, 2), 1);
    std::vector<EntropicSpec> specs;
    std::vector<DriverPtr> drivers;
    for (int k = 0; k < 3; ++k) {
      const double gamma = 0.5 + 2.0 * std::uniform_real_distribution<double>()(rng);
      specs.push_back(entropic_spec(tree, random_simplex(rng, 3), gamma, 1.0));
      drivers.push_back(entropic_driver(tree, specs.back()));
    }
    const DriverPtr closed = entropic_driver(tree, entropic_sup_convolution(tree, specs).spec);
    const DriverPtr numeric = sup_convolution(drivers);
    for (int k = 0; k < 5; ++k) {
      const Vector z = random_vector(rng, 2);
      EXPECT_NEAR(numeric->value(1, 0, z), closed->value(1, 0, z), 1e-6);
    }
  }
}

TEST(SupConvolution, NormalizerBound) {
  std::mt19937_64 rng(33);
  for (int rep = 0; rep < 200; ++rep) {
    const int m = 1 + rep % 4;
    std::vector<Vector> beliefs;
    std::vector<double> gammas, shifts;
    for (int k = 0; k < m; ++k) {
      beliefs.push_back(random_simplex(rng, 3, 0.01));
      gammas.push_back(0.1 + 5.0 * std::uniform_real_distribution<double>()(rng));
      shifts.push_back(1.0);
    }
    const NodeAggregate agg = aggregate_entropic(beliefs, gammas, shifts);
    EXPECT_LE(agg.normalizer, 1.0 + 1e-12);
    if (m == 1) EXPECT_NEAR(agg.normalizer, 1.0, 1e-14);
  }
}

TEST(SupConvolution, LeastRiskAverseDominates) {
  const Vector p1 = vec({0.2, 0.8}), p2 = vec({0.7, 0.3});
  double previous = std::numeric_limits<double>::infinity();
  for (double ratio : {1.0, 10.0, 100.0, 1000.0}) {
    const NodeAggregate agg = aggregate_entropic({p1, p2}, {1.0, ratio}, {1.0, 1.0});
    const double gap = max_abs(agg.belief - p1);
    EXPECT_LT(gap, previous);
    previous = gap;
  }
  EXPECT_LT(previous, 1e-2);
}
