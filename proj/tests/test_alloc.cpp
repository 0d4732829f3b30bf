#include <doctest.h>

#include <cmath>

#include "mflow/alloc.hpp"
#include "mflow/analytic.hpp"

using namespace mflow;

namespace {

const CrossLayerFactors kBeta02{0.2, 0.2};

struct LoadPair {
  MarginalDistribution a, b;
};

std::vector<LoadPair> budgetConfigs() {
  return {{MarginalDistribution::weibull(10, 84.25, 0.4), MarginalDistribution::pareto(5, 2)},
          {MarginalDistribution::pareto(100, 5), MarginalDistribution::uniform(150, 200)},
          {MarginalDistribution::uniform(80, 100), MarginalDistribution::weibull(10, 225.68, 2)}};
}

}  // namespace

TEST_SUITE("alloc") {
  TEST_CASE("layer-weighted split examples") {
    const auto b = layerWeightedSplit(125, 175, kBeta02, 720);
    CHECK(b.freeA == doctest::Approx(320.0).epsilon(1e-14));
    CHECK(b.freeB == doctest::Approx(400.0).epsilon(1e-14));
    const auto c = layerWeightedSplit(90, 210, kBeta02, 720);
    CHECK(c.freeA == doctest::Approx(264.0).epsilon(1e-14));
    CHECK(c.freeB == doctest::Approx(456.0).epsilon(1e-14));
    const auto s = layerWeightedSplit(50, 50, {0.3, 0.3}, 100);
    CHECK(s.freeA == doctest::Approx(50.0));
  }

  TEST_CASE("optimal critical attack examples") {
    CHECK(optimalCriticalAttack(125, 175, kBeta02, 720) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(optimalCriticalAttack(30, 1e-12, {0, 0}, 45) == doctest::Approx(45.0 / 75.0));
    CHECK(optimalCriticalAttack(30, 40, kBeta02, 1e-12) < 1e-12);
  }

  TEST_CASE("per-layer critical sizes") {
    const auto r = perLayerCritical(200, 300, 100, 150, kBeta02);
    CHECK(r.pA == doctest::Approx(200.0 / 330.0));
    CHECK(r.pB == doctest::Approx(300.0 / 470.0));
    CHECK(r.pOpt == r.pA);
    const auto sym = perLayerCritical(80, 80, 40, 40, {0.3, 0.3});
    CHECK(sym.pA == sym.pB);
    const auto split = layerWeightedSplit(90, 210, {0.1, 0.4}, 500);
    const auto eq = perLayerCritical(split.freeA, split.freeB, 90, 210, {0.1, 0.4});
    CHECK(eq.pA == doctest::Approx(optimalCriticalAttack(90, 210, {0.1, 0.4}, 500)).epsilon(1e-12));
    CHECK(eq.pB == doctest::Approx(eq.pA).epsilon(1e-12));
    CHECK(perLayerCritical(1e-12, 80, 40, 40, {}).pOpt < 1e-12);
  }

  TEST_CASE("strategy names and validation") {
    CHECK(strategyName(LayerWeightedEqual{1}) == "layer-weighted");
    CHECK(strategyName(EqualFreeSpace{1}) == "equal-free-space");
    CHECK(strategyName(EqualToleranceFactor{1}) == "equal-tolerance");
    CHECK(strategyName(PerLayerEqual{1, 1}) == "per-layer-equal");
    const auto l = MarginalDistribution::uniform(1, 2);
    CHECK_THROWS_AS(applyStrategy(LayerWeightedEqual{0}, l, l, {}), ConfigError);
    CHECK_THROWS_AS(applyStrategy(EqualToleranceFactor{-1}, l, l, {}), ConfigError);
    CHECK_THROWS_AS(applyStrategy(PerLayerEqual{1, 0}, l, l, {}), ConfigError);
  }

  TEST_CASE("budget conservation") {
    for (const auto& [a, b] : budgetConfigs()) {
      const double eA = mean(a), eB = mean(b);
      const auto lw = applyStrategy(LayerWeightedEqual{720}, a, b, kBeta02);
      CHECK(lw.joint.meanFree(Layer::A) + lw.joint.meanFree(Layer::B) == doctest::Approx(720).epsilon(1e-12));
      const auto ef = applyStrategy(EqualFreeSpace{720}, a, b, kBeta02);
      CHECK(ef.joint.meanFree(Layer::A) == 360.0);
      CHECK(ef.joint.meanFree(Layer::B) == 360.0);
      const double alpha = toleranceAlphaForBudget(eA, eB, 720);
      CHECK(alpha * (eA + eB) == doctest::Approx(720).epsilon(1e-12));
    }
    CHECK(toleranceAlphaForBudget(125, 175, 720) == doctest::Approx(2.4).epsilon(1e-15));
  }

  TEST_CASE("the equal-tolerance strategy couples free space to load") {
    const auto a = MarginalDistribution::pareto(100, 5), b = MarginalDistribution::uniform(150, 200);
    StrategyOptions o;
    o.empiricalRows = 20'000;
    const auto cfg = applyStrategy(EqualToleranceFactor{2.4}, a, b, kBeta02, o);
    CHECK(cfg.joint.mode() == JointLoadSpace::Mode::Proportional);
    CHECK(cfg.joint.rowCount() == 20'000);
    Rng rng(3);
    const auto s = cfg.joint.draw(rng);
    CHECK(s.freeA == doctest::Approx(2.4 * s.loadA));
  }

  TEST_CASE("layer-weighted allocation reaches the bound") {
    const auto a = MarginalDistribution::pareto(100, 5), b = MarginalDistribution::uniform(150, 200);
    const auto cfg = applyStrategy(LayerWeightedEqual{720}, a, b, kBeta02);
    const double bound = optimalCriticalAttack(125, 175, kBeta02, 720);
    for (double p = 0.01; p < bound - 1e-3; p += 0.013) CHECK(finalSize(p, cfg).value == doctest::Approx(1.0 - p));
    for (double p = bound + 1e-3; p < 1.0; p += 0.013) CHECK(finalSize(p, cfg).value == 0.0);
  }

  TEST_CASE("layer-weighted outcome depends only on the load means") {
    // Two load families with means 125 and 175.
    const auto cfg1 = applyStrategy(LayerWeightedEqual{720}, MarginalDistribution::pareto(100, 5),
                                    MarginalDistribution::uniform(150, 200), kBeta02);
    const auto cfg2 = applyStrategy(LayerWeightedEqual{720}, MarginalDistribution::uniform(100, 150),
                                    MarginalDistribution::dirac(175), kBeta02);
    CHECK(cfg1.joint.meanFree(Layer::A) == cfg2.joint.meanFree(Layer::A));
    for (double p = 0.01; p < 1.0; p += 0.02) CHECK(finalSize(p, cfg1).value == finalSize(p, cfg2).value);
  }

  TEST_CASE("per-layer-equal allocation reaches min(pA, pB)") {
    const auto cfg = applyStrategy(PerLayerEqual{200, 300}, MarginalDistribution::uniform(50, 150),
                                   MarginalDistribution::uniform(100, 200), kBeta02);
    const auto bound = perLayerCritical(200, 300, 100, 150, kBeta02);
    CHECK(std::abs(criticalAttackSize(cfg).pHat - bound.pOpt) <= 1e-3);
    for (double p = 0.01; p < bound.pOpt - 1e-3; p += 0.02) CHECK(finalSize(p, cfg).value == doctest::Approx(1.0 - p));
  }
}
