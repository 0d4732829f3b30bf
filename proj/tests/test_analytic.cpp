#include <doctest.h>

#include <cmath>
#include <random>

#include "mflow/alloc.hpp"
#include "mflow/analytic.hpp"
#include "oracles.hpp"

using namespace mflow;

namespace {

SystemConfig figure4() {
  const auto l = MarginalDistribution::uniform(20, 40);
  const auto s = MarginalDistribution::uniform(25, 75);
  return {JointLoadSpace::independent(l, s, l, s), {0.25, 0.25}};
}

SystemConfig mixed(double beta) {
  return {JointLoadSpace::independent(MarginalDistribution::uniform(10, 30), MarginalDistribution::uniform(10, 60),
                                      MarginalDistribution::weibull(10, 10.78, 6), MarginalDistribution::uniform(20, 100)),
          {beta, beta}};
}

SystemConfig diracOptimal() {
  const auto lA = MarginalDistribution::pareto(100, 5);
  const auto lB = MarginalDistribution::uniform(150, 200);
  return applyStrategy(LayerWeightedEqual{720}, lA, lB, {0.2, 0.2});
}

}  // namespace

TEST_SUITE("analytic") {
  TEST_CASE("initial state") {
    const auto s = initialState(0.25, figure4());
    CHECK(s.t == 0);
    CHECK(s.n == 0.75);
    CHECK(s.qA == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(s.qB == doctest::Approx(10.0).epsilon(1e-15));

    const auto l100 = MarginalDistribution::dirac(100), l50 = MarginalDistribution::dirac(50);
    const SystemConfig cfg{JointLoadSpace::independent(l100, l100, l50, l50), {}};
    const auto h = initialState(0.5, cfg);
    CHECK(h.qA == 100.0);
    CHECK(h.qB == 50.0);
    const auto tiny = initialState(1e-12, cfg);
    CHECK(tiny.n == doctest::Approx(1.0));
    CHECK(tiny.qA < 1e-9);
  }

  TEST_CASE("attack fraction is validated") {
    CHECK_THROWS_AS(initialState(0.0, figure4()), std::domain_error);
    CHECK_THROWS_AS(initialState(1.0, figure4()), std::domain_error);
    CHECK_THROWS_AS(finalSize(-0.1, figure4()), std::domain_error);
    CHECK_THROWS_AS(CrossLayerFactors({-0.1, 0}).validate(), ConfigError);
  }

  TEST_CASE("step on the two-uniform config is a fixed point at p = 0.25") {
    const auto cfg = figure4();
    const auto s0 = initialState(0.25, cfg);
    CHECK(s0.effectiveA(cfg.factors) == doctest::Approx(12.5));
    const auto s1 = step(s0, 0.25, cfg);
    CHECK(s1.n == 0.75);
    CHECK(s1.qA == doctest::Approx(10.0).epsilon(1e-14));
    CHECK(s1.qB == doctest::Approx(10.0).epsilon(1e-14));
  }

  TEST_CASE("collapse is absorbing") {
    const auto c = CascadeState::collapse(3);
    const auto n = step(c, 0.3, figure4());
    CHECK(n.collapsed);
    CHECK(n.n == 0.0);
    CHECK(std::isinf(n.qA));
    CHECK(std::isinf(n.effectiveB({0.3, 0.3})));
  }

  TEST_CASE("steady state examples") {
    const auto cfg = figure4();
    const auto ss = iterateToSteadyState(0.25, cfg);
    CHECK(ss.converged);
    CHECK(ss.nInf == 0.75);
    CHECK(ss.xStar == doctest::Approx(10.0));
    CHECK(ss.yStar == doctest::Approx(10.0));
    CHECK(ss.iterations == 1);

    const auto dead = iterateToSteadyState(0.9, cfg);
    CHECK(dead.collapsed);
    CHECK(dead.nInf == 0.0);
    CHECK(std::isinf(dead.xStar));

    CHECK(finalSize(1e-6, cfg).value == doctest::Approx(1.0).epsilon(1e-5));

    const auto opt = diracOptimal();
    for (const double p : {0.1, 0.5, 0.66}) {
      const auto s = iterateToSteadyState(p, opt);
      CHECK(s.converged);
      CHECK(s.nInf == doctest::Approx(1.0 - p).epsilon(1e-15));
      CHECK(s.iterations == 1);
    }
    CHECK(finalSize(0.5, opt).value == doctest::Approx(0.5));
  }

  TEST_CASE("trajectories are monotone and match the scalar recursion") {
    for (const double beta : {0.0, 0.25, 0.5, 1.0}) {
      const auto cfg = mixed(beta);
      for (const double p : {0.05, 0.2, 0.35, 0.5}) {
        CAPTURE(beta);
        CAPTURE(p);
        std::vector<CascadeState> traj;
        const auto ss = iterateToSteadyState(p, cfg, {}, &traj);
        CHECK(ss.converged);
        for (std::size_t t = 1; t < traj.size(); ++t) {
          CHECK(traj[t].n <= traj[t - 1].n + 1e-15);
          if (!traj[t].collapsed) {
            CHECK(traj[t].effectiveA(cfg.factors) >= traj[t - 1].effectiveA(cfg.factors) - 1e-12);
            CHECK(traj[t].effectiveB(cfg.factors) >= traj[t - 1].effectiveB(cfg.factors) - 1e-12);
          }
        }
        const double eA = 20.0, eB = cfg.joint.meanLoad(Layer::B);
        const auto rs = oracle::scalarRatio(
            p, eA, eB, beta, beta, [](double x) { return oracle::sf(oracle::Uni{10, 60}, x); },
            [](double x) { return oracle::sf(oracle::Uni{20, 100}, x); }, 1'000'000);
        const std::size_t common = std::min(rs.size(), traj.size());
        for (std::size_t t = 0; t < std::min<std::size_t>(common, 50); ++t) {
          if (std::isinf(rs[t])) {
            CHECK(traj[t].collapsed);
          } else {
            CHECK(traj[t].qA == doctest::Approx(rs[t] * eA).epsilon(1e-9));
            CHECK(traj[t].qB == doctest::Approx(rs[t] * eB).epsilon(1e-9));
          }
        }
        if (ss.collapsed) {
          CHECK(std::isinf(rs.back()));
        } else {
          CHECK(ss.xStar == doctest::Approx(rs.back() * eA).epsilon(1e-7));
        }
      }
    }
  }

  TEST_CASE("final-size identity and bounds") {
    for (const double beta : {0.0, 0.5}) {
      const auto cfg = mixed(beta);
      for (double p = 0.02; p < 0.98; p += 0.06) {
        const auto ss = iterateToSteadyState(p, cfg);
        CHECK(ss.nInf <= 1.0 - p + 1e-15);
        CHECK(ss.nInf >= 0.0);
        if (ss.nInf > 0) {
          const double P = cfg.joint.jointSurvival(ss.xStar + beta * ss.yStar, ss.yStar + beta * ss.xStar);
          CHECK(ss.nInf == doctest::Approx((1 - p) * P).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("stable point checks") {
    const auto cfg = figure4();
    CHECK(isStablePoint(10, 10, 0.25, cfg));
    CHECK_FALSE(isStablePoint(0, 0, 0.25, cfg));
    CHECK_FALSE(isStablePoint(60, 60, 0.25, cfg));
    CHECK_FALSE(isStablePoint(9.9, 10, 0.25, cfg));

    const auto s = survivalSurfaces(10, 10, cfg);
    CHECK(s.lhsA == doctest::Approx(4.0 / 3.0));
  }

  TEST_CASE("fixed point is stable and minimal") {
    for (const double beta : {0.0, 0.25, 1.0}) {
      const auto cfg = mixed(beta);
      for (const double p : {0.1, 0.3, 0.45}) {
        const auto ss = iterateToSteadyState(p, cfg);
        if (ss.collapsed) continue;
        CAPTURE(beta);
        CAPTURE(p);
        CHECK(isStablePoint(ss.xStar, ss.yStar, p, cfg, 1e-9));
        const double eps = 1e-4 * (1.0 + ss.xStar);
        CHECK_FALSE(isStablePoint(ss.xStar - eps, ss.yStar - eps, p, cfg));
      }
    }
  }

  TEST_CASE("stable-set grid") {
    const auto cfg = figure4();
    const double cap = defaultGridCap(cfg);
    CHECK(cap == doctest::Approx(90.0));
    const auto g = stableSetGrid(0.25, cfg, cap, cap, 400, 400);
    REQUIRE_FALSE(g.empty());
    CHECK(std::abs(g.xAt(*g.minI) - 10.0) <= g.cellWidth());
    CHECK(std::abs(g.yAt(*g.minJ) - 10.0) <= g.cellHeight());
    CHECK(g.marked(*g.minI, *g.minJ));
    CHECK(g.threshold() == doctest::Approx(4.0 / 3.0));

    CHECK(stableSetGrid(0.95, cfg, cap, cap, 100, 100).empty());
    const auto small = stableSetGrid(1e-4, cfg, cap, cap, 400, 400);
    REQUIRE_FALSE(small.empty());
    CHECK(small.xAt(*small.minI) <= small.cellWidth());

    // Thread count does not change the result.
    const auto g4 = stableSetGrid(0.25, cfg, cap, cap, 400, 400, 4);
    CHECK(g4.stable == g.stable);
    CHECK(g4.lhsA == g.lhsA);
  }

  TEST_CASE("critical attack size") {
    const auto opt = diracOptimal();
    const auto c = criticalAttackSize(opt);
    CHECK(c.converged);
    CHECK_FALSE(c.degenerate);
    CHECK_FALSE(c.nonMonotone);
    CHECK(std::abs(c.pHat - 2.0 / 3.0) <= 1e-4);

    // Single-layer equivalent: free space E[S] against capacity E[L] + E[S].
    const auto l = MarginalDistribution::uniform(20, 40);
    const SystemConfig single{JointLoadSpace::independent(l, MarginalDistribution::dirac(45), l,
                                                          MarginalDistribution::dirac(45)),
                              {0, 0}};
    CHECK(std::abs(criticalAttackSize(single).pHat - 45.0 / 75.0) <= 1e-4);

    const SystemConfig starved{JointLoadSpace::independent(l, MarginalDistribution::dirac(1e-3), l,
                                                           MarginalDistribution::dirac(1e-3)),
                               {0.2, 0.2}};
    const auto d = criticalAttackSize(starved);
    CHECK(d.degenerate);
    CHECK(d.pHat == 0.0);

    const auto f4 = criticalAttackSize(figure4());
    CHECK(f4.pHat > 0.25);
    CHECK(f4.pHat < 0.9);
    CHECK(finalSize(f4.pHat - 2e-4, figure4()).value > 0.0);
    CHECK(finalSize(f4.pHat + 2e-4, figure4()).value == 0.0);
  }

  TEST_CASE("higher coupling lowers the critical attack size") {
    double prev = 1.0;
    for (const double beta : {0.0, 0.25, 0.5, 1.0}) {
      const double pc = criticalAttackSize(mixed(beta)).pHat;
      CHECK(pc < prev);
      prev = pc;
    }
  }
}
