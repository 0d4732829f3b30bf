#include "mflow/alloc.hpp"

#include <cmath>

namespace mflow {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void requirePositive(double v, const char* what) {
  if (!(std::isfinite(v) && v > 0.0)) throw ConfigError(std::string(what) + " must be > 0");
}

}  // namespace

std::string strategyName(const AllocationStrategy& s) {
  return std::visit(Overloaded{
                        [](const LayerWeightedEqual&) { return std::string("layer-weighted"); },
                        [](const EqualFreeSpace&) { return std::string("equal-free-space"); },
                        [](const EqualToleranceFactor&) { return std::string("equal-tolerance"); },
                        [](const PerLayerEqual&) { return std::string("per-layer-equal"); },
                    },
                    s);
}

LayerSplit layerWeightedSplit(double meanLA, double meanLB, const CrossLayerFactors& f, double sTotal) {
  const double weightA = meanLA + f.betaB * meanLB;
  const double total = (1.0 + f.betaA) * meanLA + (1.0 + f.betaB) * meanLB;
  const double freeA = sTotal * weightA / total;
  return {freeA, sTotal - freeA};
}

double optimalCriticalAttack(double meanLA, double meanLB, const CrossLayerFactors& f, double sTotal) {
  return sTotal / (sTotal + (1.0 + f.betaA) * meanLA + (1.0 + f.betaB) * meanLB);
}

PerLayerCritical perLayerCritical(double muA, double muB, double meanLA, double meanLB, const CrossLayerFactors& f) {
  const double pA = muA / (muA + meanLA + f.betaB * meanLB);
  const double pB = muB / (muB + meanLB + f.betaA * meanLA);
  return {pA, pB, std::min(pA, pB)};
}

double toleranceAlphaForBudget(double meanLA, double meanLB, double sTotal) { return sTotal / (meanLA + meanLB); }

SystemConfig applyStrategy(const AllocationStrategy& strategy, const MarginalDistribution& loadA,
                           const MarginalDistribution& loadB, const CrossLayerFactors& f,
                           const StrategyOptions& opts) {
  f.validate();
  const double meanLA = mean(loadA);
  const double meanLB = mean(loadB);
  auto dirac = [&](double sA, double sB) {
    return SystemConfig{JointLoadSpace::independent(loadA, MarginalDistribution::dirac(sA), loadB,
                                                    MarginalDistribution::dirac(sB)),
                        f};
  };
  return std::visit(Overloaded{
                        [&](const LayerWeightedEqual& s) {
                          requirePositive(s.sTotal, "sTotal");
                          const auto split = layerWeightedSplit(meanLA, meanLB, f, s.sTotal);
                          return dirac(split.freeA, split.freeB);
                        },
                        [&](const EqualFreeSpace& s) {
                          requirePositive(s.sTotal, "sTotal");
                          return dirac(0.5 * s.sTotal, 0.5 * s.sTotal);
                        },
                        [&](const PerLayerEqual& s) {
                          requirePositive(s.muA, "muA");
                          requirePositive(s.muB, "muB");
                          return dirac(s.muA, s.muB);
                        },
                        [&](const EqualToleranceFactor& s) {
                          requirePositive(s.alpha, "alpha");
                          return SystemConfig{JointLoadSpace::proportional(loadA, loadB, s.alpha, s.alpha,
                                                                           opts.empiricalRows, opts.seed),
                                              f};
                        },
                    },
                    strategy);
}

}  // namespace mflow
