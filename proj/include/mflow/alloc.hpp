#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>

#include "mflow/analytic.hpp"
#include "mflow/dist.hpp"

namespace mflow {

/// Budget split proportional to each layer's mean effective load, then
/// spread evenly over the nodes of the layer.
struct LayerWeightedEqual {
  double sTotal;
};

/// Budget halved between the layers, then spread evenly.
struct EqualFreeSpace {
  double sTotal;
};

/// S = alpha * L per node and layer.
struct EqualToleranceFactor {
  double alpha;
};

/// Fixed per-layer budgets, spread evenly.
struct PerLayerEqual {
  double muA;
  double muB;
};

using AllocationStrategy = std::variant<LayerWeightedEqual, EqualFreeSpace, EqualToleranceFactor, PerLayerEqual>;

std::string strategyName(const AllocationStrategy& s);

struct LayerSplit {
  double freeA;
  double freeB;
};

LayerSplit layerWeightedSplit(double meanLA, double meanLB, const CrossLayerFactors& f, double sTotal);

/// Upper bound on the critical attack size under a total free-space budget;
/// attained by the layer-weighted equal split.
double optimalCriticalAttack(double meanLA, double meanLB, const CrossLayerFactors& f, double sTotal);

struct PerLayerCritical {
  double pA;
  double pB;
  double pOpt;
};

/// Per-layer critical sizes mu_i / (mu_i + E[L_i] + beta_j E[L_j]) and their
/// minimum, which bounds (and under even allocation equals) p*.
PerLayerCritical perLayerCritical(double muA, double muB, double meanLA, double meanLB, const CrossLayerFactors& f);

/// alpha = sTotal / (E[L_A] + E[L_B]).
double toleranceAlphaForBudget(double meanLA, double meanLB, double sTotal);

struct StrategyOptions {
  /// Stored rows backing the empirical queries of the tolerance-factor
  /// strategy.
  std::size_t empiricalRows = 1'000'000;
  std::uint64_t seed = 0x6d666c6f77ULL;
};

/// Builds the system config for a strategy. Dirac strategies keep the factorized
/// closed form. EqualToleranceFactor couples S to L per node, so its joint
/// queries are answered empirically (JointLoadSpace::Mode::Proportional).
SystemConfig applyStrategy(const AllocationStrategy& strategy, const MarginalDistribution& loadA,
                           const MarginalDistribution& loadB, const CrossLayerFactors& f,
                           const StrategyOptions& opts = {});

}  // namespace mflow
