#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mflow/analytic.hpp"
#include "mflow/dist.hpp"

namespace mflow {

/// Finite population of n nodes with per-node loads and free space. Node x
/// has capacities C_A = L_A + betaB L_B + S_A and C_B = L_B + betaA L_A + S_B.
struct Population {
  std::size_t n = 0;
  std::vector<double> loadA, freeA, loadB, freeB;
  CrossLayerFactors factors;
  std::uint64_t seed = 0;
};

Population buildPopulation(const SystemConfig& cfg, std::size_t n, std::uint64_t seed);

struct TrajectoryPoint {
  std::size_t round;
  double survivingFraction;
  double qA;
  double qB;
};

struct CascadeOutcome {
  double survivingFraction = 0.0;
  std::size_t survivors = 0;
  /// Redistribution rounds checked after the attack, including the final
  /// round that produced no failures.
  std::size_t rounds = 0;
  /// Round 0 is the state right after the attack.
  std::vector<TrajectoryPoint> trajectory;
  bool trajectoryTruncated = false;
  /// alive[x] != 0 iff node x survives.
  std::vector<std::uint8_t> alive;
};

inline constexpr std::size_t kMaxTrajectoryRounds = 10'000;

/// round(p * n) nodes, or none when p * n < 1.
std::size_t attackCount(std::size_t n, double p);

/// Distinct uniformly chosen node indices (partial Fisher-Yates).
std::vector<std::uint32_t> selectAttacked(std::size_t n, std::size_t count, std::uint64_t attackSeed);

/// Called at the start of every round with the current survivors and the
/// per-layer excess loads they carry.
using RoundObserver =
    std::function<void(std::size_t round, std::span<const std::uint32_t> survivors, double qA, double qB)>;

/// Global-redistribution cascade tracked through two aggregates: the total
/// initial load of failed nodes per layer. Every survivor carries the same
/// excess, so a node fails iff S_A < Q_A + betaB Q_B or S_B < Q_B + betaA Q_A.
CascadeOutcome runCascade(const Population& pop, double p, std::uint64_t attackSeed,
                          const RoundObserver& observer = {});

/// Per-node bookkeeping reference: every failed node hands its current loads
/// (initial plus received) to the survivors in equal shares, and each node is
/// tested against its fixed capacity. O(n^2); meant for n <= 1e4.
CascadeOutcome runCascadeNaive(const Population& pop, double p, std::uint64_t attackSeed);

struct MonteCarloOptions {
  std::size_t n = 100'000;
  std::size_t runs = 20;
  std::uint64_t seedBase = 1;
  /// Draw one population and vary only the attack across runs and p.
  bool reusePopulation = false;
  bool keepRuns = false;
  std::size_t threads = 0;
};

struct CurvePoint {
  double p = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t runs = 0;
  std::size_t n = 0;
  /// Filled when keepRuns is set.
  std::vector<double> perRun;
  std::vector<std::size_t> perRunRounds;
};

/// Mean and sample standard deviation of the surviving fraction per p. Run r
/// at grid index i uses streams derived from (seedBase, i, r), so results do
/// not depend on the thread count.
std::vector<CurvePoint> monteCarloCurve(const SystemConfig& cfg, std::span<const double> pGrid,
                                        const MonteCarloOptions& opts);

}  // namespace mflow
