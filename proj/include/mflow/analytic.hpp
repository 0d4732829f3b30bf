#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "mflow/dist.hpp"

namespace mflow {

/// betaA is the unit impact of layer-A load on layer B's overload condition,
/// betaB the impact of layer-B load on layer A. (0, 0) is layer-independent
/// overload.
struct CrossLayerFactors {
  double betaA = 0.0;
  double betaB = 0.0;

  void validate() const;
};

struct SystemConfig {
  JointLoadSpace joint;
  CrossLayerFactors factors;
};

/// Mean-field state after iteration t. qA, qB are excess loads per surviving
/// node. A collapsed state has n = 0 and both excess loads at +inf.
struct CascadeState {
  std::size_t t = 0;
  double n = 1.0;
  double qA = 0.0;
  double qB = 0.0;
  bool collapsed = false;

  /// Q'_A = Q_A + betaB Q_B.
  double effectiveA(const CrossLayerFactors& f) const { return collapsed ? kInf : qA + f.betaB * qB; }
  /// Q'_B = Q_B + betaA Q_A.
  double effectiveB(const CrossLayerFactors& f) const { return collapsed ? kInf : qB + f.betaA * qA; }

  static constexpr double kInf = std::numeric_limits<double>::infinity();
  static CascadeState collapse(std::size_t t) { return {t, 0.0, kInf, kInf, true}; }
};

struct SolverOptions {
  /// Relative tolerance on the effective excess loads.
  double tol = 1e-10;
  std::size_t maxIter = 1'000'000;
  /// Joint survival probabilities below this are treated as total collapse.
  double collapseFloor = 1e-15;
};

struct SteadyState {
  double nInf = 0.0;
  double xStar = 0.0;
  double yStar = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool collapsed = false;
};

/// Throws std::domain_error unless 0 < p < 1.
void requireAttackFraction(double p);

CascadeState initialState(double p, const SystemConfig& cfg);

/// One round of the mean-field recursion. Collapse is absorbing.
CascadeState step(const CascadeState& s, double p, const SystemConfig& cfg, double collapseFloor = 1e-15);

/// Iterates step() until the effective excess loads stop moving, the system
/// collapses, or maxIter is reached. Starting below every stable point and
/// moving monotonically, the limit is the element-wise minimum stable point.
/// If `trajectory` is non-null every state (including t = 0) is appended.
SteadyState iterateToSteadyState(double p, const SystemConfig& cfg, const SolverOptions& opts = {},
                                 std::vector<CascadeState>* trajectory = nullptr);

/// Stable-point test x >= g(x, y), y >= h(x, y). `relSlack` loosens both
/// inequalities by a relative amount (0 evaluates them exactly).
bool isStablePoint(double x, double y, double p, const SystemConfig& cfg, double relSlack = 0.0);

/// Left-hand sides of the per-layer survival conditions; a point is stable
/// iff both are >= 1 / (1 - p).
struct SurvivalSurfaces {
  double lhsA;
  double lhsB;
};
SurvivalSurfaces survivalSurfaces(double x, double y, const SystemConfig& cfg);

struct StableSetGrid {
  double p = 0.0;
  double xMax = 0.0;
  double yMax = 0.0;
  std::size_t resX = 0;
  std::size_t resY = 0;
  /// Row-major, index j * resX + i for cell (i, j).
  std::vector<double> lhsA;
  std::vector<double> lhsB;
  std::vector<std::uint8_t> stable;
  /// Smallest marked column and row, if any cell is marked.
  std::optional<std::size_t> minI;
  std::optional<std::size_t> minJ;

  double threshold() const { return 1.0 / (1.0 - p); }
  double cellWidth() const { return xMax / static_cast<double>(resX); }
  double cellHeight() const { return yMax / static_cast<double>(resY); }
  double xAt(std::size_t i) const { return (static_cast<double>(i) + 0.5) * cellWidth(); }
  double yAt(std::size_t j) const { return (static_cast<double>(j) + 0.5) * cellHeight(); }
  bool marked(std::size_t i, std::size_t j) const { return stable[j * resX + i] != 0; }
  bool empty() const { return !minI.has_value(); }
};

/// Evaluates the stable-point test at cell centres of [0, xMax] x [0, yMax].
StableSetGrid stableSetGrid(double p, const SystemConfig& cfg, double xMax, double yMax, std::size_t resX,
                            std::size_t resY, std::size_t threads = 1);

/// Default grid extent: 1.2 x the largest free-space support.
double defaultGridCap(const SystemConfig& cfg);

struct FinalSize {
  double value = 0.0;
  bool converged = false;
};

FinalSize finalSize(double p, const SystemConfig& cfg, const SolverOptions& opts = {});

struct CriticalAttack {
  double pHat = 0.0;
  double tolP = 0.0;
  /// System already collapses at p = tolP.
  bool degenerate = false;
  /// The coarse scan saw a collapse followed by survival at larger p.
  bool nonMonotone = false;
  /// Every solve used by the search converged.
  bool converged = true;
};

/// Bisection for p* = sup{p : n_inf(p) > 0}, preceded by a coarse scan of
/// `scanPoints` attack sizes that locates the bracket and checks that the
/// collapse predicate is monotone.
CriticalAttack criticalAttackSize(const SystemConfig& cfg, double tolP = 1e-4, const SolverOptions& opts = {},
                                  std::size_t scanPoints = 50);

}  // namespace mflow
