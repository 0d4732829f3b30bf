#include "mflow/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mflow/parallel.hpp"

namespace mflow {

void CrossLayerFactors::validate() const {
  if (!(std::isfinite(betaA) && betaA >= 0.0 && std::isfinite(betaB) && betaB >= 0.0))
    throw ConfigError("cross-layer factors must be finite and >= 0");
}

void requireAttackFraction(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("attack fraction must lie in (0, 1), got " + std::to_string(p));
}

CascadeState initialState(double p, const SystemConfig& cfg) {
  requireAttackFraction(p);
  const double ratio = p / (1.0 - p);
  return {0, 1.0 - p, ratio * cfg.joint.meanLoad(Layer::A), ratio * cfg.joint.meanLoad(Layer::B), false};
}

CascadeState step(const CascadeState& s, double p, const SystemConfig& cfg, double collapseFloor) {
  if (s.collapsed) return CascadeState::collapse(s.t + 1);

  const auto tail = cfg.joint.tail(s.effectiveA(cfg.factors), s.effectiveB(cfg.factors));
  if (!(tail.survival >= collapseFloor)) return CascadeState::collapse(s.t + 1);

  const double kept = 1.0 - p;
  const double n = kept * tail.survival;
  CascadeState next;
  next.t = s.t + 1;
  next.n = n;
  next.qA = (cfg.joint.meanLoad(Layer::A) - kept * tail.loadA) / n;
  next.qB = (cfg.joint.meanLoad(Layer::B) - kept * tail.loadB) / n;
  return next;
}

SteadyState iterateToSteadyState(double p, const SystemConfig& cfg, const SolverOptions& opts,
                                 std::vector<CascadeState>* trajectory) {
  const auto& f = cfg.factors;
  CascadeState s = initialState(p, cfg);
  if (trajectory) trajectory->push_back(s);

  SteadyState out;
  bool settled = false;
  while (out.iterations < opts.maxIter) {
    CascadeState next = step(s, p, cfg, opts.collapseFloor);
    ++out.iterations;
    if (trajectory) trajectory->push_back(next);
    if (next.collapsed) {
      out.collapsed = true;
      out.converged = true;
      out.xStar = out.yStar = CascadeState::kInf;
      out.nInf = 0.0;
      return out;
    }
    const double a0 = s.effectiveA(f), b0 = s.effectiveB(f);
    const double a1 = next.effectiveA(f), b1 = next.effectiveB(f);
    const double change = std::max(std::abs(a1 - a0) / (1.0 + std::abs(a1)), std::abs(b1 - b0) / (1.0 + std::abs(b1)));
    s = next;
    if (change < opts.tol) {
      settled = true;
      break;
    }
  }

  out.converged = settled;
  out.xStar = s.qA;
  out.yStar = s.qB;
  // Final size evaluated at the fixed point itself rather than at the
  // previous iterate.
  const double surv = cfg.joint.jointSurvival(s.effectiveA(f), s.effectiveB(f));
  if (!(surv >= opts.collapseFloor)) {
    out.collapsed = true;
    out.nInf = 0.0;
    out.xStar = out.yStar = CascadeState::kInf;
    return out;
  }
  out.nInf = (1.0 - p) * surv;
  return out;
}

bool isStablePoint(double x, double y, double p, const SystemConfig& cfg, double relSlack) {
  requireAttackFraction(p);
  const auto& f = cfg.factors;
  const auto tail = cfg.joint.tail(x + f.betaB * y, y + f.betaA * x);
  if (!(tail.survival > 1e-15)) return false;
  const double kept = 1.0 - p;
  const double denom = kept * tail.survival;
  const double g = (cfg.joint.meanLoad(Layer::A) - kept * tail.loadA) / denom;
  const double h = (cfg.joint.meanLoad(Layer::B) - kept * tail.loadB) / denom;
  return x >= g * (1.0 - relSlack) && y >= h * (1.0 - relSlack);
}

SurvivalSurfaces survivalSurfaces(double x, double y, const SystemConfig& cfg) {
  const auto& f = cfg.factors;
  const auto tail = cfg.joint.tail(x + f.betaB * y, y + f.betaA * x);
  return {(tail.survival * x + tail.loadA) / cfg.joint.meanLoad(Layer::A),
          (tail.survival * y + tail.loadB) / cfg.joint.meanLoad(Layer::B)};
}

StableSetGrid stableSetGrid(double p, const SystemConfig& cfg, double xMax, double yMax, std::size_t resX,
                            std::size_t resY, std::size_t threads) {
  requireAttackFraction(p);
  if (!(xMax > 0.0 && yMax > 0.0)) throw std::domain_error("grid extent must be positive");
  if (resX < 2 || resY < 2) throw std::domain_error("grid resolution must be at least 2 per axis");

  StableSetGrid grid;
  grid.p = p;
  grid.xMax = xMax;
  grid.yMax = yMax;
  grid.resX = resX;
  grid.resY = resY;
  grid.lhsA.assign(resX * resY, 0.0);
  grid.lhsB.assign(resX * resY, 0.0);
  grid.stable.assign(resX * resY, 0);

  parallelFor(resY, threads, [&](std::size_t j) {
    const double y = grid.yAt(j);
    for (std::size_t i = 0; i < resX; ++i) {
      const double x = grid.xAt(i);
      const auto lhs = survivalSurfaces(x, y, cfg);
      grid.lhsA[j * resX + i] = lhs.lhsA;
      grid.lhsB[j * resX + i] = lhs.lhsB;
      grid.stable[j * resX + i] = isStablePoint(x, y, p, cfg) ? 1 : 0;
    }
  });

  for (std::size_t j = 0; j < resY; ++j) {
    for (std::size_t i = 0; i < resX; ++i) {
      if (!grid.marked(i, j)) continue;
      grid.minI = grid.minI ? std::min(*grid.minI, i) : i;
      grid.minJ = grid.minJ ? std::min(*grid.minJ, j) : j;
    }
  }
  return grid;
}

double defaultGridCap(const SystemConfig& cfg) {
  return 1.2 * std::max(cfg.joint.freeSupportCap(Layer::A), cfg.joint.freeSupportCap(Layer::B));
}

FinalSize finalSize(double p, const SystemConfig& cfg, const SolverOptions& opts) {
  const auto ss = iterateToSteadyState(p, cfg, opts);
  return {ss.nInf, ss.converged};
}

CriticalAttack criticalAttackSize(const SystemConfig& cfg, double tolP, const SolverOptions& opts,
                                  std::size_t scanPoints) {
  if (!(tolP > 0.0 && tolP < 0.5)) throw std::domain_error("tolP must lie in (0, 0.5)");

  CriticalAttack out;
  out.tolP = tolP;
  auto alive = [&](double p) {
    const auto fs = finalSize(p, cfg, opts);
    out.converged = out.converged && fs.converged;
    return fs.value > 0.0;
  };

  if (!alive(tolP)) {
    out.degenerate = true;
    return out;
  }

  // Coarse scan p_k = k / (scanPoints + 1).
  const double denom = static_cast<double>(scanPoints + 1);
  std::vector<bool> scan(scanPoints + 1, true);  // scan[0] stands for p = tolP
  std::size_t last = 0;
  for (std::size_t k = 1; k <= scanPoints; ++k) {
    const double pk = static_cast<double>(k) / denom;
    scan[k] = pk > tolP ? alive(pk) : true;
    if (scan[k]) last = k;
  }
  for (std::size_t k = 1; k < last; ++k)
    if (!scan[k]) out.nonMonotone = true;

  double lo = last == 0 ? tolP : static_cast<double>(last) / denom;
  double hi = last == scanPoints ? 1.0 : static_cast<double>(last + 1) / denom;
  while (hi - lo > tolP) {
    const double mid = 0.5 * (lo + hi);
    (alive(mid) ? lo : hi) = mid;
  }
  out.pHat = 0.5 * (lo + hi);
  return out;
}

}  // namespace mflow
