#include "mflow/sim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mflow/parallel.hpp"

namespace mflow {

namespace {

constexpr std::uint64_t kAttackStream = 0x61747461636b3031ULL;
constexpr std::uint64_t kSharedPopulation = 0xffffffffffffffffULL;

void pushTrajectory(CascadeOutcome& out, TrajectoryPoint point) {
  if (out.trajectory.size() > kMaxTrajectoryRounds) {
    out.trajectoryTruncated = true;
    return;
  }
  out.trajectory.push_back(point);
}

}  // namespace

Population buildPopulation(const SystemConfig& cfg, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::domain_error("population size must be >= 1");
  Population pop;
  pop.n = n;
  pop.factors = cfg.factors;
  pop.seed = seed;
  pop.loadA.resize(n);
  pop.freeA.resize(n);
  pop.loadB.resize(n);
  pop.freeB.resize(n);
  Rng rng(seed);
  for (std::size_t x = 0; x < n; ++x) {
    const LoadSample s = cfg.joint.draw(rng);
    pop.loadA[x] = s.loadA;
    pop.freeA[x] = s.freeA;
    pop.loadB[x] = s.loadB;
    pop.freeB[x] = s.freeB;
  }
  return pop;
}

std::size_t attackCount(std::size_t n, double p) {
  const double target = p * static_cast<double>(n);
  if (target < 1.0) return 0;
  return std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(target)));
}

std::vector<std::uint32_t> selectAttacked(std::size_t n, std::size_t count, std::uint64_t attackSeed) {
  if (n > std::numeric_limits<std::uint32_t>::max()) throw std::length_error("population too large");
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  Rng rng(attackSeed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + uniformIndex(rng, n - i);
    std::swap(order[i], order[j]);
  }
  order.resize(count);
  return order;
}

CascadeOutcome runCascade(const Population& pop, double p, std::uint64_t attackSeed, const RoundObserver& observer) {
  requireAttackFraction(p);
  const std::size_t n = pop.n;
  const double dn = static_cast<double>(n);
  const auto& f = pop.factors;

  CascadeOutcome out;
  out.alive.assign(n, 1);
  double failedA = 0.0;
  double failedB = 0.0;
  for (const auto x : selectAttacked(n, attackCount(n, p), attackSeed)) {
    out.alive[x] = 0;
    failedA += pop.loadA[x];
    failedB += pop.loadB[x];
  }

  std::vector<std::uint32_t> survivors;
  survivors.reserve(n);
  for (std::uint32_t x = 0; x < n; ++x)
    if (out.alive[x]) survivors.push_back(x);

  auto finish = [&] {
    out.survivors = survivors.size();
    out.survivingFraction = static_cast<double>(survivors.size()) / dn;
    return out;
  };

  if (survivors.empty()) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    pushTrajectory(out, {0, 0.0, inf, inf});
    return finish();
  }
  pushTrajectory(out, {0, static_cast<double>(survivors.size()) / dn, failedA / survivors.size(),
                       failedB / survivors.size()});
  if (survivors.size() == n) return finish();

  while (true) {
    const double s = static_cast<double>(survivors.size());
    const double qA = failedA / s;
    const double qB = failedB / s;
    if (observer) observer(out.rounds, survivors, qA, qB);
    const double effA = qA + f.betaB * qB;
    const double effB = qB + f.betaA * qA;
    ++out.rounds;

    std::size_t kept = 0;
    double newA = 0.0;
    double newB = 0.0;
    for (const auto x : survivors) {
      if (pop.freeA[x] < effA || pop.freeB[x] < effB) {
        out.alive[x] = 0;
        newA += pop.loadA[x];
        newB += pop.loadB[x];
      } else {
        survivors[kept++] = x;
      }
    }
    if (kept == survivors.size()) break;
    survivors.resize(kept);
    failedA += newA;
    failedB += newB;
    if (survivors.empty()) {
      constexpr double inf = std::numeric_limits<double>::infinity();
      pushTrajectory(out, {out.rounds, 0.0, inf, inf});
      break;
    }
    pushTrajectory(out, {out.rounds, static_cast<double>(kept) / dn, failedA / static_cast<double>(kept),
                         failedB / static_cast<double>(kept)});
  }
  return finish();
}

CascadeOutcome runCascadeNaive(const Population& pop, double p, std::uint64_t attackSeed) {
  requireAttackFraction(p);
  const std::size_t n = pop.n;
  const double dn = static_cast<double>(n);
  const auto& f = pop.factors;

  std::vector<double> curA = pop.loadA;
  std::vector<double> curB = pop.loadB;
  std::vector<double> capA(n), capB(n);
  for (std::size_t x = 0; x < n; ++x) {
    capA[x] = pop.loadA[x] + f.betaB * pop.loadB[x] + pop.freeA[x];
    capB[x] = pop.loadB[x] + f.betaA * pop.loadA[x] + pop.freeB[x];
  }

  CascadeOutcome out;
  out.alive.assign(n, 1);
  std::vector<std::uint32_t> failing = selectAttacked(n, attackCount(n, p), attackSeed);
  for (const auto x : failing) out.alive[x] = 0;
  std::vector<std::uint32_t> survivors;
  for (std::uint32_t x = 0; x < n; ++x)
    if (out.alive[x]) survivors.push_back(x);

  auto record = [&](std::size_t round) {
    if (survivors.empty()) {
      constexpr double inf = std::numeric_limits<double>::infinity();
      pushTrajectory(out, {round, 0.0, inf, inf});
    } else {
      const auto v = survivors.front();
      pushTrajectory(out, {round, static_cast<double>(survivors.size()) / dn, curA[v] - pop.loadA[v],
                           curB[v] - pop.loadB[v]});
    }
  };

  const bool attacked = !failing.empty();
  while (true) {
    // Hand the failed nodes' current loads to the survivors.
    if (!survivors.empty()) {
      const double s = static_cast<double>(survivors.size());
      for (const auto d : failing) {
        const double shareA = curA[d] / s;
        const double shareB = curB[d] / s;
        for (const auto v : survivors) {
          curA[v] += shareA;
          curB[v] += shareB;
        }
      }
    }
    record(out.rounds);
    if (survivors.empty() || !attacked) break;

    ++out.rounds;
    failing.clear();
    std::vector<std::uint32_t> next;
    for (const auto v : survivors) {
      const bool overA = curA[v] + f.betaB * curB[v] > capA[v];
      const bool overB = curB[v] + f.betaA * curA[v] > capB[v];
      if (overA || overB) {
        failing.push_back(v);
        out.alive[v] = 0;
      } else {
        next.push_back(v);
      }
    }
    if (failing.empty()) break;
    survivors = std::move(next);
  }
  out.survivors = survivors.size();
  out.survivingFraction = static_cast<double>(survivors.size()) / dn;
  return out;
}

std::vector<CurvePoint> monteCarloCurve(const SystemConfig& cfg, std::span<const double> pGrid,
                                        const MonteCarloOptions& opts) {
  if (opts.runs == 0) throw std::domain_error("runs must be >= 1");
  for (const double p : pGrid) requireAttackFraction(p);

  const std::size_t points = pGrid.size();
  const std::size_t tasks = points * opts.runs;
  std::vector<double> fraction(tasks);
  std::vector<std::size_t> rounds(tasks);

  Population shared;
  if (opts.reusePopulation) shared = buildPopulation(cfg, opts.n, mixSeed(opts.seedBase, kSharedPopulation));

  parallelFor(tasks, opts.threads, [&](std::size_t task) {
    const std::size_t i = task / opts.runs;
    const std::size_t r = task % opts.runs;
    const std::uint64_t attackSeed = mixSeed(opts.seedBase ^ kAttackStream, i, r);
    CascadeOutcome outcome;
    if (opts.reusePopulation) {
      outcome = runCascade(shared, pGrid[i], attackSeed);
    } else {
      const Population pop = buildPopulation(cfg, opts.n, mixSeed(opts.seedBase, i, r));
      outcome = runCascade(pop, pGrid[i], attackSeed);
    }
    fraction[task] = outcome.survivingFraction;
    rounds[task] = outcome.rounds;
  });

  std::vector<CurvePoint> curve(points);
  for (std::size_t i = 0; i < points; ++i) {
    auto& pt = curve[i];
    pt.p = pGrid[i];
    pt.runs = opts.runs;
    pt.n = opts.n;
    const auto first = fraction.begin() + static_cast<std::ptrdiff_t>(i * opts.runs);
    const auto last = first + static_cast<std::ptrdiff_t>(opts.runs);
    pt.mean = std::accumulate(first, last, 0.0) / static_cast<double>(opts.runs);
    // Identical runs report exactly zero rather than rounding noise.
    if (opts.runs > 1 && std::adjacent_find(first, last, std::not_equal_to<>()) != last) {
      double ss = 0.0;
      for (auto it = first; it != last; ++it) ss += (*it - pt.mean) * (*it - pt.mean);
      pt.stddev = std::sqrt(ss / static_cast<double>(opts.runs - 1));
    }
    if (opts.keepRuns) {
      pt.perRun.assign(first, last);
      pt.perRunRounds.assign(rounds.begin() + static_cast<std::ptrdiff_t>(i * opts.runs),
                             rounds.begin() + static_cast<std::ptrdiff_t>((i + 1) * opts.runs));
    }
  }
  return curve;
}

}  // namespace mflow
