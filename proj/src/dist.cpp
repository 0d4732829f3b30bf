#include "mflow/dist.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace mflow {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

bool finite(double v) { return std::isfinite(v); }

void validate(const MarginalDistribution::Params& params) {
  std::visit(Overloaded{
                 [](const Uniform& u) {
                   require(finite(u.min) && finite(u.max), "uniform: parameters must be finite");
                   require(u.min > 0.0, "uniform: min must be > 0");
                   require(u.min < u.max, "uniform: min must be < max");
                 },
                 [](const Pareto& p) {
                   require(finite(p.min) && finite(p.shape), "pareto: parameters must be finite");
                   require(p.min > 0.0, "pareto: min must be > 0");
                   require(p.shape > 1.0, "pareto: shape b must be > 1 (mean undefined otherwise)");
                 },
                 [](const Weibull& w) {
                   require(finite(w.min) && finite(w.scale) && finite(w.shape), "weibull: parameters must be finite");
                   require(w.min >= 0.0, "weibull: min must be >= 0");
                   require(w.scale > 0.0, "weibull: lambda must be > 0");
                   require(w.shape > 0.0, "weibull: k must be > 0");
                 },
                 [](const Dirac& d) {
                   require(finite(d.value), "dirac: value must be finite");
                   require(d.value > 0.0, "dirac: value must be > 0");
                 },
             },
             params);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

double uniformOpen(Rng& rng) {
  // (k + 0.5) / 2^53 for k in [0, 2^53) never hits 0 or 1.
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t uniformIndex(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % bound;
}

std::uint64_t mixSeed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

MarginalDistribution::MarginalDistribution(Params params) : params_(params) { validate(params_); }

std::string MarginalDistribution::describe() const {
  return std::visit(Overloaded{
                        [](const Uniform& u) { return "U(" + fmt(u.min) + "," + fmt(u.max) + ")"; },
                        [](const Pareto& p) { return "Par(" + fmt(p.min) + "," + fmt(p.shape) + ")"; },
                        [](const Weibull& w) {
                          return "Wei(" + fmt(w.min) + "," + fmt(w.scale) + "," + fmt(w.shape) + ")";
                        },
                        [](const Dirac& d) { return "Dirac(" + fmt(d.value) + ")"; },
                    },
                    params_);
}

double mean(const MarginalDistribution& d) {
  return std::visit(Overloaded{
                        [](const Uniform& u) { return 0.5 * (u.min + u.max); },
                        [](const Pareto& p) { return p.min * p.shape / (p.shape - 1.0); },
                        [](const Weibull& w) { return w.min + w.scale * std::tgamma(1.0 + 1.0 / w.shape); },
                        [](const Dirac& v) { return v.value; },
                    },
                    d.params());
}

double survival(const MarginalDistribution& d, double x) {
  return std::visit(Overloaded{
                        [x](const Uniform& u) {
                          if (x < u.min) return 1.0;
                          if (x >= u.max) return 0.0;
                          return (u.max - x) / (u.max - u.min);
                        },
                        [x](const Pareto& p) { return x < p.min ? 1.0 : std::pow(p.min / x, p.shape); },
                        [x](const Weibull& w) {
                          if (x <= w.min) return 1.0;
                          return std::exp(-std::pow((x - w.min) / w.scale, w.shape));
                        },
                        [x](const Dirac& v) { return v.value > x ? 1.0 : 0.0; },
                    },
                    d.params());
}

double quantile(const MarginalDistribution& d, double u) {
  return std::visit(Overloaded{
                        [u](const Uniform& v) { return v.min + u * (v.max - v.min); },
                        [u](const Pareto& p) { return p.min * std::pow(1.0 - u, -1.0 / p.shape); },
                        [u](const Weibull& w) { return w.min + w.scale * std::pow(-std::log1p(-u), 1.0 / w.shape); },
                        [](const Dirac& v) { return v.value; },
                    },
                    d.params());
}

double sample(const MarginalDistribution& d, Rng& rng) {
  if (d.isDirac()) return std::get<Dirac>(d.params()).value;
  return quantile(d, uniformOpen(rng));
}

double supportMin(const MarginalDistribution& d) {
  return std::visit(Overloaded{
                        [](const Uniform& u) { return u.min; },
                        [](const Pareto& p) { return p.min; },
                        [](const Weibull& w) { return w.min; },
                        [](const Dirac& v) { return v.value; },
                    },
                    d.params());
}

double supportMax(const MarginalDistribution& d) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return std::visit(Overloaded{
                        [](const Uniform& u) { return u.max; },
                        [](const Pareto&) { return inf; },
                        [](const Weibull&) { return inf; },
                        [](const Dirac& v) { return v.value; },
                    },
                    d.params());
}

// ---------------------------------------------------------------------------
// JointLoadSpace

JointLoadSpace JointLoadSpace::independent(MarginalDistribution loadA, MarginalDistribution freeA,
                                           MarginalDistribution loadB, MarginalDistribution freeB) {
  JointLoadSpace j;
  j.mode_ = Mode::Independent;
  j.meanLoadA_ = mean(loadA);
  j.meanLoadB_ = mean(loadB);
  j.meanFreeA_ = mean(freeA);
  j.meanFreeB_ = mean(freeB);
  j.loadA_ = std::move(loadA);
  j.freeA_ = std::move(freeA);
  j.loadB_ = std::move(loadB);
  j.freeB_ = std::move(freeB);
  return j;
}

void JointLoadSpace::storeRows(std::span<const LoadSample> rows) {
  auto r = std::make_shared<Rows>();
  r->loadA.reserve(rows.size());
  r->freeA.reserve(rows.size());
  r->loadB.reserve(rows.size());
  r->freeB.reserve(rows.size());
  for (const auto& s : rows) {
    r->loadA.push_back(s.loadA);
    r->freeA.push_back(s.freeA);
    r->loadB.push_back(s.loadB);
    r->freeB.push_back(s.freeB);
  }
  const double m = static_cast<double>(rows.size());
  auto avg = [m](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / m; };
  meanLoadA_ = avg(r->loadA);
  meanFreeA_ = avg(r->freeA);
  meanLoadB_ = avg(r->loadB);
  meanFreeB_ = avg(r->freeB);
  rows_ = std::move(r);
}

JointLoadSpace JointLoadSpace::empirical(std::span<const LoadSample> rows) {
  require(rows.size() >= kMinEmpiricalRows,
          "empirical: need at least " + std::to_string(kMinEmpiricalRows) + " sample rows, got " +
              std::to_string(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = rows[i];
    const bool ok = s.loadA > 0 && s.freeA > 0 && s.loadB > 0 && s.freeB > 0 && std::isfinite(s.loadA) &&
                    std::isfinite(s.freeA) && std::isfinite(s.loadB) && std::isfinite(s.freeB);
    require(ok, "empirical: row " + std::to_string(i) + " is not strictly positive and finite");
  }
  JointLoadSpace j;
  j.mode_ = Mode::Empirical;
  j.storeRows(rows);
  return j;
}

JointLoadSpace JointLoadSpace::proportional(MarginalDistribution loadA, MarginalDistribution loadB, double alphaA,
                                            double alphaB, std::size_t rows, std::uint64_t seed) {
  require(std::isfinite(alphaA) && alphaA > 0.0 && std::isfinite(alphaB) && alphaB > 0.0,
          "tolerance factor alpha must be > 0");
  require(rows >= kMinEmpiricalRows, "proportional: need at least " + std::to_string(kMinEmpiricalRows) + " rows");
  Rng rng(seed);
  std::vector<LoadSample> samples(rows);
  for (auto& s : samples) {
    s.loadA = sample(loadA, rng);
    s.loadB = sample(loadB, rng);
    s.freeA = alphaA * s.loadA;
    s.freeB = alphaB * s.loadB;
  }
  JointLoadSpace j;
  j.mode_ = Mode::Proportional;
  j.storeRows(samples);
  j.loadA_ = std::move(loadA);
  j.loadB_ = std::move(loadB);
  j.alphaA_ = alphaA;
  j.alphaB_ = alphaB;
  return j;
}

JointLoadSpace::Tail JointLoadSpace::tail(double x, double y) const {
  if (mode_ == Mode::Independent) {
    const double p = survival(*freeA_, x) * survival(*freeB_, y);
    return {p, meanLoadA_ * p, meanLoadB_ * p};
  }
  const auto& r = *rows_;
  const std::size_t m = r.loadA.size();
  std::size_t count = 0;
  double sumA = 0.0;
  double sumB = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const bool pass = (r.freeA[i] > x) & (r.freeB[i] > y);
    count += pass;
    sumA += pass ? r.loadA[i] : 0.0;
    sumB += pass ? r.loadB[i] : 0.0;
  }
  const double dm = static_cast<double>(m);
  return {static_cast<double>(count) / dm, sumA / dm, sumB / dm};
}

double JointLoadSpace::jointSurvival(double x, double y) const { return tail(x, y).survival; }

double JointLoadSpace::partialLoadExpectation(Layer layer, double x, double y) const {
  const Tail t = tail(x, y);
  return layer == Layer::A ? t.loadA : t.loadB;
}

LoadSample JointLoadSpace::draw(Rng& rng) const {
  switch (mode_) {
    case Mode::Independent: {
      LoadSample s{};
      s.loadA = sample(*loadA_, rng);
      s.freeA = sample(*freeA_, rng);
      s.loadB = sample(*loadB_, rng);
      s.freeB = sample(*freeB_, rng);
      return s;
    }
    case Mode::Proportional: {
      LoadSample s{};
      s.loadA = sample(*loadA_, rng);
      s.loadB = sample(*loadB_, rng);
      s.freeA = alphaA_ * s.loadA;
      s.freeB = alphaB_ * s.loadB;
      return s;
    }
    case Mode::Empirical:
      break;
  }
  const auto& r = *rows_;
  const auto i = uniformIndex(rng, r.loadA.size());
  return {r.loadA[i], r.freeA[i], r.loadB[i], r.freeB[i]};
}

double JointLoadSpace::freeSupportCap(Layer layer) const {
  if (mode_ == Mode::Independent) {
    const auto& d = layer == Layer::A ? *freeA_ : *freeB_;
    const double hi = supportMax(d);
    return std::isfinite(hi) ? hi : quantile(d, 1.0 - 1e-6);
  }
  const auto& col = layer == Layer::A ? rows_->freeA : rows_->freeB;
  return *std::max_element(col.begin(), col.end());
}

}  // namespace mflow
