#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace mflow {

/// Raised for invalid distribution parameters or malformed experiment input.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Rng = std::mt19937_64;

/// Uniform double in the open interval (0, 1) from the top 53 bits of one
/// engine draw. Unlike std::uniform_real_distribution the sequence does not
/// depend on the standard library implementation.
double uniformOpen(Rng& rng);

/// Unbiased integer in [0, bound) by rejection. bound must be > 0.
std::uint64_t uniformIndex(Rng& rng, std::uint64_t bound);

/// splitmix64-style seed derivation used to give every (stream, index) pair
/// its own engine.
std::uint64_t mixSeed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

enum class Layer { A, B };

struct Uniform {
  double min;
  double max;
};

struct Pareto {
  double min;
  double shape;  // b
};

struct Weibull {
  double min;
  double scale;  // lambda
  double shape;  // k
};

struct Dirac {
  double value;
};

/// A load or free-space marginal. Always valid once constructed; the factory
/// functions throw ConfigError otherwise.
class MarginalDistribution {
 public:
  using Params = std::variant<Uniform, Pareto, Weibull, Dirac>;

  explicit MarginalDistribution(Params params);

  static MarginalDistribution uniform(double min, double max) { return MarginalDistribution(Uniform{min, max}); }
  static MarginalDistribution pareto(double min, double shape) { return MarginalDistribution(Pareto{min, shape}); }
  static MarginalDistribution weibull(double min, double scale, double shape) {
    return MarginalDistribution(Weibull{min, scale, shape});
  }
  static MarginalDistribution dirac(double value) { return MarginalDistribution(Dirac{value}); }

  const Params& params() const noexcept { return params_; }
  bool isDirac() const noexcept { return std::holds_alternative<Dirac>(params_); }

  /// e.g. "U(20,40)", "Par(5,2)", "Wei(10,10.78,6)", "Dirac(360)".
  std::string describe() const;

 private:
  Params params_;
};

double mean(const MarginalDistribution& d);

/// P[X > x]. Exact for every variant; a Dirac mass at v survives x iff v > x.
double survival(const MarginalDistribution& d, double x);

inline double cdf(const MarginalDistribution& d, double x) { return 1.0 - survival(d, x); }

/// Inverse CDF for u in (0, 1).
double quantile(const MarginalDistribution& d, double u);

double sample(const MarginalDistribution& d, Rng& rng);

double supportMin(const MarginalDistribution& d);
/// +inf for Pareto and Weibull.
double supportMax(const MarginalDistribution& d);

/// One node's (L_A, S_A, L_B, S_B) tuple.
struct LoadSample {
  double loadA;
  double freeA;
  double loadB;
  double freeB;
};

/// Joint law of (L_A, S_A, L_B, S_B) for one node.
///
/// Independent mode factorizes every query into marginal queries. Empirical
/// mode answers queries from a fixed stored sample matrix, so repeated solves
/// against the same space are deterministic. Proportional mode (S_i = alpha_i
/// * L_i per node) is empirical for queries but draws fresh loads when a
/// population is built.
class JointLoadSpace {
 public:
  enum class Mode { Independent, Empirical, Proportional };

  static constexpr std::size_t kMinEmpiricalRows = 10'000;

  static JointLoadSpace independent(MarginalDistribution loadA, MarginalDistribution freeA,
                                    MarginalDistribution loadB, MarginalDistribution freeB);

  /// Rows must number at least kMinEmpiricalRows and be strictly positive.
  static JointLoadSpace empirical(std::span<const LoadSample> rows);

  static JointLoadSpace proportional(MarginalDistribution loadA, MarginalDistribution loadB, double alphaA,
                                     double alphaB, std::size_t rows, std::uint64_t seed);

  Mode mode() const noexcept { return mode_; }

  double meanLoad(Layer layer) const noexcept { return layer == Layer::A ? meanLoadA_ : meanLoadB_; }
  double meanFree(Layer layer) const noexcept { return layer == Layer::A ? meanFreeA_ : meanFreeB_; }

  /// P[S_A > x, S_B > y].
  double jointSurvival(double x, double y) const;

  /// E[L_layer * 1[S_A > x, S_B > y]].
  double partialLoadExpectation(Layer layer, double x, double y) const;

  /// Both queries in one pass over the samples (a single product in
  /// independent mode). Returns {P, E[L_A 1], E[L_B 1]}.
  struct Tail {
    double survival;
    double loadA;
    double loadB;
  };
  Tail tail(double x, double y) const;

  /// Draw one node. Independent and proportional modes sample the marginals;
  /// empirical mode resamples stored rows uniformly.
  LoadSample draw(Rng& rng) const;

  /// Upper end of the free-space support, or a far quantile when unbounded.
  double freeSupportCap(Layer layer) const;

  /// Marginals, present in independent mode (all four) and proportional mode
  /// (loads only).
  const std::optional<MarginalDistribution>& loadMarginal(Layer layer) const {
    return layer == Layer::A ? loadA_ : loadB_;
  }
  const std::optional<MarginalDistribution>& freeMarginal(Layer layer) const {
    return layer == Layer::A ? freeA_ : freeB_;
  }
  double alpha(Layer layer) const noexcept { return layer == Layer::A ? alphaA_ : alphaB_; }
  std::size_t rowCount() const noexcept { return rows_ ? rows_->loadA.size() : 0; }

 private:
  // Empirical rows, struct-of-arrays. Shared so copies of a space stay cheap.
  struct Rows {
    std::vector<double> loadA, freeA, loadB, freeB;
  };

  JointLoadSpace() = default;
  void storeRows(std::span<const LoadSample> rows);

  Mode mode_ = Mode::Independent;
  std::optional<MarginalDistribution> loadA_, freeA_, loadB_, freeB_;
  double alphaA_ = 0.0;
  double alphaB_ = 0.0;
  std::shared_ptr<const Rows> rows_;
  double meanLoadA_ = 0.0, meanLoadB_ = 0.0, meanFreeA_ = 0.0, meanFreeB_ = 0.0;
};

}  // namespace mflow
