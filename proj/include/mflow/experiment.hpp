#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mflow/alloc.hpp"
#include "mflow/analytic.hpp"
#include "mflow/dist.hpp"

namespace mflow {

enum class RunMode { Analytic, Simulate, Both };

struct SystemSpec {
  std::string name;
  /// Load marginals, when the system was described by marginals.
  std::optional<MarginalDistribution> loadA;
  std::optional<MarginalDistribution> loadB;
  CrossLayerFactors factors;
  /// Absent when the record gives loads only (enough for `optimize`).
  std::optional<SystemConfig> config;
};

struct SimParams {
  std::size_t n = 100'000;
  std::size_t runs = 20;
  std::optional<std::uint64_t> seedBase;
  bool reusePopulation = false;
  bool rawRuns = false;
};

struct StableSetParams {
  std::optional<double> p;
  std::size_t resolution = 400;
  std::optional<double> xMax;
  std::optional<double> yMax;
};

struct BudgetParams {
  std::optional<double> sTotal;
  std::optional<double> alpha;
};

struct OutputParams {
  std::string directory = "out";
  bool csv = true;
  bool json = true;
};

struct ExperimentSpec {
  std::vector<SystemSpec> systems;
  std::vector<double> pGrid;
  RunMode mode = RunMode::Analytic;
  SimParams sim;
  SolverOptions solver;
  double tolP = 1e-4;
  std::size_t empiricalRows = 1'000'000;
  StableSetParams stableSet;
  BudgetParams budget;
  OutputParams outputs;
  /// Normalized input with defaults filled in, embedded in every output.
  nlohmann::json resolved;
};

/// Command-line overrides applied on top of the file.
struct Overrides {
  std::optional<std::string> outDir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> format;  // "csv" or "json"
  std::optional<bool> rawRuns;
  std::optional<double> stableSetP;
};

/// Parses a distribution record such as {"kind": "pareto", "min": 5, "b": 2}.
/// `path` names the record in error messages.
MarginalDistribution parseDistribution(const nlohmann::json& j, const std::string& path);

/// Throws ConfigError naming the offending field.
ExperimentSpec parseExperiment(const nlohmann::json& j, const std::filesystem::path& baseDir = {},
                               const Overrides& overrides = {});
ExperimentSpec loadExperiment(const std::filesystem::path& file, const Overrides& overrides = {});

/// FNV-1a 64-bit of the compact resolved spec, as 16 hex digits.
std::string specChecksum(const nlohmann::json& resolved);

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNonConvergence = 3;

struct RunContext {
  std::size_t threads = 0;
  std::ostream* log = nullptr;
  /// Restricts stable-set to one named system.
  std::optional<std::string> system;
};

int cmdCurve(const ExperimentSpec& spec, const RunContext& ctx);
int cmdSimulate(const ExperimentSpec& spec, const RunContext& ctx);
int cmdCritical(const ExperimentSpec& spec, const RunContext& ctx);
int cmdStableSet(const ExperimentSpec& spec, const RunContext& ctx);
int cmdOptimize(const ExperimentSpec& spec, const RunContext& ctx);

}  // namespace mflow
