#include "mflow/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "mflow/parallel.hpp"
#include "mflow/sim.hpp"

namespace mflow {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) { throw ConfigError(path + ": " + msg); }

const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) fail(path + "." + key, "missing");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

double numberField(const json& j, const char* key, const std::string& path) {
  return number(field(j, key, path), path + "." + key);
}

std::optional<double> optNumber(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) return std::nullopt;
  return number(j.at(key), path + "." + key);
}

std::size_t count(const json& j, const std::string& path, std::size_t minimum) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) fail(path, "expected an integer");
  const auto v = j.get<long long>();
  if (v < static_cast<long long>(minimum)) fail(path, "must be >= " + std::to_string(minimum));
  return static_cast<std::size_t>(v);
}

bool flag(const json& j, const char* key, const std::string& path, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) fail(path + "." + key, "expected true or false");
  return j.at(key).get<bool>();
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

std::string fmtNum(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string fmtShort(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<LoadSample> readRows(const fs::path& file, const std::string& path) {
  std::ifstream in(file);
  if (!in) fail(path, "cannot open " + file.string());
  std::vector<LoadSample> rows;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    LoadSample s{};
    if (!(ls >> s.loadA >> s.freeA >> s.loadB >> s.freeB)) {
      if (rows.empty() && lineNo == 1) continue;  // header
      fail(path, file.string() + ":" + std::to_string(lineNo) + ": expected four numbers");
    }
    rows.push_back(s);
  }
  return rows;
}

std::vector<double> parsePGrid(const json& j) {
  std::vector<double> grid;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) grid.push_back(number(j[i], "pGrid[" + std::to_string(i) + "]"));
  } else if (j.is_object()) {
    const double lo = numberField(j, "min", "pGrid");
    const double hi = numberField(j, "max", "pGrid");
    const std::size_t n = count(field(j, "count", "pGrid"), "pGrid.count", 1);
    if (hi < lo) fail("pGrid", "max must be >= min");
    for (std::size_t i = 0; i < n; ++i)
      grid.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  } else {
    fail("pGrid", "expected a list or {min, max, count}");
  }
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (!(grid[i] > 0.0 && grid[i] < 1.0)) fail("pGrid[" + std::to_string(i) + "]", "must lie strictly in (0, 1)");
  return grid;
}

AllocationStrategy parseAllocation(const json& j, const std::string& path, double meanLA, double meanLB) {
  const std::string kind = text(field(j, "strategy", path), path + ".strategy");
  if (kind == "layer-weighted") return LayerWeightedEqual{numberField(j, "sTotal", path)};
  if (kind == "equal-free-space") return EqualFreeSpace{numberField(j, "sTotal", path)};
  if (kind == "per-layer-equal") return PerLayerEqual{numberField(j, "muA", path), numberField(j, "muB", path)};
  if (kind == "equal-tolerance") {
    if (const auto alpha = optNumber(j, "alpha", path)) return EqualToleranceFactor{*alpha};
    return EqualToleranceFactor{toleranceAlphaForBudget(meanLA, meanLB, numberField(j, "sTotal", path))};
  }
  fail(path + ".strategy", "unknown strategy '" + kind +
                               "' (expected layer-weighted, equal-free-space, equal-tolerance, per-layer-equal)");
}

SystemSpec parseSystem(const json& j, const std::string& path, const fs::path& baseDir, std::size_t empiricalRows,
                       json& resolved) {
  SystemSpec sys;
  sys.name = text(field(j, "name", path), path + ".name");
  if (sys.name.empty() || sys.name.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-") !=
                              std::string::npos)
    fail(path + ".name", "use letters, digits, '_', '.', '-' only");

  resolved = json::object();
  resolved["name"] = sys.name;
  if (const auto both = optNumber(j, "beta", path)) sys.factors = {*both, *both};
  if (const auto a = optNumber(j, "betaA", path)) sys.factors.betaA = *a;
  if (const auto b = optNumber(j, "betaB", path)) sys.factors.betaB = *b;
  try {
    sys.factors.validate();
  } catch (const ConfigError& e) {
    fail(path + ".beta", e.what());
  }
  resolved["betaA"] = sys.factors.betaA;
  resolved["betaB"] = sys.factors.betaB;

  if (j.contains("empirical")) {
    const auto& e = j.at("empirical");
    const std::string file = text(field(e, "file", path + ".empirical"), path + ".empirical.file");
    const auto rows = readRows(baseDir / file, path + ".empirical.file");
    try {
      sys.config = SystemConfig{JointLoadSpace::empirical(rows), sys.factors};
    } catch (const ConfigError& err) {
      fail(path + ".empirical", err.what());
    }
    resolved["empirical"] = {{"file", file}, {"rows", rows.size()}};
    return sys;
  }

  auto dist = [&](const char* key) {
    const auto d = parseDistribution(field(j, key, path), path + "." + key);
    resolved[key] = j.at(key);
    return d;
  };
  sys.loadA = dist("loadA");
  sys.loadB = dist("loadB");

  const bool hasFree = j.contains("freeA") || j.contains("freeB");
  if (hasFree && j.contains("allocation")) fail(path, "give either freeA/freeB or allocation, not both");
  if (hasFree) {
    const auto freeA = dist("freeA");
    const auto freeB = dist("freeB");
    sys.config = SystemConfig{JointLoadSpace::independent(*sys.loadA, freeA, *sys.loadB, freeB), sys.factors};
  } else if (j.contains("allocation")) {
    const auto strategy =
        parseAllocation(j.at("allocation"), path + ".allocation", mean(*sys.loadA), mean(*sys.loadB));
    StrategyOptions opts;
    opts.empiricalRows = empiricalRows;
    try {
      sys.config = applyStrategy(strategy, *sys.loadA, *sys.loadB, sys.factors, opts);
    } catch (const ConfigError& err) {
      fail(path + ".allocation", err.what());
    }
    json alloc = j.at("allocation");
    if (const auto* tf = std::get_if<EqualToleranceFactor>(&strategy)) alloc["alpha"] = tf->alpha;
    resolved["allocation"] = alloc;
  }
  return sys;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Writes CSV and JSON artifacts stamped with the resolved spec.
class Sink {
 public:
  explicit Sink(const ExperimentSpec& spec) : spec_(spec), dir_(spec.outputs.directory), sum_(specChecksum(spec.resolved)) {
    fs::create_directories(dir_);
  }

  void csv(const std::string& file, const std::string& kind, const std::vector<std::string>& columns,
           const std::vector<std::vector<std::string>>& rows) const {
    std::ofstream out(dir_ / file, std::ios::binary);
    out << "# mflow " << kind << " v1\n";
    out << "# spec-fnv1a64 " << sum_ << "\n";
    out << "# spec " << spec_.resolved.dump() << "\n";
    writeRow(out, columns);
    for (const auto& r : rows) writeRow(out, r);
    if (!out) throw std::runtime_error("failed writing " + (dir_ / file).string());
  }

  void jsonFile(const std::string& file, const std::string& kind, json body) const {
    body["schema"] = "mflow " + kind + " v1";
    body["specChecksum"] = sum_;
    body["spec"] = spec_.resolved;
    std::ofstream out(dir_ / file, std::ios::binary);
    out << body.dump(2) << "\n";
    if (!out) throw std::runtime_error("failed writing " + (dir_ / file).string());
  }

  const fs::path& dir() const { return dir_; }

 private:
  static void writeRow(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  }

  const ExperimentSpec& spec_;
  fs::path dir_;
  std::string sum_;
};

std::ostream& logOf(const RunContext& ctx) {
  static std::ostream null(nullptr);
  return ctx.log ? *ctx.log : null;
}

const SystemConfig& requireConfig(const SystemSpec& sys) {
  if (!sys.config) throw ConfigError("systems." + sys.name + ": free space (freeA/freeB, allocation or empirical) required");
  return *sys.config;
}

void requirePGrid(const ExperimentSpec& spec) {
  if (spec.pGrid.empty()) throw ConfigError("pGrid: empty; give a list or {min, max, count}");
}

MonteCarloOptions mcOptions(const ExperimentSpec& spec, const RunContext& ctx) {
  if (!spec.sim.seedBase) throw ConfigError("sim.seedBase: missing (required when simulating; or pass --seed)");
  MonteCarloOptions o;
  o.n = spec.sim.n;
  o.runs = spec.sim.runs;
  o.seedBase = *spec.sim.seedBase;
  o.reusePopulation = spec.sim.reusePopulation;
  o.keepRuns = spec.sim.rawRuns;
  o.threads = ctx.threads;
  return o;
}

void writeRawRuns(const Sink& sink, const std::string& name, const std::vector<CurvePoint>& curve) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& pt : curve)
    for (std::size_t r = 0; r < pt.perRun.size(); ++r)
      rows.push_back({fmtNum(pt.p), std::to_string(r), fmtNum(pt.perRun[r]), std::to_string(pt.perRunRounds[r])});
  sink.csv(name + "_runs.csv", "runs", {"p", "run", "surviving_fraction", "rounds"}, rows);
}

}  // namespace

MarginalDistribution parseDistribution(const json& j, const std::string& path) {
  const std::string kind = text(field(j, "kind", path), path + ".kind");
  try {
    if (kind == "uniform") return MarginalDistribution::uniform(numberField(j, "min", path), numberField(j, "max", path));
    if (kind == "pareto") return MarginalDistribution::pareto(numberField(j, "min", path), numberField(j, "b", path));
    if (kind == "weibull")
      return MarginalDistribution::weibull(numberField(j, "min", path), numberField(j, "lambda", path),
                                           numberField(j, "k", path));
    if (kind == "dirac") return MarginalDistribution::dirac(numberField(j, "value", path));
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(path, 0) == 0) throw;
    fail(path, what);
  }
  fail(path + ".kind", "unknown kind '" + kind + "' (expected uniform, pareto, weibull, dirac)");
}

std::string specChecksum(const json& resolved) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : resolved.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

ExperimentSpec parseExperiment(const json& j, const fs::path& baseDir, const Overrides& overrides) {
  if (!j.is_object()) fail("config", "top level must be an object");
  ExperimentSpec spec;
  json& r = spec.resolved;

  if (j.contains("empiricalRows"))
    spec.empiricalRows = count(j.at("empiricalRows"), "empiricalRows", JointLoadSpace::kMinEmpiricalRows);
  r["empiricalRows"] = spec.empiricalRows;

  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    if (const auto tol = optNumber(s, "tol", "solver")) spec.solver.tol = *tol;
    if (s.contains("maxIter")) spec.solver.maxIter = count(s.at("maxIter"), "solver.maxIter", 1);
    if (const auto tp = optNumber(s, "tolP", "solver")) spec.tolP = *tp;
    if (!(spec.solver.tol > 0.0)) fail("solver.tol", "must be > 0");
    if (!(spec.tolP > 0.0 && spec.tolP < 0.5)) fail("solver.tolP", "must lie in (0, 0.5)");
  }
  r["solver"] = {{"tol", spec.solver.tol}, {"maxIter", spec.solver.maxIter}, {"tolP", spec.tolP}};

  const auto& systems = field(j, "systems", "config");
  if (!systems.is_array() || systems.empty()) fail("systems", "expected a non-empty list");
  std::set<std::string> names;
  r["systems"] = json::array();
  for (std::size_t i = 0; i < systems.size(); ++i) {
    json resolvedSystem;
    auto sys = parseSystem(systems[i], "systems[" + std::to_string(i) + "]", baseDir, spec.empiricalRows,
                           resolvedSystem);
    if (!names.insert(sys.name).second) fail("systems[" + std::to_string(i) + "].name", "duplicate '" + sys.name + "'");
    spec.systems.push_back(std::move(sys));
    r["systems"].push_back(std::move(resolvedSystem));
  }

  if (j.contains("pGrid")) spec.pGrid = parsePGrid(j.at("pGrid"));
  r["pGrid"] = spec.pGrid;

  if (j.contains("mode")) {
    const std::string m = text(j.at("mode"), "mode");
    if (m == "analytic") spec.mode = RunMode::Analytic;
    else if (m == "simulate") spec.mode = RunMode::Simulate;
    else if (m == "both") spec.mode = RunMode::Both;
    else fail("mode", "expected analytic, simulate or both");
  }
  r["mode"] = spec.mode == RunMode::Analytic ? "analytic" : spec.mode == RunMode::Simulate ? "simulate" : "both";

  if (j.contains("sim")) {
    const auto& s = j.at("sim");
    if (s.contains("n")) spec.sim.n = count(s.at("n"), "sim.n", 1);
    if (s.contains("runs")) spec.sim.runs = count(s.at("runs"), "sim.runs", 1);
    if (s.contains("seedBase")) {
      const auto& sb = s.at("seedBase");
      if (!sb.is_number_unsigned() && !(sb.is_number_integer() && sb.get<long long>() >= 0))
        fail("sim.seedBase", "expected a non-negative integer");
      spec.sim.seedBase = sb.get<std::uint64_t>();
    }
    spec.sim.reusePopulation = flag(s, "reusePopulation", "sim", false);
    spec.sim.rawRuns = flag(s, "rawRuns", "sim", false);
  }
  if (overrides.seed) spec.sim.seedBase = overrides.seed;
  if (overrides.rawRuns) spec.sim.rawRuns = *overrides.rawRuns;
  if (spec.mode != RunMode::Analytic && !spec.sim.seedBase)
    fail("sim.seedBase", "missing (required when mode includes simulate)");
  r["sim"] = {{"n", spec.sim.n},
              {"runs", spec.sim.runs},
              {"reusePopulation", spec.sim.reusePopulation},
              {"rawRuns", spec.sim.rawRuns}};
  r["sim"]["seedBase"] = spec.sim.seedBase ? json(*spec.sim.seedBase) : json(nullptr);

  if (j.contains("stableSet")) {
    const auto& s = j.at("stableSet");
    spec.stableSet.p = optNumber(s, "p", "stableSet");
    if (s.contains("resolution")) spec.stableSet.resolution = count(s.at("resolution"), "stableSet.resolution", 2);
    spec.stableSet.xMax = optNumber(s, "xMax", "stableSet");
    spec.stableSet.yMax = optNumber(s, "yMax", "stableSet");
  }
  if (overrides.stableSetP) spec.stableSet.p = overrides.stableSetP;
  if (spec.stableSet.p && !(*spec.stableSet.p > 0.0 && *spec.stableSet.p < 1.0))
    fail("stableSet.p", "must lie strictly in (0, 1)");
  r["stableSet"] = {{"resolution", spec.stableSet.resolution}};
  if (spec.stableSet.p) r["stableSet"]["p"] = *spec.stableSet.p;
  if (spec.stableSet.xMax) r["stableSet"]["xMax"] = *spec.stableSet.xMax;
  if (spec.stableSet.yMax) r["stableSet"]["yMax"] = *spec.stableSet.yMax;

  if (j.contains("budget")) {
    const auto& b = j.at("budget");
    spec.budget.sTotal = optNumber(b, "sTotal", "budget");
    spec.budget.alpha = optNumber(b, "alpha", "budget");
    if (spec.budget.sTotal && !(*spec.budget.sTotal > 0.0)) fail("budget.sTotal", "must be > 0");
    if (spec.budget.alpha && !(*spec.budget.alpha > 0.0)) fail("budget.alpha", "must be > 0");
    r["budget"] = json::object();
    if (spec.budget.sTotal) r["budget"]["sTotal"] = *spec.budget.sTotal;
    if (spec.budget.alpha) r["budget"]["alpha"] = *spec.budget.alpha;
  }

  if (j.contains("outputs")) {
    const auto& o = j.at("outputs");
    if (o.contains("directory")) spec.outputs.directory = text(o.at("directory"), "outputs.directory");
    if (o.contains("formats")) {
      const auto& f = o.at("formats");
      if (!f.is_array()) fail("outputs.formats", "expected a list");
      spec.outputs.csv = spec.outputs.json = false;
      for (const auto& e : f) {
        const std::string s = text(e, "outputs.formats");
        if (s == "csv") spec.outputs.csv = true;
        else if (s == "json") spec.outputs.json = true;
        else fail("outputs.formats", "unknown format '" + s + "'");
      }
    }
  }
  if (overrides.outDir) spec.outputs.directory = *overrides.outDir;
  if (overrides.format) {
    if (*overrides.format == "csv") spec.outputs = {spec.outputs.directory, true, false};
    else if (*overrides.format == "json") spec.outputs = {spec.outputs.directory, false, true};
    else fail("--format", "expected csv or json");
  }
  // The output directory is deliberately left out so that the same spec
  // written to two places produces identical files.
  r["outputs"] = {{"csv", spec.outputs.csv}, {"json", spec.outputs.json}};
  return spec;
}

ExperimentSpec loadExperiment(const fs::path& file, const Overrides& overrides) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file.string() + ": cannot open");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return parseExperiment(j, file.parent_path(), overrides);
}

// ---------------------------------------------------------------------------
// Subcommands

int cmdCurve(const ExperimentSpec& spec, const RunContext& ctx) {
  requirePGrid(spec);
  const Sink sink(spec);
  auto& log = logOf(ctx);
  const bool analytic = spec.mode != RunMode::Simulate;
  const bool simulate = spec.mode != RunMode::Analytic;
  bool allConverged = true;

  for (const auto& sys : spec.systems) {
    const auto& cfg = requireConfig(sys);
    const std::size_t m = spec.pGrid.size();

    std::vector<FinalSize> theory(m);
    if (analytic)
      parallelFor(m, ctx.threads, [&](std::size_t i) { theory[i] = finalSize(spec.pGrid[i], cfg, spec.solver); });
    std::vector<CurvePoint> sim;
    if (simulate) sim = monteCarloCurve(cfg, spec.pGrid, mcOptions(spec, ctx));

    std::vector<std::string> columns{"p"};
    if (analytic) columns.insert(columns.end(), {"n_inf_analytic", "converged"});
    if (simulate) columns.insert(columns.end(), {"sim_mean", "sim_std"});
    std::vector<std::vector<std::string>> rows;
    json body{{"system", sys.name}, {"p", spec.pGrid}};
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<std::string> row{fmtNum(spec.pGrid[i])};
      if (analytic) {
        row.push_back(fmtNum(theory[i].value));
        row.push_back(theory[i].converged ? "1" : "0");
        body["n_inf_analytic"].push_back(theory[i].value);
        body["converged"].push_back(theory[i].converged);
        allConverged = allConverged && theory[i].converged;
      }
      if (simulate) {
        row.push_back(fmtNum(sim[i].mean));
        row.push_back(fmtNum(sim[i].stddev));
        body["sim_mean"].push_back(sim[i].mean);
        body["sim_std"].push_back(sim[i].stddev);
      }
      rows.push_back(std::move(row));
    }
    if (spec.outputs.csv) sink.csv(sys.name + "_curve.csv", "curve", columns, rows);
    if (spec.outputs.json) sink.jsonFile(sys.name + "_curve.json", "curve", body);
    if (simulate && spec.sim.rawRuns) writeRawRuns(sink, sys.name, sim);
    log << "curve " << sys.name << ": " << m << " points -> " << (sink.dir() / (sys.name + "_curve.*")).string()
        << "\n";
  }
  if (!allConverged) {
    log << "warning: some analytic points did not converge (converged = 0)\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

int cmdSimulate(const ExperimentSpec& spec, const RunContext& ctx) {
  requirePGrid(spec);
  const auto opts = mcOptions(spec, ctx);
  const Sink sink(spec);
  auto& log = logOf(ctx);
  for (const auto& sys : spec.systems) {
    const auto curve = monteCarloCurve(requireConfig(sys), spec.pGrid, opts);
    std::vector<std::vector<std::string>> rows;
    json body{{"system", sys.name}, {"p", spec.pGrid}, {"runs", opts.runs}, {"n", opts.n}};
    for (const auto& pt : curve) {
      rows.push_back({fmtNum(pt.p), fmtNum(pt.mean), fmtNum(pt.stddev), std::to_string(pt.runs), std::to_string(pt.n)});
      body["mean_n_inf"].push_back(pt.mean);
      body["std_n_inf"].push_back(pt.stddev);
    }
    if (spec.outputs.csv)
      sink.csv(sys.name + "_sim.csv", "simulate", {"p", "mean_n_inf", "std_n_inf", "runs", "n"}, rows);
    if (spec.outputs.json) sink.jsonFile(sys.name + "_sim.json", "simulate", body);
    if (spec.sim.rawRuns) writeRawRuns(sink, sys.name, curve);
    log << "simulate " << sys.name << ": " << curve.size() << " points x " << opts.runs << " runs (n = " << opts.n
        << ")\n";
  }
  return kExitOk;
}

int cmdCritical(const ExperimentSpec& spec, const RunContext& ctx) {
  const Sink sink(spec);
  auto& log = logOf(ctx);
  bool allConverged = true;

  struct Row {
    std::string name;
    CriticalAttack result;
    double boundTotal;
    double boundPerLayer;
  };
  std::vector<Row> table(spec.systems.size());
  for (const auto& sys : spec.systems) requireConfig(sys);
  parallelFor(spec.systems.size(), ctx.threads, [&](std::size_t i) {
    const auto& sys = spec.systems[i];
    const auto& cfg = *sys.config;
    const double eA = cfg.joint.meanLoad(Layer::A), eB = cfg.joint.meanLoad(Layer::B);
    const double sA = cfg.joint.meanFree(Layer::A), sB = cfg.joint.meanFree(Layer::B);
    table[i] = {sys.name, criticalAttackSize(cfg, spec.tolP, spec.solver),
                optimalCriticalAttack(eA, eB, cfg.factors, sA + sB),
                perLayerCritical(sA, sB, eA, eB, cfg.factors).pOpt};
  });

  std::vector<std::vector<std::string>> rows;
  json body{{"systems", json::array()}};
  std::size_t nameWidth = 8;
  for (const auto& row : table) nameWidth = std::max(nameWidth, row.name.size() + 2);
  const int w = static_cast<int>(nameWidth);
  log << std::left << std::setw(w) << "system" << std::setw(12) << "p_hat" << std::setw(10) << "tol_p" << std::setw(14)
      << "bound_total" << std::setw(16) << "bound_per_layer" << "flags\n";
  for (const auto& row : table) {
    const auto& c = row.result;
    allConverged = allConverged && c.converged;
    std::string flags;
    if (c.degenerate) flags += "degenerate ";
    if (c.nonMonotone) flags += "non-monotone ";
    if (!c.converged) flags += "not-converged";
    log << std::left << std::setw(w) << row.name << std::setw(12) << fmtShort(c.pHat) << std::setw(10)
        << fmtShort(c.tolP) << std::setw(14) << fmtShort(row.boundTotal) << std::setw(16) << fmtShort(row.boundPerLayer)
        << flags << "\n";
    rows.push_back({row.name, fmtNum(c.pHat), fmtNum(c.tolP), fmtNum(row.boundTotal), fmtNum(row.boundPerLayer),
                    c.degenerate ? "1" : "0", c.nonMonotone ? "1" : "0", c.converged ? "1" : "0"});
    body["systems"].push_back({{"name", row.name},
                               {"p_hat", c.pHat},
                               {"tol_p", c.tolP},
                               {"bound_total", row.boundTotal},
                               {"bound_per_layer", row.boundPerLayer},
                               {"degenerate", c.degenerate},
                               {"non_monotone", c.nonMonotone},
                               {"converged", c.converged}});
  }
  if (spec.outputs.csv)
    sink.csv("critical.csv", "critical",
             {"system", "p_hat", "tol_p", "bound_total", "bound_per_layer", "degenerate", "non_monotone", "converged"},
             rows);
  if (spec.outputs.json) sink.jsonFile("critical.json", "critical", body);
  return allConverged ? kExitOk : kExitNonConvergence;
}

int cmdStableSet(const ExperimentSpec& spec, const RunContext& ctx) {
  const SystemSpec* chosen = nullptr;
  if (ctx.system) {
    for (const auto& s : spec.systems)
      if (s.name == *ctx.system) chosen = &s;
    if (!chosen) throw ConfigError("--system: no system named '" + *ctx.system + "'");
  } else if (spec.systems.size() == 1) {
    chosen = &spec.systems.front();
  } else {
    throw ConfigError("systems: stable-set needs a single system (or --system <name>)");
  }
  if (!spec.stableSet.p) throw ConfigError("stableSet.p: missing (or pass --p)");
  const double p = *spec.stableSet.p;
  const auto& cfg = requireConfig(*chosen);
  const double cap = defaultGridCap(cfg);
  const double xMax = spec.stableSet.xMax.value_or(cap);
  const double yMax = spec.stableSet.yMax.value_or(cap);
  const std::size_t res = spec.stableSet.resolution;

  const auto grid = stableSetGrid(p, cfg, xMax, yMax, res, res, ctx.threads);
  const auto fixed = iterateToSteadyState(p, cfg, spec.solver);
  const Sink sink(spec);

  std::vector<std::vector<std::string>> rows;
  rows.reserve(res * res);
  for (std::size_t j = 0; j < res; ++j)
    for (std::size_t i = 0; i < res; ++i)
      rows.push_back({fmtNum(grid.xAt(i)), fmtNum(grid.yAt(j)), fmtNum(grid.lhsA[j * res + i]),
                      fmtNum(grid.lhsB[j * res + i]), grid.marked(i, j) ? "1" : "0"});
  if (spec.outputs.csv) sink.csv(chosen->name + "_stable_set.csv", "stable-set", {"x", "y", "lhsA", "lhsB", "stable"}, rows);

  json side{{"system", chosen->name},
            {"p", p},
            {"threshold", grid.threshold()},
            {"resolution", res},
            {"xMax", xMax},
            {"yMax", yMax},
            {"empty", grid.empty()},
            {"xStar", grid.empty() ? json(nullptr) : json(grid.xAt(*grid.minI))},
            {"yStar", grid.empty() ? json(nullptr) : json(grid.yAt(*grid.minJ))}};
  side["recursion"] = {{"collapsed", fixed.collapsed},
                       {"converged", fixed.converged},
                       {"nInf", fixed.nInf},
                       {"xStar", fixed.collapsed ? json(nullptr) : json(fixed.xStar)},
                       {"yStar", fixed.collapsed ? json(nullptr) : json(fixed.yStar)}};
  sink.jsonFile(chosen->name + "_stable_set.json", "stable-set", side);

  auto& log = logOf(ctx);
  if (grid.empty()) {
    log << "stable-set " << chosen->name << " p=" << fmtNum(p) << ": no stable points (collapse)\n";
  } else {
    log << "stable-set " << chosen->name << " p=" << fmtNum(p) << ": minimum cell (" << fmtNum(grid.xAt(*grid.minI))
        << ", " << fmtNum(grid.yAt(*grid.minJ)) << "), recursion fixed point (" << fmtNum(fixed.xStar) << ", "
        << fmtNum(fixed.yStar) << ")\n";
  }
  return fixed.converged ? kExitOk : kExitNonConvergence;
}

int cmdOptimize(const ExperimentSpec& spec, const RunContext& ctx) {
  if (!spec.budget.sTotal) throw ConfigError("budget.sTotal: missing (optimize needs a total free-space budget)");
  const double sTotal = *spec.budget.sTotal;
  const Sink sink(spec);
  auto& log = logOf(ctx);

  std::vector<std::vector<std::string>> rows;
  json body{{"sTotal", sTotal}, {"systems", json::array()}};
  bool allConverged = true;
  for (const auto& sys : spec.systems) {
    if (!sys.loadA || !sys.loadB) throw ConfigError("systems." + sys.name + ": optimize needs loadA and loadB");
    const double eA = mean(*sys.loadA), eB = mean(*sys.loadB);
    const auto& f = sys.factors;
    const double pOpt = optimalCriticalAttack(eA, eB, f, sTotal);
    const double alpha = spec.budget.alpha.value_or(toleranceAlphaForBudget(eA, eB, sTotal));

    StrategyOptions sopts;
    sopts.empiricalRows = spec.empiricalRows;
    const std::vector<AllocationStrategy> strategies{LayerWeightedEqual{sTotal}, EqualFreeSpace{sTotal},
                                                     EqualToleranceFactor{alpha}};
    std::vector<CriticalAttack> solved(strategies.size());
    parallelFor(strategies.size(), ctx.threads, [&](std::size_t k) {
      solved[k] = criticalAttackSize(applyStrategy(strategies[k], *sys.loadA, *sys.loadB, f, sopts), spec.tolP,
                                     spec.solver);
    });

    log << sys.name << "  (E[L_A] = " << fmtNum(eA) << ", E[L_B] = " << fmtNum(eB) << ", sTotal = " << fmtNum(sTotal)
        << ", p*_opt = " << fmtNum(pOpt) << ")\n";
    log << "  " << std::left << std::setw(20) << "strategy" << std::right << std::setw(12) << "S_A" << std::setw(12)
        << "S_B" << std::setw(10) << "alpha" << std::setw(13) << "p_critical" << "\n";
    json entry{{"name", sys.name}, {"meanLoadA", eA}, {"meanLoadB", eB}, {"pOpt", pOpt}, {"strategies", json::array()}};
    for (std::size_t k = 0; k < strategies.size(); ++k) {
      double sA = 0, sB = 0;
      std::optional<double> a;
      if (const auto* lw = std::get_if<LayerWeightedEqual>(&strategies[k])) {
        const auto split = layerWeightedSplit(eA, eB, f, lw->sTotal);
        sA = split.freeA;
        sB = split.freeB;
      } else if (std::holds_alternative<EqualFreeSpace>(strategies[k])) {
        sA = sB = 0.5 * sTotal;
      } else {
        a = alpha;
        sA = alpha * eA;
        sB = alpha * eB;
      }
      const auto name = strategyName(strategies[k]);
      allConverged = allConverged && solved[k].converged;
      log << "  " << std::left << std::setw(20) << name << std::right << std::setw(12) << fmtShort(sA) << std::setw(12)
          << fmtShort(sB) << std::setw(10) << (a ? fmtShort(*a) : "-") << std::setw(13) << fmtShort(solved[k].pHat)
          << "\n";
      rows.push_back({sys.name, name, fmtNum(sA), fmtNum(sB), a ? fmtNum(*a) : "", fmtNum(solved[k].pHat),
                      fmtNum(pOpt)});
      entry["strategies"].push_back({{"strategy", name},
                                     {"freeA", sA},
                                     {"freeB", sB},
                                     {"alpha", a ? json(*a) : json(nullptr)},
                                     {"pCritical", solved[k].pHat},
                                     {"converged", solved[k].converged}});
    }
    body["systems"].push_back(std::move(entry));
  }
  log << "equal-tolerance is evaluated empirically from " << spec.empiricalRows << " stored samples per system\n";
  if (spec.outputs.csv)
    sink.csv("optimize.csv", "optimize", {"system", "strategy", "freeA", "freeB", "alpha", "p_critical", "p_opt"}, rows);
  if (spec.outputs.json) sink.jsonFile("optimize.json", "optimize", body);
  return allConverged ? kExitOk : kExitNonConvergence;
}

}  // namespace mflow
