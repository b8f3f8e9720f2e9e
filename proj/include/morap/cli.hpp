#pragma once

// Command-line surface and the file formats behind it. An instance file
// bundles agent models (inline JSON or relative paths), task automata (LTL
// strings, DFA JSON objects, or .json paths) and an optional norm matrix.
// Verbs: verify, pareto, synth, bench, gen-warehouse, export-dfa.
//
// Exit codes: 0 feasible/success, 1 infeasible, 2 usage or IO error,
// 3 model or solver error (validation, reward-finiteness, non-convergence).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "morap/centralised.hpp"
#include "morap/common.hpp"
#include "morap/engine.hpp"
#include "morap/instance.hpp"
#include "morap/logic.hpp"
#include "morap/model.hpp"
#include "morap/oracle.hpp"
#include "morap/solver.hpp"
#include "morap/warehouse.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace morap {

struct InstanceFile {
  MorapInstance inst;
  std::optional<NormMatrix> norm;
};

namespace clidetail {

inline Json readJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::Io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    fail(Errc::Io, path.string() + ": " + e.what());
  }
}

inline void writeTextFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(Errc::Io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(Errc::Io, "write to " + path.string() + " failed");
}

inline NormMatrix normFromJson(const Json& j) {
  if (!j.is_array() || j.empty())
    fail(Errc::InvalidConfig, "norm matrix must be a nonempty array of rows");
  const int dim = static_cast<int>(j.size());
  Mat m(dim, dim);
  for (int r = 0; r < dim; ++r) {
    if (!j[r].is_array() || static_cast<int>(j[r].size()) != dim)
      fail(Errc::InvalidConfig, "norm matrix rows must all have the matrix dimension");
    for (int c = 0; c < dim; ++c) m(r, c) = j[r][c].get<double>();
  }
  return NormMatrix(std::move(m));
}

inline std::string formatG9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace clidetail

// Task entries: an object is a DFA in the export-dfa JSON format (taken
// verbatim); a string ending in .json is a path to one; any other string is
// parsed as a reachability formula and compiled.
inline Dfa taskFromJson(const Json& entry, const std::filesystem::path& baseDir) {
  if (entry.is_object()) return dfaFromJson(entry);
  if (!entry.is_string()) fail(Errc::InvalidConfig, "task entries must be strings or DFA objects");
  const std::string s = entry.get<std::string>();
  if (s.size() > 5 && s.substr(s.size() - 5) == ".json")
    return dfaFromJson(clidetail::readJsonFile(baseDir / s));
  return insertPreSinks(formulaToDfa(parseCoSafe(s)));
}

inline InstanceFile instanceFromJson(const Json& j, const std::filesystem::path& baseDir) {
  if (!j.is_object() || !j.contains("agents") || !j.contains("tasks"))
    fail(Errc::InvalidConfig, "instance file needs agents and tasks");
  std::vector<Mdp> agents;
  std::vector<RewardStructure> costs;
  for (const auto& entry : j.at("agents")) {
    Json model = entry.is_string() ? clidetail::readJsonFile(baseDir / entry.get<std::string>())
                                   : entry;
    auto [mdp, cost] = mdpFromJson(model);
    agents.push_back(std::move(mdp));
    costs.push_back(std::move(cost));
  }
  std::vector<Dfa> tasks;
  for (const auto& entry : j.at("tasks")) tasks.push_back(taskFromJson(entry, baseDir));

  InstanceFile file;
  file.inst = buildInstance(std::move(agents), std::move(costs), std::move(tasks));
  if (j.contains("norm")) {
    Json normJson = j.at("norm").is_string()
                        ? clidetail::readJsonFile(baseDir / j.at("norm").get<std::string>())
                        : j.at("norm");
    file.norm = clidetail::normFromJson(normJson);
  }
  return file;
}

inline InstanceFile loadInstanceFile(const std::string& path) {
  std::filesystem::path p(path);
  return instanceFromJson(clidetail::readJsonFile(p), p.parent_path());
}

// Self-contained export: agents inline, tasks as compiled automata.
inline Json instanceToJson(const MorapInstance& inst) {
  Json agents = Json::array(), tasks = Json::array();
  for (int i = 0; i < inst.n; ++i) agents.push_back(mdpToJson(inst.agents[i], inst.costs[i]));
  for (int j = 0; j < inst.realTasks; ++j) tasks.push_back(dfaToJson(inst.tasks[j]));
  return Json{{"agents", agents}, {"tasks", tasks}};
}

// Pareto trace as CSV: header iter,w_1..w_2n,r_1..r_2n, one row per
// iteration (1-based), then tUp and tDown rows carrying the two sandwich
// points. Floats use 9 significant digits.
inline void writeParetoCsv(const ParetoResult& res, std::ostream& os) {
  const size_t dim = res.thresholds.size();
  os << "iter";
  for (size_t k = 1; k <= dim; ++k) os << ",w_" << k;
  for (size_t k = 1; k <= dim; ++k) os << ",r_" << k;
  os << "\n";
  for (size_t it = 0; it < res.iterations.size(); ++it) {
    os << (it + 1);
    for (double v : res.iterations[it].w) os << "," << clidetail::formatG9(v);
    for (double v : res.iterations[it].r) os << "," << clidetail::formatG9(v);
    os << "\n";
  }
  os << "tUp";
  for (double v : res.tUp) os << "," << clidetail::formatG9(v);
  os << "\n";
  os << "tDown";
  for (double v : res.tDown) os << "," << clidetail::formatG9(v);
  os << "\n";
}

inline void writeParetoCsv(const ParetoResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::Io, "cannot open " + path + " for writing");
  writeParetoCsv(res, out);
  if (!out) fail(Errc::Io, "write to " + path + " failed");
}

namespace clidetail {

inline Vec parseThresholds(const std::string& csv) {
  Vec out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t comma = csv.find(',', pos);
    std::string tok = csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      size_t used = 0;
      out.push_back(std::stod(tok, &used));
      while (used < tok.size() && std::isspace(static_cast<unsigned char>(tok[used]))) ++used;
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      fail(Errc::InvalidConfig, "thresholds must be comma-separated numbers, got '" + tok + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) fail(Errc::InvalidConfig, "no thresholds given");
  return out;
}

inline int exitCodeFor(const Error& e) {
  switch (e.code()) {
    case Errc::Syntax:
    case Errc::InvalidConfig:
    case Errc::DimensionMismatch:
    case Errc::Io:
      return 2;
    default:
      return 3;
  }
}

struct SolveOptions {
  std::string instancePath;
  std::string thresholds;
  std::string normPath;
  std::string outPath;
  double eps = 0.01;
  int workers = 0;
  int iterationCap = 500;
  bool centralised = false;
  bool oracle = false;
};

inline void addSolveOptions(CLI::App* cmd, SolveOptions& opt, bool withCentralised = true) {
  cmd->add_option("--instance", opt.instancePath, "instance JSON file")->required();
  cmd->add_option("--thresholds", opt.thresholds,
                  "comma-separated bounds: one per agent cost (lower bounds on the negative "
                  "expected cost), then one per task probability")
      ->required();
  cmd->add_option("--eps", opt.eps, "sandwich termination tolerance (default 0.01)");
  cmd->add_option("--norm", opt.normPath, "norm matrix JSON (default: instance norm or identity)");
  cmd->add_option("--workers", opt.workers, "worker threads (default: MORAP_WORKERS or hardware)");
  cmd->add_option("--max-iters", opt.iterationCap, "iteration cap (default 500)");
  if (withCentralised)
    cmd->add_flag("--centralised", opt.centralised, "solve on the centralised model instead");
  cmd->add_flag("--oracle", opt.oracle, "cross-check the verdict against the feasibility LP");
  cmd->add_option("--out", opt.outPath, "also write the result to this file");
}

struct SolveOutcome {
  ParetoResult result;
  InstanceFile file;
};

inline SolveOutcome runSolve(const SolveOptions& opt) {
  SolveOutcome out;
  out.file = loadInstanceFile(opt.instancePath);
  const MorapInstance& inst = out.file.inst;

  NormMatrix norm = NormMatrix::identity(2 * inst.n);
  if (!opt.normPath.empty())
    norm = normFromJson(readJsonFile(opt.normPath));
  else if (out.file.norm)
    norm = *out.file.norm;

  Vec t = parseThresholds(opt.thresholds);
  if (opt.centralised) {
    CentralisedMdp c = buildCentralised(inst);
    out.result = centralisedParetoPoint(c, t, norm, opt.eps, opt.iterationCap);
  } else {
    PoolConfig pool = configurePool(opt.workers > 0 ? opt.workers : defaultWorkerCount());
    out.result = paretoPoint(inst, t, norm, opt.eps, pool, opt.iterationCap);
  }
  return out;
}

inline Json solveJson(const SolveOutcome& s, const SolveOptions& opt,
                      const SynthesisResult* synthesis = nullptr) {
  Json j = resultToJson(s.result, synthesis);
  j["converged"] = s.result.converged;
  j["eps"] = s.result.eps;
  j["thresholds"] = s.result.thresholds;
  j["iterationCount"] = s.result.iterations.size();
  if (synthesis) {
    Json marg = Json::array();
    const Mat& m = synthesis->marginal;
    for (int i = 0; i < m.rows; ++i) {
      Json row = Json::array();
      for (int c = 0; c < m.cols; ++c) row.push_back(m(i, c));
      marg.push_back(std::move(row));
    }
    j["marginal"] = std::move(marg);
  }
  if (opt.oracle) {
    LpVerdict lp = solveLp(buildFeasibilityLp(s.file.inst, s.result.thresholds));
    j["oracle"] = Json{{"lpFeasible", lp.feasible}, {"agrees", lp.feasible == s.result.feasible}};
  }
  return j;
}

inline int benchVerb(const std::string& configPath, const std::string& outPath, int workers,
                     bool centralised, long seedOverride, bool haveSeed, std::ostream& out) {
  Json cfgJson = readJsonFile(configPath);
  if (!cfgJson.is_object() || !cfgJson.contains("runs"))
    fail(Errc::InvalidConfig, "bench config needs a runs array");
  Json report = Json::array();
  for (const auto& run : cfgJson.at("runs")) {
    WarehouseConfig wc = warehouseConfigFromJson(run.at("config"));
    if (haveSeed) wc.seed = static_cast<uint64_t>(seedOverride);
    Vec t;
    for (const auto& v : run.at("thresholds")) t.push_back(v.get<double>());
    const double eps = run.value("eps", 0.01);

    auto t0 = std::chrono::steady_clock::now();
    MorapInstance inst = generateInstance(wc);
    auto t1 = std::chrono::steady_clock::now();

    long totalStates = 0;
    for (const auto& row : inst.products)
      for (const auto& p : row) totalStates += p->mdp.numStates;

    Json entry;
    entry["config"] = warehouseConfigToJson(wc);
    entry["agents"] = inst.n;
    entry["totalProductStates"] = totalStates;
    entry["distinctProducts"] = inst.distinctProducts;
    entry["generateSeconds"] = std::chrono::duration<double>(t1 - t0).count();

    ParetoResult res;
    auto t2 = std::chrono::steady_clock::now();
    if (centralised) {
      CentralisedMdp c = buildCentralised(inst);
      entry["centralisedStates"] = c.mdp.numStates;
      res = centralisedParetoPoint(c, t, NormMatrix::identity(2 * inst.n), eps);
    } else {
      PoolConfig pool = configurePool(workers > 0 ? workers : defaultWorkerCount());
      res = paretoPoint(inst, t, NormMatrix::identity(2 * inst.n), eps, pool);
    }
    auto t3 = std::chrono::steady_clock::now();
    entry["solveSeconds"] = std::chrono::duration<double>(t3 - t2).count();
    entry["feasible"] = res.feasible;
    entry["converged"] = res.converged;
    entry["iterations"] = res.iterations.size();
    entry["tUp"] = res.tUp;
    entry["tDown"] = res.tDown;
    report.push_back(std::move(entry));
  }
  Json payload{{"runs", report}};
  out << payload.dump(2) << "\n";
  if (!outPath.empty()) writeTextFile(outPath, payload.dump(2) + "\n");
  return 0;
}

}  // namespace clidetail

inline int runCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using clidetail::SolveOptions;

  CLI::App app{"model checking toolkit for random task assignment and planning"};
  app.require_subcommand(1);

  SolveOptions verifyOpt, paretoOpt, synthOpt;
  CLI::App* verify = app.add_subcommand("verify", "decide whether thresholds are achievable");
  clidetail::addSolveOptions(verify, verifyOpt);
  CLI::App* pareto = app.add_subcommand(
      "pareto", "decide feasibility and report the sandwich points; --out writes the CSV trace");
  clidetail::addSolveOptions(pareto, paretoOpt);
  CLI::App* synth = app.add_subcommand(
      "synth", "solve and emit the random assignment certificate (decentralised only)");
  clidetail::addSolveOptions(synth, synthOpt, false);

  std::string benchConfig, benchOut;
  int benchWorkers = 0;
  bool benchCentralised = false;
  long benchSeed = 0;
  bool benchHaveSeed = false;
  CLI::App* bench = app.add_subcommand("bench", "run a warehouse suite and report measurements");
  bench->add_option("--config", benchConfig, "suite JSON with a runs array")->required();
  bench->add_option("--workers", benchWorkers, "worker threads");
  bench->add_flag("--centralised", benchCentralised, "solve on the centralised model");
  bench->add_option("--seed", benchSeed, "override every run's seed")
      ->each([&](const std::string&) { benchHaveSeed = true; });
  bench->add_option("--out", benchOut, "also write the report to this file");

  std::string genConfig, genOut;
  long genSeed = 0;
  bool genHaveSeed = false;
  CLI::App* gen = app.add_subcommand("gen-warehouse", "generate a warehouse instance file");
  gen->add_option("--config", genConfig, "warehouse config JSON")->required();
  gen->add_option("--seed", genSeed, "override the config seed")
      ->each([&](const std::string&) { genHaveSeed = true; });
  gen->add_option("--out", genOut, "instance file to write (default: stdout)");

  std::string dfaTask, dfaOut;
  int dfaDeadline = 0;
  CLI::App* exportDfa = app.add_subcommand("export-dfa", "compile a task formula to DFA JSON");
  exportDfa->add_option("--task", dfaTask, "reachability formula")->required();
  exportDfa->add_option("--deadline", dfaDeadline, "step bound before the task fails (0 = none)");
  exportDfa->add_option("--out", dfaOut, "file to write (default: stdout)");

  std::vector<const char*> argv;
  argv.push_back("morap");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (verify->parsed() || pareto->parsed() || synth->parsed()) {
      const bool isVerify = verify->parsed();
      const bool isSynth = synth->parsed();
      const SolveOptions& opt = isVerify ? verifyOpt : (isSynth ? synthOpt : paretoOpt);
      clidetail::SolveOutcome s = clidetail::runSolve(opt);

      SynthesisResult syn;
      const SynthesisResult* synPtr = nullptr;
      if (isSynth) {
        syn = synthesize(s.result);
        synPtr = &syn;
      }
      Json j = clidetail::solveJson(s, opt, synPtr);
      out << j.dump(2) << "\n";
      if (!opt.outPath.empty()) {
        if (isVerify || isSynth)
          clidetail::writeTextFile(opt.outPath, j.dump(2) + "\n");
        else
          writeParetoCsv(s.result, opt.outPath);
      }
      return s.result.feasible ? 0 : 1;
    }
    if (bench->parsed())
      return clidetail::benchVerb(benchConfig, benchOut, benchWorkers, benchCentralised, benchSeed,
                                  benchHaveSeed, out);
    if (gen->parsed()) {
      WarehouseConfig cfg = warehouseConfigFromJson(clidetail::readJsonFile(genConfig));
      if (genHaveSeed) cfg.seed = static_cast<uint64_t>(genSeed);
      MorapInstance inst = generateInstance(cfg);
      Json j = instanceToJson(inst);
      if (genOut.empty())
        out << j.dump(2) << "\n";
      else
        clidetail::writeTextFile(genOut, j.dump(2) + "\n");
      long totalStates = 0;
      for (const auto& row : inst.products)
        for (const auto& p : row) totalStates += p->mdp.numStates;
      if (!genOut.empty())
        out << Json{{"agents", inst.n}, {"totalProductStates", totalStates}, {"file", genOut}}.dump(
                   2)
            << "\n";
      return 0;
    }
    if (exportDfa->parsed()) {
      Dfa d = formulaToDfa(parseCoSafe(dfaTask));
      if (dfaDeadline < 0) fail(Errc::InvalidConfig, "deadline must be nonnegative");
      if (dfaDeadline > 0) d = withDeadline(d, dfaDeadline);
      Json j = dfaToJson(insertPreSinks(d));
      if (dfaOut.empty())
        out << j.dump(2) << "\n";
      else
        clidetail::writeTextFile(dfaOut, j.dump(2) + "\n");
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return clidetail::exitCodeFor(e);
  } catch (const Json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace morap
