// lorasdp command-line front end.
//
//   lorasdp solve    <file.dat-s>  [flags]
//   lorasdp maxcut   <edges.txt>   [flags]
//   lorasdp complete <obs.txt>     [flags]
//   lorasdp bench    <manifest>    [flags] [--scaling-out sizes.dat]
//
// Exit codes: 0 optimal, 1 usage or input error, 2 finished without meeting
// the stopping rule, 3 time limit, 4 diverged.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lorasdp/lorasdp.hpp"

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Flags {
  double eps = 1e-5;
  int reopt_level = 1;
  std::size_t max_reopts = 5;
  double time_limit = 10000.0;
  std::size_t rank = 0;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out;
  std::string trace;
  std::string scaling_out;
};

void add_solver_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--eps", f.eps, "Tolerance for the stopping rule")->check(CLI::PositiveNumber);
  cmd->add_option("--reopt-level", f.reopt_level, "0: primal only, 1: primal and gap, 2: all three errors")
      ->check(CLI::Range(0, 2));
  cmd->add_option("--max-reopts", f.max_reopts, "Maximum number of re-optimization rounds");
  cmd->add_option("--time-limit", f.time_limit, "Wall-clock limit in seconds")->check(CLI::PositiveNumber);
  cmd->add_option("--rank", f.rank, "Initial factor rank (default: from the constraint count)");
  cmd->add_option("--seed", f.seed, "Random seed (fallback: LORASDP_SEED, then 1)");
  cmd->add_option("--threads", f.threads, "Upper bound on worker threads (1: deterministic mode)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", f.out, "Write the JSON report (CSV for bench) to this path");
  cmd->add_option("--trace", f.trace, "Write the per-iteration trace CSV to this path");
}

std::uint64_t resolve_seed(const Flags& f) {
  if (f.seed) return *f.seed;
  if (const char* env = std::getenv("LORASDP_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0') return v;
    throw lorasdp::Error(std::string("LORASDP_SEED is not an unsigned integer: '") + env + "'");
  }
  return 1;
}

lorasdp::SolverConfig make_config(const Flags& f) {
  lorasdp::SolverConfig cfg;
  cfg.eps = f.eps;
  cfg.reopt_level = f.reopt_level;
  cfg.max_reopts = f.max_reopts;
  cfg.time_limit = f.time_limit;
  cfg.rank_init = f.rank;
  cfg.seed = resolve_seed(f);
  return cfg;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw lorasdp::Error("cannot open '" + path + "'");
  return in;
}

void print_warnings(const std::vector<std::string>& warnings, const std::string& path) {
  for (const auto& w : warnings) std::cerr << "warning: " << path << ": " << w << "\n";
}

lorasdp::SdpProblem load_unchecked(const std::string& type, const std::string& path) {
  std::vector<std::string> warnings;
  auto in = open_input(path);
  if (type == "sdpa" || type == "solve") {
    auto p = lorasdp::parse_sdpa(in, &warnings);
    print_warnings(warnings, path);
    return p;
  }
  if (type == "maxcut") {
    auto g = lorasdp::parse_edge_list(in, &warnings);
    print_warnings(warnings, path);
    return lorasdp::build_maxcut(g);
  }
  if (type == "complete") return lorasdp::build_matrix_completion(lorasdp::parse_observations(in));
  throw lorasdp::Error("unknown instance type '" + type + "'");
}

lorasdp::SdpProblem load(const std::string& type, const std::string& path) {
  try {
    return load_unchecked(type, path);
  } catch (const lorasdp::ParseError& e) {
    throw lorasdp::Error(path + ": " + e.what());
  }
}

json number_or_null(bool present, double v) {
  return present && std::isfinite(v) ? json(v) : json(nullptr);
}

json report_json(const lorasdp::SolveReport& r) {
  json j;
  j["status"] = lorasdp::status_name(r.status);
  j["objective"] = number_or_null(true, r.objective);
  j["err1"] = number_or_null(true, r.errors.err1);
  j["err2"] = number_or_null(r.errors.err2_evaluated, r.errors.err2);
  j["err3"] = number_or_null(true, r.errors.err3);
  j["n"] = r.n;
  j["m"] = r.m;
  j["rank_final"] = r.rank_final;
  j["time_total_s"] = r.time_total_s;
  j["time_alm_s"] = r.time_alm_s;
  j["time_admm_s"] = r.time_admm_s;
  j["reopt_rounds"] = r.reopt_rounds;
  j["K"] = r.K;
  j["omega_size"] = r.omega_size;
  j["peak_bytes"] = r.peak_bytes;
  return j;
}

void write_trace(const lorasdp::SolveReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw lorasdp::Error("cannot write '" + path + "'");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "stage,iter,objective,err1,grad_or_cg_resid,rho,rank,elapsed_s\n";
  for (const auto& t : r.trace)
    out << t.stage << ',' << t.iter << ',' << t.objective << ',' << t.err1 << ','
        << t.grad_or_cg_resid << ',' << t.rho << ',' << t.rank << ',' << t.elapsed_s << "\n";
}

int exit_code(lorasdp::SolveStatus s) {
  switch (s) {
    case lorasdp::SolveStatus::kOptimal: return 0;
    case lorasdp::SolveStatus::kTimeout: return 3;
    case lorasdp::SolveStatus::kDiverged: return 4;
    default: return 2;
  }
}

int run_single(const std::string& type, const std::string& path, const Flags& f) {
  const auto problem = load(type, path);
  const auto report = lorasdp::solve(problem, make_config(f));
  const std::string text = report_json(report).dump(2) + "\n";
  if (f.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(f.out);
    if (!out) throw lorasdp::Error("cannot write '" + f.out + "'");
    out << text;
  }
  if (!f.trace.empty()) write_trace(report, f.trace);
  if (!report.message.empty()) std::cerr << "note: " << report.message << "\n";
  return exit_code(report.status);
}

struct BenchEntry {
  std::string name;
  std::string type;
  fs::path path;
};

std::vector<BenchEntry> read_manifest(const std::string& manifest) {
  auto in = open_input(manifest);
  const fs::path base = fs::path(manifest).parent_path();
  std::vector<BenchEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    BenchEntry e;
    std::string path;
    if (!(ls >> e.name) || e.name[0] == '#') continue;
    std::string extra;
    if (!(ls >> e.type >> path) || (ls >> extra))
      throw lorasdp::ParseError(lineno, "expected 'name type path'");
    if (e.type != "sdpa" && e.type != "maxcut" && e.type != "complete")
      throw lorasdp::ParseError(lineno, "type must be sdpa, maxcut or complete");
    e.path = fs::path(path).is_absolute() ? fs::path(path) : base / path;
    entries.push_back(std::move(e));
  }
  return entries;
}

int run_bench(const std::string& manifest, const Flags& f) {
  const auto entries = read_manifest(manifest);
  std::ofstream file;
  if (!f.out.empty()) {
    file.open(f.out);
    if (!file) throw lorasdp::Error("cannot write '" + f.out + "'");
  }
  std::ostream& csv = f.out.empty() ? std::cout : file;
  std::ofstream scaling;
  if (!f.scaling_out.empty()) {
    scaling.open(f.scaling_out);
    if (!scaling) throw lorasdp::Error("cannot write '" + f.scaling_out + "'");
    scaling << "# n time_s\n";
  }
  csv << std::setprecision(std::numeric_limits<double>::max_digits10);
  scaling << std::setprecision(std::numeric_limits<double>::max_digits10);
  csv << "name,n,m,time,err_max\n";
  const auto cfg = make_config(f);
  int worst = 0;
  for (const auto& e : entries) {
    const auto problem = load(e.type, e.path.string());
    const auto r = lorasdp::solve(problem, cfg);
    csv << e.name << ',' << r.n << ',' << r.m << ',' << r.time_total_s << ','
        << r.errors.max_error() << "\n";
    csv.flush();
    if (scaling.is_open()) scaling << r.n << ' ' << r.time_total_s << "\n";
    worst = std::max(worst, exit_code(r.status));
  }
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank SDP solver (ALM warm start, ADMM refinement)"};
  app.require_subcommand(1);
  Flags f;
  std::string input;

  auto* solve = app.add_subcommand("solve", "Solve an SDPA sparse (.dat-s) problem");
  auto* maxcut = app.add_subcommand("maxcut", "Solve the MaxCut relaxation of an edge list");
  auto* complete = app.add_subcommand("complete", "Nuclear-norm completion of observed entries");
  auto* bench = app.add_subcommand("bench", "Run every instance of a manifest, emit CSV");
  for (auto* cmd : {solve, maxcut, complete, bench}) {
    cmd->add_option("input", input, "Input file")->required();
    add_solver_flags(cmd, f);
  }
  bench->add_option("--scaling-out", f.scaling_out, "Write 'n time' pairs for plotting");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    lorasdp::set_num_threads(f.threads > 0 ? f.threads : static_cast<int>(hw));
    if (bench->parsed()) return run_bench(input, f);
    const std::string type = solve->parsed() ? "sdpa" : maxcut->parsed() ? "maxcut" : "complete";
    return run_single(type, input, f);
  } catch (const lorasdp::ParseError& e) {
    std::cerr << "error: " << input << ": " << e.what() << "\n";
    return 1;
  } catch (const lorasdp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
