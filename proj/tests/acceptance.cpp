// Acceptance checks. `acceptance --criterion N` prints one PASS/FAIL line for
// criterion N and exits non-zero on FAIL; without arguments every criterion
// runs in turn. Criteria 6-8 share one desk-scale campaign that is cached
// under OWAL_CACHE_DIR and reused while its config hash matches.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "owal/config.hpp"
#include "owal/harness.hpp"
#include "owal/svg.hpp"
#include "owal/verify.hpp"

namespace {

namespace fs = std::filesystem;
using owal::json;

// Pinned tolerances and budgets.
constexpr double kRuntimeGprExactness = 5.0;
constexpr double kRuntimeRankOne = 10.0;
constexpr double kRuntimePdfPerturbation = 120.0;
constexpr double kRuntimeAsymptotic = 180.0;
constexpr double kRuntimeCauchySchwarz = 120.0;
constexpr double kRuntimeDensityMetric = 1.0;
constexpr double kOrderingMargin = 0.75;   // B and IVR-LW at most 75% of US and IVR-IW
constexpr double kCnReduction = 5.0;       // C_N drop from iteration 5 to 60
constexpr int kCnFrom = 5, kCnTo = 60;
constexpr int kExceedanceIteration = 40;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) { return owal::verify_detail::fmt(v); }

Outcome timed_check(const std::function<owal::CheckResult()>& check, double budget) {
  const auto t0 = std::chrono::steady_clock::now();
  const owal::CheckResult r = check();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {r.pass && seconds < budget, r.detail + "; " + fmt(seconds) + " s (budget " + fmt(budget) + " s)"};
}

// ---------------------------------------------------------------------------
// CSV access

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw owal::format_error("missing column " + name);
  }
};

Table read_table(const fs::path& file) {
  std::ifstream f(file);
  if (!f) throw owal::format_error("cannot read " + file.string());
  Table t;
  std::string line;
  std::getline(f, line);
  t.header = owal::svg_detail::split(line, ',');
  while (std::getline(f, line))
    if (!line.empty()) t.rows.push_back(owal::svg_detail::split(line, ','));
  return t;
}

struct SummaryCell {
  double median_error = 0, mad_half = 0, median_cn = 0;
};

/// (criterion, iteration) -> summary row of <problem>.csv.
std::map<std::pair<std::string, int>, SummaryCell> read_summary(const fs::path& file) {
  const Table t = read_table(file);
  const auto ci = t.col("criterion"), ii = t.col("iteration"), ei = t.col("median_error"), mi = t.col("mad_half"),
             ni = t.col("median_cn");
  std::map<std::pair<std::string, int>, SummaryCell> out;
  for (const auto& r : t.rows)
    out[{r[ci], std::stoi(r[ii])}] = {std::stod(r[ei]), std::stod(r[mi]), std::stod(r[ni])};
  return out;
}

/// Median exceedance error at one iteration, over successful trials of one criterion.
double median_exceedance(const fs::path& trials_csv, const std::string& criterion, int iteration) {
  const Table t = read_table(trials_csv);
  const auto ci = t.col("criterion"), si = t.col("status"), ii = t.col("iteration"), xi = t.col("exceedance_error");
  std::vector<double> v;
  for (const auto& r : t.rows)
    if (r[ci] == criterion && r[si] == "ok" && std::stoi(r[ii]) == iteration) v.push_back(std::stod(r[xi]));
  if (v.empty()) throw owal::format_error("no " + criterion + " rows at iteration " + std::to_string(iteration));
  return owal::detail::median(v);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// Campaign runs

int all_cores() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

json run_to_dir(const owal::ExperimentConfig& cfg, const fs::path& dir, int jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<owal::CampaignResult> results;
  for (std::size_t p = 0; p < cfg.problems.size(); ++p) {
    results.push_back(owal::run_campaign(cfg, p, jobs));
    owal::write_campaign_files(dir, results.back());
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json m = owal::make_manifest(cfg, results, jobs, wall);
  owal::write_manifest(dir, m);
  return m;
}

/// Output directory of the desk campaign, running it when the cache is stale.
fs::path desk_campaign(const fs::path& cache) {
  const auto cfg = owal::load_config(owal::read_json_file(OWAL_SOURCE_DIR "/configs/desk.json"));
  const fs::path dir = cache / "desk";
  const fs::path manifest = dir / "manifest.json";
  if (fs::exists(manifest)) {
    const json m = owal::read_json_file(manifest.string());
    if (m.value("config_hash", "") == owal::config_hash(cfg.resolved) &&
        m["software"].value("version", "") == OWAL_VERSION) {
      std::cerr << "using cached desk campaign in " << dir << " (" << fmt(m["run"]["wall_seconds"].get<double>())
                << " s when run)\n";
      return dir;
    }
  }
  std::cerr << "running desk campaign into " << dir << " with " << all_cores() << " jobs\n";
  const fs::path tmp = cache / "desk.partial";
  fs::remove_all(tmp);
  const json m = run_to_dir(cfg, tmp, all_cores());
  fs::remove_all(dir);
  fs::rename(tmp, dir);
  std::cerr << "desk campaign took " << fmt(m["run"]["wall_seconds"].get<double>()) << " s\n";
  return dir;
}

// ---------------------------------------------------------------------------
// Criteria

Outcome ordering(const fs::path& cache) {
  const fs::path dir = desk_campaign(cache);
  bool pass = true;
  std::ostringstream os;
  for (const char* problem : {"oscillator", "beam"}) {
    const auto s = read_summary(dir / (std::string(problem) + ".csv"));
    auto last = [&](const char* c) { return s.at({c, 60}); };
    const auto b = last("B"), lw = last("IVR-LW"), us = last("US"), iw = last("IVR-IW");
    const bool b_le_lw = b.median_error <= lw.median_error + lw.mad_half;
    const double worst = std::max(b.median_error, lw.median_error);
    const double best_baseline = std::min(us.median_error, iw.median_error);
    const bool beat = worst <= kOrderingMargin * best_baseline;
    pass = pass && b_le_lw && beat;
    os << problem << ": B " << fmt(b.median_error) << " IVR-LW " << fmt(lw.median_error) << " (MAD/2 "
       << fmt(lw.mad_half) << ") US " << fmt(us.median_error) << " IVR-IW " << fmt(iw.median_error)
       << (b_le_lw ? "" : " [B > IVR-LW]") << (beat ? "" : " [margin < 25%]") << "; ";
  }
  return {pass, os.str()};
}

Outcome cn_decrease(const fs::path& cache) {
  const auto s = read_summary(desk_campaign(cache) / "oscillator.csv");
  bool pass = true;
  std::ostringstream os;
  for (const char* c : {"B", "IVR-LW"}) {
    const double from = s.at({c, kCnFrom}).median_cn, to = s.at({c, kCnTo}).median_cn;
    pass = pass && from >= kCnReduction * to;
    os << c << " C_N " << fmt(from) << " -> " << fmt(to) << " (x" << fmt(from / to) << ") ";
  }
  return {pass, os.str()};
}

Outcome quantile(const fs::path& cache) {
  const fs::path trials = desk_campaign(cache) / "oscillator_trials.csv";
  const double q = median_exceedance(trials, "QUANTILE", kExceedanceIteration);
  const double us = median_exceedance(trials, "US", kExceedanceIteration);
  return {q < us, "median |exceedance error| at iteration 40: QUANTILE " + fmt(q) + " US " + fmt(us)};
}

Outcome determinism(const fs::path& cache) {
  auto cfg = owal::load_config(owal::read_json_file(OWAL_SOURCE_DIR "/configs/minimal.json"),
                               {"campaign.n_trials=4", "campaign.n_iter=3"});
  json doc = cfg.resolved;
  doc["criteria"] = {"US", "IVR-IW", "IVR-LW", "B", "QUANTILE"};
  cfg = owal::load_config(doc);
  const fs::path a = cache / "determinism" / "a", b = cache / "determinism" / "b";
  fs::remove_all(cache / "determinism");
  const json m = run_to_dir(cfg, a, 1);
  run_to_dir(owal::load_config(owal::config_document(owal::read_json_file((a / "manifest.json").string()))), b,
             all_cores() > 1 ? all_cores() : 2);
  const auto files = owal::output_files("oscillator");
  int same = 0;
  std::string diff;
  for (const auto& f : {files.csv, files.trials_csv, files.reference_pdf}) {
    const std::string x = slurp(a / f), y = slurp(b / f);
    if (!x.empty() && x == y)
      ++same;
    else
      diff += " " + f;
  }
  return {same == 3, std::to_string(same) + "/3 files byte-identical after re-running from the manifest" +
                         (diff.empty() ? "" : "; differing:" + diff)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(const fs::path&)> run;
};

std::vector<Criterion> criteria() {
  const owal::VerifyOptions opt;
  return {
      {1, "gpr-exactness", [opt](const fs::path&) { return timed_check([opt] { return owal::check_gpr_exactness(opt); }, kRuntimeGprExactness); }},
      {2, "rank-one-oracle", [opt](const fs::path&) { return timed_check([opt] { return owal::check_rank_one(opt); }, kRuntimeRankOne); }},
      {3, "pdf-perturbation-order",
       [opt](const fs::path&) { return timed_check([opt] { return owal::check_pdf_perturbation(opt); }, kRuntimePdfPerturbation); }},
      {4, "asymptotic-log-pdf-error",
       [opt](const fs::path&) { return timed_check([opt] { return owal::check_asymptotic_error(opt); }, kRuntimeAsymptotic); }},
      {5, "cauchy-schwarz-bound",
       [opt](const fs::path&) { return timed_check([opt] { return owal::check_cauchy_schwarz(opt); }, kRuntimeCauchySchwarz); }},
      {6, "desk-ordering", ordering},
      {7, "convergence-diagnostic", cn_decrease},
      {8, "quantile-exceedance", quantile},
      {9, "density-metric-oracle",
       [opt](const fs::path&) { return timed_check([opt] { return owal::check_density_metric(opt); }, kRuntimeDensityMetric); }},
      {10, "manifest-determinism", determinism},
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"owal acceptance checks"};
  int only = 0;
  std::string cache = OWAL_CACHE_DIR;
  app.add_option("--criterion", only, "Criterion number 1-10 (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--cache", cache, "Directory for cached campaign outputs")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(cache);
  int failed = 0;
  for (const auto& c : criteria()) {
    if (only && c.id != only) continue;
    Outcome o;
    try {
      o = c.run(cache);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << ": " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed ? 1 : 0;
}
