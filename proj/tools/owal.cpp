// owal: run output-weighted active-learning campaigns, verify the
// theorem-level checks, and plot campaign results.
//
// Exit codes: 0 ok, 2 usage/config error, 3 numerical failure, 4 check failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "owal/config.hpp"
#include "owal/error.hpp"
#include "owal/harness.hpp"
#include "owal/log.hpp"
#include "owal/svg.hpp"
#include "owal/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCheck = 4;

struct RunArgs {
  std::string config;
  std::string out = "owal-out";
  int jobs = 0;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

int cmd_run(const RunArgs& a) {
  std::vector<std::string> overrides;
  if (a.seed) overrides.push_back("campaign.master_seed=" + std::to_string(*a.seed));
  overrides.insert(overrides.end(), a.overrides.begin(), a.overrides.end());
  const owal::ExperimentConfig cfg =
      owal::load_config(owal::config_document(owal::read_json_file(a.config)), overrides);
  const int jobs = a.jobs > 0 ? a.jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<owal::CampaignResult> results;
  for (std::size_t p = 0; p < cfg.problems.size(); ++p) {
    owal::log::info("running campaign on " + cfg.problems[p].name);
    results.push_back(owal::run_campaign(cfg, p, jobs));
    owal::write_campaign_files(a.out, results.back());
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  owal::write_manifest(a.out, owal::make_manifest(cfg, results, jobs, wall));

  for (const auto& r : results)
    for (const auto& cr : r.criteria) {
      const auto& last = cr.summary.back();
      std::cout << r.problem << ' ' << cr.kind.name() << ": iteration " << last.iteration << " median error "
                << last.median_error << " (MAD/2 " << last.mad_half << "), " << cr.failed << " failed trials"
                << (cr.unreliable ? " [UNRELIABLE]" : "") << '\n';
    }
  std::cout << "wrote " << a.out << " in " << wall << " s\n";
  return kExitOk;
}

int cmd_verify(const std::string& level, std::uint64_t seed, bool corrupt) {
  owal::VerifyOptions opt;
  opt.level = level == "full" ? owal::VerifyLevel::full : owal::VerifyLevel::fast;
  opt.seed = seed;
  opt.corrupt_rank_one = corrupt;
  const auto results = owal::run_verify(opt, std::cout);
  int failed = 0;
  for (const auto& r : results) failed += r.pass ? 0 : 1;
  std::cout << (failed ? "FAILED: " : "all passed: ") << results.size() - static_cast<std::size_t>(failed) << '/'
            << results.size() << " checks\n";
  return failed ? kExitCheck : kExitOk;
}

int cmd_plot(const std::string& dir) {
  for (const auto& p : owal::plot_campaign_dir(dir)) std::cout << "wrote " << p.string() << '\n';
  return kExitOk;
}

int cmd_list_problems(const std::string& config) {
  if (config.empty()) {
    std::cout << "oscillator  fields: n_inputs damping horizon forcing{sigma,length} "
                 "restoring{kind=cubic:alpha,beta | kind=piecewise:alpha,u1,u2} kl_grid dt_divisor\n"
                 "beam        fields: zeta omega0 length(number or {pi_over}) modes_J kl_per_load horizon "
                 "load{sigma,length} kl_grid dt_divisor\n";
    return kExitOk;
  }
  const auto cfg = owal::load_config(owal::config_document(owal::read_json_file(config)));
  for (const auto& p : cfg.problems)
    std::cout << p.name << "  type=" << p.type << "  input_dim=" << p.input_dim << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"owal: output-weighted active learning for GPR surrogates"};
  app.require_subcommand(1);

  RunArgs run;
  std::uint64_t seed_value = 0;
  auto* run_cmd = app.add_subcommand("run", "Run every (problem, criterion) campaign of a config or manifest");
  run_cmd->add_option("--config", run.config, "Config file, or a manifest.json to re-run")->required();
  run_cmd->add_option("--out", run.out, "Output directory")->capture_default_str();
  run_cmd->add_option("--jobs", run.jobs, "Parallel trials (0 = all cores)")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--set", run.overrides, "Override an existing config key: key.path=value");
  auto* seed_opt = run_cmd->add_option("--seed", seed_value, "Override campaign.master_seed");

  std::string level = "fast";
  std::uint64_t verify_seed = owal::VerifyOptions{}.seed;
  bool corrupt = false;
  auto* verify_cmd = app.add_subcommand("verify", "Run the theorem-level numerical checks");
  verify_cmd->add_option("--level", level, "fast or full")->check(CLI::IsMember({"fast", "full"}))->capture_default_str();
  verify_cmd->add_option("--seed", verify_seed, "Seed for the verification problems");
  verify_cmd->add_flag("--corrupt-rank-one", corrupt, "Test hook: corrupt the rank-one update")->group("");

  std::string plot_dir;
  auto* plot_cmd = app.add_subcommand("plot", "Render SVG plots for a campaign output directory");
  plot_cmd->add_option("dir", plot_dir, "Campaign output directory")->required();

  std::string list_config;
  auto* list_cmd = app.add_subcommand("list-problems", "List problem types, or the problems of a config");
  list_cmd->add_option("--config", list_config, "Config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run_cmd) {
      if (*seed_opt) run.seed = seed_value;
      return cmd_run(run);
    }
    if (*verify_cmd) return cmd_verify(level, verify_seed, corrupt);
    if (*plot_cmd) return cmd_plot(plot_dir);
    if (*list_cmd) return cmd_list_problems(list_config);
  } catch (const owal::usage_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const owal::numerical_failure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const owal::check_failure& e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return kExitCheck;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
