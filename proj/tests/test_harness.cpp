#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "owal/harness.hpp"

namespace {

using namespace owal;
using Eigen::VectorXd;

ExperimentConfig small_config(int n_trials, int n_iter, std::vector<std::string> extra = {}) {
  json doc = json::parse(R"({
    "campaign": {"n_trials": 1, "n_iter": 1, "pool_size": 1000, "truth_pdf_samples": 3000,
                 "fit": {"starts": 2, "max_evaluations": 80}, "select": {"top_k": 3, "polish_evaluations": 10}},
    "criteria": ["US", "IVR-LW"],
    "problems": [{
      "name": "osc", "type": "oscillator", "n_inputs": 2, "damping": 1.5, "horizon": 10,
      "forcing": {"sigma": 1.0, "length": 4.0},
      "restoring": {"kind": "piecewise", "alpha": 1.0, "u1": 1.0, "u2": 3.0},
      "kl_grid": 101, "dt_divisor": 20
    }]
  })");
  extra.push_back("campaign.n_trials=" + std::to_string(n_trials));
  extra.push_back("campaign.n_iter=" + std::to_string(n_iter));
  return load_config(doc, extra);
}

/// Cheap analytic problem with a skewed output; optionally "diverges" for x0 > cliff.
BenchmarkProblem toy_problem(double cliff = std::numeric_limits<double>::infinity()) {
  return {"toy", 2,
          [cliff](const VectorXd& x) {
            if (x[0] > cliff) throw divergence_error("toy truth diverged");
            return std::exp(0.6 * x[0]) + 0.3 * x[1];
          },
          Box::cube(2, 4.0)};
}

bool identical(const TrialRecord& a, const TrialRecord& b) {
  if (a.trial_seed != b.trial_seed || a.failed != b.failed || a.iterations.size() != b.iterations.size()) return false;
  for (std::size_t i = 0; i < a.iterations.size(); ++i) {
    const auto &x = a.iterations[i], &y = b.iterations[i];
    if (x.error != y.error || x.cn != y.cn || x.kappa99 != y.kappa99 || x.exceedance_error != y.exceedance_error ||
        x.params.lengthscale != y.params.lengthscale || x.params.signal_variance != y.params.signal_variance ||
        x.selected.has_value() != y.selected.has_value() || x.y_selected != y.y_selected)
      return false;
    if (x.selected && *x.selected != *y.selected) return false;
  }
  return true;
}

TEST(Trial, ZeroIterationsRecordsOnlyTheInitialFit) {
  const auto cfg = small_config(1, 0);
  const auto problem = toy_problem();
  const auto ref = build_reference(cfg, problem);
  const auto rec = run_trial(cfg, problem, ref, {Criterion::US}, 0);
  ASSERT_FALSE(rec.failed) << rec.failure;
  ASSERT_EQ(rec.iterations.size(), 1u);
  EXPECT_EQ(rec.iterations[0].n_samples, 3);
  EXPECT_FALSE(rec.iterations[0].selected.has_value());
}

TEST(Trial, BitIdenticalReruns) {
  const auto cfg = small_config(1, 3);
  const auto problem = toy_problem();
  const auto ref = build_reference(cfg, problem);
  for (Criterion c : {Criterion::US, Criterion::B}) {
    const auto a = run_trial(cfg, problem, ref, {c}, 4);
    const auto b = run_trial(cfg, problem, ref, {c}, 4);
    EXPECT_TRUE(identical(a, b));
  }
  EXPECT_NE(run_trial(cfg, problem, ref, {Criterion::US}, 4).trial_seed,
            run_trial(cfg, problem, ref, {Criterion::US}, 5).trial_seed);
}

TEST(Trial, SeedIsHashOfMasterAndIndex) {
  const auto cfg = small_config(1, 0, {"campaign.master_seed=77"});
  const auto problem = toy_problem();
  const auto ref = build_reference(cfg, problem);
  EXPECT_EQ(run_trial(cfg, problem, ref, {Criterion::US}, 3).trial_seed, derive_seed(77, {3}));
}

TEST(Trial, RecordInvariants) {
  const auto cfg = small_config(1, 4);
  const auto problem = toy_problem();
  const auto ref = build_reference(cfg, problem);
  for (Criterion c : {Criterion::US, Criterion::IVR_IW, Criterion::IVR_LW, Criterion::B, Criterion::QUANTILE}) {
    CriterionKind k{c};
    k.s_star = ref.s_star;
    const auto rec = run_trial(cfg, problem, ref, k, 1);
    ASSERT_FALSE(rec.failed) << rec.failure;
    ASSERT_EQ(rec.iterations.size(), 5u);
    for (const auto& it : rec.iterations) {
      EXPECT_TRUE(std::isfinite(it.error) && it.error >= 0.0);
      EXPECT_TRUE(std::isfinite(it.cn) && it.cn >= 0.0);
      EXPECT_GE(it.kappa99, 0.0);
      EXPECT_GE(it.exceedance_error, 0.0);
      EXPECT_LE(it.exceedance_error, 1.0);
    }
    for (std::size_t i = 0; i + 1 < rec.iterations.size(); ++i) {
      ASSERT_TRUE(rec.iterations[i].selected.has_value());
      EXPECT_TRUE(problem.box.contains(*rec.iterations[i].selected));
      EXPECT_EQ(rec.iterations[i + 1].n_samples, rec.iterations[i].n_samples + 1);
    }
  }
}

TEST(Trial, NumericalFailureIsRecordedWithProvenance) {
  const auto cfg = small_config(1, 2);
  const auto ref = build_reference(cfg, toy_problem());
  // x0 > 0 blows up, either in the initial design or at a selected point
  const auto problem = toy_problem(0.0);
  int failed = 0;
  for (int t = 0; t < 6; ++t) {
    const auto rec = run_trial(cfg, problem, ref, {Criterion::US}, t);
    if (!rec.failed) continue;
    ++failed;
    EXPECT_NE(rec.failure.find("trial " + std::to_string(t)), std::string::npos);
    EXPECT_TRUE(rec.failure.find("iteration") != std::string::npos ||
                rec.failure.find("initial design") != std::string::npos);
    EXPECT_NE(rec.failure.find("diverged"), std::string::npos);
  }
  EXPECT_GT(failed, 0);
}

TEST(Reference, DivergentSamplesAreDroppedAndCounted) {
  const auto cfg = small_config(1, 0);
  const auto ref = build_reference(cfg, toy_problem(1.0));
  EXPECT_GT(ref.diverged, 0);
  EXPECT_EQ(ref.diverged + ref.outputs.size(), cfg.truth_pdf_samples);
  EXPECT_EQ(ref.inputs.rows(), ref.outputs.size());
  EXPECT_TRUE((ref.inputs.col(0).array() <= 1.0).all());
}

TEST(Reference, ExceedanceLevelMatchesQuantile) {
  const auto cfg = small_config(1, 0);
  const auto ref = build_reference(cfg, toy_problem());
  EXPECT_NEAR(ref.exceedance, 1.0 - cfg.exceedance_quantile, 2.0 / cfg.truth_pdf_samples);
  EXPECT_EQ(ref.pdf.grid.n_points, cfg.grid_points);
}

TEST(Campaign, SingleTrialMedianIsThatTrial) {
  const auto cfg = small_config(1, 2);
  const auto r = run_campaign(cfg, toy_problem());
  for (const auto& cr : r.criteria) {
    ASSERT_EQ(cr.summary.size(), 3u);
    for (int it = 0; it < 3; ++it) {
      EXPECT_EQ(cr.summary[it].median_error, cr.trials[0].iterations[it].error);
      EXPECT_EQ(cr.summary[it].median_cn, cr.trials[0].iterations[it].cn);
      EXPECT_EQ(cr.summary[it].mad_half, 0.0);
      EXPECT_EQ(cr.summary[it].trials_ok, 1);
    }
  }
}

TEST(Campaign, MediansInvariantToTrialOrder) {
  const auto cfg = small_config(5, 2);
  const auto r = run_campaign(cfg, toy_problem());
  auto trials = r.criteria[0].trials;
  std::reverse(trials.begin(), trials.end());
  std::rotate(trials.begin(), trials.begin() + 2, trials.end());
  const auto a = summarize("US", r.criteria[0].trials, cfg.n_iter);
  const auto b = summarize("US", trials, cfg.n_iter);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].median_error, b[i].median_error);
    EXPECT_EQ(a[i].mad_half, b[i].mad_half);
    EXPECT_EQ(a[i].median_cn, b[i].median_cn);
  }
}

TEST(Campaign, MedianAndMadOracle) {
  std::vector<TrialRecord> trials(4);
  const double errs[4] = {1.0, 4.0, 2.0, 10.0};
  for (int t = 0; t < 4; ++t) {
    trials[t].iterations.resize(1);
    trials[t].iterations[0].error = errs[t];
  }
  const auto s = summarize("B", trials, 0);
  EXPECT_DOUBLE_EQ(s[0].median_error, 3.0);            // (2 + 4) / 2
  EXPECT_DOUBLE_EQ(s[0].mad_half, 0.5 * 1.5);         // deviations 2,1,1,7 -> median 1.5
}

TEST(Campaign, ResultsDoNotDependOnParallelism) {
  const auto cfg = small_config(4, 2);
  const auto a = run_campaign(cfg, toy_problem(), 1);
  const auto b = run_campaign(cfg, toy_problem(), 3);
  std::ostringstream ca, cb, ta, tb;
  write_campaign_csv(ca, a);
  write_campaign_csv(cb, b);
  write_trials_csv(ta, a);
  write_trials_csv(tb, b);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(ta.str(), tb.str());
}

TEST(Campaign, FailedTrialsCountedAndFlagUnreliable) {
  const auto cfg = small_config(5, 2);
  const auto r = run_campaign(cfg, toy_problem(0.0));
  for (const auto& cr : r.criteria) {
    EXPECT_EQ(cr.trials.size(), 5u);  // nothing dropped
    int failed = 0;
    for (const auto& t : cr.trials) failed += t.failed;
    EXPECT_EQ(cr.failed, failed);
    EXPECT_EQ(cr.unreliable, failed * 5 > 5);
  }
}

TEST(Output, CsvLayout) {
  const auto cfg = small_config(2, 2);
  const auto r = run_campaign(cfg, toy_problem());
  std::ostringstream os;
  write_campaign_csv(os, r);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "iteration,criterion,median_error,mad_half,median_cn,trials_ok");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 2 * 3);
}

TEST(Output, ManifestCarriesConfigSeedsAndKdeMetadata) {
  const auto cfg = small_config(1, 1);
  const auto r = run_campaign(cfg, 0);
  const json m = make_manifest(cfg, {r}, 1, 0.5);
  EXPECT_EQ(m["config"], cfg.resolved);
  EXPECT_EQ(m["config_hash"], config_hash(cfg.resolved));
  EXPECT_EQ(m["master_seed"], cfg.master_seed);
  EXPECT_EQ(m["campaigns"][0]["reference"]["kde"]["bandwidth"], r.reference.pdf.bandwidth);
  // the manifest re-loads as the same config
  EXPECT_EQ(load_config(config_document(m)).resolved, cfg.resolved);
}

TEST(Campaign, OscillatorFromConfigRuns) {
  const auto cfg = small_config(2, 2);
  const auto r = run_campaign(cfg, 0, 2);
  EXPECT_EQ(r.problem, "osc");
  for (const auto& cr : r.criteria) {
    EXPECT_EQ(cr.failed, 0);
    EXPECT_EQ(cr.summary.back().trials_ok, 2);
  }
}

}  // namespace
