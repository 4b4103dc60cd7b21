#pragma once

// Active-learning experiments: n_init random inputs, then n_iter rounds of
// fit -> acquisition context on a fresh pool -> select h -> query truth -> append.
// Every trial is a pure function of (config, problem, criterion, trial index),
// so campaigns are reproducible regardless of how trials are scheduled.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "owal/acquisition.hpp"
#include "owal/benchmarks.hpp"
#include "owal/config.hpp"
#include "owal/density.hpp"
#include "owal/error.hpp"
#include "owal/gpr.hpp"
#include "owal/log.hpp"
#include "owal/rng.hpp"
#include "owal/verify.hpp"

#ifndef OWAL_VERSION
#define OWAL_VERSION "unknown"
#endif

namespace owal {

/// Truth-model samples and the frozen output density every trial is scored against.
struct Reference {
  Eigen::MatrixXd inputs;   // rows that produced a finite truth value
  Eigen::VectorXd outputs;
  int requested = 0;
  int diverged = 0;         // truth evaluations dropped because the ODE blew up
  DensityEstimate pdf;      // on the frozen grid S_y
  double s_star = 0.0;      // exceedance level at the configured quantile
  double exceedance = 0.0;  // P[y > s_star] under the reference samples
};

struct IterationRecord {
  int iteration = 0;
  int n_samples = 0;
  double error = 0.0;             // log-pdf distance to the reference density
  double cn = 0.0;                // (1/M) sum sigma^2 / p over in-support pool points
  double exceedance_error = 0.0;  // |P_surrogate[y > s*] - P_reference[y > s*]|
  double kappa99 = 0.0;           // 99th percentile of |ybar - y| / sigma on reference points
  KernelParams params;
  std::optional<Eigen::VectorXd> selected;  // h chosen after this fit (absent on the last iteration)
  double y_selected = 0.0;
  double acquisition = 0.0;
  double seconds = 0.0;
};

struct TrialRecord {
  std::string criterion;
  int trial_index = 0;
  std::uint64_t trial_seed = 0;
  bool failed = false;
  std::string failure;  // with trial and iteration provenance
  std::vector<IterationRecord> iterations;
};

struct SummaryRow {
  int iteration = 0;
  std::string criterion;
  double median_error = 0.0;
  double mad_half = 0.0;
  double median_cn = 0.0;
  double median_exceedance_error = 0.0;
  int trials_ok = 0;
};

struct CriterionResult {
  CriterionKind kind;
  std::vector<TrialRecord> trials;
  std::vector<SummaryRow> summary;
  int failed = 0;
  bool unreliable = false;  // more than 20% of trials failed
};

struct CampaignResult {
  std::string problem;
  Reference reference;
  std::vector<CriterionResult> criteria;
};

struct TrialHooks {
  /// Called after every recorded iteration; lets verification mode inspect the context.
  std::function<void(const AcquisitionContext&, const CriterionKind&, int iteration)> on_context;
};

inline std::uint64_t trial_seed(std::uint64_t master_seed, int trial_index) {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(trial_index)});
}

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

inline double sample_std(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

/// Evaluate f(i) for i in [0, n) on `jobs` threads; the first exception wins.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& f) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

}  // namespace detail

/// Sample the truth model on truth_pdf_samples inputs and estimate the frozen
/// reference density. Divergent truth evaluations are counted and dropped.
inline Reference build_reference(const ExperimentConfig& cfg, const BenchmarkProblem& problem, int jobs = 1) {
  Reference ref;
  ref.requested = cfg.truth_pdf_samples;
  Rng rng(derive_seed(cfg.master_seed, {0x7265666572656e63ULL}));
  const Eigen::MatrixXd X = problem.sample_inputs(rng, cfg.truth_pdf_samples);
  Eigen::VectorXd y(X.rows());
  std::vector<char> ok(static_cast<std::size_t>(X.rows()), 1);
  const int chunk = 1024;
  const int chunks = static_cast<int>((X.rows() + chunk - 1) / chunk);
  detail::parallel_for(chunks, jobs, [&](int c) {
    for (Eigen::Index i = static_cast<Eigen::Index>(c) * chunk; i < std::min<Eigen::Index>(X.rows(), (c + 1L) * chunk); ++i) {
      try {
        y[i] = problem.truth(X.row(i).transpose());
      } catch (const divergence_error&) {
        ok[static_cast<std::size_t>(i)] = 0;
      }
    }
  });
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    if (ok[static_cast<std::size_t>(i)]) keep.push_back(i);
  ref.diverged = static_cast<int>(X.rows()) - static_cast<int>(keep.size());
  if (ref.diverged > 0) {
    std::ostringstream os;
    os << problem.name << ": " << ref.diverged << " of " << X.rows() << " reference truth evaluations diverged";
    log::warn(os.str());
  }
  ref.inputs.resize(static_cast<Eigen::Index>(keep.size()), X.cols());
  ref.outputs.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    ref.inputs.row(static_cast<Eigen::Index>(k)) = X.row(keep[k]);
    ref.outputs[static_cast<Eigen::Index>(k)] = y[keep[k]];
  }
  std::vector<double> ys(ref.outputs.data(), ref.outputs.data() + ref.outputs.size());
  const OutputGrid grid = OutputGrid::from_samples(ys, cfg.grid_points);
  ref.pdf = estimate_density(ys, grid, KdeOptions{std::nullopt, cfg.kde_floor});
  std::vector<double> sorted = ys;
  std::sort(sorted.begin(), sorted.end());
  ref.s_star = detail::quantile_sorted(sorted, cfg.exceedance_quantile);
  ref.exceedance = exceedance_prob(ys, ref.s_star);
  return ref;
}

/// Criterion with any reference-dependent settings (QUANTILE level) filled in.
inline CriterionKind resolve_criterion(const CriterionConfig& c, const Reference& ref) {
  CriterionKind k = c.kind;
  if (k.id == Criterion::QUANTILE && c.s_star_from_quantile) k.s_star = ref.s_star;
  return k;
}

namespace detail {

inline HyperBounds trial_bounds(const ExperimentConfig& cfg, const Dataset& data) {
  double sd = sample_std(data.outputs);
  if (!(sd > 0.0)) sd = 1.0;
  const double width = 2.0 * cfg.box_half_width;
  HyperBounds b;
  b.signal_std = {cfg.fit.signal_std.lo * sd, cfg.fit.signal_std.hi * sd};
  b.lengthscale = {cfg.fit.lengthscale.lo * width, cfg.fit.lengthscale.hi * width};
  switch (cfg.noise.mode) {
    case NoiseConfig::Mode::fixed: b.noise_std = {std::sqrt(cfg.noise.variance), std::sqrt(cfg.noise.variance)}; break;
    case NoiseConfig::Mode::zero: b.noise_std = {0.0, 0.0}; break;
    case NoiseConfig::Mode::learned: b.noise_std = {cfg.fit.noise_std.lo * sd, cfg.fit.noise_std.hi * sd}; break;
  }
  return b;
}

/// Acquisition pool: p_x draws, or uniform box draws with p_x / q ratios. The
/// surrogate output pdf comes from the pool's p_x draws (a fresh set for a box
/// pool) or from the reference inputs.
inline InputPool make_pool(const ExperimentConfig& cfg, const BenchmarkProblem& problem, const Reference& ref,
                           Rng& rng) {
  const bool from_reference = cfg.surrogate_pdf == ExperimentConfig::SurrogatePdf::reference;
  if (cfg.pool_sampling == ExperimentConfig::PoolSampling::input) {
    InputPool pool{problem.sample_inputs(rng, cfg.pool_size), {}, {}, {}};
    if (from_reference) pool.pdf_inputs = ref.inputs;
    return pool;
  }
  const Eigen::Index M = cfg.pool_size;
  const Eigen::VectorXd width = problem.box.hi - problem.box.lo;
  InputPool pool;
  pool.points = uniform_box(rng, M, problem.input_dim, 0.0, 1.0);
  pool.points = (pool.points.array().rowwise() * width.transpose().array()).rowwise() + problem.box.lo.transpose().array();
  const double log_volume = width.array().log().sum();
  pool.ratio = (problem.batch_logpdf(pool.points).array() + log_volume).exp().matrix();
  pool.pdf_inputs = from_reference ? ref.inputs : problem.sample_inputs(rng, M);
  return pool;
}

inline double observe(const BenchmarkProblem& problem, const ExperimentConfig& cfg, const Eigen::VectorXd& x,
                      std::uint64_t seed, int sample_index) {
  double y = problem.truth(x);
  if (cfg.noise.mode != NoiseConfig::Mode::zero && cfg.noise.variance > 0.0) {
    Rng rng(derive_seed(seed, {2, static_cast<std::uint64_t>(sample_index)}));
    y += std::sqrt(cfg.noise.variance) * std::normal_distribution<double>(0.0, 1.0)(rng);
  }
  return y;
}

/// Scores a posterior against the reference: log-pdf error, exceedance error, kappa99.
inline void score(const GprPosterior& post, const Reference& ref, IterationRecord& rec) {
  const Eigen::VectorXd means = post.predict_mean(ref.inputs);
  std::vector<double> ms(means.data(), means.data() + means.size());
  KdeOptions kde{ref.pdf.bandwidth, ref.pdf.floor};
  const DensityEstimate surrogate = estimate_density(ms, ref.pdf.grid, kde);
  rec.error = log_pdf_distance(ref.pdf, surrogate);
  rec.exceedance_error = std::abs(exceedance_prob(ms, ref.s_star) - ref.exceedance);

  const Eigen::Index K = std::min<Eigen::Index>(1000, ref.inputs.rows());
  const Eigen::VectorXd var = post.predict_var(Eigen::MatrixXd(ref.inputs.topRows(K)));
  std::vector<double> ratio(static_cast<std::size_t>(K));
  for (Eigen::Index i = 0; i < K; ++i) {
    const double err = std::abs(means[i] - ref.outputs[i]);
    const double sd = std::sqrt(var[i]);
    ratio[static_cast<std::size_t>(i)] = sd > 0.0 ? err / sd : (err > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  }
  std::sort(ratio.begin(), ratio.end());
  rec.kappa99 = quantile_sorted(ratio, 0.99);
}

}  // namespace detail

/// One randomized active-learning experiment. Numerical failures are captured
/// in the record (failed = true) together with the iteration they occurred in.
inline TrialRecord run_trial(const ExperimentConfig& cfg, const BenchmarkProblem& problem, const Reference& ref,
                             const CriterionKind& kind, int trial_index, const TrialHooks& hooks = {}) {
  using clock = std::chrono::steady_clock;
  TrialRecord rec;
  rec.criterion = kind.name();
  rec.trial_index = trial_index;
  rec.trial_seed = trial_seed(cfg.master_seed, trial_index);
  const std::uint64_t seed = rec.trial_seed;
  const int n = problem.input_dim;
  const int n_init = cfg.n_init ? *cfg.n_init : n + 1;
  int iteration = -1;
  try {
    Rng init_rng(derive_seed(seed, {1}));
    Dataset data;
    data.inputs = problem.sample_inputs(init_rng, n_init);
    data.outputs.resize(n_init);
    for (int i = 0; i < n_init; ++i) data.outputs[i] = detail::observe(problem, cfg, data.inputs.row(i).transpose(), seed, i);

    std::optional<KernelParams> warm;
    for (iteration = 0; iteration <= cfg.n_iter; ++iteration) {
      const auto t0 = clock::now();
      FitOptions fo;
      fo.starts = cfg.fit.starts;
      fo.max_evaluations = cfg.fit.max_evaluations;
      fo.seed = derive_seed(seed, {3, static_cast<std::uint64_t>(iteration)});
      fo.warm_start = warm;
      fo.gpr.center_outputs = cfg.fit.center_outputs;
      auto post = std::make_shared<const GprPosterior>(fit(data, detail::trial_bounds(cfg, data), fo));
      warm = post->params();

      IterationRecord it;
      it.iteration = iteration;
      it.n_samples = static_cast<int>(data.size());
      it.params = post->params();
      detail::score(*post, ref, it);

      const std::uint64_t pool_seed = derive_seed(seed, {4, static_cast<std::uint64_t>(iteration)});
      Rng pool_rng(pool_seed);
      InputPool pool = detail::make_pool(cfg, problem, ref, pool_rng);
      AcquisitionContext ctx(post, std::move(pool), ref.pdf.grid, pool_seed, KdeOptions{std::nullopt, cfg.kde_floor});
      it.cn = convergence_diagnostic(ctx);
      if (cfg.verify_bound) {
        const double v = bound_violation(ctx);
        if (v > 1e-9) {
          std::ostringstream os;
          os << problem.name << " / " << kind.name() << " trial " << trial_index << " iteration " << iteration
             << ": B exceeds c sqrt(IVR-LW) by " << v << " (relative)";
          throw check_failure(os.str());
        }
      }
      if (hooks.on_context) hooks.on_context(ctx, kind, iteration);

      if (iteration < cfg.n_iter) {
        const Selection sel = select_next(ctx, kind, cfg.eval_budget(), problem.box, cfg.select);
        it.selected = sel.point;
        it.acquisition = sel.value;
        it.y_selected = detail::observe(problem, cfg, sel.point, seed, static_cast<int>(data.size()));
        data.append(sel.point, it.y_selected);
      }
      it.seconds = std::chrono::duration<double>(clock::now() - t0).count();
      rec.iterations.push_back(std::move(it));
    }
  } catch (const numerical_failure& e) {
    std::ostringstream os;
    os << problem.name << " / " << kind.name() << " trial " << trial_index
       << (iteration < 0 ? std::string(" initial design") : " iteration " + std::to_string(iteration)) << ": "
       << e.what();
    rec.failed = true;
    rec.failure = os.str();
    log::warn(rec.failure);
  }
  return rec;
}

/// Per-iteration medians across trials; trials contribute every iteration they completed.
inline std::vector<SummaryRow> summarize(const std::string& criterion, const std::vector<TrialRecord>& trials,
                                         int n_iter) {
  std::vector<SummaryRow> rows;
  for (int it = 0; it <= n_iter; ++it) {
    std::vector<double> err, cn, ex;
    for (const auto& t : trials)
      if (static_cast<int>(t.iterations.size()) > it) {
        err.push_back(t.iterations[static_cast<std::size_t>(it)].error);
        cn.push_back(t.iterations[static_cast<std::size_t>(it)].cn);
        ex.push_back(t.iterations[static_cast<std::size_t>(it)].exceedance_error);
      }
    SummaryRow r;
    r.iteration = it;
    r.criterion = criterion;
    r.trials_ok = static_cast<int>(err.size());
    r.median_error = detail::median(err);
    std::vector<double> dev;
    for (double e : err) dev.push_back(std::abs(e - r.median_error));
    r.mad_half = 0.5 * detail::median(dev);
    r.median_cn = detail::median(cn);
    r.median_exceedance_error = detail::median(ex);
    rows.push_back(r);
  }
  return rows;
}

/// All criteria of the config on one problem; trials of all criteria share one work queue.
inline CampaignResult run_campaign(const ExperimentConfig& cfg, const BenchmarkProblem& problem, int jobs = 1,
                                   const TrialHooks& hooks = {}) {
  CampaignResult out;
  out.problem = problem.name;
  out.reference = build_reference(cfg, problem, jobs);

  const int C = static_cast<int>(cfg.criteria.size());
  out.criteria.resize(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    out.criteria[static_cast<std::size_t>(c)].kind = resolve_criterion(cfg.criteria[static_cast<std::size_t>(c)], out.reference);
    out.criteria[static_cast<std::size_t>(c)].trials.resize(static_cast<std::size_t>(cfg.n_trials));
  }
  detail::parallel_for(C * cfg.n_trials, jobs, [&](int w) {
    const auto c = static_cast<std::size_t>(w / cfg.n_trials);
    const int t = w % cfg.n_trials;
    out.criteria[c].trials[static_cast<std::size_t>(t)] = run_trial(cfg, problem, out.reference, out.criteria[c].kind, t, hooks);
  });
  for (auto& cr : out.criteria) {
    cr.failed = static_cast<int>(std::count_if(cr.trials.begin(), cr.trials.end(), [](const auto& t) { return t.failed; }));
    cr.unreliable = cr.failed * 5 > cfg.n_trials;
    cr.summary = summarize(cr.kind.name(), cr.trials, cfg.n_iter);
    if (cr.unreliable)
      log::warn(problem.name + " / " + cr.kind.name() + ": more than 20% of trials failed; campaign unreliable");
  }
  return out;
}

inline CampaignResult run_campaign(const ExperimentConfig& cfg, std::size_t problem_index, int jobs = 1,
                                   const TrialHooks& hooks = {}) {
  if (problem_index >= cfg.problems.size()) throw usage_error("run_campaign: problem index out of range");
  return run_campaign(cfg, cfg.problems[problem_index].build(cfg.box_half_width), jobs, hooks);
}

// ---------------------------------------------------------------------------
// Output files

namespace detail {
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) h = (h ^ ch) * 0x100000001b3ULL;
  return h;
}

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}
}  // namespace detail

inline std::string config_hash(const json& resolved) { return detail::hex(detail::fnv1a(resolved.dump())); }

inline void write_campaign_csv(std::ostream& os, const CampaignResult& r) {
  os << "iteration,criterion,median_error,mad_half,median_cn,trials_ok\n";
  for (const auto& cr : r.criteria)
    for (const auto& row : cr.summary)
      os << row.iteration << ',' << row.criterion << ',' << detail::fmt(row.median_error) << ','
         << detail::fmt(row.mad_half) << ',' << detail::fmt(row.median_cn) << ',' << row.trials_ok << '\n';
}

inline void write_trials_csv(std::ostream& os, const CampaignResult& r) {
  os << "criterion,trial,trial_seed,status,iteration,n_samples,error,cn,exceedance_error,kappa99,"
        "signal_variance,lengthscale,noise_variance,h,y_h,acquisition\n";
  for (const auto& cr : r.criteria)
    for (const auto& t : cr.trials)
      for (const auto& it : t.iterations) {
        os << t.criterion << ',' << t.trial_index << ',' << t.trial_seed << ',' << (t.failed ? "failed" : "ok") << ','
           << it.iteration << ',' << it.n_samples << ',' << detail::fmt(it.error) << ',' << detail::fmt(it.cn) << ','
           << detail::fmt(it.exceedance_error) << ',' << detail::fmt(it.kappa99) << ','
           << detail::fmt(it.params.signal_variance) << ',' << detail::fmt(it.params.lengthscale) << ','
           << detail::fmt(it.params.noise_variance) << ',';
        if (it.selected) {
          for (Eigen::Index k = 0; k < it.selected->size(); ++k) os << (k ? ";" : "") << detail::fmt((*it.selected)[k]);
          os << ',' << detail::fmt(it.y_selected) << ',' << detail::fmt(it.acquisition);
        } else {
          os << ",,";
        }
        os << '\n';
      }
}

struct OutputFiles {
  std::string csv, trials_csv, reference_pdf;
};

inline OutputFiles output_files(const std::string& problem) {
  return {problem + ".csv", problem + "_trials.csv", problem + "_reference_pdf.tsv"};
}

inline json campaign_manifest_entry(const ExperimentConfig& cfg, const CampaignResult& r) {
  const auto files = output_files(r.problem);
  json e;
  e["problem"] = r.problem;
  e["files"] = {{"csv", files.csv}, {"trials_csv", files.trials_csv}, {"reference_pdf", files.reference_pdf}};
  const auto& p = r.reference.pdf;
  e["reference"] = {{"samples_requested", r.reference.requested},
                    {"samples_used", r.reference.outputs.size()},
                    {"diverged", r.reference.diverged},
                    {"s_star", r.reference.s_star},
                    {"exceedance_quantile", cfg.exceedance_quantile},
                    {"exceedance_prob", r.reference.exceedance},
                    {"kde", {{"kernel", "gaussian"},
                             {"bandwidth", p.bandwidth},
                             {"bandwidth_rule", "silverman"},
                             {"floor", p.floor},
                             {"grid", {{"lo", p.grid.lo}, {"hi", p.grid.hi}, {"n_points", p.grid.n_points}}}}}};
  json crit = json::array();
  for (const auto& cr : r.criteria) {
    json c = {{"criterion", cr.kind.name()},
              {"trials", cr.trials.size()},
              {"failed", cr.failed},
              {"unreliable", cr.unreliable}};
    if (cr.kind.id == Criterion::QUANTILE) {
      c["s_star"] = cr.kind.s_star;
      c["band"] = cr.kind.band ? json(*cr.kind.band) : json("0.1 std of pool means");
    }
    json failures = json::array();
    for (const auto& t : cr.trials)
      if (t.failed) failures.push_back({{"trial", t.trial_index}, {"seed", t.trial_seed}, {"message", t.failure}});
    c["failures"] = failures;
    crit.push_back(c);
  }
  e["criteria"] = crit;
  return e;
}

inline json make_manifest(const ExperimentConfig& cfg, const std::vector<CampaignResult>& results, int jobs,
                          double wall_seconds) {
  json m;
  m["manifest_version"] = 1;
  m["software"] = {{"name", "owal"}, {"version", OWAL_VERSION}};
  m["config"] = cfg.resolved;
  m["config_hash"] = config_hash(cfg.resolved);
  m["master_seed"] = cfg.master_seed;
  m["trial_seeds"] = "derive_seed(master_seed, {trial_index})";
  json camps = json::array();
  for (const auto& r : results) camps.push_back(campaign_manifest_entry(cfg, r));
  m["campaigns"] = camps;
  m["run"] = {{"jobs", jobs}, {"wall_seconds", wall_seconds}};
  return m;
}

/// Writes <problem>.csv, <problem>_trials.csv, <problem>_reference_pdf.tsv.
inline void write_campaign_files(const std::filesystem::path& dir, const CampaignResult& r) {
  std::filesystem::create_directories(dir);
  const auto files = output_files(r.problem);
  auto open = [&](const std::string& name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw usage_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open(files.csv);
    write_campaign_csv(f, r);
  }
  {
    auto f = open(files.trials_csv);
    write_trials_csv(f, r);
  }
  {
    auto f = open(files.reference_pdf);
    write_density(f, r.reference.pdf);
  }
}

inline void write_manifest(const std::filesystem::path& dir, const json& manifest) {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / "manifest.json", std::ios::binary);
  if (!f) throw usage_error("cannot write " + (dir / "manifest.json").string());
  f << manifest.dump(2) << '\n';
}

/// A config document, or the config embedded in a run manifest.
inline json config_document(const json& doc) {
  if (doc.is_object() && doc.contains("manifest_version") && doc.contains("config")) return doc["config"];
  return doc;
}

}  // namespace owal
