#pragma once

// Theorem-level numerical checks. Each check builds its own seeded problem,
// prints one line, and reports pass/fail with the measured quantities.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "owal/acquisition.hpp"
#include "owal/benchmarks.hpp"
#include "owal/density.hpp"
#include "owal/error.hpp"
#include "owal/gpr.hpp"
#include "owal/rng.hpp"

namespace owal {

enum class VerifyLevel { fast, full };

struct VerifyOptions {
  VerifyLevel level = VerifyLevel::fast;
  std::uint64_t seed = 20240501;
  /// Test hook: perturb the rank-one variance update so the oracle check must fail.
  bool corrupt_rank_one = false;
};

struct CheckResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

/// Largest violation of B(h) <= c * sqrt(IVR-LW(h)) over every pool candidate,
/// relative to max(1, c * sqrt(IVR-LW)). Non-positive means the bound holds.
inline double bound_violation(const AcquisitionContext& ctx) {
  const Eigen::VectorXd b = screen_pool(ctx, {Criterion::B});
  const Eigen::VectorXd lw = screen_pool(ctx, {Criterion::IVR_LW});
  const double c = bound_constant_c(ctx);
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < ctx.size(); ++m) {
    if (!std::isfinite(b[m]) || !std::isfinite(lw[m])) continue;
    const double rhs = c * std::sqrt(lw[m]);
    worst = std::max(worst, (b[m] - rhs) / std::max(1.0, rhs));
  }
  return worst;
}

namespace verify_detail {

inline std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

/// Random dataset on [-3, 3]^d with a smooth random target.
inline Dataset random_dataset(Rng& rng, int n, int d) {
  Dataset data;
  data.inputs = uniform_box(rng, n, d, -3.0, 3.0);
  const Eigen::VectorXd a = standard_normal(rng, d, 1).col(0);
  const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  data.outputs = ((data.inputs * a).array() + phase).sin() + 0.3 * data.inputs.col(0).array();
  return data;
}

/// Sum_m w_m K_b(s - c_m) and its s-derivative on a grid, Gaussian kernel, divided by M.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> weighted_kde(const Eigen::VectorXd& centers,
                                                                 const Eigen::VectorXd& weights,
                                                                 const OutputGrid& grid, double b) {
  Eigen::VectorXd p(grid.n_points), dp(grid.n_points);
  const double norm = 1.0 / (static_cast<double>(centers.size()) * b * std::sqrt(2.0 * std::numbers::pi));
  for (int g = 0; g < grid.n_points; ++g) {
    const Eigen::ArrayXd u = (grid.at(g) - centers.array()) / b;
    const Eigen::ArrayXd k = (-0.5 * u.square()).exp() * weights.array();
    p[g] = norm * k.sum();
    dp[g] = -norm * (k * u).sum() / b;
  }
  return {p, dp};
}

}  // namespace verify_detail

/// GPR exactness: noiseless random 1D/2D datasets interpolate, and the mean
/// agrees with a dense LU solve of the same (jittered) system.
inline CheckResult check_gpr_exactness(const VerifyOptions& opt) {
  CheckResult r{1, "gpr-exactness"};
  Rng rng(derive_seed(opt.seed, {1}));
  double worst_interp = 0.0, worst_var = 0.0, worst_oracle = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int d = 1 + rep % 2;
    const int n = std::uniform_int_distribution<int>(5, 50)(rng);
    const Dataset data = verify_detail::random_dataset(rng, n, d);
    // lengthscales keep cond(K) below ~1e7, where a dense LU is itself accurate to 1e-10
    KernelParams p{1.0, d == 1 ? 0.1 : 0.6, 0.0};
    GprOptions go;
    go.center_outputs = rep % 4 < 2;
    const GprPosterior post(p, data, go);
    worst_interp = std::max(worst_interp, (post.predict_mean(data.inputs) - data.outputs).cwiseAbs().maxCoeff());
    worst_var = std::max(worst_var, post.predict_var(data.inputs).maxCoeff());

    const Eigen::MatrixXd K = kernel_matrix(p, data.inputs, data.inputs) +
                              post.effective_noise() * Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd a = K.fullPivLu().solve((data.outputs.array() - post.mean_offset()).matrix());
    const Eigen::MatrixXd T = uniform_box(rng, 50, d, -3.5, 3.5);
    const Eigen::VectorXd dense = (kernel_matrix(p, T, data.inputs) * a).array() + post.mean_offset();
    worst_oracle = std::max(worst_oracle, (post.predict_mean(T) - dense).cwiseAbs().maxCoeff());
  }
  r.pass = worst_interp < 1e-8 && worst_var < 1e-8 && worst_oracle < 1e-10;
  r.detail = "max|mean-y|=" + verify_detail::fmt(worst_interp) + " max var at data=" + verify_detail::fmt(worst_var) +
             " max|mean-dense|=" + verify_detail::fmt(worst_oracle);
  return r;
}

/// Rank-one augmented variance against a full refit with h appended, fixed hyperparameters.
inline CheckResult check_rank_one(const VerifyOptions& opt) {
  CheckResult r{2, "rank-one-oracle"};
  Rng rng(derive_seed(opt.seed, {2}));
  double worst = 0.0;
  int pairs = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const int d = 1 + rep % 3;
    const Dataset data = verify_detail::random_dataset(rng, 15 + 3 * rep, d);
    const GprPosterior post(KernelParams{1.3, 1.1, 1e-4}, data);
    for (int k = 0; k < 10; ++k) {
      const Eigen::VectorXd h = uniform_box(rng, 1, d, -3.5, 3.5).row(0).transpose();
      const GprPosterior refit = post.with_sample(h, 0.0);
      const Eigen::MatrixXd xs = uniform_box(rng, 10, d, -3.5, 3.5);
      for (Eigen::Index i = 0; i < xs.rows(); ++i) {
        const Eigen::VectorXd x = xs.row(i).transpose();
        double aug = post.augmented_var(h, x);
        if (opt.corrupt_rank_one) aug = aug * (1.0 + 1e-3) + 1e-6;
        worst = std::max(worst, std::abs(aug - refit.predict_var(x)));
        ++pairs;
      }
    }
  }
  r.pass = worst <= 1e-9;
  r.detail = std::to_string(pairs) + " (x,h) pairs, max|augmented - refit|=" + verify_detail::fmt(worst);
  return r;
}

/// First-order pdf perturbation for y = sin x, yhat = y + eps cos x, x ~ N(0,1):
/// p_yhat - p_y = -d/ds int_{yhat=s} p_x Delta y + O(eps^2). Both sides are
/// estimated on common samples with one fixed bandwidth, and the L1 residual
/// must shrink with log-log slope in [1.7, 2.3].
inline CheckResult check_pdf_perturbation(const VerifyOptions& opt, std::vector<double>* residuals = nullptr) {
  CheckResult r{3, "pdf-perturbation-slope"};
  Rng rng(derive_seed(opt.seed, {3}));
  const Eigen::Index M = 100'000;
  const Eigen::VectorXd x = standard_normal(rng, M, 1).col(0);
  const Eigen::VectorXd y = x.array().sin();
  const Eigen::VectorXd dy_unit = x.array().cos();
  std::vector<double> ys(y.data(), y.data() + M);
  const double b = silverman_bandwidth(ys);
  const OutputGrid grid{-1.5, 1.5, 601};
  const auto [py, unused] = verify_detail::weighted_kde(y, Eigen::VectorXd::Ones(M), grid, b);
  (void)unused;
  const std::vector<double> eps{0.08, 0.04, 0.02, 0.01};
  std::vector<double> res;
  for (double e : eps) {
    const Eigen::VectorXd dy = e * dy_unit;
    const Eigen::VectorXd yhat = y + dy;
    const auto [pyhat, d0] = verify_detail::weighted_kde(yhat, Eigen::VectorXd::Ones(M), grid, b);
    (void)d0;
    const auto [g, dg] = verify_detail::weighted_kde(yhat, dy, grid, b);
    (void)g;
    const Eigen::VectorXd resid = (pyhat - py) + dg;
    res.push_back(resid.cwiseAbs().sum() * grid.spacing());
  }
  // least-squares slope of log residual on log eps
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    mx += std::log(eps[i]);
    my += std::log(res[i]);
  }
  mx /= static_cast<double>(eps.size());
  my /= static_cast<double>(eps.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    sxy += (std::log(eps[i]) - mx) * (std::log(res[i]) - my);
    sxx += (std::log(eps[i]) - mx) * (std::log(eps[i]) - mx);
  }
  const double slope = sxy / sxx;
  if (residuals) *residuals = res;
  r.pass = slope >= 1.7 && slope <= 2.3;
  r.detail = "bandwidth=" + verify_detail::fmt(b) + " residuals=";
  for (std::size_t i = 0; i < res.size(); ++i) r.detail += (i ? "," : "") + verify_detail::fmt(res[i]);
  r.detail += " slope=" + verify_detail::fmt(slope);
  return r;
}

struct AsymptoticPoint {
  int n = 0;
  double measured = 0.0;   // int_{S_y} |log p_ybar - log p_y| ds
  double predicted = 0.0;  // E_x[ |p_y'(ybar)| / p_y(ybar)^2 sigma(x) ] over ybar in S_y, times ||y||_H
  double max_sigma = 0.0;
  bool small_sigma = false;
  double ratio() const { return measured / predicted; }
};

/// Asymptotic log-pdf error of a GPR surrogate of y = k(., z), x ~ N(0,1),
/// against the first-order sigma-weighted integral, for N = 10, 20, 40 samples.
inline CheckResult check_asymptotic_error(const VerifyOptions& opt, std::vector<AsymptoticPoint>* points = nullptr) {
  CheckResult r{4, "log-pdf-asymptotics"};
  const KernelParams kp{1.0, 1.0, 0.0};
  const Eigen::VectorXd z = Eigen::VectorXd::Constant(1, 0.7);
  const double rkhs_norm = std::sqrt(kp.signal_variance);  // ||k(., z)||_H = sqrt(k(z, z))
  auto truth = [&](const Eigen::MatrixXd& X) -> Eigen::VectorXd { return kernel_matrix(kp, X, z.transpose()).col(0); };

  Rng rng(derive_seed(opt.seed, {4}));
  const Eigen::Index M = 200'000;
  const Eigen::MatrixXd X = standard_normal(rng, M, 1);
  const Eigen::VectorXd y = truth(X);
  std::vector<double> ys(y.data(), y.data() + M);
  const DensityEstimate py = estimate_density(ys, OutputGrid::from_samples(ys, 400));
  const double y_std = std::sqrt((y.array() - y.mean()).square().sum() / static_cast<double>(M - 1));

  std::vector<AsymptoticPoint> pts;
  for (int n : {10, 20, 40}) {
    Dataset data;
    data.inputs = Eigen::VectorXd::LinSpaced(n, -5.0, 5.0);  // covers every sample of the 2e5 draw
    data.outputs = truth(data.inputs);
    GprOptions go;
    go.center_outputs = false;
    const GprPosterior post(kp, data, go);
    const Eigen::VectorXd ybar = post.predict_mean(X);
    const Eigen::VectorXd sd = post.predict_var(X).array().sqrt();
    std::vector<double> ybs(ybar.data(), ybar.data() + M);
    const DensityEstimate pbar = estimate_density(ybs, py.grid, KdeOptions{py.bandwidth, py.floor});

    AsymptoticPoint pt;
    pt.n = n;
    pt.measured = log_pdf_distance(pbar, py);
    double acc = 0.0;
    for (Eigen::Index m = 0; m < M; ++m) {
      if (!py.grid.contains(ybar[m])) continue;
      const double p = py.pdf_at(ybar[m]);
      acc += std::abs(py.d_pdf_at(ybar[m])) / (p * p) * sd[m];
    }
    pt.predicted = rkhs_norm * acc / static_cast<double>(M);
    pt.max_sigma = sd.maxCoeff();
    pt.small_sigma = pt.max_sigma < 0.05 * y_std;
    pts.push_back(pt);
  }
  bool agree = true, monotone = true, any_small = false;
  double prev_gap = std::numeric_limits<double>::infinity();
  for (const auto& pt : pts) {
    if (!pt.small_sigma) continue;
    any_small = true;
    const double gap = std::abs(pt.ratio() - 1.0);
    agree = agree && gap <= 0.3;
    monotone = monotone && gap < prev_gap;
    prev_gap = gap;
  }
  r.pass = any_small && agree && monotone;
  for (const auto& pt : pts)
    r.detail += "N=" + std::to_string(pt.n) + " measured=" + verify_detail::fmt(pt.measured) + " predicted=" +
                verify_detail::fmt(pt.predicted) + " ratio=" + verify_detail::fmt(pt.ratio()) +
                (pt.small_sigma ? "" : " (sigma not small)") + "; ";
  if (!any_small) r.detail += "no N reached max sigma < 0.05 std(y)";
  if (points) *points = pts;
  return r;
}

/// B(h) <= c sqrt(IVR-LW(h)) for every pool candidate of 10 random oscillator posteriors.
inline CheckResult check_cauchy_schwarz(const VerifyOptions& opt) {
  CheckResult r{5, "cauchy-schwarz-bound"};
  OscillatorSpec spec;
  spec.restoring = {RestoringForce::Kind::piecewise, 1.0, 0.0, 1.0, 3.0};
  const BenchmarkProblem problem = make_oscillator_problem("oscillator", spec, 4.0);
  Rng rng(derive_seed(opt.seed, {5}));
  double worst = -std::numeric_limits<double>::infinity();
  int candidates = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const int n = std::uniform_int_distribution<int>(3, 25)(rng);
    Dataset data;
    data.inputs = problem.sample_inputs(rng, n);
    data.outputs = problem.truth_batch(data.inputs);
    FitOptions fo;
    fo.seed = derive_seed(opt.seed, {5, static_cast<std::uint64_t>(rep)});
    fo.starts = 4;
    double sdy = std::sqrt((data.outputs.array() - data.outputs.mean()).square().sum() / (n - 1.0));
    if (!(sdy > 0.0)) sdy = 1.0;
    HyperBounds hb{{1e-3 * sdy, 1e3 * sdy}, {0.4, 80.0}, {std::sqrt(1e-3), std::sqrt(1e-3)}};
    auto post = std::make_shared<const GprPosterior>(fit(data, hb, fo));
    const OutputGrid grid = OutputGrid::from_samples(
        [&] {
          const Eigen::VectorXd ys = problem.truth_batch(problem.sample_inputs(rng, 5000));
          return std::vector<double>(ys.data(), ys.data() + ys.size());
        }(),
        200);
    InputPool pool{problem.sample_inputs(rng, 1000), {}};
    const AcquisitionContext ctx(post, std::move(pool), grid, derive_seed(opt.seed, {5, 100, static_cast<std::uint64_t>(rep)}));
    worst = std::max(worst, bound_violation(ctx));
    candidates += static_cast<int>(ctx.size());
  }
  r.pass = worst <= 1e-9;
  r.detail = std::to_string(candidates) + " candidates, max (B - c sqrt(IVR-LW)) / scale=" + verify_detail::fmt(worst);
  return r;
}

/// Log-pdf distance between floored N(0,1) and N(0.5,1) on a 200-point grid
/// against a 10^4-point midpoint rule.
inline CheckResult check_density_metric(const VerifyOptions&) {
  CheckResult r{9, "density-metric-oracle"};
  const OutputGrid g{-5.0, 5.0, 200};
  auto normal = [&](double mu) {
    DensityEstimate d;
    d.grid = g;
    d.bandwidth = 1.0;
    for (int i = 0; i < g.n_points; ++i) {
      const double s = g.at(i);
      d.pdf.push_back(std::max(std::exp(-0.5 * (s - mu) * (s - mu)) / std::sqrt(2 * std::numbers::pi), d.floor));
      d.d_pdf.push_back(0.0);
    }
    return d;
  };
  const double got = log_pdf_distance(normal(0.0), normal(0.5));
  const int n = 10'000;
  double oracle = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = -5.0 + 10.0 * (i + 0.5) / n;
    oracle += std::abs(-0.5 * s * s + 0.5 * (s - 0.5) * (s - 0.5)) * 10.0 / n;
  }
  const double rel = std::abs(got - oracle) / oracle;
  r.pass = rel <= 0.01;
  r.detail = "distance=" + verify_detail::fmt(got, 8) + " quadrature=" + verify_detail::fmt(oracle, 8) +
             " rel=" + verify_detail::fmt(rel);
  return r;
}

/// Runs the suite for the level, printing "PASS|FAIL [id] name (seconds): detail" per check.
inline std::vector<CheckResult> run_verify(const VerifyOptions& opt, std::ostream& os) {
  using Check = std::function<CheckResult(const VerifyOptions&)>;
  std::vector<Check> checks{check_gpr_exactness, check_rank_one, check_cauchy_schwarz, check_density_metric};
  if (opt.level == VerifyLevel::full) {
    checks.emplace_back([](const VerifyOptions& o) { return check_pdf_perturbation(o); });
    checks.emplace_back([](const VerifyOptions& o) { return check_asymptotic_error(o); });
  }
  std::vector<CheckResult> out;
  for (const auto& c : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult res = c(opt);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    os << (res.pass ? "PASS" : "FAIL") << " [" << res.id << "] " << res.name << " (" << verify_detail::fmt(res.seconds, 3)
       << " s): " << res.detail << '\n';
    out.push_back(std::move(res));
  }
  return out;
}

}  // namespace owal
