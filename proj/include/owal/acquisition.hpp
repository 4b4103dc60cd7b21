#pragma once

// Sampling criteria for the next input h. Every criterion is minimized.
//
// Integrals over p_x are Monte Carlo averages over a pool drawn from p_x, so
// the p_x factor cancels against the sampling measure:
//
//   US      -sigma^2(h)
//   IVR-IW  (1/M) sum_m                         sigma^2(x_m; h)
//   IVR-LW  (1/M) sum_m  1 / p(ybar_m)          sigma^2(x_m; h)
//   B       (1/M) sum_m  |p'(ybar_m)| / p^2     sigma(x_m; h)
//   QUANTILE(1/M) sum_m  g_band(s* - ybar_m)    sigma(x_m; h)
//
// where p is the KDE of the pool's surrogate means on the frozen output grid,
// and pool points whose mean falls outside that grid get zero weight in the
// likelihood-weighted terms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "owal/density.hpp"
#include "owal/error.hpp"
#include "owal/gpr.hpp"
#include "owal/log.hpp"
#include "owal/simplex.hpp"

namespace owal {

enum class Criterion { US, IVR_IW, IVR_LW, B, QUANTILE };

struct CriterionKind {
  Criterion id = Criterion::US;
  double s_star = 0.0;
  std::optional<double> band;  // QUANTILE smoothing width; default 0.1 std of pool means

  static constexpr std::string_view kValidNames = "{US, IVR-IW, IVR-LW, B, QUANTILE}";

  static CriterionKind parse(std::string_view name) {
    if (name == "US") return {Criterion::US};
    if (name == "IVR-IW") return {Criterion::IVR_IW};
    if (name == "IVR-LW") return {Criterion::IVR_LW};
    if (name == "B") return {Criterion::B};
    if (name == "QUANTILE") return {Criterion::QUANTILE};
    std::ostringstream os;
    os << "unknown criterion '" << name << "'; valid kinds are " << kValidNames;
    throw usage_error(os.str());
  }

  std::string name() const {
    switch (id) {
      case Criterion::US: return "US";
      case Criterion::IVR_IW: return "IVR-IW";
      case Criterion::IVR_LW: return "IVR-LW";
      case Criterion::B: return "B";
      case Criterion::QUANTILE: return "QUANTILE";
    }
    return "?";
  }

  void validate() const {
    if (id == Criterion::QUANTILE && band && !(*band > 0.0)) throw usage_error("QUANTILE band must be positive");
  }

  /// B and QUANTILE integrate sigma, the IVR variants sigma^2.
  bool integrates_std() const { return id == Criterion::B || id == Criterion::QUANTILE; }
};

/// Monte Carlo pool drawn from p_x.
/// Quadrature nodes and screening candidates. When the nodes are not drawn
/// from p_x, `ratio` holds p_x(x_m) / q(x_m) for the sampling density q and
/// `pdf_inputs` holds separate p_x draws from which the surrogate output pdf
/// is estimated. Both empty means the nodes are p_x draws themselves.
struct InputPool {
  Eigen::MatrixXd points;      // M x n
  Eigen::VectorXd log_density; // log p_x(x_m); may be empty when unused
  Eigen::VectorXd ratio;       // p_x / q per node; empty when q = p_x
  Eigen::MatrixXd pdf_inputs;  // p_x draws for the output pdf; empty when q = p_x
};

struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static Box cube(Eigen::Index dim, double half_width) {
    return {Eigen::VectorXd::Constant(dim, -half_width), Eigen::VectorXd::Constant(dim, half_width)};
  }
  bool contains(const Eigen::VectorXd& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
};

class AcquisitionContext {
 public:
  static constexpr Eigen::Index kMinPool = 1000;

  AcquisitionContext(std::shared_ptr<const GprPosterior> posterior, InputPool pool, OutputGrid grid,
                     std::uint64_t pool_seed, KdeOptions kde = {})
      : posterior_(std::move(posterior)), pool_(std::move(pool)), pool_seed_(pool_seed) {
    if (!posterior_) throw usage_error("acquisition context needs a posterior");
    if (pool_.points.rows() < kMinPool) throw usage_error("acquisition pool must hold at least 1000 points");
    if (pool_.points.cols() != posterior_->dim()) throw usage_error("pool dimension does not match the posterior");
    if (pool_.ratio.size() != 0 && pool_.ratio.size() != pool_.points.rows())
      throw usage_error("pool importance ratios do not match the pool size");
    if (pool_.pdf_inputs.size() != 0 && pool_.pdf_inputs.cols() != posterior_->dim())
      throw usage_error("pool pdf inputs do not match the posterior dimension");
    grid.validate();

    means_ = posterior_->predict_mean(pool_.points);
    whitened_ = posterior_->whitened_cross(pool_.points);
    const Eigen::Index M = size();
    variances_.resize(M);
    for (Eigen::Index m = 0; m < M; ++m)
      variances_[m] = posterior_->clamp_variance(posterior_->params().signal_variance - whitened_.col(m).squaredNorm());

    ratio_ = pool_.ratio.size() ? pool_.ratio : Eigen::VectorXd::Ones(M);

    std::vector<double> ms(means_.data(), means_.data() + M);
    const Eigen::VectorXd pdf_means = pool_.pdf_inputs.size() ? posterior_->predict_mean(pool_.pdf_inputs) : means_;
    std::vector<double> ps(pdf_means.data(), pdf_means.data() + pdf_means.size());
    const double mean = pdf_means.mean();
    mean_std_ = std::sqrt((pdf_means.array() - mean).square().sum() / static_cast<double>(pdf_means.size() - 1));
    if (mean_std_ > 0.0) {
      kde.min_samples = std::min<int>(kde.min_samples, static_cast<int>(ps.size()));
      pdf_ = estimate_density(ps, grid, kde);
      // exact KDE at the means: interpolating the grid would miss mass whenever
      // the bandwidth of clustered means is finer than the grid spacing
      const PointDensity at = density_at(ps, ms, pdf_->bandwidth, pdf_->floor);
      pdf_vals_ = Eigen::Map<const Eigen::VectorXd>(at.pdf.data(), M);
      // A KDE evaluated at its own samples never drops below one kernel mass;
      // separate pdf samples get the same resolution limit so that means in
      // the gaps between tail samples do not take weights of order 1 / floor.
      pool_floor_ = pdf_->floor;
      if (pool_.pdf_inputs.size()) {
        pool_floor_ = std::max(pool_floor_, 1.0 / (static_cast<double>(ps.size()) * pdf_->bandwidth *
                                                   std::sqrt(2.0 * std::numbers::pi)));
        pdf_vals_ = pdf_vals_.cwiseMax(pool_floor_);
      }
      dpdf_vals_ = Eigen::Map<const Eigen::VectorXd>(at.d_pdf.data(), M);
      in_support_.resize(M);
      for (Eigen::Index m = 0; m < M; ++m) in_support_[m] = grid.contains(means_[m]);
    }
  }

  const GprPosterior& posterior() const { return *posterior_; }
  const InputPool& pool() const { return pool_; }
  Eigen::Index size() const { return pool_.points.rows(); }
  std::uint64_t pool_seed() const { return pool_seed_; }
  const Eigen::VectorXd& surrogate_means() const { return means_; }
  const Eigen::VectorXd& pool_variances() const { return variances_; }
  /// Lower limit applied to pdf_at_pool(): the KDE floor, or one kernel mass
  /// of the pdf samples when they are separate from the pool.
  double pool_pdf_floor() const {
    require_pdf();
    return pool_floor_;
  }
  /// p_x / q at every pool point (all ones for a p_x pool).
  const Eigen::VectorXd& importance() const { return ratio_; }
  /// L^{-1} k(X, pool), N x M.
  const Eigen::MatrixXd& whitened_pool() const { return whitened_; }
  double surrogate_std() const { return mean_std_; }
  bool has_pdf() const { return pdf_.has_value(); }

  const DensityEstimate& pdf() const {
    require_pdf();
    return *pdf_;
  }
  /// Floored p(ybar_m), p'(ybar_m) and the S_y membership of each pool point.
  const Eigen::VectorXd& pdf_at_pool() const {
    require_pdf();
    return pdf_vals_;
  }
  const Eigen::VectorXd& dpdf_at_pool() const {
    require_pdf();
    return dpdf_vals_;
  }
  const Eigen::Array<bool, Eigen::Dynamic, 1>& in_support() const {
    require_pdf();
    return in_support_;
  }

  /// Posterior covariance kbar(x_m, h) for every pool point.
  Eigen::VectorXd pool_covariance(const Eigen::VectorXd& h) const {
    const Eigen::MatrixXd hm = h.transpose();
    const Eigen::VectorXd kh = kernel_matrix(posterior_->params(), pool_.points, hm).col(0);
    const Eigen::VectorXd vh = posterior_->whitened_cross(hm).col(0);
    return kh - whitened_.transpose() * vh;
  }

 private:
  void require_pdf() const {
    if (!pdf_) throw degenerate_distribution("surrogate means are constant over the pool; no output pdf");
  }

  std::shared_ptr<const GprPosterior> posterior_;
  InputPool pool_;
  std::uint64_t pool_seed_;
  Eigen::VectorXd means_;
  Eigen::VectorXd ratio_;
  double pool_floor_ = 0.0;
  Eigen::VectorXd variances_;
  Eigen::MatrixXd whitened_;
  double mean_std_ = 0.0;
  std::optional<DensityEstimate> pdf_;
  Eigen::VectorXd pdf_vals_;
  Eigen::VectorXd dpdf_vals_;
  Eigen::Array<bool, Eigen::Dynamic, 1> in_support_;
};

struct WeightResult {
  Eigen::VectorXd weights;
  double floored_fraction = 0.0;  // share of in-support pool points sitting on the pdf floor
  bool ill_conditioned = false;   // floored_fraction > 0.5
};

inline double resolved_band(const AcquisitionContext& ctx, const CriterionKind& kind) {
  if (kind.band) return *kind.band;
  const double b = 0.1 * ctx.surrogate_std();
  if (!(b > 0.0)) throw degenerate_distribution("QUANTILE band collapses: surrogate means are constant");
  return b;
}

namespace detail {
inline WeightResult floor_diagnostics(const AcquisitionContext& ctx, Eigen::VectorXd w) {
  WeightResult r{std::move(w)};
  const auto& p = ctx.pdf_at_pool();
  const auto& mask = ctx.in_support();
  const double fl = ctx.pool_pdf_floor();
  Eigen::Index inside = 0, floored = 0;
  for (Eigen::Index m = 0; m < ctx.size(); ++m) {
    if (!mask[m]) continue;
    ++inside;
    if (p[m] <= fl * (1.0 + 1e-9)) ++floored;
  }
  r.floored_fraction = inside ? static_cast<double>(floored) / static_cast<double>(inside) : 1.0;
  r.ill_conditioned = r.floored_fraction > 0.5;
  if (r.ill_conditioned) log::warn("acquisition weights ill-conditioned: pdf floor dominates the pool");
  return r;
}
}  // namespace detail

namespace detail {
inline WeightResult weight_vector_px(const AcquisitionContext& ctx, const CriterionKind& kind) {
  const Eigen::Index M = ctx.size();
  switch (kind.id) {
    case Criterion::US:
      throw usage_error("US has no integrand weights; use acquisition_value");
    case Criterion::IVR_IW:
      return {Eigen::VectorXd::Ones(M), 0.0, false};
    case Criterion::IVR_LW: {
      const auto& p = ctx.pdf_at_pool();
      const auto& mask = ctx.in_support();
      Eigen::VectorXd w(M);
      for (Eigen::Index m = 0; m < M; ++m) w[m] = mask[m] ? 1.0 / p[m] : 0.0;
      return detail::floor_diagnostics(ctx, std::move(w));
    }
    case Criterion::B: {
      const auto& p = ctx.pdf_at_pool();
      const auto& dp = ctx.dpdf_at_pool();
      const auto& mask = ctx.in_support();
      Eigen::VectorXd w(M);
      for (Eigen::Index m = 0; m < M; ++m) w[m] = mask[m] ? std::abs(dp[m]) / (p[m] * p[m]) : 0.0;
      return detail::floor_diagnostics(ctx, std::move(w));
    }
    case Criterion::QUANTILE: {
      const double band = resolved_band(ctx, kind);
      const double norm = 1.0 / (band * std::sqrt(2.0 * std::numbers::pi));
      const Eigen::VectorXd z = (kind.s_star - ctx.surrogate_means().array()) / band;
      return {(norm * (-0.5 * z.array().square()).exp()).matrix(), 0.0, false};
    }
  }
  throw usage_error("unhandled criterion");
}
}  // namespace detail

/// Per-pool-point integrand weights after the p_x / sampling-density cancellation.
inline WeightResult weight_vector(const AcquisitionContext& ctx, const CriterionKind& kind) {
  kind.validate();
  WeightResult r = detail::weight_vector_px(ctx, kind);
  r.weights.array() *= ctx.importance().array();
  return r;
}

namespace detail {

/// Weighted average of the augmented variance (or std) given kbar(x_m, h)
/// and sigma^2(h) + noise.
inline double reduce_augmented(const AcquisitionContext& ctx, const Eigen::VectorXd& w, bool use_std,
                               const Eigen::Ref<const Eigen::VectorXd>& kb, double denom) {
  const auto& var = ctx.pool_variances();
  double acc = 0.0;
  for (Eigen::Index m = 0; m < ctx.size(); ++m) {
    if (w[m] == 0.0) continue;
    const double v = std::clamp(var[m] - kb[m] * kb[m] / denom, 0.0, var[m]);
    acc += w[m] * (use_std ? std::sqrt(v) : v);
  }
  return acc / static_cast<double>(ctx.size());
}

inline double degenerate_threshold(const AcquisitionContext& ctx) {
  return GprPosterior::kDegenerateCandidate * ctx.posterior().params().signal_variance;
}

}  // namespace detail

/// Criterion value at candidate h; lower is better. Degenerate candidates
/// (no residual variance at h) return +inf.
inline double acquisition_value(const AcquisitionContext& ctx, const CriterionKind& kind, const Eigen::VectorXd& h,
                                const WeightResult* weights = nullptr) {
  const auto& post = ctx.posterior();
  if (kind.id == Criterion::US) return -post.predict_var(h);
  const double denom = post.predict_var(h) + post.effective_noise();
  if (denom < detail::degenerate_threshold(ctx)) {
    log::debug("acquisition_value: degenerate candidate");
    return std::numeric_limits<double>::infinity();
  }
  WeightResult local;
  if (!weights) {
    local = weight_vector(ctx, kind);
    weights = &local;
  }
  return detail::reduce_augmented(ctx, weights->weights, kind.integrates_std(), ctx.pool_covariance(h), denom);
}

/// Criterion value at every pool point used as a candidate (points outside the
/// box get +inf). Candidates are processed in column blocks to bound memory.
inline Eigen::VectorXd screen_pool(const AcquisitionContext& ctx, const CriterionKind& kind,
                                   const std::optional<Box>& box = {}) {
  const Eigen::Index M = ctx.size();
  const auto& post = ctx.posterior();
  const auto& var = ctx.pool_variances();
  Eigen::VectorXd out(M);
  if (kind.id == Criterion::US) {
    out = -var;
  } else {
    const WeightResult wr = weight_vector(ctx, kind);
    const double noise = post.effective_noise();
    const double thr = detail::degenerate_threshold(ctx);
    constexpr Eigen::Index block = 256;
    for (Eigen::Index c0 = 0; c0 < M; c0 += block) {
      const Eigen::Index nb = std::min(block, M - c0);
      Eigen::MatrixXd kb = kernel_matrix(post.params(), ctx.pool().points, ctx.pool().points.middleRows(c0, nb));
      kb.noalias() -= ctx.whitened_pool().transpose() * ctx.whitened_pool().middleCols(c0, nb);
      for (Eigen::Index j = 0; j < nb; ++j) {
        const double denom = var[c0 + j] + noise;
        out[c0 + j] = denom < thr ? std::numeric_limits<double>::infinity()
                                  : detail::reduce_augmented(ctx, wr.weights, kind.integrates_std(), kb.col(j), denom);
      }
    }
  }
  if (box)
    for (Eigen::Index m = 0; m < M; ++m)
      if (!box->contains(ctx.pool().points.row(m).transpose())) out[m] = std::numeric_limits<double>::infinity();
  return out;
}

struct SelectOptions {
  int top_k = 10;
  int polish_evaluations = 50;
};

struct Selection {
  Eigen::VectorXd point;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
};

/// Screen every pool point, then polish the best top_k with a box-constrained
/// simplex search. The evaluation budget covers both phases.
inline Selection select_next(const AcquisitionContext& ctx, const CriterionKind& kind, long budget, const Box& box,
                             const SelectOptions& opt = {}) {
  kind.validate();
  const Eigen::Index M = ctx.size();
  if (budget < M) throw usage_error("select_next: evaluation budget must cover the whole pool");
  if (box.lo.size() != ctx.posterior().dim() || box.hi.size() != ctx.posterior().dim())
    throw usage_error("select_next: search box has wrong dimension");

  const Eigen::VectorXd screened = screen_pool(ctx, kind, box);
  std::vector<Eigen::Index> order;
  for (Eigen::Index m = 0; m < M; ++m)
    if (std::isfinite(screened[m])) order.push_back(m);
  if (order.empty()) throw no_valid_candidate("select_next: every candidate is degenerate or outside the box");
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::max(opt.top_k, 1)), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](auto a, auto b) { return screened[a] < screened[b] || (screened[a] == screened[b] && a < b); });

  Selection best;
  best.evaluations = static_cast<int>(M);
  best.point = ctx.pool().points.row(order.front()).transpose();
  best.value = screened[order.front()];

  long remaining = budget - M;
  const WeightResult weights = kind.id == Criterion::US ? WeightResult{} : weight_vector(ctx, kind);
  auto objective = [&](const Eigen::VectorXd& h) { return acquisition_value(ctx, kind, h, &weights); };
  const double lscale = ctx.posterior().params().lengthscale;
  Eigen::VectorXd step = ((box.hi - box.lo) * 0.05).cwiseMin(0.25 * lscale);

  for (std::size_t i = 0; i < k && remaining > 0; ++i) {
    SimplexOptions so;
    so.max_evaluations = static_cast<int>(std::min<long>(opt.polish_evaluations, remaining / static_cast<long>(k - i)));
    if (so.max_evaluations <= 0) break;
    so.x_tolerance = 1e-6 * lscale;
    so.f_tolerance = 0.0;
    auto r = nelder_mead(objective, ctx.pool().points.row(order[i]).transpose(), step, box.lo, box.hi, so);
    remaining -= r.evaluations;
    best.evaluations += r.evaluations;
    if (r.value < best.value) {
      best.value = r.value;
      best.point = r.x;
    }
  }
  return best;
}

/// c = [ (1/M) sum_m p'(ybar_m)^2 / p(ybar_m)^3 ]^{1/2} over the in-support pool points.
inline double bound_constant_c(const AcquisitionContext& ctx) {
  const auto& p = ctx.pdf_at_pool();
  const auto& dp = ctx.dpdf_at_pool();
  const auto& mask = ctx.in_support();
  double acc = 0.0;
  for (Eigen::Index m = 0; m < ctx.size(); ++m)
    if (mask[m]) acc += ctx.importance()[m] * dp[m] * dp[m] / (p[m] * p[m] * p[m]);
  detail::floor_diagnostics(ctx, Eigen::VectorXd());
  return std::sqrt(acc / static_cast<double>(ctx.size()));
}

/// (1/M) sum_m sigma^2(x_m) / p(ybar_m) over in-support pool points: the quantity
/// whose decay drives convergence in measure.
inline double convergence_diagnostic(const AcquisitionContext& ctx) {
  const auto& p = ctx.pdf_at_pool();
  const auto& mask = ctx.in_support();
  const auto& var = ctx.pool_variances();
  double acc = 0.0;
  for (Eigen::Index m = 0; m < ctx.size(); ++m)
    if (mask[m]) acc += ctx.importance()[m] * var[m] / p[m];
  return acc / static_cast<double>(ctx.size());
}

}  // namespace owal
