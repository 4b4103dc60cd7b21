#pragma once

// Gaussian process regression with an isotropic squared-exponential kernel.
//
//   k(x, x') = s2 * exp(-|x - x'|^2 / (2 l^2))
//
// The posterior keeps a Cholesky factor of K(X,X) + noise * I so that mean,
// variance and the rank-one "what if we sampled h" variance are O(N) or O(N^2)
// per query. Posteriors are immutable and safe to share across threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "owal/error.hpp"
#include "owal/log.hpp"
#include "owal/rng.hpp"
#include "owal/simplex.hpp"

namespace owal {

struct KernelParams {
  double signal_variance = 1.0;  // s2
  double lengthscale = 1.0;      // l, in input units
  double noise_variance = 0.0;   // observation noise variance

  void validate() const {
    if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
      throw usage_error("kernel signal_variance must be positive and finite");
    if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
      throw usage_error("kernel lengthscale must be positive and finite");
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
      throw usage_error("kernel noise_variance must be non-negative and finite");
  }
};

/// Labeled samples. Inputs are stored one point per row.
struct Dataset {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd outputs;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index dim() const { return inputs.cols(); }

  void validate() const {
    if (inputs.rows() < 1) throw usage_error("dataset must contain at least one sample");
    if (inputs.rows() != outputs.size())
      throw usage_error("dataset inputs and outputs have different lengths");
    if (!inputs.allFinite() || !outputs.allFinite())
      throw usage_error("dataset contains non-finite values");
  }

  void append(const Eigen::VectorXd& x, double y) {
    if (size() > 0 && x.size() != dim()) throw usage_error("appended point has wrong dimension");
    inputs.conservativeResize(size() + 1, x.size());
    inputs.row(size() - 1) = x.transpose();
    outputs.conservativeResize(outputs.size() + 1);
    outputs[outputs.size() - 1] = y;
  }
};

inline double kernel_eval(const KernelParams& p, const Eigen::Ref<const Eigen::VectorXd>& a,
                          const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw usage_error("kernel_eval: points have different dimensions");
  return p.signal_variance * std::exp(-(a - b).squaredNorm() / (2.0 * p.lengthscale * p.lengthscale));
}

/// Cross-covariance between the rows of A and the rows of B (noise excluded).
inline Eigen::MatrixXd kernel_matrix(const KernelParams& p, const Eigen::Ref<const Eigen::MatrixXd>& A,
                                     const Eigen::Ref<const Eigen::MatrixXd>& B) {
  if (A.cols() != B.cols()) throw usage_error("kernel_matrix: point sets have different dimensions");
  const double inv = 1.0 / (2.0 * p.lengthscale * p.lengthscale);
  Eigen::MatrixXd K(A.rows(), B.rows());
  // exact squared distances per column, then one vectorized exp
  for (Eigen::Index j = 0; j < B.rows(); ++j) K.col(j) = (A.rowwise() - B.row(j)).rowwise().squaredNorm();
  K = p.signal_variance * (-inv * K.array()).exp();
  return K;
}

struct GprOptions {
  bool center_outputs = true;  // subtract mean(Y) before conditioning, add it back on prediction
};

class GprPosterior {
 public:
  static constexpr double kJitterStart = 1e-10;
  static constexpr double kJitterMax = 1e-4;
  static constexpr double kNegativeVarianceTolerance = 1e-10;
  static constexpr double kDegenerateCandidate = 1e-12;

  GprPosterior(KernelParams params, Dataset data, GprOptions opt = {})
      : params_(params), data_(std::move(data)), opt_(opt) {
    params_.validate();
    data_.validate();
    offset_ = opt_.center_outputs ? data_.outputs.mean() : 0.0;
    factorize();
  }

  const KernelParams& params() const { return params_; }
  const Dataset& data() const { return data_; }
  const GprOptions& options() const { return opt_; }
  Eigen::Index dim() const { return data_.dim(); }
  double mean_offset() const { return offset_; }
  /// Diagonal jitter added on top of the noise variance (0 unless factorization needed help).
  double jitter() const { return jitter_; }
  double effective_noise() const { return params_.noise_variance + jitter_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  /// Lower Cholesky factor of K(X,X) + effective_noise() I.
  Eigen::MatrixXd gram_factor() const { return llt_.matrixL(); }

  double predict_mean(const Eigen::VectorXd& x) const {
    check_dim(x);
    return offset_ + cross(x).dot(alpha_);
  }

  double predict_var(const Eigen::VectorXd& x) const {
    check_dim(x);
    Eigen::VectorXd v = llt_.matrixL().solve(cross(x));
    return clamp_variance(params_.signal_variance - v.squaredNorm());
  }

  /// Posterior covariance kbar(x, x').
  double covariance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    check_dim(a);
    check_dim(b);
    Eigen::VectorXd va = llt_.matrixL().solve(cross(a));
    Eigen::VectorXd vb = llt_.matrixL().solve(cross(b));
    return kernel_eval(params_, a, b) - va.dot(vb);
  }

  /// Posterior variance at x after hypothetically observing candidate h
  /// (with the current noise level). Throws degenerate_candidate when h
  /// carries no residual variance.
  double augmented_var(const Eigen::VectorXd& h, const Eigen::VectorXd& x) const {
    const double denom = predict_var(h) + effective_noise();
    if (denom < kDegenerateCandidate * params_.signal_variance)
      throw degenerate_candidate("augmented_var: candidate duplicates an existing noiseless sample");
    const double base = predict_var(x);
    const double kb = covariance(x, h);
    return std::clamp(base - kb * kb / denom, 0.0, base);
  }

  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& points) const {
    check_dim(points);
    return (kernel_matrix(params_, points, data_.inputs) * alpha_).array() + offset_;
  }

  Eigen::VectorXd predict_var(const Eigen::MatrixXd& points) const {
    check_dim(points);
    Eigen::MatrixXd V = whitened_cross(points);
    Eigen::VectorXd out(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i)
      out[i] = clamp_variance(params_.signal_variance - V.col(i).squaredNorm());
    return out;
  }

  /// L^{-1} k(X, Z) with one column per row of Z; kbar(z_i, z_j) = k(z_i, z_j) - col_i . col_j.
  Eigen::MatrixXd whitened_cross(const Eigen::MatrixXd& points) const {
    check_dim(points);
    Eigen::MatrixXd Kxz = kernel_matrix(params_, data_.inputs, points);
    llt_.matrixL().solveInPlace(Kxz);
    return Kxz;
  }

  /// Same hyperparameters, one more sample.
  GprPosterior with_sample(const Eigen::VectorXd& h, double y) const {
    Dataset d = data_;
    d.append(h, y);
    return GprPosterior(params_, std::move(d), opt_);
  }

  double log_marginal_likelihood() const {
    const Eigen::VectorXd yc = data_.outputs.array() - offset_;
    const double n = static_cast<double>(data_.size());
    return -0.5 * yc.dot(alpha_) - llt_.matrixLLT().diagonal().array().log().sum() -
           0.5 * n * std::log(2.0 * std::numbers::pi);
  }

  /// Roundoff negatives within tolerance become 0; anything worse is a bug.
  double clamp_variance(double v) const {
    const double tol = kNegativeVarianceTolerance * std::max(1.0, params_.signal_variance);
    if (v < -tol) {
      std::ostringstream os;
      os << "negative posterior variance " << v << " (N=" << data_.size() << ")";
      throw numerical_failure(os.str());
    }
    return std::clamp(v, 0.0, params_.signal_variance);
  }

 private:
  void check_dim(const Eigen::VectorXd& x) const {
    if (x.size() != dim()) throw usage_error("query point has wrong dimension");
  }
  void check_dim(const Eigen::MatrixXd& x) const {
    if (x.cols() != dim()) throw usage_error("query points have wrong dimension");
  }

  Eigen::VectorXd cross(const Eigen::VectorXd& x) const {
    const double inv = 1.0 / (2.0 * params_.lengthscale * params_.lengthscale);
    Eigen::VectorXd k(data_.size());
    for (Eigen::Index i = 0; i < data_.size(); ++i)
      k[i] = params_.signal_variance * std::exp(-(data_.inputs.row(i).transpose() - x).squaredNorm() * inv);
    return k;
  }

  void factorize() {
    Eigen::MatrixXd K = kernel_matrix(params_, data_.inputs, data_.inputs);
    K.diagonal().array() += params_.noise_variance;
    llt_.compute(K);
    double jitter = kJitterStart * params_.signal_variance;
    while (llt_.info() != Eigen::Success || !(llt_.matrixLLT().diagonal().array() > 0.0).all()) {
      if (jitter > kJitterMax * params_.signal_variance * (1.0 + 1e-9)) {
        std::ostringstream os;
        os << "Gram matrix not positive definite after jitter escalation (N=" << data_.size()
           << ", dim=" << data_.dim() << ", lengthscale=" << params_.lengthscale
           << ", noise=" << params_.noise_variance << ")";
        throw numerical_failure(os.str());
      }
      Eigen::MatrixXd Kj = K;
      Kj.diagonal().array() += jitter;
      llt_.compute(Kj);
      jitter_ = jitter;
      std::ostringstream os;
      os << "Gram factorization needed jitter " << jitter << " (N=" << data_.size() << ")";
      log::info(os.str());
      jitter *= 10.0;
    }
    alpha_ = llt_.solve((data_.outputs.array() - offset_).matrix());
  }

  KernelParams params_;
  Dataset data_;
  GprOptions opt_;
  double offset_ = 0.0;
  double jitter_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool fixed() const { return lo == hi; }
};

/// Box for (signal std, lengthscale, noise std). A degenerate interval pins that parameter.
struct HyperBounds {
  Interval signal_std{1e-3, 1e3};
  Interval lengthscale{1e-2, 1e2};
  Interval noise_std{0.0, 0.0};

  void validate() const {
    auto positive = [](const Interval& iv, const char* name) {
      if (!(iv.lo > 0.0) || !(iv.hi >= iv.lo) || !std::isfinite(iv.hi))
        throw usage_error(std::string("hyperparameter bounds for ") + name + " must be a finite positive interval");
    };
    positive(signal_std, "signal_std");
    positive(lengthscale, "lengthscale");
    if (noise_std.fixed()) {
      if (!(noise_std.lo >= 0.0) || !std::isfinite(noise_std.lo))
        throw usage_error("fixed noise_std must be non-negative");
    } else {
      positive(noise_std, "noise_std");
    }
  }
};

struct FitOptions {
  int starts = 8;
  int max_evaluations = 200;  // per start
  std::uint64_t seed = 0;
  std::optional<KernelParams> warm_start;  // replaces the first random start
  GprOptions gpr;
};

namespace detail {

/// Negative log marginal likelihood evaluated from a precomputed distance matrix.
class MarginalLikelihood {
 public:
  MarginalLikelihood(const Dataset& data, bool center) : n_(data.size()) {
    const double off = center ? data.outputs.mean() : 0.0;
    y_ = data.outputs.array() - off;
    d2_.resize(n_, n_);
    for (Eigen::Index j = 0; j < n_; ++j)
      for (Eigen::Index i = 0; i < n_; ++i) d2_(i, j) = (data.inputs.row(i) - data.inputs.row(j)).squaredNorm();
  }

  double operator()(const KernelParams& p) const {
    Eigen::MatrixXd K = (-d2_.array() / (2.0 * p.lengthscale * p.lengthscale)).exp() * p.signal_variance;
    K.diagonal().array() += p.noise_variance + GprPosterior::kJitterStart * p.signal_variance;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Eigen::VectorXd a = llt.solve(y_);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return 0.5 * y_.dot(a) + 0.5 * logdet + 0.5 * static_cast<double>(n_) * std::log(2.0 * std::numbers::pi);
  }

 private:
  Eigen::Index n_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd d2_;
};

}  // namespace detail

/// Maximize the log marginal likelihood over the box with seeded multi-start
/// Nelder-Mead in log space, then condition on the data.
inline GprPosterior fit(const Dataset& data, const HyperBounds& bounds, const FitOptions& opt = {}) {
  data.validate();
  bounds.validate();
  if (data.size() < 2) throw usage_error("fit requires at least two samples");

  const Interval ivs[3] = {bounds.signal_std, bounds.lengthscale, bounds.noise_std};
  int free_idx[3];
  int nfree = 0;
  for (int k = 0; k < 3; ++k)
    if (!ivs[k].fixed()) free_idx[nfree++] = k;

  auto to_params = [&](const Eigen::VectorXd& theta) {
    double v[3] = {ivs[0].lo, ivs[1].lo, ivs[2].lo};
    for (Eigen::Index i = 0; i < theta.size(); ++i) v[free_idx[i]] = std::exp(theta[i]);
    return KernelParams{v[0] * v[0], v[1], v[2] * v[2]};
  };

  KernelParams best_params = to_params(Eigen::VectorXd::Zero(0));
  if (nfree > 0) {
    detail::MarginalLikelihood nll(data, opt.gpr.center_outputs);
    Eigen::VectorXd lo(nfree), hi(nfree);
    for (int i = 0; i < nfree; ++i) {
      lo[i] = std::log(ivs[free_idx[i]].lo);
      hi[i] = std::log(ivs[free_idx[i]].hi);
    }
    auto objective = [&](const Eigen::VectorXd& theta) { return nll(to_params(theta)); };

    Rng rng(derive_seed(opt.seed, {0x6670ULL}));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    SimplexOptions so;
    so.max_evaluations = opt.max_evaluations;
    so.f_tolerance = 1e-7;
    so.x_tolerance = 1e-6;
    const Eigen::VectorXd step = 0.1 * (hi - lo);

    double best = std::numeric_limits<double>::infinity();
    for (int s = 0; s < std::max(1, opt.starts); ++s) {
      Eigen::VectorXd start(nfree);
      for (int i = 0; i < nfree; ++i) start[i] = lo[i] + u01(rng) * (hi[i] - lo[i]);
      if (s == 0 && opt.warm_start) {
        const double w[3] = {std::sqrt(opt.warm_start->signal_variance), opt.warm_start->lengthscale,
                             std::sqrt(opt.warm_start->noise_variance)};
        for (int i = 0; i < nfree; ++i)
          start[i] = std::clamp(std::log(std::max(w[free_idx[i]], 1e-300)), lo[i], hi[i]);
      }
      auto r = nelder_mead(objective, start, step, lo, hi, so);
      if (r.value < best) {
        best = r.value;
        best_params = to_params(r.x);
      }
    }
    if (!std::isfinite(best)) {
      std::ostringstream os;
      os << "fit: marginal likelihood could not be evaluated anywhere in the box (N=" << data.size()
         << ", dim=" << data.dim() << ")";
      throw numerical_failure(os.str());
    }
  }
  return GprPosterior(best_params, data, opt.gpr);
}

}  // namespace owal
