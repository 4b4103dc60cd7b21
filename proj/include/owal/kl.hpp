#pragma once

// Karhunen-Loeve expansion of a stationary Gaussian-correlated process on [0, T].
// The covariance operator is discretized with trapezoid weights W on a uniform
// grid; W^{1/2} C W^{1/2} is symmetric, its eigenvectors map back to modes
// orthonormal in the W inner product. Modes are extended off the grid with the
// Nystrom formula, so forcing can be evaluated at RK4 half steps.

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "owal/error.hpp"

namespace owal {

/// sigma^2 exp(-(t - t')^2 / (2 length^2))
struct Correlation {
  double sigma = 1.0;
  double length = 1.0;

  double operator()(double t, double s) const {
    const double d = t - s;
    return sigma * sigma * std::exp(-d * d / (2.0 * length * length));
  }
  void validate() const {
    if (!(sigma > 0.0) || !(length > 0.0)) throw usage_error("correlation sigma and length must be positive");
  }
};

class KLExpansion {
 public:
  KLExpansion() = default;
  KLExpansion(Correlation corr, Eigen::VectorXd grid, Eigen::VectorXd weights, Eigen::VectorXd eigenvalues,
              Eigen::MatrixXd modes, double trace)
      : corr_(corr), grid_(std::move(grid)), weights_(std::move(weights)), eigenvalues_(std::move(eigenvalues)),
        modes_(std::move(modes)), trace_(trace) {}

  const Correlation& correlation() const { return corr_; }
  const Eigen::VectorXd& time_grid() const { return grid_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  /// Leading eigenvalues, descending.
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  /// One column per mode, sampled on the time grid.
  const Eigen::MatrixXd& modes() const { return modes_; }
  Eigen::Index size() const { return eigenvalues_.size(); }
  /// Sum of all eigenvalues of the discretized operator.
  double trace() const { return trace_; }
  double captured_fraction() const { return eigenvalues_.sum() / trace_; }

  /// sqrt(lambda_i) Phi_i(t) for each requested time (rows) and mode (columns).
  Eigen::MatrixXd scaled_modes_at(const Eigen::VectorXd& times) const {
    Eigen::MatrixXd C(times.size(), grid_.size());
    for (Eigen::Index j = 0; j < grid_.size(); ++j)
      for (Eigen::Index i = 0; i < times.size(); ++i) C(i, j) = corr_(times[i], grid_[j]) * weights_[j];
    Eigen::MatrixXd out = C * modes_;  // = lambda_i Phi_i(t)
    for (Eigen::Index i = 0; i < size(); ++i) out.col(i) /= std::sqrt(eigenvalues_[i]);
    return out;
  }

  double mode_at(Eigen::Index i, double t) const {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < grid_.size(); ++j) acc += weights_[j] * corr_(t, grid_[j]) * modes_(j, i);
    return acc / eigenvalues_[i];
  }

 private:
  Correlation corr_;
  Eigen::VectorXd grid_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd modes_;
  double trace_ = 0.0;
};

inline KLExpansion build_kl(const Correlation& corr, double horizon, int grid_size, int n_modes) {
  corr.validate();
  if (!(horizon > 0.0)) throw usage_error("KL horizon must be positive");
  if (grid_size < 2) throw usage_error("KL grid needs at least two points");
  if (n_modes < 1 || n_modes > grid_size) throw usage_error("KL mode count must lie in [1, grid size]");

  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(grid_size, 0.0, horizon);
  const double dt = horizon / (grid_size - 1);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(grid_size, dt);
  w[0] *= 0.5;
  w[grid_size - 1] *= 0.5;
  const Eigen::VectorXd sw = w.cwiseSqrt();

  Eigen::MatrixXd A(grid_size, grid_size);
  for (int j = 0; j < grid_size; ++j)
    for (int i = 0; i < grid_size; ++i) A(i, j) = sw[i] * corr(t[i], t[j]) * sw[j];

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw numerical_failure("KL eigen-decomposition failed");
  // Eigen returns ascending order.
  const Eigen::VectorXd all = es.eigenvalues().reverse();
  const double top = all[0];
  if (all.minCoeff() < -1e-10 * std::max(1.0, top)) {
    std::ostringstream os;
    os << "KL covariance has a negative eigenvalue " << all.minCoeff();
    throw numerical_failure(os.str());
  }
  if (!(all[n_modes - 1] > 0.0)) throw numerical_failure("KL requested modes with non-positive eigenvalues");

  Eigen::MatrixXd modes(grid_size, n_modes);
  for (int i = 0; i < n_modes; ++i) {
    Eigen::VectorXd v = es.eigenvectors().col(grid_size - 1 - i).cwiseQuotient(sw);
    // first entry of meaningful size decides the sign
    Eigen::Index k = 0;
    const double scale = v.cwiseAbs().maxCoeff();
    while (k + 1 < v.size() && std::abs(v[k]) < 1e-8 * scale) ++k;
    if (v[k] < 0.0) v = -v;
    modes.col(i) = v;
  }
  return KLExpansion(corr, t, w, all.head(n_modes), modes, all.cwiseMax(0.0).sum());
}

}  // namespace owal
