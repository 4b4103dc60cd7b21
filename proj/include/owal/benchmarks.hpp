#pragma once

// Truth models x -> y driven by Karhunen-Loeve coefficients of stochastic
// forcing. Inputs are whitened: x ~ N(0, I) and sqrt(lambda_i) is folded into
// the forcing reconstruction.
//
//   oscillator:  u'' + delta u' + F(u) = xi(t),  y = (1/T) int_0^T u dt
//   beam:        f_j'' + 2 zeta w0 f_j' + w_j^2 (1 - P(t)/c_j) f_j = R_j(t)
//                y = max_t |sum_j sin(j pi / 4) f_j(t)|

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "owal/acquisition.hpp"
#include "owal/error.hpp"
#include "owal/kl.hpp"
#include "owal/ode.hpp"
#include "owal/rng.hpp"

namespace owal {

inline constexpr double kDivergenceThreshold = 1e6;

struct RestoringForce {
  enum class Kind { cubic, piecewise };
  Kind kind = Kind::cubic;
  double alpha = 1.0;  // linear stiffness
  double beta = 0.0;   // cubic coefficient
  double u1 = 1.0;     // piecewise: end of the linear branch
  double u2 = 2.0;     // piecewise: end of the plateau

  /// cubic:     alpha u + beta u^3
  /// piecewise: alpha u on |u| <= u1, alpha u1 sign(u) on the plateau up to u2,
  ///            alpha (u - (u2 - u1) sign(u)) beyond.
  double operator()(double u) const {
    if (kind == Kind::cubic) return alpha * u + beta * u * u * u;
    const double a = std::abs(u), s = u < 0.0 ? -1.0 : 1.0;
    if (a <= u1) return alpha * u;
    if (a <= u2) return alpha * u1 * s;
    return alpha * (u - (u2 - u1) * s);
  }

  void validate() const {
    if (!(alpha > 0.0)) throw usage_error("restoring force alpha must be positive");
    if (kind == Kind::piecewise && !(u1 > 0.0 && u2 >= u1))
      throw usage_error("piecewise restoring force requires 0 < u1 <= u2");
  }
};

struct OscillatorSpec {
  double damping = 1.5;
  RestoringForce restoring;
  double horizon = 25.0;
  Correlation forcing{1.0, 4.0};
  int n_inputs = 2;
  int kl_grid = 201;
  double dt_divisor = 40.0;

  void validate() const {
    if (!(horizon > 0.0)) throw usage_error("oscillator horizon must be positive");
    if (!(damping >= 0.0)) throw usage_error("oscillator damping must be non-negative");
    if (n_inputs < 1) throw usage_error("oscillator needs at least one input");
    if (!(dt_divisor > 0.0)) throw usage_error("dt_divisor must be positive");
    restoring.validate();
    forcing.validate();
  }
};

namespace detail {
inline long step_count(double horizon, double dt_target) {
  return std::max(1L, static_cast<long>(std::ceil(horizon / dt_target - 1e-9)));
}
inline Eigen::VectorXd half_step_times(double horizon, long steps) {
  return Eigen::VectorXd::LinSpaced(2 * steps + 1, 0.0, horizon);
}
[[noreturn]] inline void diverged(const char* model, const Eigen::VectorXd& x) {
  std::ostringstream os;
  os << model << " trajectory diverged for x = [" << x.transpose() << "]";
  throw divergence_error(os.str());
}
}  // namespace detail

/// Precomputes the KL basis at every RK4 stage time; qoi() is then a pure
/// function of x and safe to call concurrently.
class Oscillator {
 public:
  explicit Oscillator(OscillatorSpec spec) : spec_(spec) {
    spec_.validate();
    kl_ = build_kl(spec_.forcing, spec_.horizon, spec_.kl_grid, spec_.n_inputs);
    const double omega_max = std::sqrt(spec_.restoring.alpha);
    dt_target_ = std::min(spec_.forcing.length, 2.0 * std::numbers::pi / omega_max) / spec_.dt_divisor;
    steps_ = detail::step_count(spec_.horizon, dt_target_);
    dt_ = spec_.horizon / static_cast<double>(steps_);
    basis_ = kl_.scaled_modes_at(detail::half_step_times(spec_.horizon, steps_));
  }

  const OscillatorSpec& spec() const { return spec_; }
  const KLExpansion& kl() const { return kl_; }
  double dt() const { return dt_; }
  long steps() const { return steps_; }
  int input_dim() const { return spec_.n_inputs; }

  /// xi(t) at half-step indices.
  Eigen::VectorXd forcing(const Eigen::VectorXd& x) const { return basis_ * x; }

  double qoi(const Eigen::VectorXd& x) const {
    if (x.size() != spec_.n_inputs) throw usage_error("oscillator input has wrong dimension");
    const Eigen::VectorXd xi = forcing(x);
    const auto& F = spec_.restoring;
    const double delta = spec_.damping;
    auto rhs = [&](long half, const Eigen::Vector2d& s) {
      return Eigen::Vector2d(s[1], xi[half] - delta * s[1] - F(s[0]));
    };
    Eigen::Vector2d state = Eigen::Vector2d::Zero();
    double integral = 0.0, prev = 0.0;
    for (long k = 0; k < steps_; ++k) {
      state = rk4_step(rhs, k, state, dt_);
      if (!(std::abs(state[0]) <= kDivergenceThreshold)) detail::diverged("oscillator", x);
      integral += 0.5 * (prev + state[0]) * dt_;
      prev = state[0];
    }
    return integral / spec_.horizon;
  }

 private:
  OscillatorSpec spec_;
  KLExpansion kl_;
  double dt_target_ = 0.0;
  double dt_ = 0.0;
  long steps_ = 0;
  Eigen::MatrixXd basis_;
};

struct BeamSpec {
  double zeta = 0.05;
  double omega0 = 1.0;
  double length = std::numbers::pi;
  int modes_J = 1;
  int kl_per_load = 1;
  double horizon = 5.0;
  Correlation load{20.0, 0.1};
  int kl_grid = 401;
  double dt_divisor = 40.0;

  static constexpr int kMaxModes = 8;

  /// One axial load P(t) shared by all modes plus one transverse load per mode.
  int input_dim() const { return kl_per_load * (modes_J + 1); }
  double wavenumber4(int j) const { return std::pow(j * std::numbers::pi / length, 4); }  // c_j
  double omega_sq(int j) const { return omega0 * omega0 * wavenumber4(j); }

  void validate() const {
    if (modes_J < 1 || modes_J > kMaxModes) throw usage_error("beam modes_J must lie in [1, 8]");
    if (kl_per_load < 1) throw usage_error("beam kl_per_load must be at least 1");
    if (!(zeta >= 0.0) || !(omega0 > 0.0) || !(length > 0.0) || !(horizon > 0.0))
      throw usage_error("beam requires zeta >= 0 and positive omega0, length, horizon");
    if (!(dt_divisor > 0.0)) throw usage_error("dt_divisor must be positive");
    load.validate();
  }
};

class Beam {
 public:
  explicit Beam(BeamSpec spec) : spec_(spec) {
    spec_.validate();
    kl_ = build_kl(spec_.load, spec_.horizon, spec_.kl_grid, spec_.kl_per_load);
    const double omega_max = std::sqrt(spec_.omega_sq(spec_.modes_J));
    dt_target_ = std::min(spec_.load.length, 2.0 * std::numbers::pi / omega_max) / spec_.dt_divisor;
    steps_ = detail::step_count(spec_.horizon, dt_target_);
    dt_ = spec_.horizon / static_cast<double>(steps_);
    basis_ = kl_.scaled_modes_at(detail::half_step_times(spec_.horizon, steps_));
  }

  const BeamSpec& spec() const { return spec_; }
  const KLExpansion& kl() const { return kl_; }
  double dt() const { return dt_; }
  long steps() const { return steps_; }
  int input_dim() const { return spec_.input_dim(); }

  double qoi(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim()) throw usage_error("beam input has wrong dimension");
    const int J = spec_.modes_J, nk = spec_.kl_per_load;
    const Eigen::VectorXd P = basis_ * x.head(nk);
    Eigen::MatrixXd R(basis_.rows(), J);
    for (int j = 0; j < J; ++j) R.col(j) = basis_ * x.segment(nk * (j + 1), nk);

    using State = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 2 * BeamSpec::kMaxModes, 1>;
    double wsq[BeamSpec::kMaxModes], cj[BeamSpec::kMaxModes], probe[BeamSpec::kMaxModes];
    for (int j = 0; j < J; ++j) {
      wsq[j] = spec_.omega_sq(j + 1);
      cj[j] = spec_.wavenumber4(j + 1);
      probe[j] = std::sin((j + 1) * std::numbers::pi / 4.0);
    }
    const double damp = 2.0 * spec_.zeta * spec_.omega0;
    // state = (f_1..f_J, f_1'..f_J')
    auto rhs = [&](long half, const State& s) {
      State d(2 * J);
      for (int j = 0; j < J; ++j) {
        d[j] = s[J + j];
        d[J + j] = R(half, j) - damp * s[J + j] - wsq[j] * (1.0 - P[half] / cj[j]) * s[j];
      }
      return d;
    };
    State state = State::Zero(2 * J);
    double peak = 0.0;
    for (long k = 0; k < steps_; ++k) {
      state = rk4_step(rhs, k, state, dt_);
      double w = 0.0;
      for (int j = 0; j < J; ++j) {
        if (!(std::abs(state[j]) <= kDivergenceThreshold)) detail::diverged("beam", x);
        w += probe[j] * state[j];
      }
      peak = std::max(peak, std::abs(w));
    }
    return peak;
  }

 private:
  BeamSpec spec_;
  KLExpansion kl_;
  double dt_target_ = 0.0;
  double dt_ = 0.0;
  long steps_ = 0;
  Eigen::MatrixXd basis_;
};

inline double oscillator_qoi(const OscillatorSpec& spec, const Eigen::VectorXd& x) { return Oscillator(spec).qoi(x); }
inline double beam_qoi(const BeamSpec& spec, const Eigen::VectorXd& x) { return Beam(spec).qoi(x); }

/// Input distribution plus a deterministic truth map and the search box for
/// candidate optimization. p_x is the standard normal in whitened coordinates
/// restricted to the box (unrestricted when the box is empty), so every input
/// the reference pdf is built from is one the search can reach.
struct BenchmarkProblem {
  std::string name;
  int input_dim = 0;
  std::function<double(const Eigen::VectorXd&)> truth;
  Box box;

  /// Rejection sampling, row by row: the first k rows do not depend on m.
  Eigen::MatrixXd sample_inputs(Rng& rng, Eigen::Index m) const {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd out(m, input_dim);
    Eigen::VectorXd x(input_dim);
    for (Eigen::Index i = 0; i < m; ++i) {
      do {
        for (int j = 0; j < input_dim; ++j) x[j] = nd(rng);
      } while (bounded() && !box.contains(x));
      out.row(i) = x.transpose();
    }
    return out;
  }

  bool bounded() const { return box.lo.size() != 0; }

  /// Standard normal mass inside the box.
  double box_mass() const {
    if (!bounded()) return 1.0;
    double mass = 1.0;
    for (Eigen::Index j = 0; j < box.lo.size(); ++j)
      mass *= 0.5 * (std::erfc(-box.hi[j] / std::numbers::sqrt2) - std::erfc(-box.lo[j] / std::numbers::sqrt2));
    return mass;
  }

  double input_logpdf(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim) throw usage_error("input_logpdf: wrong dimension");
    if (bounded() && !box.contains(x)) return -std::numeric_limits<double>::infinity();
    return -0.5 * x.squaredNorm() - 0.5 * input_dim * std::log(2.0 * std::numbers::pi) - std::log(box_mass());
  }

  Eigen::VectorXd batch_logpdf(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] = input_logpdf(Eigen::VectorXd(X.row(i).transpose()));
    return out;
  }

  Eigen::VectorXd truth_batch(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] = truth(X.row(i).transpose());
    return out;
  }
};

inline BenchmarkProblem make_oscillator_problem(std::string name, const OscillatorSpec& spec, double box_half_width) {
  auto model = std::make_shared<const Oscillator>(spec);
  return {std::move(name), model->input_dim(), [model](const Eigen::VectorXd& x) { return model->qoi(x); },
          Box::cube(model->input_dim(), box_half_width)};
}

inline BenchmarkProblem make_beam_problem(std::string name, const BeamSpec& spec, double box_half_width) {
  auto model = std::make_shared<const Beam>(spec);
  return {std::move(name), model->input_dim(), [model](const Eigen::VectorXd& x) { return model->qoi(x); },
          Box::cube(model->input_dim(), box_half_width)};
}

}  // namespace owal
