#include <cmath>
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include "owal/benchmarks.hpp"

namespace {

using namespace owal;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kPi = std::numbers::pi;

TEST(KL, FullyCorrelatedProcessHasOneFlatMode) {
  const double T = 5.0;
  const auto kl = build_kl({1.5, 1e4}, T, 201, 3);
  EXPECT_NEAR(kl.eigenvalues()[0], 1.5 * 1.5 * T, 1e-6);
  const VectorXd phi = kl.modes().col(0);
  EXPECT_LT((phi.array() - 1.0 / std::sqrt(T)).abs().maxCoeff(), 1e-6);
  EXPECT_LT(kl.eigenvalues()[1], 1e-6 * kl.eigenvalues()[0]);
}

TEST(KL, OrthonormalSortedAndSignFixed) {
  const auto kl = build_kl({1.0, 0.7}, 10.0, 301, 12);
  const MatrixXd G = kl.modes().transpose() * kl.weights().asDiagonal() * kl.modes();
  EXPECT_LT((G - MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-8);
  for (int i = 0; i + 1 < 12; ++i) EXPECT_GE(kl.eigenvalues()[i], kl.eigenvalues()[i + 1]);
  EXPECT_GE(kl.eigenvalues().minCoeff(), 0.0);
  for (int i = 0; i < 12; ++i) EXPECT_GE(kl.modes()(0, i), 0.0);
}

TEST(KL, GridRefinementOracleAtBeamParameters) {
  const auto coarse = build_kl({20.0, 0.1}, 5.0, 401, 6);
  const auto fine = build_kl({20.0, 0.1}, 5.0, 1601, 6);
  for (int i = 0; i < 6; ++i)
    EXPECT_NEAR(coarse.eigenvalues()[i], fine.eigenvalues()[i], 0.01 * fine.eigenvalues()[i]) << i;
}

TEST(KL, TraceEqualsVarianceTimesHorizon) {
  const auto kl = build_kl({2.0, 0.5}, 5.0, 401, 5);
  EXPECT_NEAR(kl.trace(), 4.0 * 5.0, 1e-9 * 20.0);
}

TEST(KL, ReconstructionWhenMostTraceIsCaptured) {
  const Correlation c{1.0, 1.0};
  const double T = 8.0;
  auto full = build_kl(c, T, 201, 40);
  int n = 1;
  double acc = 0.0;
  for (; n <= 40; ++n) {
    acc += full.eigenvalues()[n - 1];
    if (acc >= 0.95 * full.trace()) break;
  }
  const auto kl = build_kl(c, T, 201, n);
  const MatrixXd R = kl.modes() * kl.eigenvalues().asDiagonal() * kl.modes().transpose();
  MatrixXd C(201, 201);
  for (int i = 0; i < 201; ++i)
    for (int j = 0; j < 201; ++j) C(i, j) = c(kl.time_grid()[i], kl.time_grid()[j]);
  EXPECT_LT((R - C).norm() / C.norm(), 0.05);
  EXPECT_GE(kl.captured_fraction(), 0.95);
}

TEST(KL, NystromExtensionAgreesOnGrid) {
  const auto kl = build_kl({1.0, 0.5}, 4.0, 161, 4);
  const MatrixXd S = kl.scaled_modes_at(kl.time_grid());
  for (int i = 0; i < 4; ++i)
    EXPECT_LT((S.col(i) / std::sqrt(kl.eigenvalues()[i]) - kl.modes().col(i)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(kl.mode_at(1, kl.time_grid()[17]), kl.modes()(17, 1), 1e-10);
}

TEST(KL, Errors) {
  EXPECT_THROW(build_kl({1.0, 1.0}, 1.0, 10, 11), usage_error);
  EXPECT_THROW(build_kl({0.0, 1.0}, 1.0, 10, 2), usage_error);
  EXPECT_THROW(build_kl({1.0, 1.0}, -1.0, 10, 2), usage_error);
}

TEST(Whitening, ReproducesForcingCorrelation) {
  OscillatorSpec spec;
  spec.forcing = {1.3, 4.0};
  spec.n_inputs = 20;
  Oscillator osc(spec);
  Rng rng(1);
  const MatrixXd X = standard_normal(rng, 10000, spec.n_inputs);
  const MatrixXd xi = X * (osc.kl().scaled_modes_at(osc.kl().time_grid())).transpose();  // samples x grid
  const auto& t = osc.kl().time_grid();
  for (auto [i, j] : {std::pair{0, 0}, {50, 60}, {100, 100}, {100, 130}, {200, 190}}) {
    const double emp = xi.col(i).dot(xi.col(j)) / X.rows();
    EXPECT_NEAR(emp, spec.forcing(t[i], t[j]), 0.05 * 1.3 * 1.3) << i << "," << j;
  }
}

OscillatorSpec linear_spec(double omega, double length) {
  OscillatorSpec s;
  s.restoring = {RestoringForce::Kind::cubic, omega * omega, 0.0};
  s.damping = 0.4;
  s.horizon = 20.0;
  s.forcing = {1.0, length};
  s.n_inputs = 1;
  return s;
}

TEST(Oscillator, ZeroInputGivesZero) {
  OscillatorSpec s;
  s.restoring = {RestoringForce::Kind::piecewise, 1.0, 0.0, 1.0, 3.0};
  EXPECT_EQ(Oscillator(s).qoi(VectorXd::Zero(2)), 0.0);
  EXPECT_EQ(oscillator_qoi(linear_spec(1.0, 4.0), VectorXd::Zero(1)), 0.0);
}

TEST(Oscillator, LinearStepResponseOracle) {
  const double w = 1.3, delta = 0.4, T = 20.0;
  const OscillatorSpec s = linear_spec(w, 1e5);
  Oscillator osc(s);
  const double x = 0.8;
  const double F0 = osc.forcing(VectorXd::Constant(1, x))[0];
  // closed form for u'' + delta u' + w^2 u = F0 from rest
  const double a = delta / 2, wd = std::sqrt(w * w - a * a);
  auto u = [&](double t) { return F0 / (w * w) * (1 - std::exp(-a * t) * (std::cos(wd * t) + a / wd * std::sin(wd * t))); };
  const int n = 200000;
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += u((i + 0.5) * T / n) / n;
  EXPECT_NEAR(osc.qoi(VectorXd::Constant(1, x)), mean, 1e-4 * std::abs(mean));
}

TEST(Oscillator, StepHalving) {
  OscillatorSpec s;
  s.restoring = {RestoringForce::Kind::piecewise, 1.0, 0.0, 1.0, 3.0};
  OscillatorSpec h = s;
  h.dt_divisor = 80.0;
  const VectorXd x = Eigen::Vector2d(1.7, -0.9);
  const double y1 = oscillator_qoi(s, x), y2 = oscillator_qoi(h, x);
  EXPECT_LT(std::abs(y1 - y2), 1e-4 * std::abs(y1));
}

TEST(Oscillator, DeterministicAndContinuous) {
  OscillatorSpec s;
  s.restoring = {RestoringForce::Kind::piecewise, 1.0, 0.0, 1.0, 3.0};
  Oscillator osc(s);
  const VectorXd x = Eigen::Vector2d(0.3, 1.1);
  EXPECT_EQ(osc.qoi(x), osc.qoi(x));
  const VectorXd xp = x + VectorXd::Constant(2, 1e-6);
  EXPECT_LT(std::abs(osc.qoi(xp) - osc.qoi(x)), 1e-4);
}

TEST(Oscillator, DivergenceIsReportedWithInput) {
  OscillatorSpec s;
  s.restoring = {RestoringForce::Kind::cubic, 1.0, -1.0};  // escapes the potential well
  s.damping = 0.1;
  try {
    oscillator_qoi(s, Eigen::Vector2d(4.0, 4.0));
    FAIL() << "expected divergence";
  } catch (const divergence_error& e) {
    EXPECT_NE(std::string(e.what()).find("x = ["), std::string::npos);
  }
}

TEST(Oscillator, RestoringForceShapes) {
  RestoringForce f{RestoringForce::Kind::piecewise, 2.0, 0.0, 1.0, 3.0};
  EXPECT_DOUBLE_EQ(f(0.5), 1.0);
  EXPECT_DOUBLE_EQ(f(2.0), 2.0);
  EXPECT_DOUBLE_EQ(f(-2.0), -2.0);
  EXPECT_DOUBLE_EQ(f(4.0), 2.0 * (4.0 - 2.0));
  EXPECT_DOUBLE_EQ(f(-4.0), -f(4.0));
  RestoringForce c{RestoringForce::Kind::cubic, 1.0, 0.5};
  EXPECT_DOUBLE_EQ(c(2.0), 2.0 + 4.0);
  EXPECT_THROW((RestoringForce{RestoringForce::Kind::piecewise, 1.0, 0.0, 2.0, 1.0}.validate()), usage_error);
}

BeamSpec desk_beam() {
  BeamSpec b;
  b.length = kPi / std::sqrt(5.0);
  return b;
}

TEST(Beam, ModalConstantsAreConsistent) {
  BeamSpec b;
  b.length = 2.0;
  b.omega0 = 1.5;
  b.modes_J = 3;
  b.kl_per_load = 2;
  for (int j = 1; j <= 3; ++j) {
    EXPECT_DOUBLE_EQ(b.wavenumber4(j), std::pow(j * kPi / 2.0, 4));
    EXPECT_DOUBLE_EQ(b.omega_sq(j), 2.25 * b.wavenumber4(j));
  }
  EXPECT_EQ(b.input_dim(), 2 * 4);
  BeamSpec defaults;
  EXPECT_EQ(defaults.input_dim(), 2);
}

TEST(Beam, ZeroInputGivesZero) { EXPECT_EQ(beam_qoi(desk_beam(), VectorXd::Zero(2)), 0.0); }

TEST(Beam, SingleModeStepResponseOracle) {
  BeamSpec b = desk_beam();
  b.load = {1.0, 1e5};
  Beam beam(b);
  const double r = 0.7;
  const VectorXd x = Eigen::Vector2d(0.0, r);
  const double R0 = r * beam.kl().scaled_modes_at(VectorXd::Zero(1))(0, 0);
  const double w = std::sqrt(b.omega_sq(1)), a = b.zeta * b.omega0, wd = std::sqrt(w * w - a * a);
  auto f = [&](double t) { return R0 / (w * w) * (1 - std::exp(-a * t) * (std::cos(wd * t) + a / wd * std::sin(wd * t))); };
  double peak = 0.0;
  for (long k = 1; k <= beam.steps(); ++k) peak = std::max(peak, std::abs(std::sin(kPi / 4) * f(k * beam.dt())));
  EXPECT_NEAR(beam.qoi(x), peak, 1e-3 * peak);
}

TEST(Beam, HeavyRightTail) {
  Beam beam(desk_beam());
  Rng rng(5);
  const MatrixXd X = standard_normal(rng, 10000, 2);
  VectorXd y(X.rows());
  for (int i = 0; i < X.rows(); ++i) y[i] = beam.qoi(X.row(i).transpose());
  const double mu = y.mean();
  const double var = (y.array() - mu).square().mean();
  const double skew = (y.array() - mu).cube().mean() / std::pow(var, 1.5);
  EXPECT_GT(skew, 0.5);
}

TEST(Beam, MultiModeStepHalvingAndDeterminism) {
  BeamSpec b = desk_beam();
  b.modes_J = 2;
  b.kl_per_load = 2;
  BeamSpec h = b;
  h.dt_divisor = 80;
  Rng rng(6);
  const VectorXd x = standard_normal(rng, b.input_dim(), 1);
  const double y1 = beam_qoi(b, x), y2 = beam_qoi(h, x);
  EXPECT_LT(std::abs(y1 - y2), 1e-3 * std::abs(y1));
  EXPECT_EQ(y1, beam_qoi(b, x));
  EXPECT_THROW(beam_qoi(b, VectorXd::Zero(2)), usage_error);
}

TEST(Problem, InputsAreTruncatedToTheBox) {
  auto p = make_oscillator_problem("osc", OscillatorSpec{}, 1.0);
  Rng rng(3);
  const Eigen::MatrixXd x = p.sample_inputs(rng, 20000);
  EXPECT_LE(x.cwiseAbs().maxCoeff(), 1.0);
  // truncated standard normal on [-1, 1]: variance 1 - 2 phi(1) / (2 Phi(1) - 1)
  const double phi1 = std::exp(-0.5) / std::sqrt(2.0 * std::numbers::pi);
  const double var = 1.0 - 2.0 * phi1 / std::erf(1.0 / std::numbers::sqrt2);
  EXPECT_NEAR(x.col(0).squaredNorm() / x.rows(), var, 0.01);
  // prefix stability
  Rng a(4), b(4);
  EXPECT_EQ(p.sample_inputs(a, 5), p.sample_inputs(b, 50).topRows(5));
}

TEST(Problem, GaussianLogPdfIsNormalized) {
  auto p = make_oscillator_problem("osc", [] {
    OscillatorSpec s;
    s.restoring = {RestoringForce::Kind::piecewise, 1.0, 0.0, 1.0, 3.0};
    return s;
  }(), 4.0);
  // product of standard normals restricted to the box; integrate numerically on a 2D grid
  const int n = 400;
  const double L = 8.0, h = 2 * L / n;
  double mass = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      mass += std::exp(p.input_logpdf(Eigen::Vector2d(-L + (i + 0.5) * h, -L + (j + 0.5) * h))) * h * h;
  EXPECT_NEAR(mass, 1.0, 1e-6);  // midpoint rule across the truncation edges is O(h^2 phi'(4))
  EXPECT_EQ(p.box.lo, VectorXd::Constant(2, -4.0));
  Rng rng(1);
  EXPECT_EQ(p.sample_inputs(rng, 10).cols(), 2);
  EXPECT_EQ(p.input_logpdf(Eigen::Vector2d(4.5, 0.0)), -std::numeric_limits<double>::infinity());
  EXPECT_NEAR(p.box_mass(), std::pow(std::erf(4.0 / std::numbers::sqrt2), 2), 1e-15);
  EXPECT_EQ(p.truth(Eigen::Vector2d(0.5, 0.5)), p.truth(Eigen::Vector2d(0.5, 0.5)));
}

}  // namespace
