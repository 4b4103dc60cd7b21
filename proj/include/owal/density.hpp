#pragma once

// Gaussian kernel density estimates of a scalar output on a uniform grid, and
// the log-pdf distance  D(p1, p2) = int_{S_y} |log p1(s) - log p2(s)| ds.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <vector>

#include "owal/error.hpp"

namespace owal {

/// Uniform grid over the output domain S_y = [lo, hi].
struct OutputGrid {
  double lo = 0.0;
  double hi = 1.0;
  int n_points = 200;

  static constexpr int kMinPoints = 64;

  void validate() const {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
      throw usage_error("output grid requires finite lo < hi");
    if (n_points < kMinPoints) throw usage_error("output grid needs at least 64 points");
  }
  double spacing() const { return (hi - lo) / (n_points - 1); }
  double at(int i) const { return lo + spacing() * i; }
  bool contains(double s) const { return s >= lo && s <= hi; }

  /// [min - 0.1 range, max + 0.1 range] of the samples.
  static OutputGrid from_samples(std::span<const double> samples, int n_points = 200) {
    if (samples.empty()) throw insufficient_samples("cannot build a grid from no samples");
    auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    const double range = *mx - *mn;
    if (!(range > 0.0)) throw degenerate_distribution("samples have zero range");
    return {*mn - 0.1 * range, *mx + 0.1 * range, n_points};
  }

  bool operator==(const OutputGrid&) const = default;
};

struct DensityEstimate {
  OutputGrid grid;
  std::vector<double> pdf;    // floored
  std::vector<double> d_pdf;  // analytic derivative of the KDE
  double bandwidth = 0.0;
  double floor = 1e-16;

  /// Floored pdf at an arbitrary output value: log-linear interpolation inside
  /// the grid, the floor outside it.
  double pdf_at(double s) const {
    if (!grid.contains(s)) return floor;
    const double u = (s - grid.lo) / grid.spacing();
    const int i = std::min(static_cast<int>(u), grid.n_points - 2);
    const double t = u - i;
    return std::max(floor, std::exp((1.0 - t) * std::log(pdf[i]) + t * std::log(pdf[i + 1])));
  }

  double d_pdf_at(double s) const {
    if (!grid.contains(s)) return 0.0;
    const double u = (s - grid.lo) / grid.spacing();
    const int i = std::min(static_cast<int>(u), grid.n_points - 2);
    const double t = u - i;
    return (1.0 - t) * d_pdf[i] + t * d_pdf[i + 1];
  }

  /// Trapezoid integral of the floored pdf.
  double mass() const {
    double m = 0.0;
    for (int i = 0; i + 1 < grid.n_points; ++i) m += 0.5 * (pdf[i] + pdf[i + 1]);
    return m * grid.spacing();
  }
};

struct KdeOptions {
  std::optional<double> bandwidth;  // Silverman when empty
  double floor = 1e-16;
  int min_samples = 100;
};

namespace detail {
inline double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (pos - static_cast<double>(i)) * (v[i + 1] - v[i]);
}
}  // namespace detail

/// 0.9 min(std, IQR/1.34) m^{-1/5}; falls back to std when the IQR collapses.
inline double silverman_bandwidth(std::span<const double> samples) {
  const auto m = samples.size();
  if (m < 2) throw insufficient_samples("bandwidth needs at least two samples");
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / static_cast<double>(m - 1));
  if (!(sd > 0.0)) throw degenerate_distribution("samples have zero variance");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(m), -0.2);
}

/// Gaussian KDE on the grid (auto grid: from_samples with 200 points). The
/// derivative is the sum of analytic kernel derivatives. Each kernel is summed
/// out to the distance where it can no longer exceed a thousandth of the floor.
inline DensityEstimate estimate_density(std::span<const double> samples, std::optional<OutputGrid> grid = {},
                                        const KdeOptions& opt = {}) {
  const auto m = samples.size();
  if (m < static_cast<std::size_t>(opt.min_samples)) {
    std::ostringstream os;
    os << "density estimate needs at least " << opt.min_samples << " samples, got " << m;
    throw insufficient_samples(os.str());
  }
  for (double s : samples)
    if (!std::isfinite(s)) throw usage_error("density samples must be finite");
  if (!(opt.floor > 0.0)) throw usage_error("density floor must be positive");

  DensityEstimate est;
  est.floor = opt.floor;
  est.grid = grid ? *grid : OutputGrid::from_samples(samples);
  est.grid.validate();
  est.bandwidth = opt.bandwidth ? *opt.bandwidth : silverman_bandwidth(samples);
  if (!(est.bandwidth > 0.0)) throw usage_error("bandwidth must be positive");

  const double h = est.bandwidth;
  const double norm = 1.0 / (static_cast<double>(m) * h * std::sqrt(2.0 * std::numbers::pi));
  const double ratio = std::max(1e3 * norm / opt.floor, 10.0);
  const double cutoff = h * std::sqrt(2.0 * std::log(ratio));

  const int G = est.grid.n_points;
  const double lo = est.grid.lo, dx = est.grid.spacing();
  const double delta = dx / h, step_decay = std::exp(-delta * delta);
  std::vector<double> p(G, 0.0), dp(G, 0.0);
  // Each sample touches the grid points within the cutoff. Along the grid the
  // kernel obeys k_{g+1} = k_g r_g with r_{g+1} = r_g exp(-delta^2), so only
  // two exponentials are needed per sample.
  for (double x : samples) {
    const int g0 = std::max(0, static_cast<int>(std::ceil((x - cutoff - lo) / dx)));
    const int g1 = std::min(G - 1, static_cast<int>(std::floor((x + cutoff - lo) / dx)));
    if (g0 > g1) continue;
    double z = (lo + dx * g0 - x) / h;
    double k = std::exp(-0.5 * z * z);
    double r = std::exp(-z * delta - 0.5 * delta * delta);
    for (int g = g0; g <= g1; ++g) {
      p[g] += k;
      dp[g] -= z * k;
      k *= r;
      r *= step_decay;
      z += delta;
    }
  }
  est.pdf.resize(G);
  est.d_pdf.resize(G);
  for (int g = 0; g < G; ++g) {
    est.pdf[g] = std::max(p[g] * norm, opt.floor);
    est.d_pdf[g] = dp[g] * norm / h;
  }
  return est;
}

struct PointDensity {
  std::vector<double> pdf, d_pdf;  // floored pdf and its derivative at each query point
};

/// Gaussian KDE evaluated at arbitrary points, with the same kernel cutoff as
/// estimate_density. Used where query points sit between grid nodes that are
/// coarser than the bandwidth. Kernel sums are exact while the number of
/// (point, sample) pairs inside the cutoff stays moderate; beyond that the KDE
/// is tabulated at spacing bandwidth/32 and Hermite-interpolated from the
/// analytic pdf and derivative (relative error below 1e-6).
inline PointDensity density_at(std::span<const double> samples, std::span<const double> points, double bandwidth,
                               double floor) {
  if (samples.empty()) throw insufficient_samples("density_at needs samples");
  if (!(bandwidth > 0.0) || !(floor > 0.0)) throw usage_error("density_at: bandwidth and floor must be positive");
  constexpr double kExactPairs = 2e7;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = bandwidth;
  const double norm = 1.0 / (static_cast<double>(sorted.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  const double cutoff = h * std::sqrt(2.0 * std::log(std::max(1e3 * norm / floor, 10.0)));
  PointDensity out;
  out.pdf.resize(points.size());
  out.d_pdf.resize(points.size());
  if (points.empty()) return out;

  double pairs = 0.0;
  for (double s : points)
    pairs += static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), s + cutoff) -
                                 std::lower_bound(sorted.begin(), sorted.end(), s - cutoff));
  const auto [pmin, pmax] = std::minmax_element(points.begin(), points.end());
  const double step = h / 32.0;
  const double nodes = std::ceil((*pmax - *pmin) / step) + 1.0;

  if (pairs <= kExactPairs || nodes > 1e6) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double s = points[i];
      double p = 0.0, dp = 0.0;
      for (auto it = std::lower_bound(sorted.begin(), sorted.end(), s - cutoff);
           it != sorted.end() && *it <= s + cutoff; ++it) {
        const double z = (s - *it) / h;
        const double k = std::exp(-0.5 * z * z);
        p += k;
        dp -= z * k;
      }
      out.pdf[i] = std::max(p * norm, floor);
      out.d_pdf[i] = dp * norm / h;
    }
    return out;
  }

  const int n = std::max(static_cast<int>(nodes), OutputGrid::kMinPoints);
  const OutputGrid aux{*pmin, *pmin + step * (n - 1), n};
  KdeOptions opt{bandwidth, floor, 1};
  const DensityEstimate tab = estimate_density(sorted, aux, opt);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double u = (points[i] - aux.lo) / step;
    const int g = std::clamp(static_cast<int>(u), 0, n - 2);
    const double t = u - g, t2 = t * t, t3 = t2 * t;
    const double p0 = tab.pdf[g], p1 = tab.pdf[g + 1], d0 = tab.d_pdf[g] * step, d1 = tab.d_pdf[g + 1] * step;
    const double p = (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * d0 + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * d1;
    const double dp = ((6 * t2 - 6 * t) * p0 + (3 * t2 - 4 * t + 1) * d0 + (-6 * t2 + 6 * t) * p1 + (3 * t2 - 2 * t) * d1);
    out.pdf[i] = std::max(p, floor);
    out.d_pdf[i] = dp / step;
  }
  return out;
}

/// Trapezoid approximation of int |log p1 - log p2| ds over the shared grid.
inline double log_pdf_distance(const DensityEstimate& p1, const DensityEstimate& p2) {
  if (!(p1.grid == p2.grid)) throw usage_error("log_pdf_distance: densities live on different grids");
  const int G = p1.grid.n_points;
  auto term = [&](int i) {
    return std::abs(std::log(std::max(p1.pdf[i], p1.floor)) - std::log(std::max(p2.pdf[i], p2.floor)));
  };
  double acc = 0.0;
  for (int i = 0; i + 1 < G; ++i) acc += 0.5 * (term(i) + term(i + 1));
  return acc * p1.grid.spacing();
}

/// Empirical P[y > s_star].
inline double exceedance_prob(std::span<const double> samples, double s_star, std::size_t min_samples = 100) {
  if (samples.size() < min_samples) throw insufficient_samples("exceedance_prob needs at least 100 samples");
  std::size_t count = 0;
  for (double s : samples)
    if (s > s_star) ++count;
  return static_cast<double>(count) / static_cast<double>(samples.size());
}

/// Columnar text: s, pdf, d_pdf (tab separated, with a commented header).
inline void write_density(std::ostream& os, const DensityEstimate& d) {
  os << "# bandwidth=" << d.bandwidth << " floor=" << d.floor << " lo=" << d.grid.lo << " hi=" << d.grid.hi
     << " n_points=" << d.grid.n_points << "\n";
  os << "s\tpdf\td_pdf\n";
  os.precision(17);
  for (int i = 0; i < d.grid.n_points; ++i) os << d.grid.at(i) << '\t' << d.pdf[i] << '\t' << d.d_pdf[i] << '\n';
}

}  // namespace owal
