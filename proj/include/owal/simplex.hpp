#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace owal {

struct SimplexOptions {
  int max_evaluations = 200;
  double f_tolerance = 1e-10;   // stop when the simplex spread in f falls below this
  double x_tolerance = 1e-8;    // ... or its diameter in x does
};

struct SimplexResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
};

/// Nelder-Mead minimizer restricted to a box. Trial points are projected onto
/// the box before evaluation, so the objective is never called outside it.
/// Non-finite objective values are treated as +inf.
inline SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& start, const Eigen::VectorXd& step,
                                 const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                 const SimplexOptions& opt = {}) {
  const auto n = start.size();
  SimplexResult res;
  auto project = [&](Eigen::VectorXd x) {
    return x.cwiseMax(lower).cwiseMin(upper).eval();
  };
  // Once the budget is spent, remaining trial points count as +inf and the loop exits.
  auto eval = [&](const Eigen::VectorXd& x) {
    if (res.evaluations >= opt.max_evaluations) return std::numeric_limits<double>::infinity();
    ++res.evaluations;
    double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<Eigen::VectorXd> pts(n + 1);
  std::vector<double> vals(n + 1);
  pts[0] = project(start);
  vals[0] = eval(pts[0]);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd p = pts[0];
    p[i] += step[i];
    if (p[i] > upper[i]) p[i] = pts[0][i] - step[i];
    pts[i + 1] = project(p);
    vals[i + 1] = eval(pts[i + 1]);
  }

  std::vector<std::size_t> order(n + 1);
  while (res.evaluations < opt.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const auto best = order.front(), worst = order.back(), second = order[n - 1];

    double diam = 0.0;
    for (const auto& p : pts) diam = std::max(diam, (p - pts[best]).lpNorm<Eigen::Infinity>());
    const bool flat = std::isfinite(vals[worst]) && vals[worst] - vals[best] <= opt.f_tolerance;
    if (flat || diam <= opt.x_tolerance) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i <= static_cast<std::size_t>(n); ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(n);

    Eigen::VectorXd xr = project(centroid + (centroid - pts[worst]));
    double fr = eval(xr);
    if (fr < vals[best]) {
      Eigen::VectorXd xe = project(centroid + 2.0 * (centroid - pts[worst]));
      double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe, vals[worst] = fe;
      } else {
        pts[worst] = xr, vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr, vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    Eigen::VectorXd xc = outside ? project(centroid + 0.5 * (xr - centroid))
                                 : project(centroid + 0.5 * (pts[worst] - centroid));
    double fc = eval(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc, vals[worst] = fc;
      continue;
    }
    // shrink toward the best vertex
    for (std::size_t i = 0; i <= static_cast<std::size_t>(n); ++i) {
      if (i == best) continue;
      pts[i] = project(pts[best] + 0.5 * (pts[i] - pts[best]));
      vals[i] = eval(pts[i]);
    }
  }

  auto it = std::min_element(vals.begin(), vals.end());
  res.x = pts[static_cast<std::size_t>(it - vals.begin())];
  res.value = *it;
  return res;
}

}  // namespace owal
