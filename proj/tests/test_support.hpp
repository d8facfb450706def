#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "tensornet/ensembles.hpp"
#include "tensornet/hermite.hpp"
#include "tensornet/rng.hpp"

namespace tn_test {

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Sample mean and standard error of f(x) over n Gaussian inputs x in R^d.
template <class F>
McEstimate mc_gaussian(int d, long n, std::uint64_t seed, F&& f) {
  tensornet::Rng rng(seed);
  double sum = 0.0, sumsq = 0.0;
  Eigen::VectorXd x(d);
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(j) = rng.gaussian();
    double v = f(x);
    sum += v;
    sumsq += v * v;
  }
  McEstimate est;
  est.mean = sum / n;
  double var = std::max(0.0, sumsq / n - est.mean * est.mean);
  est.stderr_ = std::sqrt(var / n);
  return est;
}

/// Monte Carlo estimate of E{|y(x) - y_hat(x)|^2} between two networks.
inline McEstimate mc_population_mse(const tensornet::WeightEnsemble& teacher,
                                    const tensornet::WeightEnsemble& student,
                                    const tensornet::Activation& act, long n,
                                    std::uint64_t seed) {
  return mc_gaussian(teacher.d, n, seed, [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd tp = teacher.W * x;
    Eigen::VectorXd sp = student.W * x;
    double y = 0.0, yh = 0.0;
    for (int i = 0; i < teacher.r; ++i) y += act(tp(i));
    for (int i = 0; i < student.r; ++i) yh += act(sp(i));
    return (y - yh) * (y - yh);
  });
}

struct McMoments {
  double var_y = 0.0;
  double var_y_stderr = 0.0;
  double baseline_risk = 0.0;
  double baseline_risk_stderr = 0.0;
  double fit_a = 0.0;
  double fit_b = 0.0;
};

/// Independent estimate of Var{y} and of the risk of the best sample
/// regression of y onto {1, ||x||^2}.
inline McMoments mc_network_moments(const tensornet::WeightEnsemble& e,
                                    const tensornet::Activation& act, long n,
                                    std::uint64_t seed) {
  tensornet::Rng rng(seed);
  std::vector<double> ys(n), norms(n);
  Eigen::VectorXd x(e.d);
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < e.d; ++j) x(j) = rng.gaussian();
    Eigen::VectorXd p = e.W * x;
    double y = 0.0;
    for (int k = 0; k < e.r; ++k) y += act(p(k));
    ys[i] = y;
    norms[i] = x.squaredNorm();
  }
  double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double mn = std::accumulate(norms.begin(), norms.end(), 0.0) / n;
  double cyy = 0.0, cnn = 0.0, cyn = 0.0;
  for (long i = 0; i < n; ++i) {
    cyy += (ys[i] - my) * (ys[i] - my);
    cnn += (norms[i] - mn) * (norms[i] - mn);
    cyn += (ys[i] - my) * (norms[i] - mn);
  }
  cyy /= n;
  cnn /= n;
  cyn /= n;
  McMoments out;
  out.var_y = cyy;
  double m4 = 0.0;
  for (long i = 0; i < n; ++i) {
    double c = (ys[i] - my) * (ys[i] - my);
    m4 += (c - cyy) * (c - cyy);
  }
  out.var_y_stderr = std::sqrt(m4 / n / n);
  double b = cnn > 0.0 ? cyn / cnn : 0.0;
  double a = my - b * mn;
  out.fit_a = a;
  out.fit_b = b;
  double rsum = 0.0, rsq = 0.0;
  for (long i = 0; i < n; ++i) {
    double res = ys[i] - a - b * norms[i];
    rsum += res * res;
    rsq += res * res * res * res;
  }
  out.baseline_risk = rsum / n;
  out.baseline_risk_stderr =
      std::sqrt(std::max(0.0, rsq / n - out.baseline_risk * out.baseline_risk) / n);
  return out;
}

/// Spearman rank correlation with average ranks on ties.
inline double spearman(const std::vector<double>& a,
                       const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      double avg = 0.5 * (i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> ra = ranks(a), rb = ranks(b);
  double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0) return 0.0;
  return num / std::sqrt(da * db);
}

/// Random polynomial with coefficients in [-1, 1].
inline std::vector<double> random_poly(int degree, tensornet::Rng& rng) {
  std::vector<double> c(degree + 1);
  for (auto& v : c) v = 2.0 * rng.uniform() - 1.0;
  return c;
}

}  // namespace tn_test
