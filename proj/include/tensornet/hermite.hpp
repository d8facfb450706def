#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tensornet/common.hpp"
#include "tensornet/ensembles.hpp"

namespace tensornet {

/// Orthonormal Hermite polynomial h_k(z) for the standard Gaussian measure,
/// via the stable recurrence h_{k+1} = (z h_k - sqrt(k) h_{k-1}) / sqrt(k+1).
inline double hermite_eval(int k, double z) {
  if (k < 0 || k > 200)
    throw std::domain_error("hermite_eval: k must lie in [0, 200]");
  double prev = 0.0, cur = 1.0;
  for (int j = 0; j < k; ++j) {
    double next = (z * cur - std::sqrt(double(j)) * prev) / std::sqrt(double(j + 1));
    prev = cur;
    cur = next;
  }
  return cur;
}

/// Gauss quadrature rule for the standard Gaussian measure (nodes symmetric,
/// weights summing to one). Nodes are the eigenvalues of the Jacobi matrix;
/// weights come from the Christoffel identity w_i = 1 / sum_j h_j(x_i)^2,
/// evaluated through the scaled functions h_j(x) e^{-x^2/4} so that extreme
/// nodes stay finite.
class GaussHermiteRule {
 public:
  explicit GaussHermiteRule(int n) : n_(n) {
    if (n < 2) throw std::invalid_argument("GaussHermiteRule: need n >= 2");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int j = 1; j < n; ++j) {
      double b = std::sqrt(double(j));
      jacobi(j - 1, j) = b;
      jacobi(j, j - 1) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi,
                                                      Eigen::EigenvaluesOnly);
    Eigen::VectorXd x = es.eigenvalues();
    std::sort(x.data(), x.data() + n);
    nodes_.resize(n);
    for (int i = 0; i < n; ++i) nodes_[i] = 0.5 * (x(i) - x(n - 1 - i));
    weights_.assign(n, 0.0);
    std::vector<double> tab(n);
    for (int i = 0; i < n; ++i) {
      double z = nodes_[i];
      double g = std::exp(-z * z / 4.0);
      if (g == 0.0) continue;  // weight below double range
      double prev = 0.0, cur = g, christ = g * g;
      for (int j = 1; j < n; ++j) {
        double next = (z * cur - std::sqrt(double(j - 1)) * prev) /
                      std::sqrt(double(j));
        prev = cur;
        cur = next;
        christ += cur * cur;
      }
      weights_[i] = (christ > 0.0) ? std::exp(-z * z / 2.0) / christ : 0.0;
    }
  }

  int size() const { return n_; }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }

  /// E[f(G)] for G ~ N(0,1).
  template <class F>
  double integrate(F&& f) const {
    double s = 0.0;
    for (int i = 0; i < n_; ++i)
      if (weights_[i] > 0.0) s += weights_[i] * f(nodes_[i]);
    return s;
  }

  /// Coefficients E[f(G) h_k(G)] for k = 0..kmax, accumulated through the
  /// scaled recurrence to avoid overflow at extreme nodes.
  template <class F>
  std::vector<double> project(F&& f, int kmax) const {
    std::vector<double> out(kmax + 1, 0.0);
    for (int i = 0; i < n_; ++i) {
      double z = nodes_[i];
      double g = std::exp(-z * z / 4.0);
      if (g == 0.0 || weights_[i] == 0.0) continue;
      double scale = weights_[i] * f(z) / g;  // w_i f(z) h_k = scale * h~_k
      double prev = 0.0, cur = g;
      out[0] += scale * cur;
      for (int k = 1; k <= kmax; ++k) {
        double next = (z * cur - std::sqrt(double(k - 1)) * prev) /
                      std::sqrt(double(k));
        prev = cur;
        cur = next;
        out[k] += scale * cur;
      }
    }
    return out;
  }

 private:
  int n_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

enum class Parity { even, odd, none };

inline const char* to_string(Parity p) {
  switch (p) {
    case Parity::even: return "even";
    case Parity::odd: return "odd";
    case Parity::none: return "none";
  }
  return "none";
}

/// An activation function together with its coefficients in the orthonormal
/// Hermite basis and truncation metadata. parseval_residual is the L^2 mass
/// beyond the truncation degree: E[sigma(G)^2] - sum_{k<=K} sigma_hat_k^2.
struct Activation {
  enum class Kind { polynomial, scaled_tanh };

  Kind kind = Kind::polynomial;
  std::vector<double> poly;   // monomial coefficients a_0..a_D
  double beta = 0.0;          // sigma(x) = tanh(beta x) for scaled_tanh
  std::vector<double> hermite;  // sigma_hat_0..sigma_hat_K
  int truncation_degree = 0;
  double parseval_residual = 0.0;
  Parity parity = Parity::none;

  double operator()(double z) const {
    if (kind == Kind::scaled_tanh) return std::tanh(beta * z);
    double acc = 0.0;
    for (auto it = poly.rbegin(); it != poly.rend(); ++it) acc = acc * z + *it;
    return acc;
  }

  double derivative(double z) const {
    if (kind == Kind::scaled_tanh) {
      double t = std::tanh(beta * z);
      return beta * (1.0 - t * t);
    }
    double acc = 0.0;
    for (int n = static_cast<int>(poly.size()) - 1; n >= 1; --n)
      acc = acc * z + n * poly[n];
    return acc;
  }

  double hermite_coeff(int k) const {
    return (k >= 0 && k < static_cast<int>(hermite.size())) ? hermite[k] : 0.0;
  }

  std::string describe() const {
    if (kind == Kind::scaled_tanh) return "tanh(" + format17(beta) + " x)";
    std::string s = "poly[";
    for (std::size_t i = 0; i < poly.size(); ++i) {
      if (i) s += ',';
      s += format17(poly[i]);
    }
    return s + "]";
  }
};

namespace detail {

inline Parity detect_parity(const std::vector<double>& coeffs) {
  constexpr double tol = 1e-10;
  bool even_ok = true, odd_ok = true;
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    if (std::abs(coeffs[k]) <= tol) continue;
    if (k % 2 == 0) odd_ok = false;
    else even_ok = false;
  }
  if (even_ok) return Parity::even;
  if (odd_ok) return Parity::odd;
  return Parity::none;
}

/// E[G^n h_k(G)]: nonzero only when k <= n with matching parity, where it
/// equals n! / (2^m m! sqrt(k!)) with m = (n-k)/2.
inline double monomial_hermite_coeff(int n, int k) {
  if (k > n || (n - k) % 2 != 0) return 0.0;
  int m = (n - k) / 2;
  double v = 1.0;
  // n! / (2^m m! k!) * sqrt(k!) computed as a running product
  for (int i = 1; i <= n; ++i) v *= i;
  for (int i = 1; i <= m; ++i) v /= 2.0 * i;
  double kfact = 1.0;
  for (int i = 1; i <= k; ++i) kfact *= i;
  return v / kfact * std::sqrt(kfact);
}

inline double double_factorial_odd(int n) {
  // (n-1)!! for even n >= 0, i.e. E[G^n]
  double v = 1.0;
  for (int i = n - 1; i >= 1; i -= 2) v *= i;
  return v;
}

}  // namespace detail

/// Exact Hermite coefficients of a polynomial via the monomial-to-Hermite
/// basis change. K defaults to the polynomial degree and must not be smaller.
inline Activation make_polynomial_activation(std::vector<double> coeffs,
                                             int truncation = -1) {
  while (coeffs.size() > 1 && coeffs.back() == 0.0) coeffs.pop_back();
  if (coeffs.empty()) coeffs.push_back(0.0);
  int degree = static_cast<int>(coeffs.size()) - 1;
  if (degree > 100)
    throw std::invalid_argument("make_polynomial_activation: degree too large");
  int K = truncation < 0 ? degree : truncation;
  if (K < degree)
    throw std::invalid_argument(
        "make_polynomial_activation: truncation below polynomial degree");
  Activation act;
  act.kind = Activation::Kind::polynomial;
  act.poly = coeffs;
  act.truncation_degree = K;
  act.hermite.assign(K + 1, 0.0);
  for (int k = 0; k <= std::min(K, degree); ++k)
    for (int n = k; n <= degree; n += 2)
      act.hermite[k] += coeffs[n] * detail::monomial_hermite_coeff(n, k);
  // E[sigma^2] from the squared polynomial and Gaussian moments
  std::vector<double> sq(2 * degree + 1, 0.0);
  for (int i = 0; i <= degree; ++i)
    for (int j = 0; j <= degree; ++j) sq[i + j] += coeffs[i] * coeffs[j];
  double second_moment = 0.0;
  for (int n = 0; n <= 2 * degree; n += 2)
    second_moment += sq[n] * detail::double_factorial_odd(n);
  double sumsq = 0.0;
  for (double c : act.hermite) sumsq += c * c;
  act.parseval_residual = std::max(0.0, second_moment - sumsq);
  act.parity = detail::detect_parity(act.hermite);
  return act;
}

/// sigma(x) = tanh(beta x), expanded by Gauss-Hermite quadrature. The rule
/// is recomputed with twice the nodes; if the residual estimate grows under
/// refinement the quadrature has not converged.
inline Activation make_scaled_tanh_activation(double beta, int truncation = 40,
                                              int quadrature_nodes = 201) {
  if (truncation < 0)
    throw std::invalid_argument("make_scaled_tanh_activation: K must be >= 0");
  if (quadrature_nodes < 2)
    throw std::invalid_argument("make_scaled_tanh_activation: too few nodes");
  auto sigma = [beta](double z) { return std::tanh(beta * z); };
  GaussHermiteRule coarse(quadrature_nodes);
  GaussHermiteRule fine(2 * quadrature_nodes);
  auto coarse_coeffs = coarse.project(sigma, truncation);
  auto fine_coeffs = fine.project(sigma, truncation);
  auto residual_of = [&](const GaussHermiteRule& rule,
                         const std::vector<double>& c) {
    double second = rule.integrate([&](double z) {
      double s = sigma(z);
      return s * s;
    });
    double sumsq = 0.0;
    for (double v : c) sumsq += v * v;
    return second - sumsq;
  };
  double res_coarse = residual_of(coarse, coarse_coeffs);
  double res_fine = residual_of(fine, fine_coeffs);
  if (res_fine > res_coarse + 1e-6 * std::max(1.0, std::abs(res_coarse)))
    throw numerical_error(
        "make_scaled_tanh_activation: residual grew when doubling the "
        "quadrature nodes");
  Activation act;
  act.kind = Activation::Kind::scaled_tanh;
  act.beta = beta;
  act.truncation_degree = truncation;
  act.hermite = std::move(fine_coeffs);
  act.parseval_residual = std::max(0.0, res_fine);
  act.parity = detail::detect_parity(act.hermite);
  return act;
}

/// E[sigma(<u,x>) gamma(<v,x>)] for unit u, v with <u,v> = rho, from the
/// coefficient vectors: sum_k sigma_hat_k gamma_hat_k rho^k. Vectors of
/// different truncation are implicitly zero padded.
inline double gaussian_pair_expectation(const std::vector<double>& sigma_hat,
                                        const std::vector<double>& gamma_hat,
                                        double rho) {
  if (std::abs(rho) > 1.0 + 1e-12)
    throw std::invalid_argument("gaussian_pair_expectation: |rho| must be <= 1");
  std::size_t n = std::min(sigma_hat.size(), gamma_hat.size());
  double acc = 0.0, rk = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += sigma_hat[k] * gamma_hat[k] * rk;
    rk *= rho;
  }
  return acc;
}

/// Closed-form output moments of y(x) = sum_i sigma(<w_i, x>) under
/// x ~ N(0, I_d), plus the best predictor of the form a + b ||x||^2 and its
/// risk. Uses E[h_k(<w,x>) ||x||^2] = d 1{k=0} + sqrt(2) 1{k=2}.
struct MomentSummary {
  double mean_y = 0.0;
  double var_y = 0.0;
  double cov_y_norm2 = 0.0;
  double baseline_a = 0.0;
  double baseline_b = 0.0;
  double baseline_risk = 0.0;
};

inline MomentSummary network_moments(const Activation& act,
                                     const WeightEnsemble& e) {
  require_unit_rows(e, 1e-8, "network_moments");
  MomentSummary m;
  const int K = act.truncation_degree;
  Eigen::MatrixXd gram = e.W * e.W.transpose();
  Eigen::ArrayXXd pow = Eigen::ArrayXXd::Ones(e.r, e.r);
  double var = 0.0;
  for (int k = 1; k <= K; ++k) {
    pow *= gram.array();
    double c = act.hermite_coeff(k);
    if (c != 0.0) var += c * c * pow.sum();
  }
  m.mean_y = e.r * act.hermite_coeff(0);
  m.var_y = var;
  double s2 = act.hermite_coeff(2);
  m.cov_y_norm2 = std::sqrt(2.0) * s2 * e.r;
  m.baseline_b = m.cov_y_norm2 / (2.0 * e.d);
  m.baseline_a = m.mean_y - m.baseline_b * e.d;
  m.baseline_risk = m.var_y - s2 * s2 * double(e.r) * e.r / e.d;
  return m;
}

}  // namespace tensornet
