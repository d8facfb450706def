#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>

#include "tensornet/common.hpp"

namespace tensornet {

/// Deterministic random source: mt19937_64 plus an explicit Box-Muller
/// transform. Streams depend only on the seed, not on the standard
/// library's distribution implementations, so runs reproduce bit-exactly.
class Rng {
 public:
  static constexpr const char* kName = "mt19937_64/box-muller";

  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1].
  double uniform_pos() {
    return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u = uniform_pos();
    double v = uniform();
    double rad = std::sqrt(-2.0 * std::log(u));
    double ang = 2.0 * M_PI * v;
    spare_ = rad * std::sin(ang);
    have_spare_ = true;
    return rad * std::cos(ang);
  }

  Eigen::VectorXd gaussian_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = gaussian();
    return v;
  }

  /// Fills row by row so the stream layout is well defined.
  Eigen::MatrixXd gaussian_matrix(int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = gaussian();
    return m;
  }

  /// Uniform draw from the unit sphere in R^d.
  Eigen::VectorXd unit_sphere(int d) {
    for (;;) {
      Eigen::VectorXd v = gaussian_vector(d);
      double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Derives an independent stream seed from a base seed and an index
/// (SplitMix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// R-factor diagonal fixed positive, which makes the Q-factor Haar.
inline Eigen::MatrixXd haar_orthogonal(int d, Rng& rng) {
  Eigen::MatrixXd a = rng.gaussian_matrix(d, d);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR();
  for (int j = 0; j < d; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace tensornet
