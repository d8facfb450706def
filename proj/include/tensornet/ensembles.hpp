#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tensornet/common.hpp"
#include "tensornet/rng.hpp"

namespace tensornet {

enum class EnsembleKind {
  identity,
  centered_identity,
  simplex,
  random_isotropic,
  custom
};

inline const char* to_string(EnsembleKind k) {
  switch (k) {
    case EnsembleKind::identity: return "identity";
    case EnsembleKind::centered_identity: return "centered_identity";
    case EnsembleKind::simplex: return "simplex";
    case EnsembleKind::random_isotropic: return "random_isotropic";
    case EnsembleKind::custom: return "custom";
  }
  return "custom";
}

inline EnsembleKind ensemble_kind_from_string(const std::string& s) {
  if (s == "identity") return EnsembleKind::identity;
  if (s == "centered_identity") return EnsembleKind::centered_identity;
  if (s == "simplex") return EnsembleKind::simplex;
  if (s == "random_isotropic") return EnsembleKind::random_isotropic;
  if (s == "custom") return EnsembleKind::custom;
  throw std::invalid_argument("unknown ensemble kind: " + s);
}

/// A set of r weight vectors in R^d, stored as the rows of W.
/// Constructions that take no randomness record seed = 0.
struct WeightEnsemble {
  Eigen::MatrixXd W;
  int d = 0;
  int r = 0;
  std::uint64_t seed = 0;
  EnsembleKind kind = EnsembleKind::custom;
};

/// Measured constants for the separation/isotropy assumptions:
///   delta    = max off-diagonal |<w_i, w_j>|
///   eta_avg  = ||sum_i w_i||^2 / r
///   eta_var  = (d/r) * ||sum_i w_i w_i^T - (r/d) I||_op
/// bound_feasible records whether 1 - delta*(1+eta_var)*r/d >= 0.
struct AssumptionReport {
  double delta = 0.0;
  double eta_avg = 0.0;
  double eta_var = 0.0;
  double unit_norm_residual = 0.0;
  bool bound_feasible = false;
};

inline double max_unit_norm_residual(const WeightEnsemble& e) {
  double worst = 0.0;
  for (int i = 0; i < e.r; ++i)
    worst = std::max(worst, std::abs(e.W.row(i).norm() - 1.0));
  return worst;
}

inline void require_unit_rows(const WeightEnsemble& e, double tol,
                              const char* who) {
  if (max_unit_norm_residual(e) > tol)
    throw std::invalid_argument(std::string(who) +
                                ": ensemble rows must have unit norm");
}

inline WeightEnsemble make_identity(int d) {
  if (d < 1) throw std::invalid_argument("make_identity: d must be >= 1");
  WeightEnsemble e;
  e.W = Eigen::MatrixXd::Identity(d, d);
  e.d = d;
  e.r = d;
  e.kind = EnsembleKind::identity;
  return e;
}

/// Rows (e_i - 1/d) * sqrt(d/(d-1)): the identity rows centered to zero mean
/// and rescaled back to unit norm.
inline WeightEnsemble make_centered_identity(int d) {
  if (d < 2) throw std::invalid_argument("make_centered_identity: d must be >= 2");
  WeightEnsemble e;
  double scale = std::sqrt(static_cast<double>(d) / (d - 1));
  e.W = (Eigen::MatrixXd::Identity(d, d).array() - 1.0 / d) * scale;
  e.d = d;
  e.r = d;
  e.kind = EnsembleKind::centered_identity;
  return e;
}

/// Fixed (d+1) x d orthonormal basis of the hyperplane orthogonal to the
/// all-ones vector, built from the Householder reflector that maps e_1 to
/// 1/sqrt(d+1).
inline Eigen::MatrixXd ones_complement_basis(int d) {
  int n = d + 1;
  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(double(n)));
  v(0) -= 1.0;
  Eigen::MatrixXd h =
      Eigen::MatrixXd::Identity(n, n) - (2.0 / v.squaredNorm()) * v * v.transpose();
  return h.rightCols(d);
}

/// Concatenation of r/(d+1) independent rotated-simplex blocks. Each block
/// is sqrt((d+1)/d) * V * Q with V the fixed basis of the ones-complement
/// and Q Haar orthogonal, so within a block all off-diagonal inner products
/// equal -1/d.
inline WeightEnsemble make_simplex(int d, int r, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("make_simplex: d must be >= 1");
  if (r <= 0 || r % (d + 1) != 0)
    throw std::invalid_argument(
        "make_simplex: r must be a positive multiple of d+1");
  Rng rng(seed);
  Eigen::MatrixXd v = ones_complement_basis(d);
  double scale = std::sqrt(static_cast<double>(d + 1) / d);
  WeightEnsemble e;
  e.W.resize(r, d);
  int blocks = r / (d + 1);
  for (int b = 0; b < blocks; ++b) {
    Eigen::MatrixXd q = haar_orthogonal(d, rng);
    e.W.middleRows(b * (d + 1), d + 1) = scale * v * q;
  }
  e.d = d;
  e.r = r;
  e.seed = seed;
  e.kind = EnsembleKind::simplex;
  return e;
}

/// g_i ~ N(0, I_d/d) i.i.d., centered by the empirical mean, each row
/// normalized to unit length.
inline WeightEnsemble make_random_isotropic(int d, int r, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("make_random_isotropic: d must be >= 1");
  if (r < 2) throw std::invalid_argument("make_random_isotropic: r must be >= 2");
  Rng rng(seed);
  Eigen::MatrixXd g = rng.gaussian_matrix(r, d) / std::sqrt(double(d));
  Eigen::RowVectorXd mean = g.colwise().mean();
  g.rowwise() -= mean;
  for (int i = 0; i < r; ++i) {
    double n = g.row(i).norm();
    if (n < 1e-14)
      throw numerical_error("make_random_isotropic: degenerate centered row");
    g.row(i) /= n;
  }
  WeightEnsemble e;
  e.W = std::move(g);
  e.d = d;
  e.r = r;
  e.seed = seed;
  e.kind = EnsembleKind::random_isotropic;
  return e;
}

inline AssumptionReport check_assumptions(const WeightEnsemble& e) {
  AssumptionReport rep;
  rep.unit_norm_residual = max_unit_norm_residual(e);
  Eigen::MatrixXd gram = e.W * e.W.transpose();
  double delta = 0.0;
  for (int i = 0; i < e.r; ++i)
    for (int j = 0; j < e.r; ++j)
      if (i != j) delta = std::max(delta, std::abs(gram(i, j)));
  rep.delta = delta;
  rep.eta_avg = e.W.colwise().sum().squaredNorm() / e.r;
  Eigen::MatrixXd cov = e.W.transpose() * e.W;
  cov.diagonal().array() -= static_cast<double>(e.r) / e.d;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov,
                                                    Eigen::EigenvaluesOnly);
  rep.eta_var =
      (static_cast<double>(e.d) / e.r) * es.eigenvalues().cwiseAbs().maxCoeff();
  rep.bound_feasible =
      1.0 - rep.delta * (1.0 + rep.eta_var) * static_cast<double>(e.r) / e.d >=
      0.0;
  return rep;
}

/// Samples R unit rows whose correlations with every teacher row stay below
/// epsilon (within a 1e-9 slack for constraint sets with empty interior).
/// A rejected draw is repaired by clipping the offending correlations back
/// to the epsilon boundary, renormalizing and re-checking; each row fails
/// after 10^4 fresh draws.
inline WeightEnsemble make_constrained_student(const WeightEnsemble& teacher,
                                               int R, double epsilon,
                                               std::uint64_t seed) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument(
        "make_constrained_student: epsilon must lie in (0,1)");
  if (R < 1) throw std::invalid_argument("make_constrained_student: R must be >= 1");
  constexpr int kMaxAttempts = 10000;
  constexpr int kRepairIters = 300;
  constexpr double kSlack = 1e-9;
  Rng rng(seed);
  WeightEnsemble out;
  out.W.resize(R, teacher.d);
  for (int row = 0; row < R; ++row) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      Eigen::VectorXd v = rng.unit_sphere(teacher.d);
      for (int it = 0; it < kRepairIters; ++it) {
        Eigen::VectorXd c = teacher.W * v;
        if (c.cwiseAbs().maxCoeff() <= epsilon + kSlack) {
          out.W.row(row) = v.transpose();
          placed = true;
          break;
        }
        for (int i = 0; i < teacher.r; ++i) {
          double excess = std::abs(c(i)) - epsilon;
          if (excess > 0.0)
            v -= (c(i) > 0.0 ? excess : -excess) * teacher.W.row(i).transpose();
        }
        double n = v.norm();
        if (n < 1e-10) break;
        v /= n;
      }
    }
    if (!placed) {
      std::ostringstream msg;
      msg << "make_constrained_student: no unit vector with max teacher "
             "correlation <= "
          << epsilon << " found for row " << row << " after " << kMaxAttempts
          << " attempts (d=" << teacher.d << ", teacher r=" << teacher.r
          << "); the constraint set is empty or has negligible measure";
      throw constructive_failure(msg.str());
    }
  }
  out.d = teacher.d;
  out.r = R;
  out.seed = seed;
  out.kind = EnsembleKind::custom;
  return out;
}

/// Writes one row per weight with 17 significant digits; the header line
/// carries the construction metadata. Round trips are bit exact.
inline void save_ensemble_csv(const WeightEnsemble& e, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_ensemble_csv: cannot open " + path);
  f << "# d=" << e.d << " r=" << e.r << " kind=" << to_string(e.kind)
    << " seed=" << e.seed << "\n";
  for (int i = 0; i < e.r; ++i) {
    for (int j = 0; j < e.d; ++j) {
      if (j) f << ',';
      f << format17(e.W(i, j));
    }
    f << '\n';
  }
}

inline WeightEnsemble load_ensemble_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_ensemble_csv: cannot open " + path);
  std::string header;
  std::getline(f, header);
  WeightEnsemble e;
  {
    std::istringstream hs(header);
    std::string tok;
    hs >> tok;  // '#'
    if (tok != "#")
      throw std::runtime_error("load_ensemble_csv: malformed header in " + path);
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "d") e.d = std::stoi(val);
      else if (key == "r") e.r = std::stoi(val);
      else if (key == "kind") e.kind = ensemble_kind_from_string(val);
      else if (key == "seed") e.seed = std::stoull(val);
    }
  }
  if (e.d < 1 || e.r < 1)
    throw std::runtime_error("load_ensemble_csv: missing dimensions in header");
  e.W.resize(e.r, e.d);
  std::string line;
  for (int i = 0; i < e.r; ++i) {
    if (!std::getline(f, line))
      throw std::runtime_error("load_ensemble_csv: truncated file " + path);
    std::istringstream ls(line);
    std::string cell;
    for (int j = 0; j < e.d; ++j) {
      if (!std::getline(ls, cell, ','))
        throw std::runtime_error("load_ensemble_csv: short row in " + path);
      e.W(i, j) = std::stod(cell);
    }
  }
  return e;
}

}  // namespace tensornet
