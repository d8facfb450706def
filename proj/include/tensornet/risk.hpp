#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tensornet/common.hpp"
#include "tensornet/ensembles.hpp"
#include "tensornet/hermite.hpp"

namespace tensornet {

/// P_k = sum_{i,j} <a_i, b_j>^k for k = 0..K, the kernel-trick form of inner
/// products between sums of k-fold tensor powers. p[0] is the count term
/// r_a * r_b.
struct GramPowerSums {
  std::vector<double> p;
  bool cross = false;

  double at(int k) const { return p.at(static_cast<std::size_t>(k)); }
  int max_order() const { return static_cast<int>(p.size()) - 1; }
};

inline GramPowerSums gram_power_sums(const WeightEnsemble& a,
                                     const WeightEnsemble& b, int K) {
  if (a.d != b.d)
    throw std::invalid_argument("gram_power_sums: dimension mismatch");
  if (K < 0) throw std::invalid_argument("gram_power_sums: K must be >= 0");
  require_unit_rows(a, 1e-8, "gram_power_sums");
  require_unit_rows(b, 1e-8, "gram_power_sums");
  GramPowerSums out;
  out.cross = &a != &b;
  out.p.resize(K + 1);
  out.p[0] = static_cast<double>(a.r) * b.r;
  Eigen::ArrayXXd gram = (a.W * b.W.transpose()).array();
  Eigen::ArrayXXd pow = Eigen::ArrayXXd::Ones(a.r, b.r);
  for (int k = 1; k <= K; ++k) {
    pow *= gram;
    out.p[k] = pow.sum();
  }
  return out;
}

/// Population mean-squared error between teacher and student outputs under
/// Gaussian inputs, with baseline and certificate fields. truncation_error_bar
/// bounds the mass dropped beyond the truncation degree:
/// parseval_residual * (r + R)^2.
struct RiskReport {
  double population_mse = 0.0;
  double var_y = 0.0;
  double baseline_risk = 0.0;
  double truncation_error_bar = 0.0;
  double bound_c1 = 0.0;
  double bound_c2 = 0.0;
  double bound_rhs = 0.0;
  bool bound_applicable = false;
  bool even_case_used = false;
};

/// E{|y - y_hat|^2} = sum_k sigma_hat_k^2 (P_k(W,W) - 2 P_k(W,W_hat)
/// + P_k(W_hat,W_hat)), including the k=0 term sigma_hat_0^2 (r-R)^2.
inline RiskReport population_mse(const WeightEnsemble& teacher,
                                 const WeightEnsemble& student,
                                 const Activation& act) {
  if (teacher.d != student.d)
    throw std::invalid_argument("population_mse: dimension mismatch");
  require_unit_rows(teacher, 1e-8, "population_mse");
  require_unit_rows(student, 1e-8, "population_mse");
  const int K = act.truncation_degree;
  GramPowerSums tt = gram_power_sums(teacher, teacher, K);
  GramPowerSums ts = gram_power_sums(teacher, student, K);
  GramPowerSums ss = gram_power_sums(student, student, K);
  RiskReport rep;
  double mse = 0.0;
  double var = 0.0;
  for (int k = 0; k <= K; ++k) {
    double c = act.hermite_coeff(k);
    if (c == 0.0) continue;
    double diff = (k == 0)
                      ? static_cast<double>(teacher.r - student.r) *
                            (teacher.r - student.r)
                      : tt.at(k) - 2.0 * ts.at(k) + ss.at(k);
    mse += c * c * diff;
    if (k >= 1) var += c * c * tt.at(k);
  }
  rep.population_mse = mse;
  rep.var_y = var;
  double s2 = act.hermite_coeff(2);
  rep.baseline_risk =
      var - s2 * s2 * static_cast<double>(teacher.r) * teacher.r / teacher.d;
  double total = teacher.r + student.r;
  rep.truncation_error_bar = act.parseval_residual * total * total;
  return rep;
}

/// The certified lower-bound ingredients for separated isotropic teachers:
///   c1 = 2 s1^2 eta_avg r + 2 s2^2 eta_var^2 r^2/d
///   c2 = 2 eps (1+eta_var) (R/d) / (1 - delta (1+eta_var) r/d)
/// with the eps^2/delta^2 variants (and no s1 term in c1) when the
/// activation is even. rhs = (baseline_risk - c1)(1 - c2). applicable is
/// false when 1 - delta (1+eta_var) r/d < 0; inapplicability is a flag, not
/// an error.
struct BoundCertificate {
  double c1 = 0.0;
  double c2 = 0.0;
  double rhs = 0.0;
  bool applicable = false;
  bool even_case_used = false;
};

inline BoundCertificate lower_bound_certificate(const AssumptionReport& rep,
                                                const Activation& act, int d,
                                                int r, int R, double epsilon,
                                                double baseline_risk) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument(
        "lower_bound_certificate: epsilon must lie in (0,1)");
  BoundCertificate cert;
  cert.even_case_used = act.parity == Parity::even;
  double s1 = act.hermite_coeff(1);
  double s2 = act.hermite_coeff(2);
  double one_plus = 1.0 + rep.eta_var;
  double rd = static_cast<double>(r) / d;
  cert.applicable = 1.0 - rep.delta * one_plus * rd >= 0.0;
  double quad_term = 2.0 * s2 * s2 * rep.eta_var * rep.eta_var *
                     static_cast<double>(r) * r / d;
  if (cert.even_case_used) {
    cert.c1 = quad_term;
    double denom = 1.0 - rep.delta * rep.delta * one_plus * rd;
    cert.c2 = 2.0 * epsilon * epsilon * one_plus *
              (static_cast<double>(R) / d) / denom;
  } else {
    cert.c1 = 2.0 * s1 * s1 * rep.eta_avg * r + quad_term;
    double denom = 1.0 - rep.delta * one_plus * rd;
    cert.c2 = 2.0 * epsilon * one_plus * (static_cast<double>(R) / d) / denom;
  }
  cert.rhs = (baseline_risk - cert.c1) * (1.0 - cert.c2);
  return cert;
}

/// Outcome of checking the lower bound against the exact population risk.
/// in_scope distinguishes "the bound does not apply here" from an actual
/// bound violation, which would be a correctness bug.
struct LowerBoundCheck {
  bool in_scope = false;
  std::string scope_note;
  bool holds = false;
  double population_mse = 0.0;
  double bound_rhs = 0.0;
  double margin = 0.0;
  RiskReport risk;
  BoundCertificate certificate;
};

inline LowerBoundCheck verify_lower_bound(const WeightEnsemble& teacher,
                                          const WeightEnsemble& student,
                                          const Activation& act,
                                          double epsilon) {
  LowerBoundCheck out;
  if (teacher.d != student.d) {
    out.scope_note = "dimension mismatch";
    return out;
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    out.scope_note = "epsilon outside (0,1)";
    return out;
  }
  if (max_unit_norm_residual(teacher) > 1e-8 ||
      max_unit_norm_residual(student) > 1e-8) {
    out.scope_note = "rows not unit norm";
    return out;
  }
  double max_corr = (teacher.W * student.W.transpose()).cwiseAbs().maxCoeff();
  if (max_corr > epsilon + 1e-9) {
    out.scope_note = "student correlation exceeds epsilon";
    return out;
  }
  AssumptionReport assume = check_assumptions(teacher);
  if (!assume.bound_feasible) {
    out.scope_note = "teacher fails 1 - delta (1+eta_var) r/d >= 0";
    return out;
  }
  out.in_scope = true;
  out.risk = population_mse(teacher, student, act);
  MomentSummary moments = network_moments(act, teacher);
  out.certificate =
      lower_bound_certificate(assume, act, teacher.d, teacher.r, student.r,
                              epsilon, moments.baseline_risk);
  out.population_mse = out.risk.population_mse;
  out.bound_rhs = out.certificate.rhs;
  out.margin = out.population_mse -
               (out.bound_rhs - 1e-7 * std::max(1.0, out.bound_rhs));
  out.holds = out.margin >= 0.0;
  out.risk.bound_c1 = out.certificate.c1;
  out.risk.bound_c2 = out.certificate.c2;
  out.risk.bound_rhs = out.certificate.rhs;
  out.risk.bound_applicable = out.certificate.applicable;
  out.risk.even_case_used = out.certificate.even_case_used;
  return out;
}

/// Check of the cross-correlation bound
///   sum_{i,j} <w_i, w_hat_j>^k <= eps^{k-2} (1+eta_var) r R / d,  k >= 3.
struct CorrelationBound {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

inline CorrelationBound correlation_bound_check(
    const WeightEnsemble& teacher, const WeightEnsemble& student, int k,
    std::optional<double> epsilon = std::nullopt) {
  if (k < 3)
    throw std::domain_error("correlation_bound_check: k must be >= 3");
  if (teacher.d != student.d)
    throw std::invalid_argument("correlation_bound_check: dimension mismatch");
  Eigen::ArrayXXd cross = (teacher.W * student.W.transpose()).array();
  double eps = epsilon ? *epsilon : cross.abs().maxCoeff();
  AssumptionReport assume = check_assumptions(teacher);
  CorrelationBound out;
  out.lhs = cross.pow(k).sum();
  out.rhs = std::pow(eps, k - 2) * (1.0 + assume.eta_var) *
            static_cast<double>(teacher.r) * student.r / teacher.d;
  out.holds = out.lhs <= out.rhs + 1e-10;
  return out;
}

namespace detail {

/// O(n^3) optimal assignment on a square cost matrix (potentials method).
/// Returns the minimum total cost.
inline double min_cost_assignment(const Eigen::MatrixXd& cost) {
  int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), path(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = match[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          path[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      int j1 = path[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost(match[j] - 1, j - 1);
  return total;
}

}  // namespace detail

/// Weight-recovery error metrics between a teacher and a student:
/// permutation_error is the exact assignment metric min_pi sum_i
/// ||w_i - w_hat_pi(i)||^2, computed only for r = R <= 64; chamfer_error is
/// the symmetric average of per-row nearest-neighbour squared distances;
/// third_order_corr is (1/R) sum_{i,j} <w_i, w_hat_j>^3.
struct EstimationErrorReport {
  std::optional<double> permutation_error;
  double max_correlation = 0.0;
  double chamfer_error = 0.0;
  double third_order_corr = 0.0;
};

inline EstimationErrorReport estimation_errors(const WeightEnsemble& teacher,
                                               const WeightEnsemble& student) {
  if (teacher.d != student.d)
    throw std::invalid_argument("estimation_errors: dimension mismatch");
  EstimationErrorReport rep;
  Eigen::MatrixXd cross = teacher.W * student.W.transpose();
  rep.max_correlation = cross.cwiseAbs().maxCoeff();
  rep.third_order_corr = cross.array().pow(3).sum() / student.r;
  Eigen::VectorXd tn = teacher.W.rowwise().squaredNorm();
  Eigen::VectorXd sn = student.W.rowwise().squaredNorm();
  Eigen::MatrixXd dist2 = tn.replicate(1, student.r) +
                          sn.transpose().replicate(teacher.r, 1) - 2.0 * cross;
  double teacher_side = 0.0, student_side = 0.0;
  for (int i = 0; i < teacher.r; ++i)
    teacher_side += std::max(0.0, dist2.row(i).minCoeff());
  for (int j = 0; j < student.r; ++j)
    student_side += std::max(0.0, dist2.col(j).minCoeff());
  rep.chamfer_error = teacher_side / (2.0 * teacher.r) +
                      student_side / (2.0 * student.r);
  if (teacher.r == student.r && teacher.r <= 64)
    rep.permutation_error =
        std::max(0.0, detail::min_cost_assignment(dist2));
  return rep;
}

}  // namespace tensornet
