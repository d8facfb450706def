#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tensornet/common.hpp"
#include "tensornet/ensembles.hpp"
#include "tensornet/hermite.hpp"
#include "tensornet/risk.hpp"
#include "tensornet/rng.hpp"

namespace tensornet {

/// Teacher construction used by the experiment harness: r/d independent Haar
/// orthogonal matrices stacked row-wise, then all rows centered by their
/// empirical mean. Rows are NOT renormalized afterwards.
inline WeightEnsemble make_teacher_experiment(int d, int r, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("make_teacher_experiment: d must be >= 1");
  if (r <= 0 || r % d != 0)
    throw std::invalid_argument(
        "make_teacher_experiment: r must be a positive multiple of d");
  Rng rng(seed);
  WeightEnsemble e;
  e.W.resize(r, d);
  for (int b = 0; b < r / d; ++b)
    e.W.middleRows(b * d, d) = haar_orthogonal(d, rng);
  Eigen::RowVectorXd mean = e.W.colwise().mean();
  e.W.rowwise() -= mean;
  e.d = d;
  e.r = r;
  e.seed = seed;
  e.kind = EnsembleKind::custom;
  return e;
}

/// Population least squares of y onto {1, ||x||^2} for a teacher whose rows
/// may have arbitrary norms: row i contributes through the coefficients of
/// z -> sigma(||w_i|| z). Returns (a, b) with predictor a + b ||x||^2.
inline std::pair<double, double> least_squares_baseline(
    const WeightEnsemble& teacher, const Activation& act) {
  if (act.parity == Parity::odd) return {0.0, 0.0};
  double sum_c0 = 0.0, sum_c2 = 0.0;
  if (act.kind == Activation::Kind::scaled_tanh) {
    // odd function: both projections vanish (handled above); reaching here
    // means the expansion carried numerical noise only
    return {0.0, 0.0};
  }
  int degree = static_cast<int>(act.poly.size()) - 1;
  for (int i = 0; i < teacher.r; ++i) {
    double rho = teacher.W.row(i).norm();
    std::vector<double> scaled(act.poly.size());
    double rn = 1.0;
    for (int n = 0; n <= degree; ++n) {
      scaled[n] = act.poly[n] * rn;
      rn *= rho;
    }
    for (int n = 0; n <= degree; ++n) {
      if (scaled[n] == 0.0) continue;
      sum_c0 += scaled[n] * detail::monomial_hermite_coeff(n, 0);
      if (n >= 2) sum_c2 += scaled[n] * detail::monomial_hermite_coeff(n, 2);
    }
  }
  double b = std::sqrt(2.0) * sum_c2 / (2.0 * teacher.d);
  double a = sum_c0 - b * teacher.d;
  return {a, b};
}

struct SgdConfig {
  int d = 50;
  int r = 50;
  int R = -1;  // student width, defaults to r
  Activation act;
  std::int64_t n_steps = 5000000;
  double step_size = 0.05;
  std::int64_t window = 10000;
  std::uint64_t seed = 1;
  std::string teacher_kind = "experiment";  // experiment | simplex | identity | random_isotropic
  std::string init_kind = "sphere";         // sphere | teacher
};

inline SgdConfig default_sgd_config() {
  SgdConfig c;
  c.act = make_scaled_tanh_activation(2.5, 40);
  return c;
}

struct SgdRecord {
  std::int64_t step = 0;
  double norm_gen_err = 0.0;
  double chamfer_err = 0.0;
  double raw_mse = 0.0;
};

struct SgdTrace {
  std::vector<SgdRecord> records;
  Eigen::MatrixXd final_student;  // the averaged student
  bool diverged = false;
  std::string divergence_note;
  std::string prng_name;
  double wall_seconds = 0.0;
  SgdConfig config;
};

namespace detail {

inline WeightEnsemble sgd_teacher(const SgdConfig& cfg, std::uint64_t seed) {
  if (cfg.teacher_kind == "experiment")
    return make_teacher_experiment(cfg.d, cfg.r, seed);
  if (cfg.teacher_kind == "simplex") return make_simplex(cfg.d, cfg.r, seed);
  if (cfg.teacher_kind == "identity") {
    if (cfg.r != cfg.d)
      throw std::invalid_argument("sgd: identity teacher needs r == d");
    return make_identity(cfg.d);
  }
  if (cfg.teacher_kind == "random_isotropic")
    return make_random_isotropic(cfg.d, cfg.r, seed);
  throw std::invalid_argument("sgd: unknown teacher kind " + cfg.teacher_kind);
}

inline double chamfer_distance(const Eigen::MatrixXd& a,
                               const Eigen::MatrixXd& b) {
  Eigen::VectorXd an = a.rowwise().squaredNorm();
  Eigen::VectorXd bn = b.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = an.replicate(1, b.rows()) +
                       bn.transpose().replicate(a.rows(), 1) -
                       2.0 * (a * b.transpose());
  double left = 0.0, right = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    left += std::max(0.0, d2.row(i).minCoeff());
  for (Eigen::Index j = 0; j < b.rows(); ++j)
    right += std::max(0.0, d2.col(j).minCoeff());
  return left / (2.0 * a.rows()) + right / (2.0 * b.rows());
}

}  // namespace detail

/// Single-pass SGD on the squared loss with a fixed step, maintaining the
/// running (Polyak) average of the iterates. At every step the incoming
/// sample is first scored against the averaged student (an out-of-sample
/// estimate), then used for the gradient update on the raw iterate.
/// Per-window records average the ratio of summed numerators to summed
/// denominators rather than a mean of per-sample ratios.
inline SgdTrace sgd_run(const SgdConfig& config_in) {
  SgdConfig cfg = config_in;
  if (cfg.R < 0) cfg.R = cfg.r;
  if (cfg.window < 1) throw std::invalid_argument("sgd: window must be >= 1");
  if (cfg.n_steps < cfg.window)
    throw std::invalid_argument("sgd: n_steps must be >= window");
  if (cfg.step_size < 0.0)
    throw std::invalid_argument("sgd: step size must be nonnegative");
  if (cfg.act.hermite.empty())
    throw std::invalid_argument("sgd: config has no activation");

  auto t_start = std::chrono::steady_clock::now();
  WeightEnsemble teacher = detail::sgd_teacher(cfg, derive_seed(cfg.seed, 0));
  Rng init_rng(derive_seed(cfg.seed, 1));
  Eigen::MatrixXd student(cfg.R, cfg.d);
  if (cfg.init_kind == "sphere") {
    for (int i = 0; i < cfg.R; ++i)
      student.row(i) = init_rng.unit_sphere(cfg.d).transpose();
  } else if (cfg.init_kind == "teacher") {
    if (cfg.R != cfg.r)
      throw std::invalid_argument("sgd: init_kind=teacher needs R == r");
    student = teacher.W;
  } else {
    throw std::invalid_argument("sgd: unknown init kind " + cfg.init_kind);
  }
  Eigen::MatrixXd averaged = student;

  auto [ls_a, ls_b] = least_squares_baseline(teacher, cfg.act);
  Rng data_rng(derive_seed(cfg.seed, 2));

  SgdTrace trace;
  trace.config = cfg;
  trace.prng_name = Rng::kName;

  const auto& act = cfg.act;
  Eigen::VectorXd x(cfg.d), tproj(cfg.r), sproj(cfg.R), aproj(cfg.R),
      grad(cfg.R);
  double win_num = 0.0, win_den = 0.0;
  double first_window_raw = -1.0;
  for (std::int64_t j = 1; j <= cfg.n_steps; ++j) {
    for (int i = 0; i < cfg.d; ++i) x(i) = data_rng.gaussian();
    tproj.noalias() = teacher.W * x;
    double y = 0.0;
    for (int i = 0; i < cfg.r; ++i) y += act(tproj(i));

    // out-of-sample score of the averaged student on the fresh sample
    aproj.noalias() = averaged * x;
    double y_avg = 0.0;
    for (int i = 0; i < cfg.R; ++i) y_avg += act(aproj(i));
    double num = (y - y_avg) * (y - y_avg);
    double den_ref = y - (ls_a + ls_b * x.squaredNorm());
    win_num += num;
    win_den += den_ref * den_ref;

    // gradient step on the raw iterate
    sproj.noalias() = student * x;
    double y_raw = 0.0;
    for (int i = 0; i < cfg.R; ++i) y_raw += act(sproj(i));
    double err_scale = 2.0 * cfg.step_size * (y_raw - y);
    if (err_scale != 0.0) {
      for (int i = 0; i < cfg.R; ++i)
        grad(i) = err_scale * act.derivative(sproj(i));
      student.noalias() -= grad * x.transpose();
    }
    averaged += (student - averaged) / static_cast<double>(j);

    if (!std::isfinite(y_raw) || !std::isfinite(num)) {
      trace.diverged = true;
      trace.divergence_note =
          "non-finite iterate at step " + std::to_string(j);
      break;
    }
    if (j % cfg.window == 0) {
      SgdRecord rec;
      rec.step = j;
      rec.raw_mse = win_num / static_cast<double>(cfg.window);
      rec.norm_gen_err =
          win_den > 0.0
              ? win_num / win_den
              : (win_num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
      rec.chamfer_err = detail::chamfer_distance(teacher.W, averaged);
      trace.records.push_back(rec);
      if (first_window_raw < 0.0) {
        first_window_raw = rec.raw_mse;
      } else if (rec.raw_mse >
                 1e6 * std::max(first_window_raw,
                                std::numeric_limits<double>::min())) {
        trace.diverged = true;
        trace.divergence_note =
            "raw mse exceeded 1e6 x its initial window average at step " +
            std::to_string(j);
        break;
      }
      win_num = 0.0;
      win_den = 0.0;
    }
  }
  trace.final_student = averaged;
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return trace;
}

enum class FigureScale { desk, full };

/// The experiment grid: d = 50 with the tanh(5x/2) activation. Desk scale
/// runs r in {50, 350} for 2*10^5 steps over the step grid
/// {0.01, 0.05, 0.25}; full scale adds r = 2500 and runs 5*10^6 steps
/// (long-running). Runs are independent and execute concurrently up to
/// `jobs`; each run derives its own seed, so results do not depend on the
/// scheduling.
inline std::vector<SgdConfig> figure_run_grid(FigureScale scale,
                                              std::uint64_t seed) {
  std::vector<int> widths = scale == FigureScale::desk
                                ? std::vector<int>{50, 350}
                                : std::vector<int>{50, 350, 2500};
  std::vector<double> steps = {0.01, 0.05, 0.25};
  Activation act = make_scaled_tanh_activation(2.5, 40);
  std::vector<SgdConfig> grid;
  std::uint64_t index = 0;
  for (int r : widths) {
    for (double s : steps) {
      SgdConfig cfg;
      cfg.d = 50;
      cfg.r = r;
      cfg.R = r;
      cfg.act = act;
      cfg.n_steps = scale == FigureScale::desk ? 200000 : 5000000;
      cfg.step_size = s;
      cfg.window = 10000;
      cfg.seed = derive_seed(seed, index++);
      grid.push_back(cfg);
    }
  }
  return grid;
}

inline std::vector<SgdTrace> run_sgd_grid(const std::vector<SgdConfig>& grid,
                                          int jobs) {
  std::vector<SgdTrace> traces(grid.size());
  if (jobs < 1) jobs = 1;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      traces[i] = sgd_run(grid[i]);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int>(jobs, static_cast<int>(grid.size())); ++t)
    pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return traces;
}

inline std::vector<SgdTrace> replicate_figure_runs(FigureScale scale,
                                                   std::uint64_t seed,
                                                   int jobs) {
  return run_sgd_grid(figure_run_grid(scale, seed), jobs);
}

}  // namespace tensornet
