#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "tensornet/sgd.hpp"
#include "test_support.hpp"

using namespace tensornet;

TEST_CASE("experiment teacher: centering and row-norm spread") {
  auto e = make_teacher_experiment(50, 50, 3);
  CHECK(e.W.colwise().sum().norm() < 1e-12);
  for (int i = 0; i < e.r; ++i) {
    double n = e.W.row(i).norm();
    CHECK(std::abs(n - 1.0) < 6.0 / std::sqrt(50.0));
  }
  auto stacked = make_teacher_experiment(10, 30, 4);
  CHECK(stacked.r == 30);
  CHECK(stacked.W.colwise().sum().norm() < 1e-12);

  auto two = make_teacher_experiment(2, 2, 5);
  CHECK((two.W.row(0) + two.W.row(1)).norm() < 1e-14);

  CHECK_THROWS_AS(make_teacher_experiment(10, 25, 1), std::invalid_argument);
}

TEST_CASE("norm-only least squares baseline") {
  auto tanh_act = make_scaled_tanh_activation(2.5, 40);
  auto teacher = make_teacher_experiment(20, 20, 7);
  auto [a0, b0] = least_squares_baseline(teacher, tanh_act);
  CHECK(a0 == 0.0);
  CHECK(b0 == 0.0);

  double s = 1.0 / std::sqrt(2.0);
  auto h2 = make_polynomial_activation({-s, 0.0, s});
  int d = 8, r = 8;
  auto id = make_identity(d);
  auto [a1, b1] = least_squares_baseline(id, h2);
  CHECK(b1 == Catch::Approx(std::sqrt(2.0) * r / (2.0 * d)).margin(1e-12));
  CHECK(a1 == Catch::Approx(-b1 * d).margin(1e-12));
  // independent oracle: sample regression of y on {1, ||x||^2}
  auto mc = tn_test::mc_network_moments(id, h2, 400000, 71);
  CHECK(std::abs(mc.fit_a - a1) < 0.05);
  CHECK(std::abs(mc.fit_b - b1) < 0.01);

  auto constant = make_polynomial_activation({1.0});
  auto [a2, b2] = least_squares_baseline(id, constant);
  CHECK(a2 == Catch::Approx(double(r)).margin(1e-12));
  CHECK(b2 == 0.0);

  // non-unit rows enter through the per-row rescaled coefficients
  auto quad = make_polynomial_activation({0.0, 0.0, 1.0});
  WeightEnsemble twice;
  twice.W = 2.0 * Eigen::MatrixXd::Identity(4, 4);
  twice.d = 4;
  twice.r = 4;
  auto [a3, b3] = least_squares_baseline(twice, quad);
  auto mc3 = tn_test::mc_network_moments(twice, quad, 400000, 72);
  CHECK(std::abs(mc3.fit_a - a3) < 0.1);
  CHECK(std::abs(mc3.fit_b - b3) < 0.02);
}

TEST_CASE("one SGD step reproduces the hand gradient") {
  SgdConfig cfg;
  cfg.d = 2;
  cfg.r = 2;
  cfg.R = 2;
  cfg.act = make_polynomial_activation({0.0, 1.0});
  cfg.n_steps = 1;
  cfg.window = 1;
  cfg.step_size = 0.1;
  cfg.seed = 99;
  cfg.teacher_kind = "experiment";
  auto trace = sgd_run(cfg);

  // replay the streams: teacher, init, one data sample
  auto teacher = make_teacher_experiment(2, 2, derive_seed(99, 0));
  Rng init_rng(derive_seed(99, 1));
  Eigen::MatrixXd student(2, 2);
  student.row(0) = init_rng.unit_sphere(2).transpose();
  student.row(1) = init_rng.unit_sphere(2).transpose();
  Rng data_rng(derive_seed(99, 2));
  Eigen::VectorXd x = data_rng.gaussian_vector(2);
  double y = (teacher.W * x).sum();
  double y_raw = (student * x).sum();
  Eigen::MatrixXd expected =
      student - 0.1 * 2.0 * (y_raw - y) * Eigen::VectorXd::Ones(2) * x.transpose();
  CHECK((trace.final_student - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("polyak average equals the mean of the raw iterates") {
  for (long n : {1L, 10L, 1000L}) {
    SgdConfig cfg;
    cfg.d = 3;
    cfg.r = 3;
    cfg.R = 3;
    cfg.act = make_polynomial_activation({0.0, 0.5, 0.0, 0.1});
    cfg.n_steps = n;
    cfg.window = n;
    cfg.step_size = 0.02;
    cfg.seed = 1234;
    cfg.teacher_kind = "experiment";
    auto trace = sgd_run(cfg);

    auto teacher = make_teacher_experiment(3, 3, derive_seed(1234, 0));
    Rng init_rng(derive_seed(1234, 1));
    Eigen::MatrixXd student(3, 3);
    for (int i = 0; i < 3; ++i)
      student.row(i) = init_rng.unit_sphere(3).transpose();
    Rng data_rng(derive_seed(1234, 2));
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(3, 3);
    for (long j = 1; j <= n; ++j) {
      Eigen::VectorXd x = data_rng.gaussian_vector(3);
      double y = 0.0, y_raw = 0.0;
      Eigen::VectorXd tp = teacher.W * x, sp = student * x;
      for (int i = 0; i < 3; ++i) y += cfg.act(tp(i));
      for (int i = 0; i < 3; ++i) y_raw += cfg.act(sp(i));
      for (int i = 0; i < 3; ++i)
        student.row(i) -= 0.02 * 2.0 * (y_raw - y) * cfg.act.derivative(sp(i)) *
                          x.transpose();
      mean += student;
    }
    mean /= static_cast<double>(n);
    INFO("n=" << n);
    CHECK((trace.final_student - mean).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("teacher-equal initialization keeps every windowed error at zero") {
  SgdConfig cfg;
  cfg.d = 4;
  cfg.r = 4;
  cfg.R = 4;
  cfg.act = make_scaled_tanh_activation(2.5, 40);
  cfg.n_steps = 500;
  cfg.window = 100;
  cfg.step_size = 0.1;
  cfg.seed = 5;
  cfg.teacher_kind = "experiment";
  cfg.init_kind = "teacher";
  auto trace = sgd_run(cfg);
  REQUIRE(trace.records.size() == 5);
  for (const auto& rec : trace.records) {
    CHECK(rec.norm_gen_err == 0.0);
    CHECK(rec.raw_mse == 0.0);
    CHECK(rec.chamfer_err == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("zero step size freezes the student") {
  SgdConfig cfg;
  cfg.d = 5;
  cfg.r = 5;
  cfg.R = 5;
  cfg.act = make_scaled_tanh_activation(2.5, 40);
  cfg.n_steps = 300;
  cfg.window = 100;
  cfg.step_size = 0.0;
  cfg.seed = 6;
  cfg.teacher_kind = "experiment";
  auto trace = sgd_run(cfg);
  Rng init_rng(derive_seed(6, 1));
  Eigen::MatrixXd init(5, 5);
  for (int i = 0; i < 5; ++i) init.row(i) = init_rng.unit_sphere(5).transpose();
  CHECK(trace.final_student == init);
  REQUIRE(trace.records.size() == 3);
  // a frozen student has a constant weight-estimation error
  CHECK(trace.records[0].chamfer_err == trace.records[1].chamfer_err);
  CHECK(trace.records[1].chamfer_err == trace.records[2].chamfer_err);
}

TEST_CASE("identical configs give bit-identical traces") {
  SgdConfig cfg;
  cfg.d = 6;
  cfg.r = 6;
  cfg.R = 6;
  cfg.act = make_scaled_tanh_activation(2.5, 40);
  cfg.n_steps = 2000;
  cfg.window = 500;
  cfg.step_size = 0.05;
  cfg.seed = 7;
  cfg.teacher_kind = "experiment";
  auto a = sgd_run(cfg);
  auto b = sgd_run(cfg);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].norm_gen_err == b.records[i].norm_gen_err);
    CHECK(a.records[i].chamfer_err == b.records[i].chamfer_err);
    CHECK(a.records[i].raw_mse == b.records[i].raw_mse);
  }
  CHECK(a.final_student == b.final_student);
}

TEST_CASE("divergence guard aborts an exploding run") {
  SgdConfig cfg;
  cfg.d = 4;
  cfg.r = 4;
  cfg.R = 4;
  cfg.act = make_polynomial_activation({0.0, 1.0});  // unbounded activation
  cfg.n_steps = 5000;
  cfg.window = 100;
  cfg.step_size = 10.0;
  cfg.seed = 8;
  cfg.teacher_kind = "identity";
  auto trace = sgd_run(cfg);
  CHECK(trace.diverged);
  CHECK_FALSE(trace.divergence_note.empty());
}

TEST_CASE("sgd config validation") {
  SgdConfig cfg = default_sgd_config();
  cfg.n_steps = 10;
  cfg.window = 100;
  CHECK_THROWS_AS(sgd_run(cfg), std::invalid_argument);
  cfg.window = 10;
  cfg.step_size = -0.1;
  CHECK_THROWS_AS(sgd_run(cfg), std::invalid_argument);
}

TEST_CASE("figure grid lists the desk-scale experiment plan") {
  auto grid = figure_run_grid(FigureScale::desk, 42);
  REQUIRE(grid.size() == 6);
  for (const auto& cfg : grid) {
    CHECK(cfg.d == 50);
    CHECK((cfg.r == 50 || cfg.r == 350));
    CHECK(cfg.n_steps == 200000);
    CHECK(cfg.window == 10000);
    CHECK((cfg.step_size == 0.01 || cfg.step_size == 0.05 ||
           cfg.step_size == 0.25));
  }
  auto full = figure_run_grid(FigureScale::full, 42);
  REQUIRE(full.size() == 9);
  CHECK(full.back().r == 2500);
  CHECK(full.back().n_steps == 5000000);
}

TEST_CASE("generalization and weight errors move together while learning") {
  SgdConfig cfg;
  cfg.d = 10;
  cfg.r = 10;
  cfg.R = 10;
  cfg.act = make_scaled_tanh_activation(2.5, 40);
  cfg.n_steps = 30000;
  cfg.window = 3000;
  cfg.step_size = 1e-3;
  cfg.seed = 404;
  cfg.teacher_kind = "identity";
  auto trace = sgd_run(cfg);
  REQUIRE(trace.records.size() == 10);
  std::vector<double> ge, ch;
  for (const auto& rec : trace.records) {
    ge.push_back(rec.norm_gen_err);
    ch.push_back(rec.chamfer_err);
  }
  CHECK(tn_test::spearman(ge, ch) >= 0.8);
  CHECK(ge.back() < ge.front());
  CHECK(ch.back() < ch.front());
}

TEST_CASE("spearman helper on monotone and tied data") {
  std::vector<double> up = {1, 2, 3, 4, 5};
  std::vector<double> down = {9, 7, 5, 3, 1};
  CHECK(tn_test::spearman(up, up) == Catch::Approx(1.0));
  CHECK(tn_test::spearman(up, down) == Catch::Approx(-1.0));
  std::vector<double> flat = {2, 2, 2, 2, 2};
  CHECK(tn_test::spearman(up, flat) == 0.0);
}
