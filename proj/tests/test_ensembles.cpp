#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "tensornet/ensembles.hpp"

using namespace tensornet;

TEST_CASE("identity ensemble: rows and measured constants") {
  auto e = make_identity(3);
  CHECK(e.W == Eigen::MatrixXd::Identity(3, 3));
  for (int d = 2; d <= 64; ++d) {
    auto rep = check_assumptions(make_identity(d));
    CHECK(rep.delta == 0.0);
    CHECK(rep.eta_avg == Catch::Approx(1.0).margin(1e-12));
    CHECK(rep.eta_var == Catch::Approx(0.0).margin(1e-12));
  }
  CHECK(check_assumptions(make_identity(4)).bound_feasible);
  CHECK(make_identity(1).W(0, 0) == 1.0);
  CHECK_THROWS_AS(make_identity(0), std::invalid_argument);
}

TEST_CASE("centered identity: geometry and measured constants") {
  auto e = make_centered_identity(10);
  for (int i = 0; i < e.r; ++i)
    CHECK(e.W.row(i).norm() == Catch::Approx(1.0).margin(1e-12));
  CHECK(e.W.colwise().sum().norm() < 1e-12);
  auto rep = check_assumptions(e);
  // measured sharp constants: delta = 1/(d-1), eta_avg = 0, eta_var = 1
  CHECK(rep.delta == Catch::Approx(1.0 / 9.0).margin(1e-12));
  CHECK(rep.eta_avg < 1e-12);
  CHECK(rep.eta_var == Catch::Approx(1.0).margin(1e-10));

  auto tiny = make_centered_identity(2);
  CHECK(tiny.W(0, 0) == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-15));
  CHECK(tiny.W(0, 1) == Catch::Approx(-1.0 / std::sqrt(2.0)).margin(1e-15));
  CHECK((tiny.W.row(0) + tiny.W.row(1)).norm() < 1e-15);

  CHECK_THROWS_AS(make_centered_identity(1), std::invalid_argument);
}

TEST_CASE("simplex blocks: unit rows, -1/d correlations, isotropy") {
  auto one = make_simplex(9, 10, 42);
  auto rep = check_assumptions(one);
  CHECK(rep.unit_norm_residual < 1e-10);
  CHECK(rep.delta == Catch::Approx(1.0 / 9.0).margin(1e-8));
  CHECK(rep.eta_avg < 1e-8);
  CHECK(rep.eta_var < 1e-8);

  auto two = make_simplex(9, 20, 43);
  auto rep2 = check_assumptions(two);
  CHECK(rep2.eta_avg < 1e-8);
  CHECK(rep2.eta_var < 1e-8);

  // within-block off-diagonal inner products are exactly -1/d
  Eigen::MatrixXd gram = one.W * one.W.transpose();
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      if (i != j) CHECK(gram(i, j) == Catch::Approx(-1.0 / 9.0).margin(1e-9));

  auto tri = make_simplex(2, 3, 7);
  Eigen::MatrixXd g3 = tri.W * tri.W.transpose();
  CHECK(g3(0, 1) == Catch::Approx(-0.5).margin(1e-10));
  CHECK(g3(0, 2) == Catch::Approx(-0.5).margin(1e-10));
  CHECK(check_assumptions(tri).delta == Catch::Approx(0.5).margin(1e-10));

  CHECK_THROWS_AS(make_simplex(9, 12, 1), std::invalid_argument);
}

TEST_CASE("random isotropic: normalization, antipodal pair, delta scale") {
  for (int trial = 0; trial < 20; ++trial) {
    auto e = make_random_isotropic(50, 350, 100 + trial);
    CHECK(max_unit_norm_residual(e) < 1e-10);
    auto rep = check_assumptions(e);
    CHECK(rep.delta < 6.0 * std::sqrt(std::log(50.0) / 50.0));
  }
  // two centered points are antipodal (up to the rounding of the mean)
  auto pair = make_random_isotropic(4, 2, 5);
  CHECK((pair.W.row(0) + pair.W.row(1)).norm() < 1e-14);
  CHECK_THROWS_AS(make_random_isotropic(4, 1, 5), std::invalid_argument);
}

TEST_CASE("generators are deterministic in the seed") {
  auto a = make_random_isotropic(12, 30, 777);
  auto b = make_random_isotropic(12, 30, 777);
  CHECK(a.W == b.W);
  auto c = make_simplex(5, 12, 31);
  auto d = make_simplex(5, 12, 31);
  CHECK(c.W == d.W);
  auto e = make_random_isotropic(12, 30, 778);
  CHECK(a.W != e.W);
}

TEST_CASE("constrained student: interior, boundary and infeasible cases") {
  WeightEnsemble teacher;  // the single weight e_1 in R^3
  teacher.W = Eigen::MatrixXd::Zero(1, 3);
  teacher.W(0, 0) = 1.0;
  teacher.d = 3;
  teacher.r = 1;
  auto s = make_constrained_student(teacher, 1, 0.1, 11);
  CHECK(std::abs(s.W(0, 0)) <= 0.1 + 1e-9);
  CHECK(s.W.row(0).norm() == Catch::Approx(1.0).margin(1e-12));

  // boundary-tight: eps = 1/sqrt(d) admits only the +-1/sqrt(d) corners
  int d = 9;
  auto teacher2 = make_identity(d);
  double eps = 1.0 / std::sqrt(double(d));
  auto s2 = make_constrained_student(teacher2, 1, eps, 12);
  CHECK((teacher2.W * s2.W.row(0).transpose()).cwiseAbs().maxCoeff() <=
        eps + 1e-9);

  // spanning teacher with tiny eps has an empty constraint set
  CHECK_THROWS_AS(make_constrained_student(teacher2, 1, 1e-3, 13),
                  constructive_failure);
  CHECK_THROWS_AS(make_constrained_student(teacher2, 1, 0.0, 13),
                  std::invalid_argument);

  // centered identity leaves the all-ones direction free
  auto teacher3 = make_centered_identity(16);
  auto s3 = make_constrained_student(teacher3, 8, 0.05, 14);
  CHECK((teacher3.W * s3.W.transpose()).cwiseAbs().maxCoeff() <= 0.05 + 1e-9);
  for (int i = 0; i < 8; ++i)
    CHECK(s3.W.row(i).norm() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("ensemble CSV round trip is bit exact") {
  auto e = make_random_isotropic(7, 5, 999);
  std::string path =
      (std::filesystem::temp_directory_path() / "tn_ensemble_rt.csv").string();
  save_ensemble_csv(e, path);
  auto back = load_ensemble_csv(path);
  CHECK(back.d == e.d);
  CHECK(back.r == e.r);
  CHECK(back.seed == e.seed);
  CHECK(back.kind == e.kind);
  CHECK(back.W == e.W);
  std::remove(path.c_str());
}
