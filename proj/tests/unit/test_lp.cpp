#include <cstring>
#include <random>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "dhcal/lp.hpp"
#include "lp_oracle.hpp"

using namespace dhcal;

namespace {

LinearProgram abs_fit_lp(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& y) {
  return l1_to_lp(Phi, y, std::vector<bool>(Phi.cols(), true));
}

}  // namespace

TEST_CASE("l1_to_lp construction arithmetic") {
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Random(12, 247);
  Eigen::VectorXd y = Eigen::VectorXd::Random(12);
  const auto lp = abs_fit_lp(Phi, y);
  CHECK(lp.vars() == 259);
  CHECK(lp.cons() == 24);
  CHECK(lp.c.head(247).isZero());
  CHECK(lp.c.tail(12).sum() == 12.0);

  const auto tiny = abs_fit_lp(Eigen::MatrixXd::Constant(1, 1, 2.0),
                               Eigen::VectorXd::Constant(1, 6.0));
  CHECK(tiny.vars() == 2);
  CHECK(tiny.cons() == 2);

  CHECK_THROWS_AS(abs_fit_lp(Eigen::MatrixXd(0, 0), Eigen::VectorXd(0)),
                  std::invalid_argument);
}

TEST_CASE("simplex solves tiny absolute-value fits") {
  SECTION("minimize |x - 3|") {
    const auto lp = abs_fit_lp(Eigen::MatrixXd::Constant(1, 1, 1.0),
                               Eigen::VectorXd::Constant(1, 3.0));
    const auto sol = solve(lp);
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(sol.x(0) == Catch::Approx(3.0));
    CHECK(sol.objective == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("minimize |2x - 4| + |x - 1|") {
    Eigen::MatrixXd Phi(2, 1);
    Phi << 2.0, 1.0;
    Eigen::VectorXd y(2);
    y << 4.0, 1.0;
    const auto sol = solve(abs_fit_lp(Phi, y));
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(sol.x(0) == Catch::Approx(2.0));
    CHECK(sol.objective == Catch::Approx(1.0));

    const auto fast = solve_l1(Phi, y);
    REQUIRE(fast.status == LpStatus::optimal);
    CHECK(fast.x(0) == Catch::Approx(2.0));
    CHECK(fast.objective == Catch::Approx(1.0));
  }
}

TEST_CASE("infeasible and unbounded programs are reported") {
  SECTION("x <= -1 with x >= 0") {
    LinearProgram lp;
    lp.c = Eigen::VectorXd::Constant(1, 1.0);
    lp.A = Eigen::MatrixXd::Constant(1, 1, 1.0);
    lp.b = Eigen::VectorXd::Constant(1, -1.0);
    lp.nonneg = {true};
    CHECK(solve(lp).status == LpStatus::infeasible);
  }
  SECTION("minimize -x with only a lower bound") {
    LinearProgram lp;
    lp.c = Eigen::VectorXd::Constant(1, -1.0);
    lp.A = Eigen::MatrixXd::Constant(1, 1, -1.0);
    lp.b = Eigen::VectorXd::Constant(1, 0.0);
    lp.nonneg = {true};
    CHECK(solve(lp).status == LpStatus::unbounded);
  }
  SECTION("free variable reaches a negative bound") {
    LinearProgram lp;
    lp.c = Eigen::VectorXd::Constant(1, 1.0);
    lp.A = Eigen::MatrixXd::Constant(1, 1, -1.0);
    lp.b = Eigen::VectorXd::Constant(1, 5.0);
    lp.nonneg = {false};
    const auto sol = solve(lp);
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(sol.x(0) == Catch::Approx(-5.0));
    CHECK(sol.objective == Catch::Approx(-5.0));
    CHECK(check_certificate(lp, sol).worst() < 1e-9);
  }
}

TEST_CASE("a classically cycling program terminates at its optimum") {
  // Beale's example: Dantzig pricing cycles without an anti-cycling rule.
  LinearProgram lp;
  lp.c.resize(4);
  lp.c << -0.75, 150.0, -0.02, 6.0;
  lp.A.resize(3, 4);
  lp.A << 0.25, -60.0, -1.0 / 25.0, 9.0,
          0.5, -90.0, -1.0 / 50.0, 3.0,
          0.0, 0.0, 1.0, 0.0;
  lp.b.resize(3);
  lp.b << 0.0, 0.0, 1.0;
  lp.nonneg = {true, true, true, true};
  const auto sol = solve(lp);
  REQUIRE(sol.status == LpStatus::optimal);
  CHECK(sol.objective == Catch::Approx(-0.05));
  CHECK(check_certificate(lp, sol).worst() < 1e-9);
}

TEST_CASE("certificates recompute every claim") {
  Eigen::MatrixXd Phi(1, 1);
  Phi << 1.0;
  Eigen::VectorXd y(1);
  y << 3.0;
  const auto lp = abs_fit_lp(Phi, y);
  auto sol = solve(lp);
  REQUIRE(sol.status == LpStatus::optimal);
  CHECK(check_certificate(lp, sol).worst() <= 1e-7);

  SECTION("perturbing the solution trips a residual") {
    sol.x(0) += 0.1;
    CHECK(check_certificate(lp, sol).worst() > 1e-3);
  }
  SECTION("x = 0 is feasible with objective sum |y|") {
    LpSolution zero;
    zero.x = Eigen::VectorXd::Zero(lp.vars());
    zero.x(1) = 3.0;  // u = |y|
    zero.objective = 3.0;
    const auto rep = check_certificate(lp, zero);
    CHECK(rep.primal_residual <= 1e-12);
    CHECK(rep.objective_error <= 1e-12);
  }
}

TEST_CASE("random programs agree with the vertex-enumeration oracle") {
  int optimal_seen = 0, unbounded_seen = 0;
  for (int inst = 0; inst < 200; ++inst) {
    std::mt19937_64 rng(1000 + inst);
    std::uniform_int_distribution<int> nd(1, 4), md(1, 8);
    std::uniform_real_distribution<double> coef(-2.0, 2.0), pos(0.0, 2.0),
        slackd(0.0, 1.0);
    const int n = nd(rng), m = md(rng);

    LinearProgram lp;
    lp.A.resize(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double a = coef(rng);
        if (inst % 2 == 0) a = std::round(a * 4.0) / 4.0;  // degenerate-prone
        lp.A(i, j) = a;
      }
    Eigen::VectorXd x0(n);
    for (int j = 0; j < n; ++j) x0(j) = pos(rng);
    lp.b = lp.A * x0;
    for (int i = 0; i < m; ++i)
      if (slackd(rng) < 0.7) lp.b(i) += slackd(rng);  // some rows stay tight
    lp.c.resize(n);
    for (int j = 0; j < n; ++j) lp.c(j) = coef(rng);
    lp.nonneg.assign(n, true);

    CAPTURE(inst, n, m);
    const auto sol = solve(lp);
    const auto ref = lp_oracle::solve_by_vertex_enumeration(lp);
    REQUIRE(ref.feasible);

    if (ref.unbounded) {
      ++unbounded_seen;
      CHECK(sol.status == LpStatus::unbounded);
      continue;
    }
    ++optimal_seen;
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(sol.objective ==
          Catch::Approx(ref.objective).margin(1e-7).epsilon(1e-7));
    CHECK(sol.max_violation <= 1e-8);
    CHECK(check_certificate(lp, sol).worst() <= 1e-7);
  }
  // The mix should exercise both exits.
  CHECK(optimal_seen > 100);
  CHECK(unbounded_seen > 10);
}

TEST_CASE("solve is bit-deterministic") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  Eigen::MatrixXd Phi(8, 3);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    y(i) = coef(rng);
    for (int j = 0; j < 3; ++j) Phi(i, j) = coef(rng);
  }
  const auto lp = abs_fit_lp(Phi, y);
  const auto a = solve(lp);
  const auto b = solve(lp);
  REQUIRE(a.x.size() == b.x.size());
  CHECK(std::memcmp(a.x.data(), b.x.data(),
                    sizeof(double) * a.x.size()) == 0);
  CHECK(a.iterations == b.iterations);
  CHECK(a.objective == b.objective);

  const auto fa = solve_l1(Phi, y);
  const auto fb = solve_l1(Phi, y);
  CHECK(std::memcmp(fa.x.data(), fb.x.data(),
                    sizeof(double) * fa.x.size()) == 0);
  CHECK(fa.iterations == fb.iterations);
}

TEST_CASE("absolute-deviation fits never beat the zero fit") {
  for (int inst = 0; inst < 40; ++inst) {
    std::mt19937_64 rng(300 + inst);
    std::uniform_int_distribution<int> md(1, 10), nd(1, 4);
    std::uniform_real_distribution<double> coef(-1.5, 1.5);
    const int m = md(rng), n = nd(rng);
    Eigen::MatrixXd Phi(m, n);
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
      y(i) = coef(rng);
      for (int j = 0; j < n; ++j) Phi(i, j) = coef(rng);
    }
    const auto sol = solve(abs_fit_lp(Phi, y));
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(sol.objective <= y.cwiseAbs().sum() + 1e-9);

    const auto fast = solve_l1(Phi, y);
    REQUIRE(fast.status == LpStatus::optimal);
    CHECK(fast.objective == Catch::Approx(sol.objective).margin(1e-8));
    const auto rep = check_certificate(abs_fit_lp(Phi, y),
                                       to_lp_solution(fast, Phi, y));
    CHECK(rep.worst() <= 1e-8);
  }
}

TEST_CASE("specialized fit handles structured cases") {
  SECTION("zero right-hand side keeps x at zero") {
    Eigen::MatrixXd Phi = Eigen::MatrixXd::Random(6, 3).cwiseAbs();
    const auto sol = solve_l1(Phi, Eigen::VectorXd::Zero(6));
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(sol.x.isZero(1e-12));
    CHECK(sol.objective == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("single exactly-solvable row") {
    const auto sol = solve_l1(Eigen::MatrixXd::Constant(1, 1, 2.0),
                              Eigen::VectorXd::Constant(1, 6.0));
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(sol.x(0) == Catch::Approx(3.0));
    CHECK(sol.objective == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("wide consistent system interpolates") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    Eigen::MatrixXd Phi(40, 5);
    Eigen::VectorXd xtrue(5);
    for (int j = 0; j < 5; ++j) xtrue(j) = u(rng);
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 5; ++j) Phi(i, j) = u(rng);
    const Eigen::VectorXd y = Phi * xtrue;
    const auto sol = solve_l1(Phi, y);
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK((sol.x - xtrue).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK(sol.objective < 1e-9);
  }
}

TEST_CASE("medium random fits: specialized and generic solvers agree") {
  for (int inst = 0; inst < 10; ++inst) {
    std::mt19937_64 rng(7000 + inst);
    std::normal_distribution<double> g(0.0, 1.0);
    const int m = 60, n = 8;
    Eigen::MatrixXd Phi(m, n);
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
      y(i) = g(rng);
      for (int j = 0; j < n; ++j) Phi(i, j) = std::abs(g(rng));
    }
    CAPTURE(inst);
    const auto fast = solve_l1(Phi, y);
    const auto slow = solve(abs_fit_lp(Phi, y));
    REQUIRE(fast.status == LpStatus::optimal);
    REQUIRE(slow.status == LpStatus::optimal);
    CHECK(fast.objective == Catch::Approx(slow.objective).margin(1e-7));
    CHECK(check_certificate(abs_fit_lp(Phi, y), to_lp_solution(fast, Phi, y))
              .worst() <= 1e-7);
  }
}

TEST_CASE("MPS dump is well-formed and complete") {
  Eigen::MatrixXd Phi(2, 1);
  Phi << 2.0, 1.0;
  Eigen::VectorXd y(2);
  y << 4.0, 1.0;
  auto lp = abs_fit_lp(Phi, y);
  lp.nonneg[0] = false;
  std::ostringstream os;
  write_mps(lp, os, "FIT");
  const std::string text = os.str();
  CHECK(text.find("NAME FIT") != std::string::npos);
  CHECK(text.find("ROWS") != std::string::npos);
  CHECK(text.find(" L R3") != std::string::npos);
  CHECK(text.find(" FR BND X0") != std::string::npos);
  CHECK(text.find("ENDATA") != std::string::npos);
  CHECK(text.find("RHS R0 4") != std::string::npos);
}
