#include <catch2/catch_amalgamated.hpp>

#include "oracle_utils.hpp"
#include "unmix/quec.hpp"

using namespace unmix;
using Catch::Matchers::WithinAbs;

namespace {

// The quadratic being minimized, for the decrease-property check.
double quec_objective(const Matrix& e, double mu, const Matrix& t,
                      const Matrix& g, const Matrix& x) {
  return 0.5 * (t - e * x).squaredNorm() + 0.5 * mu * (x - g).squaredNorm();
}

}  // namespace

TEST_CASE("quec_prepare closed-form pieces", "[quec]") {
  SECTION("zero design reduces to scaled identity") {
    const auto f = quec_prepare(Matrix::Zero(5, 2), 2.0);
    CHECK((f.q() - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <
          1e-14);
    CHECK_THAT(f.c(), WithinAbs(-1.0, 1e-14));
  }
  SECTION("identity design with mu 1") {
    const auto f = quec_prepare(Matrix::Identity(2, 2), 1.0);
    CHECK((f.q() - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <
          1e-14);
    CHECK_THAT(f.c(), WithinAbs(-1.0, 1e-14));
  }
  SECTION("random design matches a dense inverse oracle") {
    std::mt19937_64 rng(21);
    const Matrix e = oracle::randn(rng, 10, 4);
    const double mu = 0.5;
    const auto f = quec_prepare(e, mu);
    Matrix gram = oracle::matmul(e.transpose(), e);
    for (Index i = 0; i < 4; ++i) gram(i, i) += mu;
    const Matrix q_ref = oracle::gauss_inverse(gram);
    CHECK((f.q() - q_ref).cwiseAbs().maxCoeff() < 1e-10);
    // Type invariants: symmetry, inverse residual, negative c.
    CHECK((f.q() - f.q().transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((f.q() * gram - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <
          1e-8);
    CHECK(f.c() < 0);
  }
  SECTION("mu must be positive") {
    CHECK_THROWS_AS(quec_prepare(Matrix::Identity(2, 2), 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(quec_prepare(Matrix::Identity(2, 2), -1.0),
                    std::invalid_argument);
  }
}

TEST_CASE("quec_solve closed form", "[quec]") {
  SECTION("feasible exact minimizer is returned unchanged") {
    std::mt19937_64 rng(22);
    const Matrix e = oracle::randn(rng, 8, 3);
    Matrix x_star = oracle::randn(rng, 3, 5).cwiseAbs();
    for (Index j = 0; j < x_star.cols(); ++j) x_star.col(j) /= x_star.col(j).sum();
    const Matrix t = e * x_star;
    for (double mu : {1e-2, 1.0, 50.0}) {
      const Matrix got = quec_solve(quec_prepare(e, mu), t, x_star);
      CHECK((got - x_star).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  SECTION("hand-solved 2x2 instance") {
    // E = I2, mu = 1, t = (1,0)', g = 0: bordered KKT gives (0.75, 0.25)'.
    const auto f = quec_prepare(Matrix::Identity(2, 2), 1.0);
    Matrix t(2, 1);
    t << 1, 0;
    const Matrix x = quec_solve(f, t, Matrix::Zero(2, 1));
    CHECK_THAT(x(0, 0), WithinAbs(0.75, 1e-12));
    CHECK_THAT(x(1, 0), WithinAbs(0.25, 1e-12));
  }
  SECTION("random instances match the bordered-KKT oracle") {
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<int> kd(1, 8), pd(1, 20), nd(1, 10);
    std::uniform_real_distribution<double> logmu(-3.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
      const Index k = kd(rng), p = pd(rng), n = nd(rng);
      const double mu = std::pow(10.0, logmu(rng));
      const Matrix e = oracle::randn(rng, p, k);
      const Matrix t = oracle::randn(rng, p, n);
      const Matrix g = oracle::randn(rng, k, n);
      const Matrix got = quec_solve(quec_prepare(e, mu), t, g);
      const Matrix want = oracle::bordered_kkt_solve(e, mu, t, g);
      CHECK((got - want).cwiseAbs().maxCoeff() < 1e-8);
      // Primal feasibility is built into the closed form.
      CHECK((got.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
    }
  }
  SECTION("output beats the feasibility-projected anchor") {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 20; ++trial) {
      const Index k = 5, p = 12, n = 4;
      const double mu = 0.3;
      const Matrix e = oracle::randn(rng, p, k);
      const Matrix t = oracle::randn(rng, p, n);
      const Matrix g = oracle::randn(rng, k, n);
      const Matrix x = quec_solve(quec_prepare(e, mu), t, g);
      Matrix g_proj = g;
      for (Index j = 0; j < n; ++j)
        g_proj.col(j).array() += (1.0 - g.col(j).sum()) / static_cast<double>(k);
      CHECK(quec_objective(e, mu, t, g, x) <=
            quec_objective(e, mu, t, g, g_proj) + 1e-12);
    }
  }
  SECTION("dimension mismatches are rejected") {
    const auto f = quec_prepare(Matrix::Identity(3, 3), 1.0);
    CHECK_THROWS_AS(quec_solve(f, Matrix::Ones(4, 2), Matrix::Ones(3, 2)),
                    std::invalid_argument);
    CHECK_THROWS_AS(quec_solve(f, Matrix::Ones(3, 2), Matrix::Ones(2, 2)),
                    std::invalid_argument);
  }
}
