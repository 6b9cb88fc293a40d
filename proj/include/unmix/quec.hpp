#pragma once

// QuEC: quadratic program with a per-column equality constraint, solved in
// closed form. For a fixed p x k design E and mu > 0,
//
//     argmin_X  0.5*||T - E*X||_F^2 + (mu/2)*||X - G||_F^2
//     s.t.      1'X = 1'   (every column of X sums to one)
//
// has KKT system
//
//     [ E'E + mu*I   1 ] [x]   [E't + mu*g]
//     [ 1'           0 ] [v] = [1         ]
//
// per column. Blockwise inversion with Q = (E'E + mu*I)^-1 and
// c = -1/(1'Q1) gives
//
//     X = Q*R + q1 * c * (q1'R - 1'),   R = E'T + mu*G,  q1 = Q*1,
//
// which is what quec_solve evaluates. Column sums of the result are one by
// construction. The factorization depends only on (E, mu) and is reused
// across all right-hand sides of an inner ADMM loop.

#include <Eigen/Cholesky>

#include "unmix/types.hpp"

namespace unmix {

class QuecFactorization {
 public:
  QuecFactorization(Matrix q, Vector q_ones, double c, Matrix et, double mu)
      : q_(std::move(q)),
        q_ones_(std::move(q_ones)),
        c_(c),
        et_(std::move(et)),
        mu_(mu) {}

  const Matrix& q() const { return q_; }
  const Vector& q_ones() const { return q_ones_; }  // Q*1
  double c() const { return c_; }                   // -1/(1'Q1), always < 0
  const Matrix& et() const { return et_; }          // cached E'
  double mu() const { return mu_; }
  Index k() const { return q_.rows(); }

 private:
  Matrix q_;
  Vector q_ones_;
  double c_;
  Matrix et_;
  double mu_;
};

// Builds the factorization for (E, mu). (E'E + mu*I) is positive definite for
// any E when mu > 0, so the Cholesky factorization cannot fail for sane mu.
inline QuecFactorization quec_prepare(const Matrix& e, double mu) {
  detail::require(mu > 0, "quec_prepare: mu must be > 0");
  detail::require_finite(e, "quec_prepare: E");
  const Index k = e.cols();
  Matrix gram = e.transpose() * e;
  gram.diagonal().array() += mu;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(
        "quec_prepare: Cholesky of (E'E + mu*I) failed; mu = " +
        std::to_string(mu) + ", max diagonal = " +
        std::to_string(gram.diagonal().maxCoeff()) +
        " (condition estimate ~ max_diag/mu = " +
        std::to_string(gram.diagonal().maxCoeff() / mu) + ")");
  }
  Matrix q = llt.solve(Matrix::Identity(k, k));
  q = ((q + q.transpose()) * 0.5).eval();  // keep Q exactly symmetric
  Vector q_ones = q.rowwise().sum();
  const double ones_q_ones = q_ones.sum();
  if (!(ones_q_ones > 0))
    throw NumericalError("quec_prepare: 1'Q1 not positive; factorization invalid");
  return QuecFactorization(std::move(q), std::move(q_ones), -1.0 / ones_q_ones,
                           e.transpose(), mu);
}

// Solves for a precomputed right-hand side R = E'T + mu*G (k x n).
inline Matrix quec_solve_rhs(const QuecFactorization& f, const Matrix& rhs) {
  detail::require(rhs.rows() == f.k(), "quec_solve_rhs: rhs row mismatch");
  Matrix x = f.q() * rhs;
  RowVector corr = f.q_ones().transpose() * rhs;  // q1'R, 1 x n
  corr = (corr.array() - 1.0) * f.c();
  x.noalias() += f.q_ones() * corr;
  return x;
}

// argmin_X 0.5*||T - E*X||^2 + (mu/2)*||X - G||^2  s.t. columns sum to one.
inline Matrix quec_solve(const QuecFactorization& f, const Matrix& t,
                         const Matrix& g) {
  detail::require(t.rows() == f.et().cols(), "quec_solve: T band mismatch");
  detail::require(g.rows() == f.k() && g.cols() == t.cols(),
                  "quec_solve: G shape mismatch");
  Matrix rhs = f.et() * t;
  rhs.noalias() += f.mu() * g;
  return quec_solve_rhs(f, rhs);
}

}  // namespace unmix
