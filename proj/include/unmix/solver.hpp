#pragma once

// Two-block cyclic-descent ADMM for library-based minimum-simplex unmixing.
//
// The solver alternates between
//   A-step: abundances A for fixed endmembers E = D*B, a simplex-constrained
//           least squares solved by ADMM with the split A = S, and
//   B-step: mixing weights B for fixed A, with the two splits B = S1 and
//           D*B = S2, where S2 carries the nonconvex center penalty
//           lambda*||S2 - m*1'||_F^2 pulling endmembers toward the data mean.
// Both equality-constrained subproblems are QuEC solves (see quec.hpp).
// lambda = 0 removes the center penalty (the "fasun" mode).

#include <chrono>
#include <cstdlib>

#include "unmix/quec.hpp"
#include "unmix/types.hpp"

namespace unmix {

// A-block ADMM state: split A = S, scaled multiplier L.
struct AdmmStateA {
  Matrix a;  // r x n, equality-feasible QuEC iterate
  Matrix s;  // r x n, nonnegative split
  Matrix l;  // r x n, scaled multiplier

  static AdmmStateA zero(Index r, Index n) {
    return {Matrix::Zero(r, n), Matrix::Zero(r, n), Matrix::Zero(r, n)};
  }
};

// B-block ADMM state: splits B = S1 (nonnegative) and D*B = S2.
struct AdmmStateB {
  Matrix b;   // m x r
  Matrix s1;  // m x r
  Matrix s2;  // p x r
  Matrix l1;  // m x r
  Matrix l2;  // p x r

  static AdmmStateB zero(Index m, Index r, Index p) {
    return {Matrix::Zero(m, r), Matrix::Zero(m, r), Matrix::Zero(p, r),
            Matrix::Zero(m, r), Matrix::Zero(p, r)};
  }
};

namespace detail {

// t1 iterations of { A <- QuEC; S <- max(0, A+L); L <- L + A - S } with a
// prebuilt factorization and precomputed E'Y.
inline void a_step_iterate(const QuecFactorization& f, const Matrix& ety,
                           AdmmStateA& st, double mu, int t1) {
  Matrix rhs;
  for (int i = 0; i < t1; ++i) {
    rhs = ety + mu * (st.s - st.l);
    st.a = quec_solve_rhs(f, rhs);
    st.s = (st.a + st.l).cwiseMax(0.0);
    st.l += st.a - st.s;
  }
}

inline void a_step_raw(const Matrix& y, const Matrix& e, AdmmStateA& st,
                       double mu, int t1) {
  const QuecFactorization f = quec_prepare(e, mu);
  const Matrix ety = f.et() * y;
  a_step_iterate(f, ety, st, mu, t1);
}

// t2 iterations of the B block. yat = Y*A', aat = A*A' are fixed while A is
// fixed; fd is the library factorization prepared with mu = mu_b1/mu_b2 once
// per solve. The r x r system of the S2 update is factored once per call.
inline void b_step_raw(const Matrix& yat, const Matrix& aat, const Matrix& d,
                       const QuecFactorization& fd, AdmmStateB& st,
                       double mu_b2, double lambda, const Vector& mean,
                       int t2) {
  const Index r = aat.rows();
  Matrix sys = aat;
  sys.diagonal().array() += mu_b2 + lambda;
  const Eigen::LLT<Matrix> s2_llt(sys);
  if (s2_llt.info() != Eigen::Success)
    throw NumericalError("b_step: Cholesky of (A*A' + (mu_b2+lambda)*I) failed");
  Matrix num_fixed = yat;  // Y*A' + lambda*m*1'
  if (lambda != 0.0) num_fixed.noalias() += lambda * mean * RowVector::Ones(r);

  Matrix db(d.rows(), r);
  for (int i = 0; i < t2; ++i) {
    st.b = quec_solve(fd, st.s2 - st.l2, st.s1 - st.l1);
    st.s1 = (st.b + st.l1).cwiseMax(0.0);
    db.noalias() = d * st.b;
    // S2 solves (A*A' + (mu_b2+lambda)*I) S2' = numerator'.
    st.s2 = s2_llt.solve((num_fixed + mu_b2 * (db + st.l2)).transpose())
                .transpose();
    st.l1 += st.b - st.s1;
    st.l2 += db - st.s2;
  }
}

// Columnwise rescale to unit sum. A column with no mass is replaced by the
// uniform vector (the nearest simplex point to zero).
inline Matrix renormalize_columns(Matrix m) {
  const double uniform = 1.0 / static_cast<double>(m.rows());
  for (Index j = 0; j < m.cols(); ++j) {
    const double s = m.col(j).sum();
    if (s > 0)
      m.col(j) /= s;
    else
      m.col(j).setConstant(uniform);
  }
  return m;
}

}  // namespace detail

// Runs t1 inner iterations of the abundance block and returns the updated
// state. Standalone entry point; solve_misisun drives the same loop.
inline AdmmStateA a_step(const HsiMatrix& y, const EndmemberMatrix& e,
                         AdmmStateA state, double mu_a, int t1) {
  detail::require(mu_a > 0, "a_step: mu_a must be > 0");
  detail::require(t1 >= 1, "a_step: t1 must be >= 1");
  detail::require(e.bands() == y.bands(), "a_step: band count mismatch");
  detail::require(state.a.rows() == e.count() && state.a.cols() == y.pixels(),
                  "a_step: state shape mismatch");
  detail::a_step_raw(y.data(), e.data(), state, mu_a, t1);
  return state;
}

// Runs t2 inner iterations of the mixing block and returns the updated state.
inline AdmmStateB b_step(const HsiMatrix& y, const SpectralLibrary& d,
                         const AbundanceMatrix& a, AdmmStateB state,
                         double mu_b1, double mu_b2, double lambda, int t2,
                         const Vector& mean) {
  detail::require(mu_b1 > 0 && mu_b2 > 0, "b_step: mu parameters must be > 0");
  detail::require(lambda >= 0, "b_step: lambda must be >= 0");
  detail::require(t2 >= 1, "b_step: t2 must be >= 1");
  detail::require(d.bands() == y.bands(), "b_step: band count mismatch");
  detail::require(a.pixels() == y.pixels(), "b_step: pixel count mismatch");
  detail::require(mean.size() == y.bands(), "b_step: mean length mismatch");
  detail::require(state.b.rows() == d.atoms() && state.b.cols() == a.rows(),
                  "b_step: state shape mismatch");
  const QuecFactorization fd = quec_prepare(d.data(), mu_b1 / mu_b2);
  const Matrix yat = y.data() * a.data().transpose();
  const Matrix aat = a.data() * a.data().transpose();
  detail::b_step_raw(yat, aat, d.data(), fd, state, mu_b2, lambda, mean, t2);
  return state;
}

// Output shaping knobs. The defaults release the nonnegative split S as the
// abundance estimate and the simplex-renormalized split S1 as the mixing
// estimate; the alternatives exist because either primal iterate is a
// defensible answer and downstream users differ on which they want.
struct SolveOptions {
  // Report the equality-feasible iterate A instead of the nonnegative split S.
  bool report_a_iterate = false;
  // Rescale abundance columns to sum exactly one.
  bool asc_renormalize = false;
  // Renormalize S1 onto the simplex before forming B and E = D*B. Disabling
  // releases the raw split (diagnostic use; feasibility checks are waived).
  bool project_mixing = true;
};

// Full solve: alternates the two blocks for cfg.T outer iterations from the
// zero initialization, logging the objective once per outer iteration.
inline SolveResult solve_misisun(const HsiMatrix& y, const SpectralLibrary& d,
                                 const SolverConfig& cfg,
                                 const SolveOptions& opts = {}) {
  cfg.validate();
  detail::require(d.bands() == y.bands(), "solve_misisun: band count mismatch");
  detail::require(cfg.r <= d.atoms(),
                  "solve_misisun: r exceeds library atom count");
  const auto t_start = std::chrono::steady_clock::now();

  const Index p = y.bands();
  const Index n = y.pixels();
  const Index m = d.atoms();
  const Index r = cfg.r;
  const Vector mean = mean_spectrum(y);

  // The library factorization and the data-mean column are fixed for the
  // whole run; E'Y changes with E = D*B and is rebuilt once per outer
  // iteration inside the A-step.
  const QuecFactorization fd = quec_prepare(d.data(), cfg.mu_b1 / cfg.mu_b2);

  AdmmStateA sa = AdmmStateA::zero(r, n);
  AdmmStateB sb = AdmmStateB::zero(m, r, p);

  std::vector<double> trace;
  trace.reserve(cfg.T);
  Matrix e = Matrix::Zero(p, r);  // D*B with B = 0
  int iterations = 0;
  for (int t = 0; t < cfg.T; ++t) {
    detail::a_step_raw(y.data(), e, sa, cfg.mu_a, cfg.T1);
    if (!sa.a.allFinite() || !sa.s.allFinite())
      throw NumericalError("solve_misisun: abundance block diverged at outer iteration " +
                           std::to_string(t + 1));

    const Matrix yat = y.data() * sa.a.transpose();
    const Matrix aat = sa.a * sa.a.transpose();
    detail::b_step_raw(yat, aat, d.data(), fd, sb, cfg.mu_b2, cfg.lambda, mean,
                       cfg.T2);
    if (!sb.b.allFinite() || !sb.s1.allFinite() || !sb.s2.allFinite())
      throw NumericalError("solve_misisun: mixing block diverged at outer iteration " +
                           std::to_string(t + 1));

    // Objective at the current QuEC iterates (A, B); E doubles as the next
    // A-step's endmember matrix.
    e.noalias() = d.data() * sb.b;
    double obj = 0.5 * (y.data() - e * sa.a).squaredNorm();
    if (cfg.lambda != 0.0) obj += cfg.lambda * (e.colwise() - mean).squaredNorm();
    if (!std::isfinite(obj))
      throw NumericalError("solve_misisun: objective non-finite at outer iteration " +
                           std::to_string(t + 1));
    trace.push_back(obj);
    iterations = t + 1;

    if (cfg.tol_obj > 0 && t >= 10) {
      const double prev = trace[t - 10];
      const double rel = std::abs(prev - obj) /
                         std::max(std::abs(prev), 1e-30);
      if (rel < cfg.tol_obj) break;
    }
  }

  const double a_dev = detail::max_colsum_deviation(sa.s);
  const double b_dev = detail::max_colsum_deviation(sb.s1);

  Matrix a_hat = opts.report_a_iterate ? sa.a : sa.s;
  if (opts.asc_renormalize) a_hat = detail::renormalize_columns(std::move(a_hat));
  const bool a_nonneg = !opts.report_a_iterate;
  const bool a_asc = opts.asc_renormalize ||
                     detail::max_colsum_deviation(a_hat) <= kFeasTolSolver;

  Matrix b_hat = opts.project_mixing ? detail::renormalize_columns(sb.s1)
                                     : sb.s1;
  const double b_tol = opts.project_mixing ? kFeasTolSolver : kInfinity;
  Matrix e_hat = d.data() * b_hat;

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();

  return SolveResult{
      AbundanceMatrix(std::move(a_hat), a_nonneg, a_asc, kFeasTolSolver),
      MixingMatrix(std::move(b_hat), b_tol),
      EndmemberMatrix(std::move(e_hat), EndmemberSource::kComputedFromLibrary),
      std::move(trace),
      iterations,
      wall,
      cfg,
      a_dev,
      b_dev};
}

// lambda = 0 special case; same code path with the center penalty zeroed.
inline SolveResult solve_fasun(const HsiMatrix& y, const SpectralLibrary& d,
                               SolverConfig cfg, const SolveOptions& opts = {}) {
  cfg.lambda = 0.0;
  return solve_misisun(y, d, cfg, opts);
}

// Fully constrained least squares: the A-step alone against fixed endmembers.
// Returns the nonnegative split S.
inline AbundanceMatrix solve_fclsu(const HsiMatrix& y, const EndmemberMatrix& e,
                                   double mu_a, int iters) {
  detail::require(mu_a > 0, "solve_fclsu: mu_a must be > 0");
  detail::require(iters >= 1, "solve_fclsu: iters must be >= 1");
  detail::require(e.bands() == y.bands(), "solve_fclsu: band count mismatch");
  AdmmStateA st = AdmmStateA::zero(e.count(), y.pixels());
  detail::a_step_raw(y.data(), e.data(), st, mu_a, iters);
  if (!st.s.allFinite())
    throw NumericalError("solve_fclsu: iterates diverged");
  const bool asc_ok = detail::max_colsum_deviation(st.s) <= kFeasTolSolver;
  return AbundanceMatrix(std::move(st.s), true, asc_ok, kFeasTolSolver);
}

}  // namespace unmix
