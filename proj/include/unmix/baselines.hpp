#pragma once

// Sparse-regression baseline: SUnSAL, the l1-penalized library-coefficient
// unmixer solved by ADMM with the split X = Z,
//
//   min_X 0.5*||Y - D*X||_F^2 + lambda*||X||_1   s.t. X >= 0 (optional),
//                                                     1'X = 1' (optional).
//
// Without the sum-to-one constraint the X update is a plain ridge solve;
// with it, the update is the QuEC closed form. The Z update is elementwise
// soft-thresholding, clamped at zero when nonnegativity is enforced.

#include "unmix/quec.hpp"
#include "unmix/types.hpp"

namespace unmix {

struct SunsalConfig {
  double lambda_l1 = 1e-3;  // l1 weight, >= 0
  double mu = 0.1;          // AL parameter, > 0
  int iters = 2000;
  bool enforce_asc = false;  // sum-to-one; with l1 active these conflict
  bool enforce_anc = true;   // nonnegativity

  void validate() const {
    detail::require(lambda_l1 >= 0, "SunsalConfig: lambda_l1 must be >= 0");
    detail::require(mu > 0, "SunsalConfig: mu must be > 0");
    detail::require(iters >= 1, "SunsalConfig: iters must be >= 1");
  }
};

// Elementwise shrink(v, tau) = sign(v) * max(|v| - tau, 0).
inline Matrix soft_threshold(const Matrix& v, double tau) {
  return v.array().sign() * (v.array().abs() - tau).max(0.0);
}

// Returns the split iterate Z (m x n).
inline AbundanceMatrix solve_sunsal(const HsiMatrix& y,
                                    const SpectralLibrary& d,
                                    const SunsalConfig& cfg) {
  cfg.validate();
  detail::require(d.bands() == y.bands(), "solve_sunsal: band count mismatch");
  const Index m = d.atoms();
  const Index n = y.pixels();
  const double tau = cfg.lambda_l1 / cfg.mu;

  const Matrix dty = d.data().transpose() * y.data();

  // Ridge system for the unconstrained X update; QuEC factorization when the
  // sum-to-one constraint is on.
  Eigen::LLT<Matrix> ridge;
  std::optional<QuecFactorization> fq;
  if (cfg.enforce_asc) {
    fq.emplace(quec_prepare(d.data(), cfg.mu));
  } else {
    Matrix gram = d.data().transpose() * d.data();
    gram.diagonal().array() += cfg.mu;
    ridge.compute(gram);
    if (ridge.info() != Eigen::Success)
      throw NumericalError("solve_sunsal: Cholesky of (D'D + mu*I) failed");
  }

  Matrix x(m, n);
  Matrix z = Matrix::Zero(m, n);
  Matrix u = Matrix::Zero(m, n);
  for (int it = 0; it < cfg.iters; ++it) {
    const Matrix rhs = dty + cfg.mu * (z - u);
    x = cfg.enforce_asc ? quec_solve_rhs(*fq, rhs) : ridge.solve(rhs);
    z = soft_threshold(x + u, tau);
    if (cfg.enforce_anc) z = z.cwiseMax(0.0);
    u += x - z;
  }
  if (!z.allFinite()) throw NumericalError("solve_sunsal: iterates diverged");

  const bool asc_ok =
      cfg.enforce_asc && detail::max_colsum_deviation(z) <= kFeasTolSolver;
  return AbundanceMatrix(std::move(z), cfg.enforce_anc, asc_ok, kFeasTolSolver);
}

}  // namespace unmix
