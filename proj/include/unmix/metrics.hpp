#pragma once

// Evaluation metrics: signal-reconstruction error (dB), spectral angle
// distance (degrees), reconstruction RMSE, and endmember alignment. The
// factorization Y ~ (D*B)*A is only identifiable up to a permutation of the
// endmember index, so estimated endmembers are matched to references by
// minimum total spectral angle before per-endmember metrics are reported.

#include <algorithm>
#include <numeric>

#include "unmix/types.hpp"

namespace unmix {

struct MetricReport {
  double sre_db = 0.0;
  std::vector<double> sad_degrees;  // per endmember, after alignment; may be
                                    // empty when endmembers are unavailable
  double rmse = 0.0;
  std::vector<int> permutation;     // est column matched to each ref column
};

// 20*log10(||A||_F / ||A - A_est||_F); +inf when the estimate is exact.
inline double sre_db(const Matrix& a_true, const Matrix& a_est) {
  detail::require(a_true.rows() == a_est.rows() &&
                      a_true.cols() == a_est.cols(),
                  "sre_db: shape mismatch");
  const double err = (a_true - a_est).norm();
  if (err == 0.0) return kInfinity;
  return 20.0 * std::log10(a_true.norm() / err);
}

inline double sre_db(const AbundanceMatrix& a_true,
                     const AbundanceMatrix& a_est) {
  return sre_db(a_true.data(), a_est.data());
}

// Angle between two spectra in degrees; scale invariant. A zero vector has
// no direction and is reported as a degenerate-endmember error.
inline double sad_degrees(const Vector& e_ref, const Vector& e_est) {
  detail::require(e_ref.size() == e_est.size(), "sad_degrees: length mismatch");
  const double nr = e_ref.norm();
  const double ne = e_est.norm();
  detail::require(nr > 0 && ne > 0, "sad_degrees: degenerate (zero) endmember");
  const double cosine = std::clamp(e_ref.dot(e_est) / (nr * ne), -1.0, 1.0);
  return std::acos(cosine) * 180.0 / M_PI;
}

namespace detail {

inline Matrix sad_cost_matrix(const Matrix& e_ref, const Matrix& e_est) {
  const Index r = e_ref.cols();
  Matrix cost(r, r);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < r; ++j)
      cost(i, j) = sad_degrees(e_ref.col(i), e_est.col(j));
  return cost;
}

}  // namespace detail

// Permutation perm with perm[i] = index of the estimated column assigned to
// reference column i, minimizing total SAD. Exhaustive search up to r = 8;
// greedy assignment refined by pairwise swaps beyond that. Ties resolve to
// the lexicographically smallest permutation.
inline std::vector<int> align_endmembers(const EndmemberMatrix& e_ref,
                                         const EndmemberMatrix& e_est) {
  detail::require(e_ref.bands() == e_est.bands() &&
                      e_ref.count() == e_est.count(),
                  "align_endmembers: shape mismatch");
  const int r = static_cast<int>(e_ref.count());
  detail::require(r <= 12, "align_endmembers: supports at most 12 endmembers");
  const Matrix cost = detail::sad_cost_matrix(e_ref.data(), e_est.data());

  std::vector<int> perm(r);
  std::iota(perm.begin(), perm.end(), 0);

  if (r <= 8) {
    std::vector<int> best = perm;
    double best_total = kInfinity;
    do {
      double total = 0;
      for (int i = 0; i < r; ++i) total += cost(i, perm[i]);
      if (total < best_total) {  // strict: first minimizer in lex order wins
        best_total = total;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }

  // Greedy globally-cheapest assignment.
  std::vector<bool> ref_used(r, false), est_used(r, false);
  for (int step = 0; step < r; ++step) {
    double best = kInfinity;
    int bi = -1, bj = -1;
    for (int i = 0; i < r; ++i) {
      if (ref_used[i]) continue;
      for (int j = 0; j < r; ++j) {
        if (est_used[j]) continue;
        if (cost(i, j) < best) {
          best = cost(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    perm[bi] = bj;
    ref_used[bi] = est_used[bj] = true;
  }
  // 2-opt refinement until no pairwise swap improves the total.
  bool improved = true;
  while (improved) {
    improved = false;
    for (int i = 0; i < r; ++i)
      for (int j = i + 1; j < r; ++j) {
        const double cur = cost(i, perm[i]) + cost(j, perm[j]);
        const double swapped = cost(i, perm[j]) + cost(j, perm[i]);
        if (swapped < cur) {
          std::swap(perm[i], perm[j]);
          improved = true;
        }
      }
  }
  return perm;
}

// sqrt(||Y - E*A||_F^2 / (p*n)).
inline double reconstruction_rmse(const HsiMatrix& y, const EndmemberMatrix& e,
                                  const AbundanceMatrix& a) {
  detail::require(e.bands() == y.bands(), "reconstruction_rmse: band mismatch");
  detail::require(a.rows() == e.count() && a.pixels() == y.pixels(),
                  "reconstruction_rmse: abundance shape mismatch");
  const double pn = static_cast<double>(y.bands() * y.pixels());
  return std::sqrt((y.data() - e.data() * a.data()).squaredNorm() / pn);
}

}  // namespace unmix
