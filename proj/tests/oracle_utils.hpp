#pragma once

// Independent reference implementations used as test oracles. Everything here
// is deliberately written with plain scalar loops and its own Gaussian
// elimination so it shares no solver code with the library under test.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Naive triple-loop matrix product.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j) {
      double acc = 0;
      for (Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

// Gaussian elimination with partial pivoting; solves A X = B.
inline Matrix gauss_solve(Matrix a, Matrix b) {
  const Index n = a.rows();
  if (a.cols() != n || b.rows() != n) throw std::invalid_argument("gauss_solve");
  for (Index col = 0; col < n; ++col) {
    Index piv = col;
    for (Index i = col + 1; i < n; ++i)
      if (std::abs(a(i, col)) > std::abs(a(piv, col))) piv = i;
    if (a(piv, col) == 0.0) throw std::runtime_error("gauss_solve: singular");
    if (piv != col) {
      for (Index j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
      for (Index j = 0; j < b.cols(); ++j) std::swap(b(col, j), b(piv, j));
    }
    for (Index i = col + 1; i < n; ++i) {
      const double f = a(i, col) / a(col, col);
      if (f == 0.0) continue;
      for (Index j = col; j < n; ++j) a(i, j) -= f * a(col, j);
      for (Index j = 0; j < b.cols(); ++j) b(i, j) -= f * b(col, j);
    }
  }
  Matrix x = Matrix::Zero(n, b.cols());
  for (Index j = 0; j < b.cols(); ++j)
    for (Index i = n - 1; i >= 0; --i) {
      double acc = b(i, j);
      for (Index k = i + 1; k < n; ++k) acc -= a(i, k) * x(k, j);
      x(i, j) = acc / a(i, i);
    }
  return x;
}

inline Matrix gauss_inverse(const Matrix& a) {
  return gauss_solve(a, Matrix::Identity(a.rows(), a.rows()));
}

// Reference solver for the column-sum-constrained quadratic program
//   min 0.5*||t - E x||^2 + (mu/2)*||x - g||^2  s.t. sum(x) = 1
// via the bordered (k+1) x (k+1) KKT system, one dense solve per column.
inline Matrix bordered_kkt_solve(const Matrix& e, double mu, const Matrix& t,
                                 const Matrix& g) {
  const Index k = e.cols();
  const Index n = t.cols();
  Matrix kkt = Matrix::Zero(k + 1, k + 1);
  const Matrix gram = matmul(e.transpose(), e);
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) kkt(i, j) = gram(i, j);
    kkt(i, i) += mu;
    kkt(i, k) = 1.0;
    kkt(k, i) = 1.0;
  }
  const Matrix ett = matmul(e.transpose(), t);
  Matrix rhs(k + 1, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < k; ++i) rhs(i, j) = ett(i, j) + mu * g(i, j);
    rhs(k, j) = 1.0;
  }
  const Matrix sol = gauss_solve(kkt, rhs);
  return sol.topRows(k);
}

// Lawson-Hanson active-set nonnegative least squares for a single rhs.
inline Vector nnls(const Matrix& d, const Vector& y, double tol = 1e-12,
                   int max_iter = 1000) {
  const Index m = d.cols();
  Vector x = Vector::Zero(m);
  std::vector<bool> passive(m, false);
  for (int iter = 0; iter < max_iter; ++iter) {
    const Vector w = d.transpose() * (y - d * x);
    Index best = -1;
    double best_w = tol;
    for (Index i = 0; i < m; ++i)
      if (!passive[i] && w[i] > best_w) {
        best_w = w[i];
        best = i;
      }
    if (best < 0) break;
    passive[best] = true;
    while (true) {
      std::vector<Index> pidx;
      for (Index i = 0; i < m; ++i)
        if (passive[i]) pidx.push_back(i);
      Matrix dp(d.rows(), static_cast<Index>(pidx.size()));
      for (size_t c = 0; c < pidx.size(); ++c) dp.col(c) = d.col(pidx[c]);
      const Matrix normal = matmul(dp.transpose(), dp);
      const Matrix rhs = matmul(dp.transpose(), y);
      const Vector z = gauss_solve(normal, rhs).col(0);
      double zmin = 1.0;
      for (Index c = 0; c < z.size(); ++c) zmin = std::min(zmin, z[c]);
      if (zmin > 0) {
        x.setZero();
        for (size_t c = 0; c < pidx.size(); ++c) x[pidx[c]] = z[c];
        break;
      }
      double alpha = 1.0;
      for (size_t c = 0; c < pidx.size(); ++c)
        if (z[c] <= 0) {
          const double xi = x[pidx[c]];
          alpha = std::min(alpha, xi / (xi - z[c]));
        }
      for (size_t c = 0; c < pidx.size(); ++c) {
        x[pidx[c]] += alpha * (z[c] - x[pidx[c]]);
        if (x[pidx[c]] <= tol) {
          x[pidx[c]] = 0;
          passive[pidx[c]] = false;
        }
      }
    }
  }
  return x;
}

// Uniform draw from the probability simplex via sorted-uniform spacings;
// independent of the exponential-normalization route in the library.
inline Vector dirichlet_spacings(std::mt19937_64& rng, Index k) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> cuts(k + 1);
  cuts.front() = 0.0;
  cuts.back() = 1.0;
  for (Index i = 1; i < k; ++i) cuts[i] = unif(rng);
  std::sort(cuts.begin(), cuts.end());
  Vector v(k);
  for (Index i = 0; i < k; ++i) v[i] = cuts[i + 1] - cuts[i];
  return v;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    const double fa = static_cast<double>(i) / a.size();
    const double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

// Two-pass row means: sum, divide, then one correction pass.
inline Vector two_pass_row_means(const Matrix& y) {
  const Index p = y.rows(), n = y.cols();
  Vector m(p);
  for (Index i = 0; i < p; ++i) {
    double acc = 0;
    for (Index j = 0; j < n; ++j) acc += y(i, j);
    double mean = acc / static_cast<double>(n);
    double corr = 0;
    for (Index j = 0; j < n; ++j) corr += y(i, j) - mean;
    m[i] = mean + corr / static_cast<double>(n);
  }
  return m;
}

// Scalar-loop evaluations of the metrics and objective.
inline double naive_frob_sq(const Matrix& a) {
  double acc = 0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) acc += a(i, j) * a(i, j);
  return acc;
}

inline double naive_objective(const Matrix& y, const Matrix& d,
                              const Matrix& b, const Matrix& a, double lambda) {
  const Matrix e = matmul(d, b);
  const Matrix resid = y - matmul(e, a);
  double obj = 0.5 * naive_frob_sq(resid);
  Vector mean(y.rows());
  for (Index i = 0; i < y.rows(); ++i) {
    double acc = 0;
    for (Index j = 0; j < y.cols(); ++j) acc += y(i, j);
    mean[i] = acc / static_cast<double>(y.cols());
  }
  double pen = 0;
  for (Index i = 0; i < e.rows(); ++i)
    for (Index j = 0; j < e.cols(); ++j) {
      const double dev = e(i, j) - mean[i];
      pen += dev * dev;
    }
  return obj + lambda * pen;
}

inline double naive_sre_db(const Matrix& a, const Matrix& a_hat) {
  const double err = naive_frob_sq(a - a_hat);
  if (err == 0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(std::sqrt(naive_frob_sq(a) / err));
}

inline double naive_rmse(const Matrix& y, const Matrix& e, const Matrix& a) {
  const Matrix resid = y - matmul(e, a);
  return std::sqrt(naive_frob_sq(resid) /
                   static_cast<double>(y.rows() * y.cols()));
}

// Deterministic random matrices for test instances.
inline Matrix randn(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = gauss(rng);
  return m;
}

}  // namespace oracle
