#pragma once

// Core domain types for library-based hyperspectral unmixing.
//
// Matrix orientation is band-major throughout: an image Y is p x n
// (bands x pixels), a library D is p x m (bands x atoms), abundances are
// k x n with columns on the probability simplex, and a mixing matrix B is
// m x r with simplex columns combining library atoms into endmembers E = D*B.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace unmix {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

// Feasibility tolerance for data constructed to be feasible (generators,
// hand-built inputs). Solver outputs satisfy constraints only asymptotically
// and are accepted at the looser kFeasTolSolver.
inline constexpr double kFeasTolConstruct = 1e-9;
inline constexpr double kFeasTolSolver = 1e-6;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Thrown when an iterate or factorization goes non-finite / singular.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown on filesystem or parse failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite())
    throw std::invalid_argument(what + " contains non-finite entries");
}

// Max over columns of |sum(col) - 1|.
inline double max_colsum_deviation(const Matrix& m) {
  if (m.cols() == 0) return 0.0;
  return (m.colwise().sum().array() - 1.0).abs().maxCoeff();
}

}  // namespace detail

// Observed hyperspectral image, p bands x n pixels, with an optional
// (height, width) spatial layout satisfying height*width = n.
class HsiMatrix {
 public:
  explicit HsiMatrix(Matrix data) : data_(std::move(data)) {
    validate();
  }

  HsiMatrix(Matrix data, Index height, Index width)
      : data_(std::move(data)), height_(height), width_(width) {
    validate();
    detail::require(height >= 1 && width >= 1 && height * width == data_.cols(),
                    "HsiMatrix: spatial shape must satisfy height*width = pixel count");
  }

  const Matrix& data() const { return data_; }
  Index bands() const { return data_.rows(); }
  Index pixels() const { return data_.cols(); }
  bool has_shape() const { return height_ > 0; }
  Index height() const { return height_; }
  Index width() const { return width_; }

 private:
  void validate() const {
    detail::require(data_.rows() >= 1 && data_.cols() >= 1,
                    "HsiMatrix: needs at least one band and one pixel");
    detail::require_finite(data_, "HsiMatrix");
  }

  Matrix data_;
  Index height_ = 0;
  Index width_ = 0;
};

// Dictionary of candidate endmember spectra, p bands x m atoms.
class SpectralLibrary {
 public:
  explicit SpectralLibrary(Matrix data, std::vector<std::string> labels = {})
      : data_(std::move(data)), labels_(std::move(labels)) {
    detail::require(data_.rows() >= 1 && data_.cols() >= 1,
                    "SpectralLibrary: empty dictionary");
    detail::require_finite(data_, "SpectralLibrary");
    detail::require(labels_.empty() ||
                        static_cast<Index>(labels_.size()) == data_.cols(),
                    "SpectralLibrary: label count must match atom count");
  }

  const Matrix& data() const { return data_; }
  Index bands() const { return data_.rows(); }
  Index atoms() const { return data_.cols(); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  Matrix data_;
  std::vector<std::string> labels_;
};

// Fractional abundances, k x n. k = r for low-rank models, k = m for sparse
// library-coefficient baselines. The flags state which constraints the
// producer actually enforced; they are validated at construction.
class AbundanceMatrix {
 public:
  AbundanceMatrix(Matrix data, bool nonneg_enforced, bool asc_enforced,
                  double feas_tol = kFeasTolConstruct)
      : data_(std::move(data)),
        nonneg_enforced_(nonneg_enforced),
        asc_enforced_(asc_enforced) {
    detail::require(data_.rows() >= 1 && data_.cols() >= 1,
                    "AbundanceMatrix: empty matrix");
    detail::require_finite(data_, "AbundanceMatrix");
    if (nonneg_enforced_)
      detail::require(data_.minCoeff() >= -feas_tol,
                      "AbundanceMatrix: negative entry under nonneg_enforced");
    if (asc_enforced_)
      detail::require(detail::max_colsum_deviation(data_) <= feas_tol,
                      "AbundanceMatrix: column sum off 1 under asc_enforced");
  }

  const Matrix& data() const { return data_; }
  Index rows() const { return data_.rows(); }
  Index pixels() const { return data_.cols(); }
  bool nonneg_enforced() const { return nonneg_enforced_; }
  bool asc_enforced() const { return asc_enforced_; }

 private:
  Matrix data_;
  bool nonneg_enforced_;
  bool asc_enforced_;
};

// m x r matrix whose columns are simplex weights combining library atoms
// into endmembers.
class MixingMatrix {
 public:
  explicit MixingMatrix(Matrix data, double feas_tol = kFeasTolConstruct)
      : data_(std::move(data)) {
    detail::require(data_.rows() >= 1 && data_.cols() >= 1,
                    "MixingMatrix: empty matrix");
    detail::require_finite(data_, "MixingMatrix");
    detail::require(data_.minCoeff() >= -feas_tol,
                    "MixingMatrix: negative entry");
    detail::require(detail::max_colsum_deviation(data_) <= feas_tol,
                    "MixingMatrix: column sums must be 1");
  }

  const Matrix& data() const { return data_; }
  Index atoms() const { return data_.rows(); }
  Index endmembers() const { return data_.cols(); }

 private:
  Matrix data_;
};

enum class EndmemberSource {
  kGiven,               // supplied by the caller
  kComputedFromLibrary  // E = D*B from a solve
};

// p x r endmember signatures.
class EndmemberMatrix {
 public:
  explicit EndmemberMatrix(Matrix data,
                           EndmemberSource source = EndmemberSource::kGiven)
      : data_(std::move(data)), source_(source) {
    detail::require(data_.rows() >= 1 && data_.cols() >= 1,
                    "EndmemberMatrix: empty matrix");
    detail::require_finite(data_, "EndmemberMatrix");
  }

  const Matrix& data() const { return data_; }
  Index bands() const { return data_.rows(); }
  Index count() const { return data_.cols(); }
  EndmemberSource source() const { return source_; }

 private:
  Matrix data_;
  EndmemberSource source_;
};

// All hyperparameters of the two-block solver. Defaults are the simulated-data
// settings (T=10000 outer iterations, five inner iterations per block,
// mu_a=50, mu_b1=2, mu_b2=1, lambda=0.3).
struct SolverConfig {
  int r = 0;             // endmember count (required)
  int T = 10000;         // outer iterations
  int T1 = 5;            // inner iterations of the abundance block
  int T2 = 5;            // inner iterations of the mixing block
  double mu_a = 50.0;    // AL parameter of the abundance split
  double mu_b1 = 2.0;    // AL parameter of the B = S1 split
  double mu_b2 = 1.0;    // AL parameter of the D*B = S2 split
  double lambda = 0.3;   // center-penalty weight, >= 0
  std::uint64_t seed = 0;  // recorded for provenance; the solver itself is
                           // deterministic (zero initialization)
  double tol_obj = 0.0;  // relative objective-change stop over a 10-iteration
                         // window; 0 disables early stopping

  void validate() const {
    detail::require(r >= 1, "SolverConfig: r must be >= 1");
    detail::require(T >= 1 && T1 >= 1 && T2 >= 1,
                    "SolverConfig: iteration counts must be >= 1");
    detail::require(mu_a > 0 && mu_b1 > 0 && mu_b2 > 0,
                    "SolverConfig: AL parameters must be > 0");
    detail::require(lambda >= 0, "SolverConfig: lambda must be >= 0");
    detail::require(tol_obj >= 0, "SolverConfig: tol_obj must be >= 0");
  }
};

struct SolveResult {
  AbundanceMatrix abundances;  // r x n
  MixingMatrix mixing;         // m x r
  EndmemberMatrix endmembers;  // p x r, equals D * mixing
  std::vector<double> objective_trace;  // one value per outer iteration
  int iterations_run = 0;
  double wall_time_seconds = 0.0;
  SolverConfig config;  // resolved configuration echo
  // Residual feasibility of the raw iterates before any renormalization:
  // max over columns of |sum - 1| for the abundance split and the B split.
  double abundance_colsum_dev = 0.0;
  double mixing_colsum_dev = 0.0;
};

// Per-band mean of the observed pixels, m = (1/n) * Y * 1.
inline Vector mean_spectrum(const HsiMatrix& y) {
  return y.data().rowwise().mean();
}

// Evaluates 0.5*||Y - D*B*A||_F^2 + lambda*||D*B - m*1'||_F^2 with m the
// per-band pixel mean. b and a are raw iterates (they need not be feasible).
inline double objective_misisun(const HsiMatrix& y, const SpectralLibrary& d,
                                const Matrix& b, const Matrix& a,
                                double lambda) {
  detail::require(lambda >= 0, "objective_misisun: lambda must be >= 0");
  detail::require(d.bands() == y.bands(),
                  "objective_misisun: library band count mismatch");
  detail::require(b.rows() == d.atoms(),
                  "objective_misisun: B row count must equal atom count");
  detail::require(a.rows() == b.cols(),
                  "objective_misisun: A row count must equal B column count");
  detail::require(a.cols() == y.pixels(),
                  "objective_misisun: A pixel count mismatch");
  const Matrix e = d.data() * b;
  const double data_term = 0.5 * (y.data() - e * a).squaredNorm();
  if (lambda == 0.0) return data_term;
  const Vector m = mean_spectrum(y);
  const double center_term = (e.colwise() - m).squaredNorm();
  return data_term + lambda * center_term;
}

}  // namespace unmix
