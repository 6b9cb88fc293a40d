#pragma once

// Seeded synthetic data: a spectral library with ground-truth endmembers that
// are sparse convex combinations of its atoms, plus two scene protocols:
//
//   sim1 — a 105x105 image of 49 homogeneous 5x5 squares on a uniformly
//          mixed background (spatial structure, no pure pixels),
//   sim2 — a 100x100 image of Dirichlet-sampled abundances filtered to a
//          maximum pixel purity rho.
//
// Everything is deterministic given the spec's seed.

#include <algorithm>
#include <array>
#include <random>

#include "unmix/types.hpp"

namespace unmix {

namespace detail {

// Stable 64-bit FNV-1a over a string tag, folded into a base seed. Used to
// derive independent substreams (noise vs. abundances vs. bench cells).
inline std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return base + h;
}

// Column sampled uniformly from the probability simplex (normalized unit-rate
// exponentials, i.e. a symmetric Dirichlet with concentration one).
inline Vector dirichlet_uniform(std::mt19937_64& rng, Index k) {
  std::exponential_distribution<double> exp1(1.0);
  Vector v(k);
  for (Index i = 0; i < k; ++i) v[i] = exp1(rng);
  return v / v.sum();
}

// Zero-phase Gaussian smoothing along a length-p signal, truncated at 3 sigma.
inline Vector gaussian_smooth(const Vector& x, double sigma) {
  if (sigma <= 0) return x;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  Vector kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i)
    kernel[i + radius] = std::exp(-0.5 * (i / sigma) * (i / sigma));
  kernel /= kernel.sum();
  const Index p = x.size();
  Vector out(p);
  for (Index i = 0; i < p; ++i) {
    double acc = 0;
    for (int j = -radius; j <= radius; ++j) {
      Index idx = std::clamp<Index>(i + j, 0, p - 1);
      acc += kernel[j + radius] * x[idx];
    }
    out[i] = acc;
  }
  return out;
}

}  // namespace detail

// Synthetic stand-in for a measured spectral library. Atoms come in
// `variability + 1`-sized groups of perturbed/rescaled variants of a base
// spectrum; each ground-truth endmember is a sparse convex combination
// (1 to 3 atoms) drawn from one group. variability = 0 gives singleton
// groups and pure-atom endmembers.
struct SyntheticLibrarySpec {
  Index bands = 224;
  Index atoms = 60;
  Index r = 6;
  double smoothness = 12.0;  // Gaussian kernel width, in bands
  int variability = 9;       // extra variants per base spectrum
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(bands >= 1, "SyntheticLibrarySpec: bands must be >= 1");
    detail::require(r >= 1, "SyntheticLibrarySpec: r must be >= 1");
    detail::require(atoms >= r, "SyntheticLibrarySpec: need atoms >= r");
    detail::require(variability >= 0,
                    "SyntheticLibrarySpec: variability must be >= 0");
    const Index group = variability + 1;
    detail::require(atoms / group >= r,
                    "SyntheticLibrarySpec: too few atoms for r groups of "
                    "variability+1 variants");
  }
};

struct LibraryTruth {
  SpectralLibrary library;     // p x m
  EndmemberMatrix endmembers;  // p x r, equals library * mixing
  MixingMatrix mixing;         // m x r, sparse simplex columns
};

struct SimScene {
  HsiMatrix y;                // noisy observation
  AbundanceMatrix abundances; // exact ground truth, r x n
};

inline LibraryTruth generate_library(const SyntheticLibrarySpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> scale_dist(0.75, 1.25);

  const Index p = spec.bands;
  const Index m = spec.atoms;
  const Index group = spec.variability + 1;
  const Index groups = m / group;  // >= spec.r by validation

  const auto draw_smooth = [&](double amplitude) {
    Vector raw(p);
    for (Index i = 0; i < p; ++i) raw[i] = gauss(rng);
    return Vector(amplitude * detail::gaussian_smooth(raw, spec.smoothness));
  };

  Matrix d(p, m);
  std::vector<std::string> labels(m);
  Index col = 0;
  for (Index g = 0; g < groups; ++g) {
    Vector base = draw_smooth(1.0);
    base.array() -= base.minCoeff();
    const double peak = base.maxCoeff();
    if (peak > 0) base /= peak;
    base = (0.05 + 0.95 * base.array()).matrix();  // peak 1, small floor
    d.col(col) = base;
    labels[col] = "g" + std::to_string(g) + "_v0";
    ++col;
    for (int v = 1; v <= spec.variability; ++v, ++col) {
      Vector variant = scale_dist(rng) * base + draw_smooth(0.03);
      d.col(col) = variant.cwiseMax(0.0);
      labels[col] = "g" + std::to_string(g) + "_v" + std::to_string(v);
    }
  }
  for (; col < m; ++col) {  // leftover atoms: standalone distractors
    Vector s = draw_smooth(1.0);
    s.array() -= s.minCoeff();
    const double peak = s.maxCoeff();
    if (peak > 0) s /= peak;
    d.col(col) = (0.05 + 0.95 * s.array()).matrix();
    labels[col] = "x" + std::to_string(col);
  }

  Matrix b = Matrix::Zero(m, spec.r);
  for (Index j = 0; j < spec.r; ++j) {
    const Index lo = j * group;
    const int max_nnz = static_cast<int>(std::min<Index>(3, group));
    std::uniform_int_distribution<int> nnz_dist(1, max_nnz);
    const int nnz = nnz_dist(rng);
    std::vector<Index> pool(group);
    for (Index i = 0; i < group; ++i) pool[i] = lo + i;
    std::shuffle(pool.begin(), pool.end(), rng);
    const Vector w = detail::dirichlet_uniform(rng, nnz);
    for (int i = 0; i < nnz; ++i) b(pool[i], j) = w[i];
  }

  Matrix e = d * b;
  return LibraryTruth{SpectralLibrary(std::move(d), std::move(labels)),
                      EndmemberMatrix(std::move(e),
                                      EndmemberSource::kComputedFromLibrary),
                      MixingMatrix(std::move(b))};
}

// Adds zero-mean Gaussian noise rescaled so the Frobenius-norm ratio hits
// the requested SNR exactly: 20*log10(||Y||_F / ||N||_F) = snr_db.
// snr_db = +inf returns the input unchanged.
inline HsiMatrix add_noise(const HsiMatrix& y_clean, double snr_db,
                           std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0) return y_clean;
  detail::require(std::isfinite(snr_db), "add_noise: snr_db must be finite or +inf");
  const double signal_norm = y_clean.data().norm();
  detail::require(signal_norm > 0, "add_noise: zero signal has no SNR");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix noise(y_clean.bands(), y_clean.pixels());
  for (Index j = 0; j < noise.cols(); ++j)
    for (Index i = 0; i < noise.rows(); ++i) noise(i, j) = gauss(rng);
  const double target = signal_norm * std::pow(10.0, -snr_db / 20.0);
  noise *= target / noise.norm();

  Matrix out = y_clean.data() + noise;
  if (y_clean.has_shape())
    return HsiMatrix(std::move(out), y_clean.height(), y_clean.width());
  return HsiMatrix(std::move(out));
}

// 105x105 scene of 49 homogeneous 5x5 squares centered in a 7x7 grid of
// 15x15 blocks. Squares 0..44 are the 15 endmember pairs at mixing ratios
// 0.75/0.25, 0.5/0.5, 0.25/0.75; the last four are random mixtures of at
// least three endmembers. Background pixels are the uniform 1/6 mixture, so
// no pixel is pure and no abundance exceeds 0.75.
struct Sim1Spec {
  static constexpr Index kGridSide = 105;
  static constexpr Index kBlock = 15;
  static constexpr Index kSquare = 5;
  static constexpr Index kEndmembers = 6;
  static constexpr Index kSquares = 49;   // 45 binary + 4 higher-order
  static constexpr double kMaxAbundance = 0.75;

  double snr_db = 30.0;
  std::uint64_t seed = 0;
};
static_assert(Sim1Spec::kSquares - 4 ==
              3 * (Sim1Spec::kEndmembers * (Sim1Spec::kEndmembers - 1)) / 2);

inline SimScene generate_sim1(const Sim1Spec& spec,
                              const EndmemberMatrix& endmembers) {
  detail::require(endmembers.count() == Sim1Spec::kEndmembers,
                  "generate_sim1: needs exactly 6 endmembers");
  constexpr Index side = Sim1Spec::kGridSide;
  constexpr Index r = Sim1Spec::kEndmembers;
  const Index n = side * side;

  std::mt19937_64 rng(detail::derive_seed(spec.seed, "sim1-abundances"));

  Matrix a = Matrix::Constant(r, n, 1.0 / static_cast<double>(r));

  std::array<std::pair<int, int>, 15> pairs;
  {
    int k = 0;
    for (int i = 0; i < r; ++i)
      for (int j = i + 1; j < r; ++j) pairs[k++] = {i, j};
  }
  constexpr std::array<std::pair<double, double>, 3> ratios{
      {{0.75, 0.25}, {0.5, 0.5}, {0.25, 0.75}}};

  for (Index sq = 0; sq < Sim1Spec::kSquares; ++sq) {
    Vector col = Vector::Zero(r);
    if (sq < 45) {
      const auto [i, j] = pairs[sq / 3];
      const auto [wi, wj] = ratios[sq % 3];
      col[i] = wi;
      col[j] = wj;
    } else {
      // Higher-order mixture: >= 3 materials, capped at 0.75 by rejection.
      do {
        col = detail::dirichlet_uniform(rng, r);
      } while (col.maxCoeff() > Sim1Spec::kMaxAbundance ||
               (col.array() > 0).count() < 3);
    }
    const Index block_row = sq / 7, block_col = sq % 7;
    const Index row0 = block_row * Sim1Spec::kBlock + 5;
    const Index col0 = block_col * Sim1Spec::kBlock + 5;
    for (Index dr = 0; dr < Sim1Spec::kSquare; ++dr)
      for (Index dc = 0; dc < Sim1Spec::kSquare; ++dc)
        a.col((row0 + dr) * side + (col0 + dc)) = col;
  }

  Matrix y_clean = endmembers.data() * a;
  HsiMatrix clean(std::move(y_clean), side, side);
  HsiMatrix noisy =
      add_noise(clean, spec.snr_db, detail::derive_seed(spec.seed, "sim1-noise"));
  return SimScene{std::move(noisy),
                  AbundanceMatrix(std::move(a), true, true)};
}

// 100x100 scene of symmetric-Dirichlet abundances with pixel purity capped at
// rho: columns whose maximum entry exceeds rho are resampled.
struct Sim2Spec {
  static constexpr Index kHeight = 100;
  static constexpr Index kWidth = 100;
  static constexpr Index kEndmembers = 6;
  static constexpr long kMaxRejections = 1000000;  // per pixel

  double rho = 0.8;  // in (1/6, 1]
  double snr_db = 30.0;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(rho > 1.0 / static_cast<double>(kEndmembers),
                    "Sim2Spec: rho must exceed 1/r");
    detail::require(rho <= 1.0, "Sim2Spec: rho must be <= 1");
  }
};

inline SimScene generate_sim2(const Sim2Spec& spec,
                              const EndmemberMatrix& endmembers) {
  spec.validate();
  detail::require(endmembers.count() == Sim2Spec::kEndmembers,
                  "generate_sim2: needs exactly 6 endmembers");
  constexpr Index r = Sim2Spec::kEndmembers;
  const Index n = Sim2Spec::kHeight * Sim2Spec::kWidth;

  std::mt19937_64 rng(detail::derive_seed(spec.seed, "sim2-abundances"));
  Matrix a(r, n);
  for (Index px = 0; px < n; ++px) {
    long attempts = 0;
    Vector col;
    do {
      if (++attempts > Sim2Spec::kMaxRejections)
        throw NumericalError(
            "generate_sim2: rejection sampling exceeded 1e6 attempts; rho too "
            "close to 1/r");
      col = detail::dirichlet_uniform(rng, r);
    } while (col.maxCoeff() > spec.rho);
    a.col(px) = col;
  }

  Matrix y_clean = endmembers.data() * a;
  HsiMatrix clean(std::move(y_clean), Sim2Spec::kHeight, Sim2Spec::kWidth);
  HsiMatrix noisy =
      add_noise(clean, spec.snr_db, detail::derive_seed(spec.seed, "sim2-noise"));
  return SimScene{std::move(noisy),
                  AbundanceMatrix(std::move(a), true, true)};
}

}  // namespace unmix
