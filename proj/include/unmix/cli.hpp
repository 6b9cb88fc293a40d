#pragma once

// Batch command-line front end.
//
//   unmix generate sim1|sim2|library  write a synthetic dataset bundle
//   unmix unmix                       run misisun|fasun|fclsu|sunsal on a bundle
//   unmix eval                        score estimates against ground truth
//   unmix bench                       sweep (algo, condition, repeat) cells to CSV
//
// Exit codes: 0 success, 2 usage/validation, 3 I/O failure, 4 numerical
// failure. Every run writes a manifest with the echoed command line and the
// fully resolved configuration, so a run can be reproduced exactly.

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <mutex>
#include <thread>

#include "unmix/baselines.hpp"
#include "unmix/dataio.hpp"
#include "unmix/metrics.hpp"
#include "unmix/simulate.hpp"
#include "unmix/solver.hpp"

namespace unmix::cli {

inline constexpr const char* kToolName = "unmix";
inline constexpr const char* kToolVersion = "0.1.0";

namespace detail {

using unmix::detail::derive_seed;
using unmix::detail::format_double;

inline std::string now_iso8601_utc() {
  const std::time_t tt =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string join_args(const std::vector<std::string>& args) {
  std::string s = kToolName;
  for (const auto& a : args) {
    s += ' ';
    s += a;
  }
  return s;
}

// Manifest written when a run starts and rewritten when it finishes.
class Manifest {
 public:
  Manifest(fs::path path, const std::vector<std::string>& args)
      : path_(std::move(path)) {
    set("tool", kToolName);
    set("version", kToolVersion);
    set("command", join_args(args));
  }

  void set(const std::string& key, const std::string& value) {
    kvs_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) {
    set(key, format_double(value));
  }
  void set(const std::string& key, std::int64_t value) {
    set(key, std::to_string(value));
  }
  void set(const std::string& key, std::uint64_t value) {
    set(key, std::to_string(value));
  }
  void set(const std::string& key, int value) {
    set(key, std::to_string(value));
  }
  void set(const std::string& key, bool value) {
    set(key, std::string(value ? "true" : "false"));
  }

  void start() {
    if (!path_.parent_path().empty())
      fs::create_directories(path_.parent_path());
    KeyValues kvs = kvs_;
    kvs.emplace_back("started_at", now_iso8601_utc());
    kvs.emplace_back("status", "running");
    write_key_values(kvs, path_);
    started_at_ = now_iso8601_utc();
  }

  void finish(bool ok, double wall_seconds) {
    KeyValues kvs = kvs_;
    kvs.emplace_back("started_at", started_at_);
    kvs.emplace_back("finished_at", now_iso8601_utc());
    kvs.emplace_back("wall_seconds", format_double(wall_seconds));
    kvs.emplace_back("status", ok ? "ok" : "error");
    write_key_values(kvs, path_);
  }

 private:
  fs::path path_;
  KeyValues kvs_;
  std::string started_at_;
};

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

inline std::string fmt_fixed(double v, int digits = 6) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline std::string fmt_short(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string kind;  // sim1 | sim2 | library
  std::string out;
  std::uint64_t seed = 0;
  double snr_db = 30.0;
  double rho = 0.8;
  Index bands = 224;
  Index atoms = 60;
  Index r = 6;
  int variability = 9;
  double smoothness = 12.0;
  std::vector<std::string> argv_echo;
};

inline int cmd_generate(const GenerateArgs& a) {
  detail::Manifest manifest(fs::path(a.out) / "manifest.txt", a.argv_echo);
  manifest.set("generator", a.kind);
  manifest.set("out", a.out);
  manifest.set("seed", a.seed);
  manifest.set("bands", static_cast<std::int64_t>(a.bands));
  manifest.set("atoms", static_cast<std::int64_t>(a.atoms));
  manifest.set("variability", a.variability);
  manifest.set("smoothness", a.smoothness);

  SyntheticLibrarySpec lib_spec;
  lib_spec.bands = a.bands;
  lib_spec.atoms = a.atoms;
  lib_spec.r = (a.kind == "library") ? a.r : Index{6};
  lib_spec.smoothness = a.smoothness;
  lib_spec.variability = a.variability;
  lib_spec.seed = detail::derive_seed(a.seed, "library");
  manifest.set("r", static_cast<std::int64_t>(lib_spec.r));
  if (a.kind != "library") manifest.set("snr_db", a.snr_db);
  if (a.kind == "sim2") {
    manifest.set("rho", a.rho);
    Sim2Spec{a.rho, a.snr_db, a.seed}.validate();  // fail before any writes
  }
  lib_spec.validate();

  detail::Stopwatch watch;
  manifest.start();

  const LibraryTruth lib = generate_library(lib_spec);
  DatasetBundle bundle;
  bundle.library = lib.library;
  bundle.e_true = lib.endmembers;
  bundle.b_true = lib.mixing;
  KeyValues meta;
  meta.emplace_back("generator", a.kind);
  meta.emplace_back("version", kToolVersion);
  meta.emplace_back("p", std::to_string(lib_spec.bands));
  meta.emplace_back("m", std::to_string(lib_spec.atoms));
  meta.emplace_back("r", std::to_string(lib_spec.r));
  meta.emplace_back("seed", std::to_string(a.seed));

  if (a.kind == "sim1") {
    const SimScene scene = generate_sim1(Sim1Spec{a.snr_db, a.seed}, lib.endmembers);
    meta.emplace_back("n", std::to_string(scene.y.pixels()));
    meta.emplace_back("height", std::to_string(scene.y.height()));
    meta.emplace_back("width", std::to_string(scene.y.width()));
    meta.emplace_back("snr_db", detail::format_double(a.snr_db));
    bundle.y = scene.y;
    bundle.a_true = scene.abundances.data();
  } else if (a.kind == "sim2") {
    const SimScene scene =
        generate_sim2(Sim2Spec{a.rho, a.snr_db, a.seed}, lib.endmembers);
    meta.emplace_back("n", std::to_string(scene.y.pixels()));
    meta.emplace_back("height", std::to_string(scene.y.height()));
    meta.emplace_back("width", std::to_string(scene.y.width()));
    meta.emplace_back("snr_db", detail::format_double(a.snr_db));
    meta.emplace_back("rho", detail::format_double(a.rho));
    bundle.y = scene.y;
    bundle.a_true = scene.abundances.data();
  }
  bundle.meta = std::move(meta);
  write_bundle(bundle, a.out);

  manifest.finish(true, watch.seconds());
  std::cout << "generator = " << a.kind << "\n"
            << "out = " << a.out << "\n"
            << "wall_seconds = " << detail::fmt_fixed(watch.seconds(), 3)
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// unmix

struct UnmixArgs {
  std::string algo;  // misisun | fasun | fclsu | sunsal
  std::string in;
  std::string out;
  std::string endmembers_path;  // fclsu only
  std::string preset;           // "" or "quick"
  int r = 0;                    // 0: take from bundle meta
  bool t_given = false;
  int T = 0;
  int t1 = 5;
  int t2 = 5;
  double mu_a = 50.0;
  double mu_b1 = 2.0;
  double mu_b2 = 1.0;
  bool lambda_given = false;
  double lambda = 0.0;
  double tol_obj = 0.0;
  std::uint64_t seed = 0;
  bool asc_renormalize = false;
  bool report_a_iterate = false;
  bool no_project_mixing = false;
  double sunsal_mu = 0.1;
  bool sunsal_asc = false;
  std::vector<std::string> argv_echo;
};

namespace detail {

inline int resolve_iterations(const UnmixArgs& a) {
  if (a.t_given) return a.T;
  if (a.preset == "quick") return 1000;
  if (a.algo == "misisun" || a.algo == "fasun") return 10000;
  return 2000;  // fclsu / sunsal default iteration budget
}

inline double resolve_lambda(const UnmixArgs& a) {
  if (a.algo == "fasun") return 0.0;
  if (a.lambda_given) return a.lambda;
  return (a.algo == "sunsal") ? 1e-3 : 0.3;
}

}  // namespace detail

inline int cmd_unmix(const UnmixArgs& a) {
  const fs::path out_dir(a.out);
  detail::Manifest manifest(out_dir / "manifest.txt", a.argv_echo);

  BundleNeeds needs;
  needs.library = (a.algo != "fclsu") || a.endmembers_path.empty();
  const DatasetBundle bundle = read_bundle(a.in, needs);
  const HsiMatrix& y = *bundle.y;

  int r = a.r;
  if (r == 0 && a.algo != "sunsal") {
    const std::string* meta_r = find_key(bundle.meta, "r");
    unmix::detail::require(meta_r != nullptr,
                           "--r is required (bundle meta has no r)");
    r = std::stoi(*meta_r);
  }

  const int iters = detail::resolve_iterations(a);
  const double lambda = detail::resolve_lambda(a);
  if (a.algo == "fasun" && a.lambda_given && a.lambda != 0.0)
    std::cerr << "note: --algo fasun forces lambda = 0\n";

  manifest.set("algo", a.algo);
  manifest.set("in", a.in);
  manifest.set("out", a.out);
  manifest.set("r", r);
  manifest.set("seed", a.seed);
  manifest.set("preset", a.preset.empty() ? "none" : a.preset);

  detail::Stopwatch watch;
  fs::create_directories(out_dir);
  KeyValues summary;
  summary.emplace_back("algo", a.algo);

  if (a.algo == "misisun" || a.algo == "fasun") {
    SolverConfig cfg;
    cfg.r = r;
    cfg.T = iters;
    cfg.T1 = a.t1;
    cfg.T2 = a.t2;
    cfg.mu_a = a.mu_a;
    cfg.mu_b1 = a.mu_b1;
    cfg.mu_b2 = a.mu_b2;
    cfg.lambda = lambda;
    cfg.seed = a.seed;
    cfg.tol_obj = a.tol_obj;
    cfg.validate();
    SolveOptions opts;
    opts.asc_renormalize = a.asc_renormalize;
    opts.report_a_iterate = a.report_a_iterate;
    opts.project_mixing = !a.no_project_mixing;

    manifest.set("T", cfg.T);
    manifest.set("t1", cfg.T1);
    manifest.set("t2", cfg.T2);
    manifest.set("mu_a", cfg.mu_a);
    manifest.set("mu_b1", cfg.mu_b1);
    manifest.set("mu_b2", cfg.mu_b2);
    manifest.set("lambda", cfg.lambda);
    manifest.set("tol_obj", cfg.tol_obj);
    manifest.set("asc_renormalize", opts.asc_renormalize);
    manifest.set("report_a_iterate", opts.report_a_iterate);
    manifest.set("project_mixing", opts.project_mixing);
    manifest.start();

    const SolveResult res = solve_misisun(y, *bundle.library, cfg, opts);

    write_matrix(res.abundances.data(), out_dir / "A_est.csv");
    write_matrix(res.mixing.data(), out_dir / "B_est.csv");
    write_matrix(res.endmembers.data(), out_dir / "E_est.csv");
    Matrix trace(static_cast<Index>(res.objective_trace.size()), 1);
    for (Index i = 0; i < trace.rows(); ++i)
      trace(i, 0) = res.objective_trace[i];
    write_matrix(trace, out_dir / "objective_trace.csv");

    summary.emplace_back("iterations_run", std::to_string(res.iterations_run));
    summary.emplace_back("objective_first",
                         detail::format_double(res.objective_trace.front()));
    summary.emplace_back("objective_last",
                         detail::format_double(res.objective_trace.back()));
    summary.emplace_back("abundance_colsum_dev",
                         detail::format_double(res.abundance_colsum_dev));
    summary.emplace_back("mixing_colsum_dev",
                         detail::format_double(res.mixing_colsum_dev));
    summary.emplace_back("wall_seconds",
                         detail::fmt_fixed(res.wall_time_seconds, 3));
  } else if (a.algo == "fclsu") {
    std::optional<EndmemberMatrix> e;
    if (!a.endmembers_path.empty())
      e.emplace(read_matrix(a.endmembers_path));
    else if (bundle.e_true)
      e = bundle.e_true;
    else
      throw std::invalid_argument(
          "fclsu requires endmembers: pass --endmembers PATH or a bundle with "
          "E_true.csv");
    unmix::detail::require(e->count() == r,
                           "fclsu: endmember count does not match --r");
    manifest.set("iters", iters);
    manifest.set("mu_a", a.mu_a);
    manifest.start();

    const AbundanceMatrix abund = solve_fclsu(y, *e, a.mu_a, iters);
    write_matrix(abund.data(), out_dir / "A_est.csv");
    summary.emplace_back("iterations_run", std::to_string(iters));
    summary.emplace_back(
        "abundance_colsum_dev",
        detail::format_double(
            unmix::detail::max_colsum_deviation(abund.data())));
    summary.emplace_back("wall_seconds", detail::fmt_fixed(watch.seconds(), 3));
  } else if (a.algo == "sunsal") {
    SunsalConfig cfg;
    cfg.lambda_l1 = lambda;
    cfg.mu = a.sunsal_mu;
    cfg.iters = iters;
    cfg.enforce_asc = a.sunsal_asc;
    cfg.validate();
    manifest.set("iters", cfg.iters);
    manifest.set("lambda_l1", cfg.lambda_l1);
    manifest.set("mu", cfg.mu);
    manifest.set("enforce_asc", cfg.enforce_asc);
    manifest.set("enforce_anc", cfg.enforce_anc);
    manifest.start();

    const AbundanceMatrix abund = solve_sunsal(y, *bundle.library, cfg);
    write_matrix(abund.data(), out_dir / "A_est.csv");
    summary.emplace_back("iterations_run", std::to_string(cfg.iters));
    summary.emplace_back("wall_seconds", detail::fmt_fixed(watch.seconds(), 3));
  } else {
    throw std::invalid_argument("unknown algorithm: " + a.algo);
  }

  manifest.finish(true, watch.seconds());
  for (const auto& [k, v] : summary) std::cout << k << " = " << v << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string est;
  std::string truth;
  bool align = false;
  std::vector<std::string> argv_echo;
};

inline int cmd_eval(const EvalArgs& a) {
  const fs::path est_dir(a.est);
  unmix::detail::require(fs::exists(est_dir / "A_est.csv"),
                         "eval: " + (est_dir / "A_est.csv").string() +
                             " not found");
  Matrix a_est = read_matrix(est_dir / "A_est.csv");

  BundleNeeds needs;
  needs.y = false;
  needs.library = false;
  needs.a_true = true;
  const DatasetBundle truth = read_bundle(a.truth, needs);
  Matrix a_true = *truth.a_true;

  std::optional<Matrix> e_est;
  if (fs::exists(est_dir / "E_est.csv"))
    e_est = read_matrix(est_dir / "E_est.csv");

  MetricReport rep;

  // Estimates in library-coefficient space are scored against the ground
  // truth lifted by the true mixing weights: X_true = B_true * A_true.
  if (a_est.rows() != a_true.rows()) {
    unmix::detail::require(
        truth.b_true && a_est.rows() == truth.b_true->atoms() &&
            a_true.rows() == truth.b_true->endmembers(),
        "eval: abundance shape mismatch (" + std::to_string(a_est.rows()) +
            " vs " + std::to_string(a_true.rows()) + " rows)");
    a_true = truth.b_true->data() * a_true;
  }
  unmix::detail::require(a_est.cols() == a_true.cols(),
                         "eval: abundance pixel count mismatch");

  std::optional<Matrix> e_true;
  if (truth.e_true) e_true = truth.e_true->data();

  if (a.align) {
    unmix::detail::require(
        e_est && e_true && e_est->cols() == e_true->cols() &&
            e_est->cols() == a_est.rows(),
        "eval: --align requires matching E_est.csv and E_true.csv");
    const auto perm = align_endmembers(EndmemberMatrix(*e_true),
                                       EndmemberMatrix(*e_est));
    Matrix e_aligned(e_est->rows(), e_est->cols());
    Matrix a_aligned(a_est.rows(), a_est.cols());
    for (Index i = 0; i < static_cast<Index>(perm.size()); ++i) {
      e_aligned.col(i) = e_est->col(perm[i]);
      a_aligned.row(i) = a_est.row(perm[i]);
    }
    *e_est = std::move(e_aligned);
    a_est = std::move(a_aligned);
    rep.permutation = perm;
  } else {
    rep.permutation.resize(a_est.rows());
    std::iota(rep.permutation.begin(), rep.permutation.end(), 0);
  }

  rep.sre_db = sre_db(a_true, a_est);

  if (e_est && e_true && e_est->cols() == e_true->cols()) {
    for (Index j = 0; j < e_true->cols(); ++j)
      rep.sad_degrees.push_back(sad_degrees(e_true->col(j), e_est->col(j)));
  }

  if (truth.y && e_est && e_est->cols() == a_est.rows()) {
    rep.rmse = reconstruction_rmse(
        *truth.y, EndmemberMatrix(*e_est),
        AbundanceMatrix(a_est, false, false));
  } else if (truth.y && truth.library &&
             truth.library->atoms() == a_est.rows()) {
    // Library-space estimate: reconstruct through D.
    rep.rmse = reconstruction_rmse(*truth.y,
                                   EndmemberMatrix(truth.library->data()),
                                   AbundanceMatrix(a_est, false, false));
  }

  const KeyValues kvs = metric_report_to_key_values(rep);
  write_key_values(kvs, est_dir / "metrics.txt");
  for (const auto& [k, v] : kvs) std::cout << k << " = " << v << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string suite;  // sim1 | sim2
  std::vector<std::string> algos;
  std::vector<double> snr_list;
  std::vector<double> rho_list;
  int repeats = 5;
  std::string out;
  std::uint64_t seed = 0;
  double snr_db = 30.0;  // fixed noise level for the sim2 purity sweep
  Index bands = 224;
  Index atoms = 60;
  int variability = 9;
  double smoothness = 12.0;
  int T = 1000;  // misisun/fasun outer iterations (desk-scale default)
  int t1 = 5;
  int t2 = 5;
  double mu_a = 50.0;
  double mu_b1 = 2.0;
  double mu_b2 = 1.0;
  double lambda = 0.3;
  double sunsal_lambda = 1e-3;
  double sunsal_mu = 0.1;
  int sunsal_iters = 2000;
  int fclsu_iters = 2000;
  std::vector<std::string> argv_echo;
};

namespace detail {

struct BenchCell {
  std::string algo;
  std::string condition;  // "snr=20" or "rho=0.7"
  double value = 0.0;
  int repeat = 0;
  std::uint64_t seed = 0;
};

struct BenchRow {
  BenchCell cell;
  double sre = 0.0;
  double rmse = 0.0;
  double wall = 0.0;
};

inline BenchRow run_bench_cell(const BenchArgs& a, const BenchCell& cell,
                               const LibraryTruth& lib) {
  SimScene scene = (a.suite == "sim1")
                       ? generate_sim1(Sim1Spec{cell.value, cell.seed},
                                       lib.endmembers)
                       : generate_sim2(Sim2Spec{cell.value, a.snr_db, cell.seed},
                                       lib.endmembers);

  BenchRow row{cell, 0.0, 0.0, 0.0};
  Stopwatch watch;
  if (cell.algo == "misisun" || cell.algo == "fasun") {
    SolverConfig cfg;
    cfg.r = static_cast<int>(lib.endmembers.count());
    cfg.T = a.T;
    cfg.T1 = a.t1;
    cfg.T2 = a.t2;
    cfg.mu_a = a.mu_a;
    cfg.mu_b1 = a.mu_b1;
    cfg.mu_b2 = a.mu_b2;
    cfg.lambda = (cell.algo == "fasun") ? 0.0 : a.lambda;
    cfg.seed = cell.seed;
    const SolveResult res = solve_misisun(scene.y, lib.library, cfg);
    row.wall = watch.seconds();
    // The factorization is only defined up to an endmember permutation;
    // match estimated endmembers to the truth before scoring abundances.
    const auto perm = align_endmembers(lib.endmembers, res.endmembers);
    Matrix a_aligned(res.abundances.rows(), res.abundances.pixels());
    for (Index i = 0; i < a_aligned.rows(); ++i)
      a_aligned.row(i) = res.abundances.data().row(perm[i]);
    row.sre = sre_db(scene.abundances.data(), a_aligned);
    row.rmse = reconstruction_rmse(scene.y, res.endmembers, res.abundances);
  } else if (cell.algo == "fclsu") {
    const AbundanceMatrix est =
        solve_fclsu(scene.y, lib.endmembers, a.mu_a, a.fclsu_iters);
    row.wall = watch.seconds();
    row.sre = sre_db(scene.abundances, est);
    row.rmse = reconstruction_rmse(scene.y, lib.endmembers, est);
  } else if (cell.algo == "sunsal") {
    SunsalConfig cfg;
    cfg.lambda_l1 = a.sunsal_lambda;
    cfg.mu = a.sunsal_mu;
    cfg.iters = a.sunsal_iters;
    const AbundanceMatrix est = solve_sunsal(scene.y, lib.library, cfg);
    row.wall = watch.seconds();
    // Score in library-coefficient space against X_true = B_true * A_true.
    const Matrix x_true = lib.mixing.data() * scene.abundances.data();
    row.sre = sre_db(x_true, est.data());
    row.rmse = reconstruction_rmse(scene.y,
                                   EndmemberMatrix(lib.library.data()), est);
  }
  return row;
}

}  // namespace detail

inline int cmd_bench(const BenchArgs& a) {
  unmix::detail::require(a.suite == "sim1" || a.suite == "sim2",
                         "bench: --suite must be sim1 or sim2");
  unmix::detail::require(!a.algos.empty(), "bench: --algos is required");
  for (const auto& algo : a.algos)
    unmix::detail::require(algo == "misisun" || algo == "fasun" ||
                               algo == "fclsu" || algo == "sunsal",
                           "bench: unknown algorithm '" + algo + "'");
  unmix::detail::require(a.repeats >= 1, "bench: --repeats must be >= 1");
  const std::vector<double>& conditions =
      (a.suite == "sim1") ? a.snr_list : a.rho_list;
  unmix::detail::require(!conditions.empty(),
                         a.suite == "sim1" ? "bench: sim1 needs --snr-list"
                                           : "bench: sim2 needs --rho-list");
  const char* cond_key = (a.suite == "sim1") ? "snr" : "rho";

  const fs::path out_path(a.out);
  detail::Manifest manifest(fs::path(a.out + ".manifest.txt"), a.argv_echo);
  manifest.set("suite", a.suite);
  manifest.set("seed", a.seed);
  manifest.set("repeats", a.repeats);
  manifest.set("T", a.T);
  manifest.set("lambda", a.lambda);
  manifest.set("snr_db", a.snr_db);
  manifest.set("sunsal_lambda", a.sunsal_lambda);
  manifest.set("sunsal_iters", a.sunsal_iters);
  detail::Stopwatch watch;
  manifest.start();

  SyntheticLibrarySpec lib_spec;
  lib_spec.bands = a.bands;
  lib_spec.atoms = a.atoms;
  lib_spec.r = 6;
  lib_spec.smoothness = a.smoothness;
  lib_spec.variability = a.variability;
  lib_spec.seed = detail::derive_seed(a.seed, "library");
  const LibraryTruth lib = generate_library(lib_spec);

  std::vector<detail::BenchCell> cells;
  for (const auto& algo : a.algos)
    for (double value : conditions)
      for (int rep = 0; rep < a.repeats; ++rep) {
        detail::BenchCell cell;
        cell.algo = algo;
        cell.condition =
            std::string(cond_key) + "=" + detail::fmt_short(value);
        cell.value = value;
        cell.repeat = rep;
        cell.seed = detail::derive_seed(
            a.seed, cell.algo + "|" + cell.condition + "|" +
                        std::to_string(rep));
        cells.push_back(std::move(cell));
      }

  std::vector<detail::BenchRow> rows(cells.size());
  const char* env = std::getenv("UNMIX_THREADS");
  const int max_threads = env ? std::max(1, std::atoi(env)) : 1;
  const int threads =
      std::min<int>(max_threads, static_cast<int>(cells.size()));
  if (threads > 1) {
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mutex;
    auto worker = [&] {
      for (size_t i; (i = next.fetch_add(1)) < cells.size();) {
        try {
          rows[i] = detail::run_bench_cell(a, cells[i], lib);
        } catch (...) {
          std::scoped_lock lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  } else {
    for (size_t i = 0; i < cells.size(); ++i)
      rows[i] = detail::run_bench_cell(a, cells[i], lib);
  }

  // Raw rows.
  std::string csv =
      "algo,suite,condition,repeat,seed,sre_db,rmse,wall_seconds\n";
  for (const auto& row : rows) {
    csv += row.cell.algo + "," + a.suite + "," + row.cell.condition + "," +
           std::to_string(row.cell.repeat) + "," +
           std::to_string(row.cell.seed) + "," + detail::fmt_fixed(row.sre) +
           "," + detail::fmt_fixed(row.rmse, 8) + "," +
           detail::fmt_fixed(row.wall, 3) + "\n";
  }
  unmix::detail::write_text_atomic(out_path, csv);

  // Aggregate mean/stddev per (algo, condition), in first-seen order.
  struct Agg {
    std::vector<double> sre, rmse, wall;
  };
  std::vector<std::pair<std::string, Agg>> groups;
  for (const auto& row : rows) {
    const std::string key = row.cell.algo + "," + row.cell.condition;
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first == key; });
    if (it == groups.end()) {
      groups.emplace_back(key, Agg{});
      it = std::prev(groups.end());
    }
    it->second.sre.push_back(row.sre);
    it->second.rmse.push_back(row.rmse);
    it->second.wall.push_back(row.wall);
  }
  const auto mean_of = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const auto std_of = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };
  fs::path agg_path = out_path;
  agg_path.replace_extension();
  agg_path += "_agg";
  agg_path += out_path.extension();
  std::string agg_csv =
      "algo,condition,repeats,sre_db_mean,sre_db_std,rmse_mean,rmse_std,"
      "wall_seconds_mean,wall_seconds_std\n";
  for (const auto& [key, agg] : groups) {
    agg_csv += key + "," + std::to_string(agg.sre.size()) + "," +
               detail::fmt_fixed(mean_of(agg.sre)) + "," +
               detail::fmt_fixed(std_of(agg.sre)) + "," +
               detail::fmt_fixed(mean_of(agg.rmse), 8) + "," +
               detail::fmt_fixed(std_of(agg.rmse), 8) + "," +
               detail::fmt_fixed(mean_of(agg.wall), 3) + "," +
               detail::fmt_fixed(std_of(agg.wall), 3) + "\n";
  }
  unmix::detail::write_text_atomic(agg_path, agg_csv);

  manifest.finish(true, watch.seconds());
  std::cout << "cells = " << rows.size() << "\n"
            << "out = " << out_path.string() << "\n"
            << "aggregate = " << agg_path.string() << "\n"
            << "wall_seconds = " << detail::fmt_fixed(watch.seconds(), 3)
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// argument wiring

inline int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Library-based hyperspectral unmixing toolkit"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  GenerateArgs gen;
  gen.argv_echo = args;
  auto* generate = app.add_subcommand("generate",
                                      "Write a synthetic dataset bundle");
  generate->require_subcommand(1);
  const auto add_gen_common = [&](CLI::App* sub, bool with_snr) {
    sub->add_option("--out", gen.out, "Output bundle directory")->required();
    sub->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
    if (with_snr)
      sub->add_option("--snr", gen.snr_db,
                      "Target SNR in dB ('inf' for noise-free)")
          ->capture_default_str();
    sub->add_option("--bands", gen.bands, "Library band count")
        ->capture_default_str();
    sub->add_option("--atoms", gen.atoms, "Library atom count")
        ->capture_default_str();
    sub->add_option("--variability", gen.variability,
                    "Perturbed variants per base spectrum")
        ->capture_default_str();
    sub->add_option("--smoothness", gen.smoothness,
                    "Spectral smoothing width in bands")
        ->capture_default_str();
  };
  auto* gen_sim1 = generate->add_subcommand(
      "sim1", "49-square scene with spatial structure");
  add_gen_common(gen_sim1, true);
  auto* gen_sim2 = generate->add_subcommand(
      "sim2", "Dirichlet scene with bounded pixel purity");
  add_gen_common(gen_sim2, true);
  gen_sim2->add_option("--rho", gen.rho, "Maximum pixel purity, in (1/6, 1]")
      ->required();
  auto* gen_lib =
      generate->add_subcommand("library", "Library-only bundle (no scene)");
  add_gen_common(gen_lib, false);
  gen_lib->add_option("--r", gen.r, "Ground-truth endmember count")
      ->capture_default_str();

  UnmixArgs ux;
  ux.argv_echo = args;
  auto* unmix_cmd =
      app.add_subcommand("unmix", "Run an unmixing algorithm on a bundle");
  unmix_cmd
      ->add_option("--algo", ux.algo, "misisun | fasun | fclsu | sunsal")
      ->required()
      ->check(CLI::IsMember({"misisun", "fasun", "fclsu", "sunsal"}));
  unmix_cmd->add_option("--in", ux.in, "Input bundle directory")->required();
  unmix_cmd->add_option("--out", ux.out, "Output directory")->required();
  unmix_cmd->add_option("--r", ux.r, "Endmember count (default: bundle meta)");
  auto* t_opt = unmix_cmd->add_option(
      "--T", ux.T, "Outer iterations (misisun/fasun, default 10000) or "
                   "iteration budget (fclsu/sunsal, default 2000)");
  unmix_cmd->add_option("--t1", ux.t1, "Inner iterations, abundance block")
      ->capture_default_str();
  unmix_cmd->add_option("--t2", ux.t2, "Inner iterations, mixing block")
      ->capture_default_str();
  unmix_cmd->add_option("--mu-a", ux.mu_a, "AL parameter of the A split")
      ->capture_default_str();
  unmix_cmd->add_option("--mu-b1", ux.mu_b1, "AL parameter of the B split")
      ->capture_default_str();
  unmix_cmd->add_option("--mu-b2", ux.mu_b2, "AL parameter of the D*B split")
      ->capture_default_str();
  auto* lambda_opt = unmix_cmd->add_option(
      "--lambda", ux.lambda,
      "Center-penalty weight (misisun, default 0.3) or l1 weight (sunsal, "
      "default 1e-3)");
  unmix_cmd->add_option("--tol-obj", ux.tol_obj,
                        "Relative objective-change early stop (0 disables)")
      ->capture_default_str();
  unmix_cmd->add_option("--seed", ux.seed, "Recorded provenance seed")
      ->capture_default_str();
  unmix_cmd->add_option("--preset", ux.preset, "quick: T=1000")
      ->check(CLI::IsMember({"quick"}));
  unmix_cmd->add_flag("--asc-renormalize", ux.asc_renormalize,
                      "Rescale abundance columns to sum exactly one");
  unmix_cmd->add_flag("--report-a-iterate", ux.report_a_iterate,
                      "Report the equality-feasible iterate A instead of the "
                      "nonnegative split S");
  unmix_cmd->add_flag("--no-project-mixing", ux.no_project_mixing,
                      "Keep the raw mixing split instead of renormalizing "
                      "onto the simplex");
  unmix_cmd->add_option("--endmembers", ux.endmembers_path,
                        "Endmember CSV for fclsu (default: bundle E_true.csv)");
  unmix_cmd->add_option("--mu", ux.sunsal_mu, "SUnSAL AL parameter")
      ->capture_default_str();
  unmix_cmd->add_flag("--sunsal-asc", ux.sunsal_asc,
                      "Enforce the sum-to-one constraint in SUnSAL");

  EvalArgs ev;
  ev.argv_echo = args;
  auto* eval_cmd =
      app.add_subcommand("eval", "Score estimates against ground truth");
  eval_cmd->add_option("--est", ev.est, "Directory with A_est.csv")
      ->required();
  eval_cmd->add_option("--truth", ev.truth, "Bundle with A_true.csv")
      ->required();
  eval_cmd->add_flag("--align", ev.align,
                     "Match estimated endmembers to references by minimum "
                     "total spectral angle before scoring");

  BenchArgs bn;
  bn.argv_echo = args;
  auto* bench_cmd = app.add_subcommand(
      "bench", "Sweep (algo, condition, repeat) cells and emit CSV");
  bench_cmd->add_option("--suite", bn.suite, "sim1 | sim2")->required();
  bench_cmd
      ->add_option("--algos", bn.algos,
                   "Comma-separated algorithm list")
      ->required()
      ->delimiter(',');
  bench_cmd->add_option("--snr-list", bn.snr_list, "SNR conditions (sim1)")
      ->delimiter(',');
  bench_cmd->add_option("--rho-list", bn.rho_list, "Purity conditions (sim2)")
      ->delimiter(',');
  bench_cmd->add_option("--repeats", bn.repeats, "Seeded repeats per cell")
      ->capture_default_str();
  bench_cmd->add_option("--out", bn.out, "Results CSV path")->required();
  bench_cmd->add_option("--seed", bn.seed, "Base seed")->capture_default_str();
  bench_cmd->add_option("--snr", bn.snr_db, "Fixed SNR for sim2 cells")
      ->capture_default_str();
  bench_cmd->add_option("--bands", bn.bands, "Library band count")
      ->capture_default_str();
  bench_cmd->add_option("--atoms", bn.atoms, "Library atom count")
      ->capture_default_str();
  bench_cmd->add_option("--variability", bn.variability,
                        "Variants per base spectrum")
      ->capture_default_str();
  bench_cmd->add_option("--smoothness", bn.smoothness,
                        "Spectral smoothing width in bands")
      ->capture_default_str();
  bench_cmd->add_option("--T", bn.T, "misisun/fasun outer iterations")
      ->capture_default_str();
  bench_cmd->add_option("--lambda", bn.lambda, "misisun center penalty")
      ->capture_default_str();
  bench_cmd->add_option("--sunsal-lambda", bn.sunsal_lambda,
                        "SUnSAL l1 weight")
      ->capture_default_str();
  bench_cmd->add_option("--sunsal-iters", bn.sunsal_iters, "SUnSAL iterations")
      ->capture_default_str();
  bench_cmd->add_option("--fclsu-iters", bn.fclsu_iters, "FCLSU iterations")
      ->capture_default_str();

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back(kToolName);
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the error message
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) {
      if (gen_sim1->parsed()) gen.kind = "sim1";
      if (gen_sim2->parsed()) gen.kind = "sim2";
      if (gen_lib->parsed()) gen.kind = "library";
      return cmd_generate(gen);
    }
    if (unmix_cmd->parsed()) {
      ux.t_given = t_opt->count() > 0;
      ux.lambda_given = lambda_opt->count() > 0;
      return cmd_unmix(ux);
    }
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (bench_cmd->parsed()) return cmd_bench(bn);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  }
  return 2;
}

}  // namespace unmix::cli
