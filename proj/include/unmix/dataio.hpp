#pragma once

// On-disk formats.
//
//   *.csv      dense matrix, one row per line, comma separated, '#' comment
//              lines, values printed with 17 significant digits so a
//              write/read round trip is bit exact.
//   meta.txt   flat `key = value` record describing a dataset bundle.
//   bundle     directory holding Y.csv, D.csv and optional A_true.csv,
//              E_true.csv, B_true.csv next to meta.txt.
//
// Writes go through a temp file renamed into place, so readers never see a
// partially written file.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "unmix/metrics.hpp"
#include "unmix/types.hpp"

namespace unmix {

namespace fs = std::filesystem;

using KeyValues = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("rename failed for " + path.string() + ": " + ec.message());
  }
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline void write_matrix(const Matrix& m, const fs::path& path) {
  std::string text;
  text.reserve(static_cast<size_t>(m.size()) * 20);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) text += ',';
      text += detail::format_double(m(i, j));
    }
    text += '\n';
  }
  detail::write_text_atomic(path, text);
}

inline Matrix read_matrix(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<double> row;
    size_t pos = 0;
    while (pos <= t.size()) {
      const size_t comma = t.find(',', pos);
      const std::string tok = detail::trim(
          t.substr(pos, comma == std::string::npos ? std::string::npos
                                                   : comma - pos));
      const char* begin = tok.c_str();
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (tok.empty() || end != begin + tok.size())
        throw IoError(path.string() + ":" + std::to_string(line_no) +
                      ": not a number: '" + tok + "'");
      row.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError(path.string() + ":" + std::to_string(line_no) +
                    ": ragged row (" + std::to_string(row.size()) +
                    " values, expected " + std::to_string(rows.front().size()) +
                    ")");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path.string() + ": no data rows");
  Matrix m(static_cast<Index>(rows.size()),
           static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

inline void write_key_values(const KeyValues& kvs, const fs::path& path) {
  std::string text;
  for (const auto& [k, v] : kvs) text += k + " = " + v + "\n";
  detail::write_text_atomic(path, text);
}

inline KeyValues read_key_values(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  KeyValues kvs;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw IoError(path.string() + ":" + std::to_string(line_no) +
                    ": expected 'key = value'");
    kvs.emplace_back(detail::trim(t.substr(0, eq)),
                     detail::trim(t.substr(eq + 1)));
  }
  return kvs;
}

inline const std::string* find_key(const KeyValues& kvs,
                                   const std::string& key) {
  for (const auto& [k, v] : kvs)
    if (k == key) return &v;
  return nullptr;
}

// Dataset bundle: the observation, the library, and whatever ground truth the
// generator produced.
struct DatasetBundle {
  std::optional<HsiMatrix> y;
  std::optional<SpectralLibrary> library;
  std::optional<Matrix> a_true;  // r x n (low rank) or m x n (library space)
  std::optional<EndmemberMatrix> e_true;
  std::optional<MixingMatrix> b_true;
  KeyValues meta;
};

// Which bundle pieces the caller requires; absent-but-present optional files
// are always loaded.
struct BundleNeeds {
  bool y = true;
  bool library = true;
  bool a_true = false;
  bool e_true = false;
  bool b_true = false;
};

namespace detail {

inline long meta_long(const KeyValues& meta, const std::string& key, long fallback) {
  const std::string* v = find_key(meta, key);
  return v ? std::stol(*v) : fallback;
}

inline void cross_check(const KeyValues& meta, const std::string& key,
                        Index actual, const std::string& what) {
  const std::string* v = find_key(meta, key);
  if (!v) return;
  const long expect = std::stol(*v);
  if (expect != actual)
    throw std::invalid_argument("bundle meta " + key + " = " + *v +
                                " does not match " + what + " = " +
                                std::to_string(actual));
}

}  // namespace detail

inline void write_bundle(const DatasetBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  if (bundle.y) write_matrix(bundle.y->data(), dir / "Y.csv");
  if (bundle.library) write_matrix(bundle.library->data(), dir / "D.csv");
  if (bundle.a_true) write_matrix(*bundle.a_true, dir / "A_true.csv");
  if (bundle.e_true) write_matrix(bundle.e_true->data(), dir / "E_true.csv");
  if (bundle.b_true) write_matrix(bundle.b_true->data(), dir / "B_true.csv");
  write_key_values(bundle.meta, dir / "meta.txt");
}

inline DatasetBundle read_bundle(const fs::path& dir,
                                 const BundleNeeds& needs = {}) {
  if (!fs::is_directory(dir))
    throw std::invalid_argument("bundle directory not found: " + dir.string());
  DatasetBundle b;
  if (fs::exists(dir / "meta.txt")) b.meta = read_key_values(dir / "meta.txt");

  const auto want = [&](const char* file, bool needed) {
    const fs::path p = dir / file;
    if (fs::exists(p)) return true;
    if (needed)
      throw std::invalid_argument("bundle is missing required file " +
                                  std::string(file) + " in " + dir.string());
    return false;
  };

  if (want("Y.csv", needs.y)) {
    Matrix y = read_matrix(dir / "Y.csv");
    detail::cross_check(b.meta, "p", y.rows(), "Y.csv rows");
    detail::cross_check(b.meta, "n", y.cols(), "Y.csv columns");
    const long h = detail::meta_long(b.meta, "height", 0);
    const long w = detail::meta_long(b.meta, "width", 0);
    if (h > 0 && w > 0)
      b.y.emplace(std::move(y), h, w);
    else
      b.y.emplace(std::move(y));
  }
  if (want("D.csv", needs.library)) {
    Matrix d = read_matrix(dir / "D.csv");
    detail::cross_check(b.meta, "p", d.rows(), "D.csv rows");
    detail::cross_check(b.meta, "m", d.cols(), "D.csv columns");
    if (b.y && d.rows() != b.y->bands())
      throw std::invalid_argument("bundle D.csv band count " +
                                  std::to_string(d.rows()) +
                                  " does not match Y.csv band count " +
                                  std::to_string(b.y->bands()));
    b.library.emplace(std::move(d));
  }
  if (want("A_true.csv", needs.a_true)) {
    b.a_true = read_matrix(dir / "A_true.csv");
    if (b.y && b.a_true->cols() != b.y->pixels())
      throw std::invalid_argument("bundle A_true.csv pixel count mismatch");
  }
  if (want("E_true.csv", needs.e_true)) {
    Matrix e = read_matrix(dir / "E_true.csv");
    detail::cross_check(b.meta, "r", e.cols(), "E_true.csv columns");
    b.e_true.emplace(std::move(e));
  }
  if (want("B_true.csv", needs.b_true)) {
    // Ground-truth mixing weights are constructed feasible; accept at the
    // construction tolerance.
    b.b_true.emplace(read_matrix(dir / "B_true.csv"));
  }
  return b;
}

inline KeyValues metric_report_to_key_values(const MetricReport& rep) {
  KeyValues kvs;
  const auto fmt = [](double v) {
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  kvs.emplace_back("sre_db", fmt(rep.sre_db));
  for (size_t i = 0; i < rep.sad_degrees.size(); ++i)
    kvs.emplace_back("sad_deg_" + std::to_string(i), fmt(rep.sad_degrees[i]));
  if (!rep.sad_degrees.empty()) {
    double mean = 0;
    for (double v : rep.sad_degrees) mean += v;
    kvs.emplace_back("sad_deg_mean", fmt(mean / rep.sad_degrees.size()));
  }
  kvs.emplace_back("rmse", fmt(rep.rmse));
  if (!rep.permutation.empty()) {
    std::string p;
    for (size_t i = 0; i < rep.permutation.size(); ++i) {
      if (i) p += ',';
      p += std::to_string(rep.permutation[i]);
    }
    kvs.emplace_back("permutation", p);
  }
  return kvs;
}

}  // namespace unmix
