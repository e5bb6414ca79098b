#ifndef ETREE_DATA_HPP_
#define ETREE_DATA_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "etree/common.hpp"
#include "etree/matrix.hpp"
#include "etree/rng.hpp"

namespace etree {

struct Entry {
  index_t row;
  index_t col;
  double value;
  bool operator==(const Entry&) const = default;
};

// Partially observed data matrix stored as coordinate triplets, with
// per-row and per-column observation lists kept consistent with `entries`.
class ObservedMatrix {
 public:
  ObservedMatrix() = default;
  ObservedMatrix(index_t n_rows, index_t n_cols, std::vector<Entry> entries)
      : n_rows_(n_rows), n_cols_(n_cols), entries_(std::move(entries)) {
    rebuild_index();
  }

  index_t n_rows() const { return n_rows_; }
  index_t n_cols() const { return n_cols_; }
  const std::vector<Entry>& entries() const { return entries_; }

  // Observed (col, value) pairs for row i, in entry order.
  const std::vector<std::pair<index_t, double>>& row(index_t i) const {
    return rows_[i];
  }
  // Observed (row, value) pairs for column j, in entry order.
  const std::vector<std::pair<index_t, double>>& col(index_t j) const {
    return cols_[j];
  }

  double mean_value() const {
    require(!entries_.empty(), "mean_value: empty matrix");
    double s = 0.0;
    for (const Entry& e : entries_) s += e.value;
    return s / static_cast<double>(entries_.size());
  }

  bool operator==(const ObservedMatrix& o) const {
    return n_rows_ == o.n_rows_ && n_cols_ == o.n_cols_ && entries_ == o.entries_;
  }

 private:
  void rebuild_index() {
    std::set<std::pair<index_t, index_t>> seen;
    rows_.assign(n_rows_, {});
    cols_.assign(n_cols_, {});
    for (const Entry& e : entries_) {
      if (e.row >= n_rows_ || e.col >= n_cols_)
        throw DataError("index out of range: (" + std::to_string(e.row) + "," +
                        std::to_string(e.col) + ")");
      if (!seen.insert({e.row, e.col}).second)
        throw DataError("duplicate entry at (" + std::to_string(e.row) + "," +
                        std::to_string(e.col) + ")");
      if (!std::isfinite(e.value))
        throw DataError("non-finite value at (" + std::to_string(e.row) + "," +
                        std::to_string(e.col) + ")");
      rows_[e.row].push_back({e.col, e.value});
      cols_[e.col].push_back({e.row, e.value});
    }
  }

  index_t n_rows_ = 0, n_cols_ = 0;
  std::vector<Entry> entries_;
  std::vector<std::vector<std::pair<index_t, double>>> rows_;
  std::vector<std::vector<std::pair<index_t, double>>> cols_;
};

// 1/2 * sum over observed (i,j) of (X(i,j) - A(i,:) . B1(j,:) * d_j)^2,
// accumulated in entry-list order for reproducibility.
inline double masked_objective(const ObservedMatrix& X, const DenseMatrix& A,
                               const DenseMatrix& B1, const DiagonalMatrix& D) {
  require(A.rows() == X.n_rows(), "masked_objective: A row count != N");
  require(B1.rows() == X.n_cols(), "masked_objective: B1 row count != M1");
  require(A.cols() == B1.cols(), "masked_objective: rank mismatch");
  require(D.order() == X.n_cols(), "masked_objective: D order != M1");
  const index_t R = A.cols();
  double obj = 0.0;
  for (const Entry& e : X.entries()) {
    double dot = 0.0;
    const double* a = A.row_ptr(e.row);
    const double* b = B1.row_ptr(e.col);
    for (index_t r = 0; r < R; ++r) dot += a[r] * b[r];
    const double res = e.value - dot * D[e.col];
    if (!std::isfinite(res)) throw NumericError("masked_objective: non-finite residual");
    obj += 0.5 * res * res;
  }
  return obj;
}

enum class Format { kMatrixMarket, kCsvTriplet, kMovieLens };

inline Format parse_format(const std::string& s) {
  if (s == "matrix-market") return Format::kMatrixMarket;
  if (s == "csv-triplet") return Format::kCsvTriplet;
  if (s == "movielens") return Format::kMovieLens;
  throw ContractError("unknown format: " + s);
}

namespace detail {

inline ObservedMatrix load_matrix_market(std::istream& in) {
  std::string line;
  index_t lineno = 0;
  if (!std::getline(in, line)) throw DataError("empty MatrixMarket file");
  ++lineno;
  if (line.rfind("%%MatrixMarket", 0) != 0 ||
      line.find("coordinate") == std::string::npos)
    throw DataError("line 1: not a MatrixMarket coordinate header");
  index_t n = 0, m = 0;
  std::size_t nnz = 0;
  bool have_size = false;
  std::vector<Entry> entries;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ss(line);
    if (!have_size) {
      if (!(ss >> n >> m >> nnz))
        throw DataError("line " + std::to_string(lineno) + ": bad size line");
      have_size = true;
      entries.reserve(nnz);
      continue;
    }
    long long i, j;
    double v;
    if (!(ss >> i >> j >> v))
      throw DataError("line " + std::to_string(lineno) + ": bad entry line");
    if (i < 1 || j < 1)
      throw DataError("line " + std::to_string(lineno) + ": 1-based index < 1");
    entries.push_back({static_cast<index_t>(i - 1), static_cast<index_t>(j - 1), v});
  }
  if (!have_size) throw DataError("MatrixMarket file has no size line");
  if (entries.size() != nnz)
    throw DataError("entry count " + std::to_string(entries.size()) +
                    " != declared " + std::to_string(nnz));
  return ObservedMatrix(n, m, std::move(entries));
}

inline ObservedMatrix load_csv_triplet(std::istream& in) {
  std::string line;
  index_t lineno = 0;
  if (!std::getline(in, line)) throw DataError("empty CSV file");
  ++lineno;
  // tolerate trailing CR from Windows files
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "i,j,value")
    throw DataError("line 1: expected header 'i,j,value'");
  std::vector<Entry> entries;
  index_t max_i = 0, max_j = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long i, j;
    double v;
    char c1, c2;
    if (!(ss >> i >> c1 >> j >> c2 >> v) || c1 != ',' || c2 != ',')
      throw DataError("line " + std::to_string(lineno) + ": bad CSV triplet");
    if (i < 0 || j < 0)
      throw DataError("line " + std::to_string(lineno) + ": negative index");
    max_i = std::max<index_t>(max_i, static_cast<index_t>(i));
    max_j = std::max<index_t>(max_j, static_cast<index_t>(j));
    entries.push_back({static_cast<index_t>(i), static_cast<index_t>(j), v});
  }
  return ObservedMatrix(max_i + 1, max_j + 1, std::move(entries));
}

// MovieLens u.data adapter: tab-separated `user item rating timestamp`,
// 1-based ids remapped densely in order of first appearance.
inline ObservedMatrix load_movielens(std::istream& in) {
  std::string line;
  index_t lineno = 0;
  std::map<long long, index_t> user_ids, item_ids;
  std::vector<Entry> entries;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long u, it, ts;
    double r;
    if (!(ss >> u >> it >> r >> ts))
      throw DataError("line " + std::to_string(lineno) + ": bad u.data line");
    auto ui = user_ids.emplace(u, user_ids.size()).first->second;
    auto ii = item_ids.emplace(it, item_ids.size()).first->second;
    entries.push_back({ui, ii, r});
  }
  return ObservedMatrix(user_ids.size(), item_ids.size(), std::move(entries));
}

}  // namespace detail

inline ObservedMatrix load_coordinate(std::istream& in, Format format) {
  switch (format) {
    case Format::kMatrixMarket: return detail::load_matrix_market(in);
    case Format::kCsvTriplet: return detail::load_csv_triplet(in);
    case Format::kMovieLens: return detail::load_movielens(in);
  }
  throw ContractError("load_coordinate: bad format");
}

inline ObservedMatrix load_coordinate(const std::string& path, Format format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  return load_coordinate(in, format);
}

// Drops columns with fewer than min_count observations and compacts column
// ids. Rows are kept as-is.
inline ObservedMatrix filter_columns(const ObservedMatrix& X, std::size_t min_count) {
  std::vector<index_t> remap(X.n_cols(), static_cast<index_t>(-1));
  index_t kept = 0;
  for (index_t j = 0; j < X.n_cols(); ++j)
    if (X.col(j).size() >= min_count) remap[j] = kept++;
  std::vector<Entry> entries;
  entries.reserve(X.entries().size());
  for (const Entry& e : X.entries())
    if (remap[e.col] != static_cast<index_t>(-1))
      entries.push_back({e.row, remap[e.col], e.value});
  return ObservedMatrix(X.n_rows(), kept, std::move(entries));
}

// v -> ln(v + 1) on every observed value. Values must be nonnegative.
inline ObservedMatrix log_transform(const ObservedMatrix& X) {
  std::vector<Entry> entries = X.entries();
  for (Entry& e : entries) {
    if (e.value < 0.0)
      throw DataError("log_transform: negative value at (" + std::to_string(e.row) +
                      "," + std::to_string(e.col) + ")");
    e.value = std::log1p(e.value);
  }
  return ObservedMatrix(X.n_rows(), X.n_cols(), std::move(entries));
}

struct FoldSplit {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;  // per-entry fold id
  std::uint64_t seed = 0;
};

// Entry-level k-fold partition; fold sizes differ by at most one.
// Deterministic given the seed.
inline FoldSplit split_folds(const ObservedMatrix& X, std::size_t k,
                             std::uint64_t seed) {
  require(k >= 2, "split_folds: k must be >= 2");
  const std::size_t n = X.entries().size();
  require(k <= n, "split_folds: k exceeds entry count");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i-- > 1;) {
    const std::size_t j = rng.uniform_index(i + 1);
    std::swap(perm[i], perm[j]);
  }
  FoldSplit split{k, std::vector<std::size_t>(n, 0), seed};
  for (std::size_t pos = 0; pos < n; ++pos) split.assignments[perm[pos]] = pos % k;
  return split;
}

inline ObservedMatrix select_entries(const ObservedMatrix& X,
                                     const std::vector<bool>& keep) {
  std::vector<Entry> entries;
  for (std::size_t t = 0; t < X.entries().size(); ++t)
    if (keep[t]) entries.push_back(X.entries()[t]);
  return ObservedMatrix(X.n_rows(), X.n_cols(), std::move(entries));
}

// Train/test matrices for one fold of a split.
inline std::pair<ObservedMatrix, ObservedMatrix> fold_train_test(
    const ObservedMatrix& X, const FoldSplit& split, std::size_t fold) {
  std::vector<bool> train_mask(X.entries().size());
  for (std::size_t t = 0; t < train_mask.size(); ++t)
    train_mask[t] = split.assignments[t] != fold;
  std::vector<bool> test_mask = train_mask;
  test_mask.flip();
  return {select_entries(X, train_mask), select_entries(X, test_mask)};
}

// Disjoint (train, validation) split of the entries; validation receives
// ceil(fraction * |entries|) of them.
inline std::pair<ObservedMatrix, ObservedMatrix> holdout_validation(
    const ObservedMatrix& X, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, "holdout_validation: fraction in (0,1)");
  const std::size_t n = X.entries().size();
  const std::size_t n_val = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n)));
  require(n_val >= 1 && n_val < n, "holdout_validation: degenerate split");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i-- > 1;) {
    const std::size_t j = rng.uniform_index(i + 1);
    std::swap(perm[i], perm[j]);
  }
  std::vector<bool> val_mask(n, false);
  for (std::size_t t = 0; t < n_val; ++t) val_mask[perm[t]] = true;
  std::vector<bool> train_mask = val_mask;
  train_mask.flip();
  return {select_entries(X, train_mask), select_entries(X, val_mask)};
}

// Serialize as CSV triplets (the csv-triplet external format).
inline void save_csv_triplet(const ObservedMatrix& X, std::ostream& out) {
  out << "i,j,value\n";
  out.precision(17);
  for (const Entry& e : X.entries())
    out << e.row << "," << e.col << "," << e.value << "\n";
}

}  // namespace etree

#endif  // ETREE_DATA_HPP_
