// Dataset ingestion and persistence: CSV loading, the GSMX binary matrix
// format, column standardization, block splitting, and seeded one-pass
// batch iteration. Rows are samples, columns are features, all reals are
// 64-bit.
#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "gstiefel/dense.hpp"

namespace gstiefel {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Feature partition into m >= 1 contiguous blocks; sum of widths must match
/// the feature count of the matrix it is applied to.
struct BlockSpec {
  std::vector<Index> block_dims;

  Index count() const { return static_cast<Index>(block_dims.size()); }
  Index total() const {
    return std::accumulate(block_dims.begin(), block_dims.end(), Index{0});
  }
  Index min_dim() const {
    return *std::min_element(block_dims.begin(), block_dims.end());
  }

  void validate() const {
    if (block_dims.empty()) throw std::invalid_argument("BlockSpec: no blocks");
    for (Index d : block_dims)
      if (d < 1) throw std::invalid_argument("BlockSpec: block widths must be >= 1");
  }
};

namespace detail {

inline bool parse_double(std::string_view cell, double& out) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return cells;
}

}  // namespace detail

/// Loads a rectangular numeric CSV (comma delimited, '.' decimal). A
/// non-numeric first row is treated as a header and skipped. Errors carry
/// the offending line and column.
inline Matrix load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_csv: cannot open '" + path + "'");

  std::vector<std::vector<double>> rows;
  std::string line;
  Index line_no = 0;
  Index expected_cols = -1;
  bool first_data_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_cells(line);
    std::vector<double> row(cells.size());
    bool all_numeric = true;
    Index bad_col = -1;
    for (size_t c = 0; c < cells.size(); ++c) {
      if (!detail::parse_double(cells[c], row[c])) {
        all_numeric = false;
        bad_col = static_cast<Index>(c) + 1;
        break;
      }
    }
    if (!all_numeric) {
      if (first_data_row) continue;  // header row
      throw DataFormatError("load_csv: non-numeric cell at line " +
                            std::to_string(line_no) + ", column " +
                            std::to_string(bad_col) + " of '" + path + "'");
    }
    first_data_row = false;
    if (expected_cols < 0) expected_cols = static_cast<Index>(row.size());
    if (static_cast<Index>(row.size()) != expected_cols)
      throw DataFormatError("load_csv: ragged row at line " + std::to_string(line_no) +
                            " (" + std::to_string(row.size()) + " cells, expected " +
                            std::to_string(expected_cols) + ") in '" + path + "'");
    for (double v : row)
      if (!std::isfinite(v))
        throw DataFormatError("load_csv: non-finite value at line " +
                              std::to_string(line_no) + " of '" + path + "'");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataFormatError("load_csv: no data rows in '" + path + "'");

  Matrix m(static_cast<Index>(rows.size()), expected_cols);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return m;
}

// GSMX binary format: magic "GSMX", version byte 1, unsigned 32-bit
// little-endian row and column counts, then rows*cols little-endian 64-bit
// floats in row-major order. Round trips are bit-exact.
inline constexpr char kGsmxMagic[4] = {'G', 'S', 'M', 'X'};
inline constexpr std::uint8_t kGsmxVersion = 1;

inline void save_bin(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_bin: cannot open '" + path + "' for writing");
  out.write(kGsmxMagic, 4);
  out.put(static_cast<char>(kGsmxVersion));
  const std::uint32_t rows = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t cols = static_cast<std::uint32_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  std::vector<double> row(static_cast<size_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) row[static_cast<size_t>(j)] = m(i, j);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) throw IoError("save_bin: write failed for '" + path + "'");
}

inline Matrix load_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_bin: cannot open '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kGsmxMagic, 4) != 0)
    throw DataFormatError("load_bin: '" + path + "' is not a GSMX file (bad magic)");
  const int version = in.get();
  if (version != kGsmxVersion)
    throw DataFormatError("load_bin: unsupported GSMX version " + std::to_string(version) +
                          " in '" + path + "'");
  std::uint32_t rows = 0, cols = 0;
  if (!in.read(reinterpret_cast<char*>(&rows), 4) ||
      !in.read(reinterpret_cast<char*>(&cols), 4))
    throw DataFormatError("load_bin: truncated GSMX header in '" + path + "'");
  const std::uint64_t expected = std::uint64_t{rows} * cols * sizeof(double);
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  std::vector<double> row(cols);
  std::uint64_t read_bytes = 0;
  for (std::uint32_t i = 0; i < rows; ++i) {
    if (!in.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(cols * sizeof(double)))) {
      read_bytes += static_cast<std::uint64_t>(in.gcount());
      throw DataFormatError("load_bin: truncated GSMX payload in '" + path + "': expected " +
                            std::to_string(expected) + " bytes, got " +
                            std::to_string(read_bytes));
    }
    read_bytes += cols * sizeof(double);
    for (std::uint32_t j = 0; j < cols; ++j)
      m(static_cast<Index>(i), static_cast<Index>(j)) = row[j];
  }
  return m;
}

/// Column centering and/or scaling to unit sample standard deviation
/// (denominator N-1). Near-constant columns are left unscaled; their indices
/// are reported through constant_cols_out when provided.
inline Matrix standardize(const Matrix& m, bool center, bool scale,
                          std::vector<Index>* constant_cols_out = nullptr) {
  if (scale && m.rows() < 2)
    throw std::invalid_argument("standardize: scaling needs at least 2 samples");
  Matrix out = m;
  const double n = static_cast<double>(m.rows());
  for (Index j = 0; j < m.cols(); ++j) {
    const double mean = out.col(j).mean();
    if (center) out.col(j).array() -= mean;
    if (scale) {
      const Vector centered = center ? Vector(out.col(j)) : Vector(out.col(j).array() - mean);
      const double sd = std::sqrt(centered.squaredNorm() / (n - 1.0));
      if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
        if (constant_cols_out) constant_cols_out->push_back(j);
      } else {
        out.col(j) /= sd;
      }
    }
  }
  return out;
}

/// Read-only zero-copy views of contiguous column ranges, one per block.
/// Views alias the parent matrix, which must outlive them.
inline std::vector<Eigen::Ref<const Matrix>> split_blocks(const Matrix& m,
                                                          const BlockSpec& spec) {
  spec.validate();
  if (spec.total() != m.cols())
    throw DimensionError("split_blocks: block widths sum to " + std::to_string(spec.total()) +
                         " but the matrix has " + std::to_string(m.cols()) + " features");
  std::vector<Eigen::Ref<const Matrix>> views;
  views.reserve(spec.block_dims.size());
  Index offset = 0;
  for (Index width : spec.block_dims) {
    views.emplace_back(m.middleCols(offset, width));
    offset += width;
  }
  return views;
}

/// Seeded one-pass minibatch iterator: a shuffled partition of 0..N-1 into
/// ceil(N/l) batches, the last one short when l does not divide N.
class BatchIterator {
 public:
  BatchIterator(Index n, Index l, std::uint64_t seed) : n_(n), l_(l) {
    if (l < 1 || l > n)
      throw std::invalid_argument("batches: batch size " + std::to_string(l) +
                                  " out of range [1, " + std::to_string(n) + "]");
    perm_.resize(static_cast<size_t>(n));
    std::iota(perm_.begin(), perm_.end(), Index{0});
    Rng rng(seed);
    std::shuffle(perm_.begin(), perm_.end(), rng);
  }

  bool done() const { return cursor_ >= n_; }
  Index num_batches() const { return (n_ + l_ - 1) / l_; }

  std::vector<Index> next() {
    if (done()) throw std::out_of_range("BatchIterator: pass exhausted");
    const Index take = std::min(l_, n_ - cursor_);
    std::vector<Index> batch(perm_.begin() + cursor_, perm_.begin() + cursor_ + take);
    cursor_ += take;
    return batch;
  }

 private:
  Index n_, l_, cursor_ = 0;
  std::vector<Index> perm_;
};

inline BatchIterator batches(Index n, Index l, std::uint64_t seed) {
  return BatchIterator(n, l, seed);
}

}  // namespace gstiefel
