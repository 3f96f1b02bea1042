#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "surfnet/error.hpp"
#include "surfnet/la.hpp"
#include "surfnet/parallel.hpp"

namespace surfnet {

namespace {

struct Entry {
  std::size_t row;
  std::size_t col;
  std::size_t source;  // position in the input, keeps the summation order stable
};

// Sorts entries by (row, col, source) and merges duplicates by summing into
// the first occurrence.
template <typename GetValues>
SparseOperator build_csr(std::size_t rows, std::size_t cols, int bs, std::size_t count,
                         const std::vector<Entry>& entries_in, GetValues values_of) {
  std::vector<Entry> entries = entries_in;
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.row != b.row) return a.row < b.row;
    if (a.col != b.col) return a.col < b.col;
    return a.source < b.source;
  });
  const std::size_t stride = static_cast<std::size_t>(bs * bs);
  std::vector<std::size_t> row_ptr(rows + 1, 0);
  std::vector<std::size_t> col_idx;
  std::vector<double> values;
  col_idx.reserve(count);
  values.reserve(count * stride);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Entry& e = entries[k];
    const double* v = values_of(e.source);
    if (k > 0 && entries[k - 1].row == e.row && entries[k - 1].col == e.col) {
      double* dst = values.data() + values.size() - stride;
      for (std::size_t s = 0; s < stride; ++s) dst[s] += v[s];
      continue;
    }
    col_idx.push_back(e.col);
    values.insert(values.end(), v, v + stride);
    ++row_ptr[e.row + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) row_ptr[r + 1] += row_ptr[r];
  return SparseOperator(rows, cols, bs, std::move(row_ptr), std::move(col_idx), std::move(values));
}

}  // namespace

SparseOperator::SparseOperator(std::size_t rows, std::size_t cols, int block_size,
                               std::vector<std::size_t> row_ptr, std::vector<std::size_t> col_idx,
                               std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      block_size_(block_size),
      row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)),
      values_(std::move(values)) {
  if (block_size_ != 1 && block_size_ != 4) {
    throw ValidationError("SparseOperator: block size must be 1 or 4, got " + std::to_string(block_size_));
  }
  if (row_ptr_.size() != rows_ + 1 || row_ptr_.front() != 0 || row_ptr_.back() != col_idx_.size()) {
    throw ValidationError("SparseOperator: malformed row pointer array");
  }
  if (values_.size() != col_idx_.size() * block_stride()) {
    throw ValidationError("SparseOperator: value array does not match the block count");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    if (row_ptr_[r] > row_ptr_[r + 1]) throw ValidationError("SparseOperator: row pointer not monotone");
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      if (col_idx_[k] >= cols_) {
        throw ValidationError("SparseOperator: row " + std::to_string(r) + " has column " +
                              std::to_string(col_idx_[k]) + " out of range");
      }
      if (k > row_ptr_[r] && col_idx_[k] <= col_idx_[k - 1]) {
        throw ValidationError("SparseOperator: row " + std::to_string(r) + " columns not sorted and unique");
      }
    }
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValidationError("SparseOperator: non-finite value");
  }
}

SparseOperator SparseOperator::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
  std::vector<Entry> index(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (entries[k].row >= rows || entries[k].col >= cols) {
      throw DimensionMismatch("triplet (" + std::to_string(entries[k].row) + ", " +
                              std::to_string(entries[k].col) + ") outside " + std::to_string(rows) +
                              "x" + std::to_string(cols));
    }
    index[k] = {entries[k].row, entries[k].col, k};
  }
  return build_csr(rows, cols, 1, entries.size(), index,
                   [&](std::size_t k) { return &entries[k].value; });
}

SparseOperator SparseOperator::from_block_triplets(std::size_t rows, std::size_t cols,
                                                   std::vector<BlockTriplet> entries) {
  std::vector<Entry> index(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (entries[k].row >= rows || entries[k].col >= cols) {
      throw DimensionMismatch("block triplet (" + std::to_string(entries[k].row) + ", " +
                              std::to_string(entries[k].col) + ") outside " + std::to_string(rows) +
                              "x" + std::to_string(cols));
    }
    index[k] = {entries[k].row, entries[k].col, k};
  }
  return build_csr(rows, cols, 4, entries.size(), index,
                   [&](std::size_t k) { return entries[k].block.m.data(); });
}

SparseOperator SparseOperator::identity(std::size_t n, int block_size) {
  std::vector<std::size_t> row_ptr(n + 1);
  std::vector<std::size_t> col_idx(n);
  std::iota(row_ptr.begin(), row_ptr.end(), std::size_t{0});
  std::iota(col_idx.begin(), col_idx.end(), std::size_t{0});
  std::vector<double> values;
  if (block_size == 1) {
    values.assign(n, 1.0);
  } else {
    const QuatBlock one = to_block({1, 0, 0, 0});
    for (std::size_t i = 0; i < n; ++i) values.insert(values.end(), one.m.begin(), one.m.end());
  }
  return SparseOperator(n, n, block_size, std::move(row_ptr), std::move(col_idx), std::move(values));
}

SparseOperator SparseOperator::diagonal(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> row_ptr(n + 1);
  std::vector<std::size_t> col_idx(n);
  std::iota(row_ptr.begin(), row_ptr.end(), std::size_t{0});
  std::iota(col_idx.begin(), col_idx.end(), std::size_t{0});
  return SparseOperator(n, n, 1, std::move(row_ptr), std::move(col_idx),
                        std::vector<double>(values.begin(), values.end()));
}

QuatBlock SparseOperator::quat_block(std::size_t k) const {
  if (block_size_ != 4) throw InvalidBlock("quat_block on a scalar operator");
  QuatBlock b;
  std::copy(block_data(k), block_data(k) + 16, b.m.begin());
  return b;
}

double SparseOperator::coeff(std::size_t r, std::size_t c) const {
  if (block_size_ != 1) throw NotScalar("coeff on a block operator");
  const auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
  const auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
  const auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c) return 0.0;
  return values_[static_cast<std::size_t>(it - col_idx_.begin())];
}

DenseMatrix SparseOperator::to_dense() const {
  const std::size_t bs = static_cast<std::size_t>(block_size_);
  DenseMatrix d(rows_ * bs, cols_ * bs);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      const double* b = block_data(k);
      for (std::size_t i = 0; i < bs; ++i) {
        for (std::size_t j = 0; j < bs; ++j) d(r * bs + i, col_idx_[k] * bs + j) += b[i * bs + j];
      }
    }
  }
  return d;
}

DenseMatrix spmv(const SparseOperator& a, const DenseMatrix& x) {
  if (x.rows() != a.cols()) {
    throw DimensionMismatch("spmv: operator has " + std::to_string(a.cols()) + " columns, input has " +
                            std::to_string(x.rows()) + " rows");
  }
  DenseMatrix y(a.rows(), x.cols());
  const std::size_t m = x.cols();
  const auto& rp = a.row_ptr();
  const auto& ci = a.col_idx();
  if (a.block_size() == 1) {
    parallel_for(a.rows(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t r = begin; r < end; ++r) {
        double* yr = y.data() + r * m;
        for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
          const double v = a.values()[k];
          const double* xr = x.data() + ci[k] * m;
          for (std::size_t c = 0; c < m; ++c) yr[c] += v * xr[c];
        }
      }
    });
    return y;
  }
  if (m % 4 != 0) {
    throw NonQuadChannels("spmv: block operator needs a multiple of 4 columns, got " + std::to_string(m));
  }
  parallel_for(a.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      double* yr = y.data() + r * m;
      for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
        const double* b = a.block_data(k);
        const double* xr = x.data() + ci[k] * m;
        for (std::size_t t = 0; t < m; t += 4) {
          const double x0 = xr[t], x1 = xr[t + 1], x2 = xr[t + 2], x3 = xr[t + 3];
          yr[t] += b[0] * x0 + b[1] * x1 + b[2] * x2 + b[3] * x3;
          yr[t + 1] += b[4] * x0 + b[5] * x1 + b[6] * x2 + b[7] * x3;
          yr[t + 2] += b[8] * x0 + b[9] * x1 + b[10] * x2 + b[11] * x3;
          yr[t + 3] += b[12] * x0 + b[13] * x1 + b[14] * x2 + b[15] * x3;
        }
      }
    }
  });
  return y;
}

SparseOperator transpose(const SparseOperator& a) {
  const std::size_t stride = a.block_stride();
  const std::size_t bs = static_cast<std::size_t>(a.block_size());
  std::vector<std::size_t> row_ptr(a.cols() + 1, 0);
  for (std::size_t c : a.col_idx()) ++row_ptr[c + 1];
  for (std::size_t c = 0; c < a.cols(); ++c) row_ptr[c + 1] += row_ptr[c];
  std::vector<std::size_t> fill(row_ptr.begin(), row_ptr.end() - 1);
  std::vector<std::size_t> col_idx(a.nnz_blocks());
  std::vector<double> values(a.values().size());
  // Rows are visited in order, so columns of the transpose come out sorted.
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t k = a.row_ptr()[r]; k < a.row_ptr()[r + 1]; ++k) {
      const std::size_t dst = fill[a.col_idx()[k]]++;
      col_idx[dst] = r;
      const double* src = a.block_data(k);
      double* out = values.data() + dst * stride;
      for (std::size_t i = 0; i < bs; ++i) {
        for (std::size_t j = 0; j < bs; ++j) out[j * bs + i] = src[i * bs + j];
      }
    }
  }
  return SparseOperator(a.cols(), a.rows(), a.block_size(), std::move(row_ptr), std::move(col_idx),
                        std::move(values));
}

SparseOperator expand_scalar(const SparseOperator& a) {
  if (a.block_size() == 1) return a;
  std::vector<Triplet> t;
  t.reserve(a.values().size());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t k = a.row_ptr()[r]; k < a.row_ptr()[r + 1]; ++k) {
      const double* b = a.block_data(k);
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
          if (b[i * 4 + j] != 0.0) t.push_back({4 * r + i, 4 * a.col_idx()[k] + j, b[i * 4 + j]});
        }
      }
    }
  }
  return SparseOperator::from_triplets(4 * a.rows(), 4 * a.cols(), std::move(t));
}

DenseMatrix lanes_to_rows(const DenseMatrix& x) {
  if (x.cols() % 4 != 0) throw NonQuadChannels("lanes_to_rows: column count not a multiple of 4");
  const std::size_t m = x.cols() / 4;
  DenseMatrix y(4 * x.rows(), m);
  for (std::size_t j = 0; j < x.rows(); ++j) {
    for (std::size_t t = 0; t < m; ++t) {
      for (std::size_t l = 0; l < 4; ++l) y(4 * j + l, t) = x(j, 4 * t + l);
    }
  }
  return y;
}

DenseMatrix rows_to_lanes(const DenseMatrix& x) {
  if (x.rows() % 4 != 0) throw NonQuadChannels("rows_to_lanes: row count not a multiple of 4");
  const std::size_t n = x.rows() / 4;
  DenseMatrix y(n, 4 * x.cols());
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t t = 0; t < x.cols(); ++t) {
      for (std::size_t l = 0; l < 4; ++l) y(j, 4 * t + l) = x(4 * j + l, t);
    }
  }
  return y;
}

SparseOperator scale_rows_cols(const SparseOperator& a, std::span<const double> left,
                               std::span<const double> right) {
  if (left.size() != a.rows() || right.size() != a.cols()) {
    throw DimensionMismatch("scale_rows_cols: scaling vectors do not match the operator");
  }
  std::vector<double> values = a.values();
  const std::size_t stride = a.block_stride();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t k = a.row_ptr()[r]; k < a.row_ptr()[r + 1]; ++k) {
      const double s = left[r] * right[a.col_idx()[k]];
      for (std::size_t q = 0; q < stride; ++q) values[k * stride + q] *= s;
    }
  }
  return SparseOperator(a.rows(), a.cols(), a.block_size(), a.row_ptr(), a.col_idx(), std::move(values));
}

SparseOperator add_scaled(const SparseOperator& a, const SparseOperator& b, double s) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.block_size() != b.block_size()) {
    throw DimensionMismatch("add_scaled: operator shapes differ");
  }
  const std::size_t stride = a.block_stride();
  std::vector<std::size_t> row_ptr(a.rows() + 1, 0);
  std::vector<std::size_t> col_idx;
  std::vector<double> values;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::size_t ka = a.row_ptr()[r];
    std::size_t kb = b.row_ptr()[r];
    const std::size_t ea = a.row_ptr()[r + 1];
    const std::size_t eb = b.row_ptr()[r + 1];
    while (ka < ea || kb < eb) {
      const std::size_t ca = ka < ea ? a.col_idx()[ka] : SIZE_MAX;
      const std::size_t cb = kb < eb ? b.col_idx()[kb] : SIZE_MAX;
      const std::size_t c = std::min(ca, cb);
      col_idx.push_back(c);
      const std::size_t base = values.size();
      values.resize(base + stride, 0.0);
      if (ca == c) {
        for (std::size_t q = 0; q < stride; ++q) values[base + q] += a.block_data(ka)[q];
        ++ka;
      }
      if (cb == c) {
        for (std::size_t q = 0; q < stride; ++q) values[base + q] += s * b.block_data(kb)[q];
        ++kb;
      }
    }
    row_ptr[r + 1] = col_idx.size();
  }
  return SparseOperator(a.rows(), a.cols(), a.block_size(), std::move(row_ptr), std::move(col_idx),
                        std::move(values));
}

SparseOperator multiply(const SparseOperator& a, const SparseOperator& b) {
  if (a.cols() != b.rows() || a.block_size() != b.block_size()) {
    throw DimensionMismatch("multiply: operator shapes differ");
  }
  const std::size_t bs = static_cast<std::size_t>(a.block_size());
  const std::size_t stride = a.block_stride();
  std::vector<std::size_t> row_ptr(a.rows() + 1, 0);
  std::vector<std::size_t> col_idx;
  std::vector<double> values;
  std::vector<double> acc(b.cols() * stride, 0.0);
  std::vector<char> used(b.cols(), 0);
  std::vector<std::size_t> touched;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    touched.clear();
    for (std::size_t ka = a.row_ptr()[r]; ka < a.row_ptr()[r + 1]; ++ka) {
      const std::size_t mid = a.col_idx()[ka];
      const double* x = a.block_data(ka);
      for (std::size_t kb = b.row_ptr()[mid]; kb < b.row_ptr()[mid + 1]; ++kb) {
        const std::size_t c = b.col_idx()[kb];
        if (!used[c]) {
          used[c] = 1;
          touched.push_back(c);
        }
        const double* y = b.block_data(kb);
        double* dst = acc.data() + c * stride;
        for (std::size_t i = 0; i < bs; ++i) {
          for (std::size_t k = 0; k < bs; ++k) {
            const double xik = x[i * bs + k];
            for (std::size_t j = 0; j < bs; ++j) dst[i * bs + j] += xik * y[k * bs + j];
          }
        }
      }
    }
    std::sort(touched.begin(), touched.end());
    for (std::size_t c : touched) {
      col_idx.push_back(c);
      double* src = acc.data() + c * stride;
      values.insert(values.end(), src, src + stride);
      std::fill(src, src + stride, 0.0);
      used[c] = 0;
    }
    row_ptr[r + 1] = col_idx.size();
  }
  return SparseOperator(a.rows(), b.cols(), a.block_size(), std::move(row_ptr), std::move(col_idx),
                        std::move(values));
}

double frobenius_norm(const SparseOperator& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

SparseOperator block_diagonal(std::span<const SparseOperator* const> parts) {
  if (parts.empty()) return SparseOperator();
  const int bs = parts.front()->block_size();
  std::size_t rows = 0, cols = 0, nnz = 0;
  for (const SparseOperator* p : parts) {
    if (p->block_size() != bs) throw DimensionMismatch("block_diagonal: mixed block sizes");
    rows += p->rows();
    cols += p->cols();
    nnz += p->nnz_blocks();
  }
  std::vector<std::size_t> row_ptr{0};
  row_ptr.reserve(rows + 1);
  std::vector<std::size_t> col_idx;
  col_idx.reserve(nnz);
  std::vector<double> values;
  values.reserve(nnz * static_cast<std::size_t>(bs * bs));
  std::size_t col_offset = 0;
  for (const SparseOperator* p : parts) {
    const std::size_t base = col_idx.size();
    for (std::size_t r = 0; r < p->rows(); ++r) row_ptr.push_back(base + p->row_ptr()[r + 1]);
    for (std::size_t c : p->col_idx()) col_idx.push_back(c + col_offset);
    values.insert(values.end(), p->values().begin(), p->values().end());
    col_offset += p->cols();
  }
  return SparseOperator(rows, cols, bs, std::move(row_ptr), std::move(col_idx), std::move(values));
}

double power_iteration_norm(const SparseOperator& a, int iters, std::uint64_t seed) {
  if (iters < 1) throw ValidationError("power_iteration_norm: iters must be at least 1");
  const double frob = frobenius_norm(a);
  if (frob == 0.0 || a.cols() == 0) return 0.0;
  const std::size_t width = static_cast<std::size_t>(a.block_size());
  const SparseOperator at = transpose(a);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  DenseMatrix v(a.cols(), width);
  for (double& x : v.storage()) x = gauss(rng);
  double nv = frobenius_norm(v);
  for (double& x : v.storage()) x /= nv;

  double rayleigh = 0.0;
  for (int it = 0; it < iters; ++it) {
    const DenseMatrix av = spmv(a, v);
    const double next = inner(av, av);  // v^T A^T A v with |v| = 1
    DenseMatrix w = spmv(at, av);
    const double nw = frobenius_norm(w);
    const bool converged = it > 0 && std::abs(next - rayleigh) <= 1e-12 * next;
    rayleigh = std::max(rayleigh, next);
    if (nw == 0.0 || converged) break;
    for (double& x : w.storage()) x /= nw;
    v = std::move(w);
  }
  return std::min(std::sqrt(rayleigh), frob);
}

}  // namespace surfnet
