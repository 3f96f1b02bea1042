#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <vector>

#include "surfnet/quat.hpp"

namespace surfnet {

/// Row-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix column(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double v);

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// a^T b without forming the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
/// a b^T without forming the transpose.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator*(double s, const DenseMatrix& a);

double frobenius_norm(const DenseMatrix& a);
double max_abs(const DenseMatrix& a);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);
/// Sum of elementwise products.
double inner(const DenseMatrix& a, const DenseMatrix& b);
bool all_finite(const DenseMatrix& a);

// ---------------------------------------------------------------------------
// Sparse

struct Triplet {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

struct BlockTriplet {
  std::size_t row = 0;
  std::size_t col = 0;
  QuatBlock block;
};

/// Compressed-row matrix of block_size x block_size blocks (block_size 1 or
/// 4). rows() and cols() count blocks.
///
/// With block size 4 the operator acts on feature matrices whose columns
/// are quaternion lanes: input X is cols() x 4m, and output row i lane t is
/// sum_j block(i,j) * X[j, 4t..4t+3]. expand_scalar gives the equivalent
/// scalar operator on the lane-stacked layout (see lanes_to_rows).
class SparseOperator {
 public:
  SparseOperator() = default;

  /// Duplicate (row, col) entries are summed; columns sorted per row.
  static SparseOperator from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries);
  static SparseOperator from_block_triplets(std::size_t rows, std::size_t cols,
                                            std::vector<BlockTriplet> entries);
  static SparseOperator identity(std::size_t n, int block_size = 1);
  static SparseOperator diagonal(std::span<const double> values);

  /// Builds directly from CSR arrays; validates the structural invariants.
  SparseOperator(std::size_t rows, std::size_t cols, int block_size, std::vector<std::size_t> row_ptr,
                 std::vector<std::size_t> col_idx, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  int block_size() const { return block_size_; }
  std::size_t nnz_blocks() const { return col_idx_.size(); }

  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::size_t>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }

  /// Pointer to the k-th stored block (block_size^2 values, row-major).
  const double* block_data(std::size_t k) const { return values_.data() + k * block_stride(); }
  QuatBlock quat_block(std::size_t k) const;

  /// Stored value at block (r, c), zero when absent. Scalar operators only.
  double coeff(std::size_t r, std::size_t c) const;

  /// Dense expansion (rows*bs) x (cols*bs).
  DenseMatrix to_dense() const;

  std::size_t block_stride() const { return static_cast<std::size_t>(block_size_ * block_size_); }

  friend bool operator==(const SparseOperator&, const SparseOperator&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  int block_size_ = 1;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

/// Y = A X. Throws DimensionMismatch on incompatible shapes (for block 4,
/// X.cols() must be a multiple of 4: NonQuadChannels).
DenseMatrix spmv(const SparseOperator& a, const DenseMatrix& x);

/// Block transpose with each block transposed. For quaternion blocks this
/// is the conjugate transpose.
SparseOperator transpose(const SparseOperator& a);

/// Scalar CSR of the block operator.
SparseOperator expand_scalar(const SparseOperator& a);

/// n x 4m lane layout -> 4n x m stacked layout, and back.
DenseMatrix lanes_to_rows(const DenseMatrix& x);
DenseMatrix rows_to_lanes(const DenseMatrix& x);

/// diag(left) * A * diag(right) for scalar operators; for block operators
/// each block is scaled by left[i] * right[j].
SparseOperator scale_rows_cols(const SparseOperator& a, std::span<const double> left,
                               std::span<const double> right);

/// a + s * b (same block size and shape).
SparseOperator add_scaled(const SparseOperator& a, const SparseOperator& b, double s);

/// Sparse product of two operators with matching block size.
SparseOperator multiply(const SparseOperator& a, const SparseOperator& b);

/// Frobenius norm over all stored scalars.
double frobenius_norm(const SparseOperator& a);

/// Block-diagonal stacking (used for batches of meshes).
SparseOperator block_diagonal(std::span<const SparseOperator* const> parts);

inline constexpr int kDefaultPowerIterations = 1000;

/// Estimate of the largest singular value via power iteration on A^T A,
/// starting from a fixed-seed Gaussian vector. Stops when the Rayleigh
/// quotient changes by less than 1e-12 relative. Never exceeds the
/// Frobenius norm.
double power_iteration_norm(const SparseOperator& a, int iters = kDefaultPowerIterations,
                            std::uint64_t seed = 0x5eed);

// ---------------------------------------------------------------------------
// Symmetric eigenproblems

inline constexpr std::size_t MAX_DENSE_N = 3000;

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // ascending
  DenseMatrix eigenvectors;          // column k is e_k, mass-orthonormal
};

/// Dense symmetric eigendecomposition (Householder tridiagonalization and
/// implicit-shift QL). Eigenvalues ascending, eigenvectors orthonormal in
/// the columns, each with its largest-magnitude entry positive.
EigenDecomposition sym_eigen_dense(const DenseMatrix& a);

/// Solves S e = lambda diag(m) e through diag(m)^{-1/2} S diag(m)^{-1/2}.
/// Throws NotScalar, DimensionMismatch, TooLarge, NonSymmetric,
/// NonPositiveMass.
EigenDecomposition sym_eigen_generalized(const SparseOperator& s, std::span<const double> mass);

// ---------------------------------------------------------------------------
// TNSR binary tensors: "TNSR", u32 rank, u64 dims[rank], f64 payload, all
// little-endian.

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

void write_tensor(const std::filesystem::path& path, const DenseMatrix& m);
/// Rank-2 tensors map directly; rank 1 becomes a column.
DenseMatrix read_matrix(const std::filesystem::path& path);

}  // namespace surfnet
