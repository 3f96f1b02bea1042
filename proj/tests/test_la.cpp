#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <fstream>
#include <random>

#include "surfnet/error.hpp"
#include "surfnet/la.hpp"
#include "test_support.hpp"

using namespace surfnet;

namespace {

SparseOperator random_sparse(std::size_t rows, std::size_t cols, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (u(rng) < density) t.push_back({i, j, g(rng)});
    }
  }
  return SparseOperator::from_triplets(rows, cols, t);
}

SparseOperator random_block(std::size_t rows, std::size_t cols, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  std::vector<BlockTriplet> t;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (u(rng) < density) t.push_back({i, j, to_block({g(rng), g(rng), g(rng), g(rng)})});
    }
  }
  return SparseOperator::from_block_triplets(rows, cols, t);
}

Eigen::MatrixXd to_eigen(const DenseMatrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  }
  return e;
}

SparseOperator path_laplacian(std::size_t n) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    t.push_back({i, i, 1});
    t.push_back({i + 1, i + 1, 1});
    t.push_back({i, i + 1, -1});
    t.push_back({i + 1, i, -1});
  }
  return SparseOperator::from_triplets(n, n, t);
}

}  // namespace

TEST(Sparse, SpmvSmall) {
  const DenseMatrix x{{1}, {2}};
  EXPECT_EQ(spmv(SparseOperator::identity(2), x), x);
  const auto swap = SparseOperator::from_triplets(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}});
  EXPECT_EQ(spmv(swap, x), (DenseMatrix{{2}, {1}}));
  EXPECT_THROW(spmv(swap, DenseMatrix(3, 1)), DimensionMismatch);
}

TEST(Sparse, DuplicatesSummedAndSorted) {
  const auto a = SparseOperator::from_triplets(2, 3, {{0, 2, 1.0}, {0, 0, 2.0}, {0, 2, 0.5}, {1, 1, 3.0}});
  EXPECT_EQ(a.nnz_blocks(), 3u);
  EXPECT_EQ(a.col_idx(), (std::vector<std::size_t>{0, 2, 1}));
  EXPECT_DOUBLE_EQ(a.coeff(0, 2), 1.5);
  EXPECT_EQ(a.coeff(1, 0), 0.0);
  EXPECT_THROW(SparseOperator::from_triplets(2, 2, {{2, 0, 1.0}}), DimensionMismatch);
  EXPECT_THROW(SparseOperator(2, 2, 1, {0, 2, 2}, {1, 0}, {1, 1}), ValidationError);
}

TEST(Sparse, BlockMatchesScalarExpansion) {
  std::mt19937_64 rng(7);
  const SparseOperator a = random_block(9, 6, 0.4, rng);
  const DenseMatrix x = random_matrix(6, 12, rng);
  const DenseMatrix y = spmv(a, x);
  const DenseMatrix ref = rows_to_lanes(spmv(expand_scalar(a), lanes_to_rows(x)));
  EXPECT_LT(max_abs_diff(y, ref), 1e-14);
  EXPECT_THROW(spmv(a, DenseMatrix(6, 3)), NonQuadChannels);
  EXPECT_EQ(rows_to_lanes(lanes_to_rows(x)), x);
}

TEST(Sparse, TransposeProperties) {
  std::mt19937_64 rng(8);
  const std::vector<double> d{1, 2, 3};
  EXPECT_EQ(transpose(SparseOperator::diagonal(d)), SparseOperator::diagonal(d));
  for (int trial = 0; trial < 2; ++trial) {
    const SparseOperator a = trial == 0 ? random_sparse(7, 5, 0.5, rng) : random_block(7, 5, 0.5, rng);
    EXPECT_EQ(transpose(transpose(a)), a);
    const std::size_t w = static_cast<std::size_t>(a.block_size()) * 2;
    const DenseMatrix x = random_matrix(5, w, rng);
    const DenseMatrix y = random_matrix(7, w, rng);
    const double lhs = inner(spmv(transpose(a), y), x);
    const double rhs = inner(y, spmv(a, x));
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(Sparse, QuaternionTransposeIsConjugate) {
  const auto a = SparseOperator::from_block_triplets(1, 1, {{0, 0, to_block({1, 2, 3, 4})}});
  EXPECT_EQ(from_block(transpose(a).quat_block(0)), (Quaternion{1, -2, -3, -4}));
}

TEST(Sparse, SpmvIsLinear) {
  std::mt19937_64 rng(9);
  const SparseOperator a = random_sparse(20, 20, 0.2, rng);
  const DenseMatrix x = random_matrix(20, 3, rng);
  const DenseMatrix y = random_matrix(20, 3, rng);
  const DenseMatrix lhs = spmv(a, x + y);
  const DenseMatrix rhs = spmv(a, x) + spmv(a, y);
  EXPECT_LE(max_abs_diff(lhs, rhs), 1e-13 * std::max(1.0, max_abs(rhs)));
}

TEST(Sparse, AlgebraMatchesDense) {
  std::mt19937_64 rng(10);
  const SparseOperator a = random_sparse(6, 5, 0.5, rng);
  const SparseOperator b = random_sparse(5, 4, 0.5, rng);
  const SparseOperator c = random_sparse(6, 5, 0.5, rng);
  EXPECT_LT(max_abs_diff(multiply(a, b).to_dense(), matmul(a.to_dense(), b.to_dense())), 1e-13);
  EXPECT_LT(max_abs_diff(add_scaled(a, c, -2.0).to_dense(), a.to_dense() - 2.0 * c.to_dense()), 1e-14);
  const SparseOperator qa = random_block(3, 4, 0.6, rng);
  const SparseOperator qb = random_block(4, 2, 0.6, rng);
  EXPECT_LT(max_abs_diff(multiply(qa, qb).to_dense(), matmul(qa.to_dense(), qb.to_dense())), 1e-13);
  const SparseOperator* parts[] = {&a, &c};
  const DenseMatrix bd = block_diagonal(parts).to_dense();
  EXPECT_EQ(bd.rows(), 12u);
  EXPECT_EQ(bd(7, 6), c.to_dense()(1, 1));
  EXPECT_EQ(bd(7, 1), 0.0);
}

TEST(PowerIteration, Basics) {
  EXPECT_NEAR(power_iteration_norm(SparseOperator::identity(5)), 1.0, 1e-14);
  const std::vector<double> d{3, 1};
  EXPECT_NEAR(power_iteration_norm(SparseOperator::diagonal(d), 200), 3.0, 1e-10);
  EXPECT_EQ(power_iteration_norm(SparseOperator::from_triplets(3, 3, {})), 0.0);
  EXPECT_THROW(power_iteration_norm(SparseOperator::identity(2), 0), ValidationError);
}

TEST(PowerIteration, MatchesDenseSvdAndIsMonotone) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 2; ++trial) {
    const SparseOperator a = trial == 0 ? random_sparse(40, 30, 0.15, rng) : random_block(12, 9, 0.3, rng);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(a.to_dense()));
    const double sigma = svd.singularValues()(0);
    EXPECT_NEAR(power_iteration_norm(a, 5000), sigma, 1e-6 * sigma);
    double prev = 0.0;
    for (int it : {1, 2, 5, 10, 50, 200}) {
      const double est = power_iteration_norm(a, it, 3);
      EXPECT_GE(est, prev);
      EXPECT_LE(est, frobenius_norm(a));
      prev = est;
    }
    EXPECT_EQ(power_iteration_norm(a, 50, 3), power_iteration_norm(a, 50, 3));
  }
}

TEST(Eigen, DenseSolverMatchesOracle) {
  std::mt19937_64 rng(12);
  for (std::size_t n : {1u, 2u, 5u, 40u}) {
    DenseMatrix m = random_matrix(n, n, rng);
    m = m + transpose(m);
    const EigenDecomposition ours = sym_eigen_dense(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(to_eigen(m));
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_NEAR(ours.eigenvalues[k], ref.eigenvalues()(static_cast<Eigen::Index>(k)), 1e-10);
    }
    const DenseMatrix v = ours.eigenvectors;
    EXPECT_LT(max_abs_diff(matmul_tn(v, v), DenseMatrix::identity(n)), 1e-12);
    const DenseMatrix av = matmul(m, v);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(av(i, k), ours.eigenvalues[k] * v(i, k), 1e-10);
    }
  }
}

TEST(Eigen, ZeroOperator) {
  const std::vector<double> mass{1.0, 2.0, 0.5};
  const auto dec = sym_eigen_generalized(SparseOperator::from_triplets(3, 3, {}), mass);
  for (double l : dec.eigenvalues) EXPECT_EQ(l, 0.0);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t l = 0; l < 3; ++l) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += dec.eigenvectors(i, k) * mass[i] * dec.eigenvectors(i, l);
      EXPECT_NEAR(s, k == l ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(Eigen, PathGraphKernel) {
  const std::size_t n = 12;
  const std::vector<double> mass(n, 1.0);
  const auto dec = sym_eigen_generalized(path_laplacian(n), mass);
  EXPECT_NEAR(dec.eigenvalues[0], 0.0, 1e-12);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(dec.eigenvectors(i, 0), 1.0 / std::sqrt(double(n)), 1e-12);
  // Closed form 2 - 2 cos(k pi / n).
  for (std::size_t k = 0; k < n; ++k) {
    EXPECT_NEAR(dec.eigenvalues[k], 2.0 - 2.0 * std::cos(k * M_PI / n), 1e-12);
  }
}

TEST(Eigen, GeneralizedInvariantsAndReconstruction) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  const std::size_t n = 30;
  std::vector<double> mass(n);
  for (double& m : mass) m = u(rng);
  SparseOperator s = random_sparse(n, n, 0.2, rng);
  s = add_scaled(s, transpose(s), 1.0);
  const auto dec = sym_eigen_generalized(s, mass);
  const double anorm = power_iteration_norm(s);
  const DenseMatrix& e = dec.eigenvectors;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) EXPECT_LE(dec.eigenvalues[k - 1], dec.eigenvalues[k]);
    DenseMatrix col(n, 1);
    for (std::size_t i = 0; i < n; ++i) col(i, 0) = e(i, k);
    const DenseMatrix se = spmv(s, col);
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = se(i, 0) - dec.eigenvalues[k] * mass[i] * e(i, k);
      res += r * r;
    }
    EXPECT_LT(std::sqrt(res), 1e-7 * anorm);
    for (std::size_t l = 0; l < n; ++l) {
      double g = 0.0;
      for (std::size_t i = 0; i < n; ++i) g += e(i, k) * mass[i] * e(i, l);
      EXPECT_NEAR(g, k == l ? 1.0 : 0.0, 1e-8);
    }
  }
  const DenseMatrix x = random_matrix(n, 1, rng);
  DenseMatrix recon(n, 1);
  for (std::size_t k = 0; k < n; ++k) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += e(i, k) * mass[i] * x(i, 0);
    for (std::size_t i = 0; i < n; ++i) recon(i, 0) += dec.eigenvalues[k] * mass[i] * e(i, k) * c;
  }
  const DenseMatrix sx = spmv(s, x);
  EXPECT_LT(max_abs_diff(recon, sx), 1e-6 * max_abs(sx));
}

TEST(Eigen, Errors) {
  const std::vector<double> one(2, 1.0);
  EXPECT_THROW(sym_eigen_generalized(SparseOperator::from_triplets(2, 2, {{0, 1, 1.0}}), one), NonSymmetric);
  const std::vector<double> bad{1.0, 0.0};
  EXPECT_THROW(sym_eigen_generalized(SparseOperator::identity(2), bad), NonPositiveMass);
  EXPECT_THROW(sym_eigen_generalized(SparseOperator::identity(2, 4), one), NotScalar);
  const std::vector<double> big(MAX_DENSE_N + 1, 1.0);
  EXPECT_THROW(sym_eigen_generalized(SparseOperator::identity(MAX_DENSE_N + 1), big), TooLarge);
}

TEST(Tensor, RoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(14);
  const DenseMatrix m = random_matrix(4, 7, rng);
  write_tensor(dir.path() / "m.tnsr", m);
  EXPECT_EQ(read_matrix(dir.path() / "m.tnsr"), m);
  const Tensor t{{2, 3, 2}, std::vector<double>(12, 1.5)};
  write_tensor(dir.path() / "t.tnsr", t);
  const Tensor back = read_tensor(dir.path() / "t.tnsr");
  EXPECT_EQ(back.dims, t.dims);
  EXPECT_EQ(back.data, t.data);
  EXPECT_THROW(read_matrix(dir.path() / "t.tnsr"), ShapeMismatch);
  EXPECT_THROW(write_tensor(dir.path() / "x.tnsr", Tensor{{5}, {1.0}}), DimensionMismatch);
  {
    std::ofstream(dir.path() / "bad.tnsr") << "NOPE";
  }
  EXPECT_THROW(read_tensor(dir.path() / "bad.tnsr"), ParseError);
  // Header bytes are fixed.
  std::ifstream in(dir.path() / "m.tnsr", std::ios::binary);
  char head[8];
  in.read(head, 8);
  EXPECT_EQ(std::string(head, 4), "TNSR");
  EXPECT_EQ(head[4], 2);
}
