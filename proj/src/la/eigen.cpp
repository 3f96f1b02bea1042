#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "surfnet/error.hpp"
#include "surfnet/la.hpp"

namespace surfnet {

namespace {

// Householder reduction of the symmetric matrix held in v (n x n, row-major
// v[i*n+j]) to tridiagonal form. On return d holds the diagonal, e the
// subdiagonal in e[1..n-1], and v the accumulated orthogonal transform.
void tridiagonalize(std::size_t n, std::vector<double>& v, std::vector<double>& d, std::vector<double>& e) {
  auto V = [&](std::size_t i, std::size_t j) -> double& { return v[i * n + j]; };
  for (std::size_t j = 0; j < n; ++j) d[j] = V(n - 1, j);

  for (std::size_t i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (std::size_t j = 0; j < i; ++j) {
        d[j] = V(i - 1, j);
        V(i, j) = 0.0;
        V(j, i) = 0.0;
      }
    } else {
      for (std::size_t k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;

      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        V(j, i) = f;
        g = e[j] + V(j, j) * f;
        for (std::size_t k = j + 1; k <= i - 1; ++k) {
          g += V(k, j) * d[k];
          e[k] += V(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (std::size_t k = j; k <= i - 1; ++k) V(k, j) -= (f * e[k] + g * d[k]);
        d[j] = V(i - 1, j);
        V(i, j) = 0.0;
      }
    }
    d[i] = h;
  }

  for (std::size_t i = 0; i + 1 < n; ++i) {
    V(n - 1, i) = V(i, i);
    V(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (std::size_t k = 0; k <= i; ++k) d[k] = V(k, i + 1) / h;
      for (std::size_t j = 0; j <= i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k <= i; ++k) g += V(k, i + 1) * V(k, j);
        for (std::size_t k = 0; k <= i; ++k) V(k, j) -= g * d[k];
      }
    }
    for (std::size_t k = 0; k <= i; ++k) V(k, i + 1) = 0.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    d[j] = V(n - 1, j);
    V(n - 1, j) = 0.0;
  }
  V(n - 1, n - 1) = 1.0;
  e[0] = 0.0;
}

// Implicit-shift QL on the tridiagonal (d, e). z holds the transform
// transposed: row i of z is column i of the eigenvector matrix, so each
// Givens rotation touches two contiguous rows.
void tridiagonal_ql(std::size_t n, std::vector<double>& d, std::vector<double>& e, std::vector<double>& z) {
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    std::size_t m = l;
    while (m < n) {
      if (std::abs(e[m]) <= eps * tst1) break;
      ++m;
    }
    if (m > l) {
      int iter = 0;
      do {
        if (++iter > 100) throw NumericalError("tridiagonal QL did not converge");
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (std::size_t ii = m; ii-- > l;) {
          const std::size_t i = ii;
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          double* zi = z.data() + i * n;
          double* zi1 = z.data() + (i + 1) * n;
          for (std::size_t k = 0; k < n; ++k) {
            const double hk = zi1[k];
            zi1[k] = s * zi[k] + c * hk;
            zi[k] = c * zi[k] - s * hk;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
}

}  // namespace

EigenDecomposition sym_eigen_dense(const DenseMatrix& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("sym_eigen_dense: matrix is not square");
  const std::size_t n = a.rows();
  EigenDecomposition out;
  if (n == 0) return out;

  std::vector<double> v = a.storage();
  std::vector<double> d(n), e(n);
  tridiagonalize(n, v, d, e);
  // Transpose the accumulated transform so eigenvectors live in rows.
  std::vector<double> z(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) z[j * n + i] = v[i * n + j];
  }
  tridiagonal_ql(n, d, e, z);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return d[x] < d[y]; });

  out.eigenvalues.resize(n);
  out.eigenvectors = DenseMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double* col = z.data() + order[k] * n;
    std::size_t big = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (std::abs(col[i]) > std::abs(col[big]) + 1e-14) big = i;
    }
    const double sign = col[big] < 0 ? -1.0 : 1.0;
    out.eigenvalues[k] = d[order[k]];
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = sign * col[i];
  }
  return out;
}

EigenDecomposition sym_eigen_generalized(const SparseOperator& s, std::span<const double> mass) {
  if (s.block_size() != 1) throw NotScalar("sym_eigen_generalized needs a scalar operator");
  if (s.rows() != s.cols()) throw DimensionMismatch("sym_eigen_generalized: operator is not square");
  const std::size_t n = s.rows();
  if (mass.size() != n) {
    throw DimensionMismatch("sym_eigen_generalized: " + std::to_string(mass.size()) + " masses for " +
                            std::to_string(n) + " rows");
  }
  if (n > MAX_DENSE_N) {
    throw TooLarge("dense eigendecomposition limited to " + std::to_string(MAX_DENSE_N) + " rows, got " +
                   std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(mass[i] > 0.0)) throw NonPositiveMass("mass " + std::to_string(i) + " is not positive");
  }
  const DenseMatrix dense = s.to_dense();
  const double scale = std::max(1.0, max_abs(dense));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(dense(i, j) - dense(j, i)) > 1e-10 * scale) {
        throw NonSymmetric("operator entry (" + std::to_string(i) + ", " + std::to_string(j) +
                           ") differs from its transpose");
      }
    }
  }
  std::vector<double> isq(n);
  for (std::size_t i = 0; i < n; ++i) isq[i] = 1.0 / std::sqrt(mass[i]);
  DenseMatrix b(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      // Symmetrize exactly so the solver sees a symmetric matrix.
      b(i, j) = 0.5 * (dense(i, j) + dense(j, i)) * isq[i] * isq[j];
    }
  }
  EigenDecomposition out = sym_eigen_dense(b);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) out.eigenvectors(i, k) *= isq[i];
  }
  return out;
}

}  // namespace surfnet
