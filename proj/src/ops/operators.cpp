#include <algorithm>
#include <cmath>
#include <random>

#include "surfnet/error.hpp"
#include "surfnet/ops.hpp"

namespace surfnet {

namespace {

// Cotangent of the angle between u and w, from the dot and cross products
// (no trigonometric round trip).
double cot_between(const Vec3& u, const Vec3& w) { return dot(u, w) / norm(cross(u, w)); }

}  // namespace

std::vector<double> face_areas(const Mesh& mesh) {
  std::vector<double> a(mesh.num_faces());
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) a[f] = face_geometry(mesh, f).area;
  return a;
}

std::vector<double> vertex_areas(const Mesh& mesh) {
  std::vector<double> abar(mesh.num_vertices(), 0.0);
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const double third = face_geometry(mesh, f).area / 3.0;
    for (Index v : mesh.face(f)) abar[v] += third;
  }
  return abar;
}

LaplacePack assemble_laplacian(const Mesh& mesh, const LaplaceOptions& options) {
  const std::size_t n = mesh.num_vertices();
  std::vector<Triplet> w;
  w.reserve(mesh.num_faces() * 6);
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    face_geometry(mesh, f);  // degeneracy check
    const Face& t = mesh.face(f);
    for (int j = 0; j < 3; ++j) {
      const Index a = t[(j + 1) % 3];
      const Index b = t[(j + 2) % 3];
      const Vec3& p = mesh.vertex(t[j]);
      const double half_cot = 0.5 * cot_between(mesh.vertex(a) - p, mesh.vertex(b) - p);
      w.push_back({a, b, half_cot});
      w.push_back({b, a, half_cot});
    }
  }
  LaplacePack pack;
  pack.W = SparseOperator::from_triplets(n, n, std::move(w));
  if (options.clamp_negative_weights) {
    std::vector<double> values = pack.W.values();
    for (double& v : values) v = std::max(v, 0.0);
    pack.W = SparseOperator(n, n, 1, pack.W.row_ptr(), pack.W.col_idx(), std::move(values));
  }
  pack.U.assign(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = pack.W.row_ptr()[r]; k < pack.W.row_ptr()[r + 1]; ++k) pack.U[r] += pack.W.values()[k];
  }
  pack.abar = vertex_areas(mesh);

  std::vector<Triplet> l;
  l.reserve(pack.W.nnz_blocks() + n);
  for (std::size_t r = 0; r < n; ++r) {
    l.push_back({r, r, pack.U[r]});
    for (std::size_t k = pack.W.row_ptr()[r]; k < pack.W.row_ptr()[r + 1]; ++k) {
      l.push_back({r, pack.W.col_idx()[k], -pack.W.values()[k]});
    }
  }
  pack.stiffness = SparseOperator::from_triplets(n, n, std::move(l));
  std::vector<double> inv(n);
  for (std::size_t i = 0; i < n; ++i) inv[i] = 1.0 / pack.abar[i];
  const std::vector<double> ones(n, 1.0);
  pack.Delta = scale_rows_cols(pack.stiffness, inv, ones);
  return pack;
}

DiracPack assemble_dirac(const Mesh& mesh) {
  DiracPack pack;
  pack.mf.resize(mesh.num_faces());
  std::vector<BlockTriplet> entries;
  entries.reserve(3 * mesh.num_faces());
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const FaceGeometry g = face_geometry(mesh, f);
    pack.mf[f] = g.area;
    for (int j = 0; j < 3; ++j) {
      const Vec3 v = g.opposite_edges[j] * (-1.0 / (2.0 * g.area));
      entries.push_back({f, mesh.face(f)[j], to_block(from_vector3(v))});
    }
  }
  pack.D = SparseOperator::from_block_triplets(mesh.num_faces(), mesh.num_vertices(), std::move(entries));
  pack.mv = vertex_areas(mesh);
  std::vector<double> inv_mv(pack.mv.size());
  for (std::size_t i = 0; i < inv_mv.size(); ++i) inv_mv[i] = 1.0 / pack.mv[i];
  pack.Dadj = scale_rows_cols(transpose(pack.D), inv_mv, pack.mf);
  return pack;
}

DenseMatrix embed_real_lane(const DenseMatrix& x) {
  DenseMatrix q(x.rows(), 4 * x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) q(i, 4 * c) = x(i, c);
  }
  return q;
}

DenseMatrix extract_lane(const DenseMatrix& q, int lane) {
  if (q.cols() % 4 != 0) throw NonQuadChannels("extract_lane: column count not a multiple of 4");
  DenseMatrix x(q.rows(), q.cols() / 4);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) x(i, c) = q(i, 4 * c + static_cast<std::size_t>(lane));
  }
  return x;
}

DenseMatrix positions_matrix(const Mesh& mesh) {
  DenseMatrix p(mesh.num_vertices(), 3);
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    for (int k = 0; k < 3; ++k) p(i, static_cast<std::size_t>(k)) = mesh.vertex(i)[k];
  }
  return p;
}

DenseMatrix positions_quaternion(const Mesh& mesh) {
  DenseMatrix q(mesh.num_vertices(), 4);
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    for (int k = 0; k < 3; ++k) q(i, static_cast<std::size_t>(k) + 1) = mesh.vertex(i)[k];
  }
  return q;
}

IdentityReport verify_dirac_laplace_identity(const LaplacePack& laplace, const DiracPack& dirac,
                                             std::uint64_t seed, int signals) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const std::size_t n = laplace.Delta.rows();
  DenseMatrix x(n, static_cast<std::size_t>(signals));
  for (double& v : x.storage()) v = g(rng);
  const DenseMatrix ref = spmv(laplace.Delta, x);
  const DenseMatrix got = extract_lane(spmv(dirac.Dadj, spmv(dirac.D, embed_real_lane(x))), 0);
  IdentityReport r;
  r.max_abs_error = max_abs_diff(got, ref);
  r.reference_scale = max_abs(ref);
  r.max_rel_error = r.reference_scale > 0 ? r.max_abs_error / r.reference_scale : r.max_abs_error;
  return r;
}

IdentityReport verify_dirac_laplace_identity(const Mesh& mesh, std::uint64_t seed, int signals) {
  return verify_dirac_laplace_identity(assemble_laplacian(mesh), assemble_dirac(mesh), seed, signals);
}

NormBoundReport laplacian_norm_bound(const Mesh& mesh) {
  const LaplacePack pack = assemble_laplacian(mesh);
  NormBoundReport r;
  r.min_angle = min_angle(mesh);
  const auto counts = incident_face_counts(mesh);
  r.s_max = *std::max_element(counts.begin(), counts.end());
  for (const auto& nb : vertex_neighbors(mesh)) r.d_max = std::max(r.d_max, static_cast<int>(nb.size()));
  r.min_abar = *std::min_element(pack.abar.begin(), pack.abar.end());
  const double c = 2.0 * std::sqrt(2.0) / std::tan(r.min_angle) / r.min_abar;
  r.bound = c * r.s_max;
  r.bound_degree = c * r.d_max;
  r.measured = power_iteration_norm(pack.Delta);
  r.holds = r.measured <= r.bound * C_SLACK;
  return r;
}

DiracNormReport dirac_norm_relation(const Mesh& mesh, int iters) {
  const LaplacePack lp = assemble_laplacian(mesh);
  const DiracPack dp = assemble_dirac(mesh);
  DiracNormReport r;
  const double d_plain = power_iteration_norm(dp.D, iters);
  r.dirac_sq_plain = d_plain * d_plain;
  r.laplace_plain = power_iteration_norm(lp.Delta, iters);
  r.rel_diff_plain = std::abs(r.dirac_sq_plain - r.laplace_plain) / r.laplace_plain;

  std::vector<double> sqrt_mf(dp.mf.size()), isqrt_mv(dp.mv.size());
  for (std::size_t f = 0; f < sqrt_mf.size(); ++f) sqrt_mf[f] = std::sqrt(dp.mf[f]);
  for (std::size_t i = 0; i < isqrt_mv.size(); ++i) isqrt_mv[i] = 1.0 / std::sqrt(dp.mv[i]);
  const double d_mass = power_iteration_norm(scale_rows_cols(dp.D, sqrt_mf, isqrt_mv), iters);
  r.dirac_sq_mass = d_mass * d_mass;
  r.laplace_mass = power_iteration_norm(scale_rows_cols(lp.stiffness, isqrt_mv, isqrt_mv), iters);
  r.rel_diff_mass = std::abs(r.dirac_sq_mass - r.laplace_mass) / r.laplace_mass;
  return r;
}

SobolevProfile sobolev_profile(const LaplacePack& laplace, const EigenDecomposition& eig, const DenseMatrix& x) {
  const std::size_t n = laplace.abar.size();
  if (x.rows() != n) throw DimensionMismatch("sobolev_profile: signal rows do not match the mesh");
  SobolevProfile p;
  p.eigenvalues = eig.eigenvalues;
  p.coefficients.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double proj = 0.0;
      for (std::size_t i = 0; i < n; ++i) proj += eig.eigenvectors(i, k) * laplace.abar[i] * x(i, c);
      s += proj * proj;
    }
    p.coefficients[k] = std::sqrt(s);
    p.sobolev_norm_sq += eig.eigenvalues[k] * eig.eigenvalues[k] * s;
  }
  p.tail_energy.assign(n + 1, 0.0);
  for (std::size_t k = n; k-- > 0;) p.tail_energy[k] = p.tail_energy[k + 1] + p.coefficients[k] * p.coefficients[k];
  p.tail_energy.pop_back();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      p.norm_sq_mass += laplace.abar[i] * x(i, c) * x(i, c);
      p.norm_sq_plain += x(i, c) * x(i, c);
    }
  }

  // Fit log|x^(k)| = c - beta log k over k >= K_MIN_FIT, ignoring
  // coefficients at the round-off floor.
  const double top = *std::max_element(p.coefficients.begin(), p.coefficients.end());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (std::size_t k = K_MIN_FIT; k <= n; ++k) {
    const double c = p.coefficients[k - 1];
    if (!(c > 1e-13 * top)) continue;
    const double lx = std::log(static_cast<double>(k));
    const double ly = std::log(c);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++count;
  }
  if (count >= 2) {
    const double denom = count * sxx - sx * sx;
    if (denom > 0) p.decay_rate_beta = -(count * sxy - sx * sy) / denom;
  }
  return p;
}

SobolevProfile sobolev_profile(const Mesh& mesh, const DenseMatrix& x) {
  if (mesh.num_vertices() > MAX_DENSE_N) {
    throw TooLarge("sobolev_profile: mesh has " + std::to_string(mesh.num_vertices()) + " vertices, limit " +
                   std::to_string(MAX_DENSE_N));
  }
  const LaplacePack pack = assemble_laplacian(mesh);
  return sobolev_profile(pack, sym_eigen_generalized(pack.stiffness, pack.abar), x);
}

}  // namespace surfnet
