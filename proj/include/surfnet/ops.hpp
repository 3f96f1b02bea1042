#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "surfnet/la.hpp"
#include "surfnet/mesh.hpp"

namespace surfnet {

struct LaplaceOptions {
  /// Clamp negative cotangent weights to zero. Off by default: clamping
  /// breaks Re D*D = Delta.
  bool clamp_negative_weights = false;
};

/// Cotangent Laplacian and its pieces.
struct LaplacePack {
  SparseOperator W;            // symmetric edge weights, zero diagonal
  std::vector<double> U;       // row sums of W
  std::vector<double> abar;    // lumped vertex areas
  SparseOperator stiffness;    // U - W
  SparseOperator Delta;        // diag(abar)^{-1} (U - W)
};

/// w_ij = (cot alpha + cot beta) / 2 over the faces incident to edge ij
/// (one term on boundary edges), abar_j = one third of the incident face
/// areas, Delta = diag(abar)^{-1} (U - W). Delta is positive semidefinite in
/// the abar-weighted inner product.
LaplacePack assemble_laplacian(const Mesh& mesh, const LaplaceOptions& options = {});

std::vector<double> face_areas(const Mesh& mesh);
std::vector<double> vertex_areas(const Mesh& mesh);

/// Quaternion Dirac operator. D is |F| x |V| with 4x4 blocks; Dadj is
/// D* = Mv^{-1} D^H Mf, |V| x |F|.
struct DiracPack {
  SparseOperator D;
  SparseOperator Dadj;
  std::vector<double> mv;
  std::vector<double> mf;
};

/// D_{f,j} = -e_j / (2 a_f) as an imaginary quaternion, where e_j is the
/// edge opposite corner j traversed counter-clockwise.
DiracPack assemble_dirac(const Mesh& mesh);

struct IdentityReport {
  double max_rel_error = 0.0;  // max |Re(D*D X) - Delta X| / max |Delta X|
  double max_abs_error = 0.0;
  double reference_scale = 0.0;
};

/// Compares the real lane of D* D X with Delta X for random real signals X
/// embedded in the real quaternion lane.
IdentityReport verify_dirac_laplace_identity(const Mesh& mesh, std::uint64_t seed = 1, int signals = 4);
IdentityReport verify_dirac_laplace_identity(const LaplacePack& laplace, const DiracPack& dirac,
                                             std::uint64_t seed = 1, int signals = 4);

inline constexpr double C_SLACK = 1.05;

struct NormBoundReport {
  double bound = 0.0;          // 2 sqrt(2) cot(alpha_min) S_max / min abar
  double bound_degree = 0.0;   // same with the maximum vertex degree d_max
  double measured = 0.0;       // power-iteration ||Delta||
  double min_angle = 0.0;
  int s_max = 0;               // most faces incident to one vertex
  int d_max = 0;               // largest vertex degree
  double min_abar = 0.0;
  bool holds = false;          // measured <= bound * C_SLACK
};

NormBoundReport laplacian_norm_bound(const Mesh& mesh);

/// ||D||^2 against ||Delta|| in two norms:
///  plain: the Euclidean operator norms of the assembled matrices;
///  mass: D from (V, Mv) to (F, Mf), i.e. ||Mf^{1/2} D Mv^{-1/2}||^2, against
///        Delta as a self-adjoint operator on (V, Mv), i.e.
///        ||Mv^{-1/2} (U - W) Mv^{-1/2}||.
struct DiracNormReport {
  double dirac_sq_plain = 0.0;
  double laplace_plain = 0.0;
  double rel_diff_plain = 0.0;
  double dirac_sq_mass = 0.0;
  double laplace_mass = 0.0;
  double rel_diff_mass = 0.0;
};

DiracNormReport dirac_norm_relation(const Mesh& mesh, int iters = 5000);

inline constexpr std::size_t K_MIN_FIT = 10;

struct SobolevProfile {
  std::vector<double> eigenvalues;
  /// |x^(k)| with x^(k) = e_k^T diag(abar) x, summed over signal columns.
  std::vector<double> coefficients;
  double sobolev_norm_sq = 0.0;
  /// Least-squares slope of -log|x^(k)| against log k over k >= K_MIN_FIT
  /// (1-based). +inf when fewer than two usable coefficients remain.
  double decay_rate_beta = std::numeric_limits<double>::infinity();
  /// F(k) = sum_{k' >= k} |x^(k')|^2, the tail energy.
  std::vector<double> tail_energy;
  /// |x|^2 in the mass-weighted and plain inner products.
  double norm_sq_mass = 0.0;
  double norm_sq_plain = 0.0;
};

/// x holds one or more vertex signals as columns.
SobolevProfile sobolev_profile(const Mesh& mesh, const DenseMatrix& x);
SobolevProfile sobolev_profile(const LaplacePack& laplace, const EigenDecomposition& eig, const DenseMatrix& x);

/// Embeds an n x c real matrix into the real lanes of an n x 4c quaternion
/// feature matrix, and extracts a given lane back.
DenseMatrix embed_real_lane(const DenseMatrix& x);
DenseMatrix extract_lane(const DenseMatrix& q, int lane);

/// Vertex positions as an n x 3 matrix, and as imaginary quaternions n x 4.
DenseMatrix positions_matrix(const Mesh& mesh);
DenseMatrix positions_quaternion(const Mesh& mesh);

}  // namespace surfnet
