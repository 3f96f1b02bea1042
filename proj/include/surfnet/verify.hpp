#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "surfnet/mesh.hpp"
#include "surfnet/net.hpp"

namespace surfnet {

using Mat3 = std::array<std::array<double, 3>, 3>;

enum class DeformationKind { Rigid, Translation, SmoothBend, RandomFourier };
std::string to_string(DeformationKind kind);
DeformationKind deformation_kind_from_string(const std::string& s);

/// Smooth map of R^3 with an analytic Jacobian.
struct DeformationField {
  DeformationKind kind = DeformationKind::Rigid;
  double amplitude = 0.0;
  std::function<Vec3(const Vec3&)> map;
  std::function<Mat3(const Vec3&)> jacobian;

  Vec3 operator()(const Vec3& u) const { return map(u); }
  Mesh apply(const Mesh& mesh) const;
};

/// Rigid: rotation by amplitude * pi about a random axis through center,
/// plus a shift of amplitude * scale. Translation: shift of amplitude *
/// scale. SmoothBend: one sine mode per coordinate with wavelength about
/// 2 * scale and displacement amplitude * scale. RandomFourier: four such
/// modes per coordinate with random frequencies.
DeformationField make_deformation(DeformationKind kind, std::uint64_t seed, double amplitude, double scale = 1.0,
                                  Vec3 center = {});
/// u -> (1 + s) u, and u -> R u for a fixed rotation (for metric checks).
DeformationField scaling_field(double s);
DeformationField rotation_field(const Mat3& r);
Mat3 random_rotation(std::uint64_t seed, double angle);

struct TauMetrics {
  double tau_inf = 0.0;        // sup ||J J^T - I||
  double tau_tilde_inf = 0.0;  // sup ||J - I||
  double hess_norm = 0.0;      // sup Frobenius norm of the finite-difference Hessian
  /// sup over sampled point pairs of | |tau(u) - tau(v)| / |u - v| - 1 |
  double distance_distortion = 0.0;
};
TauMetrics metric_tau(const DeformationField& field, std::span<const Vec3> points);

/// Largest relative deviation between the analytic Jacobian and central
/// differences over the points.
double jacobian_fd_error(const DeformationField& field, std::span<const Vec3> points, double h = 1e-6);

/// Centred, radius-normalized vertex coordinates used as network input.
struct InputFrame {
  Vec3 center;
  double radius = 1.0;
  static InputFrame of(const Mesh& mesh);
  DenseMatrix coordinates(const Mesh& mesh) const;
};

inline constexpr double EPS_LINEAR_MAX = 0.1;

enum class InputForm { Theorem, Corollary };

struct StabilityReport {
  DeformationKind kind = DeformationKind::Rigid;
  std::string model;
  InputForm form = InputForm::Theorem;
  std::vector<double> eps;
  std::vector<double> distance;
  std::vector<double> relative_distance;  // distance / |Phi(M; x)|
  std::vector<double> tau_inf;
  std::vector<double> tau_tilde_inf;
  std::vector<double> hess_norm;
  std::vector<bool> excluded;  // deformation degenerated or flipped a face
  double slope = std::numeric_limits<double>::quiet_NaN();
  bool monotone = true;

  nlohmann::json to_json() const;
};

/// For every eps: deform the mesh, rebuild the operators and compare the
/// evaluation-mode network outputs. Theorem form feeds the undeformed
/// coordinates to both; corollary form feeds each mesh its own coordinates.
/// The log-log slope is fitted over eps <= EPS_LINEAR_MAX with nonzero
/// distances.
StabilityReport deformation_stability_sweep(const Network& net, const Mesh& mesh, DeformationKind kind,
                                            std::span<const double> eps, std::uint64_t seed,
                                            InputForm form = InputForm::Theorem);

struct LipschitzReport {
  int trials = 0;
  double max_ratio = 0.0;
  LipschitzBound bound;
  bool holds = true;
  nlohmann::json to_json() const;
};
LipschitzReport lipschitz_input_check(const Network& net, const Mesh& mesh, int trials, std::uint64_t seed);

struct SmoothnessReport {
  std::vector<double> beta;  // input, stem, then each block
  double h_beta = 1.0;       // prod over feature maps after the input of (b - 1) / (b - 1/2)
  nlohmann::json to_json() const;
};
/// Throws TooLarge above MAX_DENSE_N vertices.
SmoothnessReport smoothness_rates(const Network& net, const Mesh& mesh, const DenseMatrix& x);

enum class AnalyticSurface { Sphere, Torus };

struct DiscretizationReport {
  AnalyticSurface surface = AnalyticSurface::Sphere;
  std::vector<int> resolutions;
  std::vector<std::size_t> vertex_counts;
  std::vector<double> distance;         // RMS nearest-vertex transfer distance between two meshings
  std::vector<double> surface_distance; // max vertex distance to the analytic surface
  std::vector<double> normal_deviation; // max angle between face and analytic normals (radians)
  bool non_increasing = true;
  bool strictly_decreasing = true;
  nlohmann::json to_json() const;
};
/// Two independent meshings per resolution: randomly rotated icospheres
/// (subdivision = resolution) or jittered torus grids (6 * 2^res by
/// 3 * 2^res). The network input is the normalized vertex position.
DiscretizationReport discretization_consistency(AnalyticSurface surface, std::span<const int> resolutions,
                                                const Network& net, std::uint64_t seed);
/// Symmetric RMS distance between vertex features after nearest-vertex
/// transfer (brute force), averaged over both directions.
double cross_mesh_distance(const Mesh& a, const DenseMatrix& fa, const Mesh& b, const DenseMatrix& fb);
/// Same meshing pair builder, exposed for tests.
Mesh analytic_meshing(AnalyticSurface surface, int resolution, std::uint64_t seed);

struct CurvatureConvergence {
  std::vector<int> subdivisions;
  std::vector<double> max_error;  // max | |Delta V| - 2/R |
  std::vector<double> rms_error;
};
CurvatureConvergence mean_curvature_convergence(std::span<const int> subdivisions, double radius = 1.0);

/// Least-squares slope of log y against log x over entries with x, y > 0.
double loglog_slope(std::span<const double> x, std::span<const double> y);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
/// Minimal SVG line plot.
void write_svg_plot(const std::filesystem::path& path, const std::string& title, const std::vector<PlotSeries>& series,
                    bool log_x, bool log_y, const std::string& x_label = "", const std::string& y_label = "");

}  // namespace surfnet
