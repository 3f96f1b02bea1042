#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "surfnet/mesh.hpp"

namespace surfnet {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Square sampling domain [0, extent]^2.
inline constexpr double kMnistExtent = 27.0;

/// Bridson dart throwing (30 candidates per active point) on
/// [0, extent]^2, followed by an exact fill pass that inserts any point of
/// the domain still at distance >= r from every sample (candidates are the
/// vertices of the uncovered region). The result is maximal.
std::vector<Point2> poisson_disk_sample(double r, std::uint64_t seed, double extent = kMnistExtent);

/// True when some point of [0, extent]^2 is at distance >= r from every
/// sample (up to a 1e-9 r nudge), i.e. the sample is not maximal.
bool poisson_has_gap(std::span<const Point2> points, double r, double extent = kMnistExtent);

/// Bowyer-Watson with a super-triangle, then Lawson flips. On cocircular
/// quadrilaterals the diagonal (i, j) with the lexicographically smaller
/// (max(i, j), min(i, j)) wins. Faces are CCW in the z = 0 plane.
/// Throws DegenerateInput for fewer than 3 points, duplicates, or all
/// points collinear.
Mesh delaunay_triangulate(std::span<const Point2> points);

/// Removes hull triangles whose angle opposite the boundary edge exceeds
/// max_angle degrees (near-collinear points along the square's sides give
/// such slivers, and their cotangents dominate the Laplacian). Only
/// triangles with one boundary edge and an interior apex are peeled, so the
/// vertex set and manifoldness are kept. The rest is still Delaunay.
Mesh trim_boundary_slivers(const Mesh& mesh, double max_angle = 120.0);

/// Sign of the incircle determinant of (a, b, c, d) for CCW abc: > 0 when d
/// is strictly inside, with the magnitude bound used for tie detection.
struct InCircle {
  double det = 0.0;
  double bound = 0.0;
  bool inside() const { return det > 1e-12 * bound; }
  bool cocircular() const { return !(det > 1e-12 * bound) && !(det < -1e-12 * bound); }
};
InCircle incircle(Point2 a, Point2 b, Point2 c, Point2 d);

/// Row-major grey image.
struct Image {
  std::size_t rows = 28;
  std::size_t cols = 28;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
};

/// IDX readers (big-endian magic 0x00000803 images, 0x00000801 labels).
std::vector<Image> read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

/// Synthetic digit-like glyph: a jittered stroke template of class label
/// (0-9) drawn with a Gaussian brush.
Image synthetic_glyph(int label, std::uint64_t seed);

struct HeightFieldMesh {
  Mesh base;    // z = 0
  Mesh lifted;  // same faces, z = depth
  std::vector<double> depth;
};

/// Bilinear sample of the image at (x, y), where x indexes rows and y
/// columns (pixel centres at integers). Throws OutOfDomain outside
/// [0, rows-1] x [0, cols-1].
double bilinear(const Image& image, double x, double y);

/// z = bilinear(image, p) / 255 (or raw grey values when raw is set).
HeightFieldMesh lift_heightfield(const Mesh& base, const Image& image, bool raw = false);
/// Same connectivity as base, z replaced by depth.
HeightFieldMesh make_heightfield(const Mesh& base, std::vector<double> depth);

struct MeshMnistOptions {
  double radius = 1.0;
  bool raw = false;
  /// When set, images come from this IDX file (index = seed mod count).
  std::optional<std::filesystem::path> idx_images;
  std::optional<std::filesystem::path> idx_labels;
};

struct MeshMnistSample {
  HeightFieldMesh mesh;
  int label = -1;
  std::uint64_t seed = 0;
};

/// Poisson sample -> Delaunay -> lift, deterministic in seed.
MeshMnistSample make_meshmnist_sample(std::uint64_t seed, const MeshMnistOptions& options = {});
/// As above with images already loaded (empty: synthetic glyphs).
MeshMnistSample make_meshmnist_sample(std::uint64_t seed, const MeshMnistOptions& options,
                                      std::span<const Image> images, std::span<const std::uint8_t> labels);

/// Writes <dir>/sample_<seed>.off with a depth sidecar per sample and
/// manifest.json; returns the manifest.
nlohmann::json write_meshmnist_dataset(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed,
                                       const MeshMnistOptions& options = {});
/// Reads a dataset written by write_meshmnist_dataset.
std::vector<MeshMnistSample> read_meshmnist_dataset(const std::filesystem::path& dir);

}  // namespace surfnet
