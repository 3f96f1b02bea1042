#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "surfnet/vec3.hpp"

namespace surfnet {

using Index = std::uint32_t;
using Face = std::array<Index, 3>;

/// Faces with a smaller area (model units squared) are rejected: both the
/// cotangent weights and the 1/(2 a_f) Dirac scaling diverge.
inline constexpr double kDegenerateAreaEps = 1e-12;

/// Optional per-vertex data carried alongside a mesh and serialized to a
/// sidecar file. Not part of mesh equality.
struct MeshAttributes {
  std::map<std::string, std::vector<double>> scalars;
  std::map<std::string, std::vector<Vec3>> vectors;

  bool empty() const { return scalars.empty() && vectors.empty(); }
};

/// Indexed triangle mesh with counter-clockwise faces.
///
/// Construction validates: indices in range, no repeated vertex within a
/// face, finite coordinates, every vertex referenced, consistent
/// orientation (each directed edge used once), at most two faces per edge,
/// and no face with area below kDegenerateAreaEps. Meshes with boundary are
/// accepted. Immutable apart from attributes.
class Mesh {
 public:
  Mesh() = default;
  Mesh(std::vector<Vec3> vertices, std::vector<Face> faces);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_faces() const { return faces_.size(); }
  const Vec3& vertex(std::size_t i) const { return vertices_[i]; }
  const Face& face(std::size_t f) const { return faces_[f]; }

  /// Same connectivity, new positions (validated again).
  Mesh with_positions(std::vector<Vec3> positions) const;

  MeshAttributes& attributes() { return attributes_; }
  const MeshAttributes& attributes() const { return attributes_; }

  friend bool operator==(const Mesh& a, const Mesh& b) {
    return a.vertices_ == b.vertices_ && a.faces_ == b.faces_;
  }

 private:
  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  MeshAttributes attributes_;
};

/// Throws ValidationError (or its DegenerateFace / NonManifoldEdge
/// subclasses) naming the first offending element.
void validate_mesh(const std::vector<Vec3>& vertices, const std::vector<Face>& faces);

struct FaceGeometry {
  double area = 0.0;
  /// Interior angle at corner j (radians), in face order.
  std::array<double, 3> angles{};
  /// For corner j of face (j, a, b): e_j = v_b - v_a.
  std::array<Vec3, 3> opposite_edges{};
};

/// Throws DegenerateFace if the area is below kDegenerateAreaEps.
FaceGeometry face_geometry(const Mesh& mesh, std::size_t face_id);

/// Unsigned area from the cross product, no degeneracy check.
double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

/// Unit normal of a CCW triangle.
Vec3 triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c);

struct EdgeInfo {
  std::array<Index, 2> endpoints{};  // sorted ascending
  std::array<Index, 2> faces{};
  int face_count = 0;
  double length = 0.0;

  bool is_boundary() const { return face_count == 1; }
};

/// Each undirected edge once, sorted by endpoints. Throws NonManifoldEdge
/// when an edge has more than two incident faces.
std::vector<EdgeInfo> build_edge_table(const Mesh& mesh);

/// Smallest interior angle over all face corners, radians.
double min_angle(const Mesh& mesh);

/// Vertex adjacency lists (sorted, unique).
std::vector<std::vector<Index>> vertex_neighbors(const Mesh& mesh);

/// Number of faces incident to each vertex.
std::vector<int> incident_face_counts(const Mesh& mesh);

/// Area-weighted vertex normals.
std::vector<Vec3> vertex_normals(const Mesh& mesh);

// ---------------------------------------------------------------------------
// IO

enum class MeshFormat { Obj, Off };

/// Picks the format from the file extension (.obj / .off, case-insensitive).
MeshFormat format_from_path(const std::filesystem::path& path);

/// Throws ParseError for malformed files (with line number) and
/// ValidationError for topology/geometry problems (with element index).
Mesh load_mesh(const std::filesystem::path& path, MeshFormat format);
Mesh load_mesh(const std::filesystem::path& path);

/// Coordinates are printed with 17 significant digits so that a reload
/// reproduces every double bit-for-bit.
void save_mesh(const Mesh& mesh, const std::filesystem::path& path, MeshFormat format);
void save_mesh(const Mesh& mesh, const std::filesystem::path& path);

std::string mesh_to_string(const Mesh& mesh, MeshFormat format);
Mesh mesh_from_string(const std::string& text, MeshFormat format);

/// Sidecar JSON holding mesh attributes: {"scalars": {...}, "vectors": {...}}.
void save_attributes(const MeshAttributes& attributes, const std::filesystem::path& path);
MeshAttributes load_attributes(const std::filesystem::path& path);

/// Conventional sidecar location for a mesh file: "<path>.attr.json".
std::filesystem::path attribute_sidecar_path(const std::filesystem::path& mesh_path);

}  // namespace surfnet
