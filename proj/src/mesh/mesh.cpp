#include "surfnet/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <unordered_map>

#include "surfnet/error.hpp"

namespace surfnet {

namespace {

std::uint64_t edge_key(Index a, Index b) {
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

double corner_angle(const Vec3& at, const Vec3& p, const Vec3& q) {
  const Vec3 u = p - at;
  const Vec3 v = q - at;
  return std::atan2(norm(cross(u, v)), dot(u, v));
}

}  // namespace

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * norm(cross(b - a, c - a));
}

Vec3 triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
  return normalized(cross(b - a, c - a));
}

void validate_mesh(const std::vector<Vec3>& vertices, const std::vector<Face>& faces) {
  const auto n = vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_finite(vertices[i])) {
      throw ValidationError("vertex " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
  std::vector<bool> referenced(n, false);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& t = faces[f];
    for (int k = 0; k < 3; ++k) {
      if (t[k] >= n) {
        throw ValidationError("face " + std::to_string(f) + " references vertex " +
                              std::to_string(t[k]) + " but the mesh has " + std::to_string(n) +
                              " vertices");
      }
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw ValidationError("face " + std::to_string(f) + " repeats a vertex");
    }
    for (int k = 0; k < 3; ++k) referenced[t[k]] = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!referenced[i]) {
      throw ValidationError("vertex " + std::to_string(i) + " is not referenced by any face");
    }
  }

  // Directed edge -> face. A repeated directed edge means two faces with
  // opposite orientation across that edge (or a duplicated face).
  std::unordered_map<std::uint64_t, std::size_t> directed;
  std::unordered_map<std::uint64_t, int> undirected;
  directed.reserve(faces.size() * 3);
  undirected.reserve(faces.size() * 3);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& t = faces[f];
    for (int k = 0; k < 3; ++k) {
      const Index a = t[k];
      const Index b = t[(k + 1) % 3];
      if (auto [it, inserted] = directed.emplace(edge_key(a, b), f); !inserted) {
        throw ValidationError("face " + std::to_string(f) + " is inconsistently oriented with face " +
                              std::to_string(it->second) + " along edge (" + std::to_string(a) +
                              ", " + std::to_string(b) + ")");
      }
      if (++undirected[edge_key(std::min(a, b), std::max(a, b))] > 2) {
        throw NonManifoldEdge("edge (" + std::to_string(std::min(a, b)) + ", " +
                              std::to_string(std::max(a, b)) + ") has more than two faces; face " +
                              std::to_string(f));
      }
    }
  }

  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& t = faces[f];
    const double area = triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    if (!(area >= kDegenerateAreaEps)) {
      throw DegenerateFace("face " + std::to_string(f) + " has area " + std::to_string(area) +
                           " below the degeneracy threshold");
    }
  }
}

Mesh::Mesh(std::vector<Vec3> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  validate_mesh(vertices_, faces_);
}

Mesh Mesh::with_positions(std::vector<Vec3> positions) const {
  if (positions.size() != vertices_.size()) {
    throw ValidationError("with_positions: expected " + std::to_string(vertices_.size()) +
                          " positions, got " + std::to_string(positions.size()));
  }
  Mesh out(std::move(positions), faces_);
  out.attributes_ = attributes_;
  return out;
}

FaceGeometry face_geometry(const Mesh& mesh, std::size_t face_id) {
  const Face& t = mesh.face(face_id);
  const std::array<Vec3, 3> p{mesh.vertex(t[0]), mesh.vertex(t[1]), mesh.vertex(t[2])};
  FaceGeometry g;
  g.area = triangle_area(p[0], p[1], p[2]);
  if (!(g.area >= kDegenerateAreaEps)) {
    throw DegenerateFace("face " + std::to_string(face_id) + " is degenerate");
  }
  for (int j = 0; j < 3; ++j) {
    const Vec3& a = p[(j + 1) % 3];
    const Vec3& b = p[(j + 2) % 3];
    g.opposite_edges[j] = b - a;
    g.angles[j] = corner_angle(p[j], a, b);
  }
  return g;
}

std::vector<EdgeInfo> build_edge_table(const Mesh& mesh) {
  std::unordered_map<std::uint64_t, std::size_t> slot;
  std::vector<EdgeInfo> edges;
  slot.reserve(mesh.num_faces() * 2);
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const Face& t = mesh.face(f);
    for (int k = 0; k < 3; ++k) {
      const Index a = std::min(t[k], t[(k + 1) % 3]);
      const Index b = std::max(t[k], t[(k + 1) % 3]);
      auto [it, inserted] = slot.emplace(edge_key(a, b), edges.size());
      if (inserted) {
        EdgeInfo e;
        e.endpoints = {a, b};
        e.length = norm(mesh.vertex(b) - mesh.vertex(a));
        edges.push_back(e);
      }
      EdgeInfo& e = edges[it->second];
      if (e.face_count == 2) {
        throw NonManifoldEdge("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                              ") has more than two incident faces");
      }
      e.faces[e.face_count++] = static_cast<Index>(f);
    }
  }
  std::sort(edges.begin(), edges.end(),
            [](const EdgeInfo& x, const EdgeInfo& y) { return x.endpoints < y.endpoints; });
  return edges;
}

double min_angle(const Mesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const FaceGeometry g = face_geometry(mesh, f);
    for (double a : g.angles) best = std::min(best, a);
  }
  return best;
}

std::vector<std::vector<Index>> vertex_neighbors(const Mesh& mesh) {
  std::vector<std::vector<Index>> adj(mesh.num_vertices());
  for (const Face& t : mesh.faces()) {
    for (int k = 0; k < 3; ++k) {
      adj[t[k]].push_back(t[(k + 1) % 3]);
      adj[t[k]].push_back(t[(k + 2) % 3]);
    }
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

std::vector<int> incident_face_counts(const Mesh& mesh) {
  std::vector<int> counts(mesh.num_vertices(), 0);
  for (const Face& t : mesh.faces()) {
    for (Index v : t) ++counts[v];
  }
  return counts;
}

std::vector<Vec3> vertex_normals(const Mesh& mesh) {
  std::vector<Vec3> normals(mesh.num_vertices());
  for (const Face& t : mesh.faces()) {
    // |cross| = 2 * area, so this is area weighting.
    const Vec3 n = cross(mesh.vertex(t[1]) - mesh.vertex(t[0]), mesh.vertex(t[2]) - mesh.vertex(t[0]));
    for (Index v : t) normals[v] += n;
  }
  for (auto& n : normals) n = normalized(n);
  return normals;
}

}  // namespace surfnet
