#include "surfnet/shapes.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <utility>

#include "surfnet/error.hpp"

namespace surfnet::shapes {

Mesh unit_right_triangle() { return Mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}}); }

Mesh square_pair() {
  return Mesh({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}}, {{0, 1, 2}, {0, 2, 3}});
}

Mesh tetrahedron() {
  const double s = 1.0 / std::sqrt(2.0);
  std::vector<Vec3> v{{1, 0, -s}, {-1, 0, -s}, {0, 1, s}, {0, -1, s}};
  std::vector<Face> f{{0, 2, 3}, {1, 3, 2}, {0, 3, 1}, {0, 1, 2}};
  // Orient every face outward.
  Vec3 centroid;
  for (const auto& p : v) centroid += p / 4.0;
  for (auto& t : f) {
    const Vec3 n = cross(v[t[1]] - v[t[0]], v[t[2]] - v[t[0]]);
    const Vec3 c = (v[t[0]] + v[t[1]] + v[t[2]]) / 3.0;
    if (dot(n, c - centroid) < 0) std::swap(t[1], t[2]);
  }
  return Mesh(std::move(v), std::move(f));
}

Mesh equilateral_triangle() {
  return Mesh({{0, 0, 0}, {1, 0, 0}, {0.5, std::sqrt(3.0) / 2.0, 0}}, {{0, 1, 2}});
}

Mesh equilateral_patch() {
  std::vector<Vec3> v{{0, 0, 0}};
  for (int k = 0; k < 6; ++k) {
    const double a = k * std::numbers::pi / 3.0;
    v.push_back({std::cos(a), std::sin(a), 0});
  }
  std::vector<Face> f;
  for (Index k = 0; k < 6; ++k) f.push_back({0, 1 + k, 1 + (k + 1) % 6});
  return Mesh(std::move(v), std::move(f));
}

Mesh icosphere(int subdivisions, double radius) {
  if (subdivisions < 0) throw ValidationError("icosphere: negative subdivision level");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v{{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
                      {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p = normalized(p);
  std::vector<Face> f{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<Index, Index>, Index> midpoint;
    auto mid = [&](Index a, Index b) {
      const auto key = std::minmax(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      v.push_back(normalized((v[a] + v[b]) * 0.5));
      const auto idx = static_cast<Index>(v.size() - 1);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const Face& tri : f) {
      const Index ab = mid(tri[0], tri[1]);
      const Index bc = mid(tri[1], tri[2]);
      const Index ca = mid(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  for (auto& p : v) p *= radius;
  return Mesh(std::move(v), std::move(f));
}

Mesh planar_grid(int nx, int ny, double width, double height) {
  if (nx < 1 || ny < 1) throw ValidationError("planar_grid: need at least one cell per side");
  std::vector<Vec3> v;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) v.push_back({width * i / nx, height * j / ny, 0.0});
  }
  auto id = [nx](int i, int j) { return static_cast<Index>(j * (nx + 1) + i); };
  std::vector<Face> f;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return Mesh(std::move(v), std::move(f));
}

Mesh torus(int nu, int nv, double major_radius, double minor_radius, double jitter,
           std::uint64_t seed) {
  if (nu < 3 || nv < 3) throw ValidationError("torus: need at least 3 samples per direction");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  const double du = 2.0 * std::numbers::pi / nu;
  const double dv = 2.0 * std::numbers::pi / nv;
  std::vector<Vec3> v;
  v.reserve(static_cast<std::size_t>(nu) * nv);
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nv; ++j) {
      const double u = (i + jitter * unit(rng)) * du;
      const double w = (j + jitter * unit(rng)) * dv;
      const double ring = major_radius + minor_radius * std::cos(w);
      v.push_back({ring * std::cos(u), ring * std::sin(u), minor_radius * std::sin(w)});
    }
  }
  auto id = [nu, nv](int i, int j) { return static_cast<Index>(((i + nu) % nu) * nv + (j + nv) % nv); };
  std::vector<Face> f;
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nv; ++j) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return Mesh(std::move(v), std::move(f));
}

}  // namespace surfnet::shapes
