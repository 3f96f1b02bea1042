#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "surfnet/vec3.hpp"

namespace surfnet {

/// q = a + b i + c j + d k.
struct Quaternion {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;

  friend constexpr bool operator==(const Quaternion&, const Quaternion&) = default;
};

constexpr Quaternion operator+(const Quaternion& p, const Quaternion& q) {
  return {p.a + q.a, p.b + q.b, p.c + q.c, p.d + q.d};
}
constexpr Quaternion operator-(const Quaternion& p, const Quaternion& q) {
  return {p.a - q.a, p.b - q.b, p.c - q.c, p.d - q.d};
}
constexpr Quaternion operator*(double s, const Quaternion& q) { return {s * q.a, s * q.b, s * q.c, s * q.d}; }

/// Embeds R^3 in the imaginary quaternions: (0, x, y, z).
constexpr Quaternion from_vector3(const Vec3& v) { return {0.0, v.x, v.y, v.z}; }

/// Hamilton product, i^2 = j^2 = k^2 = ijk = -1.
constexpr Quaternion qmul(const Quaternion& p, const Quaternion& q) {
  return {p.a * q.a - p.b * q.b - p.c * q.c - p.d * q.d,
          p.a * q.b + p.b * q.a + p.c * q.d - p.d * q.c,
          p.a * q.c - p.b * q.d + p.c * q.a + p.d * q.b,
          p.a * q.d + p.b * q.c - p.c * q.b + p.d * q.a};
}

constexpr Quaternion conjugate(const Quaternion& q) { return {q.a, -q.b, -q.c, -q.d}; }

inline double qnorm(const Quaternion& q) { return std::sqrt(q.a * q.a + q.b * q.b + q.c * q.c + q.d * q.d); }

/// Real 4x4 matrix (row-major) of left multiplication by a quaternion:
///   [a -b -c -d]
///   [b  a -d  c]
///   [c  d  a -b]
///   [d -c  b  a]
/// so that to_block(q) * vec(p) = vec(q p), and the block of conj(q) is the
/// transpose of the block of q.
struct QuatBlock {
  std::array<double, 16> m{};

  constexpr double operator()(int r, int c) const { return m[4 * r + c]; }
  constexpr double& operator()(int r, int c) { return m[4 * r + c]; }

  friend constexpr bool operator==(const QuatBlock&, const QuatBlock&) = default;
};

constexpr QuatBlock to_block(const Quaternion& q) {
  return QuatBlock{{q.a, -q.b, -q.c, -q.d,  //
                    q.b, q.a, -q.d, q.c,    //
                    q.c, q.d, q.a, -q.b,    //
                    q.d, -q.c, q.b, q.a}};
}

/// True when m has the left-multiplication structure within tol (max abs).
bool block_is_valid(const QuatBlock& m, double tol = 1e-12);

/// Inverse of to_block. Throws InvalidBlock if the structure check fails.
Quaternion from_block(const QuatBlock& m, double tol = 1e-12);

QuatBlock block_multiply(const QuatBlock& x, const QuatBlock& y);
QuatBlock block_transpose(const QuatBlock& x);

/// Feature vectors of length 4n are n quaternion lanes packed (a,b,c,d)
/// contiguously. Throws NonQuadChannels when the length is not a multiple
/// of four.
std::vector<Quaternion> split_lanes(std::span<const double> features);
std::vector<double> join_lanes(std::span<const Quaternion> lanes);

}  // namespace surfnet
