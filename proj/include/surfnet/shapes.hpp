#pragma once

#include <cstdint>

#include "surfnet/mesh.hpp"

namespace surfnet::shapes {

/// (0,0,0), (1,0,0), (0,1,0).
Mesh unit_right_triangle();

/// Unit square in the z = 0 plane split along the (0,0)-(1,1) diagonal.
Mesh square_pair();

/// Regular tetrahedron surface, outward-facing CCW faces.
Mesh tetrahedron();

/// Single equilateral triangle of unit side.
Mesh equilateral_triangle();

/// Hexagonal fan of six equilateral triangles around a central vertex.
Mesh equilateral_patch();

/// Subdivided icosahedron projected on a sphere. Subdivision s has
/// 10 * 4^s + 2 vertices (s = 3 gives 642).
Mesh icosphere(int subdivisions, double radius = 1.0);

/// Regular nx-by-ny grid of the rectangle [0,w] x [0,h] in z = 0, each cell
/// split into two triangles.
Mesh planar_grid(int nx, int ny, double width, double height);

/// Torus with major radius R and minor radius r, sampled on an nu-by-nv
/// parametric grid. jitter (fraction of a grid cell) perturbs the sample
/// parameters deterministically from seed.
Mesh torus(int nu, int nv, double major_radius, double minor_radius, double jitter = 0.0,
           std::uint64_t seed = 0);

}  // namespace surfnet::shapes
