#include "surfnet/meshmnist.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include "surfnet/error.hpp"

namespace surfnet {

namespace {

double dist2(Point2 a, Point2 b) { return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y); }

// Uniform grid with cells of side r / sqrt(2): at most one sample per cell,
// and any sample closer than r lies within two cells.
class SampleGrid {
 public:
  SampleGrid(double r, double extent) : r_(r), extent_(extent), cell_(r / std::numbers::sqrt2) {
    n_ = static_cast<long>(std::ceil(extent / cell_)) + 1;
    cells_.assign(static_cast<std::size_t>(n_ * n_), -1);
  }

  bool admissible(Point2 p) const {
    if (!(p.x >= 0.0 && p.x <= extent_ && p.y >= 0.0 && p.y <= extent_)) return false;
    const long cx = cell_of(p.x), cy = cell_of(p.y);
    for (long i = std::max(0L, cx - 2); i <= std::min(n_ - 1, cx + 2); ++i) {
      for (long j = std::max(0L, cy - 2); j <= std::min(n_ - 1, cy + 2); ++j) {
        const int k = cells_[static_cast<std::size_t>(i * n_ + j)];
        if (k >= 0 && dist2(points_[static_cast<std::size_t>(k)], p) < r_ * r_) return false;
      }
    }
    return true;
  }

  void insert(Point2 p) {
    cells_[static_cast<std::size_t>(cell_of(p.x) * n_ + cell_of(p.y))] = static_cast<int>(points_.size());
    points_.push_back(p);
  }

  const std::vector<Point2>& points() const { return points_; }

  /// Indices of samples within distance d of p.
  template <class F>
  void for_near(Point2 p, double d, F&& f) const {
    const long reach = static_cast<long>(std::ceil(d / cell_));
    const long cx = cell_of(p.x), cy = cell_of(p.y);
    for (long i = std::max(0L, cx - reach); i <= std::min(n_ - 1, cx + reach); ++i) {
      for (long j = std::max(0L, cy - reach); j <= std::min(n_ - 1, cy + reach); ++j) {
        const int k = cells_[static_cast<std::size_t>(i * n_ + j)];
        if (k >= 0 && dist2(points_[static_cast<std::size_t>(k)], p) <= d * d) f(static_cast<std::size_t>(k));
      }
    }
  }

 private:
  long cell_of(double v) const { return std::clamp(static_cast<long>(v / cell_), 0L, n_ - 1); }

  double r_, extent_, cell_;
  long n_ = 0;
  std::vector<int> cells_;
  std::vector<Point2> points_;
};

// Vertices of the region of the square not covered by the open r-disks:
// square corners, circle/edge and circle/circle intersections, and the
// axis-extreme points of each circle, each pushed 1e-9 r away from the
// circles that define it.
std::vector<Point2> gap_candidates(const std::vector<Point2>& pts, std::size_t from, double r, double extent,
                                   const SampleGrid* grid) {
  const double nudge = 1e-9 * r;
  std::vector<Point2> out;
  if (from == 0) out = {{0, 0}, {0, extent}, {extent, 0}, {extent, extent}};
  for (std::size_t a = from; a < pts.size(); ++a) {
    const Point2 c = pts[a];
    const double rr = r + nudge;
    out.push_back({c.x - rr, c.y});
    out.push_back({c.x + rr, c.y});
    out.push_back({c.x, c.y - rr});
    out.push_back({c.x, c.y + rr});
    for (double e : {0.0, extent}) {
      const double dx = std::abs(c.x - e);
      if (dx < r) {
        const double h = std::sqrt(r * r - dx * dx) + nudge;
        out.push_back({e, c.y - h});
        out.push_back({e, c.y + h});
      }
      const double dy = std::abs(c.y - e);
      if (dy < r) {
        const double h = std::sqrt(r * r - dy * dy) + nudge;
        out.push_back({c.x - h, e});
        out.push_back({c.x + h, e});
      }
    }
    auto pair_with = [&](std::size_t b) {
      const Point2 o = pts[b];
      const double d2 = dist2(c, o);
      if (d2 == 0.0 || d2 > 4 * r * r) return;
      const double d = std::sqrt(d2);
      const double h = std::sqrt(std::max(0.0, r * r - d2 / 4)) + nudge;
      const Point2 m{(c.x + o.x) / 2, (c.y + o.y) / 2};
      const Point2 perp{-(o.y - c.y) / d, (o.x - c.x) / d};
      out.push_back({m.x + h * perp.x, m.y + h * perp.y});
      out.push_back({m.x - h * perp.x, m.y - h * perp.y});
    };
    if (grid) {
      grid->for_near(c, 2 * r, [&](std::size_t b) {
        if (b != a) pair_with(b);
      });
    } else {
      for (std::size_t b = 0; b < pts.size(); ++b) {
        if (b != a) pair_with(b);
      }
    }
  }
  return out;
}

}  // namespace

std::vector<Point2> poisson_disk_sample(double r, std::uint64_t seed, double extent) {
  if (!(r > 0.0)) throw ValidationError("poisson_disk_sample: r must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SampleGrid grid(r, extent);
  grid.insert({extent * u01(rng), extent * u01(rng)});
  std::vector<std::size_t> active{0};
  constexpr int kCandidates = 30;
  while (!active.empty()) {
    const std::size_t slot = static_cast<std::size_t>(u01(rng) * static_cast<double>(active.size()));
    const Point2 c = grid.points()[active[std::min(slot, active.size() - 1)]];
    bool found = false;
    for (int k = 0; k < kCandidates; ++k) {
      const double rad = r * (1.0 + u01(rng));
      const double ang = 2 * std::numbers::pi * u01(rng);
      const Point2 p{c.x + rad * std::cos(ang), c.y + rad * std::sin(ang)};
      if (grid.admissible(p)) {
        active.push_back(grid.points().size());
        grid.insert(p);
        found = true;
        break;
      }
    }
    if (!found) {
      active[std::min(slot, active.size() - 1)] = active.back();
      active.pop_back();
    }
  }
  // Fill whatever the dart thrower left uncovered. New samples only create
  // candidates near themselves, so later passes restart from them, but
  // pairs with older samples are still enumerated through the grid.
  std::size_t from = 0;
  while (true) {
    const std::size_t before = grid.points().size();
    const std::vector<Point2> cands = gap_candidates(grid.points(), from, r, extent, &grid);
    for (const Point2& p : cands) {
      if (grid.admissible(p)) grid.insert(p);
    }
    if (grid.points().size() == before) break;
    from = before;
  }
  return grid.points();
}

bool poisson_has_gap(std::span<const Point2> points, double r, double extent) {
  const std::vector<Point2> pts(points.begin(), points.end());
  for (const Point2& p : gap_candidates(pts, 0, r, extent, nullptr)) {
    if (!(p.x >= 0.0 && p.x <= extent && p.y >= 0.0 && p.y <= extent)) continue;
    bool free = true;
    for (const Point2& q : pts) {
      if (dist2(p, q) < r * r) {
        free = false;
        break;
      }
    }
    if (free) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Delaunay

namespace {

double orient(Point2 a, Point2 b, Point2 c) { return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x); }

using Tri = std::array<std::size_t, 3>;

std::uint64_t edge_key(std::size_t u, std::size_t v) { return (static_cast<std::uint64_t>(u) << 32) | v; }

// Diagonal preference on ties: smaller (max, min) pair wins.
std::pair<std::size_t, std::size_t> diag_key(std::size_t u, std::size_t v) { return {std::max(u, v), std::min(u, v)}; }

}  // namespace

InCircle incircle(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double al = adx * adx + ady * ady, bl = bdx * bdx + bdy * bdy, cl = cdx * cdx + cdy * cdy;
  InCircle r;
  r.det = al * (bdx * cdy - cdx * bdy) + bl * (cdx * ady - adx * cdy) + cl * (adx * bdy - bdx * ady);
  r.bound = al * (std::abs(bdx * cdy) + std::abs(cdx * bdy)) + bl * (std::abs(cdx * ady) + std::abs(adx * cdy)) +
            cl * (std::abs(adx * bdy) + std::abs(bdx * ady));
  return r;
}

Mesh delaunay_triangulate(std::span<const Point2> input) {
  const std::size_t n = input.size();
  if (n < 3) throw DegenerateInput("delaunay_triangulate: need at least 3 points, got " + std::to_string(n));
  {
    std::vector<std::pair<double, double>> s;
    for (const Point2& p : input) s.emplace_back(p.x, p.y);
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw DegenerateInput("delaunay_triangulate: duplicate points");
  }
  double minx = input[0].x, maxx = minx, miny = input[0].y, maxy = miny;
  for (const Point2& p : input) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  const double span = std::max(maxx - minx, maxy - miny);
  {
    bool collinear = true;
    for (std::size_t i = 2; i < n && collinear; ++i) {
      if (std::abs(orient(input[0], input[1], input[i])) > 1e-12 * span * span) collinear = false;
    }
    if (collinear) throw DegenerateInput("delaunay_triangulate: all points are collinear");
  }

  std::vector<Point2> p(input.begin(), input.end());
  const double cx = (minx + maxx) / 2, cy = (miny + maxy) / 2, big = 100.0 * span;
  p.push_back({cx - 2 * big, cy - big});
  p.push_back({cx + 2 * big, cy - big});
  p.push_back({cx, cy + 2 * big});

  std::vector<Tri> tris{{n, n + 1, n + 2}};
  std::vector<bool> alive{true};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> bad;
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (alive[t] && incircle(p[tris[t][0]], p[tris[t][1]], p[tris[t][2]], p[i]).det > 0.0) bad.push_back(t);
    }
    std::map<std::uint64_t, int> edges;  // directed edge -> count of bad triangles using it or its twin
    for (std::size_t t : bad) {
      for (int k = 0; k < 3; ++k) edges[edge_key(tris[t][k], tris[t][(k + 1) % 3])] += 1;
    }
    for (std::size_t t : bad) {
      alive[t] = false;
      for (int k = 0; k < 3; ++k) {
        const std::size_t a = tris[t][k], b = tris[t][(k + 1) % 3];
        if (edges.count(edge_key(b, a))) continue;  // interior to the cavity
        tris.push_back({a, b, i});
        alive.push_back(true);
      }
    }
  }

  std::vector<Tri> out;
  for (std::size_t t = 0; t < tris.size(); ++t) {
    if (alive[t] && tris[t][0] < n && tris[t][1] < n && tris[t][2] < n) out.push_back(tris[t]);
  }
  p.resize(n);

  // Hull repair: a finite super-triangle can leave concave notches along
  // the hull. Close reflex boundary corners until the boundary is convex.
  for (int guard = 0; guard < 100000; ++guard) {
    std::map<std::uint64_t, std::size_t> directed;
    for (std::size_t t = 0; t < out.size(); ++t) {
      for (int k = 0; k < 3; ++k) directed[edge_key(out[t][k], out[t][(k + 1) % 3])] = t;
    }
    std::map<std::size_t, std::size_t> next;  // boundary successor
    for (const auto& [key, t] : directed) {
      const std::size_t a = key >> 32, b = key & 0xffffffffu;
      if (!directed.count(edge_key(b, a))) next[a] = b;
    }
    bool changed = false;
    for (const auto& [a, b] : next) {
      const std::size_t c = next.at(b);
      if (c == a) continue;
      if (orient(p[a], p[b], p[c]) < -1e-12 * span * span) {
        out.push_back({a, c, b});
        changed = true;
        break;
      }
    }
    if (!changed) break;
  }

  // Lawson flips: restore the empty-circle property after the repair and
  // settle cocircular ties by the diagonal rule.
  for (int sweep = 0; sweep < 1000; ++sweep) {
    std::map<std::uint64_t, std::pair<std::size_t, int>> directed;
    for (std::size_t t = 0; t < out.size(); ++t) {
      for (int k = 0; k < 3; ++k) directed[edge_key(out[t][k], out[t][(k + 1) % 3])] = {t, k};
    }
    bool flipped = false;
    std::vector<bool> touched(out.size(), false);
    for (const auto& [key, tk] : directed) {
      const std::size_t a = key >> 32, b = key & 0xffffffffu;
      if (a > b) continue;
      const auto twin = directed.find(edge_key(b, a));
      if (twin == directed.end()) continue;
      const auto [t1, k1] = tk;
      const auto [t2, k2] = twin->second;
      if (touched[t1] || touched[t2]) continue;
      const std::size_t c = out[t1][(k1 + 2) % 3], d = out[t2][(k2 + 2) % 3];
      const InCircle ic = incircle(p[a], p[b], p[c], p[d]);
      const bool flip = ic.inside() || (ic.cocircular() && diag_key(c, d) < diag_key(a, b));
      if (!flip) continue;
      // New diagonal c-d; both triangles stay CCW when the quad is convex.
      if (orient(p[c], p[a], p[d]) <= 0.0 || orient(p[d], p[b], p[c]) <= 0.0) continue;
      out[t1] = {c, a, d};
      out[t2] = {d, b, c};
      touched[t1] = touched[t2] = true;
      flipped = true;
    }
    if (!flipped) break;
  }

  std::vector<Vec3> v;
  v.reserve(n);
  for (const Point2& q : p) v.push_back({q.x, q.y, 0.0});
  std::vector<Face> faces;
  faces.reserve(out.size());
  for (const Tri& t : out) faces.push_back({static_cast<Index>(t[0]), static_cast<Index>(t[1]), static_cast<Index>(t[2])});
  return Mesh(std::move(v), std::move(faces));
}

Mesh trim_boundary_slivers(const Mesh& mesh, double max_angle) {
  const double limit = max_angle * std::numbers::pi / 180.0;
  std::vector<Face> faces = mesh.faces();
  std::vector<bool> alive(faces.size(), true);
  auto key = [](Index a, Index b) { return (std::uint64_t{std::min(a, b)} << 32) | std::max(a, b); };
  std::map<std::uint64_t, int> uses;
  for (const Face& f : faces) {
    for (int k = 0; k < 3; ++k) ++uses[key(f[k], f[(k + 1) % 3])];
  }
  std::vector<int> boundary_edges(mesh.num_vertices(), 0);
  for (const auto& [e, c] : uses) {
    if (c == 1) {
      ++boundary_edges[e >> 32];
      ++boundary_edges[e & 0xffffffffu];
    }
  }
  // Peel one triangle at a time: it must have exactly one boundary edge and
  // an interior apex, so the surface stays a manifold disc with every vertex.
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t t = 0; t < faces.size(); ++t) {
      if (!alive[t]) continue;
      const Face& f = faces[t];
      int open = -1, count = 0;
      for (int k = 0; k < 3; ++k) {
        if (uses[key(f[k], f[(k + 1) % 3])] == 1) {
          open = k;
          ++count;
        }
      }
      if (count != 1) continue;
      const Index a = f[open], b = f[(open + 1) % 3], apex = f[(open + 2) % 3];
      if (boundary_edges[apex] != 0) continue;
      const Vec3 u = mesh.vertex(a) - mesh.vertex(apex), w = mesh.vertex(b) - mesh.vertex(apex);
      const double angle = std::atan2(norm(cross(u, w)), dot(u, w));
      if (angle <= limit) continue;
      alive[t] = false;
      uses.erase(key(a, b));
      --boundary_edges[a];
      --boundary_edges[b];
      for (const auto [x, y] : {std::pair{a, apex}, std::pair{b, apex}}) {
        --uses[key(x, y)];
        ++boundary_edges[x];
        ++boundary_edges[y];
      }
      changed = true;
    }
  }
  std::vector<Face> kept;
  for (std::size_t t = 0; t < faces.size(); ++t) {
    if (alive[t]) kept.push_back(faces[t]);
  }
  return Mesh(mesh.vertices(), std::move(kept));
}

// ---------------------------------------------------------------------------
// Images

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError(path.string() + ": truncated IDX header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

}  // namespace

std::vector<Image> read_idx_images(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (read_be32(in, path) != 0x00000803) throw ParseError(path.string() + ": not an IDX image file (magic)");
  const std::uint32_t count = read_be32(in, path), rows = read_be32(in, path), cols = read_be32(in, path);
  std::vector<Image> out(count);
  for (Image& im : out) {
    im.rows = rows;
    im.cols = cols;
    im.pixels.resize(std::size_t{rows} * cols);
    if (!in.read(reinterpret_cast<char*>(im.pixels.data()), static_cast<std::streamsize>(im.pixels.size())))
      throw ParseError(path.string() + ": truncated IDX image data");
  }
  return out;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (read_be32(in, path) != 0x00000801) throw ParseError(path.string() + ": not an IDX label file (magic)");
  std::vector<std::uint8_t> out(read_be32(in, path));
  if (!in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size())))
    throw ParseError(path.string() + ": truncated IDX label data");
  return out;
}

namespace {

using Stroke = std::vector<Point2>;  // (row, col) in the unit square

std::vector<Stroke> ellipse(double r0, double c0, double rr, double rc, int n = 16) {
  Stroke s;
  for (int k = 0; k <= n; ++k) {
    const double a = 2 * std::numbers::pi * k / n;
    s.push_back({r0 + rr * std::sin(a), c0 + rc * std::cos(a)});
  }
  return {s};
}

std::vector<Stroke> glyph_template(int label) {
  switch (label) {
    case 0: return ellipse(0.5, 0.5, 0.36, 0.24);
    case 1: return {{{0.25, 0.4}, {0.12, 0.55}, {0.88, 0.55}}};
    case 2: return {{{0.3, 0.25}, {0.14, 0.5}, {0.3, 0.75}, {0.5, 0.62}, {0.86, 0.25}, {0.86, 0.78}}};
    case 3: return {{{0.15, 0.28}, {0.13, 0.7}, {0.45, 0.45}, {0.62, 0.72}, {0.86, 0.58}, {0.84, 0.28}}};
    case 4: return {{{0.12, 0.6}, {0.62, 0.2}, {0.62, 0.82}}, {{0.3, 0.65}, {0.88, 0.65}}};
    case 5: return {{{0.14, 0.75}, {0.14, 0.3}, {0.45, 0.28}, {0.5, 0.65}, {0.76, 0.72}, {0.88, 0.42}, {0.8, 0.25}}};
    case 6: return {{{0.14, 0.66}, {0.5, 0.28}, {0.82, 0.36}, {0.82, 0.66}, {0.56, 0.68}, {0.5, 0.33}}};
    case 7: return {{{0.15, 0.25}, {0.15, 0.76}, {0.88, 0.4}}};
    case 8: {
      auto a = ellipse(0.3, 0.5, 0.17, 0.17);
      auto b = ellipse(0.68, 0.5, 0.2, 0.21);
      a.push_back(b[0]);
      return a;
    }
    default: {
      auto a = ellipse(0.33, 0.5, 0.19, 0.18);
      a.push_back({{0.33, 0.68}, {0.88, 0.6}});
      return a;
    }
  }
}

double segment_dist2(Point2 p, Point2 a, Point2 b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return dist2(p, {a.x + t * vx, a.y + t * vy});
}

}  // namespace

Image synthetic_glyph(int label, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double rot = 0.2 * u(rng), sc = 0.95 + 0.12 * u(rng), shear = 0.15 * u(rng);
  const double tr = 0.05 * u(rng), tc = 0.05 * u(rng), sigma = 1.2 + 0.25 * u(rng);
  std::vector<Stroke> strokes = glyph_template(((label % 10) + 10) % 10);
  for (Stroke& s : strokes) {
    for (Point2& q : s) {
      const double r = q.x - 0.5 + 0.02 * u(rng), c = q.y - 0.5 + 0.02 * u(rng);
      const double r1 = std::cos(rot) * r - std::sin(rot) * c, c1 = std::sin(rot) * r + std::cos(rot) * c + shear * r;
      // Glyphs fill about 20 of the 28 pixels, as in MNIST.
      q = {14.0 + 20.0 * sc * (r1 + tr), 14.0 + 20.0 * sc * (c1 + tc)};
    }
  }
  Image im;
  im.pixels.resize(im.rows * im.cols);
  for (std::size_t i = 0; i < im.rows; ++i) {
    for (std::size_t j = 0; j < im.cols; ++j) {
      const Point2 p{static_cast<double>(i), static_cast<double>(j)};
      double d2 = 1e300;
      for (const Stroke& s : strokes) {
        for (std::size_t k = 0; k + 1 < s.size(); ++k) d2 = std::min(d2, segment_dist2(p, s[k], s[k + 1]));
      }
      im.pixels[i * im.cols + j] = static_cast<std::uint8_t>(std::lround(255.0 * std::exp(-d2 / (2 * sigma * sigma))));
    }
  }
  return im;
}

double bilinear(const Image& image, double x, double y) {
  const double xmax = static_cast<double>(image.rows - 1), ymax = static_cast<double>(image.cols - 1);
  if (!(x >= 0.0 && x <= xmax && y >= 0.0 && y <= ymax)) {
    throw OutOfDomain("point (" + std::to_string(x) + ", " + std::to_string(y) + ") outside the image domain");
  }
  const std::size_t i0 = std::min(static_cast<std::size_t>(x), image.rows - 2);
  const std::size_t j0 = std::min(static_cast<std::size_t>(y), image.cols - 2);
  const double tx = x - static_cast<double>(i0), ty = y - static_cast<double>(j0);
  return (1 - tx) * (1 - ty) * image.at(i0, j0) + tx * (1 - ty) * image.at(i0 + 1, j0) +
         (1 - tx) * ty * image.at(i0, j0 + 1) + tx * ty * image.at(i0 + 1, j0 + 1);
}

HeightFieldMesh make_heightfield(const Mesh& base, std::vector<double> depth) {
  if (depth.size() != base.num_vertices()) throw DimensionMismatch("depth size differs from vertex count");
  std::vector<Vec3> flat, up;
  for (std::size_t i = 0; i < base.num_vertices(); ++i) {
    const Vec3& v = base.vertex(i);
    flat.push_back({v.x, v.y, 0.0});
    up.push_back({v.x, v.y, depth[i]});
  }
  HeightFieldMesh h{base.with_positions(std::move(flat)), base.with_positions(std::move(up)), std::move(depth)};
  h.lifted.attributes().scalars["depth"] = h.depth;
  return h;
}

HeightFieldMesh lift_heightfield(const Mesh& base, const Image& image, bool raw) {
  std::vector<double> depth(base.num_vertices());
  for (std::size_t i = 0; i < base.num_vertices(); ++i) {
    const double g = bilinear(image, base.vertex(i).x, base.vertex(i).y);
    depth[i] = raw ? g : g / 255.0;
  }
  return make_heightfield(base, std::move(depth));
}

// ---------------------------------------------------------------------------

MeshMnistSample make_meshmnist_sample(std::uint64_t seed, const MeshMnistOptions& options,
                                      std::span<const Image> images, std::span<const std::uint8_t> labels) {
  std::mt19937_64 rng(seed);
  const std::uint64_t point_seed = rng(), glyph_seed = rng();
  MeshMnistSample s;
  s.seed = seed;
  Image image;
  if (images.empty()) {
    s.label = static_cast<int>(rng() % 10);
    image = synthetic_glyph(s.label, glyph_seed);
  } else {
    const std::size_t k = seed % images.size();
    image = images[k];
    s.label = k < labels.size() ? labels[k] : -1;
  }
  const double extent = static_cast<double>(std::min(image.rows, image.cols) - 1);
  const Mesh base = trim_boundary_slivers(delaunay_triangulate(poisson_disk_sample(options.radius, point_seed, extent)));
  s.mesh = lift_heightfield(base, image, options.raw);
  return s;
}

MeshMnistSample make_meshmnist_sample(std::uint64_t seed, const MeshMnistOptions& options) {
  std::vector<Image> images;
  std::vector<std::uint8_t> labels;
  if (options.idx_images) images = read_idx_images(*options.idx_images);
  if (options.idx_labels) labels = read_idx_labels(*options.idx_labels);
  return make_meshmnist_sample(seed, options, images, labels);
}

nlohmann::json write_meshmnist_dataset(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed,
                                       const MeshMnistOptions& options) {
  std::filesystem::create_directories(dir);
  std::vector<Image> images;
  std::vector<std::uint8_t> labels;
  if (options.idx_images) images = read_idx_images(*options.idx_images);
  if (options.idx_labels) labels = read_idx_labels(*options.idx_labels);
  nlohmann::json manifest{{"count", count},
                          {"seed", seed},
                          {"radius", options.radius},
                          {"raw", options.raw},
                          {"source", images.empty() ? "synthetic" : "idx"},
                          {"samples", nlohmann::json::array()}};
  for (std::size_t k = 0; k < count; ++k) {
    const std::uint64_t s = seed + k;
    const MeshMnistSample sample = make_meshmnist_sample(s, options, images, labels);
    const std::string name = "sample_" + std::to_string(s) + ".off";
    save_mesh(sample.mesh.lifted, dir / name);
    save_attributes(sample.mesh.lifted.attributes(), attribute_sidecar_path(dir / name));
    manifest["samples"].push_back({{"file", name},
                                   {"seed", s},
                                   {"label", sample.label},
                                   {"vertices", sample.mesh.lifted.num_vertices()},
                                   {"faces", sample.mesh.lifted.num_faces()}});
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
  return manifest;
}

std::vector<MeshMnistSample> read_meshmnist_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  }
  std::vector<MeshMnistSample> out;
  for (const auto& entry : manifest.at("samples")) {
    const std::filesystem::path file = dir / entry.at("file").get<std::string>();
    const Mesh lifted = load_mesh(file);
    std::vector<double> depth;
    for (const Vec3& v : lifted.vertices()) depth.push_back(v.z);
    MeshMnistSample s;
    s.seed = entry.at("seed").get<std::uint64_t>();
    s.label = entry.at("label").get<int>();
    s.mesh = make_heightfield(lifted, std::move(depth));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace surfnet
