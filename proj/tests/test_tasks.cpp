#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "surfnet/error.hpp"
#include "surfnet/ops.hpp"
#include "surfnet/tasks.hpp"
#include "test_support.hpp"

using namespace surfnet;

namespace {

double brute_min_distance(const std::vector<Point2>& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) best = std::min(best, std::hypot(p[i].x - p[j].x, p[i].y - p[j].y));
  }
  return best;
}

// Circumcircle containment in long double, independent of incircle().
bool strictly_inside_circumcircle(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  using L = long double;
  const L ax = a.x, ay = a.y, bx = b.x, by = b.y, cx = c.x, cy = c.y;
  const L den = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
  const L ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / den;
  const L uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / den;
  const L r2 = (ax - ux) * (ax - ux) + (ay - uy) * (ay - uy);
  const L d2 = (d.x - ux) * (d.x - ux) + (d.y - uy) * (d.y - uy);
  return d2 < r2 * (1 - 1e-9L);
}

std::set<std::pair<Index, Index>> edges_of(const Mesh& m) {
  std::set<std::pair<Index, Index>> e;
  for (const Face& f : m.faces()) {
    for (int k = 0; k < 3; ++k) e.insert(std::minmax(f[k], f[(k + 1) % 3]));
  }
  return e;
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

Image random_image(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image im;
  im.pixels.resize(im.rows * im.cols);
  for (auto& p : im.pixels) p = static_cast<std::uint8_t>(rng() % 256);
  return im;
}

// Strip of k quads along x, split into triangles, unit spacing.
Mesh strip(int k) {
  std::vector<Vec3> v;
  for (int i = 0; i <= k; ++i) {
    v.push_back({double(i), 0.0, 0.0});
    v.push_back({double(i), 1.0, 0.0});
  }
  std::vector<Face> f;
  for (int i = 0; i < k; ++i) {
    const Index a = 2 * i, b = 2 * i + 1, c = 2 * i + 2, d = 2 * i + 3;
    f.push_back({a, c, d});
    f.push_back({a, d, b});
  }
  return Mesh(v, f);
}

Mesh small_sample(std::uint64_t seed, double r = 2.0) {
  MeshMnistOptions o;
  o.radius = r;
  return make_meshmnist_sample(seed, o).mesh.lifted;
}

}  // namespace

// ---------------------------------------------------------------------------
// Poisson sampling

TEST(Poisson, RadiusBeyondTheDiagonalGivesOnePoint) {
  // The domain diagonal is 27 sqrt(2) ~ 38.2, so maximality forces a second
  // point for any smaller radius.
  EXPECT_EQ(poisson_disk_sample(40.0, 1).size(), 1u);
  EXPECT_EQ(poisson_disk_sample(30.0, 1).size(), 2u);
}

TEST(Poisson, HundredSeedsAreSeparatedMaximalAndNearFiveHundred) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = poisson_disk_sample(1.0, seed);
    EXPECT_GE(p.size(), 400u) << seed;
    EXPECT_LE(p.size(), 620u) << seed;
    EXPECT_GE(brute_min_distance(p), 1.0) << seed;
    EXPECT_FALSE(poisson_has_gap(p, 1.0)) << seed;
  }
}

TEST(Poisson, DartsFindNoUncoveredPoint) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, kMnistExtent);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = poisson_disk_sample(1.5, seed);
    for (int k = 0; k < 4000; ++k) {
      const Point2 d{u(rng), u(rng)};
      double best = 1e9;
      for (const Point2& q : p) best = std::min(best, std::hypot(q.x - d.x, q.y - d.y));
      ASSERT_LT(best, 1.5) << "seed " << seed << " dart " << d.x << "," << d.y;
    }
  }
}

TEST(Poisson, DeterministicPerSeed) {
  const auto a = poisson_disk_sample(1.2, 9), b = poisson_disk_sample(1.2, 9);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].y, b[i].y);
  }
}

// ---------------------------------------------------------------------------
// Delaunay

TEST(Delaunay, ThreePointsGiveOneCounterClockwiseTriangle) {
  const std::vector<Point2> p{{0, 0}, {1, 0}, {0, 1}};
  const Mesh m = delaunay_triangulate(p);
  ASSERT_EQ(m.num_faces(), 1u);
  const Face f = m.face(0);
  const Vec3 n = cross(m.vertex(f[1]) - m.vertex(f[0]), m.vertex(f[2]) - m.vertex(f[0]));
  EXPECT_GT(n.z, 0.0);
}

TEST(Delaunay, CocircularSquareTakesTheSmallerMaxIndexDiagonal) {
  for (const auto& p : {std::vector<Point2>{{0, 0}, {1, 0}, {1, 1}, {0, 1}},
                        std::vector<Point2>{{1, 1}, {0, 1}, {0, 0}, {1, 0}}}) {
    const Mesh m = delaunay_triangulate(p);
    ASSERT_EQ(m.num_faces(), 2u);
    const auto e = edges_of(m);
    EXPECT_TRUE(e.count({0, 2}));
    EXPECT_FALSE(e.count({1, 3}));
  }
}

TEST(Delaunay, DegenerateInputIsRejected) {
  EXPECT_THROW(delaunay_triangulate(std::vector<Point2>{{0, 0}, {1, 1}}), DegenerateInput);
  EXPECT_THROW(delaunay_triangulate(std::vector<Point2>{{0, 0}, {1, 1}, {2, 2}, {3, 3}}), DegenerateInput);
  EXPECT_THROW(delaunay_triangulate(std::vector<Point2>{{0, 0}, {1, 0}, {0, 1}, {1, 0}}), DegenerateInput);
}

TEST(Delaunay, EmptyCircumcircleByBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = poisson_disk_sample(1.0, seed);
    const Mesh m = delaunay_triangulate(p);
    // Euler characteristic of a disc
    EXPECT_EQ(static_cast<long>(m.num_vertices()) - static_cast<long>(edges_of(m).size()) + static_cast<long>(m.num_faces()), 1);
    for (const Face& f : m.faces()) {
      for (std::size_t v = 0; v < m.num_vertices(); ++v) {
        if (v == f[0] || v == f[1] || v == f[2]) continue;
        ASSERT_FALSE(strictly_inside_circumcircle(m.vertex(f[0]), m.vertex(f[1]), m.vertex(f[2]), m.vertex(v)))
            << "seed " << seed << " vertex " << v;
      }
    }
  }
}

TEST(Delaunay, TrimmingRemovesSliversAndKeepsEveryVertex) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Mesh raw = delaunay_triangulate(poisson_disk_sample(1.6, seed));
    const Mesh m = trim_boundary_slivers(raw);
    EXPECT_LE(m.num_faces(), raw.num_faces());
    std::vector<bool> used(m.num_vertices(), false);
    for (const Face& f : m.faces()) {
      for (Index v : f) used[v] = true;
    }
    EXPECT_TRUE(std::all_of(used.begin(), used.end(), [](bool b) { return b; }));
    // The operator norm scales like 1 / r^2 once slivers are gone.
    EXPECT_LT(power_iteration_norm(assemble_laplacian(m).Delta), 10.0) << seed;
    for (const Face& f : m.faces()) {
      const auto faces = raw.faces();
      EXPECT_NE(std::find(faces.begin(), faces.end(), f), faces.end());
    }
  }
}

// ---------------------------------------------------------------------------
// Lifting

TEST(Lift, ConstantImageGivesUnitHeight) {
  Image im;
  im.pixels.assign(28 * 28, 255);
  const Mesh base = delaunay_triangulate(poisson_disk_sample(2.0, 1));
  const HeightFieldMesh h = lift_heightfield(base, im);
  for (double z : h.depth) EXPECT_DOUBLE_EQ(z, 1.0);
  for (std::size_t i = 0; i < base.num_vertices(); ++i) EXPECT_DOUBLE_EQ(h.lifted.vertex(i).z, 1.0);
}

TEST(Lift, PixelCentresAndRawMode) {
  const Image im = random_image(3);
  for (std::size_t r : {0u, 5u, 27u}) {
    for (std::size_t c : {0u, 13u, 27u}) EXPECT_DOUBLE_EQ(bilinear(im, double(r), double(c)), im.at(r, c));
  }
  const std::vector<Vec3> v{{3, 4, 0}, {10, 4, 0}, {3, 12, 0}};
  const Mesh base(v, {{0, 1, 2}});
  EXPECT_DOUBLE_EQ(lift_heightfield(base, im).depth[1], im.at(10, 4) / 255.0);
  EXPECT_DOUBLE_EQ(lift_heightfield(base, im, true).depth[1], im.at(10, 4));
}

TEST(Lift, MatchesIndependentBilinear) {
  const Image im = random_image(4);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 27.0);
  for (int k = 0; k < 500; ++k) {
    const double x = u(rng), y = u(rng);
    // weights of the four surrounding pixels
    const int r0 = std::min(static_cast<int>(x), 26), c0 = std::min(static_cast<int>(y), 26);
    const double fx = x - r0, fy = y - c0;
    const double want = (1 - fx) * (1 - fy) * im.at(r0, c0) + fx * (1 - fy) * im.at(r0 + 1, c0) +
                        (1 - fx) * fy * im.at(r0, c0 + 1) + fx * fy * im.at(r0 + 1, c0 + 1);
    EXPECT_NEAR(bilinear(im, x, y), want, 1e-12);
  }
}

TEST(Lift, OutsideTheImageThrows) {
  const Image im = random_image(1);
  EXPECT_THROW(bilinear(im, -0.1, 3.0), OutOfDomain);
  EXPECT_THROW(bilinear(im, 3.0, 27.5), OutOfDomain);
}

TEST(Idx, ImagesAndLabelsRoundTrip) {
  TempDir dir;
  const Image a = random_image(1), b = random_image(2);
  {
    std::ofstream out(dir.path() / "img.idx", std::ios::binary);
    write_be32(out, 0x00000803);
    write_be32(out, 2);
    write_be32(out, 28);
    write_be32(out, 28);
    out.write(reinterpret_cast<const char*>(a.pixels.data()), 784);
    out.write(reinterpret_cast<const char*>(b.pixels.data()), 784);
    std::ofstream lab(dir.path() / "lab.idx", std::ios::binary);
    write_be32(lab, 0x00000801);
    write_be32(lab, 2);
    lab.put(7);
    lab.put(3);
  }
  const auto images = read_idx_images(dir.path() / "img.idx");
  ASSERT_EQ(images.size(), 2u);
  EXPECT_EQ(images[0].pixels, a.pixels);
  EXPECT_EQ(images[1].pixels, b.pixels);
  EXPECT_EQ(read_idx_labels(dir.path() / "lab.idx"), (std::vector<std::uint8_t>{7, 3}));
  EXPECT_THROW(read_idx_images(dir.path() / "lab.idx"), ParseError);
  EXPECT_THROW(read_idx_images(dir.path() / "missing.idx"), IoError);

  MeshMnistOptions o;
  o.radius = 2.5;
  o.idx_images = dir.path() / "img.idx";
  o.idx_labels = dir.path() / "lab.idx";
  EXPECT_EQ(make_meshmnist_sample(3, o).label, 3);
}

TEST(MeshMnist, HundredSeedsGiveValidDeterministicMeshes) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const MeshMnistSample s = make_meshmnist_sample(seed);
    EXPECT_GE(s.mesh.base.num_vertices(), 400u);
    EXPECT_LE(s.mesh.base.num_vertices(), 620u);
    EXPECT_NO_THROW(validate_mesh(s.mesh.lifted.vertices(), s.mesh.lifted.faces()));
    EXPECT_GE(s.label, 0);
    EXPECT_LE(s.label, 9);
    for (double z : s.mesh.depth) {
      EXPECT_GE(z, 0.0);
      EXPECT_LE(z, 1.0);
    }
  }
  EXPECT_EQ(make_meshmnist_sample(17).mesh.lifted, make_meshmnist_sample(17).mesh.lifted);
}

TEST(MeshMnist, DatasetRoundTrip) {
  TempDir dir;
  MeshMnistOptions o;
  o.radius = 2.5;
  const auto manifest = write_meshmnist_dataset(dir.path(), 3, 11, o);
  const auto back = read_meshmnist_dataset(dir.path());
  ASSERT_EQ(back.size(), 3u);
  for (const MeshMnistSample& s : back) {
    const MeshMnistSample again = make_meshmnist_sample(s.seed, o);
    EXPECT_EQ(s.label, again.label);
    ASSERT_EQ(s.mesh.depth.size(), again.mesh.depth.size());
    for (std::size_t i = 0; i < s.mesh.depth.size(); ++i) EXPECT_NEAR(s.mesh.depth[i], again.mesh.depth[i], 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Similarity and matching

TEST(Softmax, RowsSumToOneAndIgnoreRowShifts) {
  std::mt19937_64 rng(2);
  const DenseMatrix e1 = random_matrix(100, 64, rng), e2 = random_matrix(80, 64, rng);
  const DenseMatrix s = softmax_similarity(e1, e2);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double sum = 0.0;
    for (double v : s.row(i)) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  // A constant shift of all inner products in a row: add a column of ones to
  // E2 and a per-row constant to E1.
  DenseMatrix a(100, 65), b(80, 65);
  for (std::size_t i = 0; i < 100; ++i) {
    for (std::size_t k = 0; k < 64; ++k) a(i, k) = e1(i, k);
    a(i, 64) = double(i) - 40.0;
  }
  for (std::size_t j = 0; j < 80; ++j) {
    for (std::size_t k = 0; k < 64; ++k) b(j, k) = e2(j, k);
    b(j, 64) = 1.0;
  }
  EXPECT_LT(max_abs_diff(softmax_similarity(a, b), s), 1e-12);
}

TEST(Softmax, UniformAndSaturated) {
  const DenseMatrix s = softmax_similarity(DenseMatrix(3, 4, 0.0), DenseMatrix(5, 4, 1.0));
  for (double v : s.storage()) EXPECT_DOUBLE_EQ(v, 0.2);
  const DenseMatrix sat = softmax_similarity(100.0 * DenseMatrix::identity(4), DenseMatrix::identity(4));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(sat(i, i), 1.0, 1e-12);
  EXPECT_EQ(argmax_rows(sat), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Matching, TiesGoToTheSmallestIndexAndArgmaxIsMonotoneInvariant) {
  const DenseMatrix s{{0.1, 0.5, 0.5}, {2.0, 2.0, 1.0}};
  EXPECT_EQ(argmax_rows(s), (std::vector<std::size_t>{1, 0}));
  std::mt19937_64 rng(3);
  const DenseMatrix e1 = random_matrix(20, 8, rng), e2 = random_matrix(30, 8, rng);
  const DenseMatrix ip = matmul_nt(e1, e2);
  DenseMatrix t = ip;
  for (double& v : t.storage()) v = std::exp(3.0 * v) + 7.0;
  EXPECT_EQ(argmax_rows(t), predict_matches(e1, e2));
  EXPECT_EQ(argmax_rows(softmax_similarity(e1, e2)), predict_matches(e1, e2));
}

// ---------------------------------------------------------------------------
// Geodesics

TEST(Geodesic, DijkstraOnAStrip) {
  const Mesh m = strip(5);
  const auto d = dijkstra(m, 0);
  for (int i = 0; i <= 5; ++i) EXPECT_NEAR(d[2 * i], i, 1e-12);
  // (0,0) -> (1,1) along the diagonal, then along the top row
  EXPECT_NEAR(d[3], std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(d[11], std::sqrt(2.0) + 4.0, 1e-12);
  // (0,1) -> (5,0): every diagonal points the wrong way
  EXPECT_NEAR(geodesic_diameter(m), 6.0, 1e-12);
}

TEST(Geodesic, DisconnectedMeshThrows) {
  const Mesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 0, 0}, {6, 0, 0}, {5, 1, 0}}, {{0, 1, 2}, {3, 4, 5}});
  EXPECT_THROW(dijkstra(m, 0), DisconnectedMesh);
  EXPECT_THROW(geodesic_diameter(m), DisconnectedMesh);
}

TEST(Geodesic, CurveOfExactAndShiftedPredictions) {
  const Mesh m = strip(10);
  const CorrespondencePair p = self_pair(m);
  std::vector<std::size_t> exact(m.num_vertices());
  std::iota(exact.begin(), exact.end(), 0);
  const GeodesicCurve c = geodesic_error_curve(p, exact);
  ASSERT_EQ(c.thresholds.size(), 26u);
  EXPECT_DOUBLE_EQ(c.thresholds.front(), 0.0);
  EXPECT_DOUBLE_EQ(c.thresholds.back(), 0.25);
  for (double f : c.fraction) EXPECT_DOUBLE_EQ(f, 1.0);
  EXPECT_DOUBLE_EQ(match_accuracy(p, exact), 1.0);

  // every prediction one column to the right (the last column stays)
  std::vector<std::size_t> shifted(m.num_vertices());
  for (std::size_t v = 0; v < shifted.size(); ++v) shifted[v] = std::min(v + 2, m.num_vertices() - 2 + v % 2);
  const GeodesicCurve s = geodesic_error_curve(p, shifted);
  EXPECT_NEAR(s.fraction.front(), 2.0 / 22.0, 1e-12);
  const double step = 1.0 / s.diameter;
  for (std::size_t k = 0; k < s.thresholds.size(); ++k) {
    EXPECT_DOUBLE_EQ(s.fraction[k], s.thresholds[k] >= step ? 1.0 : 2.0 / 22.0);
    if (k) {
      EXPECT_GE(s.fraction[k], s.fraction[k - 1]);
    }
  }

  TempDir dir;
  s.write_csv(dir.path() / "curve.csv");
  std::ifstream in(dir.path() / "curve.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "geodesic_error,fraction_correct");
}

TEST(Geodesic, UnlabeledVerticesAreSkipped) {
  CorrespondencePair p = self_pair(strip(3));
  p.gt[0] = kNoMatch;
  p.gt[1] = kNoMatch;
  std::vector<std::size_t> pred(p.a.num_vertices(), 0);
  const GeodesicCurve c = geodesic_error_curve(p, pred);
  EXPECT_EQ(c.errors.size(), p.a.num_vertices() - 2);
  EXPECT_EQ(p.labeled(), p.a.num_vertices() - 2);
}

// ---------------------------------------------------------------------------
// Correspondence

TEST(Correspondence, DatasetPairsAreBentPermutedCopies) {
  const auto pairs = make_correspondence_dataset(3, 4);
  for (const CorrespondencePair& p : pairs) {
    ASSERT_EQ(p.a.num_vertices(), p.b.num_vertices());
    std::vector<bool> hit(p.b.num_vertices(), false);
    for (std::int64_t j : p.gt) {
      ASSERT_GE(j, 0);
      EXPECT_FALSE(hit[j]);
      hit[j] = true;
    }
    // connectivity is carried over by the ground truth
    const auto eb = edges_of(p.b);
    for (const auto& [i, j] : edges_of(p.a)) {
      EXPECT_TRUE(eb.count(std::minmax(static_cast<Index>(p.gt[i]), static_cast<Index>(p.gt[j]))));
    }
    // small bend: edge lengths change by a bounded factor
    const InputFrame f = InputFrame::of(p.a);
    double worst = 0.0;
    for (const auto& [i, j] : edges_of(p.a)) {
      const double la = norm(p.a.vertex(i) - p.a.vertex(j));
      const double lb = norm(p.b.vertex(p.gt[i]) - p.b.vertex(p.gt[j]));
      worst = std::max(worst, std::abs(lb / la - 1.0));
    }
    EXPECT_GT(worst, 0.0);
    EXPECT_LT(worst, 0.5);
    EXPECT_GT(f.radius, 10.0);
  }
  const auto again = make_correspondence_dataset(3, 4);
  EXPECT_EQ(again[1].b, pairs[1].b);
}

TEST(Correspondence, SwappedInvertsTheMap) {
  const CorrespondencePair p = make_correspondence_dataset(1, 2)[0];
  const CorrespondencePair s = p.swapped();
  EXPECT_EQ(s.a, p.b);
  for (std::size_t i = 0; i < p.gt.size(); ++i) EXPECT_EQ(s.gt[p.gt[i]], static_cast<std::int64_t>(i));
}

TEST(Correspondence, NoLabelsIsRejected) {
  ParamStore st;
  CorrespondenceModel model(CorrespondenceModel::default_spec(ModelKind::Mlp, 8, 2), st, 1);
  CorrespondencePair p = self_pair(strip(3));
  std::fill(p.gt.begin(), p.gt.end(), kNoMatch);
  EXPECT_THROW(model.prepare(p), NoLabels);
  std::vector<CorrespondencePair> pairs{p};
  Adam adam;
  EXPECT_THROW(correspondence_train(model, adam, pairs, TrainOptions{}), NoLabels);
}

TEST(Correspondence, InitialLossIsNearLogN) {
  const Mesh m = small_sample(7, 1.6);
  for (ModelKind kind : {ModelKind::Laplace, ModelKind::Dirac, ModelKind::Mlp}) {
    ParamStore st;
    CorrespondenceModel model(CorrespondenceModel::default_spec(kind), st, 1);
    Tape tape;
    const double l = model.loss(tape, model.prepare(self_pair(m)), true).value()(0, 0);
    EXPECT_NEAR(l / std::log(double(m.num_vertices())), 1.0, 0.02) << to_string(kind);
  }
}

TEST(Correspondence, SwappedPairTrainsAlongTheSameTrajectory) {
  const Mesh m = small_sample(3, 2.5);
  CorrespondenceDatasetOptions o;
  o.amplitude = 0.0;
  // a permuted copy: the network is permutation-equivariant, so both orders
  // see the same embeddings up to the permutation
  const Mesh base = m;
  std::vector<std::size_t> perm(m.num_vertices());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(5);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Vec3> v(m.num_vertices());
  for (std::size_t i = 0; i < perm.size(); ++i) v[perm[i]] = m.vertex(i);
  std::vector<Face> f = m.faces();
  for (Face& t : f) {
    for (Index& k : t) k = static_cast<Index>(perm[k]);
  }
  CorrespondencePair p{m, Mesh(v, f), {}};
  for (std::size_t i : perm) p.gt.push_back(static_cast<std::int64_t>(i));

  auto run = [](const CorrespondencePair& pair) {
    ParamStore st;
    CorrespondenceModel model(CorrespondenceModel::default_spec(ModelKind::Laplace, 8, 2), st, 4);
    Adam adam;
    TrainOptions t;
    t.steps = 8;
    t.batch = 1;
    return correspondence_train(model, adam, std::vector<CorrespondencePair>{pair}, t, 1).loss;
  };
  const auto forward = run(p), backward = run(p.swapped());
  ASSERT_EQ(forward.size(), backward.size());
  for (std::size_t k = 0; k < forward.size(); ++k) EXPECT_NEAR(forward[k], backward[k], 1e-8 * forward[0]) << k;
}

// ---------------------------------------------------------------------------
// VAE

TEST(Vae, KlOfStandardNormalIsZero) {
  Tape tape;
  const Var z = tape.constant(DenseMatrix(3, 8, 0.0));
  EXPECT_DOUBLE_EQ(ad::kl_standard_normal(z, z).value()(0, 0), 0.0);
}

TEST(Vae, ZeroDecoderGivesAFlatMeshAtTheBias) {
  ParamStore st;
  VaeConfig c;
  c.width = 8;
  c.blocks = 2;
  VaeModel model(c, st, 1);
  model.decoder().zero_parameters();
  st.at("dec.head.b").value(0, 0) = 0.3;
  const Mesh base = delaunay_triangulate(poisson_disk_sample(3.0, 2));
  for (double z : model.decode(base, DenseMatrix(1, c.latent_dim))) EXPECT_DOUBLE_EQ(z, 0.3);
}

TEST(Vae, SamplingIsDeterministicAndWorksOnAnyBase) {
  ParamStore st;
  VaeConfig c;
  c.width = 8;
  c.blocks = 2;
  VaeModel model(c, st, 1);
  const Mesh b1 = delaunay_triangulate(poisson_disk_sample(2.5, 1));
  const Mesh b2 = delaunay_triangulate(poisson_disk_sample(1.8, 2));
  EXPECT_EQ(model.sample(b1, 4).lifted, model.sample(b1, 4).lifted);
  DenseMatrix h(1, c.latent_dim, 0.5);
  for (const Mesh* b : {&b1, &b2}) {
    const auto z = model.decode(*b, h);
    ASSERT_EQ(z.size(), b->num_vertices());
    const HeightFieldMesh lifted = make_heightfield(*b, z);
    EXPECT_NO_THROW(validate_mesh(lifted.lifted.vertices(), lifted.lifted.faces()));
  }
}

TEST(Vae, OverfitsASingleSample) {
  const MeshMnistSample s = make_meshmnist_sample(0, MeshMnistOptions{.radius = 2.0, .raw = false, .idx_images = {}, .idx_labels = {}});
  ParamStore st;
  VaeConfig c;
  c.width = 32;
  c.blocks = 4;
  VaeModel model(c, st, 3);
  Adam adam;
  TrainOptions t;
  t.steps = 200;
  t.batch = 1;
  t.adam.lr = 1e-2;
  std::vector<HeightFieldMesh> data{s.mesh};
  // the untrained decoder's running statistics are not meaningful; compare
  // against the error of predicting the mean depth
  double mean = 0.0, var = 0.0;
  for (double z : s.mesh.depth) mean += z / s.mesh.depth.size();
  for (double z : s.mesh.depth) var += (z - mean) * (z - mean) / s.mesh.depth.size();
  const LossLog log = vae_train(model, adam, data, t, 20);
  EXPECT_LT(log.loss.back(), log.loss.front());
  EXPECT_LT(model.reconstruction_mse(s.mesh), var / 10.0);
}

TEST(Vae, ConfigRejectsUnknownKeys) {
  EXPECT_THROW(VaeConfig::from_json({{"latent", 4}}), ConfigError);
  const VaeConfig c = VaeConfig::from_json({{"model", "dirac"}, {"latent_dim", 4}, {"width", 8}});
  EXPECT_EQ(c.model, ModelKind::Dirac);
  EXPECT_EQ(VaeConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(VaeConfig::from_json({{"model", "dirac"}, {"width", 6}}), NonQuadChannels);
}

// ---------------------------------------------------------------------------
// Temporal

TEST(Temporal, SmoothL1Cases) {
  Tape tape;
  EXPECT_DOUBLE_EQ(ad::smooth_l1(tape.constant(DenseMatrix{{0.5}}), DenseMatrix{{0.0}}).value()(0, 0), 0.125);
  EXPECT_DOUBLE_EQ(ad::smooth_l1(tape.constant(DenseMatrix{{2.0}}), DenseMatrix{{0.0}}).value()(0, 0), 1.5);
}

TEST(Temporal, SequencesAreDeterministicStableAndShaped) {
  TemporalOptions o;
  o.frames_out = 5;
  const auto a = make_temporal_dataset(3, 9, o), b = make_temporal_dataset(3, 9, o);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].frames, b[k].frames);
    ASSERT_EQ(a[k].frames.size(), 7u);
    for (const auto& f : a[k].frames) {
      for (double z : f) EXPECT_LE(std::abs(z), o.blowup);
    }
    EXPECT_LT(o.c2 * power_iteration_norm(assemble_laplacian(a[k].mesh).Delta), 3.6 * 1.001);
    const DenseMatrix x = temporal_input(a[k]), y = temporal_target(a[k]);
    EXPECT_EQ(x.cols(), 6u);
    EXPECT_EQ(y.cols(), 15u);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      EXPECT_EQ(y(i, 0), 0.0);
      EXPECT_EQ(y(i, 1), 0.0);
      EXPECT_DOUBLE_EQ(y(i, 14), a[k].frames[6][i] - a[k].frames[1][i]);
    }
  }
}

TEST(Temporal, WaveStepMatchesTheRecurrence) {
  TemporalOptions o;
  o.frames_out = 3;
  const TemporalSample s = make_temporal_dataset(1, 2, o)[0];
  const SparseOperator delta = assemble_laplacian(s.mesh).Delta;
  for (std::size_t t = 1; t + 1 < s.frames.size(); ++t) {
    const DenseMatrix lz = spmv(delta, DenseMatrix::column(s.frames[t]));
    for (std::size_t i = 0; i < s.mesh.num_vertices(); ++i) {
      EXPECT_NEAR(s.frames[t + 1][i], 2 * s.frames[t][i] - s.frames[t - 1][i] - o.c2 * lz(i, 0), 1e-12);
    }
  }
}

TEST(Temporal, FlatSequencesTrainToZeroOffsets) {
  TemporalOptions o;
  o.frames_out = 3;
  o.amplitude = 0.0;
  const auto data = make_temporal_dataset(4, 1, o);
  for (const auto& s : data) {
    for (const auto& f : s.frames) {
      for (double z : f) EXPECT_EQ(z, 0.0);
    }
  }
  ParamStore st;
  const Network net(temporal_spec(ModelKind::Mlp, 3, 8, 2), st, "", 2);
  std::vector<TemporalPrepared> prepared;
  for (const auto& s : data) prepared.push_back(prepare_temporal(net, s));
  Adam adam;
  TrainOptions t;
  t.steps = 300;
  t.batch = 2;
  t.adam.lr = 1e-2;
  temporal_train(net, adam, prepared, t);
  EXPECT_LT(temporal_eval(net, prepared), 1e-4);
  EXPECT_LT(max_abs(net.predict(prepared[0].ops, prepared[0].x)), 0.05);
}

TEST(Temporal, MismatchedOutputWidthIsRejected) {
  TemporalOptions o;
  o.frames_out = 2;
  const auto s = make_temporal_dataset(1, 1, o)[0];
  ParamStore st;
  const Network net(temporal_spec(ModelKind::Mlp, 3, 8, 2), st, "", 2);
  EXPECT_THROW(prepare_temporal(net, s), DimensionMismatch);
}

// ---------------------------------------------------------------------------
// Baselines

TEST(Baselines, MlpIsLocal) {
  ParamStore st;
  const Network net(temporal_spec(ModelKind::Mlp, 2, 8, 2), st, "", 1);
  std::mt19937_64 rng(1);
  DenseMatrix x = random_matrix(30, 6, rng);
  const OperatorBatch ops = OperatorBatch::points(30);
  const DenseMatrix y = net.predict(ops, x);
  for (std::size_t i = 1; i < 30; ++i) {
    for (std::size_t k = 0; k < 6; ++k) x(i, k) = 0.0;
  }
  const DenseMatrix y0 = net.predict(ops, x);
  for (std::size_t k = 0; k < y.cols(); ++k) EXPECT_DOUBLE_EQ(y0(0, k), y(0, k));
}

TEST(Baselines, PointCloudIsPermutationEquivariant) {
  ParamStore st;
  const Network net(temporal_spec(ModelKind::PointCloud, 2, 8, 4), st, "", 1);
  std::mt19937_64 rng(2);
  const DenseMatrix x = random_matrix(25, 6, rng);
  std::vector<std::size_t> perm(25);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  DenseMatrix xp(25, 6);
  for (std::size_t i = 0; i < 25; ++i) {
    for (std::size_t k = 0; k < 6; ++k) xp(perm[i], k) = x(i, k);
  }
  const OperatorBatch ops = OperatorBatch::points(25);
  const DenseMatrix y = net.predict(ops, x), yp = net.predict(ops, xp);
  for (std::size_t i = 0; i < 25; ++i) {
    for (std::size_t k = 0; k < y.cols(); ++k) EXPECT_NEAR(yp(perm[i], k), y(i, k), 1e-12);
  }
}

TEST(Baselines, OutputShapesMatchSurfaceNetworks) {
  const TemporalSample s = make_temporal_dataset(1, 3, {.frames_out = 2})[0];
  for (ModelKind kind : {ModelKind::Mlp, ModelKind::PointCloud, ModelKind::Laplace, ModelKind::Dirac}) {
    ParamStore st;
    const Network net(temporal_spec(kind, 2, 8, 2), st, "", 1);
    const TemporalPrepared p = prepare_temporal(net, s);
    Tape tape;
    const Var y = baseline_forward(net, tape, p.ops, tape.constant(p.x), false);
    EXPECT_EQ(y.rows(), s.mesh.num_vertices());
    EXPECT_EQ(y.cols(), 6u);
  }
}

// ---------------------------------------------------------------------------
// Training plumbing

TEST(Training, SamplerVisitsEveryIndexOncePerEpoch) {
  BatchSampler a(10, 3), b(10, 3);
  std::vector<std::size_t> seen;
  for (int k = 0; k < 5; ++k) {
    const auto x = a.next(2);
    EXPECT_EQ(x, b.next(2));
    seen.insert(seen.end(), x.begin(), x.end());
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(seen[i], i);
  EXPECT_EQ(BatchSampler(3, 1).next(8).size(), 3u);
}

TEST(Training, NonFiniteLossNamesTheStep) {
  EXPECT_NO_THROW(check_finite_loss(1.0, 0));
  try {
    check_finite_loss(std::nan(""), 42);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("42"), std::string::npos);
  }
}

TEST(Training, LearningRateScheduleAndJson) {
  TrainOptions t;
  t.adam.lr = 0.1;
  t.decay_start = 10;
  t.decay_every = 5;
  EXPECT_DOUBLE_EQ(t.learning_rate(9), 0.1);
  EXPECT_DOUBLE_EQ(t.learning_rate(10), 0.05);
  EXPECT_DOUBLE_EQ(t.learning_rate(15), 0.025);
  EXPECT_EQ(TrainOptions::from_json(t.to_json()).to_json(), t.to_json());
  EXPECT_THROW(TrainOptions::from_json({{"stepz", 3}}), ConfigError);
  EXPECT_THROW(TrainOptions::from_json({{"batch", 0}}), ConfigError);
  EXPECT_THROW(TemporalOptions::from_json({{"frames", 3}}), ConfigError);
}
