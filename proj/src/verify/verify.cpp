#include "surfnet/verify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "surfnet/error.hpp"
#include "surfnet/ops.hpp"
#include "surfnet/shapes.hpp"

namespace surfnet {

namespace {

constexpr Mat3 kIdentity3{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

Vec3 mat_vec(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

DenseMatrix to_dense(const Mat3& m) {
  DenseMatrix d(3, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) d(i, j) = m[i][j];
  }
  return d;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec3 v;
  do {
    v = {g(rng), g(rng), g(rng)};
  } while (norm(v) < 1e-8);
  return normalized(v);
}

struct Mode {
  Vec3 omega;
  double phase = 0.0;
  double amp = 0.0;
};

// Sum of sine modes per output coordinate, displacement scaled by
// amplitude * scale.
DeformationField sine_field(DeformationKind kind, std::array<std::vector<Mode>, 3> modes, double amplitude, double scale,
                            Vec3 center) {
  DeformationField f;
  f.kind = kind;
  f.amplitude = amplitude;
  const double s = amplitude * scale;
  f.map = [modes, s, center](const Vec3& u) {
    Vec3 out = u;
    const Vec3 w = u - center;
    for (int c = 0; c < 3; ++c) {
      for (const Mode& m : modes[c]) out[c] += s * m.amp * std::sin(dot(m.omega, w) + m.phase);
    }
    return out;
  };
  f.jacobian = [modes, s, center](const Vec3& u) {
    Mat3 j = kIdentity3;
    const Vec3 w = u - center;
    for (int c = 0; c < 3; ++c) {
      for (const Mode& m : modes[c]) {
        const double k = s * m.amp * std::cos(dot(m.omega, w) + m.phase);
        for (int i = 0; i < 3; ++i) j[c][i] += k * m.omega[i];
      }
    }
    return j;
  };
  return f;
}

double spectral_norm3(const Mat3& m) { return spectral_norm(to_dense(m)); }

Vec3 face_normal(const Mesh& m, std::size_t f) {
  const Face& t = m.face(f);
  return triangle_normal(m.vertex(t[0]), m.vertex(t[1]), m.vertex(t[2]));
}

}  // namespace

std::string to_string(DeformationKind kind) {
  switch (kind) {
    case DeformationKind::Rigid: return "rigid";
    case DeformationKind::Translation: return "translation";
    case DeformationKind::SmoothBend: return "smooth_bend";
    case DeformationKind::RandomFourier: return "random_fourier";
  }
  return "?";
}

DeformationKind deformation_kind_from_string(const std::string& s) {
  if (s == "rigid") return DeformationKind::Rigid;
  if (s == "translation") return DeformationKind::Translation;
  if (s == "smooth_bend") return DeformationKind::SmoothBend;
  if (s == "random_fourier") return DeformationKind::RandomFourier;
  throw ConfigError("unknown deformation kind '" + s + "'");
}

Mesh DeformationField::apply(const Mesh& mesh) const {
  std::vector<Vec3> p;
  p.reserve(mesh.num_vertices());
  for (const Vec3& v : mesh.vertices()) p.push_back(map(v));
  return mesh.with_positions(std::move(p));
}

Mat3 random_rotation(std::uint64_t seed, double angle) {
  std::mt19937_64 rng(seed);
  const Vec3 k = random_unit(rng);
  const double c = std::cos(angle), s = std::sin(angle), t = 1 - c;
  return {{{c + k.x * k.x * t, k.x * k.y * t - k.z * s, k.x * k.z * t + k.y * s},
           {k.y * k.x * t + k.z * s, c + k.y * k.y * t, k.y * k.z * t - k.x * s},
           {k.z * k.x * t - k.y * s, k.z * k.y * t + k.x * s, c + k.z * k.z * t}}};
}

DeformationField make_deformation(DeformationKind kind, std::uint64_t seed, double amplitude, double scale,
                                  Vec3 center) {
  if (!(amplitude >= 0.0)) throw ValidationError("deformation amplitude must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  DeformationField f;
  f.kind = kind;
  f.amplitude = amplitude;
  switch (kind) {
    case DeformationKind::Rigid: {
      const Mat3 r = random_rotation(rng(), amplitude * std::numbers::pi);
      const Vec3 t = random_unit(rng) * (amplitude * scale);
      f.map = [r, t, center](const Vec3& u) { return mat_vec(r, u - center) + center + t; };
      f.jacobian = [r](const Vec3&) { return r; };
      return f;
    }
    case DeformationKind::Translation: {
      const Vec3 t = random_unit(rng) * (amplitude * scale);
      f.map = [t](const Vec3& u) { return u + t; };
      f.jacobian = [](const Vec3&) { return kIdentity3; };
      return f;
    }
    case DeformationKind::SmoothBend:
    case DeformationKind::RandomFourier: {
      const int count = kind == DeformationKind::SmoothBend ? 1 : 4;
      std::array<std::vector<Mode>, 3> modes;
      for (auto& list : modes) {
        for (int k = 0; k < count; ++k) {
          Mode m;
          const double freq = kind == DeformationKind::SmoothBend ? 1.0 : 0.5 + 1.5 * u01(rng);
          m.omega = random_unit(rng) * (freq * std::numbers::pi / scale);
          m.phase = 2 * std::numbers::pi * u01(rng);
          m.amp = (0.5 + 0.5 * u01(rng)) / count;
          list.push_back(m);
        }
      }
      return sine_field(kind, std::move(modes), amplitude, scale, center);
    }
  }
  return f;
}

DeformationField scaling_field(double s) {
  DeformationField f;
  f.amplitude = std::abs(s);
  f.map = [s](const Vec3& u) { return u * (1 + s); };
  f.jacobian = [s](const Vec3&) {
    Mat3 j{};
    for (int i = 0; i < 3; ++i) j[i][i] = 1 + s;
    return j;
  };
  return f;
}

DeformationField rotation_field(const Mat3& r) {
  DeformationField f;
  f.map = [r](const Vec3& u) { return mat_vec(r, u); };
  f.jacobian = [r](const Vec3&) { return r; };
  return f;
}

TauMetrics metric_tau(const DeformationField& field, std::span<const Vec3> points) {
  TauMetrics m;
  for (const Vec3& u : points) {
    const Mat3 j = field.jacobian(u);
    Mat3 jjt{}, jmi{};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int k = 0; k < 3; ++k) jjt[a][b] += j[a][k] * j[b][k];
        jjt[a][b] -= kIdentity3[a][b];
        jmi[a][b] = j[a][b] - kIdentity3[a][b];
      }
    }
    m.tau_inf = std::max(m.tau_inf, spectral_norm3(jjt));
    m.tau_tilde_inf = std::max(m.tau_tilde_inf, spectral_norm3(jmi));

    const double h = 1e-4 * std::max(1.0, norm(u));
    double hs = 0.0;
    for (int d = 0; d < 3; ++d) {
      Vec3 up = u, dn = u;
      up[d] += h;
      dn[d] -= h;
      const Mat3 jp = field.jacobian(up), jn = field.jacobian(dn);
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          const double v = (jp[a][b] - jn[a][b]) / (2 * h);
          hs += v * v;
        }
      }
    }
    m.hess_norm = std::max(m.hess_norm, std::sqrt(hs));
  }
  const std::size_t stride = std::max<std::size_t>(1, points.size() / 64);
  for (std::size_t i = 0; i < points.size(); i += stride) {
    for (std::size_t k = i + stride; k < points.size(); k += stride) {
      const double d0 = norm(points[i] - points[k]);
      if (d0 == 0.0) continue;
      const double d1 = norm(field(points[i]) - field(points[k]));
      m.distance_distortion = std::max(m.distance_distortion, std::abs(d1 / d0 - 1.0));
    }
  }
  return m;
}

double jacobian_fd_error(const DeformationField& field, std::span<const Vec3> points, double h) {
  double worst = 0.0;
  for (const Vec3& u : points) {
    const Mat3 j = field.jacobian(u);
    double diff = 0.0, ref = 0.0;
    for (int i = 0; i < 3; ++i) {
      Vec3 up = u, dn = u;
      up[i] += h;
      dn[i] -= h;
      const Vec3 col = (field(up) - field(dn)) / (2 * h);
      for (int c = 0; c < 3; ++c) {
        diff = std::max(diff, std::abs(col[c] - j[c][i]));
        ref = std::max(ref, std::abs(j[c][i]));
      }
    }
    worst = std::max(worst, diff / std::max(ref, 1e-300));
  }
  return worst;
}

// ---------------------------------------------------------------------------

InputFrame InputFrame::of(const Mesh& mesh) {
  InputFrame f;
  for (const Vec3& v : mesh.vertices()) f.center += v;
  f.center = f.center / static_cast<double>(std::max<std::size_t>(1, mesh.num_vertices()));
  f.radius = 0.0;
  for (const Vec3& v : mesh.vertices()) f.radius = std::max(f.radius, norm(v - f.center));
  if (f.radius == 0.0) f.radius = 1.0;
  return f;
}

DenseMatrix InputFrame::coordinates(const Mesh& mesh) const {
  DenseMatrix x(mesh.num_vertices(), 3);
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    const Vec3 p = (mesh.vertex(i) - center) / radius;
    for (int k = 0; k < 3; ++k) x(i, static_cast<std::size_t>(k)) = p[k];
  }
  return x;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) continue;
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  const double d = n * sxx - sx * sx;
  if (n < 2 || d <= 0) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / d;
}

namespace {

OperatorBatch batch_for(const Network& net, const Mesh& mesh) { return operators_for(net.spec(), mesh); }

bool flips_a_face(const Mesh& before, const Mesh& after) {
  for (std::size_t f = 0; f < before.num_faces(); ++f) {
    if (dot(face_normal(before, f), face_normal(after, f)) <= 0.0) return true;
  }
  return false;
}

nlohmann::json doubles(const std::vector<double>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double d : v) {
    if (std::isfinite(d)) a.push_back(d);
    else a.push_back(std::isnan(d) ? "nan" : (d > 0 ? "inf" : "-inf"));
  }
  return a;
}

nlohmann::json number(double d) { return doubles({d})[0]; }

}  // namespace

StabilityReport deformation_stability_sweep(const Network& net, const Mesh& mesh, DeformationKind kind,
                                            std::span<const double> eps, std::uint64_t seed, InputForm form) {
  StabilityReport r;
  r.kind = kind;
  r.model = to_string(net.spec().model);
  r.form = form;
  const InputFrame frame = InputFrame::of(mesh);
  const DenseMatrix x = frame.coordinates(mesh);
  const DenseMatrix base = net.predict(batch_for(net, mesh), x);
  const double base_norm = frobenius_norm(base);
  for (double e : eps) {
    const DeformationField field = make_deformation(kind, seed, e, frame.radius, frame.center);
    const TauMetrics tm = metric_tau(field, mesh.vertices());
    r.eps.push_back(e);
    r.tau_inf.push_back(tm.tau_inf);
    r.tau_tilde_inf.push_back(tm.tau_tilde_inf);
    r.hess_norm.push_back(tm.hess_norm);
    double d = std::numeric_limits<double>::quiet_NaN();
    bool excluded = false;
    try {
      const Mesh deformed = field.apply(mesh);
      if (flips_a_face(mesh, deformed)) {
        excluded = true;
      } else {
        const DenseMatrix xin = form == InputForm::Theorem ? x : frame.coordinates(deformed);
        d = frobenius_norm(net.predict(batch_for(net, deformed), xin) - base);
      }
    } catch (const ValidationError&) {
      excluded = true;
    }
    r.excluded.push_back(excluded);
    r.distance.push_back(d);
    r.relative_distance.push_back(base_norm > 0 ? d / base_norm : d);
  }
  std::vector<double> fx, fy;
  double last = -1.0;
  for (std::size_t i = 0; i < r.eps.size(); ++i) {
    if (r.excluded[i] || r.eps[i] > EPS_LINEAR_MAX) continue;
    if (r.distance[i] < last) r.monotone = false;
    last = r.distance[i];
    fx.push_back(r.eps[i]);
    fy.push_back(r.distance[i]);
  }
  r.slope = loglog_slope(fx, fy);
  return r;
}

nlohmann::json StabilityReport::to_json() const {
  std::vector<int> ex(excluded.begin(), excluded.end());
  return {{"kind", to_string(kind)},
          {"model", model},
          {"form", form == InputForm::Theorem ? "theorem" : "corollary"},
          {"eps", doubles(eps)},
          {"distance", doubles(distance)},
          {"relative_distance", doubles(relative_distance)},
          {"tau_inf", doubles(tau_inf)},
          {"tau_tilde_inf", doubles(tau_tilde_inf)},
          {"hess_norm", doubles(hess_norm)},
          {"excluded", ex},
          {"slope", number(slope)},
          {"monotone", monotone},
          {"eps_linear_max", EPS_LINEAR_MAX}};
}

LipschitzReport lipschitz_input_check(const Network& net, const Mesh& mesh, int trials, std::uint64_t seed) {
  LipschitzReport r;
  r.trials = trials;
  const OperatorBatch ops = batch_for(net, mesh);
  r.bound = lipschitz_bound(net, ops);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const double scales[] = {1.0, 1e-1, 1e-3};
  const std::size_t n = mesh.num_vertices(), c = net.spec().in_channels;
  for (int t = 0; t < trials; ++t) {
    DenseMatrix x(n, c), xp(n, c);
    for (double& v : x.storage()) v = g(rng);
    for (std::size_t i = 0; i < x.size(); ++i) xp.data()[i] = x.data()[i] + scales[t % 3] * g(rng);
    const double num = frobenius_norm(net.predict(ops, x) - net.predict(ops, xp));
    r.max_ratio = std::max(r.max_ratio, num / frobenius_norm(x - xp));
  }
  r.holds = r.max_ratio <= r.bound.bound;
  return r;
}

nlohmann::json LipschitzReport::to_json() const {
  return {{"trials", trials},
          {"max_ratio", max_ratio},
          {"bound", number(bound.bound)},
          {"laplace_norm", bound.laplace_norm},
          {"dirac_norm", bound.dirac_norm},
          {"dirac_adj_norm", bound.dirac_adj_norm},
          {"block_factors", doubles(bound.block_factors)},
          {"holds", holds}};
}

SmoothnessReport smoothness_rates(const Network& net, const Mesh& mesh, const DenseMatrix& x) {
  if (mesh.num_vertices() > MAX_DENSE_N) {
    throw TooLarge("smoothness_rates: mesh has " + std::to_string(mesh.num_vertices()) + " vertices, limit " +
                   std::to_string(MAX_DENSE_N));
  }
  const LaplacePack pack = assemble_laplacian(mesh);
  const EigenDecomposition eig = sym_eigen_generalized(pack.stiffness, pack.abar);
  std::vector<DenseMatrix> trace;
  net.predict(batch_for(net, mesh), x, &trace);
  SmoothnessReport r;
  r.beta.push_back(sobolev_profile(pack, eig, x).decay_rate_beta);
  for (const DenseMatrix& f : trace) {
    const double b = sobolev_profile(pack, eig, f).decay_rate_beta;
    r.beta.push_back(b);
    if (std::isfinite(b)) r.h_beta *= (b - 1.0) / (b - 0.5);
  }
  return r;
}

nlohmann::json SmoothnessReport::to_json() const { return {{"beta", doubles(beta)}, {"h_beta", number(h_beta)}}; }

// ---------------------------------------------------------------------------

Mesh analytic_meshing(AnalyticSurface surface, int resolution, std::uint64_t seed) {
  if (surface == AnalyticSurface::Sphere) {
    const Mesh m = shapes::icosphere(resolution, 1.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    return rotation_field(random_rotation(rng(), angle(rng))).apply(m);
  }
  const int nu = 6 << resolution, nv = 3 << resolution;
  return shapes::torus(nu, nv, 2.0, 0.8, 0.2, seed);
}

namespace {

constexpr double kTorusR = 2.0, kTorusr = 0.8;

double surface_distance(AnalyticSurface s, const Vec3& p) {
  if (s == AnalyticSurface::Sphere) return std::abs(norm(p) - 1.0);
  const double rho = std::hypot(p.x, p.y);
  return std::abs(std::hypot(rho - kTorusR, p.z) - kTorusr);
}

Vec3 surface_normal(AnalyticSurface s, const Vec3& p) {
  if (s == AnalyticSurface::Sphere) return normalized(p);
  const double rho = std::hypot(p.x, p.y);
  const Vec3 ring{kTorusR * p.x / rho, kTorusR * p.y / rho, 0.0};
  return normalized(p - ring);
}

// RMS over vertices of a of |fa(v) - fb(nearest vertex of b to v)|.
double transfer_distance(const Mesh& a, const DenseMatrix& fa, const Mesh& b, const DenseMatrix& fb) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.num_vertices(); ++i) {
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t j = 0; j < b.num_vertices(); ++j) {
      const Vec3 d = a.vertex(i) - b.vertex(j);
      const double dd = dot(d, d);
      if (dd < bd) {
        bd = dd;
        best = j;
      }
    }
    for (std::size_t c = 0; c < fa.cols(); ++c) {
      const double d = fa(i, c) - fb(best, c);
      acc += d * d;
    }
  }
  return std::sqrt(acc / static_cast<double>(a.num_vertices()));
}

}  // namespace

double cross_mesh_distance(const Mesh& a, const DenseMatrix& fa, const Mesh& b, const DenseMatrix& fb) {
  return 0.5 * (transfer_distance(a, fa, b, fb) + transfer_distance(b, fb, a, fa));
}

DiscretizationReport discretization_consistency(AnalyticSurface surface, std::span<const int> resolutions,
                                                const Network& net, std::uint64_t seed) {
  DiscretizationReport r;
  r.surface = surface;
  InputFrame frame;
  frame.radius = surface == AnalyticSurface::Sphere ? 1.0 : kTorusR + kTorusr;
  for (int res : resolutions) {
    const Mesh a = analytic_meshing(surface, res, seed * 1000 + static_cast<std::uint64_t>(res) * 2);
    const Mesh b = analytic_meshing(surface, res, seed * 1000 + static_cast<std::uint64_t>(res) * 2 + 1);
    const DenseMatrix fa = net.predict(batch_for(net, a), frame.coordinates(a));
    const DenseMatrix fb = net.predict(batch_for(net, b), frame.coordinates(b));
    r.resolutions.push_back(res);
    r.vertex_counts.push_back(a.num_vertices());
    r.distance.push_back(cross_mesh_distance(a, fa, b, fb));
    double sd = 0.0, nd = 0.0;
    for (const Mesh* m : {&a, &b}) {
      for (const Vec3& v : m->vertices()) sd = std::max(sd, surface_distance(surface, v));
      for (std::size_t f = 0; f < m->num_faces(); ++f) {
        const Face& t = m->face(f);
        const Vec3 c = (m->vertex(t[0]) + m->vertex(t[1]) + m->vertex(t[2])) / 3.0;
        const double cosang = std::clamp(dot(face_normal(*m, f), surface_normal(surface, c)), -1.0, 1.0);
        nd = std::max(nd, std::acos(cosang));
      }
    }
    r.surface_distance.push_back(sd);
    r.normal_deviation.push_back(nd);
  }
  for (std::size_t i = 1; i < r.distance.size(); ++i) {
    if (r.distance[i] > r.distance[i - 1]) r.non_increasing = false;
    if (!(r.distance[i] < r.distance[i - 1])) r.strictly_decreasing = false;
  }
  return r;
}

nlohmann::json DiscretizationReport::to_json() const {
  return {{"surface", surface == AnalyticSurface::Sphere ? "sphere" : "torus"},
          {"resolutions", resolutions},
          {"vertex_counts", vertex_counts},
          {"distance", doubles(distance)},
          {"surface_distance", doubles(surface_distance)},
          {"normal_deviation", doubles(normal_deviation)},
          {"non_increasing", non_increasing},
          {"strictly_decreasing", strictly_decreasing}};
}

CurvatureConvergence mean_curvature_convergence(std::span<const int> subdivisions, double radius) {
  CurvatureConvergence c;
  for (int s : subdivisions) {
    const Mesh m = shapes::icosphere(s, radius);
    const DenseMatrix lv = spmv(assemble_laplacian(m).Delta, positions_matrix(m));
    double mx = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < lv.rows(); ++i) {
      const double e = std::abs(std::sqrt(lv(i, 0) * lv(i, 0) + lv(i, 1) * lv(i, 1) + lv(i, 2) * lv(i, 2)) - 2.0 / radius);
      mx = std::max(mx, e);
      acc += e * e;
    }
    c.subdivisions.push_back(s);
    c.max_error.push_back(mx);
    c.rms_error.push_back(std::sqrt(acc / static_cast<double>(lv.rows())));
  }
  return c;
}

// ---------------------------------------------------------------------------

void write_svg_plot(const std::filesystem::path& path, const std::string& title, const std::vector<PlotSeries>& series,
                    bool log_x, bool log_y, const std::string& x_label, const std::string& y_label) {
  const double w = 640, h = 420, ml = 70, mr = 150, mt = 40, mb = 50;
  auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const PlotSeries& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if ((log_x && !(s.x[i] > 0)) || (log_y && !(s.y[i] > 0)) || !std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
        continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (x0 > x1) x0 = 0, x1 = 1;
  if (y0 > y1) y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double v) { return h - mb - (ty(v) - y0) / (y1 - y0) * (h - mt - mb); };
  auto label = [](double v, bool lg) {
    std::ostringstream o;
    o.precision(3);
    if (lg) o << "1e" << v;
    else o << v;
    return o.str();
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr << "\" height=\"" << h - mt - mb
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << ml << "\" y=\"" << h - mb + 16 << "\" font-size=\"11\">" << label(x0, log_x) << "</text>\n";
  out << "<text x=\"" << w - mr << "\" y=\"" << h - mb + 16 << "\" font-size=\"11\" text-anchor=\"end\">"
      << label(x1, log_x) << "</text>\n";
  out << "<text x=\"" << ml - 4 << "\" y=\"" << h - mb << "\" font-size=\"11\" text-anchor=\"end\">" << label(y0, log_y)
      << "</text>\n";
  out << "<text x=\"" << ml - 4 << "\" y=\"" << mt + 10 << "\" font-size=\"11\" text-anchor=\"end\">"
      << label(y1, log_y) << "</text>\n";
  out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << x_label << "</text>\n";
  out << "<text x=\"16\" y=\"" << (mt + h - mb) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (mt + h - mb) / 2 << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const PlotSeries& s = series[k];
    const char* col = colors[k % 6];
    out << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if ((log_x && !(s.x[i] > 0)) || (log_y && !(s.y[i] > 0)) || !std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
        continue;
      out << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    out << "\"/>\n";
    out << "<text x=\"" << w - mr + 10 << "\" y=\"" << mt + 16 + 18 * static_cast<double>(k) << "\" font-size=\"12\" fill=\""
        << col << "\">" << s.name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace surfnet
