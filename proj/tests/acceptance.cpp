// Acceptance run: one PASS/FAIL line per criterion, measured values beside
// it. Exit status is 0 only when every line passes.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "surfnet/error.hpp"
#include "surfnet/gradcheck.hpp"
#include "surfnet/ops.hpp"
#include "surfnet/shapes.hpp"

using namespace surfnet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
  std::cout << "CRITERION " << std::left << std::setw(4) << id << (pass ? "PASS" : "FAIL") << "  " << detail
            << std::endl;
  failures += !pass;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

DenseMatrix rand(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  DenseMatrix m(r, c);
  for (double& v : m.storage()) v = scale * g(rng);
  return m;
}

// <R, v> with fixed random R so every output entry reaches the loss.
Var project(Tape& tape, Var v, std::uint64_t seed) {
  return ad::sum(ad::mul(v, tape.constant(rand(v.rows(), v.cols(), seed))));
}

// ---------------------------------------------------------------------------

void criterion1() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t n = 0;
  for (const auto& [name, mesh] : cli::golden_meshes()) {
    worst = std::max(worst, verify_dirac_laplace_identity(mesh).max_rel_error);
    ++n;
  }
  const double t = seconds_since(t0);
  report("1", n >= 5 && worst < 1e-9 && t < 5.0,
         std::to_string(n) + " goldens, max rel error " + fmt(worst) + ", " + fmt(t) + " s");
}

void criterion2() {
  const auto t0 = Clock::now();
  const Mesh m = shapes::icosphere(4, 1.0);
  const DenseMatrix dv = spmv(assemble_laplacian(m).Delta, positions_matrix(m));
  const auto normals = vertex_normals(m);
  const double cos1 = std::cos(std::numbers::pi / 180.0);
  std::size_t band = 0, inward = 0, outward = 0;
  for (std::size_t i = 0; i < m.num_vertices(); ++i) {
    const Vec3 h{dv(i, 0), dv(i, 1), dv(i, 2)};
    const double len = norm(h);
    band += len >= 1.96 && len <= 2.04;
    const double c = dot(h, normals[i]) / len;
    inward += -c >= cos1;
    outward += c >= cos1;
  }
  const double t = seconds_since(t0);
  const double n = static_cast<double>(m.num_vertices());
  report("2a", band >= 0.99 * n && t < 10.0,
         "|Delta V| in [1.96, 2.04] at " + fmt(100.0 * band / n) + "% of " + std::to_string(m.num_vertices()) +
             " vertices, " + fmt(t) + " s");
  report("2b", inward >= 0.99 * n,
         "within 1 deg of inward normal at " + fmt(100.0 * inward / n) + "%; of outward normal at " +
             fmt(100.0 * outward / n) + "%");
}

void criterion3() {
  bool all = true;
  std::string detail;
  for (const auto& [name, mesh] : cli::golden_meshes()) {
    const DiracNormReport r = dirac_norm_relation(mesh);
    const bool plain = r.rel_diff_plain < 1e-4, mass = r.rel_diff_mass < 1e-4;
    all = all && (plain || mass);
    detail += name + " plain " + fmt(r.rel_diff_plain) + " mass " + fmt(r.rel_diff_mass) + " [" +
              (plain && mass ? "both" : plain ? "plain" : mass ? "mass" : "neither") + "]; ";
  }
  report("3", all, detail);
}

void criterion4() {
  const auto t0 = Clock::now();
  constexpr int kInstances = 20;
  constexpr double kTol = 1e-5;
  // Pass/fail uses the relative error of the whole gradient vector of one
  // check, ||analytic - numeric|| / ||analytic||. Single entries that a batch
  // norm makes nearly scale-free have gradients near 1e-7, where central
  // differences at h = 1e-5 carry ~1e-11 of round-off; their entrywise
  // ratio is printed but not judged.
  std::map<std::string, double> worst, worst_entry;
  auto check = [&](const std::string& name, const LossBuilder& f, std::vector<DenseMatrix> in,
                   const std::vector<Param*>& params = {}) {
    const GradCheckResult r = check_gradients(f, std::move(in), params);
    double& w = worst[name];
    w = std::max(w, r.entries == 0 ? 1.0 : r.norm_rel_error);
    worst_entry[name] = std::max(worst_entry[name], r.max_rel_error);
  };

  const Mesh mesh = shapes::torus(6, 5, 2.0, 0.7, 0.2, 3);
  const OperatorBatch ops = OperatorBatch::from_mesh(mesh);
  const std::size_t nv = mesh.num_vertices(), nf = mesh.num_faces();
  const std::vector<std::size_t> off = {0, 7, 12, nv};
  const Mesh small = shapes::icosphere(0);
  const OperatorBatch small_ops = OperatorBatch::from_mesh(small);

  for (std::uint64_t s = 0; s < kInstances; ++s) {
    const std::uint64_t a = 1000 * s, b = a + 1, c = a + 2;
    // Layers.
    check("linear", [](Tape& t, const std::vector<Var>& v) { return project(t, ad::linear(v[0], v[1], v[2]), 9); },
          {rand(5, 4, a), rand(3, 4, b), rand(1, 3, c)});
    check("elu", [](Tape& t, const std::vector<Var>& v) { return project(t, ad::elu(v[0]), 9); }, {rand(6, 3, a)});
    check("laplace", [&](Tape& t, const std::vector<Var>& v) { return project(t, ad::spmv(ops.laplace, ops.laplace_t, v[0]), 9); },
          {rand(nv, 3, a)});
    check("dirac", [&](Tape& t, const std::vector<Var>& v) { return project(t, ad::spmv(ops.dirac, ops.dirac_t, v[0]), 9); },
          {rand(nv, 8, a)});
    check("dirac_adjoint",
          [&](Tape& t, const std::vector<Var>& v) { return project(t, ad::spmv(ops.dirac_adj, ops.dirac_adj_t, v[0]), 9); },
          {rand(nf, 4, a)});
    check("quaternion_mix", [](Tape& t, const std::vector<Var>& v) { return project(t, ad::qmix(v[0], v[1]), 9); },
          {rand(5, 8, a), rand(3, 2, b)});
    check("avgpool",
          [&](Tape& t, const std::vector<Var>& v) {
            return project(t, ad::broadcast_segments(ad::segment_mean(v[0], off), off), 9);
          },
          {rand(nv, 3, a)});
    check("similarity", [](Tape& t, const std::vector<Var>& v) { return project(t, ad::matmul_nt(v[0], v[1]), 9); },
          {rand(4, 3, a), rand(5, 3, b)});
    {
      ParamStore st;
      Param& g = st.add("g", rand(1, 3, a + 3));
      Param& be = st.add("b", rand(1, 3, a + 4));
      Param& rm = st.add("rm", rand(1, 3, a + 5), false);
      DenseMatrix var = rand(1, 3, a + 6);
      for (double& v : var.storage()) v = 0.5 + v * v;
      Param& rv = st.add("rv", var, false);
      const ad::BatchNormState bn{&g, &be, &rm, &rv};
      for (bool training : {true, false}) {
        check(training ? "batch_norm_train" : "batch_norm_eval",
              [&](Tape& t, const std::vector<Var>& v) { return project(t, ad::batch_norm(t, v[0], bn, training), 9); },
              {rand(7, 3, a + 7, 1.5)}, {&g, &be});
      }
    }
    // Whole residual blocks of every kind.
    for (ModelKind kind : {ModelKind::Laplace, ModelKind::Dirac, ModelKind::PointCloud, ModelKind::Mlp}) {
      NetworkSpec spec;
      spec.model = kind;
      spec.in_channels = 3;
      spec.width = 4;
      spec.out_channels = 2;
      spec.blocks = 1;
      ParamStore st;
      Network net(spec, st, "", s);
      std::vector<Param*> params;
      for (auto& [name, p] : st.items()) {
        if (p.trainable) params.push_back(&p);
      }
      check("block_" + to_string(kind),
            [&](Tape& t, const std::vector<Var>& v) { return project(t, net.forward(t, small_ops, v[0], true), 3); },
            {rand(small.num_vertices(), 3, a)}, params);
    }
    // Losses.
    const DenseMatrix target = rand(4, 5, a + 100, 2.0);
    const std::vector<std::size_t> labels = {s % 5, 0, 4, (s + 2) % 5};
    const DenseMatrix eps = rand(3, 2, a + 50);
    check("smooth_l1", [&](Tape&, const std::vector<Var>& v) { return ad::smooth_l1(v[0], target); },
          {rand(4, 5, a, 2.0)});
    check("mse", [&](Tape&, const std::vector<Var>& v) { return ad::mse(v[0], target); }, {rand(4, 5, a)});
    check("softmax_cross_entropy",
          [&](Tape&, const std::vector<Var>& v) { return ad::softmax_cross_entropy(v[0], labels); }, {rand(4, 5, a)});
    check("gaussian_nll", [&](Tape&, const std::vector<Var>& v) { return ad::gaussian_nll(v[0], v[1], target); },
          {rand(4, 5, a), rand(1, 1, b, 0.3)});
    check("kl", [](Tape&, const std::vector<Var>& v) { return ad::kl_standard_normal(v[0], v[1]); },
          {rand(3, 2, a), rand(3, 2, b, 0.5)});
    check("reparameterize",
          [&](Tape& t, const std::vector<Var>& v) { return project(t, ad::reparameterize(v[0], v[1], eps), 9); },
          {rand(3, 2, a), rand(3, 2, b, 0.5)});
  }
  const double t = seconds_since(t0);
  bool pass = t < 60.0;
  std::string bad;
  double max_err = 0.0, max_entry = 0.0;
  for (const auto& [name, w] : worst) {
    max_err = std::max(max_err, w);
    max_entry = std::max(max_entry, worst_entry[name]);
    if (!(w < kTol)) {
      pass = false;
      bad += " " + name + "=" + fmt(w);
    }
  }
  report("4", pass,
         std::to_string(worst.size()) + " kinds x " + std::to_string(kInstances) + " instances, worst gradient rel error " +
             fmt(max_err) + " (worst single entry " + fmt(max_entry) + ")" + (bad.empty() ? "" : ", over tolerance:" + bad) + ", " + fmt(t) + " s");
}

Network random_net(ModelKind kind, ParamStore& st, std::uint64_t seed, std::size_t width) {
  NetworkSpec s;
  s.model = kind;
  s.width = width;
  s.blocks = 4;
  s.in_channels = 3;
  s.out_channels = 3;
  return Network(s, st, "", seed);
}

void criterion5() {
  bool pass = true;
  std::string detail;
  for (ModelKind kind : {ModelKind::Laplace, ModelKind::Dirac}) {
    ParamStore st;
    const Network net = random_net(kind, st, 7, 16);
    const LipschitzReport r = lipschitz_input_check(net, shapes::icosphere(2), 200, 7);
    pass = pass && r.holds && r.trials == 200;
    detail += to_string(kind) + " max ratio " + fmt(r.max_ratio) + " <= bound " + fmt(r.bound.bound) + " over " +
              std::to_string(r.trials) + " pairs; ";
  }
  report("5", pass, detail);
}

void criterion6() {
  const auto t0 = Clock::now();
  const Mesh mesh = shapes::icosphere(2);
  const std::vector<double> eps{1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1};
  bool pass = true;
  std::string detail;
  auto zero_case = [&](ModelKind model, DeformationKind kind) {
    ParamStore st;
    const StabilityReport r = deformation_stability_sweep(random_net(model, st, 3, 8), mesh, kind, eps, 3);
    double w = 0.0;
    for (double d : r.relative_distance) w = std::max(w, d);
    pass = pass && w < 1e-9;
    detail += to_string(kind) + "/" + to_string(model) + " max rel " + fmt(w) + "; ";
  };
  zero_case(ModelKind::Laplace, DeformationKind::Rigid);
  zero_case(ModelKind::Dirac, DeformationKind::Translation);
  // The bend slope depends on the random network, so several are drawn and
  // every one must reach 0.9. The slope over eps <= 1e-2 is printed beside.
  for (ModelKind model : {ModelKind::Laplace, ModelKind::Dirac}) {
    std::string slopes, small;
    double lowest = 1e300;
    for (std::uint64_t seed = 3; seed < 11; ++seed) {
      ParamStore st;
      const StabilityReport r =
          deformation_stability_sweep(random_net(model, st, seed, 8), mesh, DeformationKind::SmoothBend, eps, seed);
      lowest = std::min(lowest, r.slope);
      slopes += " " + fmt(r.slope);
      small += " " + fmt(loglog_slope(std::span(r.eps).first(4), std::span(r.distance).first(4)));
    }
    pass = pass && lowest >= 0.9;
    detail += "bend/" + to_string(model) + " slopes" + slopes + " (eps <= 1e-2:" + small + "); ";
  }
  const double t = seconds_since(t0);
  pass = pass && t < 120.0;
  report("6", pass, detail + fmt(t) + " s");
}

void criterion7() {
  ParamStore st;
  const Network net = random_net(ModelKind::Laplace, st, 11, 16);
  const std::vector<int> res{2, 3, 4};
  const DiscretizationReport r = discretization_consistency(AnalyticSurface::Sphere, res, net, 11);
  std::string d;
  for (std::size_t k = 0; k < r.distance.size(); ++k)
    d += "subdiv " + std::to_string(r.resolutions[k]) + ": " + fmt(r.distance[k]) + "; ";
  report("7", r.strictly_decreasing, d);
}

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

void criterion8() {
  const MeshMnistOptions o;
  std::size_t valid = 0, in_range = 0, spaced = 0, delaunay_ok = 0;
  std::size_t lo = SIZE_MAX, hi = 0;
  double min_dist = 1e300;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    MeshMnistSample s;
    try {
      s = make_meshmnist_sample(seed, o);
      Mesh check(s.mesh.lifted.vertices(), s.mesh.lifted.faces());  // full validation
      ++valid;
    } catch (const Error& e) {
      std::cout << "  seed " << seed << ": " << e.what() << "\n";
      continue;
    }
    const Mesh& m = s.mesh.base;
    const std::size_t n = m.num_vertices();
    lo = std::min(lo, n);
    hi = std::max(hi, n);
    in_range += n >= 400 && n <= 620;
    double best = 1e300;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const Vec3 d = m.vertex(i) - m.vertex(j);
        best = std::min(best, std::hypot(d.x, d.y));
      }
    }
    min_dist = std::min(min_dist, best);
    spaced += best >= o.radius;
    if (seed < 10) {
      bool ok = true;
      for (const Face& f : m.faces()) {
        for (std::size_t v = 0; v < n && ok; ++v) {
          if (v == f[0] || v == f[1] || v == f[2]) continue;
          ok = !strictly_inside_circumcircle(m.vertex(f[0]), m.vertex(f[1]), m.vertex(f[2]), m.vertex(v));
        }
      }
      delaunay_ok += ok;
    }
  }
  report("8", valid == 100 && in_range == 100 && spaced == 100 && delaunay_ok == 10,
         std::to_string(valid) + "/100 valid, vertex counts " + std::to_string(lo) + ".." + std::to_string(hi) +
             ", min distance " + fmt(min_dist) + " (r = " + fmt(o.radius) + "), empty circumcircles " +
             std::to_string(delaunay_ok) + "/10");
}

// Template of the correspondence smoke test (about 200 vertices).
Mesh smoke_mesh() {
  MeshMnistOptions o;
  o.radius = CorrespondenceDatasetOptions{}.radius;
  return make_meshmnist_sample(0, o).mesh.lifted;
}

struct CorrRun {
  std::vector<double> accuracy_at;  // after each chunk
  std::size_t steps_to_95 = 0;
  double initial_loss = 0.0;
  GeodesicCurve curve;
};

// Trains on the given pairs in chunks of `chunk` steps up to `budget`;
// evaluates exact accuracy on `eval` after each chunk.
CorrRun train_correspondence(ModelKind kind, std::span<const CorrespondencePair> train,
                             std::span<const CorrespondencePair> eval, std::size_t budget, std::size_t chunk,
                             std::size_t batch) {
  const cli::RunConfig desk = cli::RunConfig::from_json({{"task", "correspondence"}});
  ParamStore st;
  CorrespondenceModel model(CorrespondenceModel::default_spec(kind, desk.network.width, desk.network.blocks), st, 0);
  Adam adam(desk.optimizer.adam);
  TrainOptions o = desk.optimizer;
  o.batch = batch;
  CorrRun r;
  {
    Tape tape;
    r.initial_loss = model.loss(tape, model.prepare(train[0]), true).value()(0, 0);
  }
  std::vector<CorrespondenceModel::Prepared> prepared;
  for (const CorrespondencePair& p : eval) prepared.push_back(model.prepare(p));
  auto accuracy = [&] {
    double a = 0.0;
    for (std::size_t k = 0; k < eval.size(); ++k) a += match_accuracy(eval[k], model.predict(prepared[k]));
    return a / static_cast<double>(eval.size());
  };
  for (std::size_t done = 0; done < budget; done += chunk) {
    o.start_step = done;
    o.steps = done + chunk;
    correspondence_train(model, adam, train, o, chunk);
    r.accuracy_at.push_back(accuracy());
    if (r.steps_to_95 == 0 && r.accuracy_at.back() >= 0.95) r.steps_to_95 = done + chunk;
  }
  std::vector<GeodesicCurve> curves;
  for (std::size_t k = 0; k < eval.size(); ++k) curves.push_back(geodesic_error_curve(eval[k], model.predict(prepared[k])));
  r.curve = curves[0];
  for (std::size_t b = 0; b < r.curve.fraction.size(); ++b) {
    double f = 0.0;
    for (const GeodesicCurve& c : curves) f += c.fraction[b];
    r.curve.fraction[b] = f / static_cast<double>(curves.size());
  }
  return r;
}

void criterion9() {
  const auto t0 = Clock::now();
  const CorrespondencePair pair = self_pair(smoke_mesh());
  const std::vector<CorrespondencePair> pairs{pair};
  const CorrRun r = train_correspondence(ModelKind::Laplace, pairs, pairs, 500, 50, 1);
  const double logn = std::log(static_cast<double>(pair.b.num_vertices()));
  const double rel = std::abs(r.initial_loss - logn) / logn;
  report("9", r.steps_to_95 > 0 && rel < 0.02,
         std::to_string(pair.a.num_vertices()) + " vertices, initial loss " + fmt(r.initial_loss) + " vs log N " +
             fmt(logn) + " (" + fmt(100 * rel) + "%), >= 95% after " +
             (r.steps_to_95 ? std::to_string(r.steps_to_95) + " steps" : std::string("never")) + ", final " +
             fmt(100 * r.accuracy_at.back()) + "%, " + fmt(seconds_since(t0)) + " s");
}

std::string curve_text(const GeodesicCurve& c) {
  std::string s;
  for (std::size_t k = 0; k < c.fraction.size(); k += 5) s += fmt(c.fraction[k]) + " ";
  return s;
}

void criterion10() {
  const auto t0 = Clock::now();
  // Temporal ordering over three seeds at the same budget.
  constexpr std::size_t kTemporalSteps = 300;
  const TemporalOptions to;
  std::size_t ordered = 0;
  std::string tdetail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto train = make_temporal_dataset(32, seed, to);
    const auto test = make_temporal_dataset(8, seed + 1000003, to);
    std::map<ModelKind, double> loss;
    for (ModelKind kind : {ModelKind::Laplace, ModelKind::PointCloud, ModelKind::Mlp}) {
      ParamStore st;
      const Network net(temporal_spec(kind, to.frames_out, 32, 4), st, "net.", seed);
      std::vector<TemporalPrepared> tr, te;
      for (const auto& s : train) tr.push_back(prepare_temporal(net, s));
      for (const auto& s : test) te.push_back(prepare_temporal(net, s));
      Adam adam;
      TrainOptions o;
      o.steps = kTemporalSteps;
      o.batch = 8;
      o.seed = seed;
      temporal_train(net, adam, tr, o, kTemporalSteps);
      loss[kind] = temporal_eval(net, te);
    }
    const bool ok = loss[ModelKind::Laplace] < loss[ModelKind::PointCloud] &&
                    loss[ModelKind::PointCloud] < loss[ModelKind::Mlp];
    ordered += ok;
    tdetail += "seed " + std::to_string(seed) + ": laplace " + fmt(loss[ModelKind::Laplace]) + " pointcloud " +
               fmt(loss[ModelKind::PointCloud]) + " mlp " + fmt(loss[ModelKind::Mlp]) + (ok ? " ok" : " out of order") +
               "; ";
  }
  report("10a", ordered == 3, "temporal smooth-L1 after " + std::to_string(kTemporalSteps) + " steps, " + tdetail);

  // Correspondence ordering on the self-correspondence smoke test.
  const CorrespondencePair pair = self_pair(smoke_mesh());
  const std::vector<CorrespondencePair> pairs{pair};
  std::map<ModelKind, CorrRun> runs;
  for (ModelKind kind : {ModelKind::Laplace, ModelKind::Dirac, ModelKind::Mlp})
    runs[kind] = train_correspondence(kind, pairs, pairs, 500, 500, 1);
  bool strict = true;
  for (std::size_t b = 0; b < runs[ModelKind::Mlp].curve.fraction.size(); ++b) {
    const double mlp = runs[ModelKind::Mlp].curve.fraction[b];
    strict = strict && runs[ModelKind::Laplace].curve.fraction[b] > mlp && runs[ModelKind::Dirac].curve.fraction[b] > mlp;
  }
  std::string cdetail = "fraction correct at errors 0, 0.05, .., 0.25 after 500 steps: ";
  for (auto& [kind, r] : runs) cdetail += to_string(kind) + " [ " + curve_text(r.curve) + "] ";

  // Held-out bent pairs, reported alongside.
  const auto train = make_correspondence_dataset(8, 1, {});
  const auto test = make_correspondence_dataset(4, 1 + 1000003, {});
  cdetail += "; held-out bent pairs after 300 steps, exact:";
  for (ModelKind kind : {ModelKind::Laplace, ModelKind::Dirac, ModelKind::Mlp}) {
    const CorrRun r = train_correspondence(kind, train, test, 300, 300, 2);
    cdetail += " " + to_string(kind) + " " + fmt(100 * r.accuracy_at.back()) + "%";
  }
  report("10b", strict, cdetail + ", " + fmt(seconds_since(t0)) + " s");
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return out;
}

void criterion11() {
  const fs::path root = fs::temp_directory_path() / ("surfnet_acceptance_" + std::to_string(std::random_device{}()));
  const std::vector<nlohmann::json> configs{
      {{"task", "temporal"},
       {"seed", 4},
       {"optimizer", {{"steps", 30}}},
       {"data", {{"count", 8}, {"test_count", 2}}}},
      {{"task", "correspondence"},
       {"seed", 4},
       {"optimizer", {{"steps", 30}, {"batch", 2}}},
       {"data", {{"pairs", 4}, {"test_pairs", 1}}}},
      {{"task", "vae"}, {"seed", 4}, {"optimizer", {{"steps", 30}}}, {"data", {{"count", 8}, {"test_count", 2}}}}};
  bool pass = true;
  std::string detail;
  for (const nlohmann::json& j : configs) {
    const std::string task = j.at("task");
    std::vector<std::map<std::string, std::string>> runs;
    for (const char* name : {"first", "second"}) {
      cli::RunConfig c = cli::RunConfig::from_json(j);
      c.out = root / task / name;
      runs.push_back(tree(cli::run_train(c).checkpoint));
    }
    const bool same = runs[0] == runs[1] && !runs[0].empty();
    std::size_t bytes = 0;
    for (const auto& [k, v] : runs[0]) bytes += v.size();
    pass = pass && same;
    detail += task + " " + std::to_string(runs[0].size()) + " files / " + std::to_string(bytes) + " bytes " +
              (same ? "identical" : "DIFFER") + "; ";
  }
  std::error_code ec;
  fs::remove_all(root, ec);
  report("11", pass, detail);
}

}  // namespace

int main() {
  std::cout << "surfnet " << cli::version() << " acceptance\n";
  const std::vector<std::pair<const char*, void (*)()>> all{
      {"1", criterion1}, {"2", criterion2}, {"3", criterion3},   {"4", criterion4},
      {"5", criterion5}, {"6", criterion6}, {"7", criterion7},   {"8", criterion8},
      {"9", criterion9}, {"10", criterion10}, {"11", criterion11}};
  for (const auto& [id, f] : all) {
    try {
      f();
    } catch (const std::exception& e) {
      report(id, false, std::string("exception: ") + e.what());
    }
  }
  std::cout << failures << " failing line(s)\n";
  return failures == 0 ? 0 : 1;
}
