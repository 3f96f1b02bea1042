#include "cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include "surfnet/error.hpp"
#include "surfnet/ops.hpp"
#include "surfnet/shapes.hpp"

namespace surfnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end())
      throw ConfigError(what + ": unknown key '" + k + "'");
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

void read_path(const json& j, const char* key, std::optional<fs::path>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = fs::path(j.at(key).get<std::string>());
}

json path_or_null(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

// Merge b into a copy of a (objects only, one level).
json merged(json a, const json& b) {
  for (const auto& [k, v] : b.items()) a[k] = v;
  return a;
}

}  // namespace

std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::Vae: return "vae";
    case TaskKind::Correspondence: return "correspondence";
    case TaskKind::Temporal: return "temporal";
  }
  return "?";
}

TaskKind task_from_string(const std::string& s) {
  if (s == "vae") return TaskKind::Vae;
  if (s == "correspondence") return TaskKind::Correspondence;
  if (s == "temporal") return TaskKind::Temporal;
  throw ConfigError("unknown task '" + s + "' (vae, correspondence, temporal)");
}

std::string version() { return SURFNET_VERSION; }

void apply_preset(RunConfig& c, const std::string& name) {
  if (name == "desk") {
    c.network.blocks = 4;
    c.network.width = 32;
    c.optimizer.steps = 2000;
    c.optimizer.batch = 8;
    c.optimizer.adam.lr = 1e-3;
    c.optimizer.adam.weight_decay = 1e-5;
    c.optimizer.decay_start = 0;
    c.optimizer.decay_every = 0;
  } else if (name == "paper") {
    c.network.blocks = 15;
    c.network.width = 128;
    c.optimizer.steps = 100000;
    c.optimizer.batch = 8;
    c.optimizer.adam.lr = 1e-3;
    c.optimizer.adam.weight_decay = 1e-5;
    c.optimizer.decay_start = 60000;
    c.optimizer.decay_every = 10000;
  } else {
    throw ConfigError("unknown preset '" + name + "' (desk, paper)");
  }
  c.preset = name;
}

RunConfig RunConfig::from_json(const json& j) {
  reject_unknown(j, {"task", "preset", "seed", "out", "network", "optimizer", "data", "version"}, "config");
  RunConfig c;
  if (!j.contains("task")) throw ConfigError("config: 'task' is required");
  c.task = task_from_string(j.at("task").get<std::string>());
  std::string preset = "desk";
  read_opt(j, "preset", preset);
  apply_preset(c, preset);
  read_opt(j, "seed", c.seed);
  std::string out = c.out.string();
  read_opt(j, "out", out);
  c.out = out;

  if (c.task == TaskKind::Correspondence) c.network.head_init_scale = 0.05;
  if (j.contains("network")) {
    const json net = j.at("network");
    reject_unknown(net, {"model", "width", "blocks", "avgpool_period", "head_init_scale", "in_channels", "out_channels"},
                   "network");
    c.network = NetworkSpec::from_json(merged(c.network.to_json(), net));
  }
  c.optimizer.seed = c.seed;
  if (j.contains("optimizer")) c.optimizer = TrainOptions::from_json(merged(c.optimizer.to_json(), j.at("optimizer")));

  const json data = j.value("data", json::object());
  switch (c.task) {
    case TaskKind::Vae: {
      reject_unknown(data, {"path", "count", "test_count", "radius", "raw", "idx_images", "idx_labels", "latent_dim"},
                     "data");
      read_path(data, "path", c.vae.path);
      read_opt(data, "count", c.vae.count);
      read_opt(data, "test_count", c.vae.test_count);
      read_opt(data, "radius", c.vae.mnist.radius);
      read_opt(data, "raw", c.vae.mnist.raw);
      read_path(data, "idx_images", c.vae.mnist.idx_images);
      read_path(data, "idx_labels", c.vae.mnist.idx_labels);
      read_opt(data, "latent_dim", c.vae.latent_dim);
      if (c.vae.count == 0 && !c.vae.path) throw ConfigError("data.count must be >= 1");
      break;
    }
    case TaskKind::Correspondence: {
      reject_unknown(data, {"pairs", "test_pairs", "radius", "amplitude", "permute", "self_mesh"}, "data");
      read_opt(data, "pairs", c.correspondence.pairs);
      read_opt(data, "test_pairs", c.correspondence.test_pairs);
      read_opt(data, "radius", c.correspondence.options.radius);
      read_opt(data, "amplitude", c.correspondence.options.amplitude);
      read_opt(data, "permute", c.correspondence.options.permute);
      read_path(data, "self_mesh", c.correspondence.self_mesh);
      if (c.correspondence.pairs == 0) throw ConfigError("data.pairs must be >= 1");
      break;
    }
    case TaskKind::Temporal: {
      reject_unknown(data, {"count", "test_count", "frames_out", "c2", "radius", "amplitude", "blowup"}, "data");
      read_opt(data, "count", c.temporal.count);
      read_opt(data, "test_count", c.temporal.test_count);
      json opts = json::object();
      for (const char* k : {"frames_out", "c2", "radius", "amplitude", "blowup"}) {
        if (data.contains(k)) opts[k] = data.at(k);
      }
      c.temporal.options = TemporalOptions::from_json(merged(c.temporal.options.to_json(), opts));
      if (c.temporal.count == 0) throw ConfigError("data.count must be >= 1");
      break;
    }
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) { return from_json(read_json(path)); }

json RunConfig::to_json() const {
  // out is left out so that runs into different directories write
  // identical files.
  json j{{"task", surfnet::cli::to_string(task)}, {"preset", preset},      {"seed", seed},
         {"version", version()},                  {"optimizer", optimizer.to_json()}};
  json net = network.to_json();
  net.erase("in_channels");
  net.erase("out_channels");
  j["network"] = net;
  switch (task) {
    case TaskKind::Vae:
      j["data"] = {{"path", path_or_null(vae.path)},
                   {"count", vae.count},
                   {"test_count", vae.test_count},
                   {"radius", vae.mnist.radius},
                   {"raw", vae.mnist.raw},
                   {"idx_images", path_or_null(vae.mnist.idx_images)},
                   {"idx_labels", path_or_null(vae.mnist.idx_labels)},
                   {"latent_dim", vae.latent_dim}};
      break;
    case TaskKind::Correspondence:
      j["data"] = {{"pairs", correspondence.pairs},
                   {"test_pairs", correspondence.test_pairs},
                   {"radius", correspondence.options.radius},
                   {"amplitude", correspondence.options.amplitude},
                   {"permute", correspondence.options.permute},
                   {"self_mesh", path_or_null(correspondence.self_mesh)}};
      break;
    case TaskKind::Temporal:
      j["data"] = merged({{"count", temporal.count}, {"test_count", temporal.test_count}}, temporal.options.to_json());
      break;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Training and evaluation

namespace {

constexpr std::uint64_t kTestSeedOffset = 1000003;

std::vector<HeightFieldMesh> vae_split(const RunConfig& c, bool test) {
  std::vector<HeightFieldMesh> out;
  if (c.vae.path) {
    for (MeshMnistSample& s : read_meshmnist_dataset(*c.vae.path)) out.push_back(std::move(s.mesh));
    return out;
  }
  std::vector<Image> images;
  std::vector<std::uint8_t> labels;
  if (c.vae.mnist.idx_images) images = read_idx_images(*c.vae.mnist.idx_images);
  if (c.vae.mnist.idx_labels) labels = read_idx_labels(*c.vae.mnist.idx_labels);
  const std::size_t n = test ? c.vae.test_count : c.vae.count;
  const std::uint64_t base = c.seed * 100000 + (test ? kTestSeedOffset : 0);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_meshmnist_sample(base + i, c.vae.mnist, images, labels).mesh);
  return out;
}

std::vector<CorrespondencePair> correspondence_split(const RunConfig& c, bool test) {
  if (c.correspondence.self_mesh) return {self_pair(load_mesh(*c.correspondence.self_mesh))};
  return make_correspondence_dataset(test ? c.correspondence.test_pairs : c.correspondence.pairs,
                                     c.seed + (test ? kTestSeedOffset : 0), c.correspondence.options);
}

std::vector<TemporalSample> temporal_split(const RunConfig& c, bool test) {
  return make_temporal_dataset(test ? c.temporal.test_count : c.temporal.count, c.seed + (test ? kTestSeedOffset : 0),
                               c.temporal.options);
}

VaeConfig vae_config(const RunConfig& c) {
  VaeConfig v;
  v.model = c.network.model;
  v.latent_dim = c.vae.latent_dim;
  v.width = c.network.width;
  v.blocks = c.network.blocks;
  return v;
}

NetworkSpec correspondence_spec(const RunConfig& c) {
  NetworkSpec s = CorrespondenceModel::default_spec(c.network.model, c.network.width, c.network.blocks);
  s.avgpool_period = c.network.avgpool_period;
  s.head_init_scale = c.network.head_init_scale;
  return s;
}

NetworkSpec temporal_network(const RunConfig& c) {
  NetworkSpec s = temporal_spec(c.network.model, c.temporal.options.frames_out, c.network.width, c.network.blocks);
  s.avgpool_period = c.network.avgpool_period;
  s.head_init_scale = c.network.head_init_scale;
  return s;
}

// A model of the configured task, owning its parameters.
struct Model {
  ParamStore store;
  std::unique_ptr<VaeModel> vae;
  std::unique_ptr<CorrespondenceModel> corr;
  std::unique_ptr<Network> net;

  explicit Model(const RunConfig& c) {
    switch (c.task) {
      case TaskKind::Vae: vae = std::make_unique<VaeModel>(vae_config(c), store, c.seed); break;
      case TaskKind::Correspondence:
        corr = std::make_unique<CorrespondenceModel>(correspondence_spec(c), store, c.seed);
        break;
      case TaskKind::Temporal: net = std::make_unique<Network>(temporal_network(c), store, "net.", c.seed); break;
    }
  }
};

json curve_mean(const std::vector<GeodesicCurve>& curves) {
  std::vector<double> frac(curves.at(0).fraction.size(), 0.0);
  for (const GeodesicCurve& c : curves) {
    for (std::size_t k = 0; k < frac.size(); ++k) frac[k] += c.fraction[k] / static_cast<double>(curves.size());
  }
  return {{"thresholds", curves[0].thresholds}, {"fraction", frac}};
}

json evaluate(const RunConfig& c, Model& m, const std::optional<fs::path>& dataset, const fs::path& out_dir) {
  json e{{"task", to_string(c.task)}};
  switch (c.task) {
    case TaskKind::Vae: {
      RunConfig cc = c;
      if (dataset) cc.vae.path = *dataset;
      const auto test = vae_split(cc, !cc.vae.path);
      double mse = 0.0, elbo = 0.0;
      for (const HeightFieldMesh& h : test) {
        mse += m.vae->reconstruction_mse(h) / static_cast<double>(test.size());
        const VaeModel::Prepared p = m.vae->prepare(h);
        const VaeModel::Prepared* ptr = &p;
        Tape tape;
        elbo += m.vae->loss(tape, std::span(&ptr, 1), DenseMatrix(1, cc.vae.latent_dim), false).loss.value()(0, 0) /
                static_cast<double>(test.size());
      }
      e["samples"] = test.size();
      e["reconstruction_mse"] = mse;
      e["neg_elbo_at_mean"] = elbo;
      e["log_var"] = m.vae->log_var();
      break;
    }
    case TaskKind::Correspondence: {
      const auto test = correspondence_split(c, true);
      std::vector<GeodesicCurve> curves;
      double acc = 0.0;
      for (const CorrespondencePair& p : test) {
        const auto pred = m.corr->predict(m.corr->prepare(p));
        acc += match_accuracy(p, pred) / static_cast<double>(test.size());
        curves.push_back(geodesic_error_curve(p, pred));
      }
      e["pairs"] = test.size();
      e["accuracy"] = acc;
      e["curve"] = curve_mean(curves);
      if (!out_dir.empty()) {
        GeodesicCurve mean;
        mean.thresholds = curves[0].thresholds;
        mean.fraction = e["curve"]["fraction"].get<std::vector<double>>();
        mean.write_csv(out_dir / "curve.csv");
      }
      break;
    }
    case TaskKind::Temporal: {
      const auto test = temporal_split(c, true);
      std::vector<TemporalPrepared> prepared;
      for (const TemporalSample& s : test) prepared.push_back(prepare_temporal(*m.net, s));
      e["sequences"] = test.size();
      e["smooth_l1"] = temporal_eval(*m.net, prepared);
      break;
    }
  }
  return e;
}

}  // namespace

TrainResult run_train(const RunConfig& c, const std::optional<fs::path>& resume) {
  fs::create_directories(c.out);
  write_json(c.out / "config.json", c.to_json());
  Model m(c);
  Adam adam(c.optimizer.adam);
  TrainOptions options = c.optimizer;
  if (resume) {
    load_checkpoint(*resume, m.store, &adam);
    options.start_step = static_cast<std::size_t>(adam.steps());
  }
  const std::size_t log_every = 10;
  LossLog log;
  switch (c.task) {
    case TaskKind::Vae: log = vae_train(*m.vae, adam, vae_split(c, false), options, log_every); break;
    case TaskKind::Correspondence:
      log = correspondence_train(*m.corr, adam, correspondence_split(c, false), options, log_every);
      break;
    case TaskKind::Temporal: {
      std::vector<TemporalPrepared> prepared;
      for (const TemporalSample& s : temporal_split(c, false)) prepared.push_back(prepare_temporal(*m.net, s));
      log = temporal_train(*m.net, adam, prepared, options, log_every);
      break;
    }
  }
  log.write_csv(c.out / "loss.csv");
  TrainResult r;
  r.checkpoint = c.out / "checkpoint";
  json manifest{{"config", c.to_json()}, {"version", version()}, {"task", to_string(c.task)}};
  save_checkpoint(r.checkpoint, m.store, &adam, manifest);
  r.eval = evaluate(c, m, std::nullopt, c.out);
  if (!log.loss.empty()) r.eval["final_train_loss"] = log.loss.back();
  write_json(c.out / "eval.json", r.eval);
  return r;
}

namespace {

RunConfig config_of_checkpoint(const fs::path& checkpoint) {
  const json manifest = read_manifest(checkpoint);
  if (!manifest.contains("config")) throw ConfigError(checkpoint.string() + ": manifest has no config");
  return RunConfig::from_json(manifest.at("config"));
}

}  // namespace

json run_eval(const fs::path& checkpoint, const std::optional<fs::path>& dataset) {
  const RunConfig c = config_of_checkpoint(checkpoint);
  Model m(c);
  load_checkpoint(checkpoint, m.store, nullptr);
  return evaluate(c, m, dataset, {});
}

// ---------------------------------------------------------------------------
// Commands

int guarded(const std::function<int()>& f) {
  try {
    return f();
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
}

namespace {

void write_triplets(const fs::path& path, const SparseOperator& op) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "row,col,value\n";
  for (std::size_t r = 0; r < op.rows(); ++r) {
    for (std::size_t k = op.row_ptr()[r]; k < op.row_ptr()[r + 1]; ++k)
      out << r << "," << op.col_idx()[k] << "," << op.values()[k] << "\n";
  }
}

void write_quaternion_triplets(const fs::path& path, const SparseOperator& op) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "row,col,w,x,y,z\n";
  for (std::size_t r = 0; r < op.rows(); ++r) {
    for (std::size_t k = op.row_ptr()[r]; k < op.row_ptr()[r + 1]; ++k) {
      const QuatBlock b = op.quat_block(k);
      out << r << "," << op.col_idx()[k] << "," << b(0, 0) << "," << b(1, 0) << "," << b(2, 0) << "," << b(3, 0) << "\n";
    }
  }
}

json identity_json(const IdentityReport& r) {
  return {{"max_rel_error", r.max_rel_error}, {"max_abs_error", r.max_abs_error}, {"reference_scale", r.reference_scale}};
}

json norm_bound_json(const NormBoundReport& r) {
  return {{"bound", r.bound},     {"bound_degree", r.bound_degree}, {"measured", r.measured}, {"min_angle", r.min_angle},
          {"s_max", r.s_max},     {"d_max", r.d_max},               {"min_abar", r.min_abar}, {"holds", r.holds}};
}

json dirac_norm_json(const DiracNormReport& r) {
  return {{"dirac_sq_plain", r.dirac_sq_plain}, {"laplace_plain", r.laplace_plain}, {"rel_diff_plain", r.rel_diff_plain},
          {"dirac_sq_mass", r.dirac_sq_mass},   {"laplace_mass", r.laplace_mass},   {"rel_diff_mass", r.rel_diff_mass}};
}

}  // namespace

int cmd_ops(const fs::path& mesh_path, const std::string& mode, const fs::path& out) {
  const Mesh mesh = load_mesh(mesh_path);
  fs::create_directories(out);
  json report{{"mesh", mesh_path.string()}, {"vertices", mesh.num_vertices()}, {"faces", mesh.num_faces()},
              {"version", version()}, {"mode", mode}};
  int code = kPass;
  if (mode == "laplacian") {
    const LaplacePack l = assemble_laplacian(mesh);
    write_triplets(out / "laplacian.csv", l.Delta);
    write_triplets(out / "stiffness.csv", l.stiffness);
    write_tensor(out / "vertex_areas.tnsr", DenseMatrix::column(l.abar));
    report["files"] = {"laplacian.csv", "stiffness.csv", "vertex_areas.tnsr"};
  } else if (mode == "dirac") {
    const DiracPack d = assemble_dirac(mesh);
    write_quaternion_triplets(out / "dirac.csv", d.D);
    write_quaternion_triplets(out / "dirac_adjoint.csv", d.Dadj);
    report["files"] = {"dirac.csv", "dirac_adjoint.csv"};
  } else if (mode == "verify-identity") {
    const IdentityReport r = verify_dirac_laplace_identity(mesh);
    report["identity"] = identity_json(r);
    report["maxError"] = r.max_rel_error;
    report["pass"] = r.max_rel_error < 1e-9;
    if (!(r.max_rel_error < 1e-9)) code = kCheckFailed;
  } else if (mode == "norm-bound") {
    const NormBoundReport r = laplacian_norm_bound(mesh);
    report["norm_bound"] = norm_bound_json(r);
    report["pass"] = r.holds;
    std::cout << "bound " << r.bound << (r.holds ? " >= " : " < ") << "measured " << r.measured << "\n";
    if (!r.holds) code = kCheckFailed;
  } else {
    std::cerr << "unknown ops mode '" << mode << "'\n";
    return kUsage;
  }
  write_json(out / "ops.json", report);
  std::cout << report.dump(2) << "\n";
  return code;
}

int cmd_gen_meshmnist(std::size_t count, std::uint64_t seed, double radius, bool raw,
                      const std::optional<fs::path>& idx_images, const std::optional<fs::path>& idx_labels,
                      const fs::path& out) {
  MeshMnistOptions o;
  o.radius = radius;
  o.raw = raw;
  o.idx_images = idx_images;
  o.idx_labels = idx_labels;
  const json manifest = write_meshmnist_dataset(out, count, seed, o);
  write_json(out / "config.json", {{"command", "gen-meshmnist"},
                                   {"count", count},
                                   {"seed", seed},
                                   {"radius", radius},
                                   {"raw", raw},
                                   {"idx_images", path_or_null(idx_images)},
                                   {"idx_labels", path_or_null(idx_labels)},
                                   {"version", version()}});
  std::cout << "wrote " << count << " samples to " << out.string() << "\n";
  return kPass;
}

int cmd_train(const fs::path& config, const std::optional<fs::path>& resume, const std::optional<fs::path>& out) {
  RunConfig c = RunConfig::load(config);
  if (out) c.out = *out;
  const TrainResult r = run_train(c, resume);
  std::cout << r.eval.dump(2) << "\n";
  return kPass;
}

int cmd_eval(const fs::path& checkpoint, const std::optional<fs::path>& dataset, const std::optional<fs::path>& out) {
  const json e = run_eval(checkpoint, dataset);
  if (out) {
    fs::create_directories(*out);
    write_json(*out / "eval.json", e);
    write_json(*out / "config.json", {{"command", "eval"},
                                      {"checkpoint", checkpoint.string()},
                                      {"dataset", path_or_null(dataset)},
                                      {"version", version()}});
  }
  std::cout << e.dump(2) << "\n";
  return kPass;
}

std::vector<std::pair<std::string, Mesh>> golden_meshes() {
  return {{"triangle", shapes::unit_right_triangle()},
          {"square_pair", shapes::square_pair()},
          {"tetrahedron", shapes::tetrahedron()},
          {"icosphere2", shapes::icosphere(2)},
          {"icosphere3", shapes::icosphere(3)},
          {"meshmnist", make_meshmnist_sample(0).mesh.lifted}};
}

int cmd_gen_golden(const fs::path& out) {
  fs::create_directories(out);
  for (const auto& [name, mesh] : golden_meshes()) {
    const fs::path p = out / (name + (name == "meshmnist" || name == "icosphere3" ? ".off" : ".obj"));
    save_mesh(mesh, p);
    std::cout << p.string() << ": " << mesh.num_vertices() << " vertices\n";
  }
  return kPass;
}

namespace {

Network random_net(ModelKind kind, ParamStore& st, std::uint64_t seed, std::size_t width = 8) {
  NetworkSpec s;
  s.model = kind;
  s.width = width;
  s.blocks = 4;
  s.in_channels = 3;
  s.out_channels = 3;
  return Network(s, st, "", seed);
}

Mesh sliver_patch() {
  // A fan around the origin whose first triangle is nearly flat.
  return Mesh({{0, 0, 0}, {1, 0, 0}, {0.5, 1e-3, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}},
              {{0, 1, 2}, {0, 2, 3}, {0, 3, 4}, {0, 4, 5}, {0, 5, 1}});
}

json suite_identity(bool& pass) {
  json j = json::array();
  auto goldens = golden_meshes();
  goldens.emplace_back("sliver", sliver_patch());
  for (const auto& [name, mesh] : goldens) {
    const IdentityReport id = verify_dirac_laplace_identity(mesh);
    const NormBoundReport nb = laplacian_norm_bound(mesh);
    const DiracNormReport dn = dirac_norm_relation(mesh);
    // The norm relation is recorded only; it does not hold in general.
    const bool ok = id.max_rel_error < 1e-9 && nb.holds;
    pass = pass && ok;
    j.push_back({{"mesh", name},
                 {"identity", identity_json(id)},
                 {"norm_bound", norm_bound_json(nb)},
                 {"norm_relation", dirac_norm_json(dn)},
                 {"norm_relation_holds_in", dn.rel_diff_mass < 1e-4 ? (dn.rel_diff_plain < 1e-4 ? "both" : "mass")
                                                                     : (dn.rel_diff_plain < 1e-4 ? "plain" : "neither")},
                 {"pass", ok}});
  }
  return j;
}

json suite_lipschitz(std::uint64_t seed, bool& pass) {
  json j = json::array();
  const Mesh mesh = shapes::icosphere(2);
  for (ModelKind kind : {ModelKind::Laplace, ModelKind::Dirac}) {
    ParamStore st;
    const Network net = random_net(kind, st, seed);
    const LipschitzReport r = lipschitz_input_check(net, mesh, 200, seed);
    pass = pass && r.holds;
    json e = r.to_json();
    e["model"] = to_string(kind);
    j.push_back(e);
  }
  return j;
}

json suite_deformation(std::uint64_t seed, const fs::path& out, bool& pass) {
  const Mesh mesh = shapes::icosphere(2);
  const std::vector<double> eps{1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1};
  json j = json::array();
  std::vector<PlotSeries> series;
  struct Case {
    ModelKind model;
    DeformationKind kind;
    bool zero;  // the output must not move
  };
  for (const Case& c : {Case{ModelKind::Laplace, DeformationKind::Rigid, true},
                        Case{ModelKind::Dirac, DeformationKind::Translation, true},
                        Case{ModelKind::Laplace, DeformationKind::SmoothBend, false},
                        Case{ModelKind::Dirac, DeformationKind::SmoothBend, false}}) {
    ParamStore st;
    const Network net = random_net(c.model, st, seed, 8);
    const StabilityReport r = deformation_stability_sweep(net, mesh, c.kind, eps, seed);
    bool ok = true;
    if (c.zero) {
      for (double d : r.relative_distance) ok = ok && d < 1e-9;
    } else {
      ok = r.slope >= 0.9;
      series.push_back({to_string(c.model) + " smooth bend", r.eps, r.distance});
    }
    pass = pass && ok;
    json e = r.to_json();
    e["pass"] = ok;
    j.push_back(e);
  }
  write_svg_plot(out / "deformation_stability.svg", "feature distance vs deformation size", series, true, true, "eps",
                 "|Phi(M) - Phi(tau M)|");
  return j;
}

json suite_discretization(std::uint64_t seed, const fs::path& out, bool& pass) {
  const std::vector<int> res{2, 3, 4};
  ParamStore st;
  const Network net = random_net(ModelKind::Laplace, st, seed, 8);
  const DiscretizationReport sphere = discretization_consistency(AnalyticSurface::Sphere, res, net, seed);
  const std::vector<int> tres{0, 1, 2};
  const DiscretizationReport torus = discretization_consistency(AnalyticSurface::Torus, tres, net, seed);
  pass = pass && sphere.strictly_decreasing;
  std::vector<double> sx(sphere.vertex_counts.begin(), sphere.vertex_counts.end());
  std::vector<double> tx(torus.vertex_counts.begin(), torus.vertex_counts.end());
  write_svg_plot(out / "discretization.svg", "cross-meshing feature distance",
                 {{"sphere", sx, sphere.distance}, {"torus", tx, torus.distance}}, true, true, "vertices", "RMS distance");
  const CurvatureConvergence cc = mean_curvature_convergence(std::vector<int>{1, 2, 3, 4});
  return {{"sphere", sphere.to_json()},
          {"torus", torus.to_json()},
          {"mean_curvature", {{"subdivisions", cc.subdivisions}, {"max_error", cc.max_error}, {"rms_error", cc.rms_error}}},
          {"pass", sphere.strictly_decreasing}};
}

}  // namespace

int cmd_verify(const std::string& suite, const fs::path& out, std::uint64_t seed) {
  const bool all = suite == "all";
  if (!all && suite != "identity" && suite != "lipschitz" && suite != "deformation" && suite != "discretization") {
    std::cerr << "unknown suite '" << suite << "'\n";
    return kUsage;
  }
  fs::create_directories(out);
  json report{{"suite", suite}, {"seed", seed}, {"version", version()}};
  bool pass = true;
  auto run = [&](const std::string& name, const std::function<json(bool&)>& f) {
    if (!all && suite != name) return;
    bool ok = true;
    report[name] = f(ok);
    report[name + "_pass"] = ok;
    std::cout << name << ": " << (ok ? "pass" : "FAIL") << "\n";
    pass = pass && ok;
  };
  run("identity", [&](bool& ok) { return suite_identity(ok); });
  run("lipschitz", [&](bool& ok) { return suite_lipschitz(seed, ok); });
  run("deformation", [&](bool& ok) { return suite_deformation(seed, out, ok); });
  run("discretization", [&](bool& ok) { return suite_discretization(seed, out, ok); });
  report["pass"] = pass;
  write_json(out / "verify.json", report);
  write_json(out / "config.json", {{"command", "verify"}, {"suite", suite}, {"seed", seed}, {"version", version()}});
  return pass ? kPass : kCheckFailed;
}

namespace {

std::vector<std::int64_t> read_ground_truth(const fs::path& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::int64_t> gt(n, kNoMatch);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
    long long i = 0, j = 0;
    char comma = 0;
    std::istringstream ss(line);
    if (!(ss >> i >> comma >> j) || comma != ',') throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected i,j");
    if (i < 0 || static_cast<std::size_t>(i) >= n)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": vertex index out of range");
    gt[static_cast<std::size_t>(i)] = j;
  }
  return gt;
}

std::array<double, 3> position_color(const DenseMatrix& x, std::size_t i) {
  std::array<double, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = std::clamp(0.5 + 0.5 * x(i, k), 0.0, 1.0);
  return c;
}

void write_colored_obj(const fs::path& path, const Mesh& m, const std::vector<std::array<double, 3>>& colors) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  for (std::size_t i = 0; i < m.num_vertices(); ++i) {
    const Vec3& v = m.vertex(i);
    out << "v " << v.x << " " << v.y << " " << v.z << " " << colors[i][0] << " " << colors[i][1] << " " << colors[i][2]
        << "\n";
  }
  for (const Face& f : m.faces()) out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
}

}  // namespace

int cmd_correspond(const fs::path& checkpoint, const fs::path& mesh_a, const fs::path& mesh_b,
                   const std::optional<fs::path>& gt_path, const fs::path& out) {
  const RunConfig c = config_of_checkpoint(checkpoint);
  if (c.task != TaskKind::Correspondence) throw ConfigError("checkpoint is not a correspondence model");
  Model m(c);
  load_checkpoint(checkpoint, m.store, nullptr);
  const Mesh a = load_mesh(mesh_a), b = load_mesh(mesh_b);
  // Geodesic errors need both meshes connected; fail before any output.
  dijkstra(a, 0);
  dijkstra(b, 0);
  const Network& net = m.corr->net();
  const DenseMatrix xa = InputFrame::of(a).coordinates(a), xb = InputFrame::of(b).coordinates(b);
  const DenseMatrix ea = net.predict(operators_for(net.spec(), a), xa);
  const DenseMatrix eb = net.predict(operators_for(net.spec(), b), xb);
  const DenseMatrix s = softmax_similarity(ea, eb);
  const std::vector<std::size_t> pred = argmax_rows(s);

  fs::create_directories(out);
  {
    std::ofstream csv(out / "matches.csv");
    csv.precision(17);
    csv << "i,j,s\n";
    for (std::size_t i = 0; i < pred.size(); ++i) csv << i << "," << pred[i] << "," << s(i, pred[i]) << "\n";
  }
  json report{{"checkpoint", checkpoint.string()}, {"mesh_a", mesh_a.string()}, {"mesh_b", mesh_b.string()},
              {"version", version()}};

  CorrespondencePair pair{a, b, {}};
  if (gt_path) {
    pair.gt = read_ground_truth(*gt_path, a.num_vertices());
  } else if (a.num_vertices() == b.num_vertices()) {
    pair.gt = self_pair(a).gt;  // same indexing assumed
    report["ground_truth"] = "identity";
  }
  if (!pair.gt.empty() && pair.labeled() > 0) {
    const GeodesicCurve curve = geodesic_error_curve(pair, pred);
    curve.write_csv(out / "curve.csv");
    report["accuracy"] = match_accuracy(pair, pred);
    report["curve"] = curve.to_json();
  }

  // Colours from A's normalized coordinates, carried to B through the B -> A
  // matches.
  const std::vector<std::size_t> back = predict_matches(eb, ea);
  std::vector<std::array<double, 3>> ca(a.num_vertices()), cb(b.num_vertices());
  for (std::size_t i = 0; i < ca.size(); ++i) ca[i] = position_color(xa, i);
  for (std::size_t j = 0; j < cb.size(); ++j) cb[j] = ca[back[j]];
  write_colored_obj(out / "source_colors.obj", a, ca);
  write_colored_obj(out / "transfer.obj", b, cb);
  write_json(out / "correspond.json", report);
  std::cout << report.dump(2) << "\n";
  return kPass;
}

}  // namespace surfnet::cli
