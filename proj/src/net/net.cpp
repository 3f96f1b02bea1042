#include "surfnet/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "surfnet/error.hpp"
#include "surfnet/ops.hpp"

namespace surfnet {

// ---------------------------------------------------------------------------
// Operator batches

OperatorBatch OperatorBatch::from_mesh(const Mesh& mesh, bool laplace, bool dirac) {
  OperatorBatch b;
  b.vertex_offsets = {0, mesh.num_vertices()};
  b.face_offsets = {0, mesh.num_faces()};
  if (laplace) {
    b.has_laplace = true;
    b.laplace = assemble_laplacian(mesh).Delta;
    b.laplace_t = transpose(b.laplace);
  }
  if (dirac) {
    DiracPack pack = assemble_dirac(mesh);
    b.has_dirac = true;
    b.dirac = std::move(pack.D);
    b.dirac_adj = std::move(pack.Dadj);
    b.dirac_t = transpose(b.dirac);
    b.dirac_adj_t = transpose(b.dirac_adj);
  }
  return b;
}

OperatorBatch operators_for(const NetworkSpec& spec, const Mesh& mesh) {
  if (!spec.needs_laplace() && !spec.needs_dirac()) return OperatorBatch::points(mesh.num_vertices());
  return OperatorBatch::from_mesh(mesh, spec.needs_laplace(), spec.needs_dirac());
}

OperatorBatch OperatorBatch::points(std::size_t count) {
  OperatorBatch b;
  b.vertex_offsets = {0, count};
  b.face_offsets = {0, 0};
  return b;
}

OperatorBatch OperatorBatch::concat(std::span<const OperatorBatch* const> parts) {
  if (parts.empty()) throw ValidationError("OperatorBatch::concat: no parts");
  OperatorBatch b;
  b.has_laplace = true;
  b.has_dirac = true;
  for (const OperatorBatch* p : parts) {
    b.has_laplace = b.has_laplace && p->has_laplace;
    b.has_dirac = b.has_dirac && p->has_dirac;
    for (std::size_t m = 1; m < p->vertex_offsets.size(); ++m) {
      b.vertex_offsets.push_back(b.vertex_offsets.back() + p->vertex_offsets[m] - p->vertex_offsets[m - 1]);
      b.face_offsets.push_back(b.face_offsets.back() + p->face_offsets[m] - p->face_offsets[m - 1]);
    }
  }
  auto stack = [&](SparseOperator OperatorBatch::*member) {
    std::vector<const SparseOperator*> ops;
    for (const OperatorBatch* p : parts) ops.push_back(&(p->*member));
    return block_diagonal(ops);
  };
  if (b.has_laplace) {
    b.laplace = stack(&OperatorBatch::laplace);
    b.laplace_t = stack(&OperatorBatch::laplace_t);
  }
  if (b.has_dirac) {
    b.dirac = stack(&OperatorBatch::dirac);
    b.dirac_t = stack(&OperatorBatch::dirac_t);
    b.dirac_adj = stack(&OperatorBatch::dirac_adj);
    b.dirac_adj_t = stack(&OperatorBatch::dirac_adj_t);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Layers

Var activate(Var x, Activation rho) { return rho == Activation::Elu ? ad::elu(x) : x; }

namespace {

void require_rows(Var x, std::size_t rows, const char* what) {
  if (x.rows() != rows) {
    throw DimensionMismatch(std::string(what) + ": input has " + std::to_string(x.rows()) + " rows, expected " +
                            std::to_string(rows));
  }
}

void require_quad(Var x, const char* what) {
  if (x.cols() % 4 != 0) {
    throw NonQuadChannels(std::string(what) + ": " + std::to_string(x.cols()) + " channels is not a multiple of 4");
  }
}

}  // namespace

Var laplace_layer(Var x, const OperatorBatch& ops, Var a, Var b, Activation rho) {
  if (!ops.has_laplace) throw ValidationError("laplace_layer: batch has no Laplacian");
  require_rows(x, ops.num_vertices(), "laplace_layer");
  const Var dx = ad::spmv(ops.laplace, ops.laplace_t, x);
  return activate(ad::add(ad::linear(dx, a), ad::linear(x, b)), rho);
}

Var dirac_down_layer(Var x, Var y, const OperatorBatch& ops, Var c, Var e, Activation rho) {
  if (!ops.has_dirac) throw ValidationError("dirac_down_layer: batch has no Dirac operator");
  require_rows(x, ops.num_vertices(), "dirac_down_layer");
  require_rows(y, ops.num_faces(), "dirac_down_layer");
  require_quad(x, "dirac_down_layer");
  require_quad(y, "dirac_down_layer");
  const Var dx = ad::spmv(ops.dirac, ops.dirac_t, x);
  return activate(ad::add(ad::qmix(dx, c), ad::qmix(y, e)), rho);
}

Var dirac_up_layer(Var y, Var x, const OperatorBatch& ops, Var a, Var b, Activation rho) {
  if (!ops.has_dirac) throw ValidationError("dirac_up_layer: batch has no Dirac operator");
  require_rows(x, ops.num_vertices(), "dirac_up_layer");
  require_rows(y, ops.num_faces(), "dirac_up_layer");
  require_quad(x, "dirac_up_layer");
  require_quad(y, "dirac_up_layer");
  const Var dy = ad::spmv(ops.dirac_adj, ops.dirac_adj_t, y);
  return activate(ad::add(ad::qmix(dy, a), ad::qmix(x, b)), rho);
}

Var avgpool_layer(Var x, const OperatorBatch& ops, Var a, Var b, Activation rho) {
  require_rows(x, ops.num_vertices(), "avgpool_layer");
  const Var pooled = ad::broadcast_segments(ad::segment_mean(x, ops.vertex_offsets), ops.vertex_offsets);
  return activate(ad::add(ad::linear(x, b), ad::linear(pooled, a)), rho);
}

Var mlp_layer(Var x, Var b, Activation rho) { return activate(ad::linear(x, b), rho); }

// ---------------------------------------------------------------------------
// Specs

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Laplace: return "laplace";
    case ModelKind::Dirac: return "dirac";
    case ModelKind::PointCloud: return "pointcloud";
    case ModelKind::Mlp: return "mlp";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "laplace") return ModelKind::Laplace;
  if (s == "dirac") return ModelKind::Dirac;
  if (s == "pointcloud") return ModelKind::PointCloud;
  if (s == "mlp") return ModelKind::Mlp;
  throw ConfigError("unknown model kind '" + s + "' (laplace, dirac, pointcloud, mlp)");
}

std::string to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::Laplace: return "laplace";
    case BlockKind::Dirac: return "dirac";
    case BlockKind::AvgPool: return "avgpool";
    case BlockKind::Mlp: return "mlp";
  }
  return "?";
}

std::vector<BlockKind> NetworkSpec::block_kinds() const {
  std::vector<BlockKind> kinds;
  for (std::size_t k = 0; k < blocks; ++k) {
    const bool pool = avgpool_period > 0 && (k + 1) % avgpool_period == 0;
    switch (model) {
      case ModelKind::Laplace: kinds.push_back(pool ? BlockKind::AvgPool : BlockKind::Laplace); break;
      case ModelKind::Dirac: kinds.push_back(pool ? BlockKind::AvgPool : BlockKind::Dirac); break;
      case ModelKind::PointCloud: kinds.push_back(k % 2 == 1 ? BlockKind::AvgPool : BlockKind::Mlp); break;
      case ModelKind::Mlp: kinds.push_back(BlockKind::Mlp); break;
    }
  }
  return kinds;
}

void NetworkSpec::validate() const {
  if (in_channels == 0 || width == 0 || out_channels == 0) throw ConfigError("network channel counts must be positive");
  if (model == ModelKind::Dirac && width % 4 != 0) {
    throw NonQuadChannels("Dirac network width " + std::to_string(width) + " is not a multiple of 4");
  }
  if (!(head_init_scale >= 0.0) || !std::isfinite(head_init_scale)) throw ConfigError("head_init_scale must be >= 0");
}

std::size_t NetworkSpec::receptive_field() const {
  std::size_t hops = 0;
  for (BlockKind k : block_kinds()) {
    if (k == BlockKind::Laplace || k == BlockKind::Dirac) hops += 2;
  }
  return hops;
}

nlohmann::json NetworkSpec::to_json() const {
  return {{"model", to_string(model)},         {"in_channels", in_channels},
          {"width", width},                     {"out_channels", out_channels},
          {"blocks", blocks},                   {"avgpool_period", avgpool_period},
          {"head_init_scale", head_init_scale}};
}

NetworkSpec NetworkSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("network spec must be a JSON object");
  NetworkSpec s;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "model") s.model = model_kind_from_string(value.get<std::string>());
      else if (key == "in_channels") s.in_channels = value.get<std::size_t>();
      else if (key == "width") s.width = value.get<std::size_t>();
      else if (key == "out_channels") s.out_channels = value.get<std::size_t>();
      else if (key == "blocks") s.blocks = value.get<std::size_t>();
      else if (key == "avgpool_period") s.avgpool_period = value.get<std::size_t>();
      else if (key == "head_init_scale") s.head_init_scale = value.get<double>();
      else throw ConfigError("unknown network key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("network key '" + key + "': " + e.what());
    }
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Network

namespace {

std::string block_name(std::size_t k) {
  std::string s = std::to_string(k);
  return "b" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
}

}  // namespace

Network::Network(NetworkSpec spec, ParamStore& store, std::string prefix, std::uint64_t seed)
    : spec_(spec), store_(&store), prefix_(std::move(prefix)) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t w = spec_.width;
  add_weight("stem.W", w, spec_.in_channels, 1.0, rng);
  store_->add(prefix_ + "stem.b", DenseMatrix(1, w));
  const auto kinds = spec_.block_kinds();
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const std::string b = block_name(k) + ".";
    switch (kinds[k]) {
      case BlockKind::Laplace:
      case BlockKind::AvgPool:
      case BlockKind::Mlp:
        for (int s = 0; s < 2; ++s) {
          const std::string sl = b + "s" + std::to_string(s) + ".";
          add_bn(sl + "bn", w);
          if (kinds[k] != BlockKind::Mlp) add_weight(sl + "A", w, w, 0.5, rng);
          add_weight(sl + "B", w, w, kinds[k] == BlockKind::Mlp ? 1.0 : 0.5, rng);
        }
        break;
      case BlockKind::Dirac: {
        const std::size_t q = w / 4;
        add_bn(b + "bnx", w);
        add_bn(b + "bny", w);
        add_bn(b + "bnh", w);
        add_weight(b + "C", q, q, 0.5, rng);
        add_weight(b + "E", q, q, 0.5, rng);
        add_weight(b + "A", q, q, 0.5, rng);
        add_weight(b + "B", q, q, 0.5, rng);
        break;
      }
    }
  }
  add_bn("head.bn", w);
  add_weight("head.W", spec_.out_channels, w, spec_.head_init_scale, rng);
  store_->add(prefix_ + "head.b", DenseMatrix(1, spec_.out_channels));
}

Param& Network::p(const std::string& name) const { return store_->at(prefix_ + name); }

ad::BatchNormState Network::bn(const std::string& name) const {
  return {&p(name + ".gamma"), &p(name + ".beta"), &p(name + ".running_mean"), &p(name + ".running_var")};
}

void Network::add_bn(const std::string& name, std::size_t channels) {
  store_->add(prefix_ + name + ".gamma", DenseMatrix(1, channels, 1.0));
  store_->add(prefix_ + name + ".beta", DenseMatrix(1, channels, 0.0));
  store_->add(prefix_ + name + ".running_mean", DenseMatrix(1, channels, 0.0), false);
  store_->add(prefix_ + name + ".running_var", DenseMatrix(1, channels, 1.0), false);
}

void Network::add_weight(const std::string& name, std::size_t out, std::size_t in, double scale,
                         std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, scale / std::sqrt(static_cast<double>(in)));
  DenseMatrix m(out, in);
  for (double& v : m.storage()) v = g(rng);
  store_->add(prefix_ + name, std::move(m));
}

void Network::zero_parameters() {
  for (auto& [name, param] : store_->items()) {
    if (name.rfind(prefix_, 0) != 0) continue;
    const bool is_var = name.ends_with(".running_var");
    param.value.fill(is_var ? 1.0 : 0.0);
  }
}

Var Network::block(Tape& tape, std::size_t k, const OperatorBatch& ops, Var x, Var& y, bool training) const {
  const BlockKind kind = spec_.block_kinds().at(k);
  const std::string b = block_name(k) + ".";
  auto W = [&](const std::string& name) { return tape.parameter(p(b + name)); };
  auto pre = [&](Var v, const std::string& bn_name) { return ad::elu(ad::batch_norm(tape, v, bn(b + bn_name), training)); };

  if (kind == BlockKind::Dirac) {
    const Var hx = pre(x, "bnx");
    const Var hy = pre(y, "bny");
    const Var y1 = dirac_down_layer(hx, hy, ops, W("C"), W("E"), Activation::Identity);
    const Var h1 = pre(y1, "bnh");
    const Var x1 = dirac_up_layer(h1, hx, ops, W("A"), W("B"), Activation::Identity);
    y = ad::add(y, y1);
    return ad::add(x, x1);
  }
  Var h = x;
  for (int s = 0; s < 2; ++s) {
    const std::string sl = "s" + std::to_string(s) + ".";
    h = pre(h, sl + "bn");
    switch (kind) {
      case BlockKind::Laplace: h = laplace_layer(h, ops, W(sl + "A"), W(sl + "B"), Activation::Identity); break;
      case BlockKind::AvgPool: h = avgpool_layer(h, ops, W(sl + "A"), W(sl + "B"), Activation::Identity); break;
      default: h = mlp_layer(h, W(sl + "B"), Activation::Identity); break;
    }
  }
  return ad::add(x, h);
}

Var Network::forward(Tape& tape, const OperatorBatch& ops, Var x, bool training,
                     std::vector<DenseMatrix>* trace) const {
  if (x.cols() != spec_.in_channels) {
    throw DimensionMismatch("network expects " + std::to_string(spec_.in_channels) + " input channels, got " +
                            std::to_string(x.cols()));
  }
  if (x.rows() != ops.num_vertices()) throw DimensionMismatch("network input rows do not match the batch");
  Var h = ad::linear(x, tape.parameter(p("stem.W")), tape.parameter(p("stem.b")));
  if (trace) trace->push_back(h.value());
  Var y{};
  if (spec_.model == ModelKind::Dirac) y = tape.constant(DenseMatrix(ops.num_faces(), spec_.width));
  const auto kinds = spec_.block_kinds();
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    h = block(tape, k, ops, h, y, training);
    if (trace) trace->push_back(h.value());
  }
  h = ad::elu(ad::batch_norm(tape, h, bn("head.bn"), training));
  return ad::linear(h, tape.parameter(p("head.W")), tape.parameter(p("head.b")));
}

DenseMatrix Network::predict(const OperatorBatch& ops, const DenseMatrix& x, std::vector<DenseMatrix>* trace) const {
  Tape tape;
  return forward(tape, ops, tape.constant(x), false, trace).value();
}

// ---------------------------------------------------------------------------
// Norms and the Lipschitz bound

double spectral_norm(const DenseMatrix& m) {
  if (m.empty()) return 0.0;
  const DenseMatrix gram = m.cols() <= m.rows() ? matmul_tn(m, m) : matmul_nt(m, m);
  const EigenDecomposition e = sym_eigen_dense(gram);
  return std::sqrt(std::max(0.0, e.eigenvalues.back()));
}

double spectral_norm(const SparseOperator& op) {
  const std::size_t bs = static_cast<std::size_t>(op.block_size());
  if (std::min(op.rows(), op.cols()) * bs <= kExactNormLimit) return spectral_norm(op.to_dense());
  return power_iteration_norm(op, 5000);
}

namespace {

double bn_gain(const Network& net, const std::string& name) {
  const ParamStore& s = net.store();
  const DenseMatrix& gamma = s.at(net.prefix() + name + ".gamma").value;
  const DenseMatrix& rv = s.at(net.prefix() + name + ".running_var").value;
  double g = 0.0;
  for (std::size_t k = 0; k < gamma.cols(); ++k) {
    g = std::max(g, std::abs(gamma(0, k)) / std::sqrt(rv(0, k) + ad::kBatchNormEps));
  }
  return g;
}

double weight_norm(const Network& net, const std::string& name) {
  return spectral_norm(net.store().at(net.prefix() + name).value);
}

}  // namespace

LipschitzBound lipschitz_bound(const Network& net, const OperatorBatch& ops) {
  LipschitzBound r;
  const NetworkSpec& spec = net.spec();
  if (spec.needs_laplace() && ops.has_laplace) r.laplace_norm = spectral_norm(ops.laplace);
  if (spec.needs_dirac() && ops.has_dirac) {
    r.dirac_norm = spectral_norm(ops.dirac);
    r.dirac_adj_norm = spectral_norm(ops.dirac_adj);
  }
  r.bound = weight_norm(net, "stem.W");
  const auto kinds = spec.block_kinds();
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const std::string b = block_name(k) + ".";
    double factor = 1.0;
    if (kinds[k] == BlockKind::Dirac) {
      // Joint bound on the (vertex, face) pair: |dy1| <= P r, |dx1| <= Q r.
      const double gx = bn_gain(net, b + "bnx"), gy = bn_gain(net, b + "bny"), gh = bn_gain(net, b + "bnh");
      const double pp = r.dirac_norm * weight_norm(net, b + "C") * gx + weight_norm(net, b + "E") * gy;
      const double qq = r.dirac_adj_norm * weight_norm(net, b + "A") * gh * pp + weight_norm(net, b + "B") * gx;
      factor = 1.0 + std::hypot(pp, qq);
    } else {
      double inner_factor = 1.0;
      for (int s = 0; s < 2; ++s) {
        const std::string sl = b + "s" + std::to_string(s) + ".";
        const double g = bn_gain(net, sl + "bn");
        const double nb = weight_norm(net, sl + "B");
        double sub = nb;
        if (kinds[k] == BlockKind::Laplace) sub = r.laplace_norm * weight_norm(net, sl + "A") + nb;
        if (kinds[k] == BlockKind::AvgPool) sub = weight_norm(net, sl + "A") + nb;  // mean projection has norm 1
        inner_factor *= g * sub;
      }
      factor = 1.0 + inner_factor;
    }
    r.block_factors.push_back(factor);
    r.bound *= factor;
  }
  r.bound *= bn_gain(net, "head.bn") * weight_norm(net, "head.W");
  return r;
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(ParamStore& params) {
  ++t_;
  const AdamConfig& c = config_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t_));
  for (auto& [name, param] : params.items()) {
    if (!param.trainable) continue;
    if (param.grad.rows() != param.value.rows() || param.grad.cols() != param.value.cols()) {
      throw ShapeMismatch("adam: gradient of '" + name + "' has the wrong shape");
    }
    auto it = moments_.find(name);
    if (it == moments_.end()) {
      it = moments_.emplace(name, Moments{DenseMatrix(param.value.rows(), param.value.cols()),
                                         DenseMatrix(param.value.rows(), param.value.cols())})
               .first;
    }
    Moments& mo = it->second;
    if (mo.m.rows() != param.value.rows() || mo.m.cols() != param.value.cols()) {
      throw ShapeMismatch("adam: moment of '" + name + "' has the wrong shape");
    }
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double g = param.grad.data()[i];
      double& m = mo.m.data()[i];
      double& v = mo.v.data()[i];
      m = c.beta1 * m + (1.0 - c.beta1) * g;
      v = c.beta2 * v + (1.0 - c.beta2) * g * g;
      double& w = param.value.data()[i];
      w -= c.lr * c.weight_decay * w;
      w -= c.lr * (m / bc1) / (std::sqrt(v / bc2) + c.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::filesystem::path tensor_path(const std::filesystem::path& dir, const std::string& name) {
  if (name.empty() || name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
    throw IoError("parameter name '" + name + "' is not a valid file name");
  }
  return dir / (name + ".tnsr");
}

DenseMatrix read_shaped(const std::filesystem::path& path, const DenseMatrix& like, const std::string& name) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint is missing " + path.string());
  DenseMatrix m = read_matrix(path);
  if (m.rows() != like.rows() || m.cols() != like.cols()) {
    throw ShapeMismatch("checkpoint tensor '" + name + "' has shape " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", model expects " + std::to_string(like.rows()) + "x" +
                        std::to_string(like.cols()));
  }
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ParamStore& params, const Adam* adam,
                     const nlohmann::json& manifest) {
  std::filesystem::create_directories(dir / "params");
  nlohmann::json m = manifest.is_null() ? nlohmann::json::object() : manifest;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& [name, param] : params.items()) {
    write_tensor(tensor_path(dir / "params", name), param.value);
    names.push_back(name);
  }
  m["parameters"] = names;
  if (adam) {
    std::filesystem::create_directories(dir / "adam");
    for (const auto& [name, mo] : adam->moments()) {
      write_tensor(tensor_path(dir / "adam", name + ".m"), mo.m);
      write_tensor(tensor_path(dir / "adam", name + ".v"), mo.v);
    }
    m["optimizer"] = {{"steps", adam->steps()},
                      {"lr", adam->config().lr},
                      {"beta1", adam->config().beta1},
                      {"beta2", adam->config().beta2},
                      {"eps", adam->config().eps},
                      {"weight_decay", adam->config().weight_decay}};
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << m.dump(2) << '\n';
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot read " + (dir / "manifest.json").string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  }
}

nlohmann::json load_checkpoint(const std::filesystem::path& dir, ParamStore& params, Adam* adam) {
  nlohmann::json m = read_manifest(dir);
  for (auto& [name, param] : params.items()) {
    param.value = read_shaped(tensor_path(dir / "params", name), param.value, name);
  }
  if (adam) {
    adam->moments().clear();
    if (m.contains("optimizer")) {
      const auto& o = m["optimizer"];
      adam->set_steps(o.at("steps").get<std::uint64_t>());
      for (auto& [name, param] : params.items()) {
        if (!param.trainable) continue;
        const auto mp = tensor_path(dir / "adam", name + ".m");
        if (!std::filesystem::exists(mp)) continue;
        Adam::Moments mo{read_shaped(mp, param.value, name), read_shaped(tensor_path(dir / "adam", name + ".v"), param.value, name)};
        adam->moments().emplace(name, std::move(mo));
      }
    } else {
      adam->set_steps(0);
    }
  }
  return m;
}

}  // namespace surfnet
