#include "surfnet/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <queue>

#include "surfnet/error.hpp"
#include "surfnet/ops.hpp"

namespace surfnet {

namespace {

DenseMatrix vstack(std::span<const DenseMatrix* const> parts) {
  std::size_t rows = 0;
  const std::size_t cols = parts.empty() ? 0 : parts[0]->cols();
  for (const DenseMatrix* p : parts) rows += p->rows();
  DenseMatrix out(rows, cols);
  std::size_t at = 0;
  for (const DenseMatrix* p : parts) {
    std::copy(p->data(), p->data() + p->size(), out.data() + at * cols);
    at += p->rows();
  }
  return out;
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end())
      throw ConfigError(std::string(what) + ": unknown key '" + k + "'");
  }
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

double TrainOptions::learning_rate(std::size_t step) const {
  if (decay_every == 0 || step < decay_start) return adam.lr;
  return adam.lr * std::pow(0.5, static_cast<double>((step - decay_start) / decay_every + 1));
}

nlohmann::json TrainOptions::to_json() const {
  return {{"steps", steps},
          {"batch", batch},
          {"lr", adam.lr},
          {"weight_decay", adam.weight_decay},
          {"seed", seed},
          {"decay_start", decay_start},
          {"decay_every", decay_every},
          {"bn_refresh", bn_refresh}};
}

TrainOptions TrainOptions::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"steps", "batch", "lr", "weight_decay", "seed", "decay_start", "decay_every", "bn_refresh"}, "optimizer");
  TrainOptions o;
  read_opt(j, "steps", o.steps);
  read_opt(j, "batch", o.batch);
  read_opt(j, "lr", o.adam.lr);
  read_opt(j, "weight_decay", o.adam.weight_decay);
  read_opt(j, "seed", o.seed);
  read_opt(j, "decay_start", o.decay_start);
  read_opt(j, "decay_every", o.decay_every);
  read_opt(j, "bn_refresh", o.bn_refresh);
  if (o.batch == 0) throw ConfigError("batch must be >= 1");
  if (!(o.adam.lr > 0.0)) throw ConfigError("lr must be > 0");
  return o;
}

void LossLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "step,loss\n";
  for (std::size_t i = 0; i < step.size(); ++i) out << step[i] << "," << loss[i] << "\n";
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < std::min(batch, n_); ++k) {
    if (pos_ == perm_.size()) {
      perm_.resize(n_);
      std::iota(perm_.begin(), perm_.end(), 0);
      std::shuffle(perm_.begin(), perm_.end(), rng_);
      pos_ = 0;
    }
    out.push_back(perm_[pos_++]);
  }
  return out;
}

void reset_running_stats(ParamStore& store) {
  for (auto& [name, p] : store.items()) {
    if (name.ends_with(".running_mean") || name.ends_with(".running_var"))
      p.value.fill(std::numeric_limits<double>::quiet_NaN());
  }
}

void check_finite_loss(double loss, std::size_t step) {
  if (!std::isfinite(loss)) throw NumericalError("non-finite loss at step " + std::to_string(step));
}

// ---------------------------------------------------------------------------
// VAE

void VaeConfig::validate() const {
  if (latent_dim == 0 || width == 0 || blocks == 0) throw ConfigError("vae: sizes must be >= 1");
  if (model == ModelKind::Dirac && width % 4 != 0) throw NonQuadChannels("vae: Dirac width must be divisible by 4");
  if (!(extent > 0.0)) throw ConfigError("vae: extent must be > 0");
}

nlohmann::json VaeConfig::to_json() const {
  return {{"model", to_string(model)}, {"latent_dim", latent_dim}, {"width", width}, {"blocks", blocks}, {"extent", extent}};
}

VaeConfig VaeConfig::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"model", "latent_dim", "width", "blocks", "extent"}, "vae");
  VaeConfig c;
  if (j.contains("model")) c.model = model_kind_from_string(j.at("model").get<std::string>());
  read_opt(j, "latent_dim", c.latent_dim);
  read_opt(j, "width", c.width);
  read_opt(j, "blocks", c.blocks);
  read_opt(j, "extent", c.extent);
  c.validate();
  return c;
}

namespace {

NetworkSpec vae_spec(const VaeConfig& c, std::size_t in, std::size_t out) {
  NetworkSpec s;
  s.model = c.model;
  s.in_channels = in;
  s.width = c.width;
  s.out_channels = out;
  s.blocks = c.blocks;
  s.validate();
  return s;
}

}  // namespace

VaeModel::VaeModel(VaeConfig config, ParamStore& store, std::uint64_t seed)
    : config_((config.validate(), config)),
      store_(&store),
      encoder_(vae_spec(config_, 3, 2 * config_.latent_dim), store, "enc.", seed),
      decoder_(vae_spec(config_, 2 + config_.latent_dim, 1), store, "dec.", seed + 1) {
  store.add("dec.log_var", DenseMatrix(1, 1, 0.0));
}

DenseMatrix VaeModel::planar_coords(const Mesh& mesh) const {
  DenseMatrix x(mesh.num_vertices(), 2);
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    x(i, 0) = mesh.vertex(i).x / config_.extent - 0.5;
    x(i, 1) = mesh.vertex(i).y / config_.extent - 0.5;
  }
  return x;
}

VaeModel::Prepared VaeModel::prepare(const HeightFieldMesh& mesh) const {
  Prepared p;
  p.enc_ops = operators_for(encoder_.spec(), mesh.lifted);
  p.dec_ops = operators_for(decoder_.spec(), mesh.base);
  p.planar = planar_coords(mesh.base);
  p.enc_in = DenseMatrix(mesh.depth.size(), 3);
  p.target = DenseMatrix(mesh.depth.size(), 1);
  for (std::size_t i = 0; i < mesh.depth.size(); ++i) {
    p.enc_in(i, 0) = p.planar(i, 0);
    p.enc_in(i, 1) = p.planar(i, 1);
    p.enc_in(i, 2) = mesh.depth[i];
    p.target(i, 0) = mesh.depth[i];
  }
  return p;
}

VaeModel::Terms VaeModel::loss(Tape& tape, std::span<const Prepared* const> batch, const DenseMatrix& eps,
                               bool training) const {
  const std::size_t b = batch.size(), l = config_.latent_dim;
  if (b == 0) throw ValidationError("vae: empty batch");
  if (eps.rows() != b || eps.cols() != l) throw DimensionMismatch("vae: eps must be batch x latent_dim");
  std::vector<const OperatorBatch*> enc_ops, dec_ops;
  std::vector<const DenseMatrix*> enc_in, planar, target;
  for (const Prepared* p : batch) {
    enc_ops.push_back(&p->enc_ops);
    dec_ops.push_back(&p->dec_ops);
    enc_in.push_back(&p->enc_in);
    planar.push_back(&p->planar);
    target.push_back(&p->target);
  }
  Terms t;
  auto eops = std::make_shared<const OperatorBatch>(OperatorBatch::concat(enc_ops));
  auto dops = std::make_shared<const OperatorBatch>(OperatorBatch::concat(dec_ops));
  t.enc_ops = eops;
  t.dec_ops = dops;
  const Var enc = encoder_.forward(tape, *eops, tape.constant(vstack(enc_in)), training);
  const Var pooled = ad::segment_mean(enc, eops->vertex_offsets);
  const Var mu = ad::slice_cols(pooled, 0, l);
  const Var lv = ad::slice_cols(pooled, l, 2 * l);
  const Var h = ad::reparameterize(mu, lv, eps);
  const Var dec_in = ad::concat_cols(tape.constant(vstack(planar)), ad::broadcast_segments(h, dops->vertex_offsets));
  t.mu_z = decoder_.forward(tape, *dops, dec_in, training);
  t.nll = ad::gaussian_nll(t.mu_z, tape.parameter(store_->at("dec.log_var")), vstack(target));
  t.kl = ad::kl_standard_normal(mu, lv);
  t.loss = ad::scale(ad::add(t.nll, t.kl), 1.0 / static_cast<double>(b));
  return t;
}

std::pair<DenseMatrix, DenseMatrix> VaeModel::encode(const HeightFieldMesh& mesh) const {
  const Prepared p = prepare(mesh);
  Tape tape;
  const Var enc = encoder_.forward(tape, p.enc_ops, tape.constant(p.enc_in), false);
  const Var pooled = ad::segment_mean(enc, p.enc_ops.vertex_offsets);
  return {ad::slice_cols(pooled, 0, config_.latent_dim).value(),
          ad::slice_cols(pooled, config_.latent_dim, 2 * config_.latent_dim).value()};
}

std::vector<double> VaeModel::decode(const Mesh& base, const DenseMatrix& latent) const {
  if (latent.rows() != 1 || latent.cols() != config_.latent_dim) throw DimensionMismatch("vae: latent must be 1 x L");
  const OperatorBatch ops = operators_for(decoder_.spec(), base);
  const DenseMatrix planar = planar_coords(base);
  DenseMatrix in(base.num_vertices(), 2 + config_.latent_dim);
  for (std::size_t i = 0; i < base.num_vertices(); ++i) {
    in(i, 0) = planar(i, 0);
    in(i, 1) = planar(i, 1);
    for (std::size_t k = 0; k < config_.latent_dim; ++k) in(i, 2 + k) = latent(0, k);
  }
  const DenseMatrix z = decoder_.predict(ops, in);
  return {z.data(), z.data() + z.size()};
}

double VaeModel::log_var() const { return store_->at("dec.log_var").value(0, 0); }

double VaeModel::reconstruction_mse(const HeightFieldMesh& mesh) const {
  const std::vector<double> z = decode(mesh.base, encode(mesh).first);
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) acc += (z[i] - mesh.depth[i]) * (z[i] - mesh.depth[i]);
  return acc / static_cast<double>(z.size());
}

HeightFieldMesh VaeModel::sample(const Mesh& base, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  DenseMatrix h(1, config_.latent_dim);
  for (double& v : h.storage()) v = g(rng);
  std::vector<Vec3> flat;
  for (const Vec3& v : base.vertices()) flat.push_back({v.x, v.y, 0.0});
  return make_heightfield(base.with_positions(std::move(flat)), decode(base, h));
}

LossLog vae_train(VaeModel& model, Adam& adam, std::span<const HeightFieldMesh> data, const TrainOptions& options,
                  std::size_t log_every) {
  if (data.empty()) throw ValidationError("vae_train: empty dataset");
  std::vector<VaeModel::Prepared> prepared;
  for (const HeightFieldMesh& m : data) prepared.push_back(model.prepare(m));
  ParamStore& store = model.encoder().store();
  BatchSampler sampler(data.size(), options.seed);
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> g;
  LossLog log;
  for (std::size_t step = 0; step < options.start_step; ++step) {
    const std::size_t b = sampler.next(options.batch).size();
    for (std::size_t k = 0; k < b * model.config().latent_dim; ++k) g(rng);
  }
  for (std::size_t step = options.start_step; step < options.steps; ++step) {
    const std::vector<std::size_t> idx = sampler.next(options.batch);
    std::vector<const VaeModel::Prepared*> batch;
    for (std::size_t i : idx) batch.push_back(&prepared[i]);
    DenseMatrix eps(batch.size(), model.config().latent_dim);
    for (double& v : eps.storage()) v = g(rng);
    store.zero_grad();
    Tape tape;
    const VaeModel::Terms t = model.loss(tape, batch, eps, true);
    const double l = t.loss.value()(0, 0);
    check_finite_loss(l, step);
    tape.backward(t.loss);
    adam.config().lr = options.learning_rate(step);
    adam.step(store);
    if (step % log_every == 0 || step + 1 == options.steps) log.add(step, l);
  }
  // Refresh with the posterior mean, which is what evaluation decodes.
  const std::size_t refresh = options.steps > options.start_step ? options.bn_refresh : 0;
  if (refresh) reset_running_stats(store);
  for (std::size_t k = 0; k < refresh; ++k) {
    const std::vector<std::size_t> idx = sampler.next(options.batch);
    std::vector<const VaeModel::Prepared*> batch;
    for (std::size_t i : idx) batch.push_back(&prepared[i]);
    Tape tape;
    model.loss(tape, batch, DenseMatrix(batch.size(), model.config().latent_dim), true);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Correspondence

std::size_t CorrespondencePair::labeled() const {
  return static_cast<std::size_t>(std::count_if(gt.begin(), gt.end(), [](std::int64_t j) { return j >= 0; }));
}

CorrespondencePair CorrespondencePair::swapped() const {
  CorrespondencePair s{b, a, std::vector<std::int64_t>(b.num_vertices(), kNoMatch)};
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] >= 0) s.gt[static_cast<std::size_t>(gt[i])] = static_cast<std::int64_t>(i);
  }
  return s;
}

DenseMatrix softmax_similarity(const DenseMatrix& e1, const DenseMatrix& e2) {
  if (e1.cols() != e2.cols()) throw DimensionMismatch("softmax_similarity: embedding widths differ");
  DenseMatrix s = matmul_nt(e1, e2);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    auto row = s.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) z += (v = std::exp(v - m));
    for (double& v : row) v /= z;
  }
  return s;
}

std::vector<std::size_t> argmax_rows(const DenseMatrix& s) {
  std::vector<std::size_t> out(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const auto row = s.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());  // first max
  }
  return out;
}

std::vector<std::size_t> predict_matches(const DenseMatrix& e1, const DenseMatrix& e2) {
  return argmax_rows(matmul_nt(e1, e2));
}

std::vector<double> dijkstra(const Mesh& mesh, std::size_t source) {
  const auto nbrs = vertex_neighbors(mesh);
  std::vector<double> d(mesh.num_vertices(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> q;
  d[source] = 0.0;
  q.push({0.0, source});
  while (!q.empty()) {
    const auto [dist, u] = q.top();
    q.pop();
    if (dist > d[u]) continue;
    for (Index v : nbrs[u]) {
      const double nd = dist + norm(mesh.vertex(u) - mesh.vertex(v));
      if (nd < d[v]) {
        d[v] = nd;
        q.push({nd, v});
      }
    }
  }
  for (std::size_t v = 0; v < d.size(); ++v) {
    if (!std::isfinite(d[v]))
      throw DisconnectedMesh("vertex " + std::to_string(v) + " is unreachable from vertex " + std::to_string(source));
  }
  return d;
}

double geodesic_diameter(const Mesh& mesh, std::size_t landmarks) {
  std::vector<double> nearest(mesh.num_vertices(), std::numeric_limits<double>::infinity());
  std::size_t src = 0;
  double diam = 0.0;
  for (std::size_t k = 0; k < std::min(landmarks, mesh.num_vertices()); ++k) {
    const std::vector<double> d = dijkstra(mesh, src);
    diam = std::max(diam, *std::max_element(d.begin(), d.end()));
    for (std::size_t v = 0; v < d.size(); ++v) nearest[v] = std::min(nearest[v], d[v]);
    src = static_cast<std::size_t>(std::max_element(nearest.begin(), nearest.end()) - nearest.begin());
  }
  return diam;
}

GeodesicCurve geodesic_error_curve(const CorrespondencePair& pair, std::span<const std::size_t> predicted,
                                   std::size_t bins, double max_error) {
  if (predicted.size() != pair.a.num_vertices()) throw DimensionMismatch("geodesic_error_curve: one prediction per vertex");
  if (bins < 2) throw ValidationError("geodesic_error_curve: need at least 2 bins");
  GeodesicCurve c;
  c.diameter = geodesic_diameter(pair.b);
  std::map<std::size_t, std::vector<double>> from;  // dijkstra per ground-truth vertex
  for (std::size_t i = 0; i < pair.gt.size(); ++i) {
    if (pair.gt[i] < 0) continue;
    const std::size_t g = static_cast<std::size_t>(pair.gt[i]);
    if (predicted[i] == g) {
      c.errors.push_back(0.0);
      continue;
    }
    auto it = from.find(g);
    if (it == from.end()) it = from.emplace(g, dijkstra(pair.b, g)).first;
    c.errors.push_back(it->second.at(predicted[i]) / c.diameter);
  }
  for (std::size_t k = 0; k < bins; ++k) {
    const double t = max_error * static_cast<double>(k) / static_cast<double>(bins - 1);
    const auto hit = std::count_if(c.errors.begin(), c.errors.end(), [&](double e) { return e <= t; });
    c.thresholds.push_back(t);
    c.fraction.push_back(c.errors.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(c.errors.size()));
  }
  return c;
}

nlohmann::json GeodesicCurve::to_json() const {
  return {{"diameter", diameter}, {"thresholds", thresholds}, {"fraction", fraction}, {"labeled", errors.size()}};
}

void GeodesicCurve::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "geodesic_error,fraction_correct\n";
  for (std::size_t k = 0; k < thresholds.size(); ++k) out << thresholds[k] << "," << fraction[k] << "\n";
}

double match_accuracy(const CorrespondencePair& pair, std::span<const std::size_t> predicted) {
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < pair.gt.size(); ++i) {
    if (pair.gt[i] < 0) continue;
    ++total;
    if (static_cast<std::int64_t>(predicted[i]) == pair.gt[i]) ++hit;
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

namespace {

Mesh reindex(const Mesh& m, const std::vector<std::size_t>& perm) {
  std::vector<Vec3> v(m.num_vertices());
  for (std::size_t i = 0; i < perm.size(); ++i) v[perm[i]] = m.vertex(i);
  std::vector<Face> f = m.faces();
  for (Face& t : f) {
    for (Index& k : t) k = static_cast<Index>(perm[k]);
  }
  return Mesh(std::move(v), std::move(f));
}

}  // namespace

std::vector<CorrespondencePair> make_correspondence_dataset(std::size_t pairs, std::uint64_t seed,
                                                            const CorrespondenceDatasetOptions& options) {
  std::vector<CorrespondencePair> out;
  std::mt19937_64 rng(seed);
  MeshMnistOptions mo;
  mo.radius = options.radius;
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::uint64_t sample_seed = rng(), bend_seed = rng(), perm_seed = rng();
    const Mesh tmpl = make_meshmnist_sample(sample_seed, mo).mesh.lifted;
    const InputFrame frame = InputFrame::of(tmpl);
    const Mesh bent =
        make_deformation(DeformationKind::SmoothBend, bend_seed, options.amplitude, frame.radius, frame.center).apply(tmpl);
    std::vector<std::size_t> perm(tmpl.num_vertices());
    std::iota(perm.begin(), perm.end(), 0);
    if (options.permute) {
      std::mt19937_64 prng(perm_seed);
      std::shuffle(perm.begin(), perm.end(), prng);
    }
    CorrespondencePair p{tmpl, reindex(bent, perm), {}};
    for (std::size_t i = 0; i < perm.size(); ++i) p.gt.push_back(static_cast<std::int64_t>(perm[i]));
    out.push_back(std::move(p));
  }
  return out;
}

CorrespondencePair self_pair(const Mesh& mesh) {
  CorrespondencePair p{mesh, mesh, {}};
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) p.gt.push_back(static_cast<std::int64_t>(i));
  return p;
}

NetworkSpec CorrespondenceModel::default_spec(ModelKind model, std::size_t width, std::size_t blocks) {
  NetworkSpec s;
  s.model = model;
  s.in_channels = 3;
  s.width = width;
  s.out_channels = kDefaultEmbeddingDim;
  s.blocks = blocks;
  // Inner products of d-dimensional embeddings scale with d * init^2; keep
  // them near zero so the first softmax is close to uniform.
  s.head_init_scale = 0.05;
  return s;
}

CorrespondenceModel::CorrespondenceModel(NetworkSpec spec, ParamStore& store, std::uint64_t seed)
    : net_(spec, store, "siam.", seed) {}

CorrespondenceModel::Prepared CorrespondenceModel::prepare(const CorrespondencePair& pair) const {
  if (pair.gt.size() != pair.a.num_vertices()) throw DimensionMismatch("ground truth must cover every vertex of a");
  Prepared p;
  for (std::size_t i = 0; i < pair.gt.size(); ++i) {
    if (pair.gt[i] < 0) continue;
    if (static_cast<std::size_t>(pair.gt[i]) >= pair.b.num_vertices())
      throw ValidationError("ground truth index " + std::to_string(pair.gt[i]) + " out of range");
    p.rows.push_back(i);
    p.targets.push_back(static_cast<std::size_t>(pair.gt[i]));
  }
  if (p.rows.empty()) throw NoLabels("correspondence pair has no labeled vertex");
  p.ops_a = operators_for(net_.spec(), pair.a);
  p.ops_b = operators_for(net_.spec(), pair.b);
  p.xa = InputFrame::of(pair.a).coordinates(pair.a);
  p.xb = InputFrame::of(pair.b).coordinates(pair.b);
  return p;
}

Var CorrespondenceModel::loss(Tape& tape, const Prepared& p, bool training) const {
  const Var e1 = net_.forward(tape, p.ops_a, tape.constant(p.xa), training);
  const Var e2 = net_.forward(tape, p.ops_b, tape.constant(p.xb), training);
  return ad::softmax_cross_entropy(ad::matmul_nt(ad::gather_rows(e1, p.rows), e2), p.targets);
}

std::pair<DenseMatrix, DenseMatrix> CorrespondenceModel::embed(const Prepared& p) const {
  return {net_.predict(p.ops_a, p.xa), net_.predict(p.ops_b, p.xb)};
}

std::vector<std::size_t> CorrespondenceModel::predict(const Prepared& p) const {
  const auto [e1, e2] = embed(p);
  return predict_matches(e1, e2);
}

LossLog correspondence_train(CorrespondenceModel& model, Adam& adam, std::span<const CorrespondencePair> pairs,
                             const TrainOptions& options, std::size_t log_every) {
  if (pairs.empty()) throw ValidationError("correspondence_train: no pairs");
  std::vector<CorrespondenceModel::Prepared> prepared;
  for (const CorrespondencePair& p : pairs) prepared.push_back(model.prepare(p));
  ParamStore& store = model.net().store();
  BatchSampler sampler(pairs.size(), options.seed);
  LossLog log;
  for (std::size_t step = 0; step < options.start_step; ++step) sampler.next(options.batch);
  for (std::size_t step = options.start_step; step < options.steps; ++step) {
    const std::vector<std::size_t> idx = sampler.next(options.batch);
    store.zero_grad();
    Tape tape;
    Var total = model.loss(tape, prepared[idx[0]], true);
    for (std::size_t k = 1; k < idx.size(); ++k) total = ad::add(total, model.loss(tape, prepared[idx[k]], true));
    total = ad::scale(total, 1.0 / static_cast<double>(idx.size()));
    const double l = total.value()(0, 0);
    check_finite_loss(l, step);
    tape.backward(total);
    adam.config().lr = options.learning_rate(step);
    adam.step(store);
    if (step % log_every == 0 || step + 1 == options.steps) log.add(step, l);
  }
  const std::size_t refresh = options.steps > options.start_step ? options.bn_refresh : 0;
  if (refresh) reset_running_stats(store);
  for (std::size_t k = 0; k < refresh; ++k) {
    Tape tape;
    model.loss(tape, prepared[sampler.next(1)[0]], true);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Temporal

nlohmann::json TemporalOptions::to_json() const {
  return {{"frames_out", frames_out}, {"c2", c2}, {"radius", radius}, {"amplitude", amplitude}, {"blowup", blowup}};
}

TemporalOptions TemporalOptions::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"frames_out", "c2", "radius", "amplitude", "blowup"}, "temporal");
  TemporalOptions o;
  read_opt(j, "frames_out", o.frames_out);
  read_opt(j, "c2", o.c2);
  read_opt(j, "radius", o.radius);
  read_opt(j, "amplitude", o.amplitude);
  read_opt(j, "blowup", o.blowup);
  if (o.frames_out == 0) throw ConfigError("temporal: frames_out must be >= 1");
  if (!(o.radius > 0.0)) throw ConfigError("temporal: radius must be > 0");
  return o;
}

Mesh TemporalSample::frame_mesh(std::size_t t) const {
  std::vector<Vec3> p;
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) p.push_back({mesh.vertex(i).x, mesh.vertex(i).y, frames.at(t)[i]});
  return mesh.with_positions(std::move(p));
}

namespace {

// Stable when c2 times the spectral radius of Delta stays below 4; the
// operator norm bounds the radius, and 3.6 leaves a margin.
constexpr double kWaveStabilityLimit = 3.6;

std::vector<double> apply_delta(const SparseOperator& delta, const std::vector<double>& z) {
  const DenseMatrix r = spmv(delta, DenseMatrix::column(z));
  return {r.data(), r.data() + r.size()};
}

}  // namespace

std::vector<TemporalSample> make_temporal_dataset(std::size_t count, std::uint64_t seed, const TemporalOptions& options) {
  std::vector<TemporalSample> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  while (out.size() < count) {
    TemporalSample s;
    s.seed = rng();
    std::mt19937_64 local(s.seed);
    Mesh base = trim_boundary_slivers(delaunay_triangulate(poisson_disk_sample(options.radius, local())));
    double scale = 1.0;
    SparseOperator delta = assemble_laplacian(base).Delta;
    const double rho = options.c2 * power_iteration_norm(delta);
    if (rho > kWaveStabilityLimit) {
      scale = std::sqrt(rho / kWaveStabilityLimit) * 1.01;
      std::vector<Vec3> p;
      for (const Vec3& v : base.vertices()) p.push_back(v * scale);
      base = base.with_positions(std::move(p));
      delta = assemble_laplacian(base).Delta;
    }
    s.mesh = base;
    const double extent = kMnistExtent * scale;
    const int bumps = 1 + static_cast<int>(local() % 2);
    std::vector<double> z(base.num_vertices(), 0.0);
    for (int k = 0; k < bumps; ++k) {
      const Vec3 c{extent * (0.2 + 0.6 * u01(local)), extent * (0.2 + 0.6 * u01(local)), 0.0};
      const double sigma = extent * (0.08 + 0.08 * u01(local));
      const double amp = options.amplitude * (0.5 + u01(local)) * (local() % 2 ? 1.0 : -1.0);
      for (std::size_t i = 0; i < z.size(); ++i) {
        const Vec3 d = base.vertex(i) - c;
        z[i] += amp * std::exp(-dot(d, d) / (2 * sigma * sigma));
      }
    }
    std::vector<double> prev = z;  // zero initial velocity
    s.frames.push_back(z);
    bool blew_up = false;
    for (std::size_t t = 0; t < options.frames_out + 1 && !blew_up; ++t) {
      const std::vector<double> lz = apply_delta(delta, z);
      std::vector<double> next(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        next[i] = 2 * z[i] - prev[i] - options.c2 * lz[i];
        if (!(std::abs(next[i]) <= options.blowup)) blew_up = true;
      }
      prev = std::move(z);
      z = std::move(next);
      s.frames.push_back(z);
    }
    if (!blew_up) out.push_back(std::move(s));
  }
  return out;
}

DenseMatrix temporal_input(const TemporalSample& s) {
  const InputFrame f = InputFrame::of(s.mesh);
  DenseMatrix x(s.mesh.num_vertices(), 6);
  for (std::size_t i = 0; i < s.mesh.num_vertices(); ++i) {
    const Vec3 p = (s.mesh.vertex(i) - f.center) / f.radius;
    for (std::size_t t = 0; t < 2; ++t) {
      x(i, 3 * t) = p.x;
      x(i, 3 * t + 1) = p.y;
      x(i, 3 * t + 2) = s.frames[t][i];
    }
  }
  return x;
}

DenseMatrix temporal_target(const TemporalSample& s) {
  const std::size_t m = s.frames_out();
  DenseMatrix y(s.mesh.num_vertices(), 3 * m);
  for (std::size_t i = 0; i < s.mesh.num_vertices(); ++i) {
    for (std::size_t k = 0; k < m; ++k) y(i, 3 * k + 2) = s.frames[k + 2][i] - s.frames[1][i];
  }
  return y;
}

NetworkSpec temporal_spec(ModelKind model, std::size_t frames_out, std::size_t width, std::size_t blocks) {
  NetworkSpec s;
  s.model = model;
  s.in_channels = 6;
  s.width = width;
  s.out_channels = 3 * frames_out;
  s.blocks = blocks;
  s.validate();
  return s;
}

TemporalPrepared prepare_temporal(const Network& net, const TemporalSample& s) {
  if (net.spec().out_channels != 3 * s.frames_out())
    throw DimensionMismatch("temporal: network outputs " + std::to_string(net.spec().out_channels) + " channels, sample has " +
                            std::to_string(3 * s.frames_out()));
  return {operators_for(net.spec(), s.mesh), temporal_input(s), temporal_target(s)};
}

LossLog temporal_train(const Network& net, Adam& adam, std::span<const TemporalPrepared> data,
                       const TrainOptions& options, std::size_t log_every) {
  if (data.empty()) throw ValidationError("temporal_train: empty dataset");
  ParamStore& store = net.store();
  BatchSampler sampler(data.size(), options.seed);
  LossLog log;
  auto batch_loss = [&](Tape& tape) {
    const std::vector<std::size_t> idx = sampler.next(options.batch);
    std::vector<const OperatorBatch*> ops;
    std::vector<const DenseMatrix*> xs, ys;
    for (std::size_t i : idx) {
      ops.push_back(&data[i].ops);
      xs.push_back(&data[i].x);
      ys.push_back(&data[i].y);
    }
    const OperatorBatch batch = OperatorBatch::concat(ops);
    const Var pred = net.forward(tape, batch, tape.constant(vstack(xs)), true);
    Var loss = ad::smooth_l1(pred, vstack(ys), 1.0);
    tape.backward(loss);  // while the batch operators are alive
    return loss.value()(0, 0);
  };
  for (std::size_t step = 0; step < options.start_step; ++step) sampler.next(options.batch);
  for (std::size_t step = options.start_step; step < options.steps; ++step) {
    store.zero_grad();
    Tape tape;
    const double l = batch_loss(tape);
    check_finite_loss(l, step);
    adam.config().lr = options.learning_rate(step);
    adam.step(store);
    if (step % log_every == 0 || step + 1 == options.steps) log.add(step, l);
  }
  const std::size_t refresh = options.steps > options.start_step ? options.bn_refresh : 0;
  if (refresh) reset_running_stats(store);
  for (std::size_t k = 0; k < refresh; ++k) {
    Tape tape;
    batch_loss(tape);
  }
  store.zero_grad();
  return log;
}

double temporal_eval(const Network& net, std::span<const TemporalPrepared> data) {
  if (data.empty()) return 0.0;
  double acc = 0.0;
  for (const TemporalPrepared& d : data) {
    Tape tape;
    acc += ad::smooth_l1(tape.constant(net.predict(d.ops, d.x)), d.y, 1.0).value()(0, 0);
  }
  return acc / static_cast<double>(data.size());
}

}  // namespace surfnet
