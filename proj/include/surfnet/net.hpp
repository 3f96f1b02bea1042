#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "surfnet/autodiff.hpp"
#include "surfnet/la.hpp"
#include "surfnet/mesh.hpp"

namespace surfnet {

/// Operators of one or more meshes laid out block-diagonally, with row
/// offsets per mesh. Point-only batches (no operators) serve the MLP and
/// point-cloud models.
struct OperatorBatch {
  std::vector<std::size_t> vertex_offsets{0};
  std::vector<std::size_t> face_offsets{0};
  bool has_laplace = false;
  bool has_dirac = false;
  SparseOperator laplace, laplace_t;
  SparseOperator dirac, dirac_t;
  SparseOperator dirac_adj, dirac_adj_t;

  std::size_t num_meshes() const { return vertex_offsets.size() - 1; }
  std::size_t num_vertices() const { return vertex_offsets.back(); }
  std::size_t num_faces() const { return face_offsets.back(); }

  static OperatorBatch from_mesh(const Mesh& mesh, bool laplace = true, bool dirac = true);
  static OperatorBatch points(std::size_t count);
  static OperatorBatch concat(std::span<const OperatorBatch* const> parts);
};

enum class Activation { Identity, Elu };
Var activate(Var x, Activation rho);

// Single layers in the form x' = rho(operator term + skip term).

/// rho(Delta x A^T + x B^T).
Var laplace_layer(Var x, const OperatorBatch& ops, Var a, Var b, Activation rho = Activation::Elu);
/// rho(qmix(D x, C) + qmix(y, E)); face-valued.
Var dirac_down_layer(Var x, Var y, const OperatorBatch& ops, Var c, Var e, Activation rho = Activation::Elu);
/// rho(qmix(D* y, A) + qmix(x, B)); vertex-valued.
Var dirac_up_layer(Var y, Var x, const OperatorBatch& ops, Var a, Var b, Activation rho = Activation::Elu);
/// rho(x B^T + broadcast(mean_rows(x)) A^T), means taken per mesh.
Var avgpool_layer(Var x, const OperatorBatch& ops, Var a, Var b, Activation rho = Activation::Elu);
/// rho(x B^T).
Var mlp_layer(Var x, Var b, Activation rho = Activation::Elu);

enum class ModelKind { Laplace, Dirac, PointCloud, Mlp };
enum class BlockKind { Laplace, Dirac, AvgPool, Mlp };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);
std::string to_string(BlockKind kind);

struct NetworkSpec {
  ModelKind model = ModelKind::Laplace;
  std::size_t in_channels = 3;
  std::size_t width = 32;
  std::size_t out_channels = 3;
  std::size_t blocks = 4;
  /// Every avgpool_period-th block is an average-pooling block (0: none).
  /// Point-cloud models always alternate MLP and AvgPool blocks.
  std::size_t avgpool_period = 3;
  /// Scale of the output projection's initial weights.
  double head_init_scale = 1.0;

  std::vector<BlockKind> block_kinds() const;
  /// Throws ConfigError on zero sizes, NonQuadChannels on Dirac widths not
  /// divisible by 4.
  void validate() const;
  bool needs_laplace() const { return model == ModelKind::Laplace; }
  bool needs_dirac() const { return model == ModelKind::Dirac; }
  /// Operator applications between input and output (Laplace sublayers
  /// count one hop, Dirac blocks two).
  std::size_t receptive_field() const;

  nlohmann::json to_json() const;
  static NetworkSpec from_json(const nlohmann::json& j);
};

/// Operators a model of this spec consumes on one mesh (point batches for
/// the MLP and point-cloud models).
OperatorBatch operators_for(const NetworkSpec& spec, const Mesh& mesh);

/// Stem (1x1 with bias) -> residual blocks -> BN -> ELU -> 1x1 with bias.
/// Parameters live in an external store under a name prefix so several
/// networks can share one optimizer and checkpoint.
class Network {
 public:
  Network(NetworkSpec spec, ParamStore& store, std::string prefix, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  ParamStore& store() const { return *store_; }
  const std::string& prefix() const { return prefix_; }

  /// x: num_vertices x in_channels. Returns num_vertices x out_channels.
  /// When trace is given, the vertex features after the stem and after
  /// every block are appended to it.
  Var forward(Tape& tape, const OperatorBatch& ops, Var x, bool training,
              std::vector<DenseMatrix>* trace = nullptr) const;
  /// Evaluation-mode forward on a fresh tape.
  DenseMatrix predict(const OperatorBatch& ops, const DenseMatrix& x, std::vector<DenseMatrix>* trace = nullptr) const;

  /// Sets every parameter (trainable or not) of this network to zero,
  /// except running variances, which become one.
  void zero_parameters();

  /// Residual block k alone. y is the face stream (Dirac blocks read and
  /// update it; other kinds leave it alone).
  Var block(Tape& tape, std::size_t k, const OperatorBatch& ops, Var x, Var& y, bool training) const;

 private:
  Param& p(const std::string& name) const;
  ad::BatchNormState bn(const std::string& name) const;
  void add_bn(const std::string& name, std::size_t channels);
  void add_weight(const std::string& name, std::size_t out, std::size_t in, double scale, std::mt19937_64& rng);

  NetworkSpec spec_;
  ParamStore* store_;
  std::string prefix_;
};

/// Upper bound on the Lipschitz constant of the evaluation-mode network in
/// the Frobenius norm, from operator norms of every linear piece, per-channel
/// BN gains and the 1-Lipschitz ELU. Operator norms of the batch are
/// computed with spectral_norm.
struct LipschitzBound {
  double bound = 1.0;
  double laplace_norm = 0.0;
  double dirac_norm = 0.0;
  double dirac_adj_norm = 0.0;
  std::vector<double> block_factors;
};
LipschitzBound lipschitz_bound(const Network& net, const OperatorBatch& ops);

/// Largest singular value: dense eigensolver on A^T A for up to
/// kExactNormLimit scalar columns, power iteration beyond.
inline constexpr std::size_t kExactNormLimit = 1000;
double spectral_norm(const DenseMatrix& m);
double spectral_norm(const SparseOperator& op);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

/// Adam with decoupled weight decay. Updates trainable parameters of a
/// store in key order.
class Adam {
 public:
  struct Moments {
    DenseMatrix m;
    DenseMatrix v;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Throws ShapeMismatch if a gradient's shape differs from its value.
  void step(ParamStore& params);

  AdamConfig& config() { return config_; }
  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Writes params/<name>.tnsr for every parameter, Adam moments under
/// adam/ when given, and manifest.json (the caller's manifest plus the
/// parameter list and optimizer step).
void save_checkpoint(const std::filesystem::path& dir, const ParamStore& params, const Adam* adam,
                     const nlohmann::json& manifest);
/// Reads the manifest of a checkpoint directory.
nlohmann::json read_manifest(const std::filesystem::path& dir);
/// Loads values into an already constructed store (names and shapes must
/// match; ShapeMismatch / IoError otherwise) and, when given, the optimizer.
nlohmann::json load_checkpoint(const std::filesystem::path& dir, ParamStore& params, Adam* adam);

}  // namespace surfnet
