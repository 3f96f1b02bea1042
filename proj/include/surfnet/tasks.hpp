#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"

#include "surfnet/meshmnist.hpp"
#include "surfnet/net.hpp"
#include "surfnet/verify.hpp"

namespace surfnet {

// ---------------------------------------------------------------------------
// Shared training plumbing

struct TrainOptions {
  std::size_t steps = 2000;
  std::size_t batch = 8;
  AdamConfig adam;
  std::uint64_t seed = 0;
  /// Halve the learning rate every decay_every steps once decay_start steps
  /// have run (decay_every = 0 disables).
  std::size_t decay_start = 0;
  std::size_t decay_every = 0;
  /// After the last step, running statistics are reset and re-estimated by
  /// this many training-mode forward passes at the final weights, so they
  /// depend on the weights alone (and not on how training got there).
  std::size_t bn_refresh = 50;
  /// Resume point: batches and noise of earlier steps are drawn and
  /// discarded, so a resumed run repeats the uninterrupted one.
  std::size_t start_step = 0;

  double learning_rate(std::size_t step) const;
  nlohmann::json to_json() const;
  static TrainOptions from_json(const nlohmann::json& j);
};

struct LossLog {
  std::vector<std::size_t> step;
  std::vector<double> loss;
  void add(std::size_t s, double l) {
    step.push_back(s);
    loss.push_back(l);
  }
  void write_csv(const std::filesystem::path& path) const;
};

/// Epoch-wise shuffled minibatch indices, deterministic in the seed.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : n_(n), rng_(seed) {}
  std::vector<std::size_t> next(std::size_t batch);

 private:
  std::size_t n_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
};

/// Marks every BatchNorm running statistic in the store as unset (NaN); the
/// next training-mode pass copies its batch statistics.
void reset_running_stats(ParamStore& store);

/// Throws NumericalError naming the step when the loss is not finite.
void check_finite_loss(double loss, std::size_t step);

// ---------------------------------------------------------------------------
// Mesh VAE

struct VaeConfig {
  ModelKind model = ModelKind::Laplace;
  std::size_t latent_dim = 8;
  std::size_t width = 32;
  std::size_t blocks = 4;
  /// Planar coordinates enter as (x / extent - 1/2, y / extent - 1/2).
  double extent = kMnistExtent;

  void validate() const;
  nlohmann::json to_json() const;
  static VaeConfig from_json(const nlohmann::json& j);
};

/// Encoder: lifted-mesh network, per-vertex output of 2 * latent_dim,
/// averaged per mesh into (mu, log variance). Decoder: base-mesh network on
/// [planar coordinates, broadcast latent], per-vertex mean depth, with one
/// shared trainable log variance "dec.log_var".
class VaeModel {
 public:
  VaeModel(VaeConfig config, ParamStore& store, std::uint64_t seed);

  const VaeConfig& config() const { return config_; }
  Network& encoder() { return encoder_; }
  Network& decoder() { return decoder_; }

  /// Operators and inputs of one sample, built once and reused.
  struct Prepared {
    OperatorBatch enc_ops, dec_ops;
    DenseMatrix enc_in;   // n x 3
    DenseMatrix planar;   // n x 2
    DenseMatrix target;   // n x 1 depth
  };
  Prepared prepare(const HeightFieldMesh& mesh) const;

  struct Terms {
    Var loss;  // (nll + kl) / batch
    Var nll;
    Var kl;
    Var mu_z;
    /// Concatenated operators referenced by the tape; keep until backward.
    std::shared_ptr<const OperatorBatch> enc_ops, dec_ops;
  };
  /// eps: batch x latent_dim standard normal draws (zeros give the mean).
  Terms loss(Tape& tape, std::span<const Prepared* const> batch, const DenseMatrix& eps, bool training) const;

  /// Evaluation mode. Returns 1 x latent_dim mean and log variance.
  std::pair<DenseMatrix, DenseMatrix> encode(const HeightFieldMesh& mesh) const;
  std::vector<double> decode(const Mesh& base, const DenseMatrix& latent) const;
  double log_var() const;
  /// MSE of decode(base, encode(mesh).mu) against the depth.
  double reconstruction_mse(const HeightFieldMesh& mesh) const;
  /// h ~ N(0, 1) from seed, depth = decoded mean.
  HeightFieldMesh sample(const Mesh& base, std::uint64_t seed) const;

 private:
  DenseMatrix planar_coords(const Mesh& mesh) const;

  VaeConfig config_;
  ParamStore* store_;
  Network encoder_;
  Network decoder_;
};

/// Negative ELBO per logged step (every log_every steps and the last one).
LossLog vae_train(VaeModel& model, Adam& adam, std::span<const HeightFieldMesh> data, const TrainOptions& options,
                  std::size_t log_every = 10);

// ---------------------------------------------------------------------------
// Correspondence

inline constexpr std::size_t LANDMARK_COUNT = 16;
inline constexpr std::int64_t kNoMatch = -1;

struct CorrespondencePair {
  Mesh a;
  Mesh b;
  std::vector<std::int64_t> gt;  // per vertex of a: vertex of b or kNoMatch

  std::size_t labeled() const;
  /// (b, a) with the inverse map.
  CorrespondencePair swapped() const;
};

/// Row-wise softmax of E1 E2^T with max subtraction.
DenseMatrix softmax_similarity(const DenseMatrix& e1, const DenseMatrix& e2);
/// Per-row argmax, ties to the smallest column.
std::vector<std::size_t> argmax_rows(const DenseMatrix& s);
/// argmax_j <E1_i, E2_j> (the mode of the softmax row).
std::vector<std::size_t> predict_matches(const DenseMatrix& e1, const DenseMatrix& e2);

/// Graph distances along mesh edges (Euclidean edge lengths). Throws
/// DisconnectedMesh when some vertex is unreachable.
std::vector<double> dijkstra(const Mesh& mesh, std::size_t source);
/// Max over LANDMARK_COUNT farthest-point landmarks (from vertex 0) of the
/// largest distance from that landmark.
double geodesic_diameter(const Mesh& mesh, std::size_t landmarks = LANDMARK_COUNT);

struct GeodesicCurve {
  double diameter = 0.0;
  std::vector<double> errors;      // normalized, one per labeled vertex
  std::vector<double> thresholds;  // 0 .. max_error
  std::vector<double> fraction;    // fraction of labeled vertices with error <= threshold
  nlohmann::json to_json() const;
  void write_csv(const std::filesystem::path& path) const;
};
GeodesicCurve geodesic_error_curve(const CorrespondencePair& pair, std::span<const std::size_t> predicted,
                                   std::size_t bins = 26, double max_error = 0.25);

/// Fraction of labeled vertices with predicted == gt.
double match_accuracy(const CorrespondencePair& pair, std::span<const std::size_t> predicted);

struct CorrespondenceDatasetOptions {
  double radius = 1.6;        // Poisson radius of the template (about 200 vertices)
  double amplitude = 0.05;    // SmoothBend amplitude
  bool permute = true;
};
/// Template = lifted MeshMNIST sample; partner = template bent by a
/// SmoothBend field and randomly re-indexed; ground truth = the re-indexing.
std::vector<CorrespondencePair> make_correspondence_dataset(std::size_t pairs, std::uint64_t seed,
                                                            const CorrespondenceDatasetOptions& options = {});
/// (mesh, mesh) with the identity map.
CorrespondencePair self_pair(const Mesh& mesh);

inline constexpr std::size_t kDefaultEmbeddingDim = 32;

/// Siamese embedding network: both meshes go through one shared network on
/// their own normalized coordinates.
class CorrespondenceModel {
 public:
  CorrespondenceModel(NetworkSpec spec, ParamStore& store, std::uint64_t seed);
  /// Defaults: 3 input channels, d = 32 outputs, small head init so the
  /// initial softmax is nearly uniform.
  static NetworkSpec default_spec(ModelKind model, std::size_t width = 32, std::size_t blocks = 4);

  const Network& net() const { return net_; }
  Network& net() { return net_; }

  struct Prepared {
    OperatorBatch ops_a, ops_b;
    DenseMatrix xa, xb;
    std::vector<std::size_t> rows, targets;
  };
  /// Throws NoLabels when the pair has no labeled vertex.
  Prepared prepare(const CorrespondencePair& pair) const;

  /// Mean cross-entropy over labeled rows.
  Var loss(Tape& tape, const Prepared& p, bool training) const;
  std::pair<DenseMatrix, DenseMatrix> embed(const Prepared& p) const;
  std::vector<std::size_t> predict(const Prepared& p) const;

 private:
  Network net_;
};

LossLog correspondence_train(CorrespondenceModel& model, Adam& adam, std::span<const CorrespondencePair> pairs,
                             const TrainOptions& options, std::size_t log_every = 10);

// ---------------------------------------------------------------------------
// Temporal prediction on a discrete wave

struct TemporalOptions {
  std::size_t frames_out = 10;
  double c2 = 0.3;
  double radius = 2.0;     // Poisson radius of the base patch
  double amplitude = 1.0;  // bump height scale; 0 gives flat sequences
  /// Abort (and redraw) a sequence when |z| exceeds this.
  double blowup = 100.0;

  nlohmann::json to_json() const;
  static TemporalOptions from_json(const nlohmann::json& j);
};

struct TemporalSample {
  Mesh mesh;                                // base patch (z = 0), possibly rescaled for stability
  std::vector<std::vector<double>> frames;  // z per frame: 2 inputs then frames_out targets
  std::uint64_t seed = 0;

  std::size_t frames_out() const { return frames.size() - 2; }
  Mesh frame_mesh(std::size_t t) const;
};

/// z_{t+1} = 2 z_t - z_{t-1} - c2 Delta z_t from a sum of Gaussian bumps
/// with zero initial velocity. Positions are scaled up if needed so that
/// c2 ||Delta|| < 3.6 keeps the scheme stable.
std::vector<TemporalSample> make_temporal_dataset(std::size_t count, std::uint64_t seed,
                                                  const TemporalOptions& options = {});

/// 6 channels: (x, y, z) of frames 0 and 1, x and y divided by the patch
/// radius about its centroid.
DenseMatrix temporal_input(const TemporalSample& s);
/// 3m channels: offsets of frames 2.. from frame 1.
DenseMatrix temporal_target(const TemporalSample& s);

/// Network with 6 inputs and 3m outputs for the given model kind.
NetworkSpec temporal_spec(ModelKind model, std::size_t frames_out, std::size_t width = 32, std::size_t blocks = 4);

struct TemporalPrepared {
  OperatorBatch ops;
  DenseMatrix x, y;
};
TemporalPrepared prepare_temporal(const Network& net, const TemporalSample& s);

LossLog temporal_train(const Network& net, Adam& adam, std::span<const TemporalPrepared> data,
                       const TrainOptions& options, std::size_t log_every = 10);
/// Mean over sequences of the per-sequence smooth-L1 (evaluation mode).
double temporal_eval(const Network& net, std::span<const TemporalPrepared> data);

/// Baselines are plain networks with ModelKind Mlp or PointCloud.
inline Var baseline_forward(const Network& net, Tape& tape, const OperatorBatch& ops, Var x, bool training) {
  return net.forward(tape, ops, x, training);
}

}  // namespace surfnet
