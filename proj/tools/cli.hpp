#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "json.hpp"

#include "surfnet/tasks.hpp"

namespace surfnet::cli {

enum ExitCode : int { kPass = 0, kUsage = 1, kValidation = 2, kCheckFailed = 3 };

enum class TaskKind { Vae, Correspondence, Temporal };
std::string to_string(TaskKind t);
TaskKind task_from_string(const std::string& s);

struct VaeData {
  std::optional<std::filesystem::path> path;  // dataset written by gen-meshmnist
  std::size_t count = 32;                     // synthesized when no path
  std::size_t test_count = 8;
  MeshMnistOptions mnist;
  std::size_t latent_dim = 8;
};

struct CorrespondenceData {
  std::size_t pairs = 8;
  std::size_t test_pairs = 4;
  CorrespondenceDatasetOptions options;
  /// Train and evaluate on (mesh, mesh) with the identity map instead.
  std::optional<std::filesystem::path> self_mesh;
};

struct TemporalData {
  std::size_t count = 32;
  std::size_t test_count = 8;
  TemporalOptions options;
};

/// Training run description. Preset values are applied first, then the
/// keys present in the document; unknown keys are a ConfigError.
struct RunConfig {
  TaskKind task = TaskKind::Temporal;
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::filesystem::path out = "run";
  NetworkSpec network;  // channels are set by the task
  TrainOptions optimizer;
  VaeData vae;
  CorrespondenceData correspondence;
  TemporalData temporal;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  /// Fully resolved form (every field, including preset values).
  nlohmann::json to_json() const;
};

/// Applies a named preset ("desk" or "paper") to network and optimizer.
void apply_preset(RunConfig& c, const std::string& name);

std::string version();

struct TrainResult {
  std::filesystem::path checkpoint;
  nlohmann::json eval;
};
/// Trains the configured task, writes <out>/config.json, <out>/loss.csv,
/// <out>/checkpoint/, <out>/eval.json. With resume, parameters and optimizer
/// state come from that checkpoint and training continues at its step.
TrainResult run_train(const RunConfig& config, const std::optional<std::filesystem::path>& resume = std::nullopt);
/// Rebuilds the model of a checkpoint and evaluates it on the test split of
/// its config (or on a MeshMNIST dataset directory for the VAE).
nlohmann::json run_eval(const std::filesystem::path& checkpoint,
                        const std::optional<std::filesystem::path>& dataset = std::nullopt);

// Subcommands; each returns an exit code and prints diagnostics to stderr.
int cmd_ops(const std::filesystem::path& mesh, const std::string& mode, const std::filesystem::path& out);
int cmd_gen_meshmnist(std::size_t count, std::uint64_t seed, double radius, bool raw,
                      const std::optional<std::filesystem::path>& idx_images,
                      const std::optional<std::filesystem::path>& idx_labels, const std::filesystem::path& out);
int cmd_train(const std::filesystem::path& config, const std::optional<std::filesystem::path>& resume,
              const std::optional<std::filesystem::path>& out);
int cmd_eval(const std::filesystem::path& checkpoint, const std::optional<std::filesystem::path>& dataset,
             const std::optional<std::filesystem::path>& out);
int cmd_verify(const std::string& suite, const std::filesystem::path& out, std::uint64_t seed);
int cmd_correspond(const std::filesystem::path& checkpoint, const std::filesystem::path& mesh_a,
                   const std::filesystem::path& mesh_b, const std::optional<std::filesystem::path>& gt,
                   const std::filesystem::path& out);
int cmd_gen_golden(const std::filesystem::path& out);

/// The golden meshes by name (triangle, square_pair, tetrahedron,
/// icosphere2, icosphere3, meshmnist).
std::vector<std::pair<std::string, Mesh>> golden_meshes();

/// Runs f and maps library errors to exit codes (NumericalError 3, other
/// library and JSON errors 2).
int guarded(const std::function<int()>& f);

}  // namespace surfnet::cli
