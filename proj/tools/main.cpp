#include <iostream>

#include "CLI11.hpp"

#include "cli.hpp"

namespace fs = std::filesystem;
using namespace surfnet::cli;

int main(int argc, char** argv) {
  CLI::App app{"surfnet: operator-based surface networks"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  std::string mesh, mode = "laplacian", out;
  auto* ops = app.add_subcommand("ops", "assemble or check operators of a mesh");
  ops->add_option("mesh", mesh, "OBJ or OFF file")->required()->check(CLI::ExistingFile);
  ops->add_option("--mode", mode)->check(CLI::IsMember({"laplacian", "dirac", "verify-identity", "norm-bound"}));
  ops->add_option("--out", out)->required();

  std::size_t count = 100;
  std::uint64_t seed = 0;
  double radius = 1.0;
  bool raw = false;
  std::string idx_images_s, idx_labels_s;
  auto* gen = app.add_subcommand("gen-meshmnist", "write a MeshMNIST dataset");
  gen->add_option("--count", count)->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed);
  gen->add_option("--radius", radius)->check(CLI::PositiveNumber);
  gen->add_flag("--raw", raw, "keep grey values in [0, 255]");
  gen->add_option("--idx-images", idx_images_s)->check(CLI::ExistingFile);
  gen->add_option("--idx-labels", idx_labels_s)->check(CLI::ExistingFile);
  gen->add_option("--out", out)->required();

  std::string config, resume, train_out;
  auto* train = app.add_subcommand("train", "train a task from a JSON config");
  train->add_option("--config", config)->required()->check(CLI::ExistingFile);
  train->add_option("--resume", resume, "checkpoint directory")->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "overrides the config's out");

  std::string checkpoint, dataset, eval_out;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--dataset", dataset)->check(CLI::ExistingDirectory);
  eval->add_option("--out", eval_out);

  std::string suite = "all", verify_out;
  std::uint64_t verify_seed = 0;
  auto* verify = app.add_subcommand("verify", "run property suites");
  verify->add_option("--suite", suite)
      ->check(CLI::IsMember({"identity", "lipschitz", "deformation", "discretization", "all"}));
  verify->add_option("--out", verify_out)->required();
  verify->add_option("--seed", verify_seed);

  std::string ckpt, mesh_a, mesh_b, gt, corr_out;
  auto* corr = app.add_subcommand("correspond", "match the vertices of two meshes");
  corr->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingDirectory);
  corr->add_option("--a", mesh_a)->required()->check(CLI::ExistingFile);
  corr->add_option("--b", mesh_b)->required()->check(CLI::ExistingFile);
  corr->add_option("--gt", gt, "CSV of i,j ground-truth pairs")->check(CLI::ExistingFile);
  corr->add_option("--out", corr_out)->required();

  std::string golden_out;
  auto* golden = app.add_subcommand("gen-golden", "");
  golden->group("");
  golden->add_option("out", golden_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  auto opt = [](const std::string& s) { return s.empty() ? std::optional<fs::path>{} : fs::path(s); };
  return guarded([&]() -> int {
    if (*ops) return cmd_ops(mesh, mode, out);
    if (*gen) return cmd_gen_meshmnist(count, seed, radius, raw, opt(idx_images_s), opt(idx_labels_s), out);
    if (*train) return cmd_train(config, opt(resume), opt(train_out));
    if (*eval) return cmd_eval(checkpoint, opt(dataset), opt(eval_out));
    if (*verify) return cmd_verify(suite, verify_out, verify_seed);
    if (*corr) return cmd_correspond(ckpt, mesh_a, mesh_b, opt(gt), corr_out);
    if (*golden) return cmd_gen_golden(golden_out);
    return kUsage;
  });
}
