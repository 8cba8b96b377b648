#include "plainpt/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "plainpt/bench.hpp"
#include "plainpt/config.hpp"
#include "plainpt/grad_suite.hpp"
#include "plainpt/pointcloud_io.hpp"
#include "plainpt/pretrain.hpp"
#include "plainpt/reconstruct.hpp"

namespace plainpt {

namespace fs = std::filesystem;

namespace {

struct PatchifyArgs {
  std::string input;
  std::size_t patches = 512;
  std::size_t samples = 128;
  std::string group = "fpc";
  double radius = 0.2;
  std::string out;
  std::uint64_t seed = 0;
};

struct ReconstructArgs {
  std::string checkpoint;
  std::string input;
  double mask_ratio = 0.25;
  double drop_ratio = 0.5;
  std::uint64_t seed = 0;
  std::string out = "reconstruction";
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

int cmd_patchify(const PatchifyArgs& a, std::ostream& out) {
  PatchifyOptions opts;
  opts.grouping = parse_grouping(a.group);
  opts.patches = a.patches;
  opts.samples = a.samples;
  opts.radius = a.radius;
  if (opts.patches == 0 || opts.samples == 0) throw std::invalid_argument("--patches and --samples must be positive");
  if (!(opts.radius > 0)) throw std::invalid_argument("--radius must be positive");
  const PointCloud pc = load_point_cloud(a.input);
  if (pc.size() < opts.patches) {
    throw std::invalid_argument("'" + a.input + "' has " + std::to_string(pc.size()) + " points, fewer than " +
                                std::to_string(opts.patches) + " patches");
  }
  Rng rng(a.seed, 0x9a7c);
  const PatchSet ps = patchify(pc, opts, &rng);
  const std::string prefix = a.out.empty() ? fs::path(a.input).replace_extension().string() + "_patches" : a.out;
  save_point_cloud(color_by_patch(pc, ps, a.seed), prefix + ".ply", CloudFormat::kPly);
  write_text(prefix + ".assign.txt", format_assignment(ps));
  out << "wrote " << prefix << ".ply and " << prefix << ".assign.txt (" << ps.num_patches() << " patches of "
      << ps.samples << " points, " << to_string(ps.grouping) << ")\n";
  return 0;
}

int cmd_pretrain(const std::string& config, const std::string& dir, std::ostream& out) {
  const RunConfig cfg = load_run_config(config);
  PretrainOutputs outputs;
  outputs.dir = dir;
  const PretrainSummary summary = pretrain(cfg, outputs, &out);
  out << "wrote " << summary.checkpoint.string() << " after " << summary.metrics.size() << " steps\n";
  return 0;
}

int cmd_reconstruct(const ReconstructArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const PointCloud pc = load_point_cloud(a.input);
  const ReconstructionClouds clouds =
      reconstruct_cloud(pc, ckpt, ReconstructOptions{a.mask_ratio, a.drop_ratio, a.seed});
  save_point_cloud(clouds.original, a.out + "_original.ply", CloudFormat::kPly);
  save_point_cloud(clouds.masked, a.out + "_masked.ply", CloudFormat::kPly);
  save_point_cloud(clouds.reconstructed, a.out + "_reconstructed.ply", CloudFormat::kPly);
  out << "wrote " << a.out << "_{original,masked,reconstructed}.ply; " << clouds.masked_patches
      << " masked patches, chamfer loss " << clouds.loss << '\n';
  return 0;
}

int cmd_gradcheck(std::size_t seeds, std::ostream& out) {
  GradSuiteOptions opts;
  opts.primitive_seeds = seeds;
  bool ok = true;
  run_grad_suite(opts, [&](const GradCaseResult& r) {
    ok = ok && r.passed;
    out << format_grad_result(r) << '\n' << std::flush;
  });
  out << (ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
  return ok ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point cloud patchifiers and masked-autoencoder pre-training", "plainpt"};
  app.require_subcommand(1);

  PatchifyArgs pa;
  auto* patchify_cmd = app.add_subcommand("patchify", "Split a cloud into patches and write a patch-colored copy");
  patchify_cmd->add_option("input", pa.input, "XYZ or ASCII PLY point cloud")->required();
  patchify_cmd->add_option("--patches", pa.patches, "number of patches M")->capture_default_str();
  patchify_cmd->add_option("--samples", pa.samples, "points per patch K")->capture_default_str();
  patchify_cmd->add_option("--group", pa.group, "ball, knn, kmeans or fpc")->capture_default_str();
  patchify_cmd->add_option("--radius", pa.radius, "ball query radius")->capture_default_str();
  patchify_cmd->add_option("--out", pa.out, "output prefix (default: <input>_patches)");
  patchify_cmd->add_option("--seed", pa.seed, "color seed")->capture_default_str();

  std::string config, out_dir = ".";
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Run MAE pre-training from a config file");
  pretrain_cmd->add_option("--config", config, "config file")->required();
  pretrain_cmd->add_option("--out", out_dir, "directory for metrics and checkpoints")->capture_default_str();

  ReconstructArgs ra;
  auto* reconstruct_cmd = app.add_subcommand("reconstruct", "Write original, masked and reconstructed clouds");
  reconstruct_cmd->add_option("--checkpoint", ra.checkpoint, "checkpoint file")->required();
  reconstruct_cmd->add_option("--input", ra.input, "XYZ or ASCII PLY point cloud")->required();
  reconstruct_cmd->add_option("--mask-ratio", ra.mask_ratio, "fraction of patches masked")->capture_default_str();
  reconstruct_cmd->add_option("--drop-ratio", ra.drop_ratio, "fraction of patches dropped")->capture_default_str();
  reconstruct_cmd->add_option("--seed", ra.seed, "patch and partition seed")->capture_default_str();
  reconstruct_cmd->add_option("--out", ra.out, "output prefix")->capture_default_str();

  std::size_t grad_seeds = 20;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gradcheck_cmd->add_option("--seeds", grad_seeds, "seeds per primitive")->capture_default_str();

  BenchOptions bo;
  auto* bench_cmd = app.add_subcommand("bench", "Time the four patchifiers on a synthetic scene");
  bench_cmd->add_option("--points", bo.points, "scene size")->capture_default_str();
  bench_cmd->add_option("--patches", bo.patches, "number of patches M")->capture_default_str();
  bench_cmd->add_option("--samples", bo.samples, "points per patch K")->capture_default_str();
  bench_cmd->add_option("--repeats", bo.repeats, "timed runs per grouping")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (auto* sub : app.get_subcommands()) failing = sub;
    err << failing->help();
    return 2;
  }

  try {
    if (*patchify_cmd) return cmd_patchify(pa, out);
    if (*pretrain_cmd) return cmd_pretrain(config, out_dir, out);
    if (*reconstruct_cmd) return cmd_reconstruct(ra, out);
    if (*gradcheck_cmd) return cmd_gradcheck(grad_seeds, out);
    if (*bench_cmd) {
      if (bo.points < bo.patches || bo.patches == 0 || bo.samples == 0) {
        throw std::invalid_argument("bench needs 0 < patches <= points and samples > 0");
      }
      out << format_bench_table(bench_patchifiers(bo), bo);
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace plainpt
