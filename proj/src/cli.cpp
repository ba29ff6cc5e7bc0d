#include "vidswap/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "vidswap/config.hpp"
#include "vidswap/data.hpp"
#include "vidswap/error.hpp"
#include "vidswap/image_io.hpp"
#include "vidswap/log.hpp"
#include "vidswap/swap_eval.hpp"
#include "vidswap/train.hpp"

namespace vidswap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool resume = false;
  std::optional<int> stop_after;

  std::string data;
  std::string kth_root;
  std::string split = "train";
  int resolution = 64;
  std::vector<std::string> checkpoints;
  std::string pose_video;
  std::string content;
  int frames = 8;
  int pairs_per_clip = 10;
  bool plain = false;
  int verbosity = 0;
};

void add_config_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON config file");
  cmd->add_option("--set", o.sets, "Override a config field, key=value (repeatable)")
      ->allow_extra_args(false);
  cmd->add_option("--seed", o.seed, "Random seed (overrides the config)");
}

json load_config(const Options& o) {
  json j = o.config.empty() ? json::object() : read_json_file(o.config);
  apply_overrides(j, o.sets);
  if (o.seed) j["seed"] = *o.seed;
  return j;
}

void require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path)) throw FilesystemError(std::string(what) + " not found: " + path);
}

void prepare_out(const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_directory(out)) {
    throw FilesystemError("output path exists and is not a directory: " + out.string());
  }
  if (fs::is_directory(out) && !fs::is_empty(out)) {
    if (!force) {
      throw UserError("output directory " + out.string() + " is not empty (use --force to overwrite)");
    }
    fs::remove_all(out);
  }
  fs::create_directories(out);
}

const Clip& find_clip(const std::vector<Clip>& clips, const std::string& id) {
  for (const auto& c : clips) {
    if (c.video_id == id) return c;
  }
  throw UserError("pose video not found in dataset: " + id);
}

int cmd_synth(const Options& o, std::ostream& out) {
  const SyntheticConfig cfg = synthetic_config_from_json(load_config(o));
  prepare_out(o.out, o.force);
  const auto clips = generate_synthetic(cfg);
  write_dataset(o.out, clips, cfg.palette);
  out << "wrote " << clips.size() << " clips x " << cfg.frames_per_clip << " frames at "
      << cfg.resolution << "x" << cfg.resolution << " to " << o.out << "\n";
  return 0;
}

int cmd_ingest(const Options& o, std::ostream& out) {
  require_dir(o.kth_root, "KTH root");
  Split split;
  if (o.split == "train") {
    split = Split::kTrain;
  } else if (o.split == "test") {
    split = Split::kTest;
  } else {
    throw ConfigError("unknown split '" + o.split + "' (expected train or test)");
  }
  const auto clips = load_kth(o.kth_root, split, o.resolution);
  prepare_out(o.out, o.force);
  write_dataset(o.out, clips);
  out << "ingested " << clips.size() << " videos (" << o.split << " split) at " << o.resolution << "x"
      << o.resolution << " to " << o.out << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  json j = load_config(o);
  if (o.seed) j["sampler"]["seed"] = *o.seed;
  const MethodConfig cfg = method_config_from_json(j);
  require_dir(o.data, "dataset");
  const auto clips = load_dataset(o.data, cfg.net.in_resolution);
  if (!o.resume) {
    if (fs::is_directory(o.out) && !fs::is_empty(o.out) && !o.force) {
      throw UserError("output directory " + o.out + " is not empty (use --resume or --force)");
    }
    prepare_out(o.out, o.force);
  }
  RunOptions run;
  run.resume = o.resume;
  run.stop_after_epoch = o.stop_after;
  const auto result = run_training(cfg, clips, o.out, run);
  out << "trained " << method_name(cfg.method) << " for " << result.state.epoch << " epochs ("
      << result.state.global_step << " steps); checkpoint " << result.checkpoint.string() << "\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.checkpoints.size() != 1) throw UserError("eval takes exactly one --checkpoint");
  require_dir(o.data, "dataset");
  const auto gen = load_generator(fs::path(o.checkpoints.front()));
  const auto clips = load_dataset(o.data, 0);
  EvalOptions opts;
  opts.pairs_per_clip = o.pairs_per_clip;
  opts.temporal_shift = !o.plain;
  if (o.seed) opts.seed = *o.seed;
  const auto palette = load_synthetic_palette(o.data);
  const auto report = palette ? evaluate_mse(*gen, clips, opts, *palette) : evaluate_mse(*gen, clips, opts);
  fs::create_directories(o.out);
  write_report(fs::path(o.out) / "report", report);
  out << "method " << report.method << ": mse " << report.mse << " over " << report.n_pairs << " pairs";
  if (report.swap_scores) {
    out << "; content score " << report.swap_scores->content_score << ", pose error "
        << report.swap_scores->pose_error_px << " px";
  }
  out << "\n";
  return 0;
}

torch::Tensor read_content(const Options& o) {
  if (!fs::exists(o.content)) throw FilesystemError("content image not found: " + o.content);
  return read_frame(o.content, 0);
}

int cmd_swap(const Options& o, std::ostream& out) {
  if (o.checkpoints.size() != 1) throw UserError("swap takes exactly one --checkpoint");
  require_dir(o.data, "dataset");
  const auto content = read_content(o);
  const auto gen = load_generator(fs::path(o.checkpoints.front()));
  const auto clips = load_dataset(o.data, 0);
  const Clip& pose_video = find_clip(clips, o.pose_video);
  const auto result = swap(*gen, pose_video, content);

  fs::create_directories(o.out);
  write_swap_frames(o.out, result, pose_video.fps);
  const std::int64_t n = std::min<std::int64_t>(o.frames, pose_video.length());
  const std::vector<torch::Tensor> outputs{result.frames.narrow(0, 0, n)};
  const auto grid = render_swap_grid(
      pose_video.frames.narrow(0, 0, n),
      std::span<const PoseVector>(pose_video.poses.data(), static_cast<std::size_t>(n)), content, outputs);
  write_rgb8_png(fs::path(o.out) / "grid.png", grid.rgb, grid.height, grid.width);

  EvalReport report;
  report.method = gen->method_id();
  report.invisible_frames = result.invisible_frames;
  write_report(fs::path(o.out) / "report", report);
  out << "wrote " << result.frames.size(0) << " frames to " << (fs::path(o.out) / "frames").string();
  if (!result.invisible_frames.empty()) {
    out << " (" << result.invisible_frames.size() << " from the zero pose)";
  }
  out << "\n";
  return 0;
}

int cmd_grid(const Options& o, std::ostream& out) {
  if (o.checkpoints.empty()) throw UserError("grid needs at least one --checkpoint");
  require_dir(o.data, "dataset");
  const auto content = read_content(o);
  const auto clips = load_dataset(o.data, 0);
  const Clip& pose_video = find_clip(clips, o.pose_video);
  const std::int64_t n = std::min<std::int64_t>(o.frames, pose_video.length());
  std::vector<torch::Tensor> outputs;
  for (const auto& path : o.checkpoints) {
    const auto gen = load_generator(fs::path(path));
    outputs.push_back(swap(*gen, pose_video, content).frames.narrow(0, 0, n));
  }
  const auto grid = render_swap_grid(
      pose_video.frames.narrow(0, 0, n),
      std::span<const PoseVector>(pose_video.poses.data(), static_cast<std::size_t>(n)), content, outputs);
  fs::create_directories(o.out);
  write_rgb8_png(fs::path(o.out) / "grid.png", grid.rgb, grid.height, grid.width);
  out << "wrote " << (fs::path(o.out) / "grid.png").string() << " (" << 2 + outputs.size() << " x "
      << 1 + n << " cells)\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Disentangled content/pose video representations and video content swapping", "vidswap"};
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", o.verbosity, "More log output (repeatable)");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic stick-figure dataset");
  add_config_flags(synth, o);
  synth->add_option("--out", o.out, "Dataset directory")->required();
  synth->add_flag("--force", o.force, "Overwrite a non-empty output directory");

  auto* ingest = app.add_subcommand("ingest", "Convert KTH frames and keypoint files to the dataset layout");
  ingest->add_option("--kth", o.kth_root, "KTH root directory")->required();
  ingest->add_option("--split", o.split, "train or test");
  ingest->add_option("--resolution", o.resolution, "Output frame size in pixels");
  ingest->add_option("--out", o.out, "Dataset directory")->required();
  ingest->add_flag("--force", o.force, "Overwrite a non-empty output directory");

  auto* train = app.add_subcommand("train", "Train one of the four methods");
  add_config_flags(train, o);
  train->add_option("--data", o.data, "Dataset directory")->required();
  train->add_option("--out", o.out, "Run directory")->required();
  train->add_flag("--resume", o.resume, "Continue from <out>/checkpoint.ckpt");
  train->add_flag("--force", o.force, "Overwrite a non-empty run directory");
  train->add_option("--stop-after", o.stop_after, "Stop after this many completed epochs");

  auto* eval = app.add_subcommand("eval", "Reconstruction MSE and synthetic swap diagnostics");
  eval->add_option("--checkpoint", o.checkpoints, "Checkpoint file")->required();
  eval->add_option("--data", o.data, "Dataset directory")->required();
  eval->add_option("--out", o.out, "Report directory")->required();
  eval->add_option("--seed", o.seed, "Pair sampling seed");
  eval->add_option("--pairs-per-clip", o.pairs_per_clip, "Sampled pairs per clip");
  eval->add_flag("--plain", o.plain, "Self-reconstruction instead of temporal-shifted");

  auto* swp = app.add_subcommand("swap", "Regenerate a pose video with new content");
  swp->add_option("--checkpoint", o.checkpoints, "Checkpoint file")->required();
  swp->add_option("--data", o.data, "Dataset directory")->required();
  swp->add_option("--pose-video", o.pose_video, "Video id supplying the poses")->required();
  swp->add_option("--content", o.content, "Content image")->required();
  swp->add_option("--out", o.out, "Output directory")->required();
  swp->add_option("--frames", o.frames, "Frames shown in grid.png");

  auto* grid = app.add_subcommand("grid", "Swap grid comparing several checkpoints");
  grid->add_option("--checkpoint", o.checkpoints, "Checkpoint file (repeatable, one row each)")->required();
  grid->add_option("--data", o.data, "Dataset directory")->required();
  grid->add_option("--pose-video", o.pose_video, "Video id supplying the poses")->required();
  grid->add_option("--content", o.content, "Content image")->required();
  grid->add_option("--out", o.out, "Output directory")->required();
  grid->add_option("--frames", o.frames, "Number of pose frames");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    // The top-level help lists every subcommand together with its flags.
    if (app.get_subcommands().empty()) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    }
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  log::set_level(o.verbosity >= 2   ? log::Level::kTrace
                 : o.verbosity == 1 ? log::Level::kDebug
                                    : log::Level::kInfo);

  try {
    if (synth->parsed()) return cmd_synth(o, out);
    if (ingest->parsed()) return cmd_ingest(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (swp->parsed()) return cmd_swap(o, out);
    if (grid->parsed()) return cmd_grid(o, out);
  } catch (const UserError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace vidswap
