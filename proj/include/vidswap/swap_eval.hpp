#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "vidswap/checkpoint.hpp"
#include "vidswap/data.hpp"
#include "vidswap/nets.hpp"

namespace vidswap {

/// Renders frames from a content source and a pose source. Implemented by
/// trained networks and by test oracles.
class FrameGenerator {
 public:
  virtual ~FrameGenerator() = default;
  virtual std::string method_id() const = 0;
  /// Expected input resolution; 0 accepts any.
  virtual int resolution() const = 0;
  /// content, pose_frames: [B, 3, H, W]; poses: B keypoint vectors.
  virtual torch::Tensor generate(const torch::Tensor& content, const torch::Tensor& pose_frames,
                                 std::span<const PoseVector> poses) const = 0;
};

class NetworkGenerator final : public FrameGenerator {
 public:
  explicit NetworkGenerator(Networks nets) : nets_(std::move(nets)) { nets_.train(false); }
  std::string method_id() const override { return method_name(nets_.method); }
  int resolution() const override { return nets_.cfg.in_resolution; }
  torch::Tensor generate(const torch::Tensor& content, const torch::Tensor& pose_frames,
                         std::span<const PoseVector> poses) const override;
  const Networks& networks() const { return nets_; }

 private:
  Networks nets_;
};

/// Returns the pose frame unchanged: the target of a reconstruction.
class IdentityOracle final : public FrameGenerator {
 public:
  std::string method_id() const override { return "identity_oracle"; }
  int resolution() const override { return 0; }
  torch::Tensor generate(const torch::Tensor&, const torch::Tensor& pose_frames,
                         std::span<const PoseVector>) const override {
    return pose_frames.clone();
  }
};

/// Checkpoint whose method is `identity_oracle` (no tensors).
CheckpointArchive identity_oracle_checkpoint();
std::unique_ptr<FrameGenerator> load_generator(const CheckpointArchive& archive);
std::unique_ptr<FrameGenerator> load_generator(const std::filesystem::path& checkpoint);

// ------------------------------------------------------------------ evaluation

struct EvalOptions {
  int pairs_per_clip = 10;
  int window = 3;
  std::uint64_t seed = 0;
  /// Reconstruct frame t from content at t+k (true) or from frame t itself.
  bool temporal_shift = true;
  /// Content-swap pairs scored by the synthetic diagnostics (synthetic data only).
  int diagnostic_pairs = 20;
};

struct SwapScores {
  double content_score = 0.0;  // fraction of frames with the content palette colour
  double pose_error_px = 0.0;  // mean figure-centroid distance to the pose truth
  std::int64_t frames = 0;
};

struct EvalReport {
  std::string method;
  double mse = 0.0;
  std::map<std::string, double> per_clip_mse;
  std::int64_t n_pairs = 0;
  std::optional<SwapScores> swap_scores;
  /// Pose-video frames generated from the zero pose (swap only).
  std::vector<std::int64_t> invisible_frames;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);
void write_report(const std::filesystem::path& path, const EvalReport& r);
EvalReport read_report(const std::filesystem::path& path);

/// Mean per-pixel squared error of I^t against G(I^{t+k}, Z^t) over a fixed,
/// seeded set of pairs per clip. With `palette`, synthetic swap diagnostics
/// are added for clips carrying ground-truth palette indices.
EvalReport evaluate_mse(const FrameGenerator& gen, std::span<const Clip> clips,
                        const EvalOptions& opts = {}, std::span<const Rgb> palette = {});

// ------------------------------------------------------------------ swapping

struct SwapResult {
  torch::Tensor frames;  // [T, 3, H, W]
  std::vector<std::int64_t> invisible_frames;
};

/// One output per pose-video frame: G(content code of content_image, pose of frame t).
SwapResult swap(const FrameGenerator& gen, const Clip& pose_video, const torch::Tensor& content_image);

/// Writes `<out>/frames/%06d.png`; muxes `<out>/video.mp4` when ffmpeg is on PATH.
void write_swap_frames(const std::filesystem::path& out_dir, const SwapResult& result, double fps);

/// Dominant palette entry among foreground pixels, or -1 with no foreground.
int dominant_palette_index(const torch::Tensor& frame, std::span<const Rgb> palette);
/// Centroid (x, y) in pixels of the foreground of a frame.
std::optional<PixelPoint> figure_centroid(const torch::Tensor& frame);

SwapScores synthetic_swap_diagnostics(const torch::Tensor& outputs, int content_palette_index,
                                      std::span<const PoseVector> pose_truth,
                                      std::span<const Rgb> palette);

struct GridImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major
};

/// Row 0: pose frames; row 1: keypoint heatmaps (max over channels, green);
/// one row per method output. Column 0 holds the content image on method rows.
GridImage render_swap_grid(const torch::Tensor& pose_frames, std::span<const PoseVector> poses,
                           const torch::Tensor& content_image,
                           std::span<const torch::Tensor> method_outputs);

}  // namespace vidswap
