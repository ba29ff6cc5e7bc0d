#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "vidswap/pose_codec.hpp"
#include "vidswap/random.hpp"

namespace vidswap {

using Rgb = std::array<int, 3>;

/// One single-subject video: frames [T, 3, H, W] in [-1, 1] and one pose per frame.
struct Clip {
  std::string video_id;
  torch::Tensor frames;
  std::vector<PoseVector> poses;
  double fps = 25.0;
  /// Palette entry of the subject; only known for synthetic clips.
  std::optional<int> palette_index;

  std::int64_t length() const { return static_cast<std::int64_t>(poses.size()); }
  int resolution() const { return static_cast<int>(frames.size(2)); }
  torch::Tensor frame(std::int64_t t) const { return frames[t]; }
  void validate() const;
};

// ------------------------------------------------------------------ sampling

struct SamplerConfig {
  int window = 3;
  std::uint64_t seed = 0;
};

struct FramePair {
  std::size_t clip_index = 0;
  std::string video_id;
  std::int64_t t = 0;
  std::int64_t k = 0;
  torch::Tensor anchor;  // frame t
  torch::Tensor offset;  // frame t + k
  PoseVector anchor_pose;
  PoseVector offset_pose;
};

struct NegativeSample {
  FramePair pair;
  std::size_t negative_clip_index = 0;
  std::string negative_video_id;
  std::int64_t negative_t = 0;
  torch::Tensor negative;
  PoseVector negative_pose;
};

/// Draws temporal pairs (t, t+k), 0 < |k| <= window. Owns its random
/// stream; use one sampler per worker.
class Sampler {
 public:
  explicit Sampler(SamplerConfig cfg);

  FramePair sample_pair(std::span<const Clip> clips);
  NegativeSample sample_negative_pair(std::span<const Clip> clips);

  const SamplerConfig& config() const { return cfg_; }
  std::string state() const { return rng_.state(); }
  void restore(const std::string& state) { rng_.restore(state); }

 private:
  void check(std::span<const Clip> clips) const;

  SamplerConfig cfg_;
  Rng rng_;
};

/// Stacked training batch. Frames are [B, 3, H, W].
struct Batch {
  torch::Tensor anchor;
  torch::Tensor offset;
  torch::Tensor negative;  // undefined unless sampled with negatives
  std::vector<PoseVector> anchor_poses;
  std::vector<PoseVector> offset_poses;
  std::vector<std::size_t> clip_indices;

  std::int64_t size() const { return static_cast<std::int64_t>(anchor_poses.size()); }
};

Batch sample_batch(Sampler& sampler, std::span<const Clip> clips, int batch_size,
                   bool with_negatives);

// ------------------------------------------------------------------ synthetic

struct MotionConfig {
  /// Horizontal travel of the body centre as a fraction of the frame width.
  double sway_min = 0.08;
  double sway_max = 0.18;
  /// Limb swing amplitude in radians.
  double swing_min = 0.3;
  double swing_max = 0.9;
  /// Angular frequency per frame.
  double frequency_min = 0.15;
  double frequency_max = 0.45;
};

struct SyntheticConfig {
  int n_clips = 500;
  int frames_per_clip = 16;
  int resolution = 64;
  int n_keypoints = kNumKeypoints;
  std::vector<Rgb> palette = {{230, 40, 40},  {40, 200, 60},  {60, 90, 240},
                              {235, 215, 40}, {40, 215, 220}, {220, 60, 220}};
  MotionConfig motion;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Stick-figure limbs as keypoint index pairs (COCO-17 topology).
std::span<const std::array<int, 2>> skeleton_limbs();

/// Limb half-thickness and head radius, in pixels, at a given resolution.
double limb_radius(int resolution);
double head_radius(int resolution);

/// Rasterizes the figure for `pose` as a foreground mask (row-major H x W).
std::vector<std::uint8_t> render_figure_mask(const PoseVector& pose, int resolution);

/// Procedural parameters and joint tracks (pixels) of one synthetic clip.
struct SyntheticClipSpec {
  std::string video_id;
  int palette_index = 0;
  std::vector<std::array<PixelPoint, kNumKeypoints>> joints;  // one per frame
};

SyntheticClipSpec synthetic_clip_spec(const SyntheticConfig& cfg, int clip_index);

std::vector<Clip> generate_synthetic(const SyntheticConfig& cfg);

// ------------------------------------------------------------------ disk layout

/// Writes `<root>/<video_id>/frame_%06d.png` plus `<root>/<video_id>.kp`.
/// Synthetic ground truth (palette) goes to `<root>/synthetic.json`.
void write_dataset(const std::filesystem::path& root, std::span<const Clip> clips,
                   std::span<const Rgb> palette = {});

/// Loads every video in the standard layout, sorted by video id.
std::vector<Clip> load_dataset(const std::filesystem::path& root, int resolution = 0);

/// Palette stored alongside a synthetic dataset, if any.
std::optional<std::vector<Rgb>> load_synthetic_palette(const std::filesystem::path& root);

enum class Split { kTrain, kTest };

/// KTH subject id from a video id such as `person07_walking_d1`.
int kth_subject(const std::string& video_id);
bool kth_in_split(int subject, Split split);

std::vector<Clip> load_kth(const std::filesystem::path& root, Split split, int resolution);

}  // namespace vidswap
