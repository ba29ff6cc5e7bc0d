#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace vidswap {

inline constexpr int kNumKeypoints = 17;
inline constexpr int kPoseDim = 2 * kNumKeypoints + 1;  // 35

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const PixelPoint&) const = default;
};

/// 17 keypoints in normalized [-1, 1] coordinates plus a visibility flag.
/// Flattened layout: x0, y0, x1, y1, ..., x16, y16, visible.
struct PoseVector {
  std::array<PixelPoint, kNumKeypoints> keypoints{};
  bool visible = false;

  std::array<double, kPoseDim> flatten() const;
  static PoseVector from_flat(std::span<const double> flat);

  /// Coordinates in [-1, 1] and zeroed when not visible.
  bool is_valid() const;
  bool operator==(const PoseVector&) const = default;
};

/// Maps a pixel coordinate on an axis with `extent` samples to [-1, 1];
/// pixel 0 maps to -1 and pixel extent-1 maps to +1.
inline double normalize_coord(double pixel, int extent) {
  return 2.0 * pixel / static_cast<double>(extent - 1) - 1.0;
}

inline double denormalize_coord(double value, int extent) {
  return (value + 1.0) * 0.5 * static_cast<double>(extent - 1);
}

PoseVector normalize_keypoints(std::span<const PixelPoint> raw, int image_width,
                               int image_height);
std::array<PixelPoint, kNumKeypoints> denormalize_keypoints(const PoseVector& pose,
                                                            int image_width,
                                                            int image_height);
PoseVector missing_pose();

struct HeatmapConfig {
  int height = 128;
  int width = 128;
  double sigma = 4.0;
  int channels = kNumKeypoints;
  /// Scale each channel so its maximum is 1 when fed to a discriminator.
  bool peak_normalize = true;

  /// sigma = 4 px at 128x128, scaled proportionally to `resolution`.
  static HeatmapConfig for_resolution(int resolution);
  void validate() const;
};

/// Raw Gaussian densities, channel-major (channels x height x width).
struct Heatmap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

Heatmap render_heatmap(const PoseVector& pose, const HeatmapConfig& cfg);
PoseVector decode_heatmap(const Heatmap& hm, const HeatmapConfig& cfg);

/// Discriminator input for one heatmap: float tensor [channels, H, W],
/// peak-normalized per channel when cfg.peak_normalize is set.
torch::Tensor heatmap_tensor(const Heatmap& hm, const HeatmapConfig& cfg);
/// Renders and stacks a batch of poses: [B, channels, H, W].
torch::Tensor heatmap_batch(std::span<const PoseVector> poses, const HeatmapConfig& cfg);
/// Flattened pose codes as a float tensor [B, 35].
torch::Tensor pose_batch(std::span<const PoseVector> poses);

// ---------------------------------------------------------------- keypoint file

/// One line of a `.kp` file, in source pixel coordinates.
struct KeypointRecord {
  std::int64_t frame = 0;
  bool visible = false;
  std::vector<PixelPoint> kp;  // empty when not visible
  int w = 0;
  int h = 0;
};

std::string format_keypoint_record(const KeypointRecord& rec);
KeypointRecord parse_keypoint_record(const std::string& line, std::size_t line_number);

std::vector<KeypointRecord> read_keypoint_records(const std::filesystem::path& path);
void write_keypoint_records(const std::filesystem::path& path,
                            std::span<const KeypointRecord> records);
/// One PoseVector per frame, in frame order; non-detections become missing_pose().
std::vector<PoseVector> read_keypoint_file(const std::filesystem::path& path);

KeypointRecord to_keypoint_record(const PoseVector& pose, std::int64_t frame, int w, int h);

}  // namespace vidswap
