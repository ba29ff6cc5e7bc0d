#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vidswap/data.hpp"
#include "vidswap/error.hpp"

namespace vidswap {

namespace {

// COCO-17 keypoint indices.
enum Joint : int {
  kNose, kLeftEye, kRightEye, kLeftEar, kRightEar,
  kLeftShoulder, kRightShoulder, kLeftElbow, kRightElbow, kLeftWrist, kRightWrist,
  kLeftHip, kRightHip, kLeftKnee, kRightKnee, kLeftAnkle, kRightAnkle,
};

constexpr std::array<std::array<int, 2>, 14> kLimbs = {{
    {kLeftShoulder, kLeftElbow}, {kLeftElbow, kLeftWrist},
    {kRightShoulder, kRightElbow}, {kRightElbow, kRightWrist},
    {kLeftHip, kLeftKnee}, {kLeftKnee, kLeftAnkle},
    {kRightHip, kRightKnee}, {kRightKnee, kRightAnkle},
    {kLeftShoulder, kRightShoulder}, {kLeftHip, kRightHip},
    {kLeftShoulder, kLeftHip}, {kRightShoulder, kRightHip},
    {kNose, kLeftShoulder}, {kNose, kRightShoulder},
}};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

PixelPoint along(PixelPoint from, double angle, double length) {
  // angle measured from straight down, image y axis pointing down
  return {from.x + length * std::sin(angle), from.y + length * std::cos(angle)};
}

double segment_distance_sq(double px, double py, PixelPoint a, PixelPoint b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len_sq = dx * dx + dy * dy;
  double u = len_sq > 0.0 ? ((px - a.x) * dx + (py - a.y) * dy) / len_sq : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  const double ex = a.x + u * dx - px, ey = a.y + u * dy - py;
  return ex * ex + ey * ey;
}

}  // namespace

std::span<const std::array<int, 2>> skeleton_limbs() { return kLimbs; }

double limb_radius(int resolution) { return std::max(1.0, resolution / 32.0); }
double head_radius(int resolution) { return std::max(2.0, resolution / 14.0); }

void SyntheticConfig::validate() const {
  if (n_clips < 1) throw ConfigError("synthetic.n_clips must be >= 1");
  if (frames_per_clip < 2) throw ConfigError("synthetic.frames_per_clip must be >= 2");
  if (resolution < 32) throw ConfigError("synthetic.resolution must be >= 32");
  if (n_keypoints != kNumKeypoints) {
    throw ConfigError("synthetic.n_keypoints must be " + std::to_string(kNumKeypoints));
  }
  if (palette.empty()) throw ConfigError("synthetic.palette must not be empty");
  for (std::size_t i = 0; i < palette.size(); ++i) {
    for (int c : palette[i]) {
      if (c < 0 || c > 255) {
        throw ConfigError("synthetic.palette[" + std::to_string(i) +
                          "]: channel values must lie in [0, 255]");
      }
    }
    if (palette[i] == Rgb{0, 0, 0}) {
      throw ConfigError("synthetic.palette[" + std::to_string(i) +
                        "]: black is reserved for the background");
    }
  }
  const auto& m = motion;
  if (!(m.sway_min >= 0 && m.sway_min <= m.sway_max && m.swing_min >= 0 &&
        m.swing_min <= m.swing_max && m.frequency_min >= 0 && m.frequency_min <= m.frequency_max)) {
    throw ConfigError("synthetic.motion ranges must satisfy 0 <= min <= max");
  }
}

SyntheticClipSpec synthetic_clip_spec(const SyntheticConfig& cfg, int clip_index) {
  Rng rng(splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(clip_index))));
  const double res = cfg.resolution;
  const auto& m = cfg.motion;

  SyntheticClipSpec spec;
  char id[32];
  std::snprintf(id, sizeof(id), "synth%05d", clip_index);
  spec.video_id = id;
  spec.palette_index = static_cast<int>(rng.index(cfg.palette.size()));

  const double height = res * rng.uniform(0.5, 0.62);
  const double sway = res * rng.uniform(m.sway_min, m.sway_max);
  const double sway_freq = rng.uniform(m.frequency_min, m.frequency_max) * 0.6;
  const double sway_phase = rng.uniform(0.0, 2.0 * M_PI);
  const double swing = rng.uniform(m.swing_min, m.swing_max);
  const double freq = rng.uniform(m.frequency_min, m.frequency_max);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  const double facing = rng.unit() < 0.5 ? -1.0 : 1.0;

  for (int t = 0; t < cfg.frames_per_clip; ++t) {
    const double s = std::sin(freq * t + phase);
    const double c = std::cos(freq * t + phase);
    std::array<PixelPoint, kNumKeypoints> j{};
    const PixelPoint hip{sway * std::sin(sway_freq * t + sway_phase),
                         0.02 * res * std::sin(2.0 * freq * t)};
    const PixelPoint neck{hip.x, hip.y - 0.32 * height};
    j[kNose] = {neck.x + facing * 0.02 * height, neck.y - 0.12 * height};
    j[kLeftEye] = {j[kNose].x - 0.03 * height, j[kNose].y - 0.025 * height};
    j[kRightEye] = {j[kNose].x + 0.03 * height, j[kNose].y - 0.025 * height};
    j[kLeftEar] = {j[kNose].x - 0.06 * height, j[kNose].y - 0.01 * height};
    j[kRightEar] = {j[kNose].x + 0.06 * height, j[kNose].y - 0.01 * height};
    j[kLeftShoulder] = {neck.x - 0.1 * height, neck.y};
    j[kRightShoulder] = {neck.x + 0.1 * height, neck.y};
    j[kLeftHip] = {hip.x - 0.06 * height, hip.y};
    j[kRightHip] = {hip.x + 0.06 * height, hip.y};

    j[kLeftElbow] = along(j[kLeftShoulder], swing * s, 0.17 * height);
    j[kLeftWrist] = along(j[kLeftElbow], swing * s + facing * (0.3 + 0.3 * c), 0.15 * height);
    j[kRightElbow] = along(j[kRightShoulder], -swing * s, 0.17 * height);
    j[kRightWrist] = along(j[kRightElbow], -swing * s + facing * (0.3 - 0.3 * c), 0.15 * height);

    j[kLeftKnee] = along(j[kLeftHip], -0.7 * swing * s, 0.24 * height);
    j[kLeftAnkle] = along(j[kLeftKnee], -0.7 * swing * s - facing * 0.5 * std::max(0.0, c),
                          0.24 * height);
    j[kRightKnee] = along(j[kRightHip], 0.7 * swing * s, 0.24 * height);
    j[kRightAnkle] = along(j[kRightKnee], 0.7 * swing * s - facing * 0.5 * std::max(0.0, -c),
                           0.24 * height);
    spec.joints.push_back(j);
  }

  // Place the whole track inside the frame, keeping a head-sized margin.
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (const auto& j : spec.joints) {
    for (const auto& p : j) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
  }
  const double margin = head_radius(cfg.resolution) + 1.0;
  const double room_x = (res - 1.0 - 2.0 * margin) - (max_x - min_x);
  const double room_y = (res - 1.0 - 2.0 * margin) - (max_y - min_y);
  const double off_x = margin - min_x + (room_x > 0 ? rng.uniform(0.0, room_x) : room_x / 2);
  const double off_y = margin - min_y + (room_y > 0 ? rng.uniform(0.0, room_y) : room_y / 2);
  for (auto& j : spec.joints) {
    for (auto& p : j) {
      p.x = std::clamp(p.x + off_x, 0.0, res - 1.0);
      p.y = std::clamp(p.y + off_y, 0.0, res - 1.0);
    }
  }
  return spec;
}

std::vector<std::uint8_t> render_figure_mask(const PoseVector& pose, int resolution) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(resolution) * resolution, 0);
  if (!pose.visible) return mask;
  const auto j = denormalize_keypoints(pose, resolution, resolution);
  const double limb_sq = limb_radius(resolution) * limb_radius(resolution);
  const double head_sq = head_radius(resolution) * head_radius(resolution);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const double hx = x - j[kNose].x, hy = y - j[kNose].y;
      bool on = hx * hx + hy * hy <= head_sq;
      for (std::size_t l = 0; !on && l < kLimbs.size(); ++l) {
        on = segment_distance_sq(x, y, j[kLimbs[l][0]], j[kLimbs[l][1]]) <= limb_sq;
      }
      if (on) mask[static_cast<std::size_t>(y) * resolution + x] = 1;
    }
  }
  return mask;
}

std::vector<Clip> generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const int res = cfg.resolution;
  std::vector<Clip> clips;
  clips.reserve(cfg.n_clips);
  for (int i = 0; i < cfg.n_clips; ++i) {
    const auto spec = synthetic_clip_spec(cfg, i);
    Clip clip;
    clip.video_id = spec.video_id;
    clip.palette_index = spec.palette_index;
    clip.frames = torch::full({cfg.frames_per_clip, 3, res, res}, -1.0f);
    const Rgb color = cfg.palette[spec.palette_index];
    auto acc = clip.frames.accessor<float, 4>();
    for (int t = 0; t < cfg.frames_per_clip; ++t) {
      const auto pose = normalize_keypoints(spec.joints[t], res, res);
      clip.poses.push_back(pose);
      const auto mask = render_figure_mask(pose, res);
      for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
          if (!mask[static_cast<std::size_t>(y) * res + x]) continue;
          for (int ch = 0; ch < 3; ++ch) {
            acc[t][ch][y][x] = static_cast<float>(color[ch] / 127.5 - 1.0);
          }
        }
      }
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace vidswap
