#include "vidswap/pose_codec.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vidswap/error.hpp"
#include "vidswap/log.hpp"

namespace vidswap {

using nlohmann::json;

std::array<double, kPoseDim> PoseVector::flatten() const {
  std::array<double, kPoseDim> out{};
  for (int i = 0; i < kNumKeypoints; ++i) {
    out[2 * i] = keypoints[i].x;
    out[2 * i + 1] = keypoints[i].y;
  }
  out[kPoseDim - 1] = visible ? 1.0 : 0.0;
  return out;
}

PoseVector PoseVector::from_flat(std::span<const double> flat) {
  if (flat.size() != kPoseDim) {
    throw FormatError("pose vector must have " + std::to_string(kPoseDim) +
                      " entries, got " + std::to_string(flat.size()));
  }
  PoseVector p;
  for (int i = 0; i < kNumKeypoints; ++i) {
    p.keypoints[i] = {flat[2 * i], flat[2 * i + 1]};
  }
  p.visible = flat[kPoseDim - 1] > 0.5;
  return p;
}

bool PoseVector::is_valid() const {
  for (const auto& kp : keypoints) {
    if (!std::isfinite(kp.x) || !std::isfinite(kp.y)) return false;
    if (visible) {
      if (kp.x < -1.0 || kp.x > 1.0 || kp.y < -1.0 || kp.y > 1.0) return false;
    } else if (kp.x != 0.0 || kp.y != 0.0) {
      return false;
    }
  }
  return true;
}

PoseVector normalize_keypoints(std::span<const PixelPoint> raw, int image_width,
                               int image_height) {
  if (raw.size() != kNumKeypoints) {
    throw FormatError("expected " + std::to_string(kNumKeypoints) + " keypoints, got " +
                      std::to_string(raw.size()));
  }
  if (image_width <= 1 || image_height <= 1) {
    throw InvalidKeypointError("image size must exceed 1x1");
  }
  PoseVector p;
  p.visible = true;
  for (int i = 0; i < kNumKeypoints; ++i) {
    if (!std::isfinite(raw[i].x) || !std::isfinite(raw[i].y)) {
      throw InvalidKeypointError("keypoint " + std::to_string(i) + " is not finite");
    }
    p.keypoints[i] = {normalize_coord(raw[i].x, image_width),
                      normalize_coord(raw[i].y, image_height)};
  }
  return p;
}

std::array<PixelPoint, kNumKeypoints> denormalize_keypoints(const PoseVector& pose,
                                                            int image_width,
                                                            int image_height) {
  std::array<PixelPoint, kNumKeypoints> out{};
  for (int i = 0; i < kNumKeypoints; ++i) {
    out[i] = {denormalize_coord(pose.keypoints[i].x, image_width),
              denormalize_coord(pose.keypoints[i].y, image_height)};
  }
  return out;
}

PoseVector missing_pose() { return PoseVector{}; }

HeatmapConfig HeatmapConfig::for_resolution(int resolution) {
  HeatmapConfig cfg;
  cfg.height = resolution;
  cfg.width = resolution;
  cfg.sigma = 4.0 * static_cast<double>(resolution) / 128.0;
  return cfg;
}

void HeatmapConfig::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("heatmap.sigma must be > 0");
  if (height < 8 || width < 8) throw ConfigError("heatmap height and width must be >= 8");
  if (channels != kNumKeypoints) {
    throw ConfigError("heatmap.channels must be " + std::to_string(kNumKeypoints));
  }
}

Heatmap render_heatmap(const PoseVector& pose, const HeatmapConfig& cfg) {
  cfg.validate();
  Heatmap hm{cfg.channels, cfg.height, cfg.width,
             std::vector<double>(static_cast<std::size_t>(cfg.channels) * cfg.height * cfg.width,
                                 0.0)};
  if (!pose.visible) return hm;

  // The isotropic density factorizes into per-axis terms.
  const double inv_two_var = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  const double norm = 1.0 / (2.0 * std::numbers::pi * cfg.sigma * cfg.sigma);
  std::vector<double> gx(cfg.width), gy(cfg.height);
  for (int c = 0; c < cfg.channels; ++c) {
    const auto& kp = pose.keypoints[c];
    if (kp.x < -1.0 || kp.x > 1.0 || kp.y < -1.0 || kp.y > 1.0) {
      log::debug("keypoint " + std::to_string(c) + " outside [-1, 1] (" + std::to_string(kp.x) +
                 ", " + std::to_string(kp.y) + "); rendering clipped tail");
    }
    const double px = denormalize_coord(kp.x, cfg.width);
    const double py = denormalize_coord(kp.y, cfg.height);
    for (int x = 0; x < cfg.width; ++x) {
      const double d = x - px;
      gx[x] = std::exp(-d * d * inv_two_var);
    }
    for (int y = 0; y < cfg.height; ++y) {
      const double d = y - py;
      gy[y] = norm * std::exp(-d * d * inv_two_var);
    }
    double* plane = hm.values.data() + static_cast<std::size_t>(c) * cfg.height * cfg.width;
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) plane[y * cfg.width + x] = gy[y] * gx[x];
    }
  }
  return hm;
}

PoseVector decode_heatmap(const Heatmap& hm, const HeatmapConfig& cfg) {
  if (hm.channels != cfg.channels || hm.height != cfg.height || hm.width != cfg.width) {
    throw ConfigError("heatmap shape does not match config");
  }
  const std::size_t plane = static_cast<std::size_t>(hm.height) * hm.width;
  bool any_nonzero = false;
  PoseVector p;
  for (int c = 0; c < hm.channels; ++c) {
    const double* v = hm.values.data() + c * plane;
    std::size_t best = 0;
    for (std::size_t i = 1; i < plane; ++i) {
      if (v[i] > v[best]) best = i;
    }
    if (v[best] != 0.0) any_nonzero = true;
    const int y = static_cast<int>(best / hm.width);
    const int x = static_cast<int>(best % hm.width);
    p.keypoints[c] = {normalize_coord(x, hm.width), normalize_coord(y, hm.height)};
  }
  if (!any_nonzero) return missing_pose();
  p.visible = true;
  return p;
}

torch::Tensor heatmap_tensor(const Heatmap& hm, const HeatmapConfig& cfg) {
  auto out = torch::empty({hm.channels, hm.height, hm.width}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  const std::size_t plane = static_cast<std::size_t>(hm.height) * hm.width;
  for (int c = 0; c < hm.channels; ++c) {
    const double* src = hm.values.data() + c * plane;
    double scale = 1.0;
    if (cfg.peak_normalize) {
      double peak = 0.0;
      for (std::size_t i = 0; i < plane; ++i) peak = std::max(peak, src[i]);
      if (peak > 0.0) scale = 1.0 / peak;
    }
    for (std::size_t i = 0; i < plane; ++i) dst[c * plane + i] = static_cast<float>(src[i] * scale);
  }
  return out;
}

torch::Tensor heatmap_batch(std::span<const PoseVector> poses, const HeatmapConfig& cfg) {
  std::vector<torch::Tensor> maps;
  maps.reserve(poses.size());
  for (const auto& p : poses) maps.push_back(heatmap_tensor(render_heatmap(p, cfg), cfg));
  return torch::stack(maps);
}

torch::Tensor pose_batch(std::span<const PoseVector> poses) {
  auto out = torch::empty({static_cast<std::int64_t>(poses.size()), kPoseDim}, torch::kFloat32);
  auto acc = out.accessor<float, 2>();
  for (std::size_t b = 0; b < poses.size(); ++b) {
    const auto flat = poses[b].flatten();
    for (int i = 0; i < kPoseDim; ++i) acc[b][i] = static_cast<float>(flat[i]);
  }
  return out;
}

// ---------------------------------------------------------------- keypoint file

std::string format_keypoint_record(const KeypointRecord& rec) {
  json j;
  j["frame"] = rec.frame;
  j["visible"] = rec.visible ? 1 : 0;
  if (rec.visible) {
    json kp = json::array();
    for (const auto& p : rec.kp) kp.push_back({p.x, p.y});
    j["kp"] = std::move(kp);
  }
  j["w"] = rec.w;
  j["h"] = rec.h;
  return j.dump();
}

KeypointRecord parse_keypoint_record(const std::string& line, std::size_t line_number) {
  const std::string where = "line " + std::to_string(line_number) + ": ";
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(where + "malformed record (" + e.what() + ")");
  }
  if (!j.is_object()) throw FormatError(where + "record is not an object");
  KeypointRecord rec;
  try {
    rec.frame = j.at("frame").get<std::int64_t>();
    const int visible = j.at("visible").get<int>();
    if (visible != 0 && visible != 1) throw FormatError(where + "visible must be 0 or 1");
    rec.visible = visible == 1;
    rec.w = j.at("w").get<int>();
    rec.h = j.at("h").get<int>();
    if (rec.visible) {
      const auto& kp = j.at("kp");
      if (!kp.is_array()) throw FormatError(where + "kp must be an array");
      if (kp.size() != kNumKeypoints) {
        throw FormatError(where + "expected " + std::to_string(kNumKeypoints) +
                          " keypoints, got " + std::to_string(kp.size()));
      }
      for (const auto& pair : kp) {
        if (!pair.is_array() || pair.size() != 2) {
          throw FormatError(where + "keypoint must be an [x, y] pair");
        }
        rec.kp.push_back({pair[0].get<double>(), pair[1].get<double>()});
      }
    } else if (j.contains("kp")) {
      throw FormatError(where + "kp must be omitted when visible = 0");
    }
  } catch (const json::exception& e) {
    throw FormatError(where + "malformed record (" + e.what() + ")");
  }
  if (rec.w <= 1 || rec.h <= 1) throw FormatError(where + "w and h must exceed 1");
  return rec;
}

std::vector<KeypointRecord> read_keypoint_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FilesystemError("cannot open keypoint file " + path.string());
  std::vector<KeypointRecord> records;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    auto rec = parse_keypoint_record(line, line_number);
    if (rec.frame != static_cast<std::int64_t>(records.size())) {
      throw FormatError("line " + std::to_string(line_number) + ": expected frame " +
                        std::to_string(records.size()) + ", got " + std::to_string(rec.frame));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_keypoint_records(const std::filesystem::path& path,
                            std::span<const KeypointRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FilesystemError("cannot write keypoint file " + path.string());
  for (const auto& rec : records) out << format_keypoint_record(rec) << '\n';
}

std::vector<PoseVector> read_keypoint_file(const std::filesystem::path& path) {
  std::vector<PoseVector> poses;
  for (const auto& rec : read_keypoint_records(path)) {
    poses.push_back(rec.visible ? normalize_keypoints(rec.kp, rec.w, rec.h) : missing_pose());
  }
  return poses;
}

KeypointRecord to_keypoint_record(const PoseVector& pose, std::int64_t frame, int w, int h) {
  KeypointRecord rec;
  rec.frame = frame;
  rec.visible = pose.visible;
  rec.w = w;
  rec.h = h;
  if (pose.visible) {
    const auto px = denormalize_keypoints(pose, w, h);
    rec.kp.assign(px.begin(), px.end());
  }
  return rec;
}

}  // namespace vidswap
