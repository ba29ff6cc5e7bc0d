#include "vidswap/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

#include "vidswap/error.hpp"
#include "vidswap/image_io.hpp"

namespace vidswap {

namespace fs = std::filesystem;
using nlohmann::json;

void Clip::validate() const {
  if (length() < 2) throw IngestionError(video_id + ": a clip needs at least 2 frames");
  if (!frames.defined() || frames.dim() != 4 || frames.size(0) != length() ||
      frames.size(1) != 3) {
    throw IngestionError(video_id + ": frames must be [T, 3, H, W] with T = pose count");
  }
}

// ------------------------------------------------------------------ sampling

Sampler::Sampler(SamplerConfig cfg) : cfg_(cfg), rng_(cfg.seed) {
  if (cfg_.window < 1) throw ConfigError("sampler.window must be >= 1");
}

void Sampler::check(std::span<const Clip> clips) const {
  if (clips.empty()) throw SamplingError("cannot sample from an empty clip set");
  for (const auto& c : clips) {
    if (c.length() <= cfg_.window) {
      throw SamplingError("sampler.window (" + std::to_string(cfg_.window) +
                          ") must be shorter than clip " + c.video_id + " (" +
                          std::to_string(c.length()) + " frames)");
    }
  }
}

FramePair Sampler::sample_pair(std::span<const Clip> clips) {
  check(clips);
  FramePair p;
  p.clip_index = rng_.index(clips.size());
  const Clip& clip = clips[p.clip_index];
  const std::int64_t n = clip.length();
  p.t = static_cast<std::int64_t>(rng_.index(static_cast<std::uint64_t>(n)));
  // Valid offsets: k in [-w, w] \ {0} with 0 <= t + k < n.
  const std::int64_t lo = std::max<std::int64_t>(-cfg_.window, -p.t);
  const std::int64_t hi = std::min<std::int64_t>(cfg_.window, n - 1 - p.t);
  const std::int64_t choices = hi - lo;  // excludes zero
  std::int64_t k = lo + rng_.integer(0, choices - 1);
  if (k >= 0) ++k;
  p.k = k;
  p.video_id = clip.video_id;
  p.anchor = clip.frame(p.t);
  p.offset = clip.frame(p.t + p.k);
  p.anchor_pose = clip.poses[p.t];
  p.offset_pose = clip.poses[p.t + p.k];
  return p;
}

NegativeSample Sampler::sample_negative_pair(std::span<const Clip> clips) {
  if (clips.size() < 2) throw SamplingError("negative sampling needs at least 2 clips");
  NegativeSample s;
  s.pair = sample_pair(clips);
  std::size_t j = rng_.index(clips.size() - 1);
  if (j >= s.pair.clip_index) ++j;
  const Clip& other = clips[j];
  s.negative_clip_index = j;
  s.negative_video_id = other.video_id;
  s.negative_t = static_cast<std::int64_t>(rng_.index(static_cast<std::uint64_t>(other.length())));
  s.negative = other.frame(s.negative_t);
  s.negative_pose = other.poses[s.negative_t];
  return s;
}

Batch sample_batch(Sampler& sampler, std::span<const Clip> clips, int batch_size,
                   bool with_negatives) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<torch::Tensor> anchors, offsets, negatives;
  Batch b;
  for (int i = 0; i < batch_size; ++i) {
    FramePair p;
    if (with_negatives) {
      auto s = sampler.sample_negative_pair(clips);
      negatives.push_back(s.negative);
      p = std::move(s.pair);
    } else {
      p = sampler.sample_pair(clips);
    }
    anchors.push_back(p.anchor);
    offsets.push_back(p.offset);
    b.anchor_poses.push_back(p.anchor_pose);
    b.offset_poses.push_back(p.offset_pose);
    b.clip_indices.push_back(p.clip_index);
  }
  b.anchor = torch::stack(anchors);
  b.offset = torch::stack(offsets);
  if (with_negatives) b.negative = torch::stack(negatives);
  return b;
}

// ------------------------------------------------------------------ disk layout

namespace {

std::string frame_name(std::int64_t t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06lld.png", static_cast<long long>(t));
  return buf;
}

/// Maps a source pixel coordinate onto a resized grid (pixel-centre aligned,
/// as the area resize does) and normalizes it for that grid.
double renormalize(double pixel, int src_extent, int dst_extent) {
  const double dst = (pixel + 0.5) * dst_extent / src_extent - 0.5;
  return std::clamp(normalize_coord(dst, dst_extent), -1.0, 1.0);
}

Clip load_video(const fs::path& root, const std::string& video_id, int resolution) {
  const fs::path kp_path = root / (video_id + ".kp");
  if (!fs::exists(kp_path)) throw IngestionError("missing keypoint file for video " + video_id);
  const auto records = read_keypoint_records(kp_path);

  std::vector<fs::path> frame_files;
  for (const auto& e : fs::directory_iterator(root / video_id)) {
    if (e.is_regular_file() && e.path().extension() == ".png") frame_files.push_back(e.path());
  }
  std::sort(frame_files.begin(), frame_files.end());
  if (frame_files.size() != records.size()) {
    throw IngestionError("video " + video_id + ": " + std::to_string(frame_files.size()) +
                         " frames but " + std::to_string(records.size()) + " keypoint records");
  }

  Clip clip;
  clip.video_id = video_id;
  std::vector<torch::Tensor> frames;
  frames.reserve(frame_files.size());
  for (const auto& f : frame_files) frames.push_back(read_frame(f, resolution));
  const int h = static_cast<int>(frames.front().size(1));
  const int w = static_cast<int>(frames.front().size(2));
  for (const auto& f : frames) {
    if (f.size(1) != h || f.size(2) != w) {
      throw IngestionError("video " + video_id + ": frames differ in resolution");
    }
  }
  clip.frames = torch::stack(frames);

  for (const auto& rec : records) {
    if (!rec.visible) {
      clip.poses.push_back(missing_pose());
      continue;
    }
    PoseVector p;
    p.visible = true;
    for (int i = 0; i < kNumKeypoints; ++i) {
      if (!std::isfinite(rec.kp[i].x) || !std::isfinite(rec.kp[i].y)) {
        throw InvalidKeypointError("video " + video_id + " frame " + std::to_string(rec.frame) +
                                   ": keypoint " + std::to_string(i) + " is not finite");
      }
      p.keypoints[i] = {renormalize(rec.kp[i].x, rec.w, w), renormalize(rec.kp[i].y, rec.h, h)};
    }
    clip.poses.push_back(p);
  }
  clip.validate();
  return clip;
}

std::vector<std::string> list_videos(const fs::path& root) {
  if (!fs::is_directory(root)) throw IngestionError("dataset directory not found: " + root.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) ids.push_back(e.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

void write_dataset(const fs::path& root, std::span<const Clip> clips, std::span<const Rgb> palette) {
  fs::create_directories(root);
  json truth = json::object();
  for (const auto& clip : clips) {
    const fs::path dir = root / clip.video_id;
    fs::create_directories(dir);
    const int h = static_cast<int>(clip.frames.size(2));
    const int w = static_cast<int>(clip.frames.size(3));
    std::vector<KeypointRecord> records;
    for (std::int64_t t = 0; t < clip.length(); ++t) {
      write_frame(dir / frame_name(t), clip.frame(t));
      records.push_back(to_keypoint_record(clip.poses[t], t, w, h));
    }
    write_keypoint_records(root / (clip.video_id + ".kp"), records);
    if (clip.palette_index) truth[clip.video_id] = *clip.palette_index;
  }
  if (!palette.empty()) {
    json j;
    j["palette"] = json::array();
    for (const auto& c : palette) j["palette"].push_back(c);
    j["clips"] = truth;
    std::ofstream(root / "synthetic.json") << j.dump(2) << '\n';
  }
}

std::optional<std::vector<Rgb>> load_synthetic_palette(const fs::path& root) {
  const fs::path p = root / "synthetic.json";
  if (!fs::exists(p)) return std::nullopt;
  std::ifstream in(p);
  const json j = json::parse(in);
  return j.at("palette").get<std::vector<Rgb>>();
}

std::vector<Clip> load_dataset(const fs::path& root, int resolution) {
  std::vector<Clip> clips;
  for (const auto& id : list_videos(root)) clips.push_back(load_video(root, id, resolution));
  if (clips.empty()) throw IngestionError("no videos found under " + root.string());

  const fs::path truth_path = root / "synthetic.json";
  if (fs::exists(truth_path)) {
    std::ifstream in(truth_path);
    const json j = json::parse(in);
    const auto& truth = j.at("clips");
    for (auto& c : clips) {
      if (truth.contains(c.video_id)) c.palette_index = truth.at(c.video_id).get<int>();
    }
  }
  return clips;
}

int kth_subject(const std::string& video_id) {
  static const std::regex re(R"(^person(\d+)_)");
  std::smatch m;
  if (!std::regex_search(video_id, m, re)) {
    throw IngestionError("cannot parse KTH subject from video id " + video_id);
  }
  return std::stoi(m[1].str());
}

bool kth_in_split(int subject, Split split) {
  return split == Split::kTrain ? (subject >= 1 && subject <= 16)
                                : (subject >= 17 && subject <= 25);
}

std::vector<Clip> load_kth(const fs::path& root, Split split, int resolution) {
  std::vector<Clip> clips;
  for (const auto& id : list_videos(root)) {
    if (!kth_in_split(kth_subject(id), split)) continue;
    clips.push_back(load_video(root, id, resolution));
  }
  if (clips.empty()) {
    throw IngestionError(std::string("KTH ") + (split == Split::kTrain ? "train" : "test") +
                         " split is empty under " + root.string());
  }
  return clips;
}

}  // namespace vidswap
