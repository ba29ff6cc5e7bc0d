#include "vidswap/swap_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "vidswap/error.hpp"
#include "vidswap/image_io.hpp"
#include "vidswap/random.hpp"
#include "vidswap/train.hpp"

namespace vidswap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kChunk = 32;
// Foreground: brightest channel above this value (in [-1, 1] units).
constexpr float kForegroundLevel = -0.4f;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void check_resolution(const FrameGenerator& gen, int res, const std::string& what) {
  if (gen.resolution() != 0 && gen.resolution() != res) {
    throw ConfigError("resolution mismatch: checkpoint expects " + std::to_string(gen.resolution()) +
                      "x" + std::to_string(gen.resolution()) + " but " + what + " is " +
                      std::to_string(res) + "x" + std::to_string(res));
  }
}

}  // namespace

torch::Tensor NetworkGenerator::generate(const torch::Tensor& content, const torch::Tensor& pose_frames,
                                         std::span<const PoseVector> poses) const {
  torch::NoGradGuard guard;
  return nets_.generate(content, pose_frames, poses).to(torch::kFloat32);
}

CheckpointArchive identity_oracle_checkpoint() {
  CheckpointArchive a;
  a.metadata["method"] = "identity_oracle";
  return a;
}

std::unique_ptr<FrameGenerator> load_generator(const CheckpointArchive& archive) {
  if (archive.metadata.value("method", std::string()) == "identity_oracle") {
    return std::make_unique<IdentityOracle>();
  }
  return std::make_unique<NetworkGenerator>(load_networks(archive));
}

std::unique_ptr<FrameGenerator> load_generator(const fs::path& checkpoint) {
  return load_generator(read_checkpoint(checkpoint));
}

// ------------------------------------------------------------------ report

json to_json(const EvalReport& r) {
  json j{{"method", r.method}, {"mse", r.mse}, {"n_pairs", r.n_pairs}};
  j["per_clip_mse"] = r.per_clip_mse;
  if (r.swap_scores) {
    j["content_score"] = r.swap_scores->content_score;
    j["pose_error_px"] = r.swap_scores->pose_error_px;
    j["diagnostic_frames"] = r.swap_scores->frames;
  }
  if (!r.invisible_frames.empty()) j["invisible_frames"] = r.invisible_frames;
  return j;
}

EvalReport eval_report_from_json(const json& j) {
  try {
    EvalReport r;
    r.method = j.at("method").get<std::string>();
    r.mse = j.at("mse").get<double>();
    r.n_pairs = j.at("n_pairs").get<std::int64_t>();
    r.per_clip_mse = j.at("per_clip_mse").get<std::map<std::string, double>>();
    if (j.contains("content_score")) {
      r.swap_scores = SwapScores{j.at("content_score").get<double>(),
                                 j.at("pose_error_px").get<double>(),
                                 j.at("diagnostic_frames").get<std::int64_t>()};
    }
    if (j.contains("invisible_frames")) {
      r.invisible_frames = j.at("invisible_frames").get<std::vector<std::int64_t>>();
    }
    if (r.mse < 0.0) throw FormatError("report: mse must be >= 0");
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report does not match the schema: ") + e.what());
  }
}

void write_report(const fs::path& path, const EvalReport& r) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FilesystemError("cannot write report " + path.string());
  out << to_json(r).dump(2) << '\n';
}

EvalReport read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FilesystemError("cannot open report " + path.string());
  try {
    return eval_report_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
}

// ------------------------------------------------------------------ evaluation

EvalReport evaluate_mse(const FrameGenerator& gen, std::span<const Clip> clips, const EvalOptions& opts,
                        std::span<const Rgb> palette) {
  if (clips.empty()) throw ConfigError("evaluate_mse: empty dataset");
  if (opts.pairs_per_clip < 1 || opts.window < 1) {
    throw ConfigError("evaluate_mse: pairs_per_clip and window must be >= 1");
  }
  EvalReport report;
  report.method = gen.method_id();

  for (const auto& clip : clips) {
    check_resolution(gen, clip.resolution(), "clip " + clip.video_id);
    // Pairs depend only on (seed, video id), not on clip order.
    Rng rng(opts.seed ^ fnv1a(clip.video_id));
    const std::int64_t n = clip.length();
    const std::int64_t window = std::min<std::int64_t>(opts.window, n - 1);
    std::vector<std::int64_t> ts, sources;
    for (int i = 0; i < opts.pairs_per_clip; ++i) {
      const std::int64_t t = static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(n)));
      const std::int64_t lo = std::max(-window, -t);
      const std::int64_t hi = std::min(window, n - 1 - t);
      std::int64_t k = lo + rng.integer(0, hi - lo - 1);
      if (k >= 0) ++k;
      ts.push_back(t);
      sources.push_back(opts.temporal_shift ? t + k : t);
    }
    auto idx_t = torch::tensor(ts, torch::kInt64);
    auto idx_s = torch::tensor(sources, torch::kInt64);
    const auto targets = clip.frames.index_select(0, idx_t);
    const auto content = clip.frames.index_select(0, idx_s);
    std::vector<PoseVector> poses;
    for (auto t : ts) poses.push_back(clip.poses[t]);
    const auto generated = gen.generate(content, targets, poses);
    const auto per_pair = (targets.to(torch::kFloat64) - generated.to(torch::kFloat64))
                              .pow(2).flatten(1).mean(1);
    report.per_clip_mse[clip.video_id] = per_pair.mean().item<double>();
    report.n_pairs += opts.pairs_per_clip;
  }
  double sum = 0.0;
  for (const auto& [id, v] : report.per_clip_mse) sum += v;  // sorted by video id
  report.mse = sum / static_cast<double>(report.per_clip_mse.size());

  if (!palette.empty()) {
    std::vector<const Clip*> labelled;
    for (const auto& c : clips) {
      if (c.palette_index) labelled.push_back(&c);
    }
    std::sort(labelled.begin(), labelled.end(),
              [](const Clip* a, const Clip* b) { return a->video_id < b->video_id; });
    double content = 0.0, pose = 0.0;
    std::int64_t frames = 0;
    int pairs = 0;
    for (std::size_t i = 0; i < labelled.size() && pairs < opts.diagnostic_pairs; ++i) {
      const Clip& pose_clip = *labelled[i];
      // Content donor: the next clip (cyclically) with a different colour.
      const Clip* donor = nullptr;
      for (std::size_t d = 1; d < labelled.size() && !donor; ++d) {
        const Clip* c = labelled[(i + d) % labelled.size()];
        if (*c->palette_index != *pose_clip.palette_index) donor = c;
      }
      if (!donor) continue;
      const auto out = swap(gen, pose_clip, donor->frame(0));
      const auto s = synthetic_swap_diagnostics(out.frames, *donor->palette_index, pose_clip.poses,
                                                palette);
      content += s.content_score * s.frames;
      pose += s.pose_error_px * s.frames;
      frames += s.frames;
      ++pairs;
    }
    if (frames > 0) report.swap_scores = SwapScores{content / frames, pose / frames, frames};
  }
  return report;
}

// ------------------------------------------------------------------ swapping

SwapResult swap(const FrameGenerator& gen, const Clip& pose_video, const torch::Tensor& content_image) {
  if (content_image.dim() != 3 || content_image.size(0) != 3) {
    throw ConfigError("content image must be [3, H, W]");
  }
  const int res = pose_video.resolution();
  check_resolution(gen, res, "pose video " + pose_video.video_id);
  check_resolution(gen, static_cast<int>(content_image.size(1)), "content image");
  if (content_image.size(1) != res || content_image.size(2) != res) {
    throw ConfigError("content image and pose video resolutions differ");
  }
  const bool any_visible = std::any_of(pose_video.poses.begin(), pose_video.poses.end(),
                                       [](const PoseVector& p) { return p.visible; });
  if (!any_visible) {
    throw UserError("pose video " + pose_video.video_id + " has no frame with a visible pose");
  }

  SwapResult result;
  std::vector<torch::Tensor> chunks;
  const std::int64_t n = pose_video.length();
  for (std::int64_t start = 0; start < n; start += kChunk) {
    const std::int64_t len = std::min<std::int64_t>(kChunk, n - start);
    const auto pose_frames = pose_video.frames.narrow(0, start, len);
    const auto content = content_image.unsqueeze(0).expand({len, -1, -1, -1}).contiguous();
    std::span<const PoseVector> poses(pose_video.poses.data() + start, static_cast<std::size_t>(len));
    chunks.push_back(gen.generate(content, pose_frames, poses));
  }
  for (std::int64_t t = 0; t < n; ++t) {
    if (!pose_video.poses[t].visible) result.invisible_frames.push_back(t);
  }
  result.frames = torch::cat(chunks, 0);
  return result;
}

void write_swap_frames(const fs::path& out_dir, const SwapResult& result, double fps) {
  const fs::path frames = out_dir / "frames";
  fs::create_directories(frames);
  for (std::int64_t t = 0; t < result.frames.size(0); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(t));
    write_frame(frames / name, result.frames[t]);
  }
  if (std::system("command -v ffmpeg >/dev/null 2>&1") == 0) {
    const std::string cmd = "ffmpeg -loglevel error -y -framerate " + std::to_string(fps) + " -i '" +
                            (frames / "%06d.png").string() + "' -pix_fmt yuv420p '" +
                            (out_dir / "video.mp4").string() + "'";
    if (std::system(cmd.c_str()) != 0) {
      // Frames are the primary artifact; a failed mux is not fatal.
      std::fprintf(stderr, "warning: ffmpeg failed, frames only\n");
    }
  }
}

int dominant_palette_index(const torch::Tensor& frame, std::span<const Rgb> palette) {
  const auto f = frame.detach().to(torch::kFloat32).contiguous();
  const int h = static_cast<int>(f.size(1)), w = static_cast<int>(f.size(2));
  const float* d = f.data_ptr<float>();
  const int plane = h * w;
  std::vector<std::int64_t> votes(palette.size(), 0);
  bool any = false;
  for (int i = 0; i < plane; ++i) {
    const float r = d[i], g = d[plane + i], b = d[2 * plane + i];
    if (std::max({r, g, b}) <= kForegroundLevel) continue;
    any = true;
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t p = 0; p < palette.size(); ++p) {
      const double dr = (r + 1.0) * 127.5 - palette[p][0];
      const double dg = (g + 1.0) * 127.5 - palette[p][1];
      const double db = (b + 1.0) * 127.5 - palette[p][2];
      const double dist = dr * dr + dg * dg + db * db;
      if (dist < best_d) {
        best_d = dist;
        best = p;
      }
    }
    ++votes[best];
  }
  if (!any) return -1;
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

std::optional<PixelPoint> figure_centroid(const torch::Tensor& frame) {
  const auto f = frame.detach().to(torch::kFloat32).contiguous();
  const int h = static_cast<int>(f.size(1)), w = static_cast<int>(f.size(2));
  const float* d = f.data_ptr<float>();
  const int plane = h * w;
  double sx = 0.0, sy = 0.0;
  std::int64_t n = 0;
  for (int i = 0; i < plane; ++i) {
    if (std::max({d[i], d[plane + i], d[2 * plane + i]}) <= kForegroundLevel) continue;
    sx += i % w;
    sy += i / w;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return PixelPoint{sx / n, sy / n};
}

SwapScores synthetic_swap_diagnostics(const torch::Tensor& outputs, int content_palette_index,
                                      std::span<const PoseVector> pose_truth,
                                      std::span<const Rgb> palette) {
  if (outputs.size(0) != static_cast<std::int64_t>(pose_truth.size())) {
    throw ConfigError("diagnostics: output count differs from pose count");
  }
  const int res = static_cast<int>(outputs.size(2));
  SwapScores s;
  std::int64_t matched = 0, scored = 0;
  double err = 0.0;
  for (std::int64_t t = 0; t < outputs.size(0); ++t) {
    ++s.frames;
    if (dominant_palette_index(outputs[t], palette) == content_palette_index) ++matched;
    if (!pose_truth[t].visible) continue;
    const auto mask = render_figure_mask(pose_truth[t], res);
    double gx = 0.0, gy = 0.0;
    std::int64_t n = 0;
    for (int i = 0; i < res * res; ++i) {
      if (!mask[i]) continue;
      gx += i % res;
      gy += i / res;
      ++n;
    }
    gx /= n;
    gy /= n;
    const auto c = figure_centroid(outputs[t]);
    // No visible figure at all: charge the frame size.
    err += c ? std::hypot(c->x - gx, c->y - gy) : static_cast<double>(res);
    ++scored;
  }
  s.content_score = s.frames > 0 ? static_cast<double>(matched) / s.frames : 0.0;
  s.pose_error_px = scored > 0 ? err / scored : 0.0;
  return s;
}

// ------------------------------------------------------------------ grid

GridImage render_swap_grid(const torch::Tensor& pose_frames, std::span<const PoseVector> poses,
                           const torch::Tensor& content_image,
                           std::span<const torch::Tensor> method_outputs) {
  const std::int64_t n = pose_frames.size(0);
  if (static_cast<std::int64_t>(poses.size()) != n) {
    throw ConfigError("grid: " + std::to_string(poses.size()) + " poses for " + std::to_string(n) +
                      " pose frames");
  }
  const int h = static_cast<int>(pose_frames.size(2)), w = static_cast<int>(pose_frames.size(3));
  if (content_image.size(1) != h || content_image.size(2) != w) {
    throw ConfigError("grid: content image resolution differs from the pose frames");
  }
  for (const auto& m : method_outputs) {
    if (m.size(0) != n) {
      throw ConfigError("grid: method output has " + std::to_string(m.size(0)) + " frames, expected " +
                        std::to_string(n));
    }
    if (m.size(2) != h || m.size(3) != w) throw ConfigError("grid: method output resolution differs");
  }
  const int rows = 2 + static_cast<int>(method_outputs.size());
  const int cols = 1 + static_cast<int>(n);
  GridImage g{rows * h, cols * w, {}};
  g.rgb.assign(static_cast<std::size_t>(g.height) * g.width * 3, 0);

  auto blit = [&](int row, int col, const std::vector<std::uint8_t>& cell) {
    for (int y = 0; y < h; ++y) {
      std::copy_n(cell.data() + static_cast<std::size_t>(y) * w * 3, w * 3,
                  g.rgb.data() + ((static_cast<std::size_t>(row) * h + y) * g.width + col * w) * 3);
    }
  };

  auto hm_cfg = HeatmapConfig::for_resolution(std::max(h, w));
  hm_cfg.height = h;
  hm_cfg.width = w;
  hm_cfg.peak_normalize = true;
  for (std::int64_t t = 0; t < n; ++t) {
    blit(0, static_cast<int>(t) + 1, frame_to_rgb8(pose_frames[t]));
    const auto hm = heatmap_tensor(render_heatmap(poses[t], hm_cfg), hm_cfg).amax(0);
    std::vector<std::uint8_t> cell(static_cast<std::size_t>(h) * w * 3, 0);
    const float* v = hm.data_ptr<float>();
    for (int i = 0; i < h * w; ++i) {
      cell[static_cast<std::size_t>(i) * 3 + 1] =
          static_cast<std::uint8_t>(std::lround(std::clamp(v[i], 0.0f, 1.0f) * 255.0f));
    }
    blit(1, static_cast<int>(t) + 1, cell);
  }
  const auto content_cell = frame_to_rgb8(content_image);
  for (std::size_t m = 0; m < method_outputs.size(); ++m) {
    blit(2 + static_cast<int>(m), 0, content_cell);
    for (std::int64_t t = 0; t < n; ++t) {
      blit(2 + static_cast<int>(m), static_cast<int>(t) + 1, frame_to_rgb8(method_outputs[m][t]));
    }
  }
  return g;
}

}  // namespace vidswap
