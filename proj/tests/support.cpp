#include "support.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace vidswap::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("vidswap_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double gaussian_density(double x, double y, double mx, double my, double sigma) {
  const double d2 = (x - mx) * (x - mx) + (y - my) * (y - my);
  return std::exp(-d2 / (2.0 * sigma * sigma)) / (2.0 * std::numbers::pi * sigma * sigma);
}

std::vector<double> brute_force_heatmap(const PoseVector& pose, int height, int width, double sigma) {
  std::vector<double> out(static_cast<std::size_t>(kNumKeypoints) * height * width, 0.0);
  if (!pose.visible) return out;
  for (int c = 0; c < kNumKeypoints; ++c) {
    // Pixel i sits at normalized coordinate 2i/(extent-1) - 1.
    const double mx = (pose.keypoints[c].x + 1.0) * (width - 1) / 2.0;
    const double my = (pose.keypoints[c].y + 1.0) * (height - 1) / 2.0;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        out[(static_cast<std::size_t>(c) * height + y) * width + x] = gaussian_density(x, y, mx, my, sigma);
      }
    }
  }
  return out;
}

PoseVector random_pose(Rng& rng, double lo, double hi) {
  PoseVector p;
  p.visible = true;
  for (auto& kp : p.keypoints) {
    kp.x = rng.uniform(lo, hi);
    kp.y = rng.uniform(lo, hi);
  }
  return p;
}

std::uint64_t parameter_hash(const torch::nn::Module& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : m.parameters()) {
    const auto c = p.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const std::size_t n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

GradCheckResult finite_difference_check(torch::nn::Module& module, const std::function<torch::Tensor()>& loss,
                                        int samples, std::uint64_t seed, double step, double rel_tol,
                                        double abs_floor) {
  std::vector<std::pair<std::string, torch::Tensor>> params;
  std::int64_t total = 0;
  for (const auto& item : module.named_parameters(true)) {
    params.emplace_back(item.key(), item.value());
    total += item.value().numel();
  }
  for (auto& [name, p] : params) p.mutable_grad() = torch::Tensor();
  loss().backward();

  Rng rng(seed);
  GradCheckResult r;
  torch::NoGradGuard guard;
  for (int s = 0; s < samples; ++s) {
    // Uniform over all scalar parameters.
    auto flat = static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(total)));
    std::size_t which = 0;
    while (flat >= params[which].second.numel()) flat -= params[which].second.numel(), ++which;
    auto& [name, p] = params[which];
    auto view = p.view(-1);
    const double analytic = p.grad().defined() ? p.grad().view(-1)[flat].item<double>() : 0.0;
    const double orig = view[flat].item<double>();
    view[flat] = orig + step;
    const double up = loss().item<double>();
    view[flat] = orig - step;
    const double down = loss().item<double>();
    view[flat] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double diff = std::abs(analytic - numeric);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double rel = scale > 0.0 ? diff / scale : 0.0;
    ++r.checked;
    if (scale > abs_floor) ++r.nontrivial;
    const bool failed = diff > rel_tol * scale + abs_floor;
    if (failed) ++r.failed;
    if ((failed || scale > abs_floor) && rel > r.worst_relative) {
      r.worst_relative = rel;
      r.worst_name = name + "[" + std::to_string(flat) + "] analytic " + std::to_string(analytic) +
                     " numeric " + std::to_string(numeric);
    }
  }
  return r;
}

NetConfig tiny_net(int resolution) {
  NetConfig cfg;
  cfg.in_resolution = resolution;
  cfg.n_layers = 5;
  cfg.base_channels = 4;
  cfg.max_channels = 16;
  cfg.content_dim = 16;
  cfg.pose_dim = 8;
  cfg.embed_dim = 8;
  return cfg;
}

std::vector<Clip> tiny_clips(int n_clips, int frames, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_clips = n_clips;
  cfg.frames_per_clip = frames;
  cfg.resolution = 32;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

}  // namespace vidswap::testing
