#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "vidswap/data.hpp"
#include "vidswap/nets.hpp"
#include "vidswap/pose_codec.hpp"
#include "vidswap/random.hpp"

namespace vidswap::testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_bytes(const std::filesystem::path& path);

/// Per-pixel evaluation of the isotropic 2-D normal density, written out
/// directly (no separable factorization).
double gaussian_density(double x, double y, double mx, double my, double sigma);
std::vector<double> brute_force_heatmap(const PoseVector& pose, int height, int width, double sigma);

PoseVector random_pose(Rng& rng, double lo = -1.0, double hi = 1.0);

/// FNV-1a over the raw bytes of every parameter of a module.
std::uint64_t parameter_hash(const torch::nn::Module& m);

struct GradCheckResult {
  int checked = 0;
  int failed = 0;
  int nontrivial = 0;  // samples whose gradient magnitude exceeds the absolute floor
  double worst_relative = 0.0;
  std::string worst_name;
};

/// Compares autograd gradients of `loss` with central differences on
/// `samples` randomly chosen scalar parameters of `module`. Agreement means
/// |analytic - numeric| <= rel_tol * max(|analytic|, |numeric|) + abs_floor.
GradCheckResult finite_difference_check(torch::nn::Module& module,
                                        const std::function<torch::Tensor()>& loss, int samples,
                                        std::uint64_t seed, double step = 1e-6, double rel_tol = 1e-4,
                                        double abs_floor = 1e-8);

/// Small net config for fast tests: 32x32 input, 5 layers.
NetConfig tiny_net(int resolution = 32);
/// A few short synthetic clips at 32x32.
std::vector<Clip> tiny_clips(int n_clips = 4, int frames = 6, std::uint64_t seed = 0);

}  // namespace vidswap::testing
