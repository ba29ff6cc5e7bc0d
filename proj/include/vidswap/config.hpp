#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidswap/adam.hpp"
#include "vidswap/data.hpp"
#include "vidswap/losses.hpp"
#include "vidswap/nets.hpp"

namespace vidswap {

struct MethodConfig {
  Method method = Method::kDisentangledPretrainedPose;
  int epochs = 100;
  double learning_rate = 1e-3;
  AdamOptions optimizer;  // learning_rate above takes precedence
  /// Step decay: the rate is multiplied by lr_decay_factor at each listed epoch.
  std::vector<int> lr_decay_epochs;
  double lr_decay_factor = 0.1;
  int batch_size = 32;
  std::uint64_t seed = 0;
  LossWeights weights;
  SamplerConfig sampler;
  NetConfig net;
  int d_steps_per_g_step = 1;
  /// Keep w_rec * temporal-shifted reconstruction in the CGAN generator loss.
  bool cgan_reconstruction = true;
  /// Add w_consist * consistency to the CGAN generator loss.
  bool cgan_consistency = false;
  /// Heatmap sigma in pixels; <= 0 means 4 px at 128x128, scaled with resolution.
  double heatmap_sigma = 0.0;
  bool heatmap_peak_normalize = true;

  void validate() const;
  HeatmapConfig heatmap() const;
  AdamOptions adam() const;
  double learning_rate_at(int epoch) const;
};

nlohmann::json to_json(const NetConfig& c);
nlohmann::json to_json(const LossWeights& c);
nlohmann::json to_json(const SamplerConfig& c);
nlohmann::json to_json(const MethodConfig& c);
nlohmann::json to_json(const SyntheticConfig& c);

// Strict readers: unknown keys and type mismatches raise ConfigError naming
// the field path. Missing keys keep their defaults.
NetConfig net_config_from_json(const nlohmann::json& j, const std::string& path = "net");
MethodConfig method_config_from_json(const nlohmann::json& j);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

/// Applies `key.sub=value` overrides. Values parse as JSON when possible and
/// are taken as plain strings otherwise.
void apply_overrides(nlohmann::json& j, std::span<const std::string> overrides);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with sorted keys and a trailing newline.
std::string format_config(const nlohmann::json& j);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

/// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

}  // namespace vidswap
