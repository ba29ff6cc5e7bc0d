#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "vidswap/pose_codec.hpp"

namespace vidswap {

enum class Method {
  kDisentangledBaseline,        // (a) learned pose encoder + scene discriminator
  kDisentangledPretrainedPose,  // (b) keypoint pose vectors
  kCgan,                        // (c) pose + content discriminators
  kCganTriplet,                 // (d) pose discriminator + triplet embedder
};

std::string method_name(Method m);
/// Throws ConfigError listing the valid names.
Method parse_method(const std::string& name);
/// True for the methods that feed keypoint pose vectors into the generator.
bool uses_keypoint_pose(Method m);

enum class NormKind { kInstance, kNone };
enum class Nonlinearity { kLeakyRelu, kRelu };

std::string norm_kind_name(NormKind k);
NormKind parse_norm_kind(const std::string& s);
std::string nonlinearity_name(Nonlinearity k);
Nonlinearity parse_nonlinearity(const std::string& s);

struct NetConfig {
  int in_resolution = 64;
  int base_channels = 32;
  int max_channels = 512;
  int n_layers = 6;
  /// Channels of the content bottleneck (last encoder layer).
  int content_dim = 512;
  /// Size of the learned pose code of the baseline method.
  int pose_dim = 16;
  int embed_dim = 64;
  NormKind norm_kind = NormKind::kInstance;
  Nonlinearity nonlinearity_kind = Nonlinearity::kLeakyRelu;

  /// Requires in_resolution divisible by 2^n_layers (every layer halves).
  void validate() const;
  /// Output channels of each encoder layer; the last entry is content_dim.
  std::vector<int> encoder_channels() const;
  int bottleneck_size() const { return in_resolution >> n_layers; }
  /// Stride-2 layers in the discriminator trunks: down to 4x4, at most n_layers.
  int discriminator_layers() const;
};

/// Multi-resolution content features. Skips are ordered from the highest
/// resolution (first encoder layer) to the lowest.
struct ContentCode {
  torch::Tensor bottleneck;
  std::vector<torch::Tensor> skips;

  std::int64_t batch() const { return bottleneck.size(0); }
  ContentCode detach() const;
};

/// Shared-weight conv stack: k4 s2 p1 convolutions, optional instance norm.
struct ContentEncoderImpl : torch::nn::Module {
  explicit ContentEncoderImpl(const NetConfig& cfg);
  ContentCode forward(const torch::Tensor& frames);

  NetConfig cfg;
  std::vector<torch::nn::Conv2d> convs;
  std::vector<torch::nn::InstanceNorm2d> norms;  // null where unused
};
TORCH_MODULE(ContentEncoder);

/// Learned pose encoder of the baseline method: frame -> pose_dim vector.
struct PoseEncoderImpl : torch::nn::Module {
  explicit PoseEncoderImpl(const NetConfig& cfg);
  torch::Tensor forward(const torch::Tensor& frames);

  NetConfig cfg;
  std::vector<torch::nn::Conv2d> convs;
  std::vector<torch::nn::InstanceNorm2d> norms;
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(PoseEncoder);

/// Generator/decoder. The pose code is broadcast over the bottleneck grid and
/// concatenated with it; content skips join at matching resolutions.
struct DecoderImpl : torch::nn::Module {
  DecoderImpl(const NetConfig& cfg, int pose_channels);
  torch::Tensor forward(const ContentCode& content, const torch::Tensor& pose);

  NetConfig cfg;
  int pose_channels;
  std::vector<torch::nn::ConvTranspose2d> deconvs;
  std::vector<torch::nn::InstanceNorm2d> norms;
};
TORCH_MODULE(Decoder);

/// Conv stack + linear head without normalization, leaky activations.
struct ConvTrunkImpl : torch::nn::Module {
  ConvTrunkImpl(const NetConfig& cfg, int in_channels, int out_features);
  torch::Tensor forward(torch::Tensor x);

  int in_channels;
  std::vector<torch::nn::Conv2d> convs;
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(ConvTrunk);

/// Scene discriminator C: probability that two pose codes share a video.
struct SceneDiscriminatorImpl : torch::nn::Module {
  explicit SceneDiscriminatorImpl(int pose_dim, int hidden = 64);
  torch::Tensor forward(const torch::Tensor& z1, const torch::Tensor& z2);

  int pose_dim;
  torch::nn::Linear fc0{nullptr}, fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(SceneDiscriminator);

/// D_pose: probability that a frame is real and shows the heatmap's pose.
struct PoseDiscriminatorImpl : torch::nn::Module {
  explicit PoseDiscriminatorImpl(const NetConfig& cfg);
  torch::Tensor forward(const torch::Tensor& frames, const torch::Tensor& heatmaps);

  NetConfig cfg;
  ConvTrunk trunk{nullptr};
};
TORCH_MODULE(PoseDiscriminator);

/// D_content: probability that two frames are real frames of one video.
struct ContentDiscriminatorImpl : torch::nn::Module {
  explicit ContentDiscriminatorImpl(const NetConfig& cfg);
  torch::Tensor forward(const torch::Tensor& frames_a, const torch::Tensor& frames_b);

  NetConfig cfg;
  ConvTrunk trunk{nullptr};
};
TORCH_MODULE(ContentDiscriminator);

/// Triplet content embedder: frame -> embed_dim vector (not normalized).
struct ContentEmbedderImpl : torch::nn::Module {
  explicit ContentEmbedderImpl(const NetConfig& cfg);
  torch::Tensor forward(const torch::Tensor& frames);

  NetConfig cfg;
  ConvTrunk trunk{nullptr};
};
TORCH_MODULE(ContentEmbedder);

/// Squashes logits into [eps, 1 - eps] so probabilities stay strictly interior.
torch::Tensor probability_head(const torch::Tensor& logits);

/// N(0, 0.02) conv/linear weights, zero biases, unit norm scales.
void init_weights(torch::nn::Module& module);

std::int64_t parameter_count(const torch::nn::Module& module);

/// The networks one training method uses; absent networks stay null.
struct Networks {
  Method method = Method::kDisentangledPretrainedPose;
  NetConfig cfg;
  ContentEncoder content_encoder{nullptr};
  PoseEncoder pose_encoder{nullptr};
  Decoder decoder{nullptr};
  SceneDiscriminator scene_discriminator{nullptr};
  PoseDiscriminator pose_discriminator{nullptr};
  ContentDiscriminator content_discriminator{nullptr};
  ContentEmbedder content_embedder{nullptr};

  /// Builds and initializes the networks of `method` from `seed`.
  static Networks create(Method method, const NetConfig& cfg, std::uint64_t seed);

  /// Present networks keyed by their checkpoint names, in a fixed order.
  std::vector<std::pair<std::string, torch::nn::Module*>> modules() const;
  /// Parameters updated by the generator-side optimizer (encoders + decoder).
  std::vector<torch::Tensor> generator_parameters() const;
  std::vector<std::string> generator_names() const;
  /// Parameters updated by the discriminator-side optimizer.
  std::vector<torch::Tensor> discriminator_parameters() const;
  std::vector<std::string> discriminator_names() const;
  /// All parameters keyed `<network>/<layer>/<tensor>`.
  std::vector<std::pair<std::string, torch::Tensor>> named_parameters() const;

  void train(bool on);
  void to(torch::Dtype dtype);

  /// Pose code fed to the decoder for frames whose keypoints are `poses`.
  torch::Tensor pose_code(const torch::Tensor& frames, std::span<const PoseVector> poses) const;
  /// G(F_content(content_frames), pose code of (pose_frames, poses)).
  torch::Tensor generate(const torch::Tensor& content_frames, const torch::Tensor& pose_frames,
                         std::span<const PoseVector> poses) const;
};

}  // namespace vidswap
