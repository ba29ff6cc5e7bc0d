#include "vidswap/nets.hpp"

#include <algorithm>

#include "vidswap/error.hpp"

namespace vidswap {

namespace nn = torch::nn;

namespace {

constexpr double kLeakySlope = 0.2;
constexpr double kProbabilityEps = 1e-6;

torch::Tensor activate(const torch::Tensor& x, Nonlinearity kind) {
  return kind == Nonlinearity::kRelu ? torch::relu(x) : torch::leaky_relu(x, kLeakySlope);
}

nn::Conv2d down_conv(int in, int out) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
}

nn::ConvTranspose2d up_conv(int in, int out) {
  return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
}

void check_frames(const torch::Tensor& x, int channels, int resolution, const char* who) {
  if (x.dim() != 4 || x.size(1) != channels || x.size(2) != resolution ||
      x.size(3) != resolution) {
    throw ConfigError(std::string(who) + ": expected input [B, " + std::to_string(channels) +
                      ", " + std::to_string(resolution) + ", " + std::to_string(resolution) +
                      "], got " + c10::str(x.sizes()));
  }
}

torch::Tensor param_like(const torch::Tensor& x, const nn::Module& m) {
  const auto params = m.parameters();
  return params.empty() ? x : x.to(params.front().scalar_type());
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kDisentangledBaseline: return "disentangled_baseline";
    case Method::kDisentangledPretrainedPose: return "disentangled_pretrained_pose";
    case Method::kCgan: return "cgan";
    case Method::kCganTriplet: return "cgan_triplet";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kDisentangledBaseline, Method::kDisentangledPretrainedPose,
                   Method::kCgan, Method::kCganTriplet}) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown method '" + name +
                    "'; valid methods: disentangled_baseline, disentangled_pretrained_pose, "
                    "cgan, cgan_triplet");
}

bool uses_keypoint_pose(Method m) { return m != Method::kDisentangledBaseline; }

std::string norm_kind_name(NormKind k) { return k == NormKind::kInstance ? "instance" : "none"; }

NormKind parse_norm_kind(const std::string& s) {
  if (s == "instance") return NormKind::kInstance;
  if (s == "none") return NormKind::kNone;
  throw ConfigError("net.norm_kind must be 'instance' or 'none', got '" + s + "'");
}

std::string nonlinearity_name(Nonlinearity k) {
  return k == Nonlinearity::kRelu ? "relu" : "leaky_relu";
}

Nonlinearity parse_nonlinearity(const std::string& s) {
  if (s == "relu") return Nonlinearity::kRelu;
  if (s == "leaky_relu") return Nonlinearity::kLeakyRelu;
  throw ConfigError("net.nonlinearity_kind must be 'relu' or 'leaky_relu', got '" + s + "'");
}

void NetConfig::validate() const {
  if (n_layers < 2) throw ConfigError("net.n_layers must be >= 2");
  if (in_resolution < 8) throw ConfigError("net.in_resolution must be >= 8");
  if (in_resolution % (1 << n_layers) != 0) {
    throw ConfigError("net.in_resolution (" + std::to_string(in_resolution) +
                      ") must be divisible by 2^n_layers (" + std::to_string(1 << n_layers) + ")");
  }
  if (base_channels < 1 || max_channels < base_channels || content_dim < 1 || pose_dim < 1 ||
      embed_dim < 1) {
    throw ConfigError("net channel sizes must be positive with max_channels >= base_channels");
  }
}

std::vector<int> NetConfig::encoder_channels() const {
  std::vector<int> ch;
  for (int i = 0; i < n_layers - 1; ++i) {
    ch.push_back(static_cast<int>(std::min<long>(max_channels, static_cast<long>(base_channels) << i)));
  }
  ch.push_back(content_dim);
  return ch;
}

int NetConfig::discriminator_layers() const {
  int halvings = 0;
  for (int r = in_resolution; r > 4; r /= 2) ++halvings;
  return std::clamp(halvings, 1, n_layers);
}

ContentCode ContentCode::detach() const {
  ContentCode c{bottleneck.detach(), {}};
  for (const auto& s : skips) c.skips.push_back(s.detach());
  return c;
}

// ------------------------------------------------------------------ encoders

ContentEncoderImpl::ContentEncoderImpl(const NetConfig& config) : cfg(config) {
  cfg.validate();
  const auto ch = cfg.encoder_channels();
  int in = 3;
  for (int i = 0; i < cfg.n_layers; ++i) {
    convs.push_back(register_module("layer" + std::to_string(i), down_conv(in, ch[i])));
    const int spatial = cfg.in_resolution >> (i + 1);
    if (cfg.norm_kind == NormKind::kInstance && i < cfg.n_layers - 1 && spatial >= 4) {
      norms.push_back(register_module("norm" + std::to_string(i),
                                      nn::InstanceNorm2d(nn::InstanceNorm2dOptions(ch[i]).affine(true))));
    } else {
      norms.emplace_back(nullptr);
    }
    in = ch[i];
  }
}

ContentCode ContentEncoderImpl::forward(const torch::Tensor& frames) {
  check_frames(frames, 3, cfg.in_resolution, "content encoder");
  ContentCode code;
  auto x = param_like(frames, *this);
  for (int i = 0; i < cfg.n_layers; ++i) {
    x = convs[i](x);
    if (i == cfg.n_layers - 1) {
      code.bottleneck = torch::tanh(x);
    } else {
      if (!norms[i].is_empty()) x = norms[i](x);
      x = activate(x, cfg.nonlinearity_kind);
      code.skips.push_back(x);
    }
  }
  return code;
}

PoseEncoderImpl::PoseEncoderImpl(const NetConfig& config) : cfg(config) {
  cfg.validate();
  const auto ch = cfg.encoder_channels();
  int in = 3;
  for (int i = 0; i < cfg.n_layers; ++i) {
    convs.push_back(register_module("layer" + std::to_string(i), down_conv(in, ch[i])));
    const int spatial = cfg.in_resolution >> (i + 1);
    if (cfg.norm_kind == NormKind::kInstance && i < cfg.n_layers - 1 && spatial >= 4) {
      norms.push_back(register_module("norm" + std::to_string(i),
                                      nn::InstanceNorm2d(nn::InstanceNorm2dOptions(ch[i]).affine(true))));
    } else {
      norms.emplace_back(nullptr);
    }
    in = ch[i];
  }
  const int flat = cfg.content_dim * cfg.bottleneck_size() * cfg.bottleneck_size();
  head = register_module("head", nn::Linear(flat, cfg.pose_dim));
}

torch::Tensor PoseEncoderImpl::forward(const torch::Tensor& frames) {
  check_frames(frames, 3, cfg.in_resolution, "pose encoder");
  auto x = param_like(frames, *this);
  for (int i = 0; i < cfg.n_layers; ++i) {
    x = convs[i](x);
    if (!norms[i].is_empty()) x = norms[i](x);
    x = activate(x, cfg.nonlinearity_kind);
  }
  return torch::tanh(head(x.flatten(1)));
}

// ------------------------------------------------------------------ decoder

DecoderImpl::DecoderImpl(const NetConfig& config, int pose_ch) : cfg(config), pose_channels(pose_ch) {
  cfg.validate();
  const auto ch = cfg.encoder_channels();
  const int n = cfg.n_layers;
  int in = cfg.content_dim + pose_channels;
  for (int i = 0; i < n; ++i) {
    const bool last = i == n - 1;
    const int out = last ? 3 : ch[n - 2 - i];
    deconvs.push_back(register_module("layer" + std::to_string(i), up_conv(in, out)));
    const int spatial = cfg.bottleneck_size() << (i + 1);
    if (cfg.norm_kind == NormKind::kInstance && !last && spatial >= 4) {
      norms.push_back(register_module("norm" + std::to_string(i),
                                      nn::InstanceNorm2d(nn::InstanceNorm2dOptions(out).affine(true))));
    } else {
      norms.emplace_back(nullptr);
    }
    in = last ? 0 : 2 * out;  // output concatenated with the matching skip
  }
}

torch::Tensor DecoderImpl::forward(const ContentCode& content, const torch::Tensor& pose) {
  const int n = cfg.n_layers;
  if (static_cast<int>(content.skips.size()) != n - 1 ||
      content.bottleneck.size(1) != cfg.content_dim) {
    throw ConfigError("decoder: content code does not match the network config");
  }
  if (pose.dim() != 2 || pose.size(1) != pose_channels || pose.size(0) != content.batch()) {
    throw ConfigError("decoder: expected pose code [" + std::to_string(content.batch()) + ", " +
                      std::to_string(pose_channels) + "], got " + c10::str(pose.sizes()));
  }
  const auto& b = content.bottleneck;
  auto z = param_like(pose, *this).view({pose.size(0), pose.size(1), 1, 1})
               .expand({-1, -1, b.size(2), b.size(3)});
  auto x = torch::cat({b, z}, 1);
  for (int i = 0; i < n; ++i) {
    x = deconvs[i](x);
    if (i == n - 1) return torch::tanh(x);
    if (!norms[i].is_empty()) x = norms[i](x);
    x = activate(x, cfg.nonlinearity_kind);
    x = torch::cat({x, content.skips[n - 2 - i]}, 1);
  }
  return x;
}

// ------------------------------------------------------------------ discriminators

torch::Tensor probability_head(const torch::Tensor& logits) {
  return kProbabilityEps + (1.0 - 2.0 * kProbabilityEps) * torch::sigmoid(logits);
}

ConvTrunkImpl::ConvTrunkImpl(const NetConfig& cfg, int in_ch, int out_features) : in_channels(in_ch) {
  cfg.validate();
  const auto ch = cfg.encoder_channels();
  const int layers = cfg.discriminator_layers();
  int in = in_channels;
  for (int i = 0; i < layers; ++i) {
    const int out = std::min(ch[i], cfg.max_channels);
    convs.push_back(register_module("layer" + std::to_string(i), down_conv(in, out)));
    in = out;
  }
  const int spatial = cfg.in_resolution >> layers;
  head = register_module("head", nn::Linear(in * spatial * spatial, out_features));
}

torch::Tensor ConvTrunkImpl::forward(torch::Tensor x) {
  for (auto& c : convs) x = torch::leaky_relu(c(x), kLeakySlope);
  return head(x.flatten(1));
}

SceneDiscriminatorImpl::SceneDiscriminatorImpl(int dim, int hidden) : pose_dim(dim) {
  fc0 = register_module("layer0", nn::Linear(2 * pose_dim, hidden));
  fc1 = register_module("layer1", nn::Linear(hidden, hidden));
  fc2 = register_module("layer2", nn::Linear(hidden, 1));
}

torch::Tensor SceneDiscriminatorImpl::forward(const torch::Tensor& z1, const torch::Tensor& z2) {
  if (z1.sizes() != z2.sizes() || z1.dim() != 2 || z1.size(1) != pose_dim) {
    throw ConfigError("scene discriminator: pose codes must both be [B, " +
                      std::to_string(pose_dim) + "]");
  }
  auto x = param_like(torch::cat({z1, z2}, 1), *this);
  x = torch::leaky_relu(fc0(x), kLeakySlope);
  x = torch::leaky_relu(fc1(x), kLeakySlope);
  return probability_head(fc2(x)).squeeze(1);
}

PoseDiscriminatorImpl::PoseDiscriminatorImpl(const NetConfig& config) : cfg(config) {
  trunk = register_module("trunk", ConvTrunk(cfg, 3 + kNumKeypoints, 1));
}

torch::Tensor PoseDiscriminatorImpl::forward(const torch::Tensor& frames,
                                             const torch::Tensor& heatmaps) {
  check_frames(frames, 3, cfg.in_resolution, "pose discriminator");
  check_frames(heatmaps, kNumKeypoints, cfg.in_resolution, "pose discriminator heatmap");
  if (frames.size(0) != heatmaps.size(0)) {
    throw ConfigError("pose discriminator: frame and heatmap batch sizes differ");
  }
  auto x = param_like(torch::cat({frames, heatmaps.to(frames.scalar_type())}, 1), *this);
  return probability_head(trunk(x)).squeeze(1);
}

ContentDiscriminatorImpl::ContentDiscriminatorImpl(const NetConfig& config) : cfg(config) {
  trunk = register_module("trunk", ConvTrunk(cfg, 6, 1));
}

torch::Tensor ContentDiscriminatorImpl::forward(const torch::Tensor& frames_a,
                                                const torch::Tensor& frames_b) {
  check_frames(frames_a, 3, cfg.in_resolution, "content discriminator");
  check_frames(frames_b, 3, cfg.in_resolution, "content discriminator");
  if (frames_a.size(0) != frames_b.size(0)) {
    throw ConfigError("content discriminator: batch sizes differ");
  }
  auto x = param_like(torch::cat({frames_a, frames_b}, 1), *this);
  return probability_head(trunk(x)).squeeze(1);
}

ContentEmbedderImpl::ContentEmbedderImpl(const NetConfig& config) : cfg(config) {
  trunk = register_module("trunk", ConvTrunk(cfg, 3, cfg.embed_dim));
}

torch::Tensor ContentEmbedderImpl::forward(const torch::Tensor& frames) {
  check_frames(frames, 3, cfg.in_resolution, "content embedder");
  return trunk(param_like(frames, *this));
}

// ------------------------------------------------------------------ utilities

void init_weights(nn::Module& module) {
  torch::NoGradGuard guard;
  for (auto& item : module.named_parameters(/*recurse=*/true)) {
    const std::string& name = item.key();
    auto& p = item.value();
    const bool is_norm = name.find("norm") != std::string::npos;
    if (name.ends_with("bias")) {
      p.zero_();
    } else if (is_norm) {
      p.fill_(1.0);
    } else {
      p.normal_(0.0, 0.02);
    }
  }
}

std::int64_t parameter_count(const nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

Networks Networks::create(Method method, const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  torch::manual_seed(seed);
  Networks n;
  n.method = method;
  n.cfg = cfg;
  n.content_encoder = ContentEncoder(cfg);
  switch (method) {
    case Method::kDisentangledBaseline:
      n.pose_encoder = PoseEncoder(cfg);
      n.decoder = Decoder(cfg, cfg.pose_dim);
      n.scene_discriminator = SceneDiscriminator(cfg.pose_dim);
      break;
    case Method::kDisentangledPretrainedPose:
      n.decoder = Decoder(cfg, kPoseDim);
      break;
    case Method::kCgan:
      n.decoder = Decoder(cfg, kPoseDim);
      n.pose_discriminator = PoseDiscriminator(cfg);
      n.content_discriminator = ContentDiscriminator(cfg);
      break;
    case Method::kCganTriplet:
      n.decoder = Decoder(cfg, kPoseDim);
      n.pose_discriminator = PoseDiscriminator(cfg);
      n.content_embedder = ContentEmbedder(cfg);
      break;
  }
  for (auto& [name, m] : n.modules()) init_weights(*m);
  return n;
}

std::vector<std::pair<std::string, nn::Module*>> Networks::modules() const {
  std::vector<std::pair<std::string, nn::Module*>> out;
  if (content_encoder) out.emplace_back("content_encoder", content_encoder.ptr().get());
  if (pose_encoder) out.emplace_back("pose_encoder", pose_encoder.ptr().get());
  if (decoder) out.emplace_back("decoder", decoder.ptr().get());
  if (scene_discriminator) out.emplace_back("scene_discriminator", scene_discriminator.ptr().get());
  if (pose_discriminator) out.emplace_back("pose_discriminator", pose_discriminator.ptr().get());
  if (content_discriminator) out.emplace_back("content_discriminator", content_discriminator.ptr().get());
  if (content_embedder) out.emplace_back("content_embedder", content_embedder.ptr().get());
  return out;
}

namespace {

bool is_discriminator(const std::string& network) {
  return network == "scene_discriminator" || network == "pose_discriminator" ||
         network == "content_discriminator" || network == "content_embedder";
}

std::string checkpoint_key(const std::string& network, std::string param) {
  std::replace(param.begin(), param.end(), '.', '/');
  return network + "/" + param;
}

}  // namespace

std::vector<std::pair<std::string, torch::Tensor>> Networks::named_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& [name, m] : modules()) {
    for (const auto& item : m->named_parameters(true)) {
      out.emplace_back(checkpoint_key(name, item.key()), item.value());
    }
  }
  return out;
}

std::vector<torch::Tensor> Networks::generator_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& [name, m] : modules()) {
    if (is_discriminator(name)) continue;
    for (const auto& p : m->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<std::string> Networks::generator_names() const {
  std::vector<std::string> out;
  for (const auto& [name, m] : modules()) {
    if (is_discriminator(name)) continue;
    for (const auto& item : m->named_parameters(true)) out.push_back(checkpoint_key(name, item.key()));
  }
  return out;
}

std::vector<torch::Tensor> Networks::discriminator_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& [name, m] : modules()) {
    if (!is_discriminator(name)) continue;
    for (const auto& p : m->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<std::string> Networks::discriminator_names() const {
  std::vector<std::string> out;
  for (const auto& [name, m] : modules()) {
    if (!is_discriminator(name)) continue;
    for (const auto& item : m->named_parameters(true)) out.push_back(checkpoint_key(name, item.key()));
  }
  return out;
}

void Networks::train(bool on) {
  for (auto& [name, m] : modules()) m->train(on);
}

void Networks::to(torch::Dtype dtype) {
  for (auto& [name, m] : modules()) m->to(dtype);
}

torch::Tensor Networks::pose_code(const torch::Tensor& frames,
                                  std::span<const PoseVector> poses) const {
  if (method == Method::kDisentangledBaseline) return pose_encoder.ptr()->forward(frames);
  return pose_batch(poses);
}

torch::Tensor Networks::generate(const torch::Tensor& content_frames,
                                 const torch::Tensor& pose_frames,
                                 std::span<const PoseVector> poses) const {
  return decoder.ptr()->forward(content_encoder.ptr()->forward(content_frames),
                                 pose_code(pose_frames, poses));
}

}  // namespace vidswap
