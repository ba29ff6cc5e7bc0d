#include "vidswap/losses.hpp"

#include "vidswap/error.hpp"

namespace vidswap {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
  if (a.sizes() != b.sizes()) {
    throw ConfigError(std::string(who) + ": shape mismatch " + c10::str(a.sizes()) + " vs " +
                      c10::str(b.sizes()));
  }
}

void require_probabilities(const torch::Tensor& p, const char* who) {
  torch::NoGradGuard guard;
  const bool interior = (p > 0.0).all().item<bool>() && (p < 1.0).all().item<bool>();
  if (!interior) {
    throw DomainError(std::string(who) + ": probabilities must lie strictly inside (0, 1)");
  }
}

torch::Tensor neg_log(const torch::Tensor& p) {
  return -torch::log(torch::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor));
}

torch::Tensor neg_log_complement(const torch::Tensor& p) {
  return -torch::log(torch::clamp(1.0 - p, kProbabilityFloor, 1.0 - kProbabilityFloor));
}

torch::Tensor per_sample_squared_distance(const torch::Tensor& a, const torch::Tensor& b) {
  return (a - b).pow(2).flatten(1).sum(1);
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {w_rec, w_consist, w_adv_pose_code, w_gan_pose, w_gan_content, w_triplet}) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
  }
  if (!(margin > 0.0)) throw ConfigError("weights.margin must be > 0");
}

torch::Tensor loss_consistency(const ContentCode& c_t, const ContentCode& c_tk) {
  require_same_shape(c_t.bottleneck, c_tk.bottleneck, "loss_consistency");
  if (c_t.skips.size() != c_tk.skips.size()) {
    throw ConfigError("loss_consistency: content codes have different skip counts");
  }
  auto total = per_sample_squared_distance(c_t.bottleneck, c_tk.bottleneck);
  for (std::size_t i = 0; i < c_t.skips.size(); ++i) {
    require_same_shape(c_t.skips[i], c_tk.skips[i], "loss_consistency");
    total = total + per_sample_squared_distance(c_t.skips[i], c_tk.skips[i]);
  }
  return total.mean();
}

torch::Tensor loss_reconstruction(const torch::Tensor& target, const torch::Tensor& generated) {
  require_same_shape(target, generated, "loss_reconstruction");
  return (target - generated).pow(2).mean();
}

torch::Tensor loss_adv_scene_discriminator(const torch::Tensor& p_same, const torch::Tensor& p_diff) {
  require_probabilities(p_same, "loss_adv_scene_discriminator");
  require_probabilities(p_diff, "loss_adv_scene_discriminator");
  return neg_log(p_same).mean() + neg_log_complement(p_diff).mean();
}

torch::Tensor loss_adv_pose_encoder(const torch::Tensor& p_same) {
  require_probabilities(p_same, "loss_adv_pose_encoder");
  return (0.5 * neg_log(p_same) + 0.5 * neg_log_complement(p_same)).mean();
}

torch::Tensor loss_pose_discriminator(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  require_probabilities(d_real, "loss_pose_discriminator");
  require_probabilities(d_fake, "loss_pose_discriminator");
  return neg_log(d_real).mean() + neg_log_complement(d_fake).mean();
}

torch::Tensor loss_content_discriminator(const torch::Tensor& d_real_pair,
                                         const torch::Tensor& d_fake_pair) {
  require_probabilities(d_real_pair, "loss_content_discriminator");
  require_probabilities(d_fake_pair, "loss_content_discriminator");
  return neg_log(d_real_pair).mean() + neg_log_complement(d_fake_pair).mean();
}

torch::Tensor loss_generator_gan(const torch::Tensor& d_content_on_fake,
                                 const torch::Tensor& d_pose_on_fake) {
  torch::Tensor total;
  for (const auto* p : {&d_content_on_fake, &d_pose_on_fake}) {
    if (!p->defined()) continue;
    require_probabilities(*p, "loss_generator_gan");
    auto term = neg_log(*p).mean();
    total = total.defined() ? total + term : term;
  }
  if (!total.defined()) throw ConfigError("loss_generator_gan: no discriminator outputs given");
  return total;
}

torch::Tensor loss_triplet(const torch::Tensor& anchor, const torch::Tensor& positive,
                           const torch::Tensor& negative, double margin) {
  require_same_shape(anchor, positive, "loss_triplet");
  require_same_shape(anchor, negative, "loss_triplet");
  if (!(margin > 0.0)) throw ConfigError("loss_triplet: margin must be > 0");
  const auto d_pos = per_sample_squared_distance(anchor, positive);
  const auto d_neg = per_sample_squared_distance(anchor, negative);
  return torch::relu(d_pos + margin - d_neg).mean();
}

torch::Tensor loss_content_pull(const torch::Tensor& embed_generated,
                                const torch::Tensor& embed_content) {
  require_same_shape(embed_generated, embed_content, "loss_content_pull");
  return per_sample_squared_distance(embed_generated, embed_content).mean();
}

}  // namespace vidswap
