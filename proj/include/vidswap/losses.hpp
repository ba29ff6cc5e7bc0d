#pragma once

#include <torch/torch.h>

#include "vidswap/nets.hpp"

namespace vidswap {

/// Probabilities are clamped to [kProbabilityFloor, 1 - kProbabilityFloor]
/// before the log.
inline constexpr double kProbabilityFloor = 1e-7;

struct LossWeights {
  double w_rec = 1.0;
  double w_consist = 1.0;
  double w_adv_pose_code = 0.1;
  double w_gan_pose = 1.0;
  double w_gan_content = 1.0;
  double w_triplet = 1.0;
  double margin = 0.5;

  void validate() const;
};

// All losses reduce by the mean over the batch dimension and return a scalar.

/// Squared L2 distance summed over every element of the code (bottleneck and
/// all skips), averaged over the batch.
torch::Tensor loss_consistency(const ContentCode& c_t, const ContentCode& c_tk);

/// Mean squared error over pixels and batch.
torch::Tensor loss_reconstruction(const torch::Tensor& target, const torch::Tensor& generated);

/// Scene discriminator BCE: target 1 on same-video pairs, 0 on different-video pairs.
torch::Tensor loss_adv_scene_discriminator(const torch::Tensor& p_same, const torch::Tensor& p_diff);

/// Pose-encoder adversary: BCE against target 1/2 on same-video pairs.
torch::Tensor loss_adv_pose_encoder(const torch::Tensor& p_same);

/// E[-log D(real)] + E[-log(1 - D(fake))].
torch::Tensor loss_pose_discriminator(const torch::Tensor& d_real, const torch::Tensor& d_fake);
torch::Tensor loss_content_discriminator(const torch::Tensor& d_real_pair,
                                         const torch::Tensor& d_fake_pair);

/// Non-saturating generator loss: E[-log D_content(fake)] + E[-log D_pose(fake)].
/// Either argument may be undefined, dropping that term.
torch::Tensor loss_generator_gan(const torch::Tensor& d_content_on_fake,
                                 const torch::Tensor& d_pose_on_fake);

/// mean(max(0, |a - p|^2 + m - |a - n|^2)) over rows of [B, D] embeddings.
torch::Tensor loss_triplet(const torch::Tensor& anchor, const torch::Tensor& positive,
                           const torch::Tensor& negative, double margin);

/// Generator side of the triplet game: mean |embed(G) - embed(content)|^2.
torch::Tensor loss_content_pull(const torch::Tensor& embed_generated,
                                const torch::Tensor& embed_content);

}  // namespace vidswap
