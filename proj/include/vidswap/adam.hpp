#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace vidswap {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed, named parameter list, with moment state exposed for
/// checkpointing. Update rule matches the bias-corrected formulation.
class Adam {
 public:
  Adam(std::vector<torch::Tensor> params, std::vector<std::string> names, AdamOptions opts);

  void zero_grad();
  void step();

  std::int64_t steps() const { return step_; }
  const AdamOptions& options() const { return opts_; }
  void set_learning_rate(double lr) { opts_.learning_rate = lr; }

  /// Moment tensors keyed `<param name>/exp_avg` and `<param name>/exp_avg_sq`.
  std::vector<std::pair<std::string, torch::Tensor>> state_tensors() const;
  void load_state(std::int64_t steps,
                  const std::vector<std::pair<std::string, torch::Tensor>>& tensors);

 private:
  std::vector<torch::Tensor> params_;
  std::vector<std::string> names_;
  std::vector<torch::Tensor> exp_avg_;
  std::vector<torch::Tensor> exp_avg_sq_;
  AdamOptions opts_;
  std::int64_t step_ = 0;
};

}  // namespace vidswap
