#include "vidswap/adam.hpp"

#include <cmath>
#include <unordered_map>

#include "vidswap/error.hpp"

namespace vidswap {

Adam::Adam(std::vector<torch::Tensor> params, std::vector<std::string> names, AdamOptions opts)
    : params_(std::move(params)), names_(std::move(names)), opts_(opts) {
  if (params_.size() != names_.size()) throw ConfigError("Adam: one name per parameter required");
  if (!(opts_.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  for (const auto& p : params_) {
    exp_avg_.push_back(torch::zeros_like(p));
    exp_avg_sq_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
}

void Adam::step() {
  torch::NoGradGuard guard;
  ++step_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
  const double step_size = opts_.learning_rate / bc1;
  const double bc2_sqrt = std::sqrt(bc2);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.grad().defined()) continue;
    const auto& g = p.grad();
    exp_avg_[i].mul_(opts_.beta1).add_(g, 1.0 - opts_.beta1);
    exp_avg_sq_[i].mul_(opts_.beta2).addcmul_(g, g, 1.0 - opts_.beta2);
    const auto denom = (exp_avg_sq_[i].sqrt() / bc2_sqrt).add_(opts_.eps);
    p.addcdiv_(exp_avg_[i], denom, -step_size);
  }
}

std::vector<std::pair<std::string, torch::Tensor>> Adam::state_tensors() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back(names_[i] + "/exp_avg", exp_avg_[i]);
    out.emplace_back(names_[i] + "/exp_avg_sq", exp_avg_sq_[i]);
  }
  return out;
}

void Adam::load_state(std::int64_t steps,
                      const std::vector<std::pair<std::string, torch::Tensor>>& tensors) {
  std::unordered_map<std::string, torch::Tensor> by_name(tensors.begin(), tensors.end());
  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    using Slot = std::pair<const char*, torch::Tensor*>;
    for (const auto& [suffix, dst] : {Slot{"/exp_avg", &exp_avg_[i]},
                                      Slot{"/exp_avg_sq", &exp_avg_sq_[i]}}) {
      const auto it = by_name.find(names_[i] + suffix);
      if (it == by_name.end()) throw FormatError("optimizer state missing " + names_[i] + suffix);
      if (it->second.sizes() != dst->sizes()) {
        throw FormatError("optimizer state shape mismatch for " + names_[i] + suffix);
      }
      dst->copy_(it->second);
    }
  }
  step_ = steps;
}

}  // namespace vidswap
