#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "vidswap/adam.hpp"
#include "vidswap/checkpoint.hpp"
#include "vidswap/config.hpp"
#include "vidswap/data.hpp"
#include "vidswap/nets.hpp"

namespace vidswap {

/// Loss name -> value for one training step.
using LossRecord = std::map<std::string, double>;

struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  LossRecord losses;
  double wall_time = 0.0;
};

std::string format_step_record(const StepRecord& r);
StepRecord parse_step_record(const std::string& line, std::size_t line_number);
std::vector<StepRecord> read_metrics_log(const std::filesystem::path& path);
void write_metrics_log(const std::filesystem::path& path, std::span<const StepRecord> records);

struct TrainState {
  int epoch = 0;
  std::int64_t global_step = 0;
  LossRecord epoch_sums;
  std::int64_t epoch_steps = 0;
  /// Mean of every loss over each finished epoch.
  std::vector<LossRecord> history;
};

enum class SubstepPhase { kBegin, kEnd };
using SubstepObserver = std::function<void(std::string_view substep, SubstepPhase phase)>;

/// Owns networks, per-network optimizers and the sampler for one method.
class Trainer {
 public:
  Trainer(MethodConfig cfg, std::span<const Clip> clips);

  /// Samples a batch and runs the configured method's step.
  LossRecord step();
  Batch next_batch();

  // (a) learned pose + scene discriminator; batch must carry negatives.
  LossRecord train_step_disentangled_baseline(const Batch& batch);
  // (b) keypoint pose; consistency + temporal-shifted reconstruction.
  LossRecord train_step_pretrained_pose(const Batch& batch);
  // (c) D_pose, D_content, then G.
  LossRecord train_step_cgan(const Batch& batch);
  // (d) D_pose, triplet embedder, then G.
  LossRecord train_step_cgan_triplet(const Batch& batch);

  void set_substep_observer(SubstepObserver obs) { observer_ = std::move(obs); }

  std::int64_t steps_per_epoch() const;
  const MethodConfig& config() const { return cfg_; }
  const Networks& networks() const { return nets_; }
  Networks& networks() { return nets_; }
  const TrainState& state() const { return state_; }

  /// Folds a step's losses into the running epoch means.
  void record(const LossRecord& losses);
  /// Closes the current epoch: pushes its means onto the history.
  void finish_epoch();

  CheckpointArchive to_checkpoint() const;
  void restore(const CheckpointArchive& archive);

 private:
  void begin(std::string_view name);
  void end(std::string_view name);
  void zero_grads();
  void update(std::initializer_list<const char*> networks);
  torch::Tensor checked(torch::Tensor loss, const char* name, const LossRecord& so_far) const;

  MethodConfig cfg_;
  std::span<const Clip> clips_;
  Networks nets_;
  std::map<std::string, Adam> optimizers_;
  Sampler sampler_;
  HeatmapConfig heatmap_;
  TrainState state_;
  SubstepObserver observer_;
};

/// Rebuilds the networks stored in a checkpoint (inference mode).
Networks load_networks(const CheckpointArchive& archive);
MethodConfig checkpoint_config(const CheckpointArchive& archive);

struct RunOptions {
  bool resume = false;
  /// Stop (as if interrupted) once this many epochs have completed.
  std::optional<int> stop_after_epoch;
  bool log_progress = true;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_log;
  TrainState state;
};

/// Runs epochs x steps_per_epoch steps, checkpointing after every epoch to
/// `<out>/checkpoint.ckpt` (and `<out>/checkpoint_epoch_NNNN.ckpt`) and
/// appending one record per step to `<out>/metrics.jsonl`. A non-finite loss
/// writes `<out>/failure.ckpt` and rethrows TrainingFailure.
TrainResult run_training(const MethodConfig& cfg, std::span<const Clip> clips,
                         const std::filesystem::path& out_dir, const RunOptions& opts = {});

}  // namespace vidswap
