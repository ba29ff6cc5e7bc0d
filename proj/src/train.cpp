#include "vidswap/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vidswap/error.hpp"
#include "vidswap/log.hpp"
#include "vidswap/losses.hpp"

namespace vidswap {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------------ metrics log

std::string format_step_record(const StepRecord& r) {
  json losses = json::object();
  for (const auto& [k, v] : r.losses) losses[k] = v;
  return json{{"step", r.step}, {"epoch", r.epoch}, {"losses", losses}, {"wall_time", r.wall_time}}
      .dump();
}

StepRecord parse_step_record(const std::string& line, std::size_t line_number) {
  const std::string where = "metrics line " + std::to_string(line_number) + ": ";
  try {
    const json j = json::parse(line);
    StepRecord r;
    r.step = j.at("step").get<std::int64_t>();
    r.epoch = j.at("epoch").get<int>();
    r.wall_time = j.at("wall_time").get<double>();
    for (const auto& item : j.at("losses").items()) r.losses[item.key()] = item.value().get<double>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(where + e.what());
  }
}

std::vector<StepRecord> read_metrics_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FilesystemError("cannot open metrics log " + path.string());
  std::vector<StepRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty()) out.push_back(parse_step_record(line, n));
  }
  return out;
}

void write_metrics_log(const fs::path& path, std::span<const StepRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FilesystemError("cannot write metrics log " + path.string());
  for (const auto& r : records) out << format_step_record(r) << '\n';
}

// ------------------------------------------------------------------ trainer

Trainer::Trainer(MethodConfig cfg, std::span<const Clip> clips)
    : cfg_(std::move(cfg)),
      clips_(clips),
      nets_(Networks::create(cfg_.method, cfg_.net, cfg_.seed)),
      sampler_(cfg_.sampler),
      heatmap_(cfg_.heatmap()) {
  cfg_.validate();
  if (clips_.empty()) throw ConfigError("training needs a non-empty dataset");
  for (const auto& c : clips_) {
    if (c.resolution() != cfg_.net.in_resolution) {
      throw ConfigError("clip " + c.video_id + " has resolution " + std::to_string(c.resolution()) +
                        " but net.in_resolution is " + std::to_string(cfg_.net.in_resolution));
    }
  }
  if (cfg_.method == Method::kDisentangledBaseline && clips_.size() < 2) {
    throw ConfigError("disentangled_baseline needs at least 2 clips for negative pairs");
  }
  torch::set_num_threads(1);
  nets_.train(true);
  for (const auto& [name, module] : nets_.modules()) {
    std::vector<torch::Tensor> params;
    std::vector<std::string> names;
    for (const auto& item : module->named_parameters(true)) {
      std::string key = item.key();
      std::replace(key.begin(), key.end(), '.', '/');
      params.push_back(item.value());
      names.push_back(name + "/" + key);
    }
    optimizers_.emplace(name, Adam(std::move(params), std::move(names), cfg_.adam()));
  }
}

std::int64_t Trainer::steps_per_epoch() const {
  std::int64_t frames = 0;
  for (const auto& c : clips_) frames += c.length();
  return (frames + cfg_.batch_size - 1) / cfg_.batch_size;
}

Batch Trainer::next_batch() {
  return sample_batch(sampler_, clips_, cfg_.batch_size,
                      cfg_.method == Method::kDisentangledBaseline);
}

LossRecord Trainer::step() {
  const double lr = cfg_.learning_rate_at(state_.epoch);
  for (auto& [name, opt] : optimizers_) opt.set_learning_rate(lr);
  const Batch batch = next_batch();
  LossRecord r;
  switch (cfg_.method) {
    case Method::kDisentangledBaseline: r = train_step_disentangled_baseline(batch); break;
    case Method::kDisentangledPretrainedPose: r = train_step_pretrained_pose(batch); break;
    case Method::kCgan: r = train_step_cgan(batch); break;
    case Method::kCganTriplet: r = train_step_cgan_triplet(batch); break;
  }
  ++state_.global_step;
  return r;
}

void Trainer::begin(std::string_view name) {
  zero_grads();
  if (observer_) observer_(name, SubstepPhase::kBegin);
}

void Trainer::end(std::string_view name) {
  if (observer_) observer_(name, SubstepPhase::kEnd);
}

void Trainer::zero_grads() {
  for (const auto& [name, module] : nets_.modules()) {
    for (auto& p : module->parameters()) p.mutable_grad().reset();
  }
}

void Trainer::update(std::initializer_list<const char*> networks) {
  for (const char* n : networks) {
    if (auto it = optimizers_.find(n); it != optimizers_.end()) it->second.step();
  }
}

torch::Tensor Trainer::checked(torch::Tensor loss, const char* name, const LossRecord& so_far) const {
  const double v = loss.item<double>();
  if (!std::isfinite(v)) {
    std::string diag = "non-finite " + std::string(name) + " loss at step " +
                       std::to_string(state_.global_step) + " (epoch " +
                       std::to_string(state_.epoch) + "); record so far:";
    for (const auto& [k, x] : so_far) diag += " " + k + "=" + std::to_string(x);
    throw TrainingFailure(diag);
  }
  return loss;
}

LossRecord Trainer::train_step_disentangled_baseline(const Batch& b) {
  if (!b.negative.defined()) throw ConfigError("disentangled_baseline needs negative frames");
  const auto& w = cfg_.weights;
  LossRecord rec;

  begin("scene_discriminator");
  for (int i = 0; i < cfg_.d_steps_per_g_step; ++i) {
    if (i > 0) zero_grads();
    torch::Tensor z_t, z_tk, z_neg;
    {
      torch::NoGradGuard no_grad;  // E_p is held fixed
      z_t = nets_.pose_encoder->forward(b.anchor);
      z_tk = nets_.pose_encoder->forward(b.offset);
      z_neg = nets_.pose_encoder->forward(b.negative);
    }
    auto adv_c = loss_adv_scene_discriminator(nets_.scene_discriminator->forward(z_t, z_tk),
                                              nets_.scene_discriminator->forward(z_t, z_neg));
    rec["adv_C"] = checked(adv_c, "adv_C", rec).item<double>();
    adv_c.backward();
    update({"scene_discriminator"});
  }
  end("scene_discriminator");

  begin("generator");
  const auto z_t = nets_.pose_encoder->forward(b.anchor);
  const auto c_tk = nets_.content_encoder->forward(b.offset);
  auto rec_loss = loss_reconstruction(b.anchor, nets_.decoder->forward(c_tk, z_t));
  rec["rec"] = checked(rec_loss, "rec", rec).item<double>();
  auto total = w.w_rec * rec_loss;
  if (w.w_consist > 0.0) {
    auto consist = loss_consistency(nets_.content_encoder->forward(b.anchor), c_tk);
    rec["consist"] = checked(consist, "consist", rec).item<double>();
    total = total + w.w_consist * consist;
  }
  if (w.w_adv_pose_code > 0.0) {
    // C is not stepped here; its gradients are discarded by the next zero_grads.
    const auto z_tk = nets_.pose_encoder->forward(b.offset);
    auto adv_ep = loss_adv_pose_encoder(nets_.scene_discriminator->forward(z_t, z_tk));
    rec["adv_Ep"] = checked(adv_ep, "adv_Ep", rec).item<double>();
    total = total + w.w_adv_pose_code * adv_ep;
  }
  total.backward();
  update({"content_encoder", "pose_encoder", "decoder"});
  end("generator");
  return rec;
}

LossRecord Trainer::train_step_pretrained_pose(const Batch& b) {
  const auto& w = cfg_.weights;
  LossRecord rec;
  begin("generator");
  const auto z_t = pose_batch(b.anchor_poses);
  const auto c_tk = nets_.content_encoder->forward(b.offset);
  auto rec_loss = loss_reconstruction(b.anchor, nets_.decoder->forward(c_tk, z_t));
  rec["rec"] = checked(rec_loss, "rec", rec).item<double>();
  auto total = w.w_rec * rec_loss;
  if (w.w_consist > 0.0) {
    auto consist = loss_consistency(nets_.content_encoder->forward(b.anchor), c_tk);
    rec["consist"] = checked(consist, "consist", rec).item<double>();
    total = total + w.w_consist * consist;
  }
  total.backward();
  update({"content_encoder", "decoder"});
  end("generator");
  return rec;
}

LossRecord Trainer::train_step_cgan(const Batch& b) {
  const auto& w = cfg_.weights;
  LossRecord rec;
  // t' = t + k: the generator renders frame t's content in frame t''s pose.
  const auto hm_t = heatmap_batch(b.anchor_poses, heatmap_);
  const auto hm_tp = heatmap_batch(b.offset_poses, heatmap_);
  const auto c_t = nets_.content_encoder->forward(b.anchor);
  const auto fake = nets_.decoder->forward(c_t, pose_batch(b.offset_poses));
  const auto fake_d = fake.detach();

  begin("pose_discriminator");
  for (int i = 0; i < cfg_.d_steps_per_g_step; ++i) {
    if (i > 0) zero_grads();
    auto d_pose = loss_pose_discriminator(nets_.pose_discriminator->forward(b.anchor, hm_t),
                                          nets_.pose_discriminator->forward(fake_d, hm_tp));
    rec["d_pose"] = checked(d_pose, "d_pose", rec).item<double>();
    d_pose.backward();
    update({"pose_discriminator"});
  }
  end("pose_discriminator");

  begin("content_discriminator");
  for (int i = 0; i < cfg_.d_steps_per_g_step; ++i) {
    if (i > 0) zero_grads();
    auto d_content = loss_content_discriminator(
        nets_.content_discriminator->forward(b.anchor, b.offset),
        nets_.content_discriminator->forward(fake_d, b.anchor));
    rec["d_content"] = checked(d_content, "d_content", rec).item<double>();
    d_content.backward();
    update({"content_discriminator"});
  }
  end("content_discriminator");

  begin("generator");
  auto g_gan =
      w.w_gan_content * loss_generator_gan(nets_.content_discriminator->forward(fake, b.anchor), {}) +
      w.w_gan_pose * loss_generator_gan({}, nets_.pose_discriminator->forward(fake, hm_tp));
  rec["g_gan"] = checked(g_gan, "g_gan", rec).item<double>();
  auto total = g_gan;
  if (cfg_.cgan_reconstruction && w.w_rec > 0.0) {
    auto rec_loss = loss_reconstruction(b.offset, fake);
    rec["rec"] = checked(rec_loss, "rec", rec).item<double>();
    total = total + w.w_rec * rec_loss;
  }
  if (cfg_.cgan_consistency && w.w_consist > 0.0) {
    auto consist = loss_consistency(c_t, nets_.content_encoder->forward(b.offset));
    rec["consist"] = checked(consist, "consist", rec).item<double>();
    total = total + w.w_consist * consist;
  }
  total.backward();
  update({"content_encoder", "decoder"});
  end("generator");
  return rec;
}

LossRecord Trainer::train_step_cgan_triplet(const Batch& b) {
  const auto& w = cfg_.weights;
  LossRecord rec;
  const auto hm_t = heatmap_batch(b.anchor_poses, heatmap_);
  const auto hm_tp = heatmap_batch(b.offset_poses, heatmap_);
  const auto c_t = nets_.content_encoder->forward(b.anchor);
  const auto fake = nets_.decoder->forward(c_t, pose_batch(b.offset_poses));
  const auto fake_d = fake.detach();

  begin("pose_discriminator");
  for (int i = 0; i < cfg_.d_steps_per_g_step; ++i) {
    if (i > 0) zero_grads();
    auto d_pose = loss_pose_discriminator(nets_.pose_discriminator->forward(b.anchor, hm_t),
                                          nets_.pose_discriminator->forward(fake_d, hm_tp));
    rec["d_pose"] = checked(d_pose, "d_pose", rec).item<double>();
    d_pose.backward();
    update({"pose_discriminator"});
  }
  end("pose_discriminator");

  begin("content_embedder");
  for (int i = 0; i < cfg_.d_steps_per_g_step; ++i) {
    if (i > 0) zero_grads();
    auto& embed = nets_.content_embedder;
    auto triplet = loss_triplet(embed->forward(b.anchor), embed->forward(b.offset),
                                embed->forward(fake_d), w.margin);
    rec["triplet"] = checked(triplet, "triplet", rec).item<double>();
    triplet.backward();
    update({"content_embedder"});
  }
  end("content_embedder");

  begin("generator");
  auto g_gan = w.w_gan_pose * loss_generator_gan({}, nets_.pose_discriminator->forward(fake, hm_tp));
  rec["g_gan"] = checked(g_gan, "g_gan", rec).item<double>();
  auto total = g_gan;
  if (w.w_triplet > 0.0) {
    torch::Tensor target;
    {
      torch::NoGradGuard no_grad;
      target = nets_.content_embedder->forward(b.anchor);
    }
    auto pull = loss_content_pull(nets_.content_embedder->forward(fake), target);
    rec["g_content_pull"] = checked(pull, "g_content_pull", rec).item<double>();
    total = total + w.w_triplet * pull;
  }
  if (cfg_.cgan_reconstruction && w.w_rec > 0.0) {
    auto rec_loss = loss_reconstruction(b.offset, fake);
    rec["rec"] = checked(rec_loss, "rec", rec).item<double>();
    total = total + w.w_rec * rec_loss;
  }
  if (cfg_.cgan_consistency && w.w_consist > 0.0) {
    auto consist = loss_consistency(c_t, nets_.content_encoder->forward(b.offset));
    rec["consist"] = checked(consist, "consist", rec).item<double>();
    total = total + w.w_consist * consist;
  }
  total.backward();
  update({"content_encoder", "decoder"});
  end("generator");
  return rec;
}

void Trainer::record(const LossRecord& losses) {
  for (const auto& [k, v] : losses) state_.epoch_sums[k] += v;
  ++state_.epoch_steps;
}

void Trainer::finish_epoch() {
  LossRecord means;
  for (const auto& [k, v] : state_.epoch_sums) {
    means[k] = v / static_cast<double>(std::max<std::int64_t>(1, state_.epoch_steps));
  }
  state_.history.push_back(std::move(means));
  state_.epoch_sums.clear();
  state_.epoch_steps = 0;
  ++state_.epoch;
}

// ------------------------------------------------------------------ checkpoints

CheckpointArchive Trainer::to_checkpoint() const {
  CheckpointArchive a;
  a.metadata["method"] = method_name(cfg_.method);
  a.metadata["net"] = to_json(cfg_.net);
  a.metadata["config"] = to_json(cfg_);
  a.metadata["epoch"] = state_.epoch;
  a.metadata["global_step"] = state_.global_step;
  a.metadata["seed"] = cfg_.seed;
  a.metadata["sampler_state"] = sampler_.state();
  json history = json::array();
  for (const auto& h : state_.history) history.push_back(h);
  a.metadata["loss_history"] = history;
  a.metadata["epoch_sums"] = state_.epoch_sums;
  a.metadata["epoch_steps"] = state_.epoch_steps;
  json opt_steps = json::object();
  for (const auto& [name, opt] : optimizers_) opt_steps[name] = opt.steps();
  a.metadata["optimizer_steps"] = opt_steps;
  a.tensors = nets_.named_parameters();
  for (const auto& [name, opt] : optimizers_) {
    for (auto& [key, t] : opt.state_tensors()) a.tensors.emplace_back("optim/" + key, t);
  }
  return a;
}

namespace {

void copy_parameters(const Networks& nets, const CheckpointArchive& a) {
  torch::NoGradGuard guard;
  for (auto& [key, p] : nets.named_parameters()) {
    const auto& src = a.tensor(key);
    if (src.sizes() != p.sizes()) throw FormatError("checkpoint: shape mismatch for " + key);
    p.copy_(src);
  }
}

}  // namespace

void Trainer::restore(const CheckpointArchive& a) {
  const auto saved = method_config_from_json(a.metadata.at("config"));
  if (saved.method != cfg_.method || to_json(saved.net) != to_json(cfg_.net)) {
    throw ConfigError("checkpoint method/net config does not match the training config");
  }
  copy_parameters(nets_, a);
  std::vector<std::pair<std::string, torch::Tensor>> optim;
  for (const auto& [key, t] : a.tensors) {
    if (key.starts_with("optim/")) optim.emplace_back(key.substr(6), t);
  }
  for (auto& [name, opt] : optimizers_) {
    opt.load_state(a.metadata.at("optimizer_steps").at(name).get<std::int64_t>(), optim);
  }
  sampler_.restore(a.metadata.at("sampler_state").get<std::string>());
  state_.epoch = a.metadata.at("epoch").get<int>();
  state_.global_step = a.metadata.at("global_step").get<std::int64_t>();
  state_.history.clear();
  for (const auto& h : a.metadata.at("loss_history")) state_.history.push_back(h.get<LossRecord>());
  state_.epoch_sums = a.metadata.at("epoch_sums").get<LossRecord>();
  state_.epoch_steps = a.metadata.at("epoch_steps").get<std::int64_t>();
}

MethodConfig checkpoint_config(const CheckpointArchive& a) {
  if (!a.metadata.contains("config")) throw FormatError("checkpoint has no config record");
  return method_config_from_json(a.metadata.at("config"));
}

Networks load_networks(const CheckpointArchive& a) {
  const auto cfg = checkpoint_config(a);
  Networks nets = Networks::create(cfg.method, cfg.net, cfg.seed);
  copy_parameters(nets, a);
  nets.train(false);
  return nets;
}

// ------------------------------------------------------------------ run loop

TrainResult run_training(const MethodConfig& cfg, std::span<const Clip> clips, const fs::path& out_dir,
                         const RunOptions& opts) {
  fs::create_directories(out_dir);
  const fs::path latest = out_dir / "checkpoint.ckpt";
  const fs::path metrics = out_dir / "metrics.jsonl";
  write_json_file(out_dir / "config.json", to_json(cfg));

  Trainer trainer(cfg, clips);
  std::vector<StepRecord> kept;
  if (opts.resume) {
    if (!fs::exists(latest)) throw FilesystemError("nothing to resume: " + latest.string() + " missing");
    trainer.restore(read_checkpoint(latest));
    if (fs::exists(metrics)) {
      for (auto& r : read_metrics_log(metrics)) {
        if (r.step < trainer.state().global_step) kept.push_back(std::move(r));
      }
    }
  }
  write_metrics_log(metrics, kept);
  std::ofstream log(metrics, std::ios::binary | std::ios::app);

  const auto t0 = std::chrono::steady_clock::now();
  const std::int64_t steps = trainer.steps_per_epoch();
  try {
    while (trainer.state().epoch < cfg.epochs) {
      if (opts.stop_after_epoch && trainer.state().epoch >= *opts.stop_after_epoch) break;
      for (std::int64_t s = 0; s < steps; ++s) {
        StepRecord r;
        r.step = trainer.state().global_step;
        r.epoch = trainer.state().epoch;
        r.losses = trainer.step();
        r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        trainer.record(r.losses);
        log << format_step_record(r) << '\n';
      }
      log.flush();
      trainer.finish_epoch();
      const auto ckpt = trainer.to_checkpoint();
      char name[40];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%04d.ckpt", trainer.state().epoch);
      write_checkpoint(out_dir / name, ckpt);
      write_checkpoint(latest, ckpt);
      if (opts.log_progress) {
        std::string summary;
        for (const auto& [k, v] : trainer.state().history.back()) {
          char item[96];
          std::snprintf(item, sizeof(item), " %s=%.5f", k.c_str(), v);
          summary += item;
        }
        log::info("epoch " + std::to_string(trainer.state().epoch) + "/" + std::to_string(cfg.epochs) +
                  ":" + summary);
      }
    }
  } catch (const TrainingFailure& e) {
    auto ckpt = trainer.to_checkpoint();
    ckpt.metadata["status"] = "failed";
    ckpt.metadata["failure"] = e.what();
    write_checkpoint(out_dir / "failure.ckpt", ckpt);
    log::error(e.what());
    throw;
  }
  return {latest, metrics, trainer.state()};
}

}  // namespace vidswap
