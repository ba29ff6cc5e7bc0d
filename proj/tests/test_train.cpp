#include "doctest_torch.hpp"

#include <cmath>
#include <set>

#include "support.hpp"
#include "vidswap/error.hpp"
#include "vidswap/losses.hpp"
#include "vidswap/train.hpp"

using namespace vidswap;
using namespace vidswap::testing;
namespace fs = std::filesystem;

namespace {

MethodConfig tiny_method(Method m, std::uint64_t seed = 0) {
  MethodConfig cfg;
  cfg.method = m;
  cfg.net = tiny_net();
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.seed = seed;
  cfg.sampler.seed = seed;
  cfg.sampler.window = 2;
  return cfg;
}

std::set<std::string> keys(const LossRecord& r) {
  std::set<std::string> k;
  for (const auto& [name, v] : r) k.insert(name);
  return k;
}

std::vector<LossRecord> trace(Trainer& t, int steps) {
  std::vector<LossRecord> out;
  for (int i = 0; i < steps; ++i) out.push_back(t.step());
  return out;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("loss record keys per method") {
    const auto clips = tiny_clips();
    const std::vector<std::pair<Method, std::set<std::string>>> expected{
        {Method::kDisentangledBaseline, {"rec", "consist", "adv_C", "adv_Ep"}},
        {Method::kDisentangledPretrainedPose, {"rec", "consist"}},
        {Method::kCgan, {"d_pose", "d_content", "g_gan", "rec"}},
        {Method::kCganTriplet, {"d_pose", "triplet", "g_gan", "g_content_pull", "rec"}},
    };
    for (const auto& [m, k] : expected) {
      Trainer t(tiny_method(m), clips);
      CHECK(keys(t.step()) == k);
    }
  }

  TEST_CASE("zero consistency weight reduces method (b) to reconstruction only") {
    auto cfg = tiny_method(Method::kDisentangledPretrainedPose);
    cfg.weights.w_consist = 0.0;
    const auto clips = tiny_clips();
    Trainer t(cfg, clips);
    CHECK(keys(t.step()) == std::set<std::string>{"rec"});
  }

  TEST_CASE("identical frames at t and t+k reduce the shifted reconstruction to self-reconstruction") {
    const auto clips = tiny_clips();
    const auto cfg = tiny_method(Method::kDisentangledPretrainedPose);
    Trainer probe(cfg, clips), t(cfg, clips);
    Sampler s(cfg.sampler);
    auto batch = sample_batch(s, clips, 4, false);
    batch.offset = batch.anchor.clone();
    batch.offset_poses = batch.anchor_poses;
    double expected;
    {
      torch::NoGradGuard g;
      auto& n = probe.networks();
      expected = loss_reconstruction(batch.anchor, n.decoder->forward(n.content_encoder->forward(batch.anchor),
                                                                      pose_batch(batch.anchor_poses)))
                     .item<double>();
    }
    const auto rec = t.train_step_pretrained_pose(batch);
    CHECK(rec.at("rec") == expected);
    CHECK(rec.at("consist") == 0.0);
  }

  TEST_CASE("untrained pose discriminator starts near 2 ln 2") {
    const auto clips = tiny_clips();
    Trainer t(tiny_method(Method::kCgan), clips);
    const auto r = t.step();
    CHECK(std::abs(r.at("d_pose") - 2.0 * std::log(2.0)) < 0.05);
    CHECK(std::abs(r.at("d_content") - 2.0 * std::log(2.0)) < 0.05);
  }

  TEST_CASE("substeps only move their own networks") {
    const auto clips = tiny_clips();
    for (auto m : {Method::kDisentangledBaseline, Method::kCgan, Method::kCganTriplet}) {
      Trainer t(tiny_method(m, 3), clips);
      std::map<std::string, std::uint64_t> before;
      int violations = 0, changed = 0;
      t.set_substep_observer([&](std::string_view sub, SubstepPhase phase) {
        for (const auto& [name, mod] : t.networks().modules()) {
          const auto h = parameter_hash(*mod);
          if (phase == SubstepPhase::kBegin) {
            before[name] = h;
            continue;
          }
          const bool own = sub == "generator" ? (name == "content_encoder" || name == "pose_encoder" || name == "decoder")
                                              : name == sub;
          if (h != before[name]) {
            own ? ++changed : ++violations;
          }
        }
      });
      trace(t, 5);
      CHECK(violations == 0);
      CHECK(changed > 0);
    }
  }

  TEST_CASE("fixed seeds give identical loss traces") {
    const auto clips = tiny_clips();
    for (auto m : {Method::kDisentangledBaseline, Method::kDisentangledPretrainedPose, Method::kCgan,
                   Method::kCganTriplet}) {
      Trainer a(tiny_method(m, 5), clips), b(tiny_method(m, 5), clips);
      CHECK(trace(a, 4) == trace(b, 4));
    }
  }

  TEST_CASE("checkpoint restore continues the trace exactly") {
    const auto clips = tiny_clips();
    for (auto m : {Method::kDisentangledBaseline, Method::kCganTriplet}) {
      Trainer a(tiny_method(m, 9), clips);
      trace(a, 3);
      const auto ckpt = deserialize_checkpoint(serialize_checkpoint(a.to_checkpoint()));
      const auto expected = trace(a, 3);
      Trainer b(tiny_method(m, 1234), clips);
      b.restore(ckpt);
      CHECK(trace(b, 3) == expected);
    }
  }

  TEST_CASE("restoring another method's checkpoint is refused") {
    const auto clips = tiny_clips();
    Trainer a(tiny_method(Method::kCgan), clips);
    Trainer b(tiny_method(Method::kCganTriplet), clips);
    CHECK_THROWS_AS(b.restore(a.to_checkpoint()), ConfigError);
  }

  TEST_CASE("trainer rejects mismatched data") {
    auto cfg = tiny_method(Method::kDisentangledBaseline);
    const auto one = tiny_clips(1);
    CHECK_THROWS_AS(Trainer(cfg, one), ConfigError);
    cfg.net.in_resolution = 64;
    cfg.net.n_layers = 6;
    const auto clips = tiny_clips();
    CHECK_THROWS_AS(Trainer(cfg, clips), ConfigError);
  }

  TEST_CASE("run_training writes a parsable checkpoint and log") {
    TempDir dir("run");
    const auto clips = tiny_clips(10, 4);
    auto cfg = tiny_method(Method::kDisentangledPretrainedPose);
    cfg.epochs = 1;
    RunOptions opts;
    opts.log_progress = false;
    const auto result = run_training(cfg, clips, dir.path(), opts);
    CHECK(fs::exists(result.checkpoint));
    CHECK(fs::exists(dir / "checkpoint_epoch_0001.ckpt"));
    CHECK(fs::exists(dir / "config.json"));
    const auto log = read_metrics_log(result.metrics_log);
    CHECK(static_cast<std::int64_t>(log.size()) == result.state.global_step);
    CHECK(result.state.global_step == 10);  // 40 frames / batch 4
    const auto archive = read_checkpoint(result.checkpoint);
    CHECK(archive.metadata.at("epoch").get<int>() == 1);
    CHECK(checkpoint_config(archive).method == Method::kDisentangledPretrainedPose);
    const auto nets = load_networks(archive);
    CHECK(parameter_hash(*nets.decoder) != 0);
  }

  TEST_CASE("interrupted run resumed gives the uninterrupted trace") {
    TempDir full("full"), part("part");
    const auto clips = tiny_clips(6, 4);
    auto cfg = tiny_method(Method::kCgan, 2);
    cfg.epochs = 3;
    RunOptions opts;
    opts.log_progress = false;
    run_training(cfg, clips, full.path(), opts);
    opts.stop_after_epoch = 1;
    run_training(cfg, clips, part.path(), opts);
    CHECK(read_metrics_log(part / "metrics.jsonl").size() == 6);
    opts.stop_after_epoch.reset();
    opts.resume = true;
    run_training(cfg, clips, part.path(), opts);
    const auto a = read_metrics_log(full / "metrics.jsonl"), b = read_metrics_log(part / "metrics.jsonl");
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].step == b[i].step);
      CHECK(a[i].epoch == b[i].epoch);
      CHECK(a[i].losses == b[i].losses);
    }
    CHECK(read_bytes(full / "checkpoint.ckpt").size() == read_bytes(part / "checkpoint.ckpt").size());
  }

  TEST_CASE("a non-finite loss aborts with a failure checkpoint") {
    TempDir dir("nan");
    auto clips = tiny_clips(3, 4);
    for (auto& c : clips) c.frames[0].fill_(std::nanf(""));
    auto cfg = tiny_method(Method::kDisentangledPretrainedPose);
    RunOptions opts;
    opts.log_progress = false;
    CHECK_THROWS_AS(run_training(cfg, clips, dir.path(), opts), TrainingFailure);
    CHECK(fs::exists(dir / "failure.ckpt"));
    CHECK(read_checkpoint(dir / "failure.ckpt").metadata.at("status") == "failed");
  }

  TEST_CASE("step decay changes the rate only from the decay epoch") {
    MethodConfig cfg;
    cfg.learning_rate = 1e-3;
    CHECK(cfg.learning_rate_at(50) == 1e-3);
    cfg.lr_decay_epochs = {3, 5};
    cfg.lr_decay_factor = 0.25;
    CHECK(cfg.learning_rate_at(2) == 1e-3);
    CHECK(cfg.learning_rate_at(3) == 1e-3 * 0.25);
    CHECK(cfg.learning_rate_at(7) == 1e-3 * 0.25 * 0.25);
    cfg.lr_decay_factor = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.lr_decay_factor = 0.1;
    cfg.lr_decay_epochs = {0};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    const auto clips = tiny_clips(4, 4);
    auto plain = tiny_method(Method::kDisentangledPretrainedPose, 6);
    auto decayed = plain;
    decayed.lr_decay_epochs = {1};
    decayed.lr_decay_factor = 0.01;
    Trainer a(plain, clips), b(decayed, clips);
    const auto n = static_cast<int>(a.steps_per_epoch());
    CHECK(trace(a, n) == trace(b, n));
    a.finish_epoch();
    b.finish_epoch();
    CHECK(a.step() == b.step());
    CHECK(a.step() != b.step());
  }

  TEST_CASE("metrics records round-trip byte for byte") {
    StepRecord r{17, 2, {{"rec", 0.123456789012345}, {"consist", 3.0}}, 1.5};
    const auto line = format_step_record(r);
    const auto back = parse_step_record(line, 1);
    CHECK(back.step == 17);
    CHECK(back.losses == r.losses);
    CHECK(format_step_record(back) == line);
    CHECK_THROWS_AS(parse_step_record("{\"step\":1}", 4), FormatError);
  }
}
