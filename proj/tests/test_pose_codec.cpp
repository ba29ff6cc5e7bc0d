#include "doctest_torch.hpp"

#include <cfloat>
#include <cmath>
#include <fstream>
#include <numbers>

#include "support.hpp"
#include "vidswap/error.hpp"
#include "vidswap/pose_codec.hpp"

using namespace vidswap;
using namespace vidswap::testing;

namespace {

PoseVector pose_at_pixel(double px, double py, int res) {
  PoseVector p;
  p.visible = true;
  for (auto& kp : p.keypoints) kp = {normalize_coord(px, res), normalize_coord(py, res)};
  return p;
}

}  // namespace

TEST_SUITE("pose_codec") {
  TEST_CASE("normalize maps pixel corners to -1 and +1") {
    CHECK(normalize_coord(0.0, 128) == -1.0);
    CHECK(normalize_coord(127.0, 128) == 1.0);
    CHECK(denormalize_coord(-1.0, 64) == 0.0);
    CHECK(denormalize_coord(1.0, 64) == 63.0);
  }

  TEST_CASE("normalize and denormalize round-trip") {
    Rng rng(3);
    std::vector<PixelPoint> raw;
    for (int i = 0; i < kNumKeypoints; ++i) raw.push_back({rng.uniform(0, 159), rng.uniform(0, 119)});
    const auto pose = normalize_keypoints(raw, 160, 120);
    CHECK(pose.visible);
    CHECK(pose.is_valid());
    const auto back = denormalize_keypoints(pose, 160, 120);
    for (int i = 0; i < kNumKeypoints; ++i) {
      CHECK(back[i].x == doctest::Approx(raw[i].x).epsilon(1e-12));
      CHECK(back[i].y == doctest::Approx(raw[i].y).epsilon(1e-12));
    }
  }

  TEST_CASE("keypoint errors") {
    std::vector<PixelPoint> raw(16);
    CHECK_THROWS_AS(normalize_keypoints(raw, 64, 64), FormatError);
    raw.resize(17);
    raw[4].x = std::nan("");
    CHECK_THROWS_AS(normalize_keypoints(raw, 64, 64), InvalidKeypointError);
    raw[4].x = INFINITY;
    CHECK_THROWS_AS(normalize_keypoints(raw, 64, 64), InvalidKeypointError);
  }

  TEST_CASE("missing pose is the zero vector") {
    const auto p = missing_pose();
    CHECK_FALSE(p.visible);
    CHECK(p.is_valid());
    for (double v : p.flatten()) CHECK(v == 0.0);
  }

  TEST_CASE("flatten layout and from_flat round-trip") {
    Rng rng(5);
    const auto p = random_pose(rng);
    const auto flat = p.flatten();
    CHECK(flat.size() == 35);
    CHECK(flat[0] == p.keypoints[0].x);
    CHECK(flat[1] == p.keypoints[0].y);
    CHECK(flat[33] == p.keypoints[16].y);
    CHECK(flat[34] == 1.0);
    CHECK(PoseVector::from_flat(flat) == p);
    std::vector<double> short_flat(34);
    CHECK_THROWS_AS(PoseVector::from_flat(short_flat), FormatError);
  }

  TEST_CASE("sigma scales with resolution") {
    CHECK(HeatmapConfig::for_resolution(128).sigma == 4.0);
    CHECK(HeatmapConfig::for_resolution(64).sigma == 2.0);
  }

  TEST_CASE("peak value on a grid point equals the density at zero offset") {
    HeatmapConfig cfg;  // 128x128, sigma 4
    const auto hm = render_heatmap(pose_at_pixel(40, 70, 128), cfg);
    const double expected = 1.0 / (2.0 * std::numbers::pi * 16.0);
    CHECK(hm.at(0, 70, 40) == doctest::Approx(expected).epsilon(1e-14));
    double peak = 0.0;
    for (int i = 0; i < 128 * 128; ++i) peak = std::max(peak, hm.values[i]);
    CHECK(peak == hm.at(0, 70, 40));
  }

  TEST_CASE("pixel at distance sigma holds peak * exp(-1/2)") {
    HeatmapConfig cfg;
    const auto hm = render_heatmap(pose_at_pixel(40, 70, 128), cfg);
    const double peak = hm.at(3, 70, 40);
    CHECK(hm.at(3, 70, 44) == doctest::Approx(peak * std::exp(-0.5)).epsilon(1e-12));
    CHECK(hm.at(3, 66, 40) == doctest::Approx(peak * std::exp(-0.5)).epsilon(1e-12));
  }

  TEST_CASE("invisible pose renders all-zero channels") {
    HeatmapConfig cfg = HeatmapConfig::for_resolution(64);
    const auto hm = render_heatmap(missing_pose(), cfg);
    CHECK(hm.values.size() == 17u * 64 * 64);
    for (double v : hm.values) CHECK(v == 0.0);
    CHECK_FALSE(decode_heatmap(hm, cfg).visible);
  }

  TEST_CASE("render matches the brute-force density") {
    Rng rng(11);
    for (int res : {32, 64}) {
      const auto cfg = HeatmapConfig::for_resolution(res);
      for (int trial = 0; trial < 20; ++trial) {
        const auto pose = random_pose(rng, -1.2, 1.2);
        const auto hm = render_heatmap(pose, cfg);
        const auto ref = brute_force_heatmap(pose, res, res, cfg.sigma);
        double worst = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) {
          const double scale = std::max({std::abs(ref[i]), std::abs(hm.values[i]), DBL_MIN});
          worst = std::max(worst, std::abs(ref[i] - hm.values[i]) / scale);
        }
        CHECK(worst <= 1e-6);
      }
    }
  }

  TEST_CASE("translating a keypoint translates its peak") {
    HeatmapConfig cfg = HeatmapConfig::for_resolution(64);
    const auto a = decode_heatmap(render_heatmap(pose_at_pixel(10, 20, 64), cfg), cfg);
    const auto b = decode_heatmap(render_heatmap(pose_at_pixel(13, 25, 64), cfg), cfg);
    const auto pa = denormalize_keypoints(a, 64, 64)[7];
    const auto pb = denormalize_keypoints(b, 64, 64)[7];
    CHECK(pb.x - pa.x == doctest::Approx(3.0));
    CHECK(pb.y - pa.y == doctest::Approx(5.0));
  }

  TEST_CASE("decode recovers grid-aligned poses exactly and others within a pixel") {
    HeatmapConfig cfg = HeatmapConfig::for_resolution(64);
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      const auto pose = random_pose(rng);
      const auto dec = decode_heatmap(render_heatmap(pose, cfg), cfg);
      const auto src = denormalize_keypoints(pose, 64, 64);
      const auto got = denormalize_keypoints(dec, 64, 64);
      for (int i = 0; i < kNumKeypoints; ++i) {
        CHECK(std::abs(got[i].x - src[i].x) <= 0.5 + 1e-9);
        CHECK(std::abs(got[i].y - src[i].y) <= 0.5 + 1e-9);
      }
    }
  }

  TEST_CASE("heatmap tensor is peak-normalized per channel") {
    auto cfg = HeatmapConfig::for_resolution(64);
    Rng rng(9);
    const auto t = heatmap_tensor(render_heatmap(random_pose(rng, -0.9, 0.9), cfg), cfg);
    CHECK(t.sizes() == torch::IntArrayRef({17, 64, 64}));
    const auto peaks = t.flatten(1).amax(1);
    CHECK(torch::allclose(peaks, torch::ones({17})));
    cfg.peak_normalize = false;
    const auto raw = heatmap_tensor(render_heatmap(random_pose(rng, -0.9, 0.9), cfg), cfg);
    CHECK(raw.max().item<double>() < 0.05);
  }

  TEST_CASE("pose_batch stacks flattened poses") {
    Rng rng(1);
    std::vector<PoseVector> poses{random_pose(rng), missing_pose()};
    const auto t = pose_batch(poses);
    CHECK(t.sizes() == torch::IntArrayRef({2, 35}));
    CHECK(t[0][34].item<float>() == 1.0f);
    CHECK(t[1].abs().sum().item<float>() == 0.0f);
  }

  TEST_CASE("keypoint record format and parse") {
    KeypointRecord rec;
    rec.frame = 3;
    rec.visible = true;
    rec.w = 160;
    rec.h = 120;
    for (int i = 0; i < 17; ++i) rec.kp.push_back({i * 1.5, 100.0 - i});
    const auto line = format_keypoint_record(rec);
    CHECK(line.rfind("{\"frame\":3,\"h\":120,\"kp\":[[0.0,100.0]", 0) == 0);
    const auto back = parse_keypoint_record(line, 1);
    CHECK(back.frame == 3);
    CHECK(back.kp.size() == 17);
    CHECK(format_keypoint_record(back) == line);

    KeypointRecord hidden;
    hidden.frame = 4;
    hidden.w = 160;
    hidden.h = 120;
    CHECK(format_keypoint_record(hidden) == "{\"frame\":4,\"h\":120,\"visible\":0,\"w\":160}");
  }

  TEST_CASE("keypoint parse errors name the line") {
    auto expect_line = [](const std::string& text, const std::string& needle) {
      try {
        parse_keypoint_record(text, 12);
        FAIL("expected a format error");
      } catch (const FormatError& e) {
        const std::string what = e.what();
        CHECK(what.find("line 12") != std::string::npos);
        CHECK(what.find(needle) != std::string::npos);
      }
    };
    expect_line("{not json", "malformed");
    expect_line("{\"frame\":0,\"visible\":1,\"w\":10,\"h\":10,\"kp\":[[1,2]]}", "expected 17 keypoints");
    expect_line("{\"frame\":0,\"visible\":2,\"w\":10,\"h\":10}", "visible");
    expect_line("{\"frame\":0,\"visible\":0,\"w\":10}", "malformed");
  }

  TEST_CASE("keypoint file round-trip with a missing detection") {
    TempDir dir("kp");
    std::vector<KeypointRecord> recs;
    Rng rng(4);
    for (int f = 0; f < 5; ++f) {
      auto pose = f == 2 ? missing_pose() : random_pose(rng);
      recs.push_back(to_keypoint_record(pose, f, 160, 120));
    }
    const auto path = dir / "v.kp";
    write_keypoint_records(path, recs);
    const auto poses = read_keypoint_file(path);
    REQUIRE(poses.size() == 5);
    CHECK_FALSE(poses[2].visible);
    CHECK(poses[3].visible);
    const auto again = dir / "w.kp";
    write_keypoint_records(again, read_keypoint_records(path));
    CHECK(read_bytes(path) == read_bytes(again));
  }

  TEST_CASE("keypoint file with a frame gap is rejected") {
    TempDir dir("kpgap");
    std::ofstream(dir / "g.kp") << "{\"frame\":0,\"h\":10,\"visible\":0,\"w\":10}\n"
                                << "{\"frame\":2,\"h\":10,\"visible\":0,\"w\":10}\n";
    CHECK_THROWS_AS(read_keypoint_file(dir / "g.kp"), FormatError);
  }
}
