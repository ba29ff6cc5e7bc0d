#include "doctest_torch.hpp"

#include <cmath>

#include "support.hpp"
#include "vidswap/error.hpp"
#include "vidswap/losses.hpp"

using namespace vidswap;
using namespace vidswap::testing;

namespace {

torch::Tensor scalar_probs(std::initializer_list<double> v) {
  return torch::tensor(std::vector<double>(v), torch::kFloat64);
}

ContentCode random_code(std::int64_t batch, std::uint64_t seed) {
  torch::manual_seed(seed);
  ContentCode c;
  c.bottleneck = torch::randn({batch, 4, 1, 1}, torch::kFloat64);
  c.skips = {torch::randn({batch, 2, 4, 4}, torch::kFloat64), torch::randn({batch, 3, 2, 2}, torch::kFloat64)};
  return c;
}

double value(const torch::Tensor& t) { return t.item<double>(); }

// Central difference of a scalar function of one probability.
double numeric_derivative(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("consistency: zero, one-element and batch cases") {
    const auto c = random_code(3, 1);
    CHECK(value(loss_consistency(c, c)) == 0.0);
    auto d = random_code(3, 1);
    d.skips[1][1][2][0][1] += 1.0;
    CHECK(value(loss_consistency(c, d)) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(value(loss_consistency(c, random_code(3, 2))) >= 0.0);
    auto bad = random_code(3, 1);
    bad.skips.pop_back();
    CHECK_THROWS_AS(loss_consistency(c, bad), ConfigError);
  }

  TEST_CASE("reconstruction: zero, constant offset and symmetry") {
    const auto a = torch::rand({2, 3, 8, 8}, torch::kFloat64);
    CHECK(value(loss_reconstruction(a, a)) == 0.0);
    CHECK(value(loss_reconstruction(a, a + 0.1)) == doctest::Approx(0.01).epsilon(1e-12));
    const auto b = torch::rand({2, 3, 8, 8}, torch::kFloat64);
    CHECK(value(loss_reconstruction(a, b)) == value(loss_reconstruction(b, a)));
    CHECK_THROWS_AS(loss_reconstruction(a, b.narrow(0, 0, 1)), ConfigError);
  }

  TEST_CASE("BCE losses equal 2 ln 2 at one half") {
    const auto half = scalar_probs({0.5});
    const double two_ln2 = 2.0 * std::log(2.0);
    CHECK(std::abs(value(loss_adv_scene_discriminator(half, half)) - two_ln2) <= 1e-12);
    CHECK(std::abs(value(loss_pose_discriminator(half, half)) - two_ln2) <= 1e-12);
    CHECK(std::abs(value(loss_content_discriminator(half, half)) - two_ln2) <= 1e-12);
    CHECK(std::abs(value(loss_generator_gan(half, half)) - two_ln2) <= 1e-12);
    CHECK(std::abs(value(loss_adv_pose_encoder(half)) - std::log(2.0)) <= 1e-12);
  }

  TEST_CASE("perfect discriminator and generator limits go to zero") {
    const auto hi = scalar_probs({1.0 - 1e-12}), lo = scalar_probs({1e-12});
    CHECK(value(loss_adv_scene_discriminator(hi, lo)) < 1e-6);
    CHECK(value(loss_pose_discriminator(hi, lo)) < 1e-6);
    CHECK(value(loss_content_discriminator(hi, lo)) < 1e-6);
    CHECK(value(loss_generator_gan(hi, hi)) < 1e-6);
    // The pose-encoder adversary explodes as the discriminator becomes certain.
    CHECK(value(loss_adv_pose_encoder(hi)) > 5.0);
  }

  TEST_CASE("interior probabilities give positive losses") {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
      const auto p = scalar_probs({rng.uniform(0.01, 0.99)}), q = scalar_probs({rng.uniform(0.01, 0.99)});
      CHECK(value(loss_adv_scene_discriminator(p, q)) > 0.0);
      CHECK(value(loss_pose_discriminator(p, q)) > 0.0);
      CHECK(value(loss_generator_gan(p, q)) > 0.0);
    }
  }

  TEST_CASE("probabilities outside (0, 1) are domain errors") {
    const auto ok = scalar_probs({0.5});
    for (double bad : {0.0, 1.0, -0.1, 1.5}) {
      const auto p = scalar_probs({bad});
      CHECK_THROWS_AS(loss_adv_scene_discriminator(p, ok), DomainError);
      CHECK_THROWS_AS(loss_adv_pose_encoder(p), DomainError);
      CHECK_THROWS_AS(loss_pose_discriminator(ok, p), DomainError);
      CHECK_THROWS_AS(loss_content_discriminator(p, ok), DomainError);
      CHECK_THROWS_AS(loss_generator_gan(p, ok), DomainError);
    }
  }

  TEST_CASE("pose-encoder adversary is minimal at one half and convex in the logit") {
    auto at_logit = [](double z) {
      return value(loss_adv_pose_encoder(scalar_probs({1.0 / (1.0 + std::exp(-z))})));
    };
    const double h = 0.05;
    for (double z = -6.0; z <= 6.0; z += 0.25) {
      CHECK(at_logit(z - h) - 2 * at_logit(z) + at_logit(z + h) >= -1e-12);
      CHECK(at_logit(z) >= std::log(2.0) - 1e-12);
    }
  }

  TEST_CASE("gradient signs") {
    auto d_real = scalar_probs({0.3}).requires_grad_(true);
    loss_pose_discriminator(d_real, scalar_probs({0.4})).backward();
    CHECK(d_real.grad().item<double>() < 0.0);
    auto c_real = scalar_probs({0.7}).requires_grad_(true);
    loss_content_discriminator(c_real, scalar_probs({0.4})).backward();
    CHECK(c_real.grad().item<double>() < 0.0);
    // Generator loss decreases in each argument.
    auto a = scalar_probs({0.2}).requires_grad_(true), b = scalar_probs({0.6}).requires_grad_(true);
    loss_generator_gan(a, b).backward();
    CHECK(a.grad().item<double>() < 0.0);
    CHECK(b.grad().item<double>() < 0.0);
  }

  TEST_CASE("generator GAN loss drops an undefined term") {
    const auto p = scalar_probs({0.25});
    CHECK(value(loss_generator_gan(p, torch::Tensor())) == doctest::Approx(-std::log(0.25)).epsilon(1e-12));
    CHECK(value(loss_generator_gan(torch::Tensor(), p)) == doctest::Approx(-std::log(0.25)).epsilon(1e-12));
  }

  TEST_CASE("triplet worked example and hinge bounds") {
    const auto a = torch::tensor({{0.0, 0.0}}, torch::kFloat64);
    const auto n = torch::tensor({{1.0, 0.0}}, torch::kFloat64);
    CHECK(std::abs(value(loss_triplet(a, a, n, 2.0)) - 1.0) <= 1e-12);
    CHECK(value(loss_triplet(a, a, n * 3.0, 2.0)) == 0.0);
    // a = p = n gives the margin.
    CHECK(value(loss_triplet(a, a, a, 0.5)) == doctest::Approx(0.5).epsilon(1e-15));
    torch::manual_seed(4);
    for (int i = 0; i < 50; ++i) {
      const auto x = torch::randn({1, 5}, torch::kFloat64), p = torch::randn({1, 5}, torch::kFloat64),
                 q = torch::randn({1, 5}, torch::kFloat64);
      const double l = value(loss_triplet(x, p, q, 0.5));
      CHECK(l >= 0.0);
      CHECK(l <= (x - p).pow(2).sum().item<double>() + 0.5 + 1e-12);
    }
    CHECK_THROWS_AS(loss_triplet(a, torch::zeros({1, 3}, torch::kFloat64), n, 1.0), ConfigError);
  }

  TEST_CASE("triplet is invariant under a common rotation") {
    torch::manual_seed(8);
    const auto q = std::get<0>(torch::linalg_qr(torch::randn({6, 6}, torch::kFloat64)));
    for (int i = 0; i < 20; ++i) {
      const auto a = torch::randn({4, 6}, torch::kFloat64), p = torch::randn({4, 6}, torch::kFloat64),
                 n = torch::randn({4, 6}, torch::kFloat64);
      const double before = value(loss_triplet(a, p, n, 1.0));
      const double after = value(loss_triplet(a.matmul(q), p.matmul(q), n.matmul(q), 1.0));
      CHECK(after == doctest::Approx(before).epsilon(1e-10));
    }
  }

  TEST_CASE("duplicating the batch leaves every loss unchanged") {
    torch::manual_seed(2);
    auto dup = [](const torch::Tensor& t) { return torch::cat({t, t}, 0); };
    const auto p = torch::rand({3}, torch::kFloat64) * 0.9 + 0.05, q = torch::rand({3}, torch::kFloat64) * 0.9 + 0.05;
    CHECK(value(loss_adv_scene_discriminator(dup(p), dup(q))) ==
          doctest::Approx(value(loss_adv_scene_discriminator(p, q))).epsilon(1e-14));
    CHECK(value(loss_adv_pose_encoder(dup(p))) == doctest::Approx(value(loss_adv_pose_encoder(p))).epsilon(1e-14));
    CHECK(value(loss_pose_discriminator(dup(p), dup(q))) ==
          doctest::Approx(value(loss_pose_discriminator(p, q))).epsilon(1e-14));
    CHECK(value(loss_generator_gan(dup(p), dup(q))) == doctest::Approx(value(loss_generator_gan(p, q))).epsilon(1e-14));
    const auto e = torch::randn({3, 4}, torch::kFloat64), f = torch::randn({3, 4}, torch::kFloat64),
               g = torch::randn({3, 4}, torch::kFloat64);
    CHECK(value(loss_triplet(dup(e), dup(f), dup(g), 0.5)) ==
          doctest::Approx(value(loss_triplet(e, f, g, 0.5))).epsilon(1e-14));
    CHECK(value(loss_content_pull(dup(e), dup(f))) == doctest::Approx(value(loss_content_pull(e, f))).epsilon(1e-14));
    CHECK(value(loss_reconstruction(dup(e), dup(f))) == doctest::Approx(value(loss_reconstruction(e, f))).epsilon(1e-14));
    const auto c1 = random_code(3, 5), c2 = random_code(3, 6);
    ContentCode d1{dup(c1.bottleneck), {dup(c1.skips[0]), dup(c1.skips[1])}};
    ContentCode d2{dup(c2.bottleneck), {dup(c2.skips[0]), dup(c2.skips[1])}};
    CHECK(value(loss_consistency(d1, d2)) == doctest::Approx(value(loss_consistency(c1, c2))).epsilon(1e-14));
  }

  TEST_CASE("scalar loss gradients match central differences") {
    Rng rng(12);
    auto check_1d = [](const std::function<torch::Tensor(const torch::Tensor&)>& f, double x) {
      auto t = torch::tensor({x}, torch::kFloat64).requires_grad_(true);
      f(t).backward();
      const double analytic = t.grad().item<double>();
      const double numeric = numeric_derivative(
          [&](double v) { return f(torch::tensor({v}, torch::kFloat64)).item<double>(); }, x);
      CHECK(std::abs(analytic - numeric) <= 1e-6);
    };
    for (int i = 0; i < 20; ++i) {
      const double p = rng.uniform(0.05, 0.95), q = rng.uniform(0.05, 0.95);
      const auto qt = torch::tensor({q}, torch::kFloat64);
      check_1d([&](const torch::Tensor& t) { return loss_adv_scene_discriminator(t, qt); }, p);
      check_1d([&](const torch::Tensor& t) { return loss_adv_scene_discriminator(qt, t); }, p);
      check_1d([&](const torch::Tensor& t) { return loss_adv_pose_encoder(t); }, p);
      check_1d([&](const torch::Tensor& t) { return loss_pose_discriminator(t, qt); }, p);
      check_1d([&](const torch::Tensor& t) { return loss_content_discriminator(qt, t); }, p);
      check_1d([&](const torch::Tensor& t) { return loss_generator_gan(t, qt); }, p);
      const double y = rng.uniform(-1, 1);
      const auto yt = torch::tensor({y}, torch::kFloat64);
      check_1d([&](const torch::Tensor& t) { return loss_reconstruction(t, yt); }, rng.uniform(-1, 1));
      check_1d([&](const torch::Tensor& t) { return loss_content_pull(t.view({1, 1}), yt.view({1, 1})); },
               rng.uniform(-1, 1));
      const auto a = torch::tensor({{0.3}}, torch::kFloat64), n = torch::tensor({{rng.uniform(-0.2, 0.2)}}, torch::kFloat64);
      check_1d([&](const torch::Tensor& t) { return loss_triplet(a, t.view({1, 1}), n, 1.0); }, rng.uniform(-1, 1));
    }
  }

  TEST_CASE("weights validate") {
    LossWeights w;
    CHECK_NOTHROW(w.validate());
    w.margin = 0.0;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    w = LossWeights{};
    w.w_rec = -1.0;
    CHECK_THROWS_AS(w.validate(), ConfigError);
  }
}
