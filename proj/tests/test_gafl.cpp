#include <doctest.h>

#include <cmath>

#include "noisyseg/gafl.hpp"
#include "noisyseg/rng.hpp"
#include "oracles.hpp"

using namespace noisyseg;

namespace {

ImageTensor random_image(int channels, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> data(static_cast<std::size_t>(channels) * h * w);
  for (double& v : data) v = rng.next_double();
  return ImageTensor(channels, h, w, std::move(data));
}

ProbMap random_probs(int k, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> data(k * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      data[c * plane + p] = 0.05 + rng.next_double();
      sum += data[c * plane + p];
    }
    for (int c = 0; c < k; ++c) data[c * plane + p] /= sum;
  }
  return ProbMap(k, h, w, std::move(data));
}

LabelMap random_labels(int k, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> data(static_cast<std::size_t>(h) * w);
  for (int& v : data) v = rng.uniform_int(0, k - 1);
  return LabelMap(h, w, k, std::move(data));
}

}  // namespace

TEST_CASE("gaussian kernel taps are positive and sum to one") {
  for (auto [radius, sigma] : {std::pair{1, 0.5}, {3, 1.0}, {5, 3.0}, {8, 2.5}, {2, 10.0}}) {
    const auto taps = gaussian_kernel_1d(radius, sigma);
    CHECK(taps.size() == static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (double t : taps) {
      CHECK(t > 0.0);
      sum += t;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("filtering a constant image returns it bit-exactly") {
  const ImageTensor img(1, 9, 9, std::vector<double>(81, 0.73));
  const ImageTensor smoothed = gaussian_filter(img, 5, 3.0);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) CHECK(smoothed.at(0, y, x) == 0.73);
}

TEST_CASE("unit impulse reproduces the dense-convolution oracle") {
  std::vector<double> data(21 * 21, 0.0);
  data[10 * 21 + 10] = 1.0;
  const ImageTensor img(1, 21, 21, data);
  const ImageTensor smoothed = gaussian_filter(img, 5, 3.0);
  const auto expected = oracle::dense_gaussian(data, 21, 21, 5, 3.0);
  for (int y = 0; y < 21; ++y)
    for (int x = 0; x < 21; ++x)
      REQUIRE(smoothed.at(0, y, x) == doctest::Approx(expected[y * 21 + x]).epsilon(1e-9));
}

TEST_CASE("random 16x16 images match the dense oracle within 1e-9") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const ImageTensor img = random_image(3, 16, 16, seed);
    const ImageTensor smoothed = gaussian_filter(img, 5, 3.0);
    const std::size_t plane = 16 * 16;
    for (int c = 0; c < 3; ++c) {
      std::vector<double> channel(img.values().begin() + c * plane,
                                  img.values().begin() + (c + 1) * plane);
      const auto expected = oracle::dense_gaussian(channel, 16, 16, 5, 3.0);
      for (std::size_t p = 0; p < plane; ++p)
        REQUIRE(std::abs(smoothed.at(c, p / 16, p % 16) - expected[p]) < 1e-9);
    }
  }
}

TEST_CASE("gaussian filter is linear") {
  const ImageTensor x = random_image(1, 12, 12, 5);
  const ImageTensor y = random_image(1, 12, 12, 6);
  const double a = 0.3, b = 0.45;
  std::vector<double> mixed(x.values().size());
  for (std::size_t i = 0; i < mixed.size(); ++i)
    mixed[i] = a * x.values()[i] + b * y.values()[i];
  const ImageTensor fm = gaussian_filter(ImageTensor(1, 12, 12, mixed), 4, 2.0);
  const ImageTensor fx = gaussian_filter(x, 4, 2.0);
  const ImageTensor fy = gaussian_filter(y, 4, 2.0);
  for (int yy = 0; yy < 12; ++yy)
    for (int xx = 0; xx < 12; ++xx)
      REQUIRE(std::abs(fm.at(0, yy, xx) - (a * fx.at(0, yy, xx) + b * fy.at(0, yy, xx))) < 1e-9);
}

TEST_CASE("roughness of a constant image is exactly lambda_b") {
  GaflConfig cfg;  // radius 5, sigma 3, lambda_a 50, lambda_b 1
  const ImageTensor img(3, 16, 16, std::vector<double>(3 * 256, 0.4));
  const AttentionMap heat = roughness_heatmap(img, cfg);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) REQUIRE(heat.at(y, x) == 1.0);
}

TEST_CASE("lambda_a = 0 forces the heatmap to lambda_b everywhere") {
  GaflConfig cfg;
  cfg.lambda_a = 0.0;
  cfg.lambda_b = 0.37;
  const ImageTensor img = random_image(3, 16, 16, 9);
  const AttentionMap heat = roughness_heatmap(img, cfg);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) REQUIRE(heat.at(y, x) == 0.37);
}

TEST_CASE("checkerboard roughness matches the elementwise oracle") {
  std::vector<double> data(256);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) data[y * 16 + x] = (y + x) % 2 ? 1.0 : 0.0;
  const ImageTensor img(1, 16, 16, data);
  GaflConfig cfg;
  const AttentionMap heat = roughness_heatmap(img, cfg);
  const auto expected = oracle::roughness(data, 1, 16, 16, 5, 3.0, 50.0, 1.0);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      REQUIRE(heat.at(y, x) == doctest::Approx(expected[y * 16 + x]).epsilon(1e-9));
}

TEST_CASE("roughness never dips below lambda_b") {
  GaflConfig cfg;
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const AttentionMap heat = roughness_heatmap(random_image(3, 20, 14, seed), cfg);
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 14; ++x) REQUIRE(heat.at(y, x) >= cfg.lambda_b);
  }
}

TEST_CASE("focal loss closed-form values") {
  GaflConfig cfg;  // gamma = 2, alpha ones, log form

  // near-perfect prediction: loss under 1e-6
  const double eps = GaflConfig::kProbEps;
  ProbMap perfect(2, 1, 1, {1.0 - eps, eps});
  LabelMap target(1, 1, 2, {0});
  CHECK(focal_loss_map(perfect, target, cfg).at(0, 0) < 1e-6);

  // p_t = 0.5, gamma 2: 0.25 * ln 2
  ProbMap half(2, 1, 1, {0.5, 0.5});
  const double expected = 0.25 * std::log(2.0);  // 0.17328679513998632
  CHECK(focal_loss_map(half, target, cfg).at(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gamma = 0 reduces the focal loss to cross-entropy") {
  GaflConfig cfg;
  cfg.gamma = 0.0;
  const ProbMap pred = random_probs(4, 6, 6, 31);
  const LabelMap target = random_labels(4, 6, 6, 32);
  const LossMap loss = focal_loss_map(pred, target, cfg);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      const double ce = -std::log(pred.at(target.at(y, x), y, x));
      REQUIRE(std::abs(loss.at(y, x) - ce) < 1e-9);
    }
}

TEST_CASE("log-form focal loss decreases as the true-class probability rises") {
  GaflConfig cfg;
  LabelMap target(1, 1, 2, {0});
  double prev = 1e300;
  for (double p = 0.05; p < 1.0; p += 0.05) {
    const double v = focal_loss_map(ProbMap(2, 1, 1, {p, 1.0 - p}), target, cfg).at(0, 0);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("paper-literal variant is the nonnegative polynomial form") {
  GaflConfig cfg;
  cfg.focal_variant = FocalVariant::paper_literal;
  LabelMap target(1, 1, 2, {0});
  for (double p : {0.1, 0.5, 0.9}) {
    const double v = focal_loss_map(ProbMap(2, 1, 1, {p, 1.0 - p}), target, cfg).at(0, 0);
    CHECK(v == doctest::Approx(std::pow(1.0 - p, 2.0) * p).epsilon(1e-12));
    CHECK(v >= 0.0);
  }
}

TEST_CASE("gaf loss: multiplicative identity, scaling, and product oracle") {
  GaflConfig cfg;
  const ProbMap pred = random_probs(4, 8, 8, 41);
  const LabelMap target = random_labels(4, 8, 8, 42);
  const LossMap focal = focal_loss_map(pred, target, cfg);

  const LossMap unit = gaf_loss_map(pred, target, flat_attention(8, 8), cfg);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) REQUIRE(unit.at(y, x) == focal.at(y, x));

  const AttentionMap twos(8, 8, std::vector<double>(64, 2.0));
  const LossMap doubled = gaf_loss_map(pred, target, twos, cfg);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) REQUIRE(doubled.at(y, x) == 2.0 * focal.at(y, x));

  Rng rng(43);
  std::vector<double> heat_data(64);
  for (double& v : heat_data) v = 0.5 + 2.0 * rng.next_double();
  const AttentionMap heat(8, 8, heat_data);
  const LossMap gaf = gaf_loss_map(pred, target, heat, cfg);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      REQUIRE(gaf.at(y, x) == doctest::Approx(heat_data[y * 8 + x] * focal.at(y, x)).epsilon(1e-12));
}

TEST_CASE("shape and alpha mismatches are rejected") {
  GaflConfig cfg;
  const ProbMap pred = random_probs(3, 4, 4, 51);
  CHECK_THROWS_AS(focal_loss_map(pred, random_labels(3, 5, 4, 52), cfg), ValidationError);

  cfg.alpha = {1.0, 2.0};  // wrong length for K=3
  CHECK_THROWS_AS(focal_loss_map(pred, random_labels(3, 4, 4, 53), cfg), ValidationError);

  GaflConfig bad;
  bad.sigma = -1.0;
  CHECK_FALSE(bad.check().ok);
}
