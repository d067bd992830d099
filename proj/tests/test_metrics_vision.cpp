#include <gtest/gtest.h>

#include <cmath>

#include "leakprobe/metrics_vision.hpp"
#include "leakprobe/synthetic.hpp"
#include "leakprobe/util.hpp"

using namespace leakprobe;

namespace {

ImageBuffer noise_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  ImageBuffer img(w, h);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

double naive_mse(const ImageBuffer& a, const ImageBuffer& b) {
  double s = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(a.at(x, y, c)) - b.at(x, y, c);
        s += d * d;
      }
  return s / (3.0 * a.width * a.height);
}

// Rotates by 90 degrees clockwise.
ImageBuffer rotate90(const ImageBuffer& img) {
  ImageBuffer out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(img.height - 1 - y, x, c) = img.at(x, y, c);
  return out;
}

}  // namespace

TEST(Mse, Basics) {
  const auto t = synthetic_texture(16, 16, 1);
  EXPECT_EQ(mse(t, t), 0.0);
  EXPECT_EQ(mse(ImageBuffer(1, 1, 0), ImageBuffer(1, 1, 255)), 65025.0);
}

TEST(Mse, MatchesNaiveLoop) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto a = noise_image(32, 32, 2 * s), b = noise_image(32, 32, 2 * s + 1);
    const double want = naive_mse(a, b);
    EXPECT_NEAR(mse(a, b), want, 1e-9 * want);
  }
}

TEST(Mse, CandidateIsResizedToReference) {
  const auto ref = ImageBuffer(8, 8, 100);
  EXPECT_EQ(mse(ref, ImageBuffer(16, 4, 100)), 0.0);
  EXPECT_NEAR(mse(ref, ImageBuffer(3, 5, 110)), 100.0, 1e-12);
}

TEST(Resize, IdentityAndConstant) {
  const auto t = synthetic_texture(13, 9, 4);
  EXPECT_EQ(resize_bilinear(t, 13, 9), t);
  const auto up = resize_bilinear(ImageBuffer(2, 2, 77), 7, 5);
  EXPECT_EQ(up.width, 7);
  for (auto v : up.data) EXPECT_EQ(v, 77);
}

TEST(Resize, HorizontalRampStaysLinear) {
  // Pixel-centre alignment: output x maps to (x + 0.5) * 4 / 8 - 0.5.
  ImageBuffer ramp(4, 1);
  for (int x = 0; x < 4; ++x)
    for (int c = 0; c < 3; ++c) ramp.at(x, 0, c) = static_cast<std::uint8_t>(40 * x);
  const auto up = resize_bilinear(ramp, 8, 1);
  const double expect[] = {0, 10, 30, 50, 70, 90, 110, 120};
  for (int x = 0; x < 8; ++x) EXPECT_NEAR(up.at(x, 0, 0), expect[x], 0.5) << x;
}

TEST(Psnr, Values) {
  const auto t = synthetic_texture(16, 16, 2);
  EXPECT_TRUE(std::isinf(psnr(t, t)));
  EXPECT_EQ(psnr_from_mse(65025.0), 0.0);
  EXPECT_NEAR(psnr_from_mse(90.0), 10.0 * std::log10(255.0 * 255.0 / 90.0), 1e-12);
  EXPECT_NEAR(psnr_from_mse(90.0), 28.5884, 1e-4);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = noise_image(32, 32, 500 + s), b = noise_image(32, 32, 600 + s);
    EXPECT_NEAR(psnr(a, b), 10.0 * std::log10(65025.0 / naive_mse(a, b)), 1e-9);
  }
}

TEST(Grayscale, Luma) {
  ImageBuffer img(1, 1);
  img.data = {255, 0, 0};
  EXPECT_NEAR(to_grayscale(img)[0], 0.299f, 1e-6);
  img.data = {255, 255, 255};
  EXPECT_NEAR(to_grayscale(img)[0], 1.0f, 1e-6);
}

TEST(Sift, SelfMatchAndRotation) {
  const auto t = synthetic_texture(128, 128, 7);
  const auto f = detect_sift(t);
  ASSERT_GE(f.keypoints.size(), 10u);
  ASSERT_EQ(f.keypoints.size(), f.descriptors.size());
  for (const auto& d : f.descriptors) {
    double n = 0;
    for (float v : d) {
      EXPECT_GE(v, 0.0f);
      n += static_cast<double>(v) * v;
    }
    EXPECT_NEAR(n, 1.0, 1e-4);
  }
  EXPECT_GE(sift_match_score(t, t), 0.9);
  EXPECT_GE(sift_match_score(t, rotate90(t)), 0.5);
}

TEST(Sift, FlatImageScoresZero) {
  const ImageBuffer flat(64, 64, 128);
  EXPECT_TRUE(detect_sift(flat).keypoints.empty());
  EXPECT_EQ(sift_match_score(flat, synthetic_texture(64, 64, 1)), 0.0);
  EXPECT_EQ(sift_match_score(synthetic_texture(64, 64, 1), flat), 0.0);
}

TEST(Sift, NoiseDoesNotMatchTexture) {
  const auto t = synthetic_texture(128, 128, 7);
  for (std::uint64_t s = 0; s < 100; ++s) EXPECT_LT(sift_match_score(t, noise_image(128, 128, 9000 + s)), 0.05);
}

TEST(Sift, RatioTestNeedsTwoCandidates) {
  SiftFeatures ref, cand;
  SiftDescriptor d{}, e{};
  d[0] = 1.0f;
  e[1] = 1.0f;
  ref.keypoints.push_back({});
  ref.descriptors.push_back(d);
  cand.keypoints.push_back({});
  cand.descriptors.push_back(d);
  EXPECT_EQ(count_good_matches(ref, cand), 0u);
  cand.keypoints.push_back({});
  cand.descriptors.push_back(e);
  EXPECT_EQ(count_good_matches(ref, cand), 1u);
  cand.descriptors[1] = d;  // two equally near neighbours fail the ratio
  EXPECT_EQ(count_good_matches(ref, cand), 0u);
  EXPECT_EQ(count_good_matches(ref, SiftFeatures{}), 0u);
}

TEST(VisualVerdict, IdenticalPassesNoiseFails) {
  const auto t = synthetic_texture(96, 96, 3);
  const auto same = judge_direct_visual(t, t);
  EXPECT_TRUE(same.mse_pass);
  EXPECT_TRUE(same.psnr_pass);
  EXPECT_TRUE(same.sift_pass);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto v = judge_direct_visual(t, noise_image(96, 96, 40 + s));
    EXPECT_GT(v.mse, 90.0 * 10);
    EXPECT_FALSE(v.mse_pass);
    EXPECT_FALSE(v.psnr_pass);
    EXPECT_FALSE(v.sift_pass);
  }
}

TEST(VisualVerdict, StrictThresholds) {
  // MSE exactly at the threshold does not pass.
  const ImageBuffer a(1, 1, 0);
  ImageBuffer b(1, 1, 0);
  b.data = {0, 0, 0};
  VisualThresholds th;
  th.mse = 0.0;
  EXPECT_FALSE(judge_direct_visual(a, b, th).mse_pass);
}
