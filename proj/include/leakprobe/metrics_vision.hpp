#pragma once

#include <array>
#include <vector>

#include "leakprobe/corpus.hpp"

namespace leakprobe {

struct VisualThresholds {
  double mse = 90.0;   // pass when mse < threshold
  double psnr = 30.0;  // pass when psnr > threshold
  double sift = 0.1;   // pass when sift > threshold
};

struct VisualVerdict {
  double mse = 0.0;
  double psnr = 0.0;
  double sift = 0.0;
  bool mse_pass = false;
  bool psnr_pass = false;
  bool sift_pass = false;
  VisualThresholds thresholds;
};

// Bilinear resampling with pixel-center alignment.
ImageBuffer resize_bilinear(const ImageBuffer& image, int width, int height);

// Mean squared 8-bit difference over all pixels and channels. A candidate of
// a different size is resized to the reference first.
double mse(const ImageBuffer& reference, const ImageBuffer& candidate);
double psnr_from_mse(double mse_value);
double psnr(const ImageBuffer& reference, const ImageBuffer& candidate);

// Luma (0.299 R + 0.587 G + 0.114 B) scaled to [0, 1].
std::vector<float> to_grayscale(const ImageBuffer& image);

struct SiftParams {
  int scales_per_octave = 3;
  double sigma0 = 1.6;
  double assumed_blur = 0.5;
  double contrast_threshold = 0.03;
  double edge_ratio = 10.0;
  double ratio_test = 0.75;
  int min_octave_size = 8;
};

struct SiftKeypoint {
  float x = 0;  // full-resolution pixel coordinates
  float y = 0;
  float sigma = 0;
  float angle = 0;  // radians
  int octave = 0;
};

using SiftDescriptor = std::array<float, 128>;

struct SiftFeatures {
  std::vector<SiftKeypoint> keypoints;
  std::vector<SiftDescriptor> descriptors;
};

SiftFeatures detect_sift(const ImageBuffer& image, const SiftParams& params = {});

// Reference keypoints whose nearest candidate descriptor passes the ratio
// test, counted against the reference. Fewer than two candidate descriptors
// yield no matches.
std::size_t count_good_matches(const SiftFeatures& reference, const SiftFeatures& candidate,
                               double ratio = 0.75);

// good matches / max(1, reference keypoints); 0 when either side has none.
double sift_match_score(const ImageBuffer& reference, const ImageBuffer& candidate,
                        const SiftParams& params = {});

VisualVerdict judge_direct_visual(const ImageBuffer& reference, const ImageBuffer& candidate,
                                  const VisualThresholds& thresholds = {}, const SiftParams& params = {});

}  // namespace leakprobe
