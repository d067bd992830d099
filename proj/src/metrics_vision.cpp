#include "leakprobe/metrics_vision.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "leakprobe/error.hpp"

namespace leakprobe {

ImageBuffer resize_bilinear(const ImageBuffer& image, int width, int height) {
  image.validate();
  if (width < 1 || height < 1) throw Error(ErrorKind::invalid_argument, "resize target has zero area");
  if (width == image.width && height == image.height) return image;
  ImageBuffer out(width, height);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < ImageBuffer::channels; ++c) {
        const double top = image.at(x0, y0, c) * (1 - wx) + image.at(x1, y0, c) * wx;
        const double bottom = image.at(x0, y1, c) * (1 - wx) + image.at(x1, y1, c) * wx;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::nearbyint(top * (1 - wy) + bottom * wy), 0.0, 255.0));
      }
    }
  }
  return out;
}

double mse(const ImageBuffer& reference, const ImageBuffer& candidate) {
  reference.validate();
  candidate.validate();
  const ImageBuffer resized = resize_bilinear(candidate, reference.width, reference.height);
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.data.size(); ++i) {
    const double d = static_cast<double>(reference.data[i]) - resized.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(reference.data.size());
}

double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse_value);
}

double psnr(const ImageBuffer& reference, const ImageBuffer& candidate) {
  return psnr_from_mse(mse(reference, candidate));
}

std::vector<float> to_grayscale(const ImageBuffer& image) {
  image.validate();
  std::vector<float> out(static_cast<std::size_t>(image.width) * image.height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto* px = &image.data[i * 3];
    out[i] = static_cast<float>((0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0);
  }
  return out;
}

double sift_match_score(const ImageBuffer& reference, const ImageBuffer& candidate, const SiftParams& params) {
  const auto ref = detect_sift(reference, params);
  if (ref.keypoints.empty()) return 0.0;
  const auto cand = detect_sift(candidate, params);
  const auto good = count_good_matches(ref, cand, params.ratio_test);
  return static_cast<double>(good) / static_cast<double>(std::max<std::size_t>(1, ref.keypoints.size()));
}

VisualVerdict judge_direct_visual(const ImageBuffer& reference, const ImageBuffer& candidate,
                                  const VisualThresholds& thresholds, const SiftParams& params) {
  VisualVerdict v;
  v.thresholds = thresholds;
  v.mse = mse(reference, candidate);
  v.psnr = psnr_from_mse(v.mse);
  v.sift = sift_match_score(reference, candidate, params);
  v.mse_pass = v.mse < thresholds.mse;
  v.psnr_pass = v.psnr > thresholds.psnr;
  v.sift_pass = v.sift > thresholds.sift;
  return v;
}

}  // namespace leakprobe
