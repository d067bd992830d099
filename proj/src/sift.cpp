// Scale-invariant keypoints and descriptors (Lowe 2004), implemented on a
// float luma image in [0, 1]. No initial upsampling.
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "leakprobe/error.hpp"
#include "leakprobe/metrics_vision.hpp"

namespace leakprobe {

namespace {

constexpr int kBorder = 5;
constexpr int kMaxInterpSteps = 5;
constexpr int kOriBins = 36;
constexpr double kOriSigmaFactor = 1.5;
constexpr double kOriRadiusFactor = 3.0 * kOriSigmaFactor;
constexpr double kOriPeakRatio = 0.8;
constexpr int kDescWidth = 4;
constexpr int kDescBins = 8;
constexpr double kDescScaleFactor = 3.0;
constexpr double kDescMagThreshold = 0.2;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Plane {
  int w = 0;
  int h = 0;
  std::vector<float> v;

  Plane() = default;
  Plane(int width, int height) : w(width), h(height), v(static_cast<std::size_t>(width) * height, 0.0f) {}
  float operator()(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
  float& operator()(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
};

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

Plane gaussian_blur(const Plane& src, double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;

  Plane tmp(src.w, src.h);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * src(reflect101(x + i, src.w), y);
      tmp(x, y) = static_cast<float>(acc);
    }
  Plane out(src.w, src.h);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp(x, reflect101(y + i, src.h));
      out(x, y) = static_cast<float>(acc);
    }
  return out;
}

// Keeps even-indexed pixels, so a 2n+1 grid maps to n+1.
Plane downsample(const Plane& src) {
  Plane out((src.w + 1) / 2, (src.h + 1) / 2);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) out(x, y) = src(2 * x, 2 * y);
  return out;
}

struct Octave {
  std::vector<Plane> gauss;  // s + 3 levels
  std::vector<Plane> dog;    // s + 2 levels
};

std::vector<Octave> build_pyramid(Plane base, const SiftParams& p) {
  const int s = p.scales_per_octave;
  const int min_side = std::min(base.w, base.h);
  const int by_log = static_cast<int>(std::lround(std::log2(static_cast<double>(min_side)))) - 2;
  const int n_octaves = std::max(1, by_log);

  std::vector<double> inc(s + 3, 0.0);
  const double k = std::pow(2.0, 1.0 / s);
  for (int i = 1; i < s + 3; ++i) {
    const double prev = p.sigma0 * std::pow(k, i - 1);
    const double total = prev * k;
    inc[i] = std::sqrt(total * total - prev * prev);
  }

  std::vector<Octave> pyr;
  for (int o = 0; o < n_octaves; ++o) {
    if (std::min(base.w, base.h) < p.min_octave_size) break;
    Octave oct;
    oct.gauss.push_back(std::move(base));
    for (int i = 1; i < s + 3; ++i) oct.gauss.push_back(gaussian_blur(oct.gauss.back(), inc[i]));
    for (int i = 0; i + 1 < s + 3; ++i) {
      const Plane& a = oct.gauss[i];
      const Plane& b = oct.gauss[i + 1];
      Plane d(a.w, a.h);
      for (std::size_t j = 0; j < d.v.size(); ++j) d.v[j] = b.v[j] - a.v[j];
      oct.dog.push_back(std::move(d));
    }
    base = downsample(oct.gauss[s]);
    pyr.push_back(std::move(oct));
  }
  return pyr;
}

bool is_extremum(const std::vector<Plane>& dog, int layer, int x, int y) {
  const float v = dog[layer](x, y);
  const bool maxima = v > 0;
  for (int l = layer - 1; l <= layer + 1; ++l)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (l == layer && dx == 0 && dy == 0) continue;
        const float n = dog[l](x + dx, y + dy);
        if (maxima ? n > v : n < v) return false;
      }
  return true;
}

// Solves a 3x3 system by Cramer's rule; false when singular.
bool solve3(const double a[3][3], const double b[3], double x[3]) {
  auto det3 = [](const double m[3][3]) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  };
  const double d = det3(a);
  if (std::abs(d) < 1e-18) return false;
  for (int c = 0; c < 3; ++c) {
    double m[3][3];
    for (int r = 0; r < 3; ++r)
      for (int cc = 0; cc < 3; ++cc) m[r][cc] = (cc == c) ? b[r] : a[r][cc];
    x[c] = det3(m) / d;
  }
  return true;
}

struct Refined {
  int x, y, layer;
  double offset_s;
};

std::optional<Refined> refine(const std::vector<Plane>& dog, int layer, int x, int y, const SiftParams& p) {
  const int s = p.scales_per_octave;
  const Plane& ref = dog[0];
  double off[3] = {0, 0, 0};
  double grad[3] = {0, 0, 0};
  int step = 0;
  for (; step < kMaxInterpSteps; ++step) {
    const Plane& prev = dog[layer - 1];
    const Plane& cur = dog[layer];
    const Plane& next = dog[layer + 1];
    const double c = cur(x, y);
    grad[0] = 0.5 * (cur(x + 1, y) - cur(x - 1, y));
    grad[1] = 0.5 * (cur(x, y + 1) - cur(x, y - 1));
    grad[2] = 0.5 * (next(x, y) - prev(x, y));
    const double dxx = cur(x + 1, y) + cur(x - 1, y) - 2 * c;
    const double dyy = cur(x, y + 1) + cur(x, y - 1) - 2 * c;
    const double dss = next(x, y) + prev(x, y) - 2 * c;
    const double dxy = 0.25 * (cur(x + 1, y + 1) - cur(x - 1, y + 1) - cur(x + 1, y - 1) + cur(x - 1, y - 1));
    const double dxs = 0.25 * (next(x + 1, y) - next(x - 1, y) - prev(x + 1, y) + prev(x - 1, y));
    const double dys = 0.25 * (next(x, y + 1) - next(x, y - 1) - prev(x, y + 1) + prev(x, y - 1));
    const double hess[3][3] = {{dxx, dxy, dxs}, {dxy, dyy, dys}, {dxs, dys, dss}};
    const double rhs[3] = {-grad[0], -grad[1], -grad[2]};
    if (!solve3(hess, rhs, off)) return std::nullopt;
    if (std::abs(off[0]) < 0.5 && std::abs(off[1]) < 0.5 && std::abs(off[2]) < 0.5) break;
    constexpr double kLimit = std::numeric_limits<int>::max() / 3.0;
    if (std::abs(off[0]) > kLimit || std::abs(off[1]) > kLimit || std::abs(off[2]) > kLimit) return std::nullopt;
    x += static_cast<int>(std::lround(off[0]));
    y += static_cast<int>(std::lround(off[1]));
    layer += static_cast<int>(std::lround(off[2]));
    if (layer < 1 || layer > s || x < kBorder || x >= ref.w - kBorder || y < kBorder || y >= ref.h - kBorder)
      return std::nullopt;
  }
  if (step >= kMaxInterpSteps) return std::nullopt;

  const Plane& cur = dog[layer];
  const double contrast = cur(x, y) + 0.5 * (grad[0] * off[0] + grad[1] * off[1] + grad[2] * off[2]);
  if (std::abs(contrast) < p.contrast_threshold) return std::nullopt;

  const double c = cur(x, y);
  const double dxx = cur(x + 1, y) + cur(x - 1, y) - 2 * c;
  const double dyy = cur(x, y + 1) + cur(x, y - 1) - 2 * c;
  const double dxy = 0.25 * (cur(x + 1, y + 1) - cur(x - 1, y + 1) - cur(x + 1, y - 1) + cur(x - 1, y - 1));
  const double tr = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  const double r = p.edge_ratio;
  if (det <= 0 || tr * tr * r >= (r + 1) * (r + 1) * det) return std::nullopt;
  return Refined{x, y, layer, off[2]};
}

std::vector<double> orientation_peaks(const Plane& img, int x, int y, double scale) {
  const int radius = static_cast<int>(std::lround(kOriRadiusFactor * scale));
  const double sigma = kOriSigmaFactor * scale;
  std::vector<double> hist(kOriBins, 0.0);
  for (int j = -radius; j <= radius; ++j) {
    const int yy = y + j;
    if (yy <= 0 || yy >= img.h - 1) continue;
    for (int i = -radius; i <= radius; ++i) {
      const int xx = x + i;
      if (xx <= 0 || xx >= img.w - 1) continue;
      const double dx = img(xx + 1, yy) - img(xx - 1, yy);
      const double dy = img(xx, yy + 1) - img(xx, yy - 1);
      const double w = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
      double ang = std::atan2(dy, dx);
      if (ang < 0) ang += kTwoPi;
      int bin = static_cast<int>(std::lround(kOriBins * ang / kTwoPi));
      bin = ((bin % kOriBins) + kOriBins) % kOriBins;
      hist[bin] += w * std::hypot(dx, dy);
    }
  }
  std::vector<double> smooth(kOriBins);
  for (int b = 0; b < kOriBins; ++b) {
    auto at = [&](int k) { return hist[((b + k) % kOriBins + kOriBins) % kOriBins]; };
    smooth[b] = (at(-2) + at(2)) / 16.0 + (at(-1) + at(1)) * 4.0 / 16.0 + at(0) * 6.0 / 16.0;
  }
  const double peak = *std::max_element(smooth.begin(), smooth.end());
  std::vector<double> angles;
  if (peak <= 0) return angles;
  for (int b = 0; b < kOriBins; ++b) {
    const double l = smooth[(b + kOriBins - 1) % kOriBins];
    const double r = smooth[(b + 1) % kOriBins];
    const double c = smooth[b];
    if (c > l && c > r && c >= kOriPeakRatio * peak) {
      double bin = b + 0.5 * (l - r) / (l - 2 * c + r);
      if (bin < 0) bin += kOriBins;
      if (bin >= kOriBins) bin -= kOriBins;
      angles.push_back(kTwoPi * bin / kOriBins);
    }
  }
  return angles;
}

SiftDescriptor describe(const Plane& img, double kx, double ky, double scale, double angle) {
  constexpr int d = kDescWidth;
  constexpr int n = kDescBins;
  const double cos_t = std::cos(angle);
  const double sin_t = std::sin(angle);
  const double hist_width = kDescScaleFactor * scale;
  int radius = static_cast<int>(std::lround(hist_width * std::numbers::sqrt2 * (d + 1) * 0.5));
  radius = std::min(radius, static_cast<int>(std::hypot(img.w, img.h)));
  const double weight_scale = -1.0 / (0.5 * d * d);  // gaussian with sigma d/2 in bin units

  std::vector<double> hist(static_cast<std::size_t>(d) * d * n, 0.0);
  auto add = [&](int r, int c, int o, double v) {
    if (r < 0 || r >= d || c < 0 || c >= d) return;
    o = ((o % n) + n) % n;
    hist[(static_cast<std::size_t>(r) * d + c) * n + o] += v;
  };

  const int cx = static_cast<int>(std::lround(kx));
  const int cy = static_cast<int>(std::lround(ky));
  for (int j = -radius; j <= radius; ++j) {
    for (int i = -radius; i <= radius; ++i) {
      const double c_rot = (cos_t * i + sin_t * j) / hist_width;
      const double r_rot = (-sin_t * i + cos_t * j) / hist_width;
      const double rbin = r_rot + d / 2.0 - 0.5;
      const double cbin = c_rot + d / 2.0 - 0.5;
      if (rbin <= -1 || rbin >= d || cbin <= -1 || cbin >= d) continue;
      const int xx = cx + i;
      const int yy = cy + j;
      if (xx <= 0 || xx >= img.w - 1 || yy <= 0 || yy >= img.h - 1) continue;
      const double dx = img(xx + 1, yy) - img(xx - 1, yy);
      const double dy = img(xx, yy + 1) - img(xx, yy - 1);
      double ang = std::atan2(dy, dx) - angle;
      while (ang < 0) ang += kTwoPi;
      while (ang >= kTwoPi) ang -= kTwoPi;
      const double mag = std::hypot(dx, dy) * std::exp((c_rot * c_rot + r_rot * r_rot) * weight_scale);
      const double obin = ang * n / kTwoPi;

      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      const int o0 = static_cast<int>(std::floor(obin));
      const double fr = rbin - r0;
      const double fc = cbin - c0;
      const double fo = obin - o0;
      for (int dr = 0; dr <= 1; ++dr) {
        const double wr = dr ? fr : 1 - fr;
        for (int dc = 0; dc <= 1; ++dc) {
          const double wc = dc ? fc : 1 - fc;
          for (int dn = 0; dn <= 1; ++dn) {
            const double wo = dn ? fo : 1 - fo;
            add(r0 + dr, c0 + dc, o0 + dn, mag * wr * wc * wo);
          }
        }
      }
    }
  }

  auto norm = [&] {
    double s = 0.0;
    for (double v : hist) s += v * v;
    return std::sqrt(s);
  };
  double nrm = norm();
  const double clamp = kDescMagThreshold * nrm;
  for (auto& v : hist) v = std::min(v, clamp);
  nrm = norm();
  SiftDescriptor out{};
  const double inv = nrm > 0 ? 1.0 / nrm : 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<float>(hist[k] * inv);
  return out;
}

}  // namespace

SiftFeatures detect_sift(const ImageBuffer& image, const SiftParams& params) {
  if (params.scales_per_octave < 1) throw Error(ErrorKind::invalid_argument, "scales_per_octave must be >= 1");
  if (params.sigma0 <= params.assumed_blur)
    throw Error(ErrorKind::invalid_argument, "sigma0 must exceed the assumed input blur");
  Plane gray(image.width, image.height);
  gray.v = to_grayscale(image);
  const double init = std::sqrt(params.sigma0 * params.sigma0 - params.assumed_blur * params.assumed_blur);
  const auto pyr = build_pyramid(gaussian_blur(gray, init), params);

  const int s = params.scales_per_octave;
  const float prefilter = static_cast<float>(0.5 * params.contrast_threshold);
  SiftFeatures out;
  for (std::size_t o = 0; o < pyr.size(); ++o) {
    const auto& oct = pyr[o];
    const int w = oct.dog[0].w;
    const int h = oct.dog[0].h;
    const double to_full = std::ldexp(1.0, static_cast<int>(o));
    for (int layer = 1; layer <= s; ++layer) {
      for (int y = kBorder; y < h - kBorder; ++y) {
        for (int x = kBorder; x < w - kBorder; ++x) {
          if (std::abs(oct.dog[layer](x, y)) <= prefilter) continue;
          if (!is_extremum(oct.dog, layer, x, y)) continue;
          const auto kp = refine(oct.dog, layer, x, y, params);
          if (!kp) continue;
          const double scale = params.sigma0 * std::pow(2.0, (kp->layer + kp->offset_s) / s);
          const Plane& g = oct.gauss[kp->layer];
          for (double angle : orientation_peaks(g, kp->x, kp->y, scale)) {
            SiftKeypoint k;
            k.x = static_cast<float>(kp->x * to_full);
            k.y = static_cast<float>(kp->y * to_full);
            k.sigma = static_cast<float>(scale * to_full);
            k.angle = static_cast<float>(angle);
            k.octave = static_cast<int>(o);
            out.keypoints.push_back(k);
            out.descriptors.push_back(describe(g, kp->x, kp->y, scale, angle));
          }
        }
      }
    }
  }
  return out;
}

std::size_t count_good_matches(const SiftFeatures& reference, const SiftFeatures& candidate, double ratio) {
  // The ratio test needs a second neighbour; a lone candidate descriptor
  // would otherwise match every reference keypoint.
  if (candidate.descriptors.size() < 2) return 0;
  std::size_t good = 0;
  for (const auto& r : reference.descriptors) {
    double best = std::numeric_limits<double>::infinity();
    double second = best;
    for (const auto& c : candidate.descriptors) {
      double acc = 0.0;
      for (std::size_t k = 0; k < r.size(); ++k) {
        const double d = static_cast<double>(r[k]) - c[k];
        acc += d * d;
      }
      if (acc < best) {
        second = best;
        best = acc;
      } else if (acc < second) {
        second = acc;
      }
    }
    // Squared distances, so the ratio is squared as well.
    if (best < ratio * ratio * second) ++good;
  }
  return good;
}

}  // namespace leakprobe
