#include "leakprobe/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "leakprobe/error.hpp"
#include "leakprobe/util.hpp"

namespace leakprobe {

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstv";
constexpr std::string_view kVowels = "aeiou";

std::string pseudo_word(Rng& rng) {
  const std::size_t syllables = 2 + rng.below(2);
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    w += kConsonants[rng.below(kConsonants.size())];
    w += kVowels[rng.below(kVowels.size())];
  }
  return w;
}

}  // namespace

std::string synthetic_transcript(std::size_t words, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x7478));
  std::unordered_set<std::string> seen;
  std::string out;
  while (seen.size() < words) {
    auto w = pseudo_word(rng);
    if (!seen.insert(w).second) continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

AudioBuffer synthetic_voice(std::size_t speaker, std::size_t n_speakers, std::uint64_t clip_seed, double seconds) {
  if (n_speakers == 0 || speaker >= n_speakers) throw Error(ErrorKind::invalid_argument, "speaker out of range");
  if (!(seconds > 0.0)) throw Error(ErrorKind::invalid_argument, "clip duration must be positive");
  // Speakers sit on a grid of pitch x formant so that neighbours in id
  // differ clearly in at least one of them.
  const std::size_t pitch_levels = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(n_speakers))));
  const std::size_t formant_levels = (n_speakers + pitch_levels - 1) / pitch_levels;
  auto level = [](std::size_t i, std::size_t n) { return n <= 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1); };
  Rng rng(derive_seed(clip_seed, speaker));
  const double f0 = (100.0 + 150.0 * level(speaker % pitch_levels, pitch_levels)) * (1.0 + 0.005 * (2.0 * rng.uniform() - 1.0));
  const double formant = 300.0 * std::pow(2.0, 4.0 * level(speaker / pitch_levels, formant_levels));
  const double drift = 0.005 * (2.0 * rng.uniform() - 1.0);
  const double rate = kAnalysisRate;
  Rng timbre(derive_seed(0x73706b, speaker));

  AudioBuffer audio;
  audio.sample_rate = kAnalysisRate;
  audio.samples.assign(static_cast<std::size_t>(std::lround(seconds * rate)), 0.0);
  const std::size_t n = audio.samples.size();
  for (int h = 1; h * f0 < 7500.0; ++h) {
    const double f = h * f0;
    const double z = (f - formant) / (0.3 * formant);
    const double amp = (0.3 + std::exp(-0.5 * z * z)) / std::sqrt(static_cast<double>(h));
    const double phase = 2.0 * std::numbers::pi * timbre.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / rate;
      audio.samples[i] += amp * std::sin(2.0 * std::numbers::pi * f * t * (1.0 + drift * t) + phase);
    }
  }
  const double ramp = 0.05 * rate;
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double env = std::min({1.0, static_cast<double>(i) / ramp, static_cast<double>(n - 1 - i) / ramp});
    audio.samples[i] *= env;
    peak = std::max(peak, std::abs(audio.samples[i]));
  }
  if (peak > 0)
    for (auto& s : audio.samples) s *= 0.3 / peak;
  return quantize_pcm16(std::move(audio));
}

ImageBuffer synthetic_texture(int width, int height, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x696d67));
  struct Grating {
    double fx, fy, phase, amp[3];
  };
  std::vector<Grating> gratings(4);
  for (auto& g : gratings) {
    const double freq = 0.05 + 0.25 * rng.uniform();
    const double angle = std::numbers::pi * rng.uniform();
    g.fx = freq * std::cos(angle);
    g.fy = freq * std::sin(angle);
    g.phase = 2.0 * std::numbers::pi * rng.uniform();
    for (double& a : g.amp) a = 6.0 + 12.0 * rng.uniform();
  }
  struct Blob {
    double x, y, r, v[3];
  };
  // About one blob per 16x16 tile keeps keypoint density independent of size.
  std::vector<Blob> blobs(std::max<std::size_t>(6, static_cast<std::size_t>(width) * height / 256));
  for (auto& b : blobs) {
    b.x = width * rng.uniform();
    b.y = height * rng.uniform();
    b.r = 1.5 + 0.05 * std::min(width, height) * rng.uniform();
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    for (double& v : b.v) v = sign * (40.0 + 50.0 * rng.uniform());
  }
  struct Rect {
    int x0, y0, x1, y1;
    double v[3];
  };
  std::vector<Rect> rects(std::max<std::size_t>(2, blobs.size() / 6));
  for (auto& r : rects) {
    r.x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(width)));
    r.y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(height)));
    r.x1 = r.x0 + 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, width / 5))));
    r.y1 = r.y0 + 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, height / 5))));
    for (double& v : r.v) v = 60.0 * (rng.uniform() - 0.5);
  }
  double base[3];
  for (double& b : base) b = 100.0 + 50.0 * rng.uniform();

  ImageBuffer img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = base[c];
        for (const auto& g : gratings) v += g.amp[c] * std::sin(g.fx * x + g.fy * y + g.phase);
        for (const auto& b : blobs) {
          const double d2 = (x - b.x) * (x - b.x) + (y - b.y) * (y - b.y);
          v += b.v[c] * std::exp(-0.5 * d2 / (b.r * b.r));
        }
        for (const auto& r : rects)
          if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1) v += r.v[c];
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
      }
  return img;
}

std::vector<CorpusEntry> synthetic_audio_entries(const SyntheticAudioOptions& o) {
  if (o.speakers == 0) throw Error(ErrorKind::invalid_argument, "need at least one speaker");
  std::vector<CorpusEntry> out;
  out.reserve(o.entries);
  for (std::size_t i = 0; i < o.entries; ++i) {
    const std::uint64_t s = derive_seed(o.seed, i);
    CorpusEntry e;
    e.id = o.id_prefix + std::to_string(i);
    e.text = synthetic_transcript(o.words, s);
    e.speaker_id = "spk" + std::to_string(i % o.speakers);
    e.audio = std::make_shared<const AudioBuffer>(synthetic_voice(i % o.speakers, o.speakers, s, o.seconds));
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<CorpusEntry> synthetic_image_entries(const SyntheticImageOptions& o) {
  std::vector<CorpusEntry> out;
  out.reserve(o.entries);
  for (std::size_t i = 0; i < o.entries; ++i) {
    const std::uint64_t s = derive_seed(o.seed, i);
    CorpusEntry e;
    e.id = o.id_prefix + std::to_string(i);
    if (o.with_text) e.text = synthetic_transcript(o.words, s);
    e.image = std::make_shared<const ImageBuffer>(synthetic_texture(o.width, o.height, s));
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<CorpusEntry> synthetic_text_entries(std::size_t entries, std::size_t words, std::uint64_t seed,
                                                const std::string& id_prefix) {
  std::vector<CorpusEntry> out;
  out.reserve(entries);
  for (std::size_t i = 0; i < entries; ++i) {
    CorpusEntry e;
    e.id = id_prefix + std::to_string(i);
    e.text = synthetic_transcript(words, derive_seed(seed, i));
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace leakprobe
