#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "leakprobe/dsp.hpp"
#include "leakprobe/metrics_audio.hpp"
#include "leakprobe/synthetic.hpp"
#include "leakprobe/util.hpp"
#include "reference_mfcc.hpp"

using namespace leakprobe;

namespace {

AudioBuffer tone(double hz, double seconds, double amp = 0.5) {
  AudioBuffer a;
  a.samples.resize(static_cast<std::size_t>(seconds * 16000));
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    a.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / 16000.0);
  return a;
}

AudioBuffer noise(double seconds, std::uint64_t seed, double amp = 0.3) {
  Rng rng(seed);
  AudioBuffer a;
  a.samples.resize(static_cast<std::size_t>(seconds * 16000));
  for (auto& s : a.samples) s = amp * (2.0 * rng.uniform() - 1.0);
  return a;
}

FeatureMatrix random_features(Rng& rng, std::size_t frames, std::size_t dim) {
  FeatureMatrix m;
  m.frames = frames;
  m.dim = dim;
  for (std::size_t i = 0; i < frames * dim; ++i) m.values.push_back(rng.normal());
  return m;
}

// Noise-modulated chirp: no two stretches look alike.
AudioBuffer busy_clip(double seconds, std::uint64_t seed) {
  Rng rng(seed);
  AudioBuffer a;
  const auto n = static_cast<std::size_t>(seconds * 16000);
  double phase = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / 16000.0;
    phase += 2.0 * std::numbers::pi * (200.0 + 1500.0 * t) / 16000.0;
    a.samples.push_back(0.4 * std::sin(phase) * (0.6 + 0.4 * std::sin(7.0 * t)) + 0.05 * rng.normal());
  }
  return a;
}

}  // namespace

TEST(Dsp, RfftMatchesNaiveDft) {
  Rng rng(2);
  std::vector<double> x(300);
  for (auto& v : x) v = rng.normal();
  const auto X = rfft(x, 512);
  ASSERT_EQ(X.size(), 257u);
  for (std::size_t k = 0; k < X.size(); k += 17) {
    std::complex<double> acc = 0;
    for (std::size_t n = 0; n < x.size(); ++n)
      acc += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>((k * n) % 512) / 512.0);
    EXPECT_NEAR(std::abs(X[k] - acc), 0.0, 1e-9);
  }
}

TEST(Dsp, HannAndMel) {
  const auto w = hann_window(4);
  EXPECT_NEAR(w[0], 0.0, 1e-15);
  EXPECT_NEAR(w[1], 0.5, 1e-15);
  EXPECT_NEAR(w[2], 1.0, 1e-15);
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-9);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
}

TEST(Mfcc, ShapeAndShortClip) {
  const auto m = mfcc(tone(440, 1.0));
  EXPECT_EQ(m.dim, 13u);
  EXPECT_EQ(m.frames, 1u + (16000u - 400u) / 160u);
  EXPECT_DOUBLE_EQ(m.frame_hop, 0.01);
  AudioBuffer tiny;
  tiny.samples.assign(399, 0.1);
  EXPECT_THROW(mfcc(tiny), Error);
}

TEST(Mfcc, SilenceSitsOnTheLogFloor) {
  AudioBuffer s;
  s.samples.assign(16000, 0.0);
  const auto m = mfcc(s);
  const double c0 = std::sqrt(26.0) * std::log(1e-10);
  for (std::size_t t = 0; t < m.frames; ++t) {
    EXPECT_NEAR(m.at(t, 0), c0, 1e-9);
    for (std::size_t c = 1; c < 13; ++c) EXPECT_NEAR(m.at(t, c), 0.0, 1e-9);
  }
}

TEST(Mfcc, SineIsStationary) {
  // 500 Hz repeats every 32 samples, so every 160-sample hop sees the same
  // waveform and all frames agree.
  const auto m = mfcc(tone(500, 1.0));
  double worst = 0;
  for (std::size_t t = 1; t < m.frames; ++t)
    for (std::size_t c = 0; c < 13; ++c) worst = std::max(worst, std::abs(m.at(t, c) - m.at(t - 1, c)));
  EXPECT_LT(worst, 1e-3);
}

TEST(Mfcc, ChirpMatchesReferenceExtractor) {
  const auto x = reference::chirp_fixture();
  AudioBuffer a;
  a.samples = x;
  const auto got = mfcc(a);
  const auto want = reference::naive_mfcc(x);
  ASSERT_EQ(got.frames, want.frames);
  for (std::size_t t = 0; t < got.frames; ++t)
    for (std::size_t c = 0; c < 13; ++c) ASSERT_NEAR(got.at(t, c), want.rows[t][c], 1e-6) << t << "," << c;
}

TEST(Mfcc, OtherRatesAreResampled) {
  AudioBuffer a;
  a.sample_rate = 8000;
  a.samples.assign(8000, 0.0);
  EXPECT_EQ(mfcc(a).frames, 1u + (16000u - 400u) / 160u);
}

TEST(Chroma, PureToneLandsOnItsClass) {
  const auto m = chroma(tone(440, 1.0));
  ASSERT_EQ(m.dim, 12u);
  for (std::size_t t = 0; t < m.frames; ++t) {
    double total = 0;
    for (std::size_t j = 0; j < 12; ++j) total += m.at(t, j);
    EXPECT_NEAR(total, 1.0, 1e-9);
    EXPECT_GE(m.at(t, 9), 0.8);  // C = 0, ..., A = 9
  }
}

TEST(Chroma, SilenceIsZeroAndOctavesFold) {
  AudioBuffer s;
  s.samples.assign(8000, 0.0);
  const auto z = chroma(s);
  for (double v : z.values) EXPECT_EQ(v, 0.0);

  auto mix = tone(440, 1.0, 0.3);
  const auto high = tone(880, 1.0, 0.3);
  for (std::size_t i = 0; i < mix.samples.size(); ++i) mix.samples[i] += high.samples[i];
  const auto m = chroma(mix);
  for (std::size_t t = 0; t < m.frames; ++t) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < 12; ++j)
      if (m.at(t, j) > m.at(t, best)) best = j;
    EXPECT_EQ(best, 9u);
  }
  const auto c = chroma(tone(261.63, 0.5));
  EXPECT_GE(c.at(10, 0), 0.8);
}

TEST(Sliding, SelfDistanceIsZero) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto m = random_features(rng, 20 + rng.below(300), 13);
    const auto r = sliding_window_match(m, m);
    EXPECT_EQ(r.distance, 0.0);
    EXPECT_EQ(r.ref_offset, 0u);
    EXPECT_EQ(r.cand_offset, 0u);
    EXPECT_EQ(r.window, std::min<std::size_t>(100, m.frames));
  }
}

TEST(Sliding, RealignsAfterSilencePrefix) {
  const auto clip = busy_clip(3.0, 5);
  AudioBuffer shifted;
  shifted.samples.assign(8000, 0.0);
  shifted.samples.insert(shifted.samples.end(), clip.samples.begin(), clip.samples.end());
  for (auto kind : {FeatureKind::mfcc, FeatureKind::chroma}) {
    const auto r = sliding_window_match(extract(kind, clip), extract(kind, shifted));
    EXPECT_LT(r.distance, 0.05);
    EXPECT_EQ(r.cand_offset - r.ref_offset, 50u);
    EXPECT_EQ(r.ref_offset, 0u);
  }
}

TEST(Sliding, CandidateLongerIsTruncatedAndShorterShrinksWindow) {
  Rng rng(3);
  const auto ref = random_features(rng, 40, 4);
  auto longer = ref;
  for (int i = 0; i < 4 * 30; ++i) longer.values.push_back(rng.normal());
  longer.frames = 70;
  EXPECT_EQ(sliding_min_distance(ref, longer), 0.0);
  auto shorter = ref;
  shorter.frames = 25;
  shorter.values.resize(25 * 4);
  EXPECT_EQ(sliding_window_match(ref, shorter).window, 25u);
  EXPECT_EQ(sliding_min_distance(ref, shorter), 0.0);
}

TEST(Sliding, MatchesNaiveSearch) {
  Rng rng(9);
  const SlidingParams p{12, 3};
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_features(rng, 30 + rng.below(20), 5);
    const auto b = random_features(rng, 30 + rng.below(20), 5);
    const std::size_t tc = std::min(a.frames, b.frames);
    const std::size_t w = std::min<std::size_t>(p.window, tc);
    double best = INFINITY;
    for (std::size_t r = 0; r + w <= a.frames; r += p.stride)
      for (std::size_t c = 0; c + w <= tc; c += p.stride) {
        double s = 0;
        for (std::size_t t = 0; t < w; ++t) {
          double d = 0;
          for (std::size_t j = 0; j < 5; ++j) d += std::pow(a.at(r + t, j) - b.at(c + t, j), 2);
          s += std::sqrt(d);
        }
        best = std::min(best, s / (static_cast<double>(w) * std::sqrt(5.0)));
      }
    EXPECT_NEAR(sliding_min_distance(a, b, p), best, 1e-12);
  }
}

TEST(Sliding, IndependentNoiseIsFarApart) {
  double floor_mfcc = INFINITY, floor_chroma = INFINITY;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto a = noise(1.2, 2 * s), b = noise(1.2, 2 * s + 1, 0.1);
    floor_mfcc = std::min(floor_mfcc, sliding_min_distance(mfcc(a), mfcc(b)));
    floor_chroma = std::min(floor_chroma, sliding_min_distance(chroma(a), chroma(b)));
  }
  EXPECT_GT(floor_mfcc, 0.75);
  EXPECT_GT(floor_chroma, 0.0075);
}

TEST(AudioVerdict, IdenticalClipsPass) {
  const auto v = synthetic_voice(3, 10, 1);
  const auto verdict = judge_direct_audio(v, v);
  EXPECT_EQ(verdict.mfcc_dist, 0.0);
  EXPECT_EQ(verdict.chroma_dist, 0.0);
  EXPECT_TRUE(verdict.mfcc_pass);
  EXPECT_TRUE(verdict.chroma_pass);
  EXPECT_FALSE(verdict.llm_same);
}

TEST(AudioVerdict, JudgeReplies) {
  const auto v = synthetic_voice(1, 4, 2);
  JudgeFn maybe = [](std::string_view, const std::vector<Payload>&) { return std::string("Maybe"); };
  const auto m = judge_direct_audio(v, v, {}, &maybe);
  EXPECT_FALSE(m.llm_same);
  EXPECT_TRUE(m.llm_error);
  EXPECT_FALSE(m.llm_pass);

  std::size_t seen = 0;
  JudgeFn yes = [&](std::string_view prompt, const std::vector<Payload>& p) {
    seen = p.size();
    EXPECT_NE(prompt.find("<audio_1>"), std::string_view::npos);
    return std::string("Yes.");
  };
  const auto y = judge_direct_audio(v, v, {}, &yes);
  EXPECT_EQ(seen, 2u);
  EXPECT_EQ(y.llm_same, true);
  EXPECT_TRUE(y.llm_pass);
}

TEST(YesNo, Parsing) {
  EXPECT_EQ(parse_yes_no("Yes"), true);
  EXPECT_EQ(parse_yes_no("  no, they differ"), false);
  EXPECT_EQ(parse_yes_no("\"YES!\""), true);
  EXPECT_FALSE(parse_yes_no("Maybe"));
  EXPECT_FALSE(parse_yes_no("yesterday"));
  EXPECT_FALSE(parse_yes_no(""));
}

TEST(Signature, MeansOverTime) {
  FeatureMatrix constant;
  constant.frames = 5;
  constant.dim = 3;
  for (int t = 0; t < 5; ++t) constant.values.insert(constant.values.end(), {1.0, -2.0, 0.5});
  EXPECT_EQ(speaker_signature(constant), (std::vector<double>{1.0, -2.0, 0.5}));

  const auto m = mfcc(synthetic_voice(2, 5, 3));
  auto doubled = m;
  doubled.values.insert(doubled.values.end(), m.values.begin(), m.values.end());
  doubled.frames *= 2;
  const auto s1 = speaker_signature(m), s2 = speaker_signature(doubled);
  for (std::size_t j = 0; j < s1.size(); ++j) EXPECT_NEAR(s1[j], s2[j], 1e-12);

  std::vector<double> col(13, 0.0);
  for (std::size_t t = 0; t < m.frames; ++t)
    for (std::size_t j = 0; j < 13; ++j) col[j] += m.at(t, j);
  for (std::size_t j = 0; j < 13; ++j) EXPECT_NEAR(s1[j], col[j] / static_cast<double>(m.frames), 1e-12);
}

TEST(SpeakerRank, Basics) {
  const auto a = synthetic_voice(0, 3, 1), b = synthetic_voice(1, 3, 1), c = synthetic_voice(2, 3, 1);
  std::vector<SpeakerClip> pool{{"s0", a}, {"s1", b}, {"s2", c}};
  EXPECT_EQ(speaker_rank(b, pool, "s1"), 1u);
  EXPECT_EQ(speaker_rank(b, std::vector<SpeakerClip>{{"s0", a}}, "s0"), 1u);
  try {
    speaker_rank(b, pool, "s9");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
  }
}

TEST(SpeakerRank, SpeakersCountOnceAndTiesGoToSmallerId) {
  std::vector<SpeakerCandidate> pool{{"b", {0.0}}, {"a", {2.0}}, {"a", {5.0}}, {"c", {1.0}}};
  EXPECT_EQ(speaker_rank({0.0}, pool, "b"), 1u);
  EXPECT_EQ(speaker_rank({0.0}, pool, "c"), 2u);
  EXPECT_EQ(speaker_rank({0.0}, pool, "a"), 3u);
  std::vector<SpeakerCandidate> tie{{"z", {1.0}}, {"y", {-1.0}}};
  EXPECT_EQ(speaker_rank({0.0}, tie, "y"), 1u);
  EXPECT_EQ(speaker_rank({0.0}, tie, "z"), 2u);
}

TEST(SpeakerRank, FiftySyntheticSpeakersWithMildNoise) {
  // Pool: one clip per speaker. Trials: another clip of a speaker plus
  // Gaussian noise of sigma 0.003.
  constexpr std::size_t speakers = 50;
  std::vector<SpeakerCandidate> pool;
  for (std::size_t s = 0; s < speakers; ++s)
    pool.push_back({"spk" + std::to_string(s), speaker_signature(synthetic_voice(s, speakers, 1000 + s))});
  std::size_t top3 = 0;
  Rng rng(77);
  for (std::size_t trial = 0; trial < 100; ++trial) {
    const std::size_t s = trial % speakers;
    auto clip = synthetic_voice(s, speakers, derive_seed(5, trial));
    for (auto& x : clip.samples) x += 0.003 * rng.normal();
    if (speaker_rank(speaker_signature(clip), pool, "spk" + std::to_string(s)) <= 3) ++top3;
  }
  EXPECT_GE(top3, 90u);
}
