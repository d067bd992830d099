#pragma once

#include <optional>
#include <string>
#include <vector>

#include "leakprobe/corpus.hpp"
#include "leakprobe/gateway.hpp"

namespace leakprobe {

enum class FeatureKind { mfcc, chroma };

std::string_view to_string(FeatureKind kind) noexcept;
FeatureKind parse_feature_kind(std::string_view name);

// T frames of d values, row-major by frame.
struct FeatureMatrix {
  FeatureKind kind = FeatureKind::mfcc;
  std::size_t frames = 0;
  std::size_t dim = 0;
  double frame_hop = 0.010;  // seconds
  std::vector<double> values;

  const double* frame(std::size_t t) const { return values.data() + t * dim; }
  double at(std::size_t t, std::size_t j) const { return values[t * dim + j]; }
};

struct FrameParams {
  std::size_t frame_length = 400;  // 25 ms at 16 kHz
  std::size_t hop = 160;           // 10 ms
  std::size_t fft_size = 512;
};

struct MfccParams {
  FrameParams framing;
  std::size_t filters = 26;
  double low_hz = 0.0;
  double high_hz = 8000.0;
  std::size_t coefficients = 13;
  double log_floor = 1e-10;
};

struct ChromaParams {
  FrameParams framing;
  double min_hz = 32.7;
};

// Audio is resampled to the analysis rate first when it differs.
// Throws Error{invalid_argument} for clips shorter than one frame.
FeatureMatrix mfcc(const AudioBuffer& audio, const MfccParams& params = {});
FeatureMatrix chroma(const AudioBuffer& audio, const ChromaParams& params = {});
FeatureMatrix extract(FeatureKind kind, const AudioBuffer& audio);

struct SlidingParams {
  std::size_t window = 100;
  std::size_t stride = 10;
};

struct SlidingMatch {
  double distance = 0.0;
  std::size_t ref_offset = 0;
  std::size_t cand_offset = 0;
  std::size_t window = 0;
};

// The candidate is cut to the reference's frame count, then a window of
// min(window, T_ref, T_cand) frames slides over both matrices on the stride
// grid. Each placement scores the mean per-frame Euclidean distance divided
// by sqrt(d); the smallest wins, earliest offsets first on ties.
SlidingMatch sliding_window_match(const FeatureMatrix& reference, const FeatureMatrix& candidate,
                                  const SlidingParams& params = {});
double sliding_min_distance(const FeatureMatrix& reference, const FeatureMatrix& candidate,
                            const SlidingParams& params = {});

extern const std::string_view kAudioJudgeTemplate;
std::string render_audio_judge_prompt();
// Leading "yes"/"no" (case-insensitive, surrounding punctuation ignored).
std::optional<bool> parse_yes_no(std::string_view reply);

struct AudioThresholds {
  double mfcc = 0.75;      // pass when distance < threshold
  double chroma = 0.0075;  // pass when distance < threshold
};

struct AudioVerdict {
  double mfcc_dist = 0.0;
  double chroma_dist = 0.0;
  std::optional<bool> llm_same;
  std::optional<std::string> llm_error;
  bool mfcc_pass = false;
  bool chroma_pass = false;
  bool llm_pass = false;
  AudioThresholds thresholds;
};

AudioVerdict judge_direct_audio(const AudioBuffer& reference, const AudioBuffer& candidate,
                                const AudioThresholds& thresholds = {}, const JudgeFn* judge = nullptr,
                                const SlidingParams& sliding = {});

// Time-mean of the feature matrix.
std::vector<double> speaker_signature(const AudioBuffer& audio, FeatureKind kind = FeatureKind::mfcc);
std::vector<double> speaker_signature(const FeatureMatrix& features);

struct SpeakerCandidate {
  std::string speaker_id;
  std::vector<double> signature;
};

// 1-based rank of `truth` among the pool's speakers, ordered by signature
// distance to `generated` (a speaker with several clips counts once, at its
// nearest clip; ties go to the smaller speaker id). Throws
// Error{validation} when truth is absent.
std::size_t speaker_rank(const std::vector<double>& generated, const std::vector<SpeakerCandidate>& pool,
                         std::string_view truth);

struct SpeakerClip {
  std::string speaker_id;
  AudioBuffer audio;
};

std::size_t speaker_rank(const AudioBuffer& generated, const std::vector<SpeakerClip>& pool, std::string_view truth,
                         FeatureKind kind = FeatureKind::mfcc);

}  // namespace leakprobe
