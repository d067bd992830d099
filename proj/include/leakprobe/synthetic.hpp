#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leakprobe/corpus.hpp"

namespace leakprobe {

// Seeded fixtures standing in for licensed datasets.

// `words` distinct lowercase pseudo-words (consonant-vowel syllables).
std::string synthetic_transcript(std::size_t words, std::uint64_t seed);

// Harmonic "voice" whose pitch, formant and harmonic phases depend on
// `speaker`; the clip seed adds a slight pitch offset and drift.
// PCM16-quantized.
AudioBuffer synthetic_voice(std::size_t speaker, std::size_t n_speakers, std::uint64_t clip_seed,
                            double seconds = 1.2);

// Sum of seeded colour gratings plus blobs: plenty of corners and blobs.
ImageBuffer synthetic_texture(int width, int height, std::uint64_t seed);

struct SyntheticAudioOptions {
  std::size_t entries = 200;
  std::size_t speakers = 50;
  double seconds = 1.2;
  std::size_t words = 20;
  std::uint64_t seed = 0;
  std::string id_prefix = "a";
};

// Entry i has audio from speaker i mod speakers, speaker_id "spk<j>" and a
// transcript.
std::vector<CorpusEntry> synthetic_audio_entries(const SyntheticAudioOptions& options = {});

struct SyntheticImageOptions {
  std::size_t entries = 50;
  int width = 64;
  int height = 64;
  std::size_t words = 20;
  std::uint64_t seed = 0;
  std::string id_prefix = "i";
  bool with_text = true;
};

std::vector<CorpusEntry> synthetic_image_entries(const SyntheticImageOptions& options = {});

std::vector<CorpusEntry> synthetic_text_entries(std::size_t entries, std::size_t words, std::uint64_t seed,
                                                const std::string& id_prefix = "t");

}  // namespace leakprobe
