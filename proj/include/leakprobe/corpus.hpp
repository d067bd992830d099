#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace leakprobe {

enum class Modality : std::uint8_t { text = 0, image = 1, audio = 2 };

std::string_view to_string(Modality modality) noexcept;
Modality parse_modality(std::string_view name);

inline constexpr int kAnalysisRate = 16000;

// 8-bit RGB, row-major, interleaved.
struct ImageBuffer {
  static constexpr int channels = 3;

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, std::uint8_t fill = 0);
  ImageBuffer(int w, int h, std::vector<std::uint8_t> bytes);

  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  // Throws if the buffer does not satisfy the size invariants.
  void validate() const;

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

// Mono, samples in [-1, 1].
struct AudioBuffer {
  int sample_rate = kAnalysisRate;
  std::vector<double> samples;

  void validate() const;
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }

  friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;
};

struct CorpusEntry {
  std::string id;
  std::optional<std::string> text;
  std::optional<std::string> image_path;
  std::optional<std::string> audio_path;
  std::optional<std::string> speaker_id;
  std::shared_ptr<const ImageBuffer> image;
  std::shared_ptr<const AudioBuffer> audio;

  bool has_text() const { return text.has_value(); }
  bool has_image() const { return image != nullptr; }
  bool has_audio() const { return audio != nullptr; }
};

// Read-only after construction; entry order is the manifest order.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<CorpusEntry> entries);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<CorpusEntry>& entries() const { return entries_; }
  const CorpusEntry* find(std::string_view id) const;
  const CorpusEntry& at(std::string_view id) const;

 private:
  std::vector<CorpusEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// Validates one entry against the record invariants; throws Error naming it.
void validate_entry(const CorpusEntry& entry);

Corpus load_manifest(const std::filesystem::path& path,
                     int analysis_rate = kAnalysisRate);

// Writes a manifest for `entries`, storing payloads under `dir` as PNG/WAV.
// Entries without a path get "<id>.png" / "<id>.wav".
void write_manifest(const std::filesystem::path& path,
                    const std::vector<CorpusEntry>& entries);

ImageBuffer decode_image(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const ImageBuffer& image);

AudioBuffer decode_audio(std::span<const std::uint8_t> bytes,
                         int analysis_rate = kAnalysisRate);
// PCM16 WAV; `interleaved` holds `channels` samples per frame.
std::vector<std::uint8_t> encode_wav(std::span<const double> interleaved,
                                     int channels, int sample_rate);
std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio);

AudioBuffer resample_linear(const AudioBuffer& audio, int target_rate);

std::int16_t to_pcm16(double sample) noexcept;
// Rounds every sample to the nearest PCM16 level (value / 32768).
AudioBuffer quantize_pcm16(AudioBuffer audio);

}  // namespace leakprobe
