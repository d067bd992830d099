#include "leakprobe/corpus.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <json.hpp>

#include "leakprobe/error.hpp"
#include "leakprobe/util.hpp"

namespace leakprobe {

std::string_view to_string(Modality modality) noexcept {
  switch (modality) {
    case Modality::text: return "text";
    case Modality::image: return "image";
    case Modality::audio: return "audio";
  }
  return "text";
}

Modality parse_modality(std::string_view name) {
  if (name == "text") return Modality::text;
  if (name == "image") return Modality::image;
  if (name == "audio") return Modality::audio;
  throw Error(ErrorKind::invalid_argument, "unknown modality", std::string(name));
}

ImageBuffer::ImageBuffer(int w, int h, std::uint8_t fill)
    : width(w), height(h),
      data(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0) * channels, fill) {
  validate();
}

ImageBuffer::ImageBuffer(int w, int h, std::vector<std::uint8_t> bytes)
    : width(w), height(h), data(std::move(bytes)) {
  validate();
}

void ImageBuffer::validate() const {
  if (width < 1 || height < 1)
    throw Error(ErrorKind::invalid_argument, "image must be at least 1x1");
  if (data.size() != static_cast<std::size_t>(width) * height * channels)
    throw Error(ErrorKind::invalid_argument, "image data length != width*height*3");
}

void AudioBuffer::validate() const {
  if (sample_rate <= 0) throw Error(ErrorKind::invalid_argument, "sample_rate must be > 0");
  if (samples.empty()) throw Error(ErrorKind::invalid_argument, "audio has no samples");
}

Corpus::Corpus(std::vector<CorpusEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    validate_entry(entries_[i]);
    if (!by_id_.emplace(entries_[i].id, i).second)
      throw Error(ErrorKind::duplicate_id, "entry id appears more than once", entries_[i].id);
  }
}

const CorpusEntry* Corpus::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &entries_[it->second];
}

const CorpusEntry& Corpus::at(std::string_view id) const {
  if (const auto* e = find(id)) return *e;
  throw Error(ErrorKind::validation, "entry id not in corpus", std::string(id));
}

void validate_entry(const CorpusEntry& entry) {
  if (entry.id.empty()) throw Error(ErrorKind::manifest, "entry id is empty");
  if (!entry.has_text() && !entry.has_image() && !entry.has_audio())
    throw Error(ErrorKind::manifest, "entry has no text, image or audio", entry.id);
  if (entry.speaker_id && !entry.has_audio())
    throw Error(ErrorKind::manifest, "speaker_id set on an entry without audio", entry.id);
}

namespace {

std::optional<std::string> optional_string(const nlohmann::json& obj, const char* key,
                                           const std::string& id) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string())
    throw Error(ErrorKind::manifest, std::string("field '") + key + "' must be a string or null", id);
  return it->get<std::string>();
}

}  // namespace

Corpus load_manifest(const std::filesystem::path& path, int analysis_rate) {
  if (!std::filesystem::exists(path))
    throw Error(ErrorKind::io, "manifest file does not exist", path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::manifest, std::string("malformed JSON: ") + e.what(), path.string());
  }
  if (!doc.is_array()) throw Error(ErrorKind::manifest, "manifest must be a JSON array", path.string());

  const auto base = path.parent_path();
  std::vector<CorpusEntry> entries;
  entries.reserve(doc.size());
  std::unordered_map<std::string, bool> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& obj = doc[i];
    if (!obj.is_object())
      throw Error(ErrorKind::manifest, "entry #" + std::to_string(i) + " is not an object", path.string());
    auto id_it = obj.find("id");
    if (id_it == obj.end() || !id_it->is_string())
      throw Error(ErrorKind::manifest, "entry #" + std::to_string(i) + " has no string 'id'", path.string());
    CorpusEntry entry;
    entry.id = id_it->get<std::string>();
    if (!seen.emplace(entry.id, true).second)
      throw Error(ErrorKind::duplicate_id, "entry id appears more than once", entry.id);
    entry.text = optional_string(obj, "text", entry.id);
    entry.image_path = optional_string(obj, "image", entry.id);
    entry.audio_path = optional_string(obj, "audio", entry.id);
    entry.speaker_id = optional_string(obj, "speaker_id", entry.id);

    auto load_payload = [&](const std::string& rel) {
      const auto full = base / rel;
      if (!std::filesystem::is_regular_file(full))
        throw Error(ErrorKind::missing_payload, "payload file not found: " + rel, entry.id);
      return read_file(full);
    };
    try {
      if (entry.image_path)
        entry.image = std::make_shared<const ImageBuffer>(decode_image(load_payload(*entry.image_path)));
      if (entry.audio_path)
        entry.audio = std::make_shared<const AudioBuffer>(
            decode_audio(load_payload(*entry.audio_path), analysis_rate));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::decode)
        throw Error(ErrorKind::decode, "undecodable payload: " + e.reason(), entry.id);
      throw;
    }
    validate_entry(entry);
    entries.push_back(std::move(entry));
  }
  return Corpus(std::move(entries));
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<CorpusEntry>& entries) {
  const auto base = path.parent_path();
  if (!base.empty()) std::filesystem::create_directories(base);
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json obj;
    obj["id"] = e.id;
    obj["text"] = e.text ? nlohmann::json(*e.text) : nlohmann::json(nullptr);
    obj["image"] = nullptr;
    obj["audio"] = nullptr;
    if (e.image) {
      const std::string rel = e.image_path.value_or(e.id + ".png");
      std::filesystem::create_directories((base / rel).parent_path());
      write_file(base / rel, encode_png(*e.image));
      obj["image"] = rel;
    }
    if (e.audio) {
      const std::string rel = e.audio_path.value_or(e.id + ".wav");
      std::filesystem::create_directories((base / rel).parent_path());
      write_file(base / rel, encode_wav(*e.audio));
      obj["audio"] = rel;
    }
    obj["speaker_id"] = e.speaker_id ? nlohmann::json(*e.speaker_id) : nlohmann::json(nullptr);
    doc.push_back(std::move(obj));
  }
  write_file(path, doc.dump(2));
}

// ---------------------------------------------------------------- PNG

namespace {

struct PngSource {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

struct PngErrorState {
  std::jmp_buf jump;
  char message[256];
  std::uint8_t* buffer;
  png_bytep* rows;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* src = static_cast<PngSource*>(png_get_io_ptr(png));
  if (src->size - src->pos < count) png_error(png, "unexpected end of PNG stream");
  std::memcpy(out, src->data + src->pos, count);
  src->pos += count;
}

void png_on_error(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngErrorState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", msg);
  std::longjmp(state->jump, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

enum class PngStatus { ok, corrupt, unsupported_depth };

// Only trivially destructible locals live in this frame because libpng
// reports errors via longjmp.
PngStatus decode_png_into(const std::uint8_t* data, std::size_t size, int* width, int* height,
                          std::uint8_t** pixels, PngErrorState* state) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, state, png_on_error, png_on_warning);
  if (!png) return PngStatus::corrupt;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return PngStatus::corrupt;
  }
  PngSource src{data, size, 0};
  state->buffer = nullptr;
  state->rows = nullptr;
  if (setjmp(state->jump)) {
    std::free(state->buffer);
    std::free(state->rows);
    state->buffer = nullptr;
    state->rows = nullptr;
    png_destroy_read_struct(&png, &info, nullptr);
    return PngStatus::corrupt;
  }
  png_set_read_fn(png, &src, png_read_from_memory);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    return PngStatus::unsupported_depth;
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(w) * 3) png_error(png, "unexpected row layout");

  state->buffer = static_cast<std::uint8_t*>(std::malloc(static_cast<std::size_t>(w) * h * 3));
  state->rows = static_cast<png_bytep*>(std::malloc(sizeof(png_bytep) * h));
  if (!state->buffer || !state->rows) png_error(png, "out of memory");
  for (png_uint_32 y = 0; y < h; ++y) state->rows[y] = state->buffer + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, state->rows);
  png_read_end(png, nullptr);
  std::free(state->rows);
  state->rows = nullptr;
  png_destroy_read_struct(&png, &info, nullptr);
  *width = static_cast<int>(w);
  *height = static_cast<int>(h);
  *pixels = state->buffer;
  return PngStatus::ok;
}

}  // namespace

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw Error(ErrorKind::decode, "not a PNG stream");
  PngErrorState state{};
  int w = 0;
  int h = 0;
  std::uint8_t* pixels = nullptr;
  switch (decode_png_into(bytes.data(), bytes.size(), &w, &h, &pixels, &state)) {
    case PngStatus::ok: break;
    case PngStatus::unsupported_depth:
      throw Error(ErrorKind::decode, "unsupported PNG bit depth 16");
    case PngStatus::corrupt:
      throw Error(ErrorKind::decode, std::string("corrupt PNG stream: ") + state.message);
  }
  std::vector<std::uint8_t> data(pixels, pixels + static_cast<std::size_t>(w) * h * 3);
  std::free(pixels);
  return ImageBuffer(w, h, std::move(data));
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
  image.validate();
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, image.data.data(), 0, nullptr))
    throw Error(ErrorKind::decode, std::string("PNG encode failed: ") + desc.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, image.data.data(), 0, nullptr))
    throw Error(ErrorKind::decode, std::string("PNG encode failed: ") + desc.message);
  out.resize(size);
  png_image_free(&desc);
  return out;
}

// ---------------------------------------------------------------- WAV

namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

AudioBuffer decode_audio(std::span<const std::uint8_t> bytes, int analysis_rate) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(ErrorKind::decode, "corrupt WAV header: missing RIFF/WAVE");
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* pcm = nullptr;
  std::size_t pcm_size = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (size > bytes.size() - body) throw Error(ErrorKind::decode, "corrupt WAV header: chunk overruns file");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw Error(ErrorKind::decode, "corrupt WAV header: short fmt chunk");
      std::uint16_t format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      bits = le16(chunk + 22);
      if (format == kFormatExtensible && size >= 40) format = le16(chunk + 8 + 24);
      if (format != kFormatPcm) throw Error(ErrorKind::decode, "non-PCM WAV encoding " + std::to_string(format));
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      pcm = chunk + 8;
      pcm_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw Error(ErrorKind::decode, "corrupt WAV header: no fmt chunk");
  if (!pcm) throw Error(ErrorKind::decode, "corrupt WAV header: no data chunk");
  if (bits != 16) throw Error(ErrorKind::decode, "only 16-bit PCM is supported, got " + std::to_string(bits));
  if (channels != 1 && channels != 2)
    throw Error(ErrorKind::decode, "only mono or stereo is supported, got " + std::to_string(channels));
  if (rate == 0) throw Error(ErrorKind::decode, "corrupt WAV header: zero sample rate");

  const std::size_t frames = pcm_size / (2u * channels);
  if (frames == 0) throw Error(ErrorKind::decode, "WAV has no samples");
  AudioBuffer audio;
  audio.sample_rate = static_cast<int>(rate);
  audio.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const auto raw = static_cast<std::int16_t>(le16(pcm + 2 * (i * channels + c)));
      acc += raw / 32768.0;
    }
    audio.samples[i] = acc / channels;
  }
  if (audio.sample_rate != analysis_rate) return resample_linear(audio, analysis_rate);
  return audio;
}

std::int16_t to_pcm16(double sample) noexcept {
  const double scaled = std::nearbyint(sample * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

std::vector<std::uint8_t> encode_wav(std::span<const double> interleaved, int channels,
                                     int sample_rate) {
  if (channels < 1 || channels > 2 || sample_rate <= 0 || interleaved.size() % channels != 0)
    throw Error(ErrorKind::invalid_argument, "bad WAV encode parameters");
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, static_cast<std::uint16_t>(channels));
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate * channels * 2));
  put16(out, static_cast<std::uint16_t>(channels * 2));
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (double s : interleaved) put16(out, static_cast<std::uint16_t>(to_pcm16(s)));
  return out;
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio) {
  return encode_wav(audio.samples, 1, audio.sample_rate);
}

AudioBuffer resample_linear(const AudioBuffer& audio, int target_rate) {
  audio.validate();
  if (target_rate <= 0) throw Error(ErrorKind::invalid_argument, "target rate must be > 0");
  if (target_rate == audio.sample_rate) return audio;
  const std::size_t n_in = audio.samples.size();
  const auto n_out = static_cast<std::size_t>(std::max<long long>(
      1, std::llround(static_cast<double>(n_in) * target_rate / audio.sample_rate)));
  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  const double step = static_cast<double>(audio.sample_rate) / target_rate;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) * step;
    const auto i0 = static_cast<std::size_t>(t);
    if (i0 + 1 >= n_in) {
      out.samples[i] = audio.samples[n_in - 1];
      continue;
    }
    const double frac = t - static_cast<double>(i0);
    out.samples[i] = audio.samples[i0] + frac * (audio.samples[i0 + 1] - audio.samples[i0]);
  }
  return out;
}

AudioBuffer quantize_pcm16(AudioBuffer audio) {
  for (double& s : audio.samples) s = to_pcm16(s) / 32768.0;
  return audio;
}

}  // namespace leakprobe
