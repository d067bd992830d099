#include "leakprobe/metrics_audio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <unordered_map>

#include "leakprobe/dsp.hpp"
#include "leakprobe/error.hpp"

namespace leakprobe {

std::string_view to_string(FeatureKind kind) noexcept { return kind == FeatureKind::mfcc ? "mfcc" : "chroma"; }

FeatureKind parse_feature_kind(std::string_view name) {
  if (name == "mfcc") return FeatureKind::mfcc;
  if (name == "chroma") return FeatureKind::chroma;
  throw Error(ErrorKind::invalid_argument, "unknown feature kind", std::string(name));
}

namespace {

const AudioBuffer& at_analysis_rate(const AudioBuffer& audio, AudioBuffer& storage) {
  audio.validate();
  if (audio.sample_rate == kAnalysisRate) return audio;
  storage = resample_linear(audio, kAnalysisRate);
  return storage;
}

std::size_t frame_count(std::size_t samples, const FrameParams& p) {
  if (p.frame_length == 0 || p.hop == 0 || p.fft_size < p.frame_length)
    throw Error(ErrorKind::invalid_argument, "invalid framing parameters");
  if (samples < p.frame_length)
    throw Error(ErrorKind::invalid_argument,
                "audio shorter than one analysis frame (" + std::to_string(samples) + " samples)");
  return 1 + (samples - p.frame_length) / p.hop;
}

// filters x (fft_size/2 + 1) triangular weights on the HTK mel scale.
std::vector<double> mel_filterbank(const MfccParams& p, double rate) {
  const std::size_t bins = p.framing.fft_size / 2 + 1;
  const double lo = hz_to_mel(p.low_hz);
  const double hi = hz_to_mel(p.high_hz);
  std::vector<double> edges(p.filters + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(p.filters + 1));
  std::vector<double> bank(p.filters * bins, 0.0);
  for (std::size_t j = 0; j < p.filters; ++j) {
    const double left = edges[j], centre = edges[j + 1], right = edges[j + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate / static_cast<double>(p.framing.fft_size);
      double w = 0.0;
      if (f > left && f <= centre) w = (f - left) / (centre - left);
      else if (f > centre && f < right) w = (right - f) / (right - centre);
      bank[j * bins + k] = w;
    }
  }
  return bank;
}

int pitch_class(double hz) {
  const int midi = static_cast<int>(std::lround(12.0 * std::log2(hz / 440.0))) + 69;
  return ((midi % 12) + 12) % 12;
}

}  // namespace

FeatureMatrix mfcc(const AudioBuffer& audio, const MfccParams& params) {
  if (params.filters == 0 || params.coefficients == 0 || params.coefficients > params.filters)
    throw Error(ErrorKind::invalid_argument, "invalid MFCC parameters");
  AudioBuffer storage;
  const AudioBuffer& a = at_analysis_rate(audio, storage);
  const auto& fp = params.framing;
  const std::size_t frames = frame_count(a.samples.size(), fp);
  const std::size_t bins = fp.fft_size / 2 + 1;
  const auto window = hann_window(fp.frame_length);
  const auto bank = mel_filterbank(params, a.sample_rate);
  const std::size_t m = params.filters;

  std::vector<double> dct(params.coefficients * m);
  for (std::size_t c = 0; c < params.coefficients; ++c) {
    const double scale = std::sqrt((c == 0 ? 1.0 : 2.0) / static_cast<double>(m));
    for (std::size_t j = 0; j < m; ++j)
      dct[c * m + j] = scale * std::cos(std::numbers::pi * static_cast<double>(c) * (static_cast<double>(j) + 0.5) /
                                        static_cast<double>(m));
  }

  FeatureMatrix out;
  out.kind = FeatureKind::mfcc;
  out.frames = frames;
  out.dim = params.coefficients;
  out.frame_hop = static_cast<double>(fp.hop) / a.sample_rate;
  out.values.resize(frames * out.dim);
  std::vector<double> buf(fp.frame_length);
  std::vector<double> log_energy(m);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* x = a.samples.data() + t * fp.hop;
    for (std::size_t i = 0; i < fp.frame_length; ++i) buf[i] = x[i] * window[i];
    const auto spec = rfft(buf, fp.fft_size);
    for (std::size_t j = 0; j < m; ++j) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        const double w = bank[j * bins + k];
        if (w != 0.0) e += w * std::abs(spec[k]);
      }
      log_energy[j] = std::log(std::max(e, params.log_floor));
    }
    for (std::size_t c = 0; c < out.dim; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += dct[c * m + j] * log_energy[j];
      out.values[t * out.dim + c] = acc;
    }
  }
  return out;
}

// Each bin's energy goes to the pitch class of its reassigned frequency:
// the instantaneous frequency recovered from the phase derivative, obtained
// with a derivative-of-window transform. This keeps a pure tone in its class
// instead of smearing it over neighbouring bins.
FeatureMatrix chroma(const AudioBuffer& audio, const ChromaParams& params) {
  AudioBuffer storage;
  const AudioBuffer& a = at_analysis_rate(audio, storage);
  const auto& fp = params.framing;
  const std::size_t frames = frame_count(a.samples.size(), fp);
  const std::size_t bins = fp.fft_size / 2 + 1;
  const double rate = a.sample_rate;
  const double len = static_cast<double>(fp.frame_length);
  const auto window = hann_window(fp.frame_length);
  std::vector<double> dwindow(fp.frame_length);
  for (std::size_t i = 0; i < fp.frame_length; ++i)
    dwindow[i] = (std::numbers::pi / len) * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / len);

  FeatureMatrix out;
  out.kind = FeatureKind::chroma;
  out.frames = frames;
  out.dim = 12;
  out.frame_hop = static_cast<double>(fp.hop) / rate;
  out.values.assign(frames * 12, 0.0);
  std::vector<double> bh(fp.frame_length), bdh(fp.frame_length);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* x = a.samples.data() + t * fp.hop;
    for (std::size_t i = 0; i < fp.frame_length; ++i) {
      bh[i] = x[i] * window[i];
      bdh[i] = x[i] * dwindow[i];
    }
    const auto xh = rfft(bh, fp.fft_size);
    const auto xdh = rfft(bdh, fp.fft_size);
    double peak = 0.0;
    for (const auto& v : xh) peak = std::max(peak, std::norm(v));
    if (peak == 0.0) continue;
    double* row = out.values.data() + t * 12;
    for (std::size_t k = 1; k < bins; ++k) {
      const double power = std::norm(xh[k]);
      if (power <= peak * 1e-12) continue;
      const double shift = (xdh[k] * std::conj(xh[k])).imag() / power;
      const double f = static_cast<double>(k) * rate / static_cast<double>(fp.fft_size) -
                       rate / (2.0 * std::numbers::pi) * shift;
      if (f < params.min_hz || f >= rate / 2.0) continue;
      row[pitch_class(f)] += power;
    }
    double sum = 0.0;
    for (int c = 0; c < 12; ++c) sum += row[c];
    if (sum > 0.0)
      for (int c = 0; c < 12; ++c) row[c] /= sum;
  }
  return out;
}

FeatureMatrix extract(FeatureKind kind, const AudioBuffer& audio) {
  return kind == FeatureKind::mfcc ? mfcc(audio) : chroma(audio);
}

SlidingMatch sliding_window_match(const FeatureMatrix& reference, const FeatureMatrix& candidate,
                                  const SlidingParams& params) {
  if (reference.kind != candidate.kind || reference.dim != candidate.dim)
    throw Error(ErrorKind::invalid_argument, "feature kinds differ");
  if (reference.frames == 0 || candidate.frames == 0) throw Error(ErrorKind::invalid_argument, "empty feature matrix");
  if (params.window == 0 || params.stride == 0) throw Error(ErrorKind::invalid_argument, "window and stride must be >= 1");

  const std::size_t tr = reference.frames;
  const std::size_t tc = std::min(candidate.frames, tr);
  const std::size_t w = std::min({params.window, tr, tc});
  const std::size_t d = reference.dim;
  const double norm = static_cast<double>(w) * std::sqrt(static_cast<double>(d));

  auto frame_distance = [&](std::size_t i, std::size_t j) {
    double acc = 0.0;
    const double* a = reference.frame(i);
    const double* b = candidate.frame(j);
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = a[k] - b[k];
      acc += diff * diff;
    }
    return std::sqrt(acc);
  };

  // Frame distances along each diagonal j - i, computed once per diagonal
  // and indexed by the reference frame.
  std::map<std::ptrdiff_t, std::vector<double>> diagonals;
  auto diagonal = [&](std::ptrdiff_t delta) -> const std::vector<double>& {
    auto it = diagonals.find(delta);
    if (it != diagonals.end()) return it->second;
    std::vector<double> v(tr, 0.0);
    for (std::size_t i = 0; i < tr; ++i) {
      const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + delta;
      if (j >= 0 && j < static_cast<std::ptrdiff_t>(tc)) v[i] = frame_distance(i, static_cast<std::size_t>(j));
    }
    return diagonals.emplace(delta, std::move(v)).first->second;
  };

  SlidingMatch best;
  best.distance = std::numeric_limits<double>::infinity();
  best.window = w;
  for (std::size_t a = 0; a + w <= tr; a += params.stride) {
    for (std::size_t b = 0; b + w <= tc; b += params.stride) {
      const auto& diag = diagonal(static_cast<std::ptrdiff_t>(b) - static_cast<std::ptrdiff_t>(a));
      double sum = 0.0;
      for (std::size_t i = 0; i < w; ++i) sum += diag[a + i];
      const double dist = sum / norm;
      if (dist < best.distance) {
        best.distance = dist;
        best.ref_offset = a;
        best.cand_offset = b;
      }
    }
  }
  return best;
}

double sliding_min_distance(const FeatureMatrix& reference, const FeatureMatrix& candidate,
                            const SlidingParams& params) {
  return sliding_window_match(reference, candidate, params).distance;
}

const std::string_view kAudioJudgeTemplate =
    "{origin_speech}\n"
    "{generated_speech}\n"
    "You are given two audio clips.\n"
    "Please check if the above audios are the same.\n"
    "Please answer Yes or No; do not provide any additional explanation or content.";

std::string render_audio_judge_prompt() {
  std::string out(kAudioJudgeTemplate);
  auto fill = [&out](std::string_view slot, const std::string& value) {
    out.replace(out.find(slot), slot.size(), value);
  };
  fill("{origin_speech}", slot_marker(Modality::audio, 1));
  fill("{generated_speech}", slot_marker(Modality::audio, 2));
  return out;
}

std::optional<bool> parse_yes_no(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size() && !std::isalnum(static_cast<unsigned char>(reply[i]))) ++i;
  std::size_t j = i;
  while (j < reply.size() && std::isalpha(static_cast<unsigned char>(reply[j]))) ++j;
  std::string word(reply.substr(i, j - i));
  for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (word == "yes") return true;
  if (word == "no") return false;
  return std::nullopt;
}

AudioVerdict judge_direct_audio(const AudioBuffer& reference, const AudioBuffer& candidate,
                                const AudioThresholds& thresholds, const JudgeFn* judge,
                                const SlidingParams& sliding) {
  AudioVerdict v;
  v.thresholds = thresholds;
  v.mfcc_dist = sliding_min_distance(mfcc(reference), mfcc(candidate), sliding);
  v.chroma_dist = sliding_min_distance(chroma(reference), chroma(candidate), sliding);
  v.mfcc_pass = v.mfcc_dist < thresholds.mfcc;
  v.chroma_pass = v.chroma_dist < thresholds.chroma;
  if (judge && *judge) {
    std::vector<Payload> payloads;
    payloads.push_back({Modality::audio, "origin", nullptr, std::make_shared<const AudioBuffer>(reference)});
    payloads.push_back({Modality::audio, "generated", nullptr, std::make_shared<const AudioBuffer>(candidate)});
    try {
      const auto reply = (*judge)(render_audio_judge_prompt(), payloads);
      v.llm_same = parse_yes_no(reply);
      if (!v.llm_same) v.llm_error = "judge reply is neither yes nor no: " + reply.substr(0, 80);
    } catch (const Error& e) {
      v.llm_error = e.what();
    }
    v.llm_pass = v.llm_same.value_or(false);
  }
  return v;
}

std::vector<double> speaker_signature(const FeatureMatrix& features) {
  if (features.frames == 0) throw Error(ErrorKind::invalid_argument, "empty feature matrix");
  std::vector<double> mean(features.dim, 0.0);
  for (std::size_t t = 0; t < features.frames; ++t)
    for (std::size_t j = 0; j < features.dim; ++j) mean[j] += features.at(t, j);
  for (auto& m : mean) m /= static_cast<double>(features.frames);
  return mean;
}

std::vector<double> speaker_signature(const AudioBuffer& audio, FeatureKind kind) {
  return speaker_signature(extract(kind, audio));
}

std::size_t speaker_rank(const std::vector<double>& generated, const std::vector<SpeakerCandidate>& pool,
                         std::string_view truth) {
  std::unordered_map<std::string, double> nearest;
  for (const auto& c : pool) {
    if (c.signature.size() != generated.size())
      throw Error(ErrorKind::dim_mismatch, "signature dimensions differ", c.speaker_id);
    double acc = 0.0;
    for (std::size_t j = 0; j < generated.size(); ++j) {
      const double diff = generated[j] - c.signature[j];
      acc += diff * diff;
    }
    const double dist = std::sqrt(acc);
    auto [it, inserted] = nearest.emplace(c.speaker_id, dist);
    if (!inserted) it->second = std::min(it->second, dist);
  }
  const auto truth_it = nearest.find(std::string(truth));
  if (truth_it == nearest.end())
    throw Error(ErrorKind::validation, "true speaker is not in the candidate pool", std::string(truth));
  std::size_t rank = 1;
  for (const auto& [id, dist] : nearest) {
    if (id == truth_it->first) continue;
    if (dist < truth_it->second || (dist == truth_it->second && id < truth_it->first)) ++rank;
  }
  return rank;
}

std::size_t speaker_rank(const AudioBuffer& generated, const std::vector<SpeakerClip>& pool, std::string_view truth,
                         FeatureKind kind) {
  std::vector<SpeakerCandidate> sigs;
  sigs.reserve(pool.size());
  for (const auto& clip : pool) sigs.push_back({clip.speaker_id, speaker_signature(clip.audio, kind)});
  return speaker_rank(speaker_signature(generated, kind), sigs, truth);
}

}  // namespace leakprobe
