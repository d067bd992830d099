#include "leakprobe/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "leakprobe/util.hpp"

namespace leakprobe {

void GenerationParams::validate() const {
  if (!std::isfinite(temperature) || temperature < 0.0)
    throw Error(ErrorKind::invalid_argument, "temperature must be >= 0");
  if (cfg && (!(*cfg >= 1.0) || *cfg > 4.0))
    throw Error(ErrorKind::invalid_argument, "cfg must lie in [1.0, 4.0]");
  if (max_output_tokens < 1) throw Error(ErrorKind::invalid_argument, "max_output_tokens must be >= 1");
}

nlohmann::json GenerationParams::to_json() const {
  nlohmann::json doc;
  doc["temperature"] = temperature;
  doc["cfg"] = cfg ? nlohmann::json(*cfg) : nlohmann::json(nullptr);
  doc["output_modality"] = to_string(output_modality);
  doc["max_output_tokens"] = max_output_tokens;
  return doc;
}

GenerationParams GenerationParams::from_json(const nlohmann::json& doc) {
  GenerationParams p;
  if (!doc.is_object()) throw Error(ErrorKind::contract, "params must be an object");
  try {
    if (doc.contains("temperature")) p.temperature = doc.at("temperature").get<double>();
    if (doc.contains("cfg") && !doc.at("cfg").is_null()) p.cfg = doc.at("cfg").get<double>();
    if (doc.contains("output_modality"))
      p.output_modality = parse_modality(doc.at("output_modality").get<std::string>());
    if (doc.contains("max_output_tokens")) p.max_output_tokens = doc.at("max_output_tokens").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::contract, std::string("bad params: ") + e.what());
  }
  p.validate();
  return p;
}

void sleep_with(const RetryPolicy& policy, std::chrono::milliseconds d) {
  if (policy.sleep) {
    policy.sleep(d);
  } else {
    std::this_thread::sleep_for(d);
  }
}

RefusalDetector::RefusalDetector(const std::vector<std::string>& patterns) : sources_(patterns) {
  for (const auto& p : patterns) {
    try {
      patterns_.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      throw Error(ErrorKind::config, std::string("bad refusal pattern: ") + e.what(), p);
    }
  }
}

bool RefusalDetector::matches(std::string_view text) const {
  for (const auto& re : patterns_)
    if (std::regex_search(text.begin(), text.end(), re)) return true;
  return false;
}

TargetResponse generate(Target& target, const FusedPrompt& prompt, const GenerationParams& params,
                        const RetryPolicy& retry, const RefusalDetector& refusals) {
  params.validate();
  const GenerateRequest request{prompt.rendered_text, prompt.payloads, params};
  const auto t0 = std::chrono::steady_clock::now();
  auto outcome = invoke_with_retry([&] { return target.call(request); }, retry);
  TargetResponse response = std::move(outcome.value);
  response.attempts = outcome.attempts;
  response.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (response.refused || !response.has_content() || (response.text && refusals.matches(*response.text))) {
    response.refused = true;
    response.text.reset();
    response.image.reset();
    response.audio.reset();
  }
  return response;
}

std::string judge(Target& target, std::string_view prompt, std::vector<Payload> payloads,
                  const RetryPolicy& retry) {
  GenerateRequest request{std::string(prompt), std::move(payloads), {}};
  request.params.temperature = 0.0;
  request.params.output_modality = Modality::text;
  auto outcome = invoke_with_retry([&] { return target.call(request); }, retry);
  if (outcome.value.refused || !outcome.value.text)
    throw Error(ErrorKind::contract, "judge returned no text", target.name());
  return *outcome.value.text;
}

JudgeFn make_judge_fn(std::shared_ptr<Target> target, RetryPolicy retry) {
  return [target = std::move(target), retry = std::move(retry)](std::string_view prompt,
                                                                const std::vector<Payload>& payloads) {
    return judge(*target, prompt, payloads, retry);
  };
}

// ------------------------------------------------------------ mock targets

std::string_view to_string(MockKind kind) noexcept {
  switch (kind) {
    case MockKind::echo: return "echo";
    case MockKind::paraphrase: return "paraphrase";
    case MockKind::noiser: return "noiser";
    case MockKind::refusal: return "refusal";
  }
  return "echo";
}

MockKind parse_mock_kind(std::string_view name) {
  if (name == "echo") return MockKind::echo;
  if (name == "paraphrase") return MockKind::paraphrase;
  if (name == "noiser") return MockKind::noiser;
  if (name == "refusal") return MockKind::refusal;
  throw Error(ErrorKind::config, "unknown mock target kind", std::string(name));
}

namespace {

std::uint64_t payload_key(const Payload& p) {
  const auto bytes = canonical_bytes(p.modality == Modality::image ? ContentRef::of_image(*p.image)
                                                                   : ContentRef::of_audio(*p.audio));
  return fnv1a64(bytes);
}

std::uint64_t request_seed(std::uint64_t seed, const GenerateRequest& request) {
  std::uint64_t h = fnv1a64(request.text, seed);
  for (const auto& p : request.payloads) h = splitmix64(h ^ payload_key(p));
  h = splitmix64(h ^ fnv1a64(request.params.to_json().dump()));
  return derive_seed(seed, h);
}

}  // namespace

std::string paraphrase_tokens(std::string_view text, double rate, std::uint64_t seed) {
  Rng rng(seed);
  std::istringstream in{std::string(text)};
  std::string out;
  for (std::string tok; in >> tok;) {
    if (!out.empty()) out += ' ';
    if (rng.uniform() < rate) {
      out += "zq" + std::to_string(rng.below(1000000000ULL));
    } else {
      out += tok;
    }
  }
  return out;
}

MockTarget::MockTarget(MockTargetConfig config, std::shared_ptr<const Corpus> corpus)
    : config_(config), corpus_(std::move(corpus)) {
  if (!corpus_) return;
  for (const auto& e : corpus_->entries()) {
    if (!e.text) continue;
    if (e.image) transcripts_.emplace(payload_key({Modality::image, e.id, e.image, nullptr}), *e.text);
    if (e.audio) transcripts_.emplace(payload_key({Modality::audio, e.id, nullptr, e.audio}), *e.text);
  }
}

std::string MockTarget::name() const { return "mock:" + std::string(to_string(config_.kind)); }

std::optional<std::string> MockTarget::transcript_of(const GenerateRequest& request) const {
  if (!request.payloads.empty()) {
    auto it = transcripts_.find(payload_key(request.payloads.front()));
    if (it != transcripts_.end()) return it->second;
    return std::nullopt;
  }
  // Text-only context: the retrieved block sits between the header line and
  // the question.
  const auto header_end = request.text.find('\n');
  const auto question = request.text.rfind("\n\nQuestion: ");
  if (header_end == std::string::npos || question == std::string::npos || question <= header_end)
    return std::nullopt;
  return request.text.substr(header_end + 1, question - header_end - 1);
}

TargetResponse MockTarget::call(const GenerateRequest& request) {
  TargetResponse response;
  if (config_.kind == MockKind::refusal) {
    response.refused = true;
    return response;
  }
  Rng rng(request_seed(config_.seed, request));
  const double rate = std::clamp(request.params.temperature, 0.0, 1.0);
  if (auto transcript = transcript_of(request)) {
    if (config_.kind == MockKind::echo) {
      response.text = *transcript;
    } else {
      response.text = paraphrase_tokens(*transcript, rate, rng.next());
    }
  }
  if (config_.kind == MockKind::paraphrase) return response;

  const Modality want = request.params.output_modality;
  auto it = std::find_if(request.payloads.begin(), request.payloads.end(),
                         [&](const Payload& p) { return p.modality == want; });
  if (it == request.payloads.end()) return response;
  const bool noisy = config_.kind == MockKind::noiser;
  if (want == Modality::image) {
    ImageBuffer img = *it->image;
    if (noisy && config_.image_sigma > 0.0)
      for (auto& v : img.data)
        v = static_cast<std::uint8_t>(std::clamp(std::nearbyint(v + config_.image_sigma * rng.normal()), 0.0, 255.0));
    response.image = std::move(img);
  } else if (want == Modality::audio) {
    AudioBuffer audio = *it->audio;
    if (noisy && config_.audio_sigma > 0.0)
      for (auto& s : audio.samples) s = std::clamp(s + config_.audio_sigma * rng.normal(), -1.0, 1.0);
    response.audio = quantize_pcm16(std::move(audio));
  }
  return response;
}

std::shared_ptr<MockJudge> MockJudge::audio_equality() {
  return std::shared_ptr<MockJudge>(new MockJudge());
}

TargetResponse MockJudge::call(const GenerateRequest& request) {
  TargetResponse response;
  if (!compare_audio_) {
    response.text = reply_;
    return response;
  }
  std::vector<const AudioBuffer*> clips;
  for (const auto& p : request.payloads)
    if (p.modality == Modality::audio && p.audio) clips.push_back(p.audio.get());
  if (clips.size() < 2) throw Error(ErrorKind::contract, "audio judge needs two audio payloads");
  const bool same = quantize_pcm16(*clips[0]) == quantize_pcm16(*clips[1]);
  response.text = same ? "Yes" : "No";
  return response;
}

// -------------------------------------------------------------- wire codec

namespace {

std::string encode_payload_data(const Payload& p) {
  if (p.modality == Modality::image) {
    if (!p.image) throw Error(ErrorKind::invalid_argument, "image payload without buffer");
    return base64_encode(encode_png(*p.image));
  }
  if (p.modality == Modality::audio) {
    if (!p.audio) throw Error(ErrorKind::invalid_argument, "audio payload without buffer");
    return base64_encode(encode_wav(*p.audio));
  }
  throw Error(ErrorKind::invalid_argument, "text is not a binary payload");
}

template <typename Fn>
auto as_contract(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::contract, std::string(what) + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::contract) throw;
    throw Error(ErrorKind::contract, std::string(what) + ": " + e.reason());
  }
}

}  // namespace

nlohmann::json encode_request(const GenerateRequest& request) {
  nlohmann::json doc;
  doc["text"] = request.text;
  doc["payloads"] = nlohmann::json::array();
  for (const auto& p : request.payloads)
    doc["payloads"].push_back({{"modality", to_string(p.modality)}, {"data", encode_payload_data(p)}});
  doc["params"] = request.params.to_json();
  return doc;
}

GenerateRequest decode_request(const nlohmann::json& doc) {
  return as_contract("malformed generate request", [&] {
    GenerateRequest request;
    request.text = doc.at("text").get<std::string>();
    for (const auto& p : doc.at("payloads")) {
      Payload payload;
      payload.modality = parse_modality(p.at("modality").get<std::string>());
      const auto bytes = base64_decode(p.at("data").get<std::string>());
      if (payload.modality == Modality::image) {
        payload.image = std::make_shared<const ImageBuffer>(decode_image(bytes));
      } else if (payload.modality == Modality::audio) {
        payload.audio = std::make_shared<const AudioBuffer>(decode_audio(bytes));
      } else {
        throw Error(ErrorKind::contract, "payload modality must be image or audio");
      }
      request.payloads.push_back(std::move(payload));
    }
    if (doc.contains("params")) request.params = GenerationParams::from_json(doc.at("params"));
    return request;
  });
}

nlohmann::json encode_response(const TargetResponse& response) {
  nlohmann::json doc;
  doc["text"] = response.text ? nlohmann::json(*response.text) : nlohmann::json(nullptr);
  doc["image"] = response.image ? nlohmann::json(base64_encode(encode_png(*response.image))) : nlohmann::json(nullptr);
  doc["audio"] = response.audio ? nlohmann::json(base64_encode(encode_wav(*response.audio))) : nlohmann::json(nullptr);
  doc["refused"] = response.refused;
  return doc;
}

TargetResponse decode_response(const nlohmann::json& doc) {
  return as_contract("malformed generate response", [&] {
    if (!doc.is_object()) throw Error(ErrorKind::contract, "response body is not an object");
    TargetResponse r;
    const auto& refused = doc.at("refused");
    if (!refused.is_boolean()) throw Error(ErrorKind::contract, "'refused' must be a boolean");
    r.refused = refused.get<bool>();
    auto field = [&](const char* key) -> std::optional<std::string> {
      auto it = doc.find(key);
      if (it == doc.end() || it->is_null()) return std::nullopt;
      if (!it->is_string()) throw Error(ErrorKind::contract, std::string("'") + key + "' must be a string or null");
      return it->get<std::string>();
    };
    r.text = field("text");
    if (auto img = field("image")) r.image = decode_image(base64_decode(*img));
    if (auto audio = field("audio")) r.audio = decode_audio(base64_decode(*audio));
    return r;
  });
}

ContentRef OwnedContent::ref() const {
  switch (modality) {
    case Modality::text: return ContentRef::of_text(text);
    case Modality::image: return ContentRef::of_image(image);
    case Modality::audio: return ContentRef::of_audio(audio);
  }
  return ContentRef::of_text(text);
}

nlohmann::json encode_embed_request(const ContentRef& content) {
  nlohmann::json doc;
  doc["modality"] = to_string(content.modality);
  switch (content.modality) {
    case Modality::text: doc["data"] = std::string(content.text); break;
    case Modality::image: doc["data"] = base64_encode(encode_png(*content.image)); break;
    case Modality::audio: doc["data"] = base64_encode(encode_wav(*content.audio)); break;
  }
  return doc;
}

OwnedContent decode_embed_request(const nlohmann::json& doc) {
  return as_contract("malformed embed request", [&] {
    OwnedContent c;
    c.modality = parse_modality(doc.at("modality").get<std::string>());
    const auto data = doc.at("data").get<std::string>();
    switch (c.modality) {
      case Modality::text: c.text = data; break;
      case Modality::image: c.image = decode_image(base64_decode(data)); break;
      case Modality::audio: c.audio = decode_audio(base64_decode(data)); break;
    }
    return c;
  });
}

nlohmann::json encode_embed_response(const EmbeddingVector& vector) {
  return {{"vector", vector.values}, {"dim", vector.dim()}};
}

EmbeddingVector decode_embed_response(const nlohmann::json& doc) {
  return as_contract("malformed embed response", [&] {
    EmbeddingVector v;
    v.values = doc.at("vector").get<std::vector<float>>();
    if (doc.at("dim").get<std::size_t>() != v.values.size())
      throw Error(ErrorKind::contract, "'dim' disagrees with vector length");
    return v;
  });
}

// -------------------------------------------------------------- limiting

std::string api_key_from_env(const char* variable) {
  const char* v = std::getenv(variable);
  return v ? std::string(v) : std::string();
}

TokenBucket::TokenBucket(double rate_per_second, double burst)
    : rate_(rate_per_second), burst_(std::max(1.0, burst)), tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) return;
  while (true) {
    std::chrono::duration<double> wait{};
    {
      std::lock_guard lock(mutex_);
      const auto now = std::chrono::steady_clock::now();
      tokens_ = std::min(burst_, tokens_ + rate_ * std::chrono::duration<double>(now - last_).count());
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    }
    std::this_thread::sleep_for(wait);
  }
}

ConcurrencyLimit::ConcurrencyLimit(std::size_t limit) : available_(std::max<std::size_t>(1, limit)) {}

void ConcurrencyLimit::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return available_ > 0; });
  --available_;
}

void ConcurrencyLimit::release() {
  {
    std::lock_guard lock(mutex_);
    ++available_;
  }
  cv_.notify_one();
}

}  // namespace leakprobe
