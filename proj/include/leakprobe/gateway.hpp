#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "leakprobe/attack.hpp"
#include "leakprobe/corpus.hpp"
#include "leakprobe/embed_retrieve.hpp"
#include "leakprobe/error.hpp"

namespace leakprobe {

struct GenerationParams {
  double temperature = 0.0;
  std::optional<double> cfg;  // image targets only, passed through
  Modality output_modality = Modality::text;
  int max_output_tokens = 1024;

  void validate() const;
  nlohmann::json to_json() const;
  static GenerationParams from_json(const nlohmann::json& doc);

  friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

struct TargetResponse {
  std::optional<std::string> text;
  std::optional<ImageBuffer> image;
  std::optional<AudioBuffer> audio;
  bool refused = false;
  double latency_ms = 0.0;
  int attempts = 0;

  bool has_content() const { return text || image || audio; }
  // Compares what the target produced, ignoring timing and attempt count.
  bool same_content(const TargetResponse& other) const {
    return text == other.text && image == other.image && audio == other.audio && refused == other.refused;
  }
};

struct GenerateRequest {
  std::string text;
  std::vector<Payload> payloads;
  GenerationParams params;
};

// One attempt against a black-box generator. Implementations throw
// Error{transport} for retryable failures and Error{contract} for malformed
// replies. Must be safe to call concurrently.
class Target {
 public:
  virtual ~Target() = default;
  virtual TargetResponse call(const GenerateRequest& request) = 0;
  virtual std::string name() const = 0;
};

// ------------------------------------------------------------------ retry

using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds interval{2000};
  Sleeper sleep;  // empty: std::this_thread::sleep_for
};

template <typename T>
struct Attempted {
  T value;
  int attempts = 0;
};

void sleep_with(const RetryPolicy& policy, std::chrono::milliseconds d);

// Calls `thunk` until it succeeds or max_attempts transport failures have
// happened, waiting `interval` between attempts. Non-transport errors are
// not retried. Exhaustion throws Error{exhausted} listing every attempt.
template <typename F>
auto invoke_with_retry(F&& thunk, const RetryPolicy& policy) -> Attempted<std::invoke_result_t<F&>> {
  if (policy.max_attempts < 1) throw Error(ErrorKind::invalid_argument, "max_attempts must be >= 1");
  std::string diagnostics;
  for (int attempt = 1;; ++attempt) {
    try {
      return {thunk(), attempt};
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::transport) throw;
      diagnostics += (diagnostics.empty() ? "" : "; ") + std::string("attempt ") + std::to_string(attempt) +
                     ": " + e.reason();
      if (attempt >= policy.max_attempts)
        throw Error(ErrorKind::exhausted,
                    std::to_string(attempt) + " attempts failed (" + diagnostics + ")");
    }
    sleep_with(policy, policy.interval);
  }
}

// -------------------------------------------------------- refusal, generate

// Patterns are ECMAScript regexes searched (case-insensitively) in the
// response text.
class RefusalDetector {
 public:
  RefusalDetector() = default;
  explicit RefusalDetector(const std::vector<std::string>& patterns);

  bool matches(std::string_view text) const;
  const std::vector<std::string>& patterns() const { return sources_; }

 private:
  std::vector<std::string> sources_;
  std::vector<std::regex> patterns_;
};

// Sends the fused prompt verbatim and tags the response with attempts and
// latency. A declared refusal, an empty response or a refusal-pattern match
// yields refused=true with every payload cleared.
TargetResponse generate(Target& target, const FusedPrompt& prompt, const GenerationParams& params,
                        const RetryPolicy& retry = {}, const RefusalDetector& refusals = {});

// Raw judge reply text. Judge requests are sent at temperature 0.
std::string judge(Target& target, std::string_view prompt, std::vector<Payload> payloads,
                  const RetryPolicy& retry = {});

using JudgeFn = std::function<std::string(std::string_view prompt, const std::vector<Payload>& payloads)>;
JudgeFn make_judge_fn(std::shared_ptr<Target> target, RetryPolicy retry = {});

// ------------------------------------------------------------ mock targets

enum class MockKind { echo, paraphrase, noiser, refusal };

std::string_view to_string(MockKind kind) noexcept;
MockKind parse_mock_kind(std::string_view name);

struct MockTargetConfig {
  MockKind kind = MockKind::echo;
  std::uint64_t seed = 0;
  double image_sigma = 0.0;  // noiser: pixel noise std-dev in 8-bit levels
  double audio_sigma = 0.0;  // noiser: sample noise std-dev in [-1, 1] units
};

// Deterministic stand-ins with known leakage.
//   echo:       text = transcript of the first payload; payload of the
//               requested modality copied verbatim.
//   paraphrase: transcript with each token replaced at rate = temperature;
//               text only.
//   noiser:     requested payload plus seeded Gaussian noise, text
//               paraphrased at rate = temperature.
//   refusal:    always declines.
// Transcripts are looked up in `corpus` by payload content, the way a
// perfect transcriber would recover them. Audio output is PCM16-quantized.
class MockTarget final : public Target {
 public:
  MockTarget(MockTargetConfig config, std::shared_ptr<const Corpus> corpus);

  TargetResponse call(const GenerateRequest& request) override;
  std::string name() const override;
  const MockTargetConfig& config() const { return config_; }

 private:
  std::optional<std::string> transcript_of(const GenerateRequest& request) const;

  MockTargetConfig config_;
  std::shared_ptr<const Corpus> corpus_;
  std::unordered_map<std::uint64_t, std::string> transcripts_;
};

// Replaces each whitespace token of `text` with a fresh "zq<digits>" token
// with probability `rate`.
std::string paraphrase_tokens(std::string_view text, double rate, std::uint64_t seed);

// Judge stand-in: either a fixed reply, or "Yes"/"No" depending on whether
// the first two audio payloads are sample-identical.
class MockJudge final : public Target {
 public:
  explicit MockJudge(std::string reply) : reply_(std::move(reply)) {}
  static std::shared_ptr<MockJudge> audio_equality();

  TargetResponse call(const GenerateRequest& request) override;
  std::string name() const override { return compare_audio_ ? "mock-judge:audio" : "mock-judge:fixed"; }

 private:
  MockJudge() : compare_audio_(true) {}
  std::string reply_;
  bool compare_audio_ = false;
};

// -------------------------------------------------------------- wire codec

nlohmann::json encode_request(const GenerateRequest& request);
GenerateRequest decode_request(const nlohmann::json& doc);
nlohmann::json encode_response(const TargetResponse& response);
TargetResponse decode_response(const nlohmann::json& doc);

struct OwnedContent {
  Modality modality = Modality::text;
  std::string text;
  ImageBuffer image;
  AudioBuffer audio;

  ContentRef ref() const;
};

nlohmann::json encode_embed_request(const ContentRef& content);
OwnedContent decode_embed_request(const nlohmann::json& doc);
nlohmann::json encode_embed_response(const EmbeddingVector& vector);
EmbeddingVector decode_embed_response(const nlohmann::json& doc);

// ------------------------------------------------------------------- HTTP

inline constexpr const char* kApiKeyEnv = "LEAKPROBE_API_KEY";

// Value of the API key variable, or empty. Never logged.
std::string api_key_from_env(const char* variable = kApiKeyEnv);

struct HttpEndpoint {
  std::string url;  // scheme://host:port
  std::string api_key;
  std::chrono::milliseconds timeout{60000};
};

// Blocks callers so that at most `rate` requests per second start, with a
// burst of `burst`. rate <= 0 disables limiting.
class TokenBucket {
 public:
  explicit TokenBucket(double rate_per_second = 1.0, double burst = 1.0);
  void acquire();

 private:
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

// Counting semaphore bounding concurrent in-flight requests.
class ConcurrencyLimit {
 public:
  explicit ConcurrencyLimit(std::size_t limit);
  void acquire();
  void release();

 private:
  std::size_t available_;
  std::mutex mutex_;
  std::condition_variable cv_;
};

struct HttpClientOptions {
  double rate_limit = 1.0;  // requests per second
  std::size_t concurrency = 4;
};

class HttpTarget final : public Target {
 public:
  explicit HttpTarget(HttpEndpoint endpoint, HttpClientOptions options = {});

  TargetResponse call(const GenerateRequest& request) override;
  std::string name() const override { return endpoint_.url; }

 private:
  HttpEndpoint endpoint_;
  TokenBucket bucket_;
  ConcurrencyLimit limit_;
};

class HttpEmbedder final : public Embedder {
 public:
  // dim == 0 probes the backend once to learn its dimension.
  HttpEmbedder(HttpEndpoint endpoint, std::size_t dim = 0, RetryPolicy retry = {},
               HttpClientOptions options = {});

  EmbeddingVector embed(const ContentRef& content) const override;
  std::size_t dim() const override { return dim_; }
  std::string name() const override { return endpoint_.url; }

 private:
  EmbeddingVector embed_once(const ContentRef& content) const;

  HttpEndpoint endpoint_;
  RetryPolicy retry_;
  mutable TokenBucket bucket_;
  mutable ConcurrencyLimit limit_;
  std::size_t dim_;
};

// Bundled test server speaking the wire contract in front of in-process
// mocks: POST /generate and POST /embed.
class MockServer {
 public:
  MockServer(std::shared_ptr<Target> target, std::shared_ptr<const Embedder> embedder);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  // Binds (port 0 = any free port), serves on a background thread and
  // returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Serves on the calling thread until stop().
  void listen_blocking(const std::string& host, int port);
  void stop();
  std::string url() const;

  // Fault injection: every request answers 503 while set.
  void set_always_fail(bool fail);
  std::size_t request_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace leakprobe
