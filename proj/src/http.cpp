// HTTP side of the wire contract. The only translation unit that includes
// cpp-httplib.
#include <httplib.h>

#include <atomic>
#include <thread>

#include "leakprobe/gateway.hpp"

namespace leakprobe {

namespace {

class LimitGuard {
 public:
  explicit LimitGuard(ConcurrencyLimit& limit) : limit_(limit) { limit_.acquire(); }
  ~LimitGuard() { limit_.release(); }
  LimitGuard(const LimitGuard&) = delete;
  LimitGuard& operator=(const LimitGuard&) = delete;

 private:
  ConcurrencyLimit& limit_;
};

nlohmann::json post_json(const HttpEndpoint& endpoint, const char* path, const nlohmann::json& body) {
  httplib::Client client(endpoint.url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout).count();
  client.set_connection_timeout(static_cast<time_t>(std::max<long long>(1, secs)), 0);
  client.set_read_timeout(static_cast<time_t>(std::max<long long>(1, secs)), 0);
  client.set_write_timeout(static_cast<time_t>(std::max<long long>(1, secs)), 0);
  if (!endpoint.api_key.empty()) client.set_bearer_token_auth(endpoint.api_key);

  auto res = client.Post(path, body.dump(), "application/json");
  if (!res)
    throw Error(ErrorKind::transport, std::string(path) + ": " + httplib::to_string(res.error()), endpoint.url);
  if (res->status == 429 || res->status >= 500)
    throw Error(ErrorKind::transport, std::string(path) + ": HTTP " + std::to_string(res->status), endpoint.url);
  if (res->status != 200)
    throw Error(ErrorKind::contract, std::string(path) + ": HTTP " + std::to_string(res->status), endpoint.url);
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::contract, std::string(path) + ": body is not JSON: " + e.what(), endpoint.url);
  }
}

}  // namespace

HttpTarget::HttpTarget(HttpEndpoint endpoint, HttpClientOptions options)
    : endpoint_(std::move(endpoint)), bucket_(options.rate_limit), limit_(options.concurrency) {}

TargetResponse HttpTarget::call(const GenerateRequest& request) {
  const auto body = encode_request(request);
  bucket_.acquire();
  LimitGuard guard(limit_);
  return decode_response(post_json(endpoint_, "/generate", body));
}

HttpEmbedder::HttpEmbedder(HttpEndpoint endpoint, std::size_t dim, RetryPolicy retry, HttpClientOptions options)
    : endpoint_(std::move(endpoint)),
      retry_(std::move(retry)),
      bucket_(options.rate_limit),
      limit_(options.concurrency),
      dim_(dim) {
  if (dim_ == 0) {
    const auto probe = invoke_with_retry([&] { return embed_once(ContentRef::of_text("dimension probe")); }, retry_);
    dim_ = probe.value.dim();
  }
}

EmbeddingVector HttpEmbedder::embed_once(const ContentRef& content) const {
  const auto body = encode_embed_request(content);
  bucket_.acquire();
  LimitGuard guard(limit_);
  return decode_embed_response(post_json(endpoint_, "/embed", body));
}

EmbeddingVector HttpEmbedder::embed(const ContentRef& content) const {
  return invoke_with_retry([&] { return embed_once(content); }, retry_).value;
}

// ------------------------------------------------------------------ server

struct MockServer::Impl {
  std::shared_ptr<Target> target;
  std::shared_ptr<const Embedder> embedder;
  httplib::Server server;
  std::thread thread;
  std::string host;
  int port = 0;
  std::atomic<bool> always_fail{false};
  std::atomic<std::size_t> requests{0};

  void install() {
    auto reply_error = [](httplib::Response& res, int status, const std::string& msg) {
      res.status = status;
      res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
    };
    auto guarded = [this, reply_error](auto&& body_fn) {
      return [this, reply_error, body_fn](const httplib::Request& req, httplib::Response& res) {
        ++requests;
        if (always_fail) return reply_error(res, 503, "injected failure");
        try {
          res.set_content(body_fn(nlohmann::json::parse(req.body)).dump(), "application/json");
        } catch (const nlohmann::json::exception& e) {
          reply_error(res, 400, e.what());
        } catch (const Error& e) {
          reply_error(res, e.kind() == ErrorKind::contract ? 400 : 500, e.what());
        }
      };
    };
    server.Post("/generate", guarded([this](const nlohmann::json& doc) {
      if (!target) throw Error(ErrorKind::config, "server has no target");
      return encode_response(target->call(decode_request(doc)));
    }));
    server.Post("/embed", guarded([this](const nlohmann::json& doc) {
      if (!embedder) throw Error(ErrorKind::config, "server has no embedder");
      const auto content = decode_embed_request(doc);
      return encode_embed_response(embedder->embed(content.ref()));
    }));
  }
};

MockServer::MockServer(std::shared_ptr<Target> target, std::shared_ptr<const Embedder> embedder)
    : impl_(std::make_unique<Impl>()) {
  impl_->target = std::move(target);
  impl_->embedder = std::move(embedder);
  impl_->install();
}

MockServer::~MockServer() { stop(); }

int MockServer::start(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port < 0) throw Error(ErrorKind::io, "cannot bind server socket", host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void MockServer::listen_blocking(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port;
  if (!impl_->server.listen(host, port))
    throw Error(ErrorKind::io, "server failed to listen", host + ":" + std::to_string(port));
}

void MockServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockServer::url() const { return "http://" + impl_->host + ":" + std::to_string(impl_->port); }

void MockServer::set_always_fail(bool fail) { impl_->always_fail = fail; }

std::size_t MockServer::request_count() const { return impl_->requests; }

}  // namespace leakprobe
