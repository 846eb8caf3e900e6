#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabprep/core.hpp"

namespace tabprep {

using json = nlohmann::ordered_json;

/// Byte-length token estimate: ceil(utf8_bytes / 4). A deliberately simple
/// stand-in for provider tokenizers; exact counts come from provider usage
/// fields on live calls.
inline long long estimate_tokens(std::string_view text) {
  return static_cast<long long>((text.size() + 3) / 4);
}

struct ChatRequest {
  std::string model;
  std::vector<Message> messages;
  double temperature = 0.35;
  std::optional<long long> max_tokens;
};

inline long long request_tokens_estimate(const ChatRequest& req) {
  long long total = 0;
  for (const auto& m : req.messages) total += estimate_tokens(m.content);
  return total;
}

struct ChatResponse {
  std::string content;
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
  std::chrono::milliseconds latency{0};
  BackendKind backend = BackendKind::Mock;
};

/// Canonical wire form of a request: field order fixed, compact separators.
/// Transcript keys are the FNV-1a hash of this exact byte string, so the
/// rendering must never change.
inline json canonical_request_json(const ChatRequest& req) {
  json j;
  j["model"] = req.model;
  j["temperature"] = req.temperature;
  if (req.max_tokens) j["max_tokens"] = *req.max_tokens;
  j["messages"] = json::array();
  for (const auto& m : req.messages)
    j["messages"].push_back(json{{"role", role_name(m.role)}, {"content", m.content}});
  return j;
}

inline std::string request_hash(const ChatRequest& req) {
  return hex16(fnv1a64(canonical_request_json(req).dump()));
}

/// Prices in micro-currency units per 1000 tokens (e.g. $0.0015/1k = 1500).
/// One token then costs exactly `price` nano-units, so totals stay integral.
struct PriceTable {
  long long prompt_micro_per_1k = 0;
  long long completion_micro_per_1k = 0;
};

inline long long cost_nano(long long tokens, long long price_micro_per_1k) {
  return tokens * price_micro_per_1k;
}

class CostMeter {
 public:
  explicit CostMeter(PriceTable prices = {}) : prices_(prices) {}

  void add(long long prompt_tokens, long long completion_tokens) {
    prompt_tokens_ += prompt_tokens;
    completion_tokens_ += completion_tokens;
    ++responses_;
  }

  long long prompt_tokens() const { return prompt_tokens_.load(); }
  long long completion_tokens() const { return completion_tokens_.load(); }
  long long responses() const { return responses_.load(); }
  const PriceTable& prices() const { return prices_; }

  long long total_cost_nano() const {
    return cost_nano(prompt_tokens(), prices_.prompt_micro_per_1k) +
           cost_nano(completion_tokens(), prices_.completion_micro_per_1k);
  }

 private:
  PriceTable prices_;
  std::atomic<long long> prompt_tokens_{0};
  std::atomic<long long> completion_tokens_{0};
  std::atomic<long long> responses_{0};
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendKind kind() const = 0;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

/// Scripted backend for tests and offline runs. Token counts come from the
/// local estimator: prompt = sum of per-message estimates, completion = the
/// estimate of the scripted content.
class MockBackend final : public Backend {
 public:
  using Responder = std::function<std::string(const ChatRequest&)>;

  explicit MockBackend(Responder responder) : responder_(std::move(responder)) {
    if (!responder_) raise(Errc::ConfigError, "mock backend needs a responder");
  }

  BackendKind kind() const override { return BackendKind::Mock; }

  ChatResponse complete(const ChatRequest& req) override {
    ChatResponse resp;
    resp.backend = BackendKind::Mock;
    resp.content = responder_(req);
    resp.prompt_tokens = request_tokens_estimate(req);
    resp.completion_tokens = estimate_tokens(resp.content);
    return resp;
  }

 private:
  Responder responder_;
};

struct TranscriptEntry {
  std::string hash;
  json request;
  std::string content;
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
  std::string backend;
};

/// Append-only JSONL transcript writer; one line per exchange, flushed
/// immediately so an interrupted run keeps everything already paid for.
class TranscriptWriter {
 public:
  explicit TranscriptWriter(const std::filesystem::path& path)
      : out_(path, std::ios::binary | std::ios::app) {
    if (!out_) raise(Errc::IoError, "cannot open transcript for writing: " + path.string());
  }

  void record(const ChatRequest& req, const ChatResponse& resp, long long sent_ms,
              long long recv_ms) {
    json line;
    line["hash"] = request_hash(req);
    line["request"] = canonical_request_json(req);
    line["response"] = json{{"content", resp.content},
                            {"prompt_tokens", resp.prompt_tokens},
                            {"completion_tokens", resp.completion_tokens},
                            {"backend", backend_kind_name(resp.backend)}};
    line["sent_ms"] = sent_ms;
    line["recv_ms"] = recv_ms;
    std::lock_guard<std::mutex> lock(mu_);
    out_ << line.dump() << '\n';
    out_.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

/// In-memory index of a recorded transcript, keyed by request hash. A hash
/// recorded twice keeps the latest entry (re-runs append).
class TranscriptStore {
 public:
  TranscriptStore() = default;

  static TranscriptStore load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::IoError, "cannot open transcript: " + path.string());
    TranscriptStore store;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      if (trim_view(line).empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object())
        raise(Errc::CorruptTranscript,
              path.string() + ":" + std::to_string(lineno) + ": not a JSON object");
      try {
        TranscriptEntry e;
        e.hash = j.at("hash").get<std::string>();
        e.request = j.at("request");
        const json& r = j.at("response");
        e.content = r.at("content").get<std::string>();
        e.prompt_tokens = r.at("prompt_tokens").get<long long>();
        e.completion_tokens = r.at("completion_tokens").get<long long>();
        e.backend = r.value("backend", "mock");
        store.entries_[e.hash] = std::move(e);
      } catch (const json::exception& ex) {
        raise(Errc::CorruptTranscript,
              path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
      }
    }
    return store;
  }

  const TranscriptEntry* lookup(const std::string& hash) const {
    auto it = entries_.find(hash);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, TranscriptEntry> entries_;
};

/// Replays recorded exchanges by request hash. Token counts are the recorded
/// ones, so replayed reports reproduce live-run usage exactly.
class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(TranscriptStore store) : store_(std::move(store)) {}

  BackendKind kind() const override { return BackendKind::Replay; }

  ChatResponse complete(const ChatRequest& req) override {
    const TranscriptEntry* e = store_.lookup(request_hash(req));
    if (!e)
      raise(Errc::ReplayMiss, "no transcript entry for request hash " + request_hash(req));
    ChatResponse resp;
    resp.backend = BackendKind::Replay;
    resp.content = e->content;
    resp.prompt_tokens = e->prompt_tokens;
    resp.completion_tokens = e->completion_tokens;
    return resp;
  }

 private:
  TranscriptStore store_;
};

}  // namespace tabprep

// The HTTP backend is the only part of the gateway that needs cpp-httplib;
// keep the include here so pure consumers stay light.
#include <httplib.h>

namespace tabprep {

/// OpenAI-compatible chat-completions client. Each call uses a fresh
/// connection; the shared state is limited to atomic counters, so one
/// instance is safe across worker threads.
class HttpBackend final : public Backend {
 public:
  HttpBackend(std::string base_url, std::string api_key,
              std::chrono::seconds timeout = std::chrono::seconds(60))
      : base_url_(std::move(base_url)), api_key_(std::move(api_key)), timeout_(timeout) {
    if (base_url_.empty()) raise(Errc::ConfigError, "http backend needs a base URL");
    if (api_key_.empty())
      raise(Errc::AuthError, "http backend needs an API key (set the configured env var)");
  }

  BackendKind kind() const override { return BackendKind::Http; }

  long long network_calls() const { return network_calls_.load(); }

  ChatResponse complete(const ChatRequest& req) override {
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_.count(), 0);
    client.set_read_timeout(timeout_.count(), 0);
    httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};

    ++network_calls_;
    auto begin = std::chrono::steady_clock::now();
    httplib::Result result = client.Post("/v1/chat/completions", headers,
                                         canonical_request_json(req).dump(), "application/json");
    auto elapsed =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - begin);

    if (!result)
      raise(Errc::Timeout, "no response from " + base_url_ + " (connection or read timeout)",
            /*retriable=*/true);
    if (result->status == 401 || result->status == 403)
      raise(Errc::AuthError, "authentication rejected (HTTP " + std::to_string(result->status) + ")");
    if (result->status == 429)
      raise(Errc::RateLimited, "provider rate limit (HTTP 429)", /*retriable=*/true);
    if (result->status >= 500)
      raise(Errc::ProtocolError, "server error (HTTP " + std::to_string(result->status) + ")",
            /*retriable=*/true);
    if (result->status != 200)
      raise(Errc::ProtocolError, "unexpected HTTP status " + std::to_string(result->status) +
                                     ": " + result->body);

    json body = json::parse(result->body, nullptr, false);
    if (body.is_discarded())
      raise(Errc::ProtocolError, "response body is not valid JSON");
    ChatResponse resp;
    resp.backend = BackendKind::Http;
    resp.latency = elapsed;
    try {
      resp.content = body.at("choices").at(0).at("message").at("content").get<std::string>();
      resp.prompt_tokens = body.at("usage").at("prompt_tokens").get<long long>();
      resp.completion_tokens = body.at("usage").at("completion_tokens").get<long long>();
    } catch (const json::exception& ex) {
      raise(Errc::ProtocolError, std::string("response missing required fields: ") + ex.what());
    }
    return resp;
  }

 private:
  std::string base_url_;
  std::string api_key_;
  std::chrono::seconds timeout_;
  std::atomic<long long> network_calls_{0};
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

using MonotonicClock = std::function<std::chrono::milliseconds()>;

inline MonotonicClock steady_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now().time_since_epoch());
  };
}

/// Token-bucket limiter over requests/minute and tokens/minute. Buckets
/// start full; a request larger than a bucket's capacity is clamped to it so
/// oversized prompts wait for a full bucket instead of forever.
class RateLimiter {
 public:
  RateLimiter(long long requests_per_minute, long long tokens_per_minute,
              MonotonicClock clock = steady_clock_ms(), Sleeper sleeper = real_sleeper())
      : rpm_(requests_per_minute),
        tpm_(tokens_per_minute),
        clock_(std::move(clock)),
        sleeper_(std::move(sleeper)) {
    if (rpm_ <= 0 || tpm_ <= 0)
      raise(Errc::ConfigError, "rate limits must be positive when the limiter is enabled");
    last_refill_ = clock_();
    request_budget_ = static_cast<double>(rpm_);
    token_budget_ = static_cast<double>(tpm_);
  }

  void acquire(long long tokens) {
    std::lock_guard<std::mutex> lock(mu_);
    double need_tokens = static_cast<double>(std::min(tokens, tpm_));
    for (;;) {
      refill();
      if (request_budget_ >= 1.0 && token_budget_ >= need_tokens) {
        request_budget_ -= 1.0;
        token_budget_ -= need_tokens;
        return;
      }
      double deficit_requests = std::max(0.0, 1.0 - request_budget_);
      double deficit_tokens = std::max(0.0, need_tokens - token_budget_);
      double wait_ms = std::max(deficit_requests * 60000.0 / static_cast<double>(rpm_),
                                deficit_tokens * 60000.0 / static_cast<double>(tpm_));
      sleeper_(std::chrono::milliseconds(static_cast<long long>(wait_ms) + 1));
    }
  }

 private:
  void refill() {
    auto now = clock_();
    double elapsed_ms = static_cast<double>((now - last_refill_).count());
    if (elapsed_ms <= 0) return;
    last_refill_ = now;
    request_budget_ = std::min(static_cast<double>(rpm_),
                               request_budget_ + elapsed_ms * static_cast<double>(rpm_) / 60000.0);
    token_budget_ = std::min(static_cast<double>(tpm_),
                             token_budget_ + elapsed_ms * static_cast<double>(tpm_) / 60000.0);
  }

  long long rpm_;
  long long tpm_;
  MonotonicClock clock_;
  Sleeper sleeper_;
  std::mutex mu_;
  std::chrono::milliseconds last_refill_{0};
  double request_budget_ = 0.0;
  double token_budget_ = 0.0;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_delay{250};
  std::chrono::milliseconds max_delay{8000};
  std::uint64_t jitter_seed = 0;
};

/// Front door for all completions: applies rate limiting, retries retriable
/// failures with jittered exponential backoff, meters every completed
/// response, and mirrors exchanges into the transcript when recording.
class ChatClient {
 public:
  ChatClient(std::shared_ptr<Backend> backend, CostMeter& meter, RetryPolicy retry = {},
             RateLimiter* limiter = nullptr, TranscriptWriter* recorder = nullptr,
             Sleeper sleeper = real_sleeper())
      : backend_(std::move(backend)),
        meter_(meter),
        retry_(retry),
        limiter_(limiter),
        recorder_(recorder),
        sleeper_(std::move(sleeper)),
        jitter_rng_(retry.jitter_seed) {
    if (!backend_) raise(Errc::ConfigError, "chat client needs a backend");
    if (retry_.max_attempts < 1) raise(Errc::ConfigError, "retry needs at least one attempt");
  }

  ChatResponse send(const ChatRequest& req) {
    if (limiter_) limiter_->acquire(request_tokens_estimate(req));
    for (int attempt = 1;; ++attempt) {
      long long sent_ms = wall_ms();
      try {
        ChatResponse resp = backend_->complete(req);
        meter_.add(resp.prompt_tokens, resp.completion_tokens);
        if (recorder_) recorder_->record(req, resp, sent_ms, wall_ms());
        return resp;
      } catch (const Error& err) {
        if (!err.retriable() || attempt >= retry_.max_attempts) throw;
        sleeper_(backoff_delay(attempt));
      }
    }
  }

  Backend& backend() { return *backend_; }

 private:
  static long long wall_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }

  std::chrono::milliseconds backoff_delay(int attempt) {
    double base = static_cast<double>(retry_.initial_delay.count());
    for (int i = 1; i < attempt; ++i) base *= 2.0;
    base = std::min(base, static_cast<double>(retry_.max_delay.count()));
    double jitter;
    {
      std::lock_guard<std::mutex> lock(mu_);
      jitter = 0.5 + 0.5 * static_cast<double>(jitter_rng_() >> 11) * 0x1.0p-53;
    }
    return std::chrono::milliseconds(static_cast<long long>(base * jitter));
  }

  std::shared_ptr<Backend> backend_;
  CostMeter& meter_;
  RetryPolicy retry_;
  RateLimiter* limiter_;
  TranscriptWriter* recorder_;
  Sleeper sleeper_;
  std::mutex mu_;
  std::mt19937_64 jitter_rng_;
};

}  // namespace tabprep
