#include <atomic>
#include <catch2/catch_amalgamated.hpp>
#include <chrono>
#include <memory>
#include <thread>
#include <vector>

#include "support/temp_dir.hpp"
#include "tabprep/gateway.hpp"

using namespace tabprep;
using tabprep::testing::TempDir;

namespace {

template <typename F>
Error capture_error(F&& f) {
  try {
    std::forward<F>(f)();
  } catch (const Error& e) {
    return e;
  }
  throw std::runtime_error("expected a tabprep::Error");
}

ChatRequest simple_request(std::string content = "hello there, engine") {
  ChatRequest req;
  req.model = "m";
  req.temperature = 0.5;
  req.messages = {{Role::System, "sys"}, {Role::User, std::move(content)}};
  return req;
}

// Deterministic time source shared by a limiter and its sleeper: sleeping
// is modeled as advancing the clock.
struct FakeTime {
  std::chrono::milliseconds now{0};
  std::vector<std::chrono::milliseconds> sleeps;

  MonotonicClock clock() {
    return [this] { return now; };
  }
  Sleeper sleeper() {
    return [this](std::chrono::milliseconds d) {
      sleeps.push_back(d);
      now += d;
    };
  }
};

}  // namespace

TEST_CASE("token estimates round bytes up to the next fourth") {
  CHECK(estimate_tokens("") == 0);
  CHECK(estimate_tokens("abc") == 1);
  CHECK(estimate_tokens("abcd") == 1);
  CHECK(estimate_tokens("abcde") == 2);
  ChatRequest req = simple_request("abcdefgh");  // 3 + 8 bytes
  CHECK(request_tokens_estimate(req) == 1 + 2);
}

TEST_CASE("canonical request JSON has a pinned field order") {
  ChatRequest req;
  req.model = "m";
  req.temperature = 0.5;
  req.messages = {{Role::System, "s"}};
  CHECK(canonical_request_json(req).dump() ==
        "{\"model\":\"m\",\"temperature\":0.5,"
        "\"messages\":[{\"role\":\"system\",\"content\":\"s\"}]}");

  req.max_tokens = 9;
  CHECK(canonical_request_json(req).dump() ==
        "{\"model\":\"m\",\"temperature\":0.5,\"max_tokens\":9,"
        "\"messages\":[{\"role\":\"system\",\"content\":\"s\"}]}");

  CHECK(request_hash(req) == hex16(fnv1a64(canonical_request_json(req).dump())));
  ChatRequest other = req;
  other.messages[0].content = "S";
  CHECK(request_hash(other) != request_hash(req));
}

TEST_CASE("costs are exact integers in nano currency") {
  CHECK(cost_nano(0, 1500) == 0);
  CHECK(cost_nano(1, 1500) == 1500);
  CHECK(cost_nano(1000, 1500) == 1500000);  // 1k tokens at 1500 micro per 1k

  CostMeter meter(PriceTable{1500, 2000});
  meter.add(10, 5);
  meter.add(7, 0);
  CHECK(meter.prompt_tokens() == 17);
  CHECK(meter.completion_tokens() == 5);
  CHECK(meter.responses() == 2);
  CHECK(meter.total_cost_nano() == 17 * 1500 + 5 * 2000);
}

TEST_CASE("mock backend answers with estimator token counts") {
  MockBackend backend([](const ChatRequest&) { return std::string("12345678"); });
  ChatRequest req = simple_request("abcd");
  ChatResponse resp = backend.complete(req);
  CHECK(resp.backend == BackendKind::Mock);
  CHECK(resp.content == "12345678");
  CHECK(resp.prompt_tokens == request_tokens_estimate(req));
  CHECK(resp.completion_tokens == 2);
  CHECK_THROWS_AS(MockBackend(nullptr), Error);
}

TEST_CASE("transcripts round-trip through writer, store, and replay") {
  TempDir tmp;
  auto path = tmp.path() / "transcript.jsonl";

  ChatRequest a = simple_request("first");
  ChatRequest b = simple_request("second");
  {
    TranscriptWriter writer(path);
    ChatResponse ra;
    ra.content = "Answer 1:\nbecause\nyes";
    ra.prompt_tokens = 11;
    ra.completion_tokens = 3;
    ra.backend = BackendKind::Http;
    writer.record(a, ra, 1000, 1200);
    ChatResponse rb;
    rb.content = "Answer 1:\nso\nno";
    rb.prompt_tokens = 12;
    rb.completion_tokens = 4;
    writer.record(b, rb, 1300, 1400);
  }

  TranscriptStore store = TranscriptStore::load(path);
  CHECK(store.size() == 2);
  const TranscriptEntry* ea = store.lookup(request_hash(a));
  REQUIRE(ea != nullptr);
  CHECK(ea->content == "Answer 1:\nbecause\nyes");
  CHECK(ea->prompt_tokens == 11);
  CHECK(ea->backend == "http");
  CHECK(store.lookup("deadbeefdeadbeef") == nullptr);

  ReplayBackend replay(std::move(store));
  ChatResponse replayed = replay.complete(a);
  CHECK(replayed.backend == BackendKind::Replay);
  CHECK(replayed.content == "Answer 1:\nbecause\nyes");
  CHECK(replayed.prompt_tokens == 11);   // recorded, not re-estimated
  CHECK(replayed.completion_tokens == 3);

  ChatRequest miss = simple_request("never sent");
  Error err = capture_error([&] { replay.complete(miss); });
  CHECK(err.code() == Errc::ReplayMiss);
  CHECK_FALSE(err.retriable());
}

TEST_CASE("re-recording a request keeps the latest response") {
  TempDir tmp;
  auto path = tmp.path() / "t.jsonl";
  ChatRequest req = simple_request();
  {
    TranscriptWriter writer(path);
    ChatResponse r1;
    r1.content = "old";
    writer.record(req, r1, 0, 1);
    ChatResponse r2;
    r2.content = "new";
    writer.record(req, r2, 2, 3);
  }
  TranscriptStore store = TranscriptStore::load(path);
  CHECK(store.size() == 1);
  CHECK(store.lookup(request_hash(req))->content == "new");
}

TEST_CASE("corrupt transcript lines are reported with their location") {
  TempDir tmp;
  auto path = tmp.write("bad.jsonl",
                        "{\"hash\":\"h\",\"request\":{},\"response\":{\"content\":\"c\","
                        "\"prompt_tokens\":1,\"completion_tokens\":1}}\n"
                        "not json at all\n");
  Error err = capture_error([&] { TranscriptStore::load(path); });
  CHECK(err.code() == Errc::CorruptTranscript);
  CHECK(std::string(err.what()).find(":2") != std::string::npos);

  auto missing_field = tmp.write("mf.jsonl", "{\"hash\":\"h\",\"request\":{}}\n");
  CHECK(capture_error([&] { TranscriptStore::load(missing_field); }).code() ==
        Errc::CorruptTranscript);
  CHECK(capture_error([&] { TranscriptStore::load(tmp.path() / "absent.jsonl"); }).code() ==
        Errc::IoError);

  // Blank lines are tolerated; they carry no exchange.
  auto blanks = tmp.write("blank.jsonl", "\n  \n");
  CHECK(TranscriptStore::load(blanks).size() == 0);
}

TEST_CASE("rate limiter spends request and token budgets") {
  FakeTime time;
  RateLimiter limiter(2, 1000, time.clock(), time.sleeper());
  limiter.acquire(10);
  limiter.acquire(10);
  CHECK(time.sleeps.empty());  // both buckets start full

  limiter.acquire(10);  // request bucket empty: must wait ~30s for refill
  REQUIRE(time.sleeps.size() == 1);
  CHECK(time.sleeps[0].count() >= 30000);
  CHECK(time.sleeps[0].count() <= 30010);
}

TEST_CASE("rate limiter waits on the token bucket too") {
  FakeTime time;
  RateLimiter limiter(1000, 100, time.clock(), time.sleeper());
  limiter.acquire(40);
  limiter.acquire(40);
  CHECK(time.sleeps.empty());
  limiter.acquire(40);  // only 20 tokens left: deficit 20 at 100/min
  REQUIRE(time.sleeps.size() == 1);
  CHECK(time.sleeps[0].count() >= 12000);
  CHECK(time.sleeps[0].count() <= 12010);
}

TEST_CASE("oversized requests are clamped to the token capacity") {
  FakeTime time;
  RateLimiter limiter(1000, 100, time.clock(), time.sleeper());
  limiter.acquire(100000);  // clamped to 100: the full bucket covers it
  CHECK(time.sleeps.empty());
  limiter.acquire(100000);  // bucket empty: one full refill, not forever
  CHECK(time.sleeps.size() >= 1);
  CHECK_THROWS_AS(RateLimiter(0, 100), Error);
  CHECK_THROWS_AS(RateLimiter(10, 0), Error);
}

TEST_CASE("chat client retries retriable failures with jittered backoff") {
  struct Flaky final : Backend {
    int failures_left;
    int calls = 0;
    explicit Flaky(int f) : failures_left(f) {}
    BackendKind kind() const override { return BackendKind::Mock; }
    ChatResponse complete(const ChatRequest&) override {
      ++calls;
      if (failures_left-- > 0) raise(Errc::RateLimited, "busy", /*retriable=*/true);
      ChatResponse r;
      r.content = "ok";
      r.prompt_tokens = 2;
      r.completion_tokens = 1;
      return r;
    }
  };

  auto flaky = std::make_shared<Flaky>(2);
  CostMeter meter;
  RetryPolicy retry;
  retry.max_attempts = 4;
  retry.jitter_seed = 1;
  std::vector<std::chrono::milliseconds> sleeps;
  ChatClient client(flaky, meter, retry, nullptr, nullptr,
                    [&](std::chrono::milliseconds d) { sleeps.push_back(d); });

  ChatResponse resp = client.send(simple_request());
  CHECK(resp.content == "ok");
  CHECK(flaky->calls == 3);
  REQUIRE(sleeps.size() == 2);
  CHECK(sleeps[0].count() >= 125);   // 250ms base, jitter in [0.5, 1]
  CHECK(sleeps[0].count() <= 250);
  CHECK(sleeps[1].count() >= 250);   // doubled base
  CHECK(sleeps[1].count() <= 500);
  CHECK(meter.responses() == 1);     // only the success is metered
  CHECK(meter.prompt_tokens() == 2);
}

TEST_CASE("chat client gives up after max attempts and on fatal errors") {
  struct AlwaysBusy final : Backend {
    int calls = 0;
    BackendKind kind() const override { return BackendKind::Mock; }
    ChatResponse complete(const ChatRequest&) override {
      ++calls;
      raise(Errc::RateLimited, "busy", true);
    }
  };
  auto busy = std::make_shared<AlwaysBusy>();
  CostMeter meter;
  RetryPolicy retry;
  retry.max_attempts = 3;
  std::vector<std::chrono::milliseconds> sleeps;
  ChatClient client(busy, meter, retry, nullptr, nullptr,
                    [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  CHECK(capture_error([&] { client.send(simple_request()); }).code() == Errc::RateLimited);
  CHECK(busy->calls == 3);
  CHECK(sleeps.size() == 2);

  struct Fatal final : Backend {
    int calls = 0;
    BackendKind kind() const override { return BackendKind::Mock; }
    ChatResponse complete(const ChatRequest&) override {
      ++calls;
      raise(Errc::AuthError, "bad key");
    }
  };
  auto fatal = std::make_shared<Fatal>();
  ChatClient client2(fatal, meter, retry, nullptr, nullptr,
                     [&](std::chrono::milliseconds) { FAIL("must not sleep on fatal errors"); });
  CHECK(capture_error([&] { client2.send(simple_request()); }).code() == Errc::AuthError);
  CHECK(fatal->calls == 1);
}

TEST_CASE("chat client mirrors successful exchanges into the transcript") {
  TempDir tmp;
  auto path = tmp.path() / "t.jsonl";
  auto backend =
      std::make_shared<MockBackend>([](const ChatRequest&) { return std::string("yes"); });
  CostMeter meter;
  {
    TranscriptWriter recorder(path);
    ChatClient client(backend, meter, {}, nullptr, &recorder);
    client.send(simple_request());
  }
  TranscriptStore store = TranscriptStore::load(path);
  CHECK(store.size() == 1);
  CHECK(store.lookup(request_hash(simple_request()))->content == "yes");
}

TEST_CASE("http backend speaks the chat-completions protocol") {
  httplib::Server server;
  std::atomic<int> mode{0};
  std::string seen_auth;
  std::string seen_body;
  std::mutex seen_mu;

  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard<std::mutex> lock(seen_mu);
      seen_auth = req.get_header_value("Authorization");
      seen_body = req.body;
    }
    switch (mode.load()) {
      case 0:
        res.set_content(
            "{\"choices\":[{\"message\":{\"content\":\"Answer 1:\\nbecause\\nyes\"}}],"
            "\"usage\":{\"prompt_tokens\":42,\"completion_tokens\":7}}",
            "application/json");
        break;
      case 1: res.status = 429; break;
      case 2: res.status = 500; break;
      case 3: res.status = 401; break;
      case 4: res.status = 404; break;
      case 5: res.set_content("definitely not json", "text/plain"); break;
      case 6: res.set_content("{\"choices\":[]}", "application/json"); break;
    }
  });

  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBackend backend("http://127.0.0.1:" + std::to_string(port), "sekrit",
                      std::chrono::seconds(5));
  ChatRequest req = simple_request();

  ChatResponse ok = backend.complete(req);
  CHECK(ok.content == "Answer 1:\nbecause\nyes");
  CHECK(ok.prompt_tokens == 42);      // provider usage, not the estimator
  CHECK(ok.completion_tokens == 7);
  CHECK(ok.backend == BackendKind::Http);
  {
    std::lock_guard<std::mutex> lock(seen_mu);
    CHECK(seen_auth == "Bearer sekrit");
    CHECK(seen_body == canonical_request_json(req).dump());
  }

  mode = 1;
  Error limited = capture_error([&] { backend.complete(req); });
  CHECK(limited.code() == Errc::RateLimited);
  CHECK(limited.retriable());

  mode = 2;
  Error server_err = capture_error([&] { backend.complete(req); });
  CHECK(server_err.code() == Errc::ProtocolError);
  CHECK(server_err.retriable());

  mode = 3;
  Error auth = capture_error([&] { backend.complete(req); });
  CHECK(auth.code() == Errc::AuthError);
  CHECK_FALSE(auth.retriable());

  mode = 4;
  Error not_found = capture_error([&] { backend.complete(req); });
  CHECK(not_found.code() == Errc::ProtocolError);
  CHECK_FALSE(not_found.retriable());

  mode = 5;
  CHECK(capture_error([&] { backend.complete(req); }).code() == Errc::ProtocolError);
  mode = 6;
  CHECK(capture_error([&] { backend.complete(req); }).code() == Errc::ProtocolError);

  CHECK(backend.network_calls() == 7);

  // End to end: two 429s then success, driven through the retry loop.
  mode = 1;
  auto shared_backend = std::make_shared<HttpBackend>(
      "http://127.0.0.1:" + std::to_string(port), "sekrit", std::chrono::seconds(5));
  CostMeter meter;
  RetryPolicy retry;
  retry.max_attempts = 5;
  int failures = 2;
  ChatClient client(shared_backend, meter, retry, nullptr, nullptr,
                    [&](std::chrono::milliseconds) {
                      if (--failures == 0) mode = 0;
                    });
  ChatResponse final_resp = client.send(req);
  CHECK(final_resp.prompt_tokens == 42);
  CHECK(shared_backend->network_calls() == 3);

  server.stop();
  server_thread.join();

  CHECK_THROWS_AS(HttpBackend("", "key"), Error);
  CHECK(capture_error([] { HttpBackend backend2("http://x", ""); }).code() == Errc::AuthError);
}

TEST_CASE("unreachable hosts surface as retriable timeouts") {
  // A port that nothing listens on: connection is refused immediately.
  HttpBackend backend("http://127.0.0.1:1", "key", std::chrono::seconds(1));
  Error err = capture_error([&] { backend.complete(simple_request()); });
  CHECK(err.code() == Errc::Timeout);
  CHECK(err.retriable());
}
