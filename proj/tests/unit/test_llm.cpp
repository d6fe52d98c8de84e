#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "doctest.h"

#include <atomic>
#include <thread>

#include <openssl/sha.h>

#include "pocgen/context.hpp"
#include "pocgen/llm.hpp"
#include "support.hpp"

using namespace pocgen;
using namespace pocgen::llm;
using nlohmann::json;

namespace {

prompt::Prompt small_prompt(const std::string& user) {
  return prompt::make_prompt("system text", user, prompt::ExpectedOutput::FreePoC);
}

std::string sha256_hex(const std::string& s) {
  unsigned char md[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(s.data()), s.size(), md);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : md) {
    out += hex[c >> 4];
    out += hex[c & 15];
  }
  return out;
}

/// Chat-completions stand-in on a loopback port.
struct MockServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> calls{0};
  std::atomic<int> fail_first{0};
  std::string last_auth;
  json last_body;

  MockServer() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      int n = ++calls;
      last_auth = req.get_header_value("Authorization");
      last_body = json::parse(req.body);
      if (n <= fail_first) {
        res.status = 503;
        return;
      }
      json reply = {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", "reply " + std::to_string(n)}}},
                                               {"finish_reason", "stop"}}})},
                    {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}};
      res.set_content(reply.dump(), "application/json");
    });
    server.Post("/reject", [](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockServer() {
    server.stop();
    thread.join();
  }
  ModelConfig config() const {
    ModelConfig c = model_config("gpt-4o");
    c.endpoint = "http://127.0.0.1:" + std::to_string(port);
    c.backoff_ms = 1;
    c.timeout_seconds = 5;
    c.api_key_env = "POCGEN_TEST_API_KEY";
    return c;
  }
};

}  // namespace

TEST_CASE("prompt digest is sha-256 of system, NUL, user") {
  auto p = small_prompt("user text");
  CHECK(prompt_digest(p) == sha256_hex(std::string("system text") + '\0' + "user text"));
  CHECK(prompt_digest(p) != prompt_digest(small_prompt("user text ")));
}

TEST_CASE("documented budgets") {
  CHECK(default_budget("gpt-4o") == 128000);
  CHECK(default_budget("deepseek-r1") == 64000);
  CHECK(default_budget("something-else") == 64000);
  CHECK(model_config("deepseek-r1").context_budget == 64000);
  ModelConfig bad;
  bad.temperature = -0.1;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("digest replay serves each prompt its own queue in order") {
  auto a = small_prompt("a");
  auto b = small_prompt("b");
  ReplayClient client({{prompt_digest(a), "a1", true, ""},
                       {prompt_digest(b), "b1", std::nullopt, ""},
                       {prompt_digest(a), "a2", false, ""}});
  ModelConfig cfg;
  CHECK(client.complete(b, cfg).text == "b1");
  auto c1 = client.complete(a, cfg);
  CHECK(c1.text == "a1");
  CHECK(c1.functional == true);
  CHECK(c1.digest == prompt_digest(a));
  CHECK(client.complete(a, cfg).text == "a2");
  CHECK(client.remaining() == 0);
  CHECK_THROWS_AS(client.complete(a, cfg), ReplayMiss);
  CHECK_THROWS_AS(client.complete(small_prompt("c"), cfg), ReplayMiss);
}

TEST_CASE("ordinal replay ignores the prompt") {
  ReplayClient client({{"", "first", std::nullopt, ""}, {"", "second", std::nullopt, ""}}, ReplayClient::Mode::Ordinal);
  ModelConfig cfg;
  CHECK(client.complete(small_prompt("x"), cfg).text == "first");
  CHECK(client.complete(small_prompt("y"), cfg).text == "second");
  CHECK_THROWS_AS(client.complete(small_prompt("z"), cfg), ReplayMiss);
}

TEST_CASE("replay scripts round-trip through json") {
  std::vector<ReplayEntry> entries = {{"abc", "r1", true, "n"}, {"abc", "r2", std::nullopt, ""}};
  auto doc = replay_to_json(entries, ReplayClient::Mode::Digest);
  auto client = ReplayClient::from_json(doc);
  CHECK(client.remaining() == 2);
  CHECK(doc["mode"] == "digest");
  CHECK_FALSE(doc["entries"][1].contains("functional"));
}

TEST_CASE("over-budget prompts are rejected before any transport work") {
  ReplayClient client({});
  ModelConfig cfg;
  cfg.context_budget = 10;
  auto big = small_prompt(std::string(200, 'x'));
  CHECK_THROWS_AS(client.complete(big, cfg), context::BudgetExceeded);
  MockServer mock;
  LiveClient live;
  auto lcfg = mock.config();
  lcfg.context_budget = 10;
  CHECK_THROWS_AS(live.complete(big, lcfg), context::BudgetExceeded);
  CHECK(mock.calls == 0);
}

TEST_CASE("run_trials returns k completions or fails as a whole") {
  auto p = small_prompt("t");
  std::vector<ReplayEntry> three(3, ReplayEntry{prompt_digest(p), "r", std::nullopt, ""});
  ReplayClient ok(three);
  CHECK(run_trials(ok, p, ModelConfig{}, 3).size() == 3);
  CHECK_THROWS_AS(run_trials(ok, p, ModelConfig{}, 0), ContractViolation);

  MockServer mock;
  mock.fail_first = 100;
  LiveClient live;
  auto cfg = mock.config();
  cfg.max_retries = 1;
  try {
    run_trials(live, p, cfg, 3);
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(std::string(e.what()).find("trial 1 of 3") != std::string::npos);
  }
}

TEST_CASE("live transport speaks the chat-completions format") {
  MockServer mock;
  ::setenv("POCGEN_TEST_API_KEY", "sk-test-value", 1);
  testing::TempDir dir;
  const std::string log = (dir.path() / "requests.jsonl").string();
  LiveClient live(log);
  auto cfg = mock.config();
  auto c = live.complete(small_prompt("hello"), cfg);
  CHECK(c.text == "reply 1");
  CHECK(c.transport == Transport::Live);
  CHECK(c.prompt_tokens == 11);
  CHECK(mock.last_auth == "Bearer sk-test-value");
  CHECK(mock.last_body["model"] == "gpt-4o");
  CHECK(mock.last_body["messages"][0]["role"] == "system");
  CHECK(mock.last_body["messages"][1]["content"] == "hello");
  auto logged = fsutil::read_file(log);
  CHECK(logged.find("sk-test-value") == std::string::npos);
  CHECK(logged.find(prompt_digest(small_prompt("hello"))) != std::string::npos);
  ::unsetenv("POCGEN_TEST_API_KEY");
}

TEST_CASE("live transport retries server errors and gives up on rejections") {
  MockServer mock;
  mock.fail_first = 2;
  LiveClient live;
  auto cfg = mock.config();
  cfg.max_retries = 2;
  CHECK(live.complete(small_prompt("r"), cfg).text == "reply 3");
  cfg.path = "/reject";
  CHECK_THROWS_AS(live.complete(small_prompt("r"), cfg), TransportError);
}
