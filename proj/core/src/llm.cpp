#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "pocgen/llm.hpp"

#include <openssl/evp.h>

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

#include "pocgen/context.hpp"

namespace pocgen::llm {

using nlohmann::json;

void ModelConfig::validate() const {
  if (temperature < 0) throw ContractViolation("temperature must be >= 0");
  if (context_budget == 0) throw ContractViolation("context budget must be > 0");
  if (timeout_seconds <= 0) throw ContractViolation("timeout must be > 0");
  if (max_retries < 0) throw ContractViolation("max_retries must be >= 0");
}

std::size_t default_budget(std::string_view model) {
  std::string m = text::to_lower(model);
  if (m == "gpt-4o" || text::starts_with(m, "gpt-4o-")) return 128000;
  return 64000;
}

ModelConfig model_config(const std::string& model) {
  ModelConfig c;
  c.model = model;
  c.context_budget = default_budget(model);
  if (text::starts_with(text::to_lower(model), "deepseek")) {
    c.endpoint = "https://api.deepseek.com";
    c.api_key_env = "DEEPSEEK_API_KEY";
  }
  return c;
}

std::string to_string(Transport t) { return t == Transport::Live ? "live" : "replay"; }

ReplayMiss::ReplayMiss(std::string digest)
    : Error("no scripted reply for prompt digest " + digest), digest_(std::move(digest)) {}

std::string prompt_digest(const prompt::Prompt& p) {
  std::string buf = p.system;
  buf.push_back('\0');
  buf += p.user;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_Digest(buf.data(), buf.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

Completion Client::complete(const prompt::Prompt& p, const ModelConfig& cfg) {
  cfg.validate();
  std::size_t tokens = estimate_tokens(p.system) + estimate_tokens(p.user);
  if (tokens > cfg.context_budget)
    throw context::BudgetExceeded(tokens - cfg.context_budget,
                                  "prompt of " + std::to_string(tokens) + " estimated tokens exceeds the " +
                                      std::to_string(cfg.context_budget) + "-token budget of " + cfg.model);
  return send(p, cfg, prompt_digest(p));
}

// ---------------------------------------------------------------------------
// replay

ReplayClient::ReplayClient(std::vector<ReplayEntry> entries, Mode mode) : mode_(mode) {
  for (auto& e : entries) {
    if (mode_ == Mode::Digest) {
      if (e.digest.empty()) throw ContractViolation("digest-mode replay entry without a digest");
      by_digest_[e.digest].push_back(std::move(e));
    } else {
      ordered_.push_back(std::move(e));
    }
  }
}

ReplayClient::ReplayClient(ReplayClient&& other) noexcept
    : mode_(other.mode_), by_digest_(std::move(other.by_digest_)), ordered_(std::move(other.ordered_)) {}

ReplayClient ReplayClient::from_json(const json& doc) {
  Mode mode = doc.value("mode", std::string("digest")) == "ordinal" ? Mode::Ordinal : Mode::Digest;
  std::vector<ReplayEntry> entries;
  for (const auto& e : doc.at("entries")) {
    ReplayEntry r;
    r.digest = e.value("digest", std::string());
    r.response = e.at("response").get<std::string>();
    if (e.contains("functional") && !e.at("functional").is_null()) r.functional = e.at("functional").get<bool>();
    r.note = e.value("note", std::string());
    entries.push_back(std::move(r));
  }
  return ReplayClient(std::move(entries), mode);
}

ReplayClient ReplayClient::from_file(const std::string& path) {
  json doc = json::parse(fsutil::read_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error("replay script " + path + " is not a JSON object");
  return from_json(doc);
}

std::size_t ReplayClient::remaining() const {
  std::lock_guard lock(mu_);
  std::size_t n = ordered_.size();
  for (const auto& [k, q] : by_digest_) n += q.size();
  return n;
}

Completion ReplayClient::send(const prompt::Prompt& p, const ModelConfig&, const std::string& digest) {
  ReplayEntry e;
  {
    std::lock_guard lock(mu_);
    std::deque<ReplayEntry>* q = &ordered_;
    if (mode_ == Mode::Digest) {
      auto it = by_digest_.find(digest);
      if (it == by_digest_.end()) throw ReplayMiss(digest);
      q = &it->second;
    }
    if (q->empty()) throw ReplayMiss(digest);
    e = std::move(q->front());
    q->pop_front();
  }
  Completion c;
  c.text = e.response;
  c.finish_reason = "stop";
  c.prompt_tokens = static_cast<std::int64_t>(estimate_tokens(p.system) + estimate_tokens(p.user));
  c.completion_tokens = static_cast<std::int64_t>(estimate_tokens(c.text));
  c.transport = Transport::Replay;
  c.digest = digest;
  c.functional = e.functional;
  return c;
}

json replay_to_json(const std::vector<ReplayEntry>& entries, ReplayClient::Mode mode) {
  json list = json::array();
  for (const auto& e : entries) {
    json j = {{"response", e.response}};
    if (!e.digest.empty()) j["digest"] = e.digest;
    if (e.functional) j["functional"] = *e.functional;
    if (!e.note.empty()) j["note"] = e.note;
    list.push_back(std::move(j));
  }
  return {{"mode", mode == ReplayClient::Mode::Ordinal ? "ordinal" : "digest"}, {"entries", list}};
}

// ---------------------------------------------------------------------------
// live

json request_body(const prompt::Prompt& p, const ModelConfig& cfg) {
  return {{"model", cfg.model},
          {"temperature", cfg.temperature},
          {"messages", json::array({{{"role", "system"}, {"content", p.system}}, {{"role", "user"}, {"content", p.user}}})}};
}

LiveClient::LiveClient(std::string log_path) : log_path_(std::move(log_path)) {}

void LiveClient::pace(const ModelConfig& cfg) {
  if (cfg.min_interval_ms <= 0) return;
  std::lock_guard lock(pace_mu_);
  auto next = last_send_ + std::chrono::milliseconds(cfg.min_interval_ms);
  auto now = std::chrono::steady_clock::now();
  if (now < next) std::this_thread::sleep_for(next - now);
  last_send_ = std::chrono::steady_clock::now();
}

void LiveClient::log(const json& line) {
  if (log_path_.empty()) return;
  std::lock_guard lock(log_mu_);
  std::ofstream out(log_path_, std::ios::app);
  out << line.dump() << "\n";
}

namespace {

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

Completion LiveClient::send(const prompt::Prompt& p, const ModelConfig& cfg, const std::string& digest) {
  httplib::Client http(cfg.endpoint);
  http.set_connection_timeout(cfg.timeout_seconds, 0);
  http.set_read_timeout(cfg.timeout_seconds, 0);
  http.set_write_timeout(cfg.timeout_seconds, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  const std::string body = request_body(p, cfg).dump();

  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg.backoff_ms << (attempt - 1)));
    pace(cfg);
    auto start = std::chrono::steady_clock::now();
    auto res = http.Post(cfg.path, headers, body, "application/json");
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    json entry = {{"time", utc_now()}, {"model", cfg.model}, {"digest", digest}, {"attempt", attempt + 1}, {"latency_ms", ms}};
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      entry["outcome"] = last_error;
      log(entry);
      continue;
    }
    entry["status"] = res->status;
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      entry["outcome"] = "retryable";
      log(entry);
      continue;
    }
    if (res->status != 200) {
      entry["outcome"] = "rejected";
      log(entry);
      throw TransportError("HTTP " + std::to_string(res->status) + " from " + cfg.endpoint + cfg.path);
    }
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty())
      throw TransportError("malformed chat-completions response from " + cfg.endpoint);
    const json& choice = doc["choices"][0];
    Completion c;
    c.text = choice.value("message", json::object()).value("content", std::string());
    c.finish_reason = choice.value("finish_reason", std::string());
    if (doc.contains("usage")) {
      c.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
      c.completion_tokens = doc["usage"].value("completion_tokens", std::int64_t{0});
    }
    c.latency_ms = ms;
    c.transport = Transport::Live;
    c.digest = digest;
    entry["outcome"] = "ok";
    entry["usage"] = {{"prompt", c.prompt_tokens}, {"completion", c.completion_tokens}};
    log(entry);
    return c;
  }
  throw TransportError(last_error + " after " + std::to_string(cfg.max_retries + 1) + " attempts");
}

std::vector<Completion> run_trials(Client& client, const prompt::Prompt& p, const ModelConfig& cfg, int k) {
  if (k < 1) throw ContractViolation("trial count must be >= 1");
  std::vector<Completion> out;
  for (int i = 0; i < k; ++i) {
    try {
      out.push_back(client.complete(p, cfg));
    } catch (const TransportError& e) {
      throw TransportError("trial " + std::to_string(i + 1) + " of " + std::to_string(k) + " failed (" +
                           std::to_string(out.size()) + " completed results discarded): " + e.what());
    }
  }
  return out;
}

}  // namespace pocgen::llm
