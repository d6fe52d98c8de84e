#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pocgen/common.hpp"
#include "pocgen/prompt.hpp"

namespace pocgen::llm {

struct ModelConfig {
  std::string model = "gpt-4o";
  double temperature = 0.0;
  /// Prompt token budget; prompts estimated above it are rejected before sending.
  std::size_t context_budget = 128000;
  int timeout_seconds = 120;
  /// Origin of the chat-completions endpoint, e.g. "https://api.openai.com".
  std::string endpoint = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  /// Name of the environment variable holding the API key.
  std::string api_key_env = "OPENAI_API_KEY";
  int max_retries = 2;
  int backoff_ms = 500;
  /// Minimum spacing between live requests, 0 for none.
  int min_interval_ms = 0;

  /// Throws ContractViolation for a negative temperature or zero budget.
  void validate() const;
};

/// Documented budget for a model name: gpt-4o 128000, deepseek-r1 64000, anything else 64000.
std::size_t default_budget(std::string_view model);
/// Config for a known model name with its documented budget.
ModelConfig model_config(const std::string& model);

enum class Transport { Live, Replay };

std::string to_string(Transport t);

struct Completion {
  std::string text;
  std::string finish_reason;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t latency_ms = 0;
  Transport transport = Transport::Replay;
  std::string digest;
  /// Replay scripts may carry a scripted judgment of the PoC in the response.
  std::optional<bool> functional;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class ReplayMiss : public Error {
 public:
  explicit ReplayMiss(std::string digest);
  const std::string& digest() const { return digest_; }

 private:
  std::string digest_;
};

/// Stable key of a prompt: hex SHA-256 of system, a NUL byte, and user.
std::string prompt_digest(const prompt::Prompt& p);

/// Chat-completion access. complete() rejects over-budget prompts with
/// context::BudgetExceeded before any transport work. Safe for concurrent use.
class Client {
 public:
  virtual ~Client() = default;
  Completion complete(const prompt::Prompt& p, const ModelConfig& cfg);

 protected:
  virtual Completion send(const prompt::Prompt& p, const ModelConfig& cfg, const std::string& digest) = 0;
};

/// One scripted reply.
struct ReplayEntry {
  std::string digest;  // empty in ordinal scripts
  std::string response;
  std::optional<bool> functional;
  std::string note;
};

/// Scripted transport. In digest mode every prompt consumes the next entry
/// recorded for its digest; in ordinal mode entries are consumed in order.
class ReplayClient : public Client {
 public:
  enum class Mode { Digest, Ordinal };

  ReplayClient(std::vector<ReplayEntry> entries, Mode mode = Mode::Digest);
  /// Moves the unconsumed entries; the source must not be in use.
  ReplayClient(ReplayClient&& other) noexcept;
  /// Reads a script file: {"mode": "digest"|"ordinal", "entries": [{digest, response, functional?, note?}]}.
  static ReplayClient from_file(const std::string& path);
  static ReplayClient from_json(const nlohmann::json& doc);

  /// Entries not consumed yet.
  std::size_t remaining() const;

 protected:
  Completion send(const prompt::Prompt& p, const ModelConfig& cfg, const std::string& digest) override;

 private:
  Mode mode_;
  std::map<std::string, std::deque<ReplayEntry>> by_digest_;
  std::deque<ReplayEntry> ordered_;
  mutable std::mutex mu_;
};

nlohmann::json replay_to_json(const std::vector<ReplayEntry>& entries, ReplayClient::Mode mode);

/// HTTP transport speaking the chat-completions wire format.
class LiveClient : public Client {
 public:
  /// `log_path` (optional) receives one JSON line per request: time, model,
  /// digest, latency, usage, outcome. Credentials are never written.
  explicit LiveClient(std::string log_path = "");

 protected:
  Completion send(const prompt::Prompt& p, const ModelConfig& cfg, const std::string& digest) override;

 private:
  void pace(const ModelConfig& cfg);
  void log(const nlohmann::json& line);

  std::string log_path_;
  std::mutex log_mu_;
  std::mutex pace_mu_;
  std::chrono::steady_clock::time_point last_send_{};
};

/// Request body for the chat-completions endpoint.
nlohmann::json request_body(const prompt::Prompt& p, const ModelConfig& cfg);

/// k independent completions of the same prompt, in order. A TransportError
/// in any trial discards the set and is rethrown naming the trial.
std::vector<Completion> run_trials(Client& client, const prompt::Prompt& p, const ModelConfig& cfg, int k = 3);

}  // namespace pocgen::llm
