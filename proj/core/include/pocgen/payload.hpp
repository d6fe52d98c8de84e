#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pocgen/common.hpp"
#include "pocgen/context.hpp"
#include "pocgen/corpus.hpp"
#include "pocgen/feedback.hpp"
#include "pocgen/llm.hpp"

namespace pocgen::payload {

/// A harness ready to run against one payload.
struct HarnessSpec {
  std::string source;
  std::string payload;
  /// Markers the harness is expected to print.
  std::vector<std::string> probes;
  /// Directory the harness runs in; empty until run_harness picks one.
  std::string workspace;
  /// "template" or "llm".
  std::string origin;
};

class HarnessSynthesisError : public Error {
 public:
  using Error::Error;
};

/// Problems found by lint(); empty when the harness may run.
std::vector<std::string> lint(const std::string& source);

/// PHP single-quoted literal for `s`.
std::string php_quote(std::string_view s);

/// Builds a harness from the record's own code: the user functions the path
/// calls, the path statements with the source read replaced by the payload,
/// the control-flow guards as early exits printing kControlMarker, then the
/// data and syntax probes. Throws ContractViolation unless `vuln` is a
/// function-level taint-style context, HarnessSynthesisError when the result
/// fails lint.
HarnessSpec template_harness(const corpus::CveRecord& record, const context::VulnerabilityContext& vuln,
                             const std::string& payload);

/// Prompt asking a second model for a harness.
prompt::Prompt harness_prompt(const context::VulnerabilityContext& vuln, const std::string& payload,
                              const std::vector<std::string>& lint_errors = {});

/// Source of harnesses for refine_loop.
class HarnessProvider {
 public:
  virtual ~HarnessProvider() = default;
  virtual HarnessSpec build(const context::VulnerabilityContext& vuln, const std::string& payload) = 0;
};

class TemplateHarness : public HarnessProvider {
 public:
  explicit TemplateHarness(corpus::CveRecord record) : record_(std::move(record)) {}
  HarnessSpec build(const context::VulnerabilityContext& vuln, const std::string& payload) override;

 private:
  corpus::CveRecord record_;
};

/// Harnesses written by a model. A reply failing lint is re-requested once
/// with the lint findings; a second failure throws HarnessSynthesisError.
class LlmHarness : public HarnessProvider {
 public:
  LlmHarness(llm::Client& client, llm::ModelConfig cfg) : client_(client), cfg_(std::move(cfg)) {}
  HarnessSpec build(const context::VulnerabilityContext& vuln, const std::string& payload) override;

 private:
  llm::Client& client_;
  llm::ModelConfig cfg_;
};

/// PHP source inside the first ```php (or bare ```) fence of a reply, or the
/// whole reply when it starts with "<?php".
std::optional<std::string> extract_php(std::string_view reply);

struct RunOptions {
  /// argv template; "{script}" and "{workspace}" are substituted.
  std::vector<std::string> command = {"phpsub", "--root", "{workspace}", "{script}"};
  /// Parent of per-run workspaces; the system temp directory when empty.
  std::string workspace_root;
  int timeout_ms = 10000;
  bool keep_workspace = false;
};

struct ProbeOutputs {
  bool control = false;
  std::optional<std::string> data;
  std::optional<std::string> syntax;
  std::string stdout_text;
  std::string stderr_text;
  int exit_status = 0;
  bool timed_out = false;
  std::int64_t wall_ms = 0;
};

/// Pulls the probe markers out of harness output.
ProbeOutputs parse_probes(const std::string& stdout_text);

/// Writes the harness as harness.php into a fresh workspace and runs it with
/// an empty environment, no network where the kernel allows it, and a
/// wall-clock limit. The workspace is removed afterwards unless kept.
ProbeOutputs run_harness(HarnessSpec& spec, const RunOptions& opts);

/// Valid when the control marker is absent and the syntax probe carries the
/// data probe value in executable form for the sink's syntax context; Invalid
/// when the marker is present or the form is not executable; otherwise
/// Inconclusive.
feedback::Verdict judge(const context::VulnerabilityContext& vuln, const ProbeOutputs& out);

/// Usability line plus probe block for one run.
feedback::ValidationFeedback make_feedback(const context::VulnerabilityContext& vuln, const ProbeOutputs& out,
                                           feedback::Verdict verdict, int iteration);

/// Generator side of the loop: produces the next payload from feedback.
class PayloadSession {
 public:
  virtual ~PayloadSession() = default;
  virtual std::string regenerate(const feedback::ValidationFeedback& fb) = 0;
};

/// Re-asks the attack-payload step of the step-by-step plan with feedback
/// appended, reading the "attack_payload" answer of the JSON reply.
class LlmPayloadSession : public PayloadSession {
 public:
  LlmPayloadSession(llm::Client& client, llm::ModelConfig cfg, prompt::CotInputs inputs,
                    std::vector<subtask::SubTaskResult> prior);
  std::string regenerate(const feedback::ValidationFeedback& fb) override;

 private:
  llm::Client& client_;
  llm::ModelConfig cfg_;
  prompt::CotInputs inputs_;
  std::vector<subtask::SubTaskResult> prior_;
  subtask::PhasePlan plan_;
};

inline constexpr int kMaxIterations = 3;

struct RefineResult {
  std::string payload;
  feedback::Verdict verdict = feedback::Verdict::Inconclusive;
  int iterations = 0;
  std::vector<feedback::ValidationFeedback> history;
  /// Set when the loop stopped on a harness or generator error.
  std::string error;
};

/// Validate, feed back, regenerate; at most kMaxIterations validations,
/// stopping at the first Valid. Throws ContractViolation for an empty payload.
RefineResult refine_loop(PayloadSession& session, const context::VulnerabilityContext& vuln,
                         const std::string& initial_payload, HarnessProvider& harness, const RunOptions& opts);

}  // namespace pocgen::payload
