#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pocgen/common.hpp"
#include "pocgen/context.hpp"
#include "pocgen/corpus.hpp"
#include "pocgen/feedback.hpp"
#include "pocgen/subtask.hpp"

namespace pocgen::prompt {

/// What the reply is expected to contain.
enum class ExpectedOutput { FreePoC, SubTaskJson, StepJson };

std::string to_string(ExpectedOutput e);

struct Prompt {
  std::string system;
  std::string user;
  ExpectedOutput expected = ExpectedOutput::FreePoC;
  /// estimate_tokens(system) + estimate_tokens(user).
  std::size_t tokens = 0;
};

Prompt make_prompt(std::string system, std::string user, ExpectedOutput expected);

/// Free-form PoC request carrying exactly the information of the scenario's stage.
Prompt base_prompt(const corpus::ScenarioInput& scenario, const std::string& base_url);

/// Asks every sub-task of `plan` at once, one JSON object keyed by sub-task id,
/// without exemplars.
Prompt subtask_prompt(const subtask::PhasePlan& plan, const corpus::ScenarioInput& scenario, const std::string& base_url);

/// Direct PoC synthesis from the record plus extracted contexts.
/// Throws ContractViolation when the contexts differ in granularity.
Prompt direct_prompt(const corpus::CveRecord& record, const context::VulnerabilityContext& vuln,
                     const context::NavigationContext& nav, const std::string& entry_url);

/// One few-shot example.
struct Exemplar {
  std::string input;
  std::string answer;
  /// Short tag naming the public source the example was adapted from.
  std::string citation;
};

/// Few-shot examples per (plan key, sub-task id), loaded from the bundled
/// icl_bank.json. Plan keys are "taint", "CWE-352" and "CWE-434".
class IclBank {
 public:
  /// The bundled bank.
  static const IclBank& bundled();
  static IclBank from_json(const nlohmann::json& doc);

  /// Exemplars for a sub-task of `cwe`'s plan; empty when there are none.
  const std::vector<Exemplar>& find(Cwe cwe, const std::string& subtask_id) const;
  /// Every (plan key, sub-task id) the bank covers.
  std::vector<std::pair<std::string, std::string>> keys() const;

 private:
  std::map<std::pair<std::string, std::string>, std::vector<Exemplar>> entries_;
};

/// Plan key used by the bank: "taint" for CWE-78/79/89, else the CWE id.
std::string plan_key(Cwe cwe);

/// Record information and (optionally) extracted contexts available to the
/// step-by-step generator.
struct CotInputs {
  corpus::ScenarioInput scenario;
  std::string base_url;
  const context::VulnerabilityContext* vuln = nullptr;
  const context::NavigationContext* nav = nullptr;
};

/// Prompt for CoT step `step` of `plan`. Earlier answers become established
/// facts; exemplars come from `icl`; `fb` (when present) is appended verbatim.
/// Throws ContractViolation when `step` is out of range.
Prompt cot_prompt(const subtask::PhasePlan& plan, std::size_t step, const std::vector<subtask::SubTaskResult>& prior,
                  const IclBank& icl, const std::optional<feedback::ValidationFeedback>& fb, const CotInputs& inputs);

/// Human-readable rendering of extracted contexts, as embedded in prompts.
std::string render_vuln_context(const context::VulnerabilityContext& vuln);
std::string render_nav_context(const context::NavigationContext& nav);

}  // namespace pocgen::prompt
