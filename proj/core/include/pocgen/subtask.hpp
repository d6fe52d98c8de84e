#pragma once

#include "json.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pocgen/common.hpp"

namespace pocgen::subtask {

/// What answering a sub-task demonstrates: identifying a program fact,
/// reasoning out a value, or assembling the request.
enum class Category { IdentifyVul, ReasonVul, IdentifyNav, ReasonNav, Assembly };

std::string to_string(Category c);

/// Expected JSON type of an answer: "text" (string or number), "list" (array), "map" (object).
enum class AnswerType { Text, List, Map };

struct SubTask {
  std::string id;
  std::string name;
  std::string definition;
  AnswerType type = AnswerType::Text;
  Category category = Category::IdentifyVul;
};

struct Phase {
  std::string name;
  std::vector<SubTask> subtasks;
};

/// A chain-of-thought step: one or more interdependent sub-tasks asked together.
struct CotStep {
  std::string title;
  std::vector<std::string> subtasks;
};

struct PhasePlan {
  Cwe cwe = Cwe::CWE79;
  std::vector<Phase> phases;
  std::vector<CotStep> cot_steps;

  /// All sub-tasks in phase order.
  std::vector<SubTask> subtasks() const;
  const SubTask* find(std::string_view id) const;
  /// Index of the CoT step that asks `id`; throws ContractViolation when absent.
  std::size_t step_of(std::string_view id) const;
};

/// The fixed decomposition for a weakness class. Throws ContractViolation for
/// an unsupported class.
PhasePlan decompose(Cwe cwe);

enum class Status { Answered, Unanswerable, Malformed };

std::string to_string(Status s);

struct SubTaskResult {
  std::string id;
  std::string raw;
  /// Present iff status is Answered.
  std::optional<nlohmann::json> value;
  Status status = Status::Malformed;
};

/// First JSON object in an LLM reply, tolerating code fences and prose
/// around it. nullopt when none parses.
std::optional<nlohmann::json> extract_json_object(std::string_view reply);

/// One result per requested sub-task. A reply without a JSON object marks
/// everything Malformed; a missing key or a value of the wrong type is
/// Malformed; null, "", "unknown", "n/a" and "none" are Unanswerable.
std::vector<SubTaskResult> parse_answers(const std::vector<SubTask>& asked, std::string_view reply);

/// Answer value rendered as plain text (strings unquoted, the rest as compact JSON).
std::string answer_text(const SubTaskResult& r);

/// Per-record outcome of the failure analysis.
struct FailureLedger {
  std::string record_id;
  bool complete_vul = false;
  bool complete_nav = false;
  bool ident_vul = false;
  bool ident_nav = false;
  bool gen_payload = false;
  bool gen_pathvar = false;

  /// Throws ContractViolation unless ident ⇒ complete and gen ⇒ ident.
  void validate() const;
};

inline constexpr const char* kC1Vulnerability = "C1-vulnerability";
inline constexpr const char* kC1Navigation = "C1-navigation";
inline constexpr const char* kC2Identification = "C2-identification";
inline constexpr const char* kC2Reasoning = "C2-reasoning";

/// Failure causes; tags may co-occur.
std::set<std::string> classify_failure(const FailureLedger& ledger);

/// Aggregate counts over ledgers.
struct FailureCounts {
  std::int64_t complete_vul = 0;
  std::int64_t ident_vul = 0;
  std::int64_t complete_nav = 0;
  std::int64_t ident_nav = 0;
  std::int64_t gen_payload = 0;
  std::int64_t gen_pathvar = 0;
};

FailureCounts count(const std::vector<FailureLedger>& ledgers);

/// 1 − ½(ident_vul/complete_vul + ident_nav/complete_nav); nullopt (Undefined)
/// when a denominator is zero.
std::optional<Ratio> ident_failure_rate(const FailureCounts& c);
/// 1 − ½(gen_payload/ident_vul + gen_pathvar/ident_nav); nullopt when a
/// denominator is zero.
std::optional<Ratio> reason_failure_rate(const FailureCounts& c);

std::optional<Ratio> ident_failure_rate(const std::vector<FailureLedger>& ledgers);
std::optional<Ratio> reason_failure_rate(const std::vector<FailureLedger>& ledgers);

/// Tab-separated export: header row, then id, six booleans and the tags.
std::string ledger_tsv(const std::vector<FailureLedger>& ledgers);

}  // namespace pocgen::subtask
