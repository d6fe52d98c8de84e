#pragma once

#include "json.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pocgen/common.hpp"
#include "pocgen/corpus.hpp"
#include "pocgen/llm.hpp"
#include "pocgen/payload.hpp"
#include "pocgen/poc.hpp"
#include "pocgen/subtask.hpp"

namespace pocgen::bench {

enum class Mode { BaseS1, BaseS2, BaseS3, DirectFile, DirectFunction, Adaptive };

inline constexpr Mode kAllModes[] = {Mode::BaseS1,     Mode::BaseS2,         Mode::BaseS3,
                                     Mode::DirectFile, Mode::DirectFunction, Mode::Adaptive};

/// "base-s1" ... "direct-file", "direct-function", "adaptive".
std::string to_string(Mode m);
std::optional<Mode> parse_mode(std::string_view text);
/// Column label, e.g. "Base-S1".
std::string label(Mode m);

/// Where the "functional" judgment of a trial comes from.
enum class JudgeSource { Scripted, Validator, External };

std::string to_string(JudgeSource j);
std::optional<JudgeSource> parse_judge(std::string_view text);

/// Human judgments merged into a run: key "<record>/<mode>/<trial>".
using ExternalJudgments = std::map<std::string, bool>;

/// Reads {"judgments": [{"record_id", "mode", "trial", "functional"}]}.
ExternalJudgments load_judgments(const std::string& path);
std::string judgment_key(const std::string& record_id, Mode mode, int trial);

struct Config {
  llm::ModelConfig model;
  int k = 3;
  /// Records processed concurrently.
  int workers = 1;
  JudgeSource judge = JudgeSource::Scripted;
  ExternalJudgments external;
  /// When set, PoCs are serialized under <out_dir>/pocs/<mode>/.
  std::string out_dir;
  /// Grade sub-task answers against the extracted contexts (adaptive mode).
  bool failure_analysis = false;
  /// Harness execution for the adaptive payload loop.
  payload::RunOptions harness;
  /// Ask a second model for harnesses instead of the built-in template.
  bool llm_harness = false;
};

struct Trial {
  int index = 1;
  /// A non-empty PoC came out of the trial.
  bool generated = false;
  std::optional<poc::Format> format;
  /// PoC file relative to the output directory, when serialized.
  std::string poc_file;
  bool functional = false;
  /// "functional", "non-functional" or "unjudged".
  std::string judgment = "unjudged";
  std::string note;
  /// Payload-validation rounds used (adaptive, taint-style only).
  int refine_iterations = 0;
};

struct TrialOutcome {
  std::string record_id;
  Cwe cwe = Cwe::CWE79;
  Mode mode = Mode::BaseS1;
  std::vector<Trial> trials;
  /// True iff k trials ran and every one was judged functional.
  bool success = false;
  std::optional<subtask::FailureLedger> ledger;
  /// Record-level error; the record then counts as unsuccessful.
  std::string error;
};

struct RunResult {
  std::vector<TrialOutcome> outcomes;  // record id order
  std::vector<std::string> errored;
};

/// Runs one mode over `records` with k trials each. Record failures are
/// isolated into their outcome. Deterministic under replay transport when
/// prompts are keyed by digest or workers is 1.
RunResult run_experiment(const std::vector<corpus::CveRecord>& records, Mode mode, llm::Client& client,
                         const Config& cfg);

/// Text of the PoC inside a reply: the first fenced code block, else the
/// whole reply trimmed.
std::string extract_poc(std::string_view reply);

/// success = k trials, all functional.
bool all_functional(const std::vector<Trial>& trials, int k);

struct Cell {
  std::int64_t n_success = 0;
  std::int64_t n_vulns = 0;
  /// n_success / n_vulns; nullopt when no record was run.
  std::optional<Ratio> rate;
};

struct MetricsReport {
  std::vector<Mode> modes;
  std::vector<Cwe> cwes;
  /// Success per (cwe, mode) and the total row per mode.
  std::map<Cwe, std::map<Mode, Cell>> success;
  std::map<Mode, Cell> total;
  /// N_format per cwe; N_PoC per cwe counts generated PoCs only.
  std::map<Cwe, std::map<poc::Format, std::int64_t>> formats;
  std::map<Cwe, std::int64_t> n_poc;
  std::map<poc::Format, std::int64_t> total_formats;
  std::int64_t total_poc = 0;
  std::optional<subtask::FailureCounts> failure;
  std::optional<Ratio> ident_failure;
  std::optional<Ratio> reason_failure;
  std::vector<std::string> errored;
};

MetricsReport compute_metrics(const std::vector<TrialOutcome>& outcomes);

/// N_format / N_PoC for one cwe, nullopt when no PoC was generated.
std::optional<Ratio> distribution(const MetricsReport& r, Cwe cwe, poc::Format f);

nlohmann::json to_json(const TrialOutcome& o);
TrialOutcome outcome_from_json(const nlohmann::json& j);
nlohmann::json outcomes_to_json(const std::vector<TrialOutcome>& outcomes);
std::vector<TrialOutcome> outcomes_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const MetricsReport& r);
/// Fixed-width table: one row per cwe plus Total; success columns per mode,
/// then the format distribution.
std::string render_table(const MetricsReport& r);

/// Writes report.json and report.txt into `out_dir`; returns their paths.
std::vector<std::string> emit_report(const MetricsReport& r, const std::string& out_dir);

}  // namespace pocgen::bench
