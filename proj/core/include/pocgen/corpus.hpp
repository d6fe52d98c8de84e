#pragma once

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

#include "pocgen/common.hpp"

namespace pocgen::corpus {

/// One benchmark entry: weakness class plus the public description, patch and
/// patch-touched files, and where the vulnerable deployment lives.
struct CveRecord {
  std::string id;
  Cwe cwe = Cwe::CWE79;
  double cvss = 0.0;
  std::string description;
  std::string patch;
  std::vector<SourceFile> files;
  std::string base_url;
  std::string entry_url;
  std::optional<std::string> ground_truth_poc;
  /// CWE-352 only: callee-name globs marking state-changing "semantic sinks".
  /// Empty means the whitelist defaults apply.
  std::vector<std::string> semantic_sinks;

  const SourceFile* file(const std::string& path) const;
};

/// Disclosure stage: description only, plus patch, plus patched files.
enum class Stage { S1, S2, S3 };

std::string to_string(Stage stage);
std::optional<Stage> parse_stage(std::string_view text);

struct ScenarioInput {
  std::string record_id;
  Cwe cwe = Cwe::CWE79;
  Stage stage = Stage::S1;
  std::string description;
  std::optional<std::string> patch;
  std::optional<std::vector<SourceFile>> files;
};

/// Projects a record onto the information available at `stage`.
ScenarioInput build_scenario(const CveRecord& record, Stage stage);

struct PatchHunk {
  std::string old_path;
  std::string new_path;
  int old_start = 0;
  int old_count = 0;
  int new_start = 0;
  int new_count = 0;
  /// The "@@ ... @@" line exactly as written.
  std::string header;
  /// Body lines including their ' ', '-', '+' or '\' prefix.
  std::vector<std::string> body;
  std::vector<std::string> removed;
  std::vector<std::string> added;

  /// Path of the file the hunk targets (new path unless the file was deleted).
  const std::string& path() const;
  /// Old-version line numbers of removed lines; for pure additions the line
  /// before which text was inserted.
  std::vector<int> touched_old_lines() const;
};

class PatchParseError : public Error {
 public:
  PatchParseError(int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

std::vector<PatchHunk> parse_patch(std::string_view diff);
/// "@@" header + body of every hunk, newline-joined.
std::string render_hunks(const std::vector<PatchHunk>& hunks);

/// Problem with one record file; never aborts the load.
struct RecordError {
  std::string file;
  std::string id;
  std::string field;
  std::string message;
};

class CorpusError : public Error {
 public:
  CorpusError(std::string id, std::string field, const std::string& what);
  const std::string& id() const { return id_; }
  const std::string& field() const { return field_; }

 private:
  std::string id_;
  std::string field_;
};

struct CorpusLoad {
  std::vector<CveRecord> records;  // lexicographic id order
  std::vector<RecordError> errors;
};

/// Loads every `*.json` record in `dir`. Throws Error if the directory is unreadable.
CorpusLoad load_corpus(const std::string& dir);

/// Parses and validates one record document; throws CorpusError naming the field.
CveRecord record_from_json(const nlohmann::json& doc);
nlohmann::json record_to_json(const CveRecord& record);
/// Throws CorpusError when an invariant does not hold.
void validate_record(const CveRecord& record);

/// True for "scheme://host[:port]" with no path, query or fragment.
bool is_origin(std::string_view url);
/// Relative, '/'-separated, no '..' segments.
bool is_safe_relative_path(std::string_view path);

}  // namespace pocgen::corpus
