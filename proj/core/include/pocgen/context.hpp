#pragma once

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

#include "pocgen/common.hpp"
#include "pocgen/corpus.hpp"
#include "pocgen/php_model.hpp"

namespace pocgen::context {

enum class Granularity { File, Function };

std::string to_string(Granularity g);
std::optional<Granularity> parse_granularity(std::string_view text);

/// Lines [line, end_line] of one file.
struct Location {
  std::string path;
  int line = 0;
  int end_line = 0;

  std::string display() const;  // "path:line" or "path:line-end"
  bool operator==(const Location&) const = default;
};

struct SourceFact {
  Location location;
  std::string superglobal;  // "_GET", "_FILES", ...
  std::string key;          // request parameter name, "*" when dynamic
  std::string code;
  int stmt = -1;  // statement index within the file
};

struct SinkFact {
  Location location;
  std::string callee;  // "echo", "mysqli_query", "->query", "`", or the semantic sink for CWE-352
  std::string code;
  int stmt = -1;
};

/// One hop of the source-to-sink path.
struct PathStep {
  Location location;
  std::string variable;  // "$term", "$_GET['search']", "return"
  std::string code;
  int stmt = -1;
};

/// A transformation the tainted value passes through.
struct DataFlowStep {
  std::string callee;
  std::string role;  // "sanitizer", "filter", "transform", "cast"
  Location site;
  /// Definition of a user function, when the callee is one.
  std::optional<Location> definition;
  /// Builtins invoked inside a user-function definition.
  std::vector<std::string> inner_calls;
  std::string code;
};

/// A branch condition that must hold (or, negated, fail) on the way to a statement.
struct Guard {
  Location location;
  /// Condition with the required polarity, e.g. "strlen($term) > 0" or "!(!isset($search_page))".
  std::string predicate;
  std::string effect;  // "enclosing" or "early-exit"
  std::string code;
  int stmt = -1;
};

/// Literal context the tainted value lands in at the sink.
struct SyntaxConstraint {
  std::string descriptor;  // see syntax::taxonomy()
  std::string description;
  std::string tag;
  std::string attribute;
  /// Constant text emitted by the sink before/after the tainted value.
  std::string prefix;
  std::string suffix;
  Location location;
};

/// Class-specific extracted item (CWE-352 / CWE-434 sub-task facts).
struct Fact {
  std::string kind;
  Location location;
  std::string value;
  std::string code;
};

struct CodeSlice {
  std::string path;
  int first_line = 0;
  int last_line = 0;
  std::string kind;  // "file", "function", "toplevel", "html-tag"
  std::string text;
  bool mandatory = false;
  double relevance = 0.0;
};

/// Slice as it appears in a prompt, with a location header.
std::string render_slice(const CodeSlice& slice);
std::size_t slice_tokens(const CodeSlice& slice);

struct VulnerabilityContext {
  std::string record_id;
  Cwe cwe = Cwe::CWE79;
  Granularity granularity = Granularity::Function;
  std::string base_url;
  SourceFact source;
  SinkFact sink;
  std::vector<std::string> vulnerable_variables;
  std::vector<PathStep> path;
  std::vector<DataFlowStep> data_flow_constraints;
  std::vector<Guard> control_flow_constraints;
  SyntaxConstraint syntax_constraints;
  std::vector<Fact> facts;
  std::vector<CodeSlice> code_slices;

  /// First fact of `kind`, nullptr when absent.
  const Fact* fact(std::string_view kind) const;
};

struct Hop {
  std::string from;
  std::string to;
  std::string kind;  // "include" or "redirect"
  Location location;
  std::string code;
};

/// One request parameter requirement on the navigation path.
struct PathConstraint {
  std::string superglobal;  // "_GET", "_POST", "_COOKIE", "_REQUEST", "_FILES", "_SERVER"
  std::string key;
  std::string op;  // "==", "!=", "non-empty", "isset"
  std::string value;
  Location location;
};

struct NavigationContext {
  Granularity granularity = Granularity::Function;
  /// Public entry first, sink file last.
  std::vector<std::string> file_navigation_chain;
  std::vector<Hop> file_navigation_code;
  std::vector<Guard> path_constraint_code;
  std::vector<PathConstraint> path_constraint_values;
  std::string entry_url;
  std::vector<CodeSlice> code_slices;
};

class ContextNotFound : public Error {
 public:
  ContextNotFound(std::string which, std::vector<std::string> frontier, const std::string& what);
  /// "vulnerability" or "navigation".
  const std::string& which() const { return which_; }
  /// Partial result: reached taint nodes, or unresolved include/redirect edges.
  const std::vector<std::string>& frontier() const { return frontier_; }

 private:
  std::string which_;
  std::vector<std::string> frontier_;
};

class BudgetExceeded : public Error {
 public:
  BudgetExceeded(std::size_t overshoot, const std::string& what);
  /// Tokens by which the mandatory slices alone exceed the budget.
  std::size_t overshoot() const { return overshoot_; }

 private:
  std::size_t overshoot_;
};

/// Parses every record file and links them. Files of `app_root` (when given)
/// join the model too; record files win on path clashes.
php::ProgramModel model_for_record(const corpus::CveRecord& record, const std::vector<SourceFile>& app_files = {});

VulnerabilityContext extract_vuln_context(const php::ProgramModel& model, const corpus::CveRecord& record,
                                          Granularity granularity);

NavigationContext extract_nav_context(const php::ProgramModel& model, const VulnerabilityContext& vuln,
                                      Granularity granularity);

/// Result of checking whether a file (or a statement in it) is reachable by a
/// direct request.
struct Reachability {
  bool reachable = false;
  std::vector<Guard> guards;
  std::vector<PathConstraint> constraints;
  std::string reason;
};

/// A file is public when a direct request can get past its top-level early exits.
bool is_public(const php::ProgramModel& model, const std::string& path);

/// Checks a navigation chain. `chain` runs from the requested file to the file
/// holding statement `target` (an index into the last unit). Throws
/// ContractViolation for an empty chain, a missing hop or a bad index.
Reachability check_chain(const php::ProgramModel& model, const std::vector<std::string>& chain, int target);

/// Drops non-mandatory slices, least relevant first (later slices first on
/// ties), until the rendered total fits `budget` tokens. Throws BudgetExceeded
/// when the mandatory slices alone do not fit.
std::vector<CodeSlice> trim_to_budget(const std::vector<CodeSlice>& slices, std::size_t budget);

nlohmann::json to_json(const VulnerabilityContext& ctx);
nlohmann::json to_json(const NavigationContext& ctx);
/// Both contexts in one document, the shape used by `pocgen extract-context`.
nlohmann::json context_document(const VulnerabilityContext& vuln, const NavigationContext& nav);

}  // namespace pocgen::context
