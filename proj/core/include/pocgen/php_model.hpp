#pragma once

#include "json.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pocgen/common.hpp"
#include "pocgen/php_ast.hpp"

namespace pocgen::php {

/// Sink / sanitizer whitelist, loaded from a data file.
struct SinkConfig {
  struct Class {
    std::set<std::string> sinks;         // lowercase function names (echo/print included)
    std::set<std::string> method_sinks;  // lowercase method names
    std::set<std::string> sanitizers;
    std::vector<std::string> semantic_sinks;  // globs, CWE-352
    std::set<std::string> protections;        // CWE-352
    /// Argument positions that must carry the taint, per lowercase callee.
    /// Callees not listed accept taint in any argument.
    std::map<std::string, std::vector<int>> sink_args;
  };
  std::set<std::string> superglobals;
  std::set<std::string> request_sources;
  std::set<std::string> request_server_keys;
  std::map<Cwe, Class> classes;
  std::set<std::string> filters;
  std::map<std::string, std::vector<int>> by_ref_outputs;

  static SinkConfig from_json(const nlohmann::json& doc);
  const Class& of(Cwe cwe) const;
  bool is_superglobal(std::string_view name) const { return superglobals.count(std::string(name)) > 0; }
  /// True for request-controlled superglobals ($_GET ... $_FILES, and the
  /// client-controlled $_SERVER keys).
  bool is_request_input(std::string_view name, std::string_view key) const;
};

/// The bundled whitelist (core/data/sinks.json).
const SinkConfig& default_sink_config();

enum class StmtKind { Assign, Echo, Call, Include, Redirect, If, Loop, Return, SqlExec, SysExec, FileMove, Exit, Html, Other };

std::string to_string(StmtKind kind);

struct VarRef {
  /// Variable name without '$'. Superglobals keep their leading underscore.
  std::string name;
  /// First subscript for superglobals ("*" when dynamic or absent); empty otherwise.
  std::optional<std::string> superglobal_key;
  /// Second literal subscript, e.g. "name" in $_FILES['f']['name'].
  std::optional<std::string> subkey;
  /// Write that only touches an element or property.
  bool partial = false;

  std::string display() const;
  bool operator==(const VarRef& o) const {
    return name == o.name && superglobal_key == o.superglobal_key && subkey == o.subkey && partial == o.partial;
  }
};

/// One sink-whitelist match inside a statement.
struct SinkHit {
  Cwe cwe = Cwe::CWE79;
  std::string callee;  // "echo", "mysqli_query", "->query", "`"
  /// Variables read by the taint-relevant arguments.
  std::vector<VarRef> reads;
  const Expr* call = nullptr;  // nullptr for echo statements
};

struct Stmt {
  int index = 0;
  StmtKind kind = StmtKind::Other;
  int line = 0;
  int end_line = 0;
  Span span;
  std::vector<VarRef> reads;
  std::vector<VarRef> writes;
  std::optional<std::string> callee;
  /// Every function/method name invoked by the statement's own expressions.
  std::vector<std::string> calls;
  /// Literal fragments around interpolated/concatenated values of the main expression.
  std::vector<std::string> string_parts;
  /// Include/redirect target: folded literal when constant, else the expression text.
  std::optional<std::string> target;
  bool target_is_literal = false;
  std::vector<SinkHit> sinks;
  /// Enclosing compound statement (If/Loop/function declaration), -1 at top level.
  int parent = -1;
  /// Which body of `parent` holds the statement.
  int branch = -1;
  /// Enclosing function name, empty for top-level code.
  std::string function;
  /// exit/die/return as the statement itself.
  bool terminates = false;
  const Node* node = nullptr;
};

struct FunctionDef {
  std::string name;
  std::string path;
  int decl = 0;        // index of the declaration statement
  int body_begin = 0;  // [body_begin, body_end) statement indices
  int body_end = 0;
  int line = 0;
  int end_line = 0;
  std::vector<std::string> params;
  const Node* node = nullptr;
};

struct HtmlTag {
  std::string name;
  std::size_t open_begin = 0, open_end = 0;
  std::size_t close_begin = std::string::npos, close_end = std::string::npos;
  int line = 0, end_line = 0;
  bool closed() const { return close_end != std::string::npos; }
};

struct HtmlSegment {
  int first_line = 0;
  int last_line = 0;
  Span span;
  /// Tags whose extent overlaps the segment.
  std::vector<HtmlTag> tags;
};

struct SourceUnit {
  std::string path;
  std::shared_ptr<const ParsedFile> ast;
  std::vector<Stmt> statements;
  std::map<std::string, FunctionDef> functions;  // lowercase name
  std::vector<HtmlSegment> html_segments;
  /// HTML elements of the whole file (PHP blocks masked out).
  std::vector<HtmlTag> tags;

  const std::string& source() const { return ast->source; }
  const Stmt* stmt_for(const Node* node) const;
  /// Innermost tag whose extent contains `offset`.
  const HtmlTag* innermost_tag(std::size_t offset) const;
  /// Non-trivia lines that no statement or HTML segment covers (empty for a valid unit).
  std::vector<int> uncovered_lines() const;

  std::map<const Node*, int> node_index;
};

SourceUnit parse_php(const SourceFile& file, const SinkConfig& config = default_sink_config());

enum class EdgeKind { Include, Redirect };

struct Edge {
  std::string from;
  std::string to;  // empty for dangling edges
  int stmt = 0;
  int line = 0;
  EdgeKind kind = EdgeKind::Include;
  std::string target;
};

class DuplicateFunctionError : public Error {
 public:
  using Error::Error;
};

struct ProgramModel {
  std::vector<SourceUnit> units;
  std::vector<Edge> edges;
  std::vector<Edge> dangling;
  /// Lowercase function name -> index of the defining unit.
  std::map<std::string, std::size_t> functions;
  const SinkConfig* config = &default_sink_config();

  const SourceUnit* unit(const std::string& path) const;
  std::optional<std::size_t> unit_index(const std::string& path) const;
  const FunctionDef* function(std::string_view name) const;
  std::vector<const Edge*> edges_into(const std::string& path) const;
  std::vector<const Edge*> edges_from(const std::string& path) const;
  /// Edge created by statement `stmt` of `path`, if any.
  const Edge* edge_at(const std::string& path, int stmt) const;
};

/// Throws ContractViolation on duplicate unit paths, DuplicateFunctionError
/// when a function is defined twice.
ProgramModel build_program_model(std::vector<SourceUnit> units, const SinkConfig& config = default_sink_config());

/// Resolves an include target written in `from` against the known paths.
std::optional<std::string> resolve_target(const std::string& from, const std::string& target,
                                          const std::set<std::string>& known);

/// Normalizes "a/./b/../c" to "a/c". Leading "../" segments are dropped.
std::string normalize_path(std::string_view path);

/// Placeholder that __DIR__ folds to inside include targets.
inline const std::string kDirPlaceholder = "\x01" "DIR" "\x01";

}  // namespace pocgen::php
