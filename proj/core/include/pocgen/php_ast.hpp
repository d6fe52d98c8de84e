#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pocgen/common.hpp"

namespace pocgen::php {

/// Byte offsets [begin, end) into the file plus the 1-based lines they cover.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  int line = 0;
  int end_line = 0;
};

enum class ExprKind {
  Literal,       // text = value, lit says which
  Variable,      // text = name without '$'
  Index,         // kids[0] = base, kids[1] = index (nullptr for "[]")
  Property,      // kids[0] = object, text = property name
  Interpolated,  // kids = literal and variable parts of a "..." string
  Backtick,      // like Interpolated, executed by the shell
  Binary,        // text = operator, kids[0..1]
  Unary,         // text = operator, kids[0]
  Assign,        // text = "=", ".=", "+=", ...; kids[0] = target, kids[1] = value
  Call,          // text = function name, kids = args
  MethodCall,    // text = method name, kids[0] = object, kids[1..] = args
  StaticCall,    // text = "Class::method", kids = args
  New,           // text = class name, kids = args
  Array,         // kids = values, keys = parallel keys (nullptr when absent)
  Ternary,       // kids[0] = cond, kids[1] = then (may be nullptr for ?:), kids[2] = else
  Isset,         // kids = args
  Empty,         // kids[0]
  Exit,          // text = "exit" | "die", kids = optional message
  Include,       // text = include | include_once | require | require_once, kids[0] = target
  Cast,          // text = int | string | bool | float | array, kids[0]
  Constant,      // text = name (true/false/null are Literal)
  IncDec,        // text = "++" | "--", prefix flag, kids[0]
  Opaque,        // unsupported construct; kids hold any variables seen inside
};

enum class LiteralType { String, Int, Float, Bool, Null };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  ExprKind kind = ExprKind::Opaque;
  Span span;
  std::string text;
  LiteralType lit = LiteralType::Null;
  bool prefix = false;
  std::vector<ExprPtr> kids;
  std::vector<ExprPtr> keys;
};

enum class NodeKind {
  ExprStmt,
  Echo,        // exprs = echoed values
  If,          // exprs = conditions (if + elseif...), bodies = branches (+ else when has_else)
  While,       // exprs[0] = cond, bodies[0]
  DoWhile,     // exprs[0] = cond, bodies[0]
  For,         // exprs = init..., cond..., step... (see for_counts), bodies[0]
  Foreach,     // exprs[0] = subject, exprs[1] = key or nullptr, exprs[2] = value, bodies[0]
  Switch,      // exprs[0] = subject, exprs[1..] = case values (nullptr = default), bodies per case
  Function,    // name, params, bodies[0]
  Return,      // exprs[0] optional
  Break,
  Continue,
  Global,      // names
  Static,      // names, exprs = initialisers (nullptr when none)
  Unset,       // exprs
  InlineHtml,  // html
  Other,       // unsupported statement; exprs hold variables mentioned
};

struct Param {
  std::string name;
  ExprPtr default_value;
  bool by_ref = false;
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;
using Block = std::vector<NodePtr>;

struct Node {
  NodeKind kind = NodeKind::Other;
  Span span;
  std::vector<ExprPtr> exprs;
  std::vector<Block> bodies;
  bool has_else = false;
  std::string name;
  std::vector<Param> params;
  std::vector<std::string> names;
  std::string html;
  int for_init = 0, for_cond = 0, for_step = 0;
  /// Offset of the "<?php"/"<?=" tag that opened the PHP block holding this node.
  std::size_t php_open = 0;
};

class ParseError : public Error {
 public:
  ParseError(std::string path, int line, const std::string& what);
  const std::string& path() const { return path_; }
  int line() const { return line_; }

 private:
  std::string path_;
  int line_;
};

/// Top-level HTML text outside any PHP block.
struct HtmlChunk {
  Span span;
  std::string text;
};

struct ParsedFile {
  std::string path;
  std::string source;
  Block statements;
  std::vector<HtmlChunk> html;
};

/// Parses the supported PHP subset. Unsupported constructs become Other nodes /
/// Opaque expressions holding the variables they mention.
ParsedFile parse(const SourceFile& file);

/// Source text of a span.
std::string slice(const std::string& source, const Span& span);

/// Folds string-literal concatenations; nullopt when any part is not constant.
/// `__DIR__`/`dirname(__FILE__)` fold to `dir_placeholder`.
std::optional<std::string> fold_constant_string(const Expr& e, const std::string& dir_placeholder = "");

/// Calls `fn` for every sub-expression (pre-order, including `e` itself).
template <typename Fn>
void walk(const Expr& e, Fn&& fn) {
  fn(e);
  for (const auto& k : e.kids)
    if (k) walk(*k, fn);
  for (const auto& k : e.keys)
    if (k) walk(*k, fn);
}

}  // namespace pocgen::php
