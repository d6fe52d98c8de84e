#include "pocgen/context.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <regex>
#include <set>

#include "dataflow.hpp"
#include "pocgen/syntax.hpp"

namespace pocgen::context {

using detail::Gid;
using nlohmann::json;
using php::Expr;
using php::ExprKind;
using php::Node;
using php::NodeKind;
using php::ProgramModel;
using php::SourceUnit;
using php::Stmt;
using php::StmtKind;

std::string to_string(Granularity g) { return g == Granularity::File ? "file" : "function"; }

std::optional<Granularity> parse_granularity(std::string_view t) {
  std::string l = text::to_lower(t);
  if (l == "file") return Granularity::File;
  if (l == "function") return Granularity::Function;
  return std::nullopt;
}

std::string Location::display() const {
  std::string out = path + ":" + std::to_string(line);
  if (end_line > line) out += "-" + std::to_string(end_line);
  return out;
}

ContextNotFound::ContextNotFound(std::string which, std::vector<std::string> frontier, const std::string& what)
    : Error(what), which_(std::move(which)), frontier_(std::move(frontier)) {}

BudgetExceeded::BudgetExceeded(std::size_t overshoot, const std::string& what) : Error(what), overshoot_(overshoot) {}

const Fact* VulnerabilityContext::fact(std::string_view kind) const {
  for (const auto& f : facts)
    if (f.kind == kind) return &f;
  return nullptr;
}

std::string render_slice(const CodeSlice& s) {
  return "// " + s.path + ":" + std::to_string(s.first_line) + "-" + std::to_string(s.last_line) + " (" + s.kind +
         ")\n" + s.text + "\n";
}

std::size_t slice_tokens(const CodeSlice& s) { return estimate_tokens(render_slice(s)); }

// ---------------------------------------------------------------------------
// model

namespace {

bool is_php_path(const std::string& p) {
  static const char* exts[] = {".php", ".inc", ".phtml", ".php3", ".php4", ".php5", ".php7"};
  std::string l = text::to_lower(p);
  return std::any_of(std::begin(exts), std::end(exts), [&](const char* e) { return text::ends_with(l, e); });
}

}  // namespace

ProgramModel model_for_record(const corpus::CveRecord& record, const std::vector<SourceFile>& app_files) {
  std::map<std::string, SourceFile> files;
  for (const auto& f : app_files) files[f.path] = f;
  for (const auto& f : record.files) files[f.path] = f;
  std::vector<SourceUnit> units;
  for (const auto& [path, f] : files)
    if (is_php_path(path)) units.push_back(php::parse_php(f));
  return php::build_program_model(std::move(units));
}

// ---------------------------------------------------------------------------
// shared helpers

namespace {

const SourceUnit& unit_of(const ProgramModel& m, int u) { return m.units[static_cast<std::size_t>(u)]; }

const Stmt& stmt_of(const ProgramModel& m, Gid g) {
  return unit_of(m, g.unit).statements[static_cast<std::size_t>(g.stmt)];
}

int unit_index(const ProgramModel& m, const std::string& path) {
  auto i = m.unit_index(path);
  if (!i) throw ContractViolation("path not in program model: " + path);
  return static_cast<int>(*i);
}

bool is_compound(const Stmt& s) {
  switch (s.node->kind) {
    case NodeKind::If:
    case NodeKind::Switch:
    case NodeKind::While:
    case NodeKind::DoWhile:
    case NodeKind::For:
    case NodeKind::Foreach:
    case NodeKind::Function:
      return true;
    default:
      return false;
  }
}

/// Lines of a statement's own code: the header for compound statements.
Location stmt_location(const ProgramModel& m, Gid g) {
  const Stmt& s = stmt_of(m, g);
  Location l{unit_of(m, g.unit).path, s.line, s.end_line};
  if (is_compound(s)) {
    l.end_line = s.line;
    const Node& n = *s.node;
    if (n.kind == NodeKind::DoWhile) {
      l.line = l.end_line = s.end_line;
    } else if (n.kind == NodeKind::If) {
      if (!n.exprs.empty()) l.end_line = std::max(l.end_line, n.exprs[0]->span.end_line);
    } else {
      for (const auto& e : n.exprs)
        if (e) l.end_line = std::max(l.end_line, e->span.end_line);
    }
  }
  return l;
}

std::string code_at(const ProgramModel& m, const Location& l) {
  const SourceUnit* u = m.unit(l.path);
  return u ? text::line_range(u->source(), l.line, l.end_line) : "";
}

bool is_decl(const Stmt& s) { return s.node->kind == NodeKind::Function; }

bool contains_call(const Expr& e, const std::string& callee) {
  bool found = false;
  php::walk(e, [&](const Expr& x) {
    if (x.kind == ExprKind::Call && text::to_lower(x.text) == callee) found = true;
  });
  return found;
}

/// What makes a statement tainted: a variable, a request parameter, or the
/// return value of a user function.
struct Taint {
  std::string var;
  std::string key;
  bool superglobal = false;
  std::string callee;  // lowercase

  std::string display() const {
    if (!callee.empty()) return callee + "()";
    if (superglobal) return "$" + var + "['" + key + "']";
    return "$" + var;
  }
  auto tie() const { return std::tie(var, key, superglobal, callee); }
  bool operator<(const Taint& o) const { return tie() < o.tie(); }
};

bool expr_tainted(const Expr& e, const Taint& t, const php::SinkConfig& cfg) {
  if (!t.callee.empty()) return contains_call(e, t.callee);
  bool found = false;
  php::walk(e, [&](const Expr& x) {
    if (found) return;
    if (!t.superglobal) {
      if (x.kind == ExprKind::Variable && x.text == t.var) found = true;
      return;
    }
    if (x.kind != ExprKind::Index) return;
    const Expr* root = &x;
    const Expr* first = nullptr;
    while (root->kind == ExprKind::Index) {
      first = root->kids.size() > 1 ? root->kids[1].get() : nullptr;
      root = root->kids[0].get();
    }
    if (root->kind != ExprKind::Variable || root->text != t.var || !cfg.is_superglobal(root->text)) return;
    std::string key = "*";
    if (first)
      if (auto k = php::fold_constant_string(*first)) key = *k;
    if (key == t.key) found = true;
  });
  return found;
}

std::vector<const Expr*> node_exprs(const Stmt& s) {
  std::vector<const Expr*> out;
  for (const auto& e : s.node->exprs)
    if (e) out.push_back(e.get());
  return out;
}

bool stmt_tainted(const Stmt& s, const Taint& t, const php::SinkConfig& cfg) {
  for (const Expr* e : node_exprs(s))
    if (expr_tainted(*e, t, cfg)) return true;
  return false;
}

/// Argument expressions of a sink hit that must carry the taint.
std::vector<const Expr*> hit_args(const php::SinkHit& hit, const Stmt& s, const php::SinkConfig& cfg) {
  std::vector<const Expr*> out;
  if (!hit.call) return node_exprs(s);
  const Expr& x = *hit.call;
  if (x.kind == ExprKind::Backtick) return {&x};
  std::size_t first = x.kind == ExprKind::MethodCall ? 1 : 0;
  const auto& c = cfg.of(hit.cwe);
  auto pos = c.sink_args.find(text::to_lower(hit.callee));
  for (std::size_t i = first; i < x.kids.size(); ++i) {
    if (!x.kids[i]) continue;
    int p = static_cast<int>(i - first);
    if (pos != c.sink_args.end() && std::find(pos->second.begin(), pos->second.end(), p) == pos->second.end()) continue;
    out.push_back(x.kids[i].get());
  }
  return out;
}

bool hit_tainted(const php::SinkHit& hit, const Stmt& s, const Taint& t, const php::SinkConfig& cfg) {
  for (const Expr* e : hit_args(hit, s, cfg))
    if (expr_tainted(*e, t, cfg)) return true;
  return false;
}

std::string lower(std::string_view s) { return text::to_lower(s); }

struct Seeds {
  std::set<std::string> vars;
  std::set<std::string> keys;
  std::set<Gid> stmts;
  std::set<std::string> files;
  bool any() const { return !vars.empty() || !keys.empty() || !stmts.empty(); }
};

/// Innermost statement covering `line`.
std::optional<int> innermost_at(const SourceUnit& u, int line) {
  std::optional<int> best;
  int best_width = 0;
  for (const auto& s : u.statements) {
    Location l{u.path, s.line, s.end_line};
    if (line < s.line || line > s.end_line) continue;
    int width = s.end_line - s.line;
    if (!best || width <= best_width) {
      best = s.index;
      best_width = width;
    }
  }
  return best;
}

Seeds collect_seeds(const ProgramModel& m, const corpus::CveRecord& record) {
  Seeds seeds;
  std::string corpus_text = record.description;
  std::vector<corpus::PatchHunk> hunks;
  if (!record.patch.empty()) {
    try {
      hunks = corpus::parse_patch(record.patch);
    } catch (const corpus::PatchParseError&) {
      hunks.clear();
    }
  }
  for (const auto& h : hunks) {
    for (const auto& l : h.removed) corpus_text += "\n" + l;
    for (const auto& l : h.added) corpus_text += "\n" + l;
    const SourceUnit* u = m.unit(php::normalize_path(h.path()));
    if (!u) continue;
    seeds.files.insert(u->path);
    int ui = unit_index(m, u->path);
    for (int line : h.touched_old_lines())
      if (auto s = innermost_at(*u, line)) seeds.stmts.insert({ui, *s});
  }
  static const std::regex var_re(R"(\$([A-Za-z_][A-Za-z0-9_]*))");
  for (std::sregex_iterator it(corpus_text.begin(), corpus_text.end(), var_re), end; it != end; ++it)
    seeds.vars.insert((*it)[1].str());
  std::set<std::string> known_keys;
  for (const auto& u : m.units)
    for (const auto& s : u.statements)
      for (const auto& r : s.reads)
        if (r.superglobal_key && *r.superglobal_key != "*" && m.config->is_request_input(r.name, *r.superglobal_key))
          known_keys.insert(*r.superglobal_key);
  for (const auto& k : known_keys) {
    std::regex word("(^|[^A-Za-z0-9_])" + std::regex_replace(k, std::regex(R"([.^$|()\[\]{}*+?\\-])"), R"(\$&)") +
                    "($|[^A-Za-z0-9_])");
    if (std::regex_search(corpus_text, word)) seeds.keys.insert(k);
  }
  return seeds;
}

// --- guards -------------------------------------------------------------------

Location guard_location(const ProgramModel& m, const detail::GuardInfo& gi) {
  const Stmt& s = stmt_of(m, gi.stmt);
  Location l{unit_of(m, gi.stmt.unit).path, s.line, s.end_line};
  if (gi.effect == "early-exit") return l;
  l = stmt_location(m, gi.stmt);
  for (const auto& c : gi.conds)
    if (c.expr && c.positive && !c.constant && s.node->kind == NodeKind::If) {
      l.line = c.expr->span.line;
      l.end_line = c.expr->span.end_line;
      if (c.expr == s.node->exprs[0].get()) l.line = s.line;
    }
  return l;
}

Guard make_guard(const ProgramModel& m, const detail::GuardInfo& gi) {
  Guard g;
  g.location = guard_location(m, gi);
  std::vector<std::string> parts;
  for (const auto& c : gi.conds) parts.push_back(detail::cond_text(m, gi.stmt.unit, c));
  g.predicate = text::join(parts, " && ");
  g.effect = gi.effect;
  g.code = code_at(m, g.location);
  g.stmt = gi.stmt.stmt;
  return g;
}

std::vector<const Expr*> guard_exprs(const detail::GuardInfo& gi) {
  std::vector<const Expr*> out;
  for (const auto& c : gi.conds) {
    if (c.expr) out.push_back(c.expr);
    if (c.subject) out.push_back(c.subject);
  }
  return out;
}

bool guard_reads(const detail::GuardInfo& gi, const std::set<Taint>& tainted, const php::SinkConfig& cfg) {
  for (const Expr* e : guard_exprs(gi))
    for (const auto& t : tainted)
      if (t.callee.empty() && expr_tainted(*e, t, cfg)) return true;
  return false;
}

bool guard_reads_request(const ProgramModel& m, const detail::GuardInfo& gi) {
  bool found = false;
  for (const Expr* e : guard_exprs(gi))
    php::walk(*e, [&](const Expr& x) {
      if (x.kind != ExprKind::Index) return;
      const Expr* root = &x;
      const Expr* first = nullptr;
      while (root->kind == ExprKind::Index) {
        first = root->kids.size() > 1 ? root->kids[1].get() : nullptr;
        root = root->kids[0].get();
      }
      if (root->kind != ExprKind::Variable || !first) return;
      if (auto k = php::fold_constant_string(*first); k && m.config->is_request_input(root->text, *k)) found = true;
    });
  return found;
}

// --- taint search ----------------------------------------------------------------

struct Element {
  Gid at;
  Taint taint;
  std::vector<Gid> stack;
  int parent = -1;
  int depth = 0;
};

struct Candidate {
  std::size_t source = 0;  // index into sources
  Gid sink;
  std::size_t hit = 0;
  std::vector<Element> path;
  bool strong = false;
  bool weak = false;
};

struct SourceSite {
  Gid at;
  php::VarRef read;
};

class TaintSearch {
 public:
  TaintSearch(const ProgramModel& m, const detail::DefUse& du, Cwe cwe) : m_(m), du_(du), cfg_(*m.config), cwe_(cwe) {
    for (std::size_t u = 0; u < m.units.size(); ++u)
      for (const auto& s : m.units[u].statements)
        for (const auto& c : s.calls) callers_[lower(c)].push_back({static_cast<int>(u), s.index});
  }

  std::vector<SourceSite> sources() const {
    std::vector<SourceSite> out;
    for (std::size_t u = 0; u < m_.units.size(); ++u)
      for (const auto& s : m_.units[u].statements) {
        if (is_compound(s) && s.node->kind != NodeKind::If && s.node->kind != NodeKind::Switch &&
            s.node->kind != NodeKind::Foreach)
          continue;
        std::set<std::pair<std::string, std::string>> seen;
        for (const auto& r : s.reads) {
          if (!r.superglobal_key || !cfg_.is_request_input(r.name, *r.superglobal_key)) continue;
          if (!seen.insert({r.name, *r.superglobal_key}).second) continue;
          out.push_back({{static_cast<int>(u), s.index}, r});
        }
      }
    return out;
  }

  /// Breadth-first taint propagation from one source. Returns the visited
  /// elements; sink hits are appended to `found`.
  std::vector<Element> run(std::size_t source_index, const SourceSite& src, std::vector<Candidate>& found) const {
    std::vector<Element> elems;
    std::set<std::tuple<Gid, Taint, std::vector<Gid>>> seen;
    Taint t0;
    t0.var = src.read.name;
    t0.key = *src.read.superglobal_key;
    t0.superglobal = true;
    elems.push_back({src.at, t0, {}, -1, 0});
    seen.insert({src.at, t0, {}});
    for (std::size_t i = 0; i < elems.size() && elems.size() < kMaxElements; ++i) {
      Element e = elems[i];
      std::vector<Element> next;
      expand(e, static_cast<int>(i), next, source_index, elems, found);
      for (auto& n : next) {
        if (!seen.insert({n.at, n.taint, n.stack}).second) continue;
        elems.push_back(std::move(n));
      }
    }
    return elems;
  }

  static std::vector<Element> path_to(const std::vector<Element>& elems, int idx) {
    std::vector<Element> out;
    for (int i = idx; i >= 0; i = elems[static_cast<std::size_t>(i)].parent) out.push_back(elems[static_cast<std::size_t>(i)]);
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  static constexpr std::size_t kMaxElements = 20000;
  static constexpr std::size_t kMaxStack = 4;
  const ProgramModel& m_;
  const detail::DefUse& du_;
  const php::SinkConfig& cfg_;
  Cwe cwe_;
  std::map<std::string, std::vector<Gid>> callers_;

  void expand(const Element& e, int idx, std::vector<Element>& next, std::size_t source_index,
              const std::vector<Element>& elems, std::vector<Candidate>& found) const {
    const Stmt& s = stmt_of(m_, e.at);
    auto child = [&](Gid at, Taint t, std::vector<Gid> stack) {
      next.push_back({at, std::move(t), std::move(stack), idx, e.depth + 1});
    };

    if (!is_decl(s)) {
      for (std::size_t h = 0; h < s.sinks.size(); ++h) {
        const auto& hit = s.sinks[h];
        if (hit.cwe != cwe_ || !hit_tainted(hit, s, e.taint, cfg_)) continue;
        Candidate c;
        c.source = source_index;
        c.sink = e.at;
        c.hit = h;
        c.path = path_to(elems, idx);
        found.push_back(std::move(c));
        break;
      }
    }

    // Parameter passing into user functions.
    if (!is_decl(s) && e.stack.size() < kMaxStack) {
      for (const Expr* root : node_exprs(s)) {
        php::walk(*root, [&](const Expr& x) {
          if (x.kind != ExprKind::Call) return;
          const php::FunctionDef* def = m_.function(x.text);
          if (!def) return;
          for (std::size_t a = 0; a < x.kids.size() && a < def->params.size(); ++a) {
            if (!x.kids[a] || !expr_tainted(*x.kids[a], e.taint, cfg_)) continue;
            if (std::find(e.stack.begin(), e.stack.end(), e.at) != e.stack.end()) continue;
            auto stack = e.stack;
            stack.push_back(e.at);
            Taint p;
            p.var = def->params[a];
            child({unit_index(m_, def->path), def->decl}, p, std::move(stack));
          }
        });
      }
    }

    // Return values flow back to the call site.
    if (s.kind == StmtKind::Return && !s.function.empty() && stmt_tainted(s, e.taint, cfg_)) {
      Taint r;
      r.callee = lower(s.function);
      if (!e.stack.empty()) {
        auto stack = e.stack;
        Gid site = stack.back();
        stack.pop_back();
        child(site, r, std::move(stack));
      } else {
        auto it = callers_.find(r.callee);
        if (it != callers_.end())
          for (const Gid& site : it->second) child(site, r, {});
      }
      return;
    }

    // Definitions made by the statement.
    for (const auto& w : s.writes) {
      if (w.name.empty() || cfg_.is_superglobal(w.name)) continue;
      if (is_decl(s) && w.name != e.taint.var) continue;
      Taint t;
      t.var = w.name;
      for (const Gid& use : du_.uses(e.at, w.name)) child(use, t, e.stack);
    }
  }
};

// --- syntax context ----------------------------------------------------------------

struct Parts {
  std::string prefix;
  std::string suffix;
  bool found = false;
};

/// Literal text around the first part of `e` that carries `t`.
void flatten(const Expr& e, std::vector<const Expr*>& out) {
  if ((e.kind == ExprKind::Binary && e.text == ".") || e.kind == ExprKind::Interpolated || e.kind == ExprKind::Backtick) {
    for (const auto& k : e.kids)
      if (k) flatten(*k, out);
    return;
  }
  out.push_back(&e);
}

Parts split_around(const std::vector<const Expr*>& roots, const Taint& t, const php::SinkConfig& cfg) {
  std::vector<const Expr*> parts;
  for (const Expr* r : roots) flatten(*r, parts);
  Parts p;
  for (const Expr* x : parts) {
    bool lit = x->kind == ExprKind::Literal && x->lit == php::LiteralType::String;
    if (!p.found && !lit && expr_tainted(*x, t, cfg)) {
      p.found = true;
      continue;
    }
    std::string piece = lit ? x->text : "x";
    if (x->kind == ExprKind::Literal && x->lit != php::LiteralType::String) piece = x->text;
    (p.found ? p.suffix : p.prefix) += piece;
  }
  return p;
}

std::string strip_php_blocks(const std::string& s) {
  static const std::regex block(R"(<\?(php|=)?[\s\S]*?\?>)");
  return std::regex_replace(s, block, "x");
}

SyntaxConstraint syntax_for(const ProgramModel& m, Cwe cwe, const std::vector<Element>& path, std::size_t hit_index) {
  SyntaxConstraint sc;
  const Element& last = path.back();
  const Stmt& sink = stmt_of(m, last.at);
  sc.location = stmt_location(m, last.at);
  syntax::Family family = cwe == Cwe::CWE79 ? syntax::Family::Html
                          : cwe == Cwe::CWE89 ? syntax::Family::Sql
                          : cwe == Cwe::CWE78 ? syntax::Family::Shell
                                              : syntax::Family::None;
  if (family == syntax::Family::None) {
    sc.descriptor = "none";
    sc.description = syntax::describe("none");
    return sc;
  }
  const php::SinkHit& hit = sink.sinks[hit_index];
  Parts outer = split_around(hit_args(hit, sink, *m.config), last.taint, *m.config);
  std::string prefix = outer.prefix;
  std::string suffix = outer.suffix;
  for (std::size_t i = path.size() - 1; i > 0; --i) {
    const Element& cur = path[i - 1];
    const Stmt& s = stmt_of(m, cur.at);
    if (s.kind != StmtKind::Assign || s.node->kind != NodeKind::ExprStmt) break;
    const Expr& top = *s.node->exprs[0];
    if (top.kind != ExprKind::Assign) break;
    const Expr& value = *top.kids[1];
    if (value.kind != ExprKind::Binary && value.kind != ExprKind::Interpolated && value.kind != ExprKind::Variable &&
        value.kind != ExprKind::Index)
      break;
    Parts inner = split_around({&value}, cur.taint, *m.config);
    if (!inner.found) break;
    prefix += inner.prefix;
    suffix = inner.suffix + suffix;
    if (top.text == ".=") break;
  }
  std::string context_prefix = prefix;
  if (family == syntax::Family::Html) {
    const SourceUnit& u = unit_of(m, last.at.unit);
    std::size_t open = sink.node->php_open;
    if (const php::HtmlTag* tag = u.innermost_tag(open); tag && tag->open_begin < open)
      context_prefix = strip_php_blocks(u.source().substr(tag->open_begin, open - tag->open_begin)) + prefix;
  }
  syntax::Scan scan = syntax::scan(family, context_prefix);
  sc.descriptor = scan.descriptor;
  sc.description = syntax::describe(scan.descriptor);
  sc.tag = scan.tag;
  sc.attribute = scan.attribute;
  sc.prefix = context_prefix;
  sc.suffix = suffix;
  return sc;
}

// --- slices -----------------------------------------------------------------------

bool blank_line(std::string_view l) { return text::trim(l).empty(); }

class SliceBuilder {
 public:
  explicit SliceBuilder(const ProgramModel& m) : m_(m) {}

  void add_stmt(Gid g, const Location& where) {
    const Stmt& s = stmt_of(m_, g);
    const SourceUnit& u = unit_of(m_, g.unit);
    if (!s.function.empty() || is_decl(s)) {
      add_function(u.path, s.function.empty() ? s.node->name : s.function, true);
      return;
    }
    touch(u.path);
    for (int l = where.line; l <= where.end_line; ++l) lines_[u.path].insert(l);
  }

  /// Guard header plus the closing line of its block.
  void add_guard(Gid g, const Guard& guard) {
    add_stmt(g, guard.location);
    const Stmt& s = stmt_of(m_, g);
    if (s.function.empty() && guard.effect == "enclosing") lines_[unit_of(m_, g.unit).path].insert(s.end_line);
  }

  void add_function(const std::string& path, const std::string& name, bool mandatory) {
    std::string key = lower(name);
    for (auto& f : functions_)
      if (f.path == path && f.name == key) {
        f.mandatory = f.mandatory || mandatory;
        return;
      }
    touch(path);
    functions_.push_back({path, key, mandatory});
  }

  void add_html_tag(const std::string& path, const php::HtmlTag& tag) {
    touch(path);
    html_.push_back({path, tag});
  }

  const std::vector<std::string>& files() const { return order_; }

  bool has_function(const std::string& name) const {
    std::string key = lower(name);
    return std::any_of(functions_.begin(), functions_.end(), [&](const Fn& f) { return f.name == key; });
  }

  std::vector<CodeSlice> function_slices() const {
    std::vector<CodeSlice> out;
    for (const auto& path : order_) {
      const SourceUnit& u = *m_.unit(path);
      auto all = text::split_lines(u.source());
      auto it = lines_.find(path);
      if (it != lines_.end()) {
        std::vector<std::pair<int, int>> runs;
        for (int l : it->second) {
          if (!runs.empty()) {
            bool bridge = true;
            for (int k = runs.back().second + 1; k < l; ++k)
              if (k - 1 < static_cast<int>(all.size()) && !blank_line(all[static_cast<std::size_t>(k - 1)])) bridge = false;
            if (bridge) {
              runs.back().second = l;
              continue;
            }
          }
          runs.push_back({l, l});
        }
        for (const auto& [a, b] : runs)
          out.push_back({path, a, b, "toplevel", text::line_range(u.source(), a, b), true, 1.0});
      }
      for (const auto& f : functions_) {
        if (f.path != path) continue;
        const php::FunctionDef& def = u.functions.at(f.name);
        out.push_back({path, def.line, def.end_line, "function", text::line_range(u.source(), def.line, def.end_line),
                       f.mandatory, f.mandatory ? 1.0 : 0.5});
      }
      for (const auto& h : html_) {
        if (h.path != path) continue;
        std::size_t end = h.tag.closed() ? h.tag.close_end : u.source().size();
        out.push_back({path, h.tag.line, h.tag.end_line, "html-tag", u.source().substr(h.tag.open_begin, end - h.tag.open_begin),
                       true, 1.0});
      }
    }
    std::stable_sort(out.begin(), out.end(), [](const CodeSlice& a, const CodeSlice& b) { return a.mandatory && !b.mandatory; });
    return out;
  }

  /// Whole files: the touched ones are mandatory, the rest ranked by how
  /// directly they connect to a touched file.
  std::vector<CodeSlice> file_slices() const {
    std::vector<CodeSlice> out;
    std::set<std::string> mandatory;
    for (const auto& path : order_) {
      bool needed = lines_.count(path) || std::any_of(html_.begin(), html_.end(), [&](const Html& h) { return h.path == path; }) ||
                    std::any_of(functions_.begin(), functions_.end(), [&](const Fn& f) { return f.path == path && f.mandatory; });
      if (!needed) continue;
      mandatory.insert(path);
      const SourceUnit& u = *m_.unit(path);
      out.push_back({path, 1, text::count_lines(u.source()), "file", u.source(), true, 1.0});
    }
    for (const auto& u : m_.units) {
      if (mandatory.count(u.path)) continue;
      bool related = false;
      for (const auto& e : m_.edges)
        if ((e.from == u.path && mandatory.count(e.to)) || (e.to == u.path && mandatory.count(e.from))) related = true;
      for (const auto& f : functions_)
        if (f.path == u.path) related = true;
      out.push_back({u.path, 1, text::count_lines(u.source()), "file", u.source(), false, related ? 0.5 : 0.25});
    }
    return out;
  }

 private:
  struct Fn {
    std::string path;
    std::string name;
    bool mandatory;
  };
  struct Html {
    std::string path;
    php::HtmlTag tag;
  };
  const ProgramModel& m_;
  std::vector<std::string> order_;
  std::map<std::string, std::set<int>> lines_;
  std::vector<Fn> functions_;
  std::vector<Html> html_;

  void touch(const std::string& path) {
    if (std::find(order_.begin(), order_.end(), path) == order_.end()) order_.push_back(path);
  }
};

std::string method_of(const std::string& superglobal) {
  if (superglobal == "_GET") return "GET";
  if (superglobal == "_POST") return "POST";
  if (superglobal == "_COOKIE") return "COOKIE";
  if (superglobal == "_FILES") return "FILE";
  if (superglobal == "_SERVER") return "HEADER";
  return "REQUEST";
}

std::string requirement_text(const detail::Requirement& r) {
  std::string body;
  if (r.op == "==")
    body = r.key + "=" + r.value;
  else if (r.op == "!=")
    body = r.key + "!=" + r.value;
  else if (r.op == "non-empty")
    body = r.key + "=<non-empty>";
  else
    body = r.key + "=<any>";
  return method_of(r.superglobal) + " " + body;
}

}  // namespace

// ---------------------------------------------------------------------------
// vulnerability context

namespace {

struct Extraction {
  const ProgramModel& m;
  const corpus::CveRecord& record;
  detail::DefUse du;
  Seeds seeds;
  VulnerabilityContext ctx;
  SliceBuilder slices;
  std::vector<std::pair<Gid, Guard>> guards;

  Extraction(const ProgramModel& model, const corpus::CveRecord& rec)
      : m(model), record(rec), du(model), seeds(collect_seeds(model, rec)), slices(model) {}

  PathStep step(Gid g, const std::string& var) const {
    PathStep p;
    p.location = stmt_location(m, g);
    p.variable = var;
    p.code = code_at(m, p.location);
    p.stmt = g.stmt;
    return p;
  }

  void add_guard(const detail::GuardInfo& gi) {
    for (const auto& [g, _] : guards)
      if (g == gi.stmt) return;
    Guard g = make_guard(m, gi);
    guards.push_back({gi.stmt, g});
    ctx.control_flow_constraints.push_back(g);
    slices.add_guard(gi.stmt, g);
  }

  void taint_style();
  void csrf();
  void upload_facts(const std::vector<Element>& path);
  void finish(Granularity granularity);
};

void Extraction::taint_style() {
  TaintSearch search(m, du, record.cwe);
  auto sources = search.sources();
  std::vector<Candidate> candidates;
  std::vector<std::vector<Element>> visited(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) visited[i] = search.run(i, sources[i], candidates);

  for (auto& c : candidates) {
    for (const auto& e : c.path) {
      const Stmt& s = stmt_of(m, e.at);
      if (seeds.stmts.count(e.at)) c.strong = true;
      if (!e.taint.superglobal && e.taint.callee.empty() && seeds.vars.count(e.taint.var)) c.strong = true;
      for (const auto& w : s.writes)
        if (seeds.vars.count(w.name)) c.strong = true;
    }
    if (seeds.keys.count(sources[c.source].read.superglobal_key.value_or(""))) c.strong = true;
    c.weak = seeds.files.count(unit_of(m, c.sink.unit).path) || seeds.files.count(unit_of(m, c.path.front().at.unit).path);
  }
  bool require_seed = seeds.any() || !seeds.files.empty();
  std::vector<const Candidate*> ranked;
  for (const auto& c : candidates)
    if (!require_seed || c.strong || c.weak) ranked.push_back(&c);
  if (ranked.empty()) {
    std::set<std::string> frontier;
    for (std::size_t i = 0; i < visited.size(); ++i)
      for (const auto& e : visited[i]) {
        const Stmt& s = stmt_of(m, e.at);
        frontier.insert(unit_of(m, e.at.unit).path + ":" + std::to_string(s.line) + " " + e.taint.display());
      }
    std::vector<std::string> list(frontier.begin(), frontier.end());
    if (list.size() > 50) list.resize(50);
    throw ContextNotFound("vulnerability", list,
                          "no " + to_string(record.cwe) + " sink is reachable from a request source" +
                              (require_seed ? " along a path touching the description or patch" : ""));
  }
  auto key = [&](const Candidate* c) {
    const Stmt& sink = stmt_of(m, c->sink);
    const Stmt& src = stmt_of(m, c->path.front().at);
    return std::make_tuple(!c->strong, !seeds.files.count(unit_of(m, c->sink.unit).path), c->path.size(), sink.line,
                           unit_of(m, c->sink.unit).path, unit_of(m, c->path.front().at.unit).path, src.line, c->source);
  };
  std::stable_sort(ranked.begin(), ranked.end(), [&](const Candidate* a, const Candidate* b) { return key(a) < key(b); });
  const Candidate& best = *ranked.front();
  const auto& path = best.path;

  const SourceSite& src = sources[best.source];
  ctx.source.location = stmt_location(m, src.at);
  ctx.source.superglobal = src.read.name;
  ctx.source.key = *src.read.superglobal_key;
  ctx.source.code = code_at(m, ctx.source.location);
  ctx.source.stmt = src.at.stmt;

  const Stmt& sink = stmt_of(m, best.sink);
  ctx.sink.location = stmt_location(m, best.sink);
  ctx.sink.callee = sink.sinks[best.hit].callee;
  ctx.sink.code = code_at(m, ctx.sink.location);
  ctx.sink.stmt = best.sink.stmt;

  for (const auto& e : path) {
    PathStep p = step(e.at, e.taint.display());
    ctx.path.push_back(p);
    slices.add_stmt(e.at, p.location);
    if (e.taint.callee.empty() &&
        std::find(ctx.vulnerable_variables.begin(), ctx.vulnerable_variables.end(), p.variable) == ctx.vulnerable_variables.end())
      ctx.vulnerable_variables.push_back(p.variable);
  }

  // Transformations applied on the way.
  const auto& cls = m.config->of(record.cwe);
  for (std::size_t i = 0; i < path.size(); ++i) {
    const Element& e = path[i];
    const Stmt& s = stmt_of(m, e.at);
    if (is_decl(s)) continue;
    std::string hop_into;
    if (i + 1 < path.size() && is_decl(stmt_of(m, path[i + 1].at))) hop_into = lower(stmt_of(m, path[i + 1].at).node->name);
    for (const Expr* root : node_exprs(s)) {
      php::walk(*root, [&](const Expr& x) {
        if (x.kind != ExprKind::Call && x.kind != ExprKind::MethodCall && x.kind != ExprKind::StaticCall &&
            x.kind != ExprKind::Cast)
          return;
        for (const auto& h : s.sinks)
          if (h.call == &x) return;
        std::size_t first = x.kind == ExprKind::MethodCall ? 1 : 0;
        bool tainted = false;
        for (std::size_t a = first; a < x.kids.size(); ++a)
          if (x.kids[a] && expr_tainted(*x.kids[a], e.taint, *m.config)) tainted = true;
        if (!tainted) return;
        DataFlowStep d;
        std::string name = x.kind == ExprKind::MethodCall ? "->" + x.text : x.text;
        if (x.kind == ExprKind::Cast) name = "(" + x.text + ")";
        if (lower(name) == hop_into) return;
        d.callee = name;
        d.site = stmt_location(m, e.at);
        d.code = php::slice(unit_of(m, e.at.unit).source(), x.span);
        if (x.kind == ExprKind::Cast) {
          d.role = "cast";
        } else if (const php::FunctionDef* def = x.kind == ExprKind::Call ? m.function(x.text) : nullptr) {
          d.definition = Location{def->path, def->line, def->end_line};
          const SourceUnit& du_unit = *m.unit(def->path);
          bool sanitizes = false;
          for (int k = def->body_begin; k < def->body_end; ++k)
            for (const auto& c : du_unit.statements[static_cast<std::size_t>(k)].calls) {
              if (std::find(d.inner_calls.begin(), d.inner_calls.end(), c) == d.inner_calls.end()) d.inner_calls.push_back(c);
              if (cls.sanitizers.count(lower(c)) || m.config->filters.count(lower(c))) sanitizes = true;
            }
          d.role = sanitizes ? "sanitizer" : "transform";
          slices.add_function(def->path, def->name, true);
        } else if (cls.sanitizers.count(lower(x.text))) {
          d.role = "sanitizer";
        } else if (m.config->filters.count(lower(x.text))) {
          d.role = "filter";
        } else {
          d.role = "transform";
        }
        ctx.data_flow_constraints.push_back(std::move(d));
      });
    }
  }

  // Guards that test tainted values.
  std::set<Taint> tainted;
  for (const auto& e : visited[best.source])
    if (e.taint.callee.empty()) tainted.insert(e.taint);
  for (const auto& e : path) {
    if (is_decl(stmt_of(m, e.at))) continue;
    for (const auto& gi : detail::guards_for(m, e.at.unit, e.at.stmt))
      if (guard_reads(gi, tainted, *m.config)) add_guard(gi);
  }

  ctx.syntax_constraints = syntax_for(m, record.cwe, path, best.hit);
  if (record.cwe == Cwe::CWE79) {
    const SourceUnit& u = unit_of(m, best.sink.unit);
    if (const php::HtmlTag* tag = u.innermost_tag(sink.node->php_open); tag && tag->open_begin < sink.node->php_open)
      slices.add_html_tag(u.path, *tag);
  }
  if (record.cwe == Cwe::CWE434) upload_facts(path);
}

void Extraction::upload_facts(const std::vector<Element>& path) {
  const Element& last = path.back();
  const SourceUnit& u = unit_of(m, last.at.unit);
  const std::string& key = ctx.source.key;
  auto add = [&](std::string kind, Gid at, Location loc, std::string value) {
    Fact f;
    f.kind = std::move(kind);
    f.location = loc;
    f.value = std::move(value);
    f.code = code_at(m, loc);
    slices.add_stmt(at, loc);
    ctx.facts.push_back(std::move(f));
  };

  std::optional<Gid> upload;
  for (const auto& gi : detail::guards_for(m, last.at.unit, last.at.stmt)) {
    if (gi.effect != "enclosing") continue;
    Taint t;
    t.var = "_FILES";
    t.key = key;
    t.superglobal = true;
    bool reads = false;
    for (const Expr* e : guard_exprs(gi))
      if (expr_tainted(*e, t, *m.config)) reads = true;
    if (reads) {
      upload = gi.stmt;
      break;
    }
  }
  Gid upload_at = upload.value_or(path.front().at);
  add("upload_code", upload_at, stmt_location(m, upload_at), "$_FILES['" + key + "']");

  const Stmt& sink = stmt_of(m, last.at);
  for (const auto& s : u.statements) {
    if (s.function != sink.function || (upload && s.index == upload->stmt)) continue;
    std::set<std::string> seen;
    for (const auto& r : s.reads) {
      if (r.name != "_FILES" || r.superglobal_key != key) continue;
      std::string d = r.display();
      if (!seen.insert(d).second) continue;
      Gid g{last.at.unit, s.index};
      add("processing_parameters", g, stmt_location(m, g), d);
    }
  }

  Gid storage = path.size() > 1 ? path[path.size() - 2].at : last.at;
  std::string storage_var = last.taint.display();
  add("storage_path_code", storage, stmt_location(m, storage), storage_var);

  bool any_validation = false;
  for (const auto& [g, guard] : guards) {
    if (upload && g == *upload) continue;
    const Stmt& gs = stmt_of(m, g);
    detail::GuardInfo info;
    for (const auto& gi : detail::guards_for(m, last.at.unit, last.at.stmt))
      if (gi.stmt == g) info = gi;
    Location loc = guard.location;
    std::string value = "check: " + guard.predicate;
    for (const auto& c : info.conds) {
      if (!c.expr) continue;
      const Expr* e = c.expr;
      bool polarity = c.positive;
      while (e->kind == ExprKind::Unary && e->text == "!") {
        polarity = !polarity;
        e = e->kids[0].get();
      }
      if (e->kind != ExprKind::Call || lower(e->text) != "in_array" || e->kids.size() < 2) continue;
      const Expr* hay = e->kids[1].get();
      const Expr* list = hay;
      if (hay->kind == ExprKind::Variable) {
        list = nullptr;
        for (const Gid& d : du.defs(g, hay->text)) {
          const Stmt& ds = stmt_of(m, d);
          if (ds.node->kind == NodeKind::ExprStmt && ds.node->exprs[0]->kind == ExprKind::Assign && d.unit == g.unit) {
            list = ds.node->exprs[0]->kids[1].get();
            loc.line = std::min(loc.line, ds.line);
            slices.add_stmt(d, stmt_location(m, d));
          }
        }
      }
      std::vector<std::string> items;
      if (list && list->kind == ExprKind::Array)
        for (const auto& k : list->kids)
          if (k) items.push_back(php::fold_constant_string(*k).value_or(php::slice(u.source(), k->span)));
      value = std::string(polarity ? "whitelist" : "blacklist") + ": " + text::join(items, ", ");
    }
    loc.end_line = std::max(loc.end_line, gs.end_line);
    Fact f;
    f.kind = "validation_mechanism";
    f.location = loc;
    f.value = value;
    f.code = code_at(m, loc);
    ctx.facts.push_back(std::move(f));
    any_validation = true;
  }
  if (!any_validation) {
    Fact f;
    f.kind = "validation_mechanism";
    f.location = ctx.sink.location;
    f.value = "none";
    f.code = ctx.sink.code;
    ctx.facts.push_back(std::move(f));
  }

  std::string location;
  const Stmt& ss = stmt_of(m, storage);
  if (ss.node->kind == NodeKind::ExprStmt && ss.node->exprs[0]->kind == ExprKind::Assign) {
    std::vector<const Expr*> parts;
    flatten(*ss.node->exprs[0]->kids[1], parts);
    for (const Expr* p : parts) {
      if (p->kind != ExprKind::Literal) break;
      location += p->text;
    }
  }
  Location sl = stmt_location(m, storage);
  Fact where;
  where.kind = "storage_location";
  where.location = sl;
  where.value = location.empty() ? "unknown" : location;
  where.code = code_at(m, sl);
  ctx.facts.push_back(where);
  Fact access;
  access.kind = "access_method";
  access.location = sl;
  access.value = "GET " + record.base_url + "/" + location + "<uploaded file name>";
  access.code = where.code;
  ctx.facts.push_back(access);
}

void Extraction::csrf() {
  std::vector<std::string> globs = record.semantic_sinks;
  if (globs.empty()) globs = m.config->of(Cwe::CWE352).semantic_sinks;
  auto semantic = [&](const Stmt& s) -> std::string {
    if (is_compound(s) || !s.function.empty()) return "";
    for (const auto& c : s.calls)
      for (const auto& g : globs)
        if (text::glob_match(g, c)) return c;
    return "";
  };
  struct Group {
    int unit;
    std::vector<int> stmts;
    bool seeded = false;
  };
  std::vector<Group> groups;
  for (std::size_t u = 0; u < m.units.size(); ++u) {
    const auto& stmts = m.units[u].statements;
    for (const auto& s : stmts) {
      if (semantic(s).empty()) continue;
      if (!groups.empty() && groups.back().unit == static_cast<int>(u)) {
        const Stmt& prev = stmts[static_cast<std::size_t>(groups.back().stmts.back())];
        bool adjacent = prev.parent == s.parent && prev.branch == s.branch;
        for (int k = prev.index + 1; adjacent && k < s.index; ++k) {
          const Stmt& mid = stmts[static_cast<std::size_t>(k)];
          if (mid.parent == s.parent && mid.branch == s.branch) adjacent = false;
        }
        if (adjacent) {
          groups.back().stmts.push_back(s.index);
          continue;
        }
      }
      groups.push_back({static_cast<int>(u), {s.index}, false});
    }
  }
  if (groups.empty())
    throw ContextNotFound("vulnerability", {}, "no state-changing operation matches the semantic sink patterns");
  for (auto& g : groups) {
    const SourceUnit& u = unit_of(m, g.unit);
    const Stmt& first = u.statements[static_cast<std::size_t>(g.stmts.front())];
    int lo = first.line, hi = u.statements[static_cast<std::size_t>(g.stmts.back())].end_line;
    if (first.parent >= 0) {
      lo = u.statements[static_cast<std::size_t>(first.parent)].line;
      hi = u.statements[static_cast<std::size_t>(first.parent)].end_line;
    }
    for (const Gid& s : seeds.stmts)
      if (s.unit == g.unit) {
        const Stmt& ss = stmt_of(m, s);
        if (ss.line >= lo && ss.line <= hi) g.seeded = true;
      }
  }
  std::stable_sort(groups.begin(), groups.end(), [&](const Group& a, const Group& b) {
    auto ka = std::make_tuple(!a.seeded, !seeds.files.count(unit_of(m, a.unit).path));
    auto kb = std::make_tuple(!b.seeded, !seeds.files.count(unit_of(m, b.unit).path));
    return ka < kb;
  });
  const Group& g = groups.front();
  const SourceUnit& u = unit_of(m, g.unit);
  Gid first{g.unit, g.stmts.front()};
  const Stmt& fs = stmt_of(m, first);
  const Stmt& ls = u.statements[static_cast<std::size_t>(g.stmts.back())];

  ctx.sink.location = stmt_location(m, first);
  ctx.sink.callee = semantic(fs);
  ctx.sink.code = code_at(m, ctx.sink.location);
  ctx.sink.stmt = first.stmt;

  std::vector<detail::GuardInfo> request_guards;
  for (const auto& gi : detail::guards_for(m, g.unit, first.stmt))
    if (guard_reads_request(m, gi)) request_guards.push_back(gi);
  for (const auto& gi : request_guards) add_guard(gi);

  if (!request_guards.empty()) {
    const detail::GuardInfo& inner = request_guards.back();
    const Stmt& gs = stmt_of(m, inner.stmt);
    for (const auto& r : gs.reads)
      if (r.superglobal_key && m.config->is_request_input(r.name, *r.superglobal_key)) {
        ctx.source.superglobal = r.name;
        ctx.source.key = *r.superglobal_key;
        break;
      }
    ctx.source.location = stmt_location(m, inner.stmt);
    ctx.source.stmt = inner.stmt.stmt;
  } else {
    ctx.source.location = ctx.sink.location;
    ctx.source.stmt = first.stmt;
  }
  ctx.source.code = code_at(m, ctx.source.location);

  if (!request_guards.empty()) {
    PathStep p = step(request_guards.back().stmt, "$" + ctx.source.superglobal + "['" + ctx.source.key + "']");
    ctx.path.push_back(p);
    slices.add_stmt(request_guards.back().stmt, p.location);
  }
  std::vector<std::string> callees;
  for (int idx : g.stmts) {
    Gid at{g.unit, idx};
    PathStep p = step(at, "");
    ctx.path.push_back(p);
    slices.add_stmt(at, p.location);
    callees.push_back(semantic(stmt_of(m, at)));
    if (const php::FunctionDef* def = m.function(semantic(stmt_of(m, at)))) slices.add_function(def->path, def->name, false);
  }

  Fact exec;
  exec.kind = "execution_code";
  exec.location = Location{u.path, fs.line, ls.end_line};
  exec.value = text::join(callees, ", ");
  exec.code = code_at(m, exec.location);
  ctx.facts.push_back(exec);

  detail::Evaluator ev(m, du);
  detail::Dnf formula = detail::Dnf::truth(true);
  std::vector<std::string> unknown;
  for (std::size_t i = 0; i < request_guards.size(); ++i)
    formula = detail::dnf_and(formula, ev.guard_formula(g.unit, request_guards[i], static_cast<int>(i), unknown));
  std::set<std::pair<std::string, std::string>> listed;
  if (auto sol = detail::best_solution(formula)) {
    for (const auto& r : *sol) {
      Fact f;
      f.kind = "operation_parameters";
      f.location = guard_location(m, request_guards[static_cast<std::size_t>(r.guard)]);
      f.value = requirement_text(r);
      f.code = code_at(m, f.location);
      ctx.facts.push_back(f);
      listed.insert({r.superglobal, r.key});
      std::string display = "$" + r.superglobal + "['" + r.key + "']";
      if (std::find(ctx.vulnerable_variables.begin(), ctx.vulnerable_variables.end(), display) == ctx.vulnerable_variables.end())
        ctx.vulnerable_variables.push_back(display);
    }
  }
  int scope = request_guards.empty() ? fs.parent : request_guards.back().stmt.stmt;
  for (const auto& s : u.statements) {
    bool inside = false;
    for (int p = s.parent; p >= 0; p = u.statements[static_cast<std::size_t>(p)].parent)
      if (p == scope) inside = true;
    if (!inside && scope >= 0) continue;
    for (const auto& r : s.reads) {
      if (!r.superglobal_key || *r.superglobal_key == "*" || !m.config->is_request_input(r.name, *r.superglobal_key)) continue;
      if (!listed.insert({r.name, *r.superglobal_key}).second) continue;
      Fact f;
      f.kind = "operation_parameters";
      f.location = stmt_location(m, {g.unit, s.index});
      f.value = method_of(r.name) + " " + *r.superglobal_key + " (optional)";
      f.code = code_at(m, f.location);
      ctx.facts.push_back(f);
      slices.add_stmt({g.unit, s.index}, f.location);
    }
  }

  const auto& protections = m.config->of(Cwe::CWE352).protections;
  bool any = false;
  for (const auto& s : u.statements) {
    bool hit = std::any_of(s.calls.begin(), s.calls.end(), [&](const std::string& c) { return protections.count(lower(c)) > 0; });
    bool referer = std::any_of(s.reads.begin(), s.reads.end(), [](const php::VarRef& r) {
      return r.name == "_SERVER" && r.superglobal_key == "HTTP_REFERER";
    });
    if (!hit && !referer) continue;
    Gid at{g.unit, s.index};
    Fact f;
    f.kind = "protection_mechanisms";
    f.location = stmt_location(m, at);
    f.value = hit ? "token check in the vulnerable code" : "referer check in the vulnerable code";
    f.code = code_at(m, f.location);
    ctx.facts.push_back(f);
    slices.add_stmt(at, f.location);
    any = true;
  }
  if (!any) {
    Fact f;
    f.kind = "protection_mechanisms";
    f.location = request_guards.empty() ? exec.location : guard_location(m, request_guards.back());
    f.value = "none: no token or referer check guards the operation";
    f.code = code_at(m, f.location);
    ctx.facts.push_back(f);
  }
  if (!record.patch.empty()) {
    std::vector<corpus::PatchHunk> hunks;
    try {
      hunks = corpus::parse_patch(record.patch);
    } catch (const corpus::PatchParseError&) {
    }
    for (const auto& h : hunks) {
      for (const auto& line : h.added) {
        std::string l = lower(line);
        bool names_protection = std::any_of(protections.begin(), protections.end(), [&](const std::string& p) { return text::contains(l, p); });
        if (!names_protection) continue;
        auto touched = h.touched_old_lines();
        int at = touched.empty() ? h.old_start : touched.front();
        Fact f;
        f.kind = "protection_mechanisms";
        f.location = Location{php::normalize_path(h.path()), at, at};
        f.value = "added by the fix: " + text::trim(line);
        f.code = text::trim(line);
        ctx.facts.push_back(f);
      }
    }
  }

  ctx.syntax_constraints.descriptor = "none";
  ctx.syntax_constraints.description = syntax::describe("none");
  ctx.syntax_constraints.location = ctx.sink.location;
}

void Extraction::finish(Granularity granularity) {
  ctx.granularity = granularity;
  ctx.code_slices = granularity == Granularity::File ? slices.file_slices() : slices.function_slices();
}

}  // namespace

VulnerabilityContext extract_vuln_context(const ProgramModel& model, const corpus::CveRecord& record, Granularity granularity) {
  Extraction x(model, record);
  x.ctx.record_id = record.id;
  x.ctx.cwe = record.cwe;
  x.ctx.base_url = record.base_url;
  if (record.cwe == Cwe::CWE352)
    x.csrf();
  else
    x.taint_style();
  if (granularity == Granularity::Function) {
    // Helpers called along the path but not needed to explain it.
    for (const auto& p : x.ctx.path) {
      const Stmt& s = model.unit(p.location.path)->statements[static_cast<std::size_t>(p.stmt)];
      for (const auto& c : s.calls)
        if (const php::FunctionDef* def = model.function(c); def && !x.slices.has_function(def->name))
          x.slices.add_function(def->path, def->name, false);
    }
  }
  x.finish(granularity);
  return x.ctx;
}

// ---------------------------------------------------------------------------
// navigation

namespace {

struct ChainResult {
  bool ok = false;
  std::vector<detail::GuardInfo> guards;
  std::vector<detail::Requirement> requirements;
  std::string reason;
};

ChainResult evaluate_chain(const ProgramModel& m, const detail::DefUse& du, const std::vector<int>& units,
                           const std::vector<int>& targets, const std::set<Gid>& ignored) {
  detail::Evaluator ev(m, du);
  ChainResult r;
  detail::Dnf formula = detail::Dnf::truth(true);
  std::vector<std::string> unknown;
  int entry = units.front();
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i > 0) {
      const php::Edge* hop = m.edge_at(unit_of(m, units[i - 1]).path, targets[i - 1]);
      if (hop && hop->kind == php::EdgeKind::Redirect) entry = units[i];
    }
    for (const auto& gi : detail::guards_for(m, units[i], targets[i])) {
      if (ignored.count(gi.stmt)) continue;
      int idx = static_cast<int>(r.guards.size());
      r.guards.push_back(gi);
      formula = detail::dnf_and(formula, ev.guard_formula(entry, gi, idx, unknown));
    }
  }
  auto sol = detail::best_solution(formula);
  if (!sol) {
    r.reason = unknown.empty() ? "guards on the path contradict each other"
                               : "unresolvable predicate: " + unknown.front();
    return r;
  }
  r.ok = true;
  r.requirements = std::move(*sol);
  return r;
}

PathConstraint to_constraint(const ProgramModel& m, const ChainResult& r, const detail::Requirement& req) {
  PathConstraint c;
  c.superglobal = req.superglobal;
  c.key = req.key;
  c.op = req.op;
  c.value = req.value;
  if (req.guard >= 0) c.location = guard_location(m, r.guards[static_cast<std::size_t>(req.guard)]);
  return c;
}

/// Top-level statement of the sink file the request must reach.
std::optional<Gid> nav_anchor(const ProgramModel& m, const VulnerabilityContext& vuln) {
  for (auto it = vuln.path.rbegin(); it != vuln.path.rend(); ++it) {
    int u = unit_index(m, it->location.path);
    const Stmt& s = stmt_of(m, {u, it->stmt});
    if (s.function.empty() && !is_decl(s)) return Gid{u, it->stmt};
  }
  std::set<std::string> fns;
  for (const auto& p : vuln.path) {
    int u = unit_index(m, p.location.path);
    const Stmt& s = stmt_of(m, {u, p.stmt});
    fns.insert(lower(is_decl(s) ? s.node->name : s.function));
  }
  for (std::size_t u = 0; u < m.units.size(); ++u)
    for (const auto& s : m.units[u].statements) {
      if (!s.function.empty()) continue;
      for (const auto& c : s.calls)
        if (fns.count(lower(c))) return Gid{static_cast<int>(u), s.index};
    }
  return std::nullopt;
}

std::vector<std::string> dangling_list(const ProgramModel& m) {
  std::vector<std::string> out;
  for (const auto& e : m.dangling) out.push_back(e.from + ":" + std::to_string(e.line) + " -> " + e.target);
  return out;
}

}  // namespace

NavigationContext extract_nav_context(const ProgramModel& model, const VulnerabilityContext& vuln, Granularity granularity) {
  detail::DefUse du(model);
  auto anchor = nav_anchor(model, vuln);
  if (!anchor)
    throw ContextNotFound("navigation", dangling_list(model), "the vulnerable path is never invoked from top-level code");
  std::set<Gid> ignored;
  for (const auto& g : vuln.control_flow_constraints) ignored.insert({unit_index(model, g.location.path), g.stmt});

  struct Partial {
    std::vector<int> units;
    std::vector<int> targets;
  };
  std::deque<Partial> queue;
  queue.push_back({{anchor->unit}, {anchor->stmt}});
  std::vector<std::string> reasons;
  std::size_t budget = 5000;
  while (!queue.empty() && budget-- > 0) {
    Partial p = queue.front();
    queue.pop_front();
    ChainResult r = evaluate_chain(model, du, p.units, p.targets, ignored);
    if (r.ok) {
      NavigationContext nav;
      nav.granularity = granularity;
      SliceBuilder slices(model);
      for (std::size_t i = 0; i < p.units.size(); ++i) {
        const SourceUnit& u = unit_of(model, p.units[i]);
        nav.file_navigation_chain.push_back(u.path);
        if (i + 1 < p.units.size()) {
          const php::Edge* e = model.edge_at(u.path, p.targets[i]);
          Hop h;
          h.from = u.path;
          h.to = e->to;
          h.kind = e->kind == php::EdgeKind::Include ? "include" : "redirect";
          h.location = stmt_location(model, {p.units[i], p.targets[i]});
          h.code = code_at(model, h.location);
          nav.file_navigation_code.push_back(h);
          slices.add_stmt({p.units[i], p.targets[i]}, h.location);
        } else {
          slices.add_stmt({p.units[i], p.targets[i]}, stmt_location(model, {p.units[i], p.targets[i]}));
        }
      }
      for (const auto& gi : r.guards) {
        Guard g = make_guard(model, gi);
        nav.path_constraint_code.push_back(g);
        slices.add_guard(gi.stmt, g);
      }
      for (const auto& req : r.requirements) nav.path_constraint_values.push_back(to_constraint(model, r, req));
      nav.entry_url = vuln.base_url + "/" + nav.file_navigation_chain.front();
      nav.code_slices = granularity == Granularity::File ? slices.file_slices() : slices.function_slices();
      if (granularity == Granularity::File) {
        std::vector<CodeSlice> kept;
        for (auto& s : nav.code_slices)
          if (s.mandatory) kept.push_back(std::move(s));
        nav.code_slices = std::move(kept);
      }
      return nav;
    }
    reasons.push_back(text::join([&] {
      std::vector<std::string> names;
      for (int u : p.units) names.push_back(unit_of(model, u).path);
      return names;
    }(), " -> ") + ": " + r.reason);
    if (p.units.size() >= 6) continue;
    for (const php::Edge* e : model.edges_into(unit_of(model, p.units.front()).path)) {
      int from = unit_index(model, e->from);
      if (std::find(p.units.begin(), p.units.end(), from) != p.units.end()) continue;
      Partial q = p;
      q.units.insert(q.units.begin(), from);
      q.targets.insert(q.targets.begin(), e->stmt);
      queue.push_back(std::move(q));
    }
  }
  auto frontier = dangling_list(model);
  throw ContextNotFound("navigation", frontier,
                        "no publicly reachable page leads to " + unit_of(model, anchor->unit).path +
                            (reasons.empty() ? std::string() : " (" + reasons.front() + ")"));
}

bool is_public(const ProgramModel& model, const std::string& path) {
  int u = unit_index(model, path);
  detail::DefUse du(model);
  detail::Evaluator ev(model, du);
  detail::Dnf formula = detail::Dnf::truth(true);
  std::vector<std::string> unknown;
  auto exits = detail::top_level_exits(model, u);
  for (std::size_t i = 0; i < exits.size(); ++i)
    formula = detail::dnf_and(formula, ev.guard_formula(u, exits[i], static_cast<int>(i), unknown));
  return detail::best_solution(formula).has_value();
}

Reachability check_chain(const ProgramModel& model, const std::vector<std::string>& chain, int target) {
  if (chain.empty()) throw ContractViolation("check_chain: empty chain");
  std::vector<int> units, targets;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    units.push_back(unit_index(model, chain[i]));
    if (i + 1 < chain.size()) {
      const php::Edge* hop = nullptr;
      for (const php::Edge* e : model.edges_from(chain[i]))
        if (e->to == chain[i + 1]) {
          hop = e;
          break;
        }
      if (!hop) throw ContractViolation("check_chain: no edge " + chain[i] + " -> " + chain[i + 1]);
      targets.push_back(hop->stmt);
    }
  }
  const auto& last = model.units[static_cast<std::size_t>(units.back())];
  if (target < 0 || target >= static_cast<int>(last.statements.size()))
    throw ContractViolation("check_chain: no statement " + std::to_string(target) + " in " + last.path);
  targets.push_back(target);
  detail::DefUse du(model);
  ChainResult r = evaluate_chain(model, du, units, targets, {});
  Reachability out;
  out.reachable = r.ok;
  out.reason = r.reason;
  for (const auto& gi : r.guards) out.guards.push_back(make_guard(model, gi));
  for (const auto& req : r.requirements) out.constraints.push_back(to_constraint(model, r, req));
  return out;
}

// ---------------------------------------------------------------------------
// budget

std::vector<CodeSlice> trim_to_budget(const std::vector<CodeSlice>& slices, std::size_t budget) {
  if (budget == 0) throw ContractViolation("trim_to_budget: budget must be positive");
  std::size_t total = 0, mandatory = 0;
  std::vector<std::size_t> cost(slices.size());
  for (std::size_t i = 0; i < slices.size(); ++i) {
    cost[i] = slice_tokens(slices[i]);
    total += cost[i];
    if (slices[i].mandatory) mandatory += cost[i];
  }
  if (mandatory > budget)
    throw BudgetExceeded(mandatory - budget, "mandatory context needs " + std::to_string(mandatory) +
                                                 " tokens, budget is " + std::to_string(budget));
  if (total <= budget) return slices;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < slices.size(); ++i)
    if (!slices[i].mandatory) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (slices[a].relevance != slices[b].relevance) return slices[a].relevance < slices[b].relevance;
    return a > b;
  });
  std::vector<bool> dropped(slices.size(), false);
  for (std::size_t i : order) {
    if (total <= budget) break;
    dropped[i] = true;
    total -= cost[i];
  }
  std::vector<CodeSlice> out;
  for (std::size_t i = 0; i < slices.size(); ++i)
    if (!dropped[i]) out.push_back(slices[i]);
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json loc_json(const Location& l) { return {{"path", l.path}, {"line", l.line}, {"end_line", l.end_line}}; }

json guard_json(const Guard& g) {
  return {{"location", loc_json(g.location)}, {"predicate", g.predicate}, {"effect", g.effect}, {"code", g.code}};
}

json slices_json(const std::vector<CodeSlice>& slices) {
  json out = json::array();
  for (const auto& s : slices)
    out.push_back({{"path", s.path},
                   {"first_line", s.first_line},
                   {"last_line", s.last_line},
                   {"kind", s.kind},
                   {"mandatory", s.mandatory},
                   {"relevance", s.relevance},
                   {"text", s.text}});
  return out;
}

}  // namespace

json to_json(const VulnerabilityContext& c) {
  json j;
  j["record_id"] = c.record_id;
  j["cwe"] = to_string(c.cwe);
  j["granularity"] = to_string(c.granularity);
  j["source"] = {{"location", loc_json(c.source.location)},
                 {"superglobal", c.source.superglobal},
                 {"key", c.source.key},
                 {"code", c.source.code}};
  j["sink"] = {{"location", loc_json(c.sink.location)}, {"callee", c.sink.callee}, {"code", c.sink.code}};
  j["vulnerable_variable"] = c.vulnerable_variables;
  j["path"] = json::array();
  for (const auto& p : c.path)
    j["path"].push_back({{"location", loc_json(p.location)}, {"variable", p.variable}, {"code", p.code}});
  j["data_flow_constraints"] = json::array();
  for (const auto& d : c.data_flow_constraints) {
    json x = {{"callee", d.callee}, {"role", d.role}, {"site", loc_json(d.site)}, {"code", d.code}};
    x["definition"] = d.definition ? loc_json(*d.definition) : json(nullptr);
    x["inner_calls"] = d.inner_calls;
    j["data_flow_constraints"].push_back(std::move(x));
  }
  j["control_flow_constraints"] = json::array();
  for (const auto& g : c.control_flow_constraints) j["control_flow_constraints"].push_back(guard_json(g));
  const auto& s = c.syntax_constraints;
  j["syntax_constraints"] = {{"descriptor", s.descriptor}, {"description", s.description}, {"tag", s.tag},
                             {"attribute", s.attribute},   {"prefix", s.prefix},           {"suffix", s.suffix},
                             {"location", loc_json(s.location)}};
  j["facts"] = json::array();
  for (const auto& f : c.facts)
    j["facts"].push_back({{"kind", f.kind}, {"location", loc_json(f.location)}, {"value", f.value}, {"code", f.code}});
  j["code_slices"] = slices_json(c.code_slices);
  return j;
}

json to_json(const NavigationContext& n) {
  json j;
  j["granularity"] = to_string(n.granularity);
  j["file_navigation_chain"] = n.file_navigation_chain;
  j["navigation_code"] = json::array();
  for (const auto& h : n.file_navigation_code)
    j["navigation_code"].push_back(
        {{"from", h.from}, {"to", h.to}, {"kind", h.kind}, {"location", loc_json(h.location)}, {"code", h.code}});
  j["path_constraint_code"] = json::array();
  for (const auto& g : n.path_constraint_code) j["path_constraint_code"].push_back(guard_json(g));
  j["path_constraints"] = json::array();
  for (const auto& c : n.path_constraint_values)
    j["path_constraints"].push_back({{"superglobal", c.superglobal},
                                     {"key", c.key},
                                     {"op", c.op},
                                     {"value", c.value},
                                     {"location", loc_json(c.location)}});
  j["entry_url"] = n.entry_url;
  j["code_slices"] = slices_json(n.code_slices);
  return j;
}

json context_document(const VulnerabilityContext& vuln, const NavigationContext& nav) {
  return {{"vulnerability", to_json(vuln)}, {"navigation", to_json(nav)}};
}

}  // namespace pocgen::context
