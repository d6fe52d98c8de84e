#include "dataflow.hpp"

#include <algorithm>
#include <cctype>

namespace pocgen::context::detail {

using php::Block;
using php::Expr;
using php::ExprKind;
using php::LiteralType;
using php::Node;
using php::NodeKind;
using php::ProgramModel;
using php::Stmt;

// ---------------------------------------------------------------------------
// reaching definitions

namespace {

using State = std::map<std::string, std::set<Gid>>;
using Facts = std::map<std::pair<Gid, std::string>, std::set<Gid>>;

void join_into(State& a, const State& b) {
  for (const auto& [k, v] : b) a[k].insert(v.begin(), v.end());
}

class Analyzer {
 public:
  Analyzer(const ProgramModel& m, Facts& facts) : m_(m), facts_(facts) {}

  std::optional<State> block(int u, const Block& b, State st) {
    for (const auto& n : b) {
      auto r = node(u, *n, std::move(st));
      if (!r) return std::nullopt;
      st = std::move(*r);
    }
    return st;
  }

  std::vector<int> stack;

 private:
  const ProgramModel& m_;
  Facts& facts_;

  bool tracked(const std::string& name) const { return !name.empty() && !m_.config->is_superglobal(name); }

  void use_and_def(int u, const Stmt& s, State& st) {
    Gid g{u, s.index};
    for (const auto& r : s.reads) {
      if (!tracked(r.name)) continue;
      auto& f = facts_[{g, r.name}];
      auto it = st.find(r.name);
      if (it != st.end()) f.insert(it->second.begin(), it->second.end());
    }
    for (const auto& w : s.writes) {
      if (!tracked(w.name)) continue;
      if (w.partial)
        st[w.name].insert(g);
      else
        st[w.name] = {g};
    }
  }

  std::optional<State> loop(int u, const Stmt& s, const Block& body, State st) {
    use_and_def(u, s, st);
    for (int round = 0; round < 2; ++round) {
      auto r = block(u, body, st);
      if (r) join_into(st, *r);
      use_and_def(u, s, st);
    }
    return st;
  }

  std::optional<State> node(int u, const Node& n, State st) {
    const auto& unit = m_.units[static_cast<std::size_t>(u)];
    const Stmt* s = unit.stmt_for(&n);
    switch (n.kind) {
      case NodeKind::Function:
      case NodeKind::InlineHtml:
        return st;
      case NodeKind::If:
      case NodeKind::Switch: {
        use_and_def(u, *s, st);
        bool fallthrough = n.kind == NodeKind::If ? !n.has_else
                                                  : std::none_of(n.exprs.begin() + 1, n.exprs.end(),
                                                                 [](const php::ExprPtr& e) { return e == nullptr; });
        State out;
        bool any = false;
        for (const auto& body : n.bodies) {
          if (auto r = block(u, body, st)) {
            join_into(out, *r);
            any = true;
          }
        }
        if (fallthrough) {
          join_into(out, st);
          any = true;
        }
        if (!any) return std::nullopt;
        return out;
      }
      case NodeKind::While:
      case NodeKind::For:
      case NodeKind::Foreach:
      case NodeKind::DoWhile:
        return loop(u, *s, n.bodies[0], std::move(st));
      default:
        break;
    }
    if (!s) return st;
    use_and_def(u, *s, st);
    if (s->kind == php::StmtKind::Include) {
      const php::Edge* e = m_.edge_at(unit.path, s->index);
      if (e && !e->to.empty()) {
        int t = static_cast<int>(*m_.unit_index(e->to));
        if (std::find(stack.begin(), stack.end(), t) == stack.end()) {
          stack.push_back(t);
          auto r = block(t, m_.units[static_cast<std::size_t>(t)].ast->statements, std::move(st));
          stack.pop_back();
          return r;
        }
      }
    }
    if (s->terminates) return std::nullopt;
    return st;
  }
};

const std::set<Gid>& empty_set() {
  static const std::set<Gid> e;
  return e;
}

}  // namespace

DefUse::DefUse(const ProgramModel& model) : model_(model) {
  by_entry_.resize(model.units.size());
  for (std::size_t u = 0; u < model.units.size(); ++u) {
    Analyzer a(model, by_entry_[u]);
    a.stack = {static_cast<int>(u)};
    a.block(static_cast<int>(u), model.units[u].ast->statements, {});
  }
  for (std::size_t u = 0; u < model.units.size(); ++u) {
    for (const auto& [key, def] : model.units[u].functions) {
      State st;
      for (const auto& p : def.params) st[p] = {Gid{static_cast<int>(u), def.decl}};
      Analyzer a(model, functions_);
      a.stack = {static_cast<int>(u)};
      a.block(static_cast<int>(u), def.node->bodies[0], st);
    }
  }
  for (const auto& f : by_entry_)
    for (const auto& [k, v] : f) all_[k].insert(v.begin(), v.end());
  for (const auto& [k, v] : functions_) all_[k].insert(v.begin(), v.end());
  link_globals();
  for (const auto& [k, defs] : all_)
    for (const Gid& d : defs) uses_[{d, k.second}].push_back(k.first);
  for (auto& [k, v] : uses_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

void DefUse::link_globals() {
  for (std::size_t u = 0; u < model_.units.size(); ++u) {
    for (const auto& s : model_.units[u].statements) {
      if (s.function.empty() || s.node->kind != NodeKind::Global) continue;
      Gid g{static_cast<int>(u), s.index};
      for (const auto& name : s.node->names) {
        for (std::size_t v = 0; v < model_.units.size(); ++v) {
          for (const auto& d : model_.units[v].statements) {
            if (!d.function.empty()) continue;
            bool writes = std::any_of(d.writes.begin(), d.writes.end(), [&](const php::VarRef& w) { return w.name == name; });
            if (!writes) continue;
            Gid dg{static_cast<int>(v), d.index};
            all_[{g, name}].insert(dg);
            functions_[{g, name}].insert(dg);
          }
        }
      }
    }
  }
}

const std::set<Gid>& DefUse::defs(Gid use, const std::string& var) const {
  auto it = all_.find({use, var});
  return it == all_.end() ? empty_set() : it->second;
}

const std::set<Gid>& DefUse::defs_in(int entry, Gid use, const std::string& var) const {
  const auto& s = model_.units[static_cast<std::size_t>(use.unit)].statements[static_cast<std::size_t>(use.stmt)];
  const Facts& f = s.function.empty() ? by_entry_[static_cast<std::size_t>(entry)] : functions_;
  auto it = f.find({use, var});
  return it == f.end() ? empty_set() : it->second;
}

const std::vector<Gid>& DefUse::uses(Gid def, const std::string& var) const {
  static const std::vector<Gid> none;
  auto it = uses_.find({def, var});
  return it == uses_.end() ? none : it->second;
}

// ---------------------------------------------------------------------------
// guards

bool block_terminates(const Block& b) {
  if (b.empty()) return false;
  const Node& last = *b.back();
  if (last.kind == NodeKind::Return) return true;
  if (last.kind == NodeKind::ExprStmt && !last.exprs.empty() && last.exprs[0]->kind == ExprKind::Exit) return true;
  if (last.kind == NodeKind::If && last.has_else)
    return std::all_of(last.bodies.begin(), last.bodies.end(), [](const Block& x) { return block_terminates(x); });
  return false;
}

namespace {

/// Conditions selecting branch `b` of an if/elseif/else chain.
std::vector<Cond> branch_conds(const Node& n, std::size_t b) {
  std::vector<Cond> out;
  for (std::size_t i = 0; i < n.exprs.size() && i <= b; ++i) {
    Cond c;
    c.expr = n.exprs[i].get();
    c.positive = i == b;
    out.push_back(c);
  }
  return out;
}

std::optional<GuardInfo> early_exit(Gid g, const Stmt& s) {
  const Node& n = *s.node;
  GuardInfo gi;
  gi.stmt = g;
  gi.effect = "early-exit";
  if (s.terminates) {
    Cond c;
    c.constant = false;
    gi.conds.push_back(c);
    return gi;
  }
  if (n.kind != NodeKind::If) return std::nullopt;
  std::vector<std::size_t> open;
  bool any_exit = false;
  for (std::size_t i = 0; i < n.bodies.size(); ++i) {
    if (block_terminates(n.bodies[i]))
      any_exit = true;
    else
      open.push_back(i);
  }
  if (!n.has_else) open.push_back(n.exprs.size());
  if (!any_exit) return std::nullopt;
  if (open.empty()) {
    Cond c;
    c.constant = false;
    gi.conds.push_back(c);
    return gi;
  }
  if (open.size() != 1) return std::nullopt;
  gi.conds = branch_conds(n, open[0]);
  return gi;
}

std::optional<GuardInfo> enclosing(Gid g, const Stmt& s, int branch) {
  const Node& n = *s.node;
  GuardInfo gi;
  gi.stmt = g;
  gi.effect = "enclosing";
  auto b = static_cast<std::size_t>(branch);
  switch (n.kind) {
    case NodeKind::If:
      gi.conds = branch_conds(n, b);
      break;
    case NodeKind::Switch: {
      Cond c;
      c.subject = n.exprs[0].get();
      c.case_value = n.exprs[b + 1].get();
      if (!c.case_value)
        for (std::size_t i = 1; i < n.exprs.size(); ++i)
          if (n.exprs[i]) c.other_cases.push_back(n.exprs[i].get());
      gi.conds.push_back(c);
      break;
    }
    case NodeKind::While: {
      Cond c;
      c.expr = n.exprs[0].get();
      gi.conds.push_back(c);
      break;
    }
    case NodeKind::For:
      for (int i = n.for_init; i < n.for_init + n.for_cond; ++i) {
        Cond c;
        c.expr = n.exprs[static_cast<std::size_t>(i)].get();
        gi.conds.push_back(c);
      }
      break;
    default:
      return std::nullopt;
  }
  if (gi.conds.empty()) return std::nullopt;
  return gi;
}

}  // namespace

std::vector<GuardInfo> guards_for(const ProgramModel& model, int unit, int stmt) {
  const auto& stmts = model.units[static_cast<std::size_t>(unit)].statements;
  std::vector<int> chain{stmt};
  int p = stmts[static_cast<std::size_t>(stmt)].parent;
  while (p >= 0 && stmts[static_cast<std::size_t>(p)].node->kind != NodeKind::Function) {
    chain.push_back(p);
    p = stmts[static_cast<std::size_t>(p)].parent;
  }
  std::reverse(chain.begin(), chain.end());
  std::vector<GuardInfo> out;
  for (std::size_t j = 0; j < chain.size(); ++j) {
    const Stmt& cur = stmts[static_cast<std::size_t>(chain[j])];
    for (int k = std::max(cur.parent + 1, 0); k < cur.index; ++k) {
      const Stmt& sib = stmts[static_cast<std::size_t>(k)];
      if (sib.parent != cur.parent || sib.branch != cur.branch) continue;
      if (auto g = early_exit({unit, k}, sib)) out.push_back(std::move(*g));
    }
    if (j + 1 < chain.size()) {
      const Stmt& inner = stmts[static_cast<std::size_t>(chain[j + 1])];
      if (auto g = enclosing({unit, cur.index}, cur, inner.branch)) out.push_back(std::move(*g));
    }
  }
  return out;
}

std::vector<GuardInfo> top_level_exits(const ProgramModel& model, int unit) {
  std::vector<GuardInfo> out;
  for (const auto& s : model.units[static_cast<std::size_t>(unit)].statements) {
    if (s.parent != -1 || s.terminates) continue;
    if (auto g = early_exit({unit, s.index}, s)) out.push_back(std::move(*g));
  }
  return out;
}

std::string cond_text(const ProgramModel& model, int unit, const Cond& c) {
  const std::string& src = model.units[static_cast<std::size_t>(unit)].source();
  if (c.constant) return *c.constant ? "true" : "false";
  if (c.subject) {
    std::string subj = php::slice(src, c.subject->span);
    if (c.case_value) return subj + " == " + php::slice(src, c.case_value->span);
    std::vector<std::string> parts;
    for (const Expr* e : c.other_cases) parts.push_back(subj + " != " + php::slice(src, e->span));
    return parts.empty() ? "true" : text::join(parts, " && ");
  }
  std::string t = php::slice(src, c.expr->span);
  return c.positive ? t : "!(" + t + ")";
}

// ---------------------------------------------------------------------------
// formulas

namespace {

constexpr std::size_t kMaxTerms = 256;

}  // namespace

Dnf Dnf::truth(bool v) {
  Dnf d;
  if (v) d.terms.emplace_back();
  return d;
}

Dnf dnf_and(const Dnf& a, const Dnf& b) {
  Dnf out;
  for (const auto& x : a.terms)
    for (const auto& y : b.terms) {
      if (out.terms.size() >= kMaxTerms) return out;
      Conj c = x;
      c.insert(c.end(), y.begin(), y.end());
      out.terms.push_back(std::move(c));
    }
  return out;
}

Dnf dnf_or(const Dnf& a, const Dnf& b) {
  Dnf out = a;
  for (const auto& y : b.terms) {
    if (out.terms.size() >= kMaxTerms) break;
    out.terms.push_back(y);
  }
  return out;
}

namespace {

bool falsy_value(const std::string& v) { return v.empty() || v == "0"; }

}  // namespace

std::optional<std::vector<Requirement>> solve(const Conj& conj) {
  struct Acc {
    std::set<std::string> eq, neq;
    bool set = false, unset = false, nonempty = false, empty = false;
    int guard = -1;
  };
  std::map<std::pair<std::string, std::string>, Acc> by_key;
  for (const auto& a : conj) {
    Acc& acc = by_key[{a.superglobal, a.key}];
    if (acc.guard < 0 || (a.guard >= 0 && a.guard < acc.guard)) acc.guard = a.guard;
    switch (a.op) {
      case Atom::Op::Set: acc.set = true; break;
      case Atom::Op::Unset: acc.unset = true; break;
      case Atom::Op::Eq: acc.eq.insert(a.value); break;
      case Atom::Op::Neq: acc.neq.insert(a.value); break;
      case Atom::Op::NonEmpty: acc.nonempty = true; break;
      case Atom::Op::Empty: acc.empty = true; break;
    }
  }
  std::vector<Requirement> out;
  for (const auto& [key, acc] : by_key) {
    Requirement r;
    r.superglobal = key.first;
    r.key = key.second;
    r.guard = acc.guard;
    if (acc.eq.size() > 1) return std::nullopt;
    if (acc.eq.size() == 1) {
      const std::string& v = *acc.eq.begin();
      if (acc.neq.count(v)) return std::nullopt;
      if (acc.unset && !v.empty()) return std::nullopt;
      if (acc.nonempty && falsy_value(v)) return std::nullopt;
      if (acc.empty && !falsy_value(v)) return std::nullopt;
      if (acc.unset) continue;
      r.op = "==";
      r.value = v;
      out.push_back(r);
      continue;
    }
    if (acc.unset) {
      if (acc.set || acc.nonempty || acc.neq.count("")) return std::nullopt;
      continue;
    }
    if (acc.nonempty || acc.neq.count("")) {
      if (acc.empty) return std::nullopt;
      r.op = "non-empty";
      out.push_back(r);
    } else if (acc.set) {
      r.op = "isset";
      out.push_back(r);
    } else {
      continue;
    }
    for (const auto& v : acc.neq) {
      if (v.empty()) continue;
      Requirement n = r;
      n.op = "!=";
      n.value = v;
      out.push_back(n);
    }
  }
  return out;
}

std::optional<std::vector<Requirement>> best_solution(const Dnf& dnf) {
  std::optional<std::vector<Requirement>> best;
  std::size_t best_cost = 0;
  for (const auto& t : dnf.terms) {
    auto s = solve(t);
    if (!s) continue;
    std::size_t cost = static_cast<std::size_t>(std::count_if(s->begin(), s->end(), [](const Requirement& r) { return r.op != "!="; }));
    if (!best || cost < best_cost) {
      best = std::move(s);
      best_cost = cost;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// symbolic terms

struct Evaluator::Term {
  enum class Kind { Lit, Null, Req, Derived, Ite, Array, Opaque };
  Kind kind = Kind::Opaque;
  std::string value;     // Lit
  bool boolean = false;  // Lit from true/false
  std::string sg, key;   // Req
  TermPtr base;          // Derived: the Req it derives from
  std::string fn;        // Derived transform
  const Expr* cond = nullptr;
  Env env{};  // Ite condition context
  TermPtr a, b;
  std::vector<TermPtr> items;
  std::string text;  // Opaque: source text for diagnostics
};

namespace {

const std::set<std::string>& invertible_transforms() {
  static const std::set<std::string> t = {"trim", "ltrim", "rtrim", "strtolower", "strtoupper", "urldecode",
                                          "rawurldecode", "stripslashes", "htmlspecialchars", "htmlentities",
                                          "strip_tags", "addslashes", "basename", "cast", "strval"};
  return t;
}

bool numeric(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  bool digit = false, dot = false;
  for (; i < s.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(s[i])))
      digit = true;
    else if (s[i] == '.' && !dot)
      dot = true;
    else
      return false;
  }
  return digit;
}

bool loose_equal(const std::string& a, const std::string& b) {
  if (numeric(a) && numeric(b)) return std::stod(a) == std::stod(b);
  return a == b;
}

}  // namespace

Evaluator::Evaluator(const ProgramModel& model, const DefUse& du) : model_(model), du_(du) {}

std::string Evaluator::text_of(const Expr& e, const Env& env) const {
  return php::slice(model_.units[static_cast<std::size_t>(env.at.unit)].source(), e.span);
}

Evaluator::TermPtr Evaluator::variable(const std::string& name, const Env& env) const {
  auto opaque = [&] {
    auto t = std::make_shared<Term>();
    t->text = "$" + name;
    return TermPtr(t);
  };
  if (env.depth > 12) return opaque();
  const auto& defs = du_.defs_in(env.entry, env.at, name);
  if (defs.empty()) {
    auto t = std::make_shared<Term>();
    t->kind = Term::Kind::Null;
    return t;
  }
  std::vector<TermPtr> values;
  for (const Gid& d : defs) {
    const Stmt& s = model_.units[static_cast<std::size_t>(d.unit)].statements[static_cast<std::size_t>(d.stmt)];
    const Node& n = *s.node;
    if (n.kind != NodeKind::ExprStmt) return opaque();
    const Expr& top = *n.exprs[0];
    if (top.kind != ExprKind::Assign || top.text != "=" || top.kids[0]->kind != ExprKind::Variable ||
        top.kids[0]->text != name)
      return opaque();
    values.push_back(term(*top.kids[1], Env{env.entry, d, env.depth + 1}));
  }
  if (values.size() == 1) return values[0];
  for (const auto& v : values)
    if (v->kind != Term::Kind::Lit || v->value != values[0]->value || v->boolean != values[0]->boolean) return opaque();
  return values[0];
}

Evaluator::TermPtr Evaluator::term(const Expr& e, const Env& env) const {
  auto t = std::make_shared<Term>();
  t->text = text_of(e, env);
  switch (e.kind) {
    case ExprKind::Literal:
      if (e.lit == LiteralType::Null) {
        t->kind = Term::Kind::Null;
      } else if (e.lit == LiteralType::Bool) {
        t->kind = Term::Kind::Lit;
        t->boolean = true;
        t->value = text::to_lower(e.text) == "true" ? "1" : "";
      } else {
        t->kind = Term::Kind::Lit;
        t->value = e.text;
      }
      return t;
    case ExprKind::Interpolated:
    case ExprKind::Binary:
      if (e.kind == ExprKind::Interpolated || e.text == ".") {
        if (auto f = php::fold_constant_string(e)) {
          t->kind = Term::Kind::Lit;
          t->value = *f;
        }
      }
      return t;
    case ExprKind::Variable:
      if (model_.config->is_superglobal(e.text)) return t;
      return variable(e.text, env);
    case ExprKind::Index: {
      const Expr* root = &e;
      std::vector<const Expr*> idx;
      while (root->kind == ExprKind::Index) {
        idx.push_back(root->kids.size() > 1 ? root->kids[1].get() : nullptr);
        root = root->kids[0].get();
      }
      std::reverse(idx.begin(), idx.end());
      if (root->kind == ExprKind::Variable && model_.config->is_superglobal(root->text) && !idx.empty() && idx[0]) {
        if (auto k = php::fold_constant_string(*idx[0]); k && model_.config->is_request_input(root->text, *k)) {
          t->kind = Term::Kind::Req;
          t->sg = root->text;
          t->key = *k;
        }
      }
      return t;
    }
    case ExprKind::Ternary: {
      t->kind = Term::Kind::Ite;
      t->cond = e.kids[0].get();
      t->env = env;
      t->a = e.kids[1] ? term(*e.kids[1], env) : term(*e.kids[0], env);
      t->b = term(*e.kids[2], env);
      return t;
    }
    case ExprKind::Call:
    case ExprKind::Cast: {
      std::string fn = e.kind == ExprKind::Cast ? "cast" : text::to_lower(e.text);
      if (e.kids.empty() || !e.kids[0]) return t;
      if (e.kind == ExprKind::Call && !invertible_transforms().count(fn) && fn != "intval") return t;
      TermPtr arg = term(*e.kids[0], env);
      if (arg->kind == Term::Kind::Lit) {
        t->kind = Term::Kind::Lit;
        t->value = arg->value;
        if (fn == "trim") t->value = text::trim(arg->value);
        if (fn == "strtolower") t->value = text::to_lower(arg->value);
        return t;
      }
      if (arg->kind == Term::Kind::Req || arg->kind == Term::Kind::Derived) {
        t->kind = Term::Kind::Derived;
        t->base = arg->kind == Term::Kind::Req ? arg : arg->base;
        t->fn = arg->kind == Term::Kind::Derived && !invertible_transforms().count(arg->fn) ? arg->fn : fn;
      }
      return t;
    }
    case ExprKind::Array:
      t->kind = Term::Kind::Array;
      for (const auto& k : e.kids)
        if (k) t->items.push_back(term(*k, env));
      return t;
    default:
      return t;
  }
}

Dnf Evaluator::is_set(const TermPtr& t, bool positive, int index) const {
  switch (t->kind) {
    case Term::Kind::Lit:
    case Term::Kind::Array:
      return Dnf::truth(positive);
    case Term::Kind::Null:
      return Dnf::truth(!positive);
    case Term::Kind::Req:
    case Term::Kind::Derived: {
      const Term& r = t->kind == Term::Kind::Req ? *t : *t->base;
      Atom a{r.sg, r.key, positive ? Atom::Op::Set : Atom::Op::Unset, "", index};
      Dnf d;
      d.terms.push_back({a});
      return d;
    }
    case Term::Kind::Ite: {
      std::vector<std::string> ignored;
      Dnf c = formula(*t->cond, true, t->env, index, ignored);
      Dnf nc = formula(*t->cond, false, t->env, index, ignored);
      return dnf_or(dnf_and(c, is_set(t->a, positive, index)), dnf_and(nc, is_set(t->b, positive, index)));
    }
    case Term::Kind::Opaque:
      break;
  }
  return Dnf::truth(false);
}

Dnf Evaluator::truthy(const TermPtr& t, bool positive, const Env& env, int index, std::vector<std::string>& unknown) const {
  switch (t->kind) {
    case Term::Kind::Lit:
      return Dnf::truth(falsy_value(t->value) != positive);
    case Term::Kind::Null:
      return Dnf::truth(!positive);
    case Term::Kind::Array:
      return Dnf::truth(t->items.empty() != positive);
    case Term::Kind::Req:
    case Term::Kind::Derived: {
      const Term& r = t->kind == Term::Kind::Req ? *t : *t->base;
      Atom a{r.sg, r.key, positive ? Atom::Op::NonEmpty : Atom::Op::Empty, "", index};
      Dnf d;
      d.terms.push_back({a});
      return d;
    }
    case Term::Kind::Ite: {
      Dnf c = formula(*t->cond, true, t->env, index, unknown);
      Dnf nc = formula(*t->cond, false, t->env, index, unknown);
      return dnf_or(dnf_and(c, truthy(t->a, positive, env, index, unknown)),
                    dnf_and(nc, truthy(t->b, positive, env, index, unknown)));
    }
    case Term::Kind::Opaque:
      break;
  }
  unknown.push_back(t->text);
  return Dnf::truth(false);
}

Dnf Evaluator::is_empty(const TermPtr& t, bool positive, const Env& env, int index, std::vector<std::string>& unknown) const {
  return truthy(t, !positive, env, index, unknown);
}

Dnf Evaluator::equals(const TermPtr& x, const TermPtr& y, bool positive, const Env& env, int index,
                      std::vector<std::string>& unknown) const {
  TermPtr a = x, b = y;
  if (a->kind == Term::Kind::Lit && b->kind != Term::Kind::Lit) std::swap(a, b);
  if (b->kind == Term::Kind::Lit && b->boolean && a->kind != Term::Kind::Lit)
    return truthy(a, positive == !b->value.empty(), env, index, unknown);
  if (a->kind == Term::Kind::Ite) {
    Dnf c = formula(*a->cond, true, a->env, index, unknown);
    Dnf nc = formula(*a->cond, false, a->env, index, unknown);
    return dnf_or(dnf_and(c, equals(a->a, b, positive, env, index, unknown)),
                  dnf_and(nc, equals(a->b, b, positive, env, index, unknown)));
  }
  if (a->kind == Term::Kind::Lit && b->kind == Term::Kind::Lit) {
    bool eq = a->boolean || b->boolean ? falsy_value(a->value) == falsy_value(b->value) : loose_equal(a->value, b->value);
    return Dnf::truth(eq == positive);
  }
  if (a->kind == Term::Kind::Null && b->kind == Term::Kind::Null) return Dnf::truth(positive);
  if (a->kind == Term::Kind::Null && b->kind == Term::Kind::Lit) return Dnf::truth((b->value.empty()) == positive);
  if (b->kind == Term::Kind::Null && a->kind == Term::Kind::Lit) return Dnf::truth((a->value.empty()) == positive);
  if (b->kind == Term::Kind::Lit && (a->kind == Term::Kind::Req || a->kind == Term::Kind::Derived)) {
    if (a->kind == Term::Kind::Derived && !invertible_transforms().count(a->fn) &&
        !(a->fn == "intval" && numeric(b->value))) {
      unknown.push_back(a->text);
      return Dnf::truth(false);
    }
    const Term& r = a->kind == Term::Kind::Req ? *a : *a->base;
    Atom at{r.sg, r.key, positive ? Atom::Op::Eq : Atom::Op::Neq, b->value, index};
    Dnf d;
    d.terms.push_back({at});
    return d;
  }
  unknown.push_back(a->text + " == " + b->text);
  return Dnf::truth(false);
}

Dnf Evaluator::formula(const Expr& e, bool positive, const Env& env, int index, std::vector<std::string>& unknown) const {
  if (e.kind == ExprKind::Unary && e.text == "!") return formula(*e.kids[0], !positive, env, index, unknown);
  if (e.kind == ExprKind::Binary) {
    const std::string& op = e.text;
    bool is_and = op == "&&" || text::to_lower(op) == "and";
    bool is_or = op == "||" || text::to_lower(op) == "or";
    if (is_and || is_or) {
      Dnf l = formula(*e.kids[0], positive, env, index, unknown);
      Dnf r = formula(*e.kids[1], positive, env, index, unknown);
      return (is_and == positive) ? dnf_and(l, r) : dnf_or(l, r);
    }
    if (op == "==" || op == "===")
      return equals(term(*e.kids[0], env), term(*e.kids[1], env), positive, env, index, unknown);
    if (op == "!=" || op == "!==" || op == "<>")
      return equals(term(*e.kids[0], env), term(*e.kids[1], env), !positive, env, index, unknown);
    if (op == ">" || op == ">=" || op == "<" || op == "<=") {
      const Expr* call = e.kids[0].get();
      const Expr* lit = e.kids[1].get();
      std::string o = op;
      if (call->kind == ExprKind::Literal) {
        std::swap(call, lit);
        o = o == ">" ? "<" : o == "<" ? ">" : o == ">=" ? "<=" : ">=";
      }
      if (call->kind == ExprKind::Call && lit->kind == ExprKind::Literal && !call->kids.empty() &&
          (text::to_lower(call->text) == "strlen" || text::to_lower(call->text) == "count")) {
        bool nonempty_test = (o == ">" && lit->text == "0") || (o == ">=" && lit->text == "1");
        bool empty_test = (o == "<" && lit->text == "1") || (o == "<=" && lit->text == "0");
        if (nonempty_test || empty_test)
          return truthy(term(*call->kids[0], env), nonempty_test == positive, env, index, unknown);
      }
      unknown.push_back(text_of(e, env));
      return Dnf::truth(false);
    }
  }
  if (e.kind == ExprKind::Isset) {
    Dnf out = Dnf::truth(positive);
    for (const auto& k : e.kids) {
      Dnf one = is_set(term(*k, env), positive, index);
      out = positive ? dnf_and(out, one) : dnf_or(out, one);
    }
    return out;
  }
  if (e.kind == ExprKind::Empty) return is_empty(term(*e.kids[0], env), positive, env, index, unknown);
  if (e.kind == ExprKind::Call && !e.kids.empty()) {
    std::string fn = text::to_lower(e.text);
    if (fn == "in_array" && e.kids.size() >= 2) {
      TermPtr hay = term(*e.kids[1], env);
      if (hay->kind == Term::Kind::Array) {
        TermPtr needle = term(*e.kids[0], env);
        Dnf out = Dnf::truth(!positive);
        for (const auto& item : hay->items) {
          Dnf one = equals(needle, item, positive, env, index, unknown);
          out = positive ? dnf_or(out, one) : dnf_and(out, one);
        }
        return out;
      }
    }
    if (fn == "strlen" || fn == "count") return truthy(term(*e.kids[0], env), positive, env, index, unknown);
  }
  return truthy(term(e, env), positive, env, index, unknown);
}

Dnf Evaluator::guard_formula(int entry, const GuardInfo& guard, int index, std::vector<std::string>& unknown) const {
  Env env{entry, guard.stmt, 0};
  Dnf out = Dnf::truth(true);
  for (const Cond& c : guard.conds) {
    if (c.constant) {
      out = dnf_and(out, Dnf::truth(*c.constant));
      continue;
    }
    if (c.subject) {
      TermPtr subj = term(*c.subject, env);
      if (c.case_value) {
        out = dnf_and(out, equals(subj, term(*c.case_value, env), true, env, index, unknown));
      } else {
        for (const Expr* v : c.other_cases) out = dnf_and(out, equals(subj, term(*v, env), false, env, index, unknown));
      }
      continue;
    }
    out = dnf_and(out, formula(*c.expr, c.positive, env, index, unknown));
  }
  return out;
}

}  // namespace pocgen::context::detail
