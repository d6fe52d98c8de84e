#include "pocgen/php_model.hpp"

#include <algorithm>
#include <cctype>
#include <functional>

#include "pocgen/data.hpp"

namespace pocgen::php {

using nlohmann::json;

// ---------------------------------------------------------------------------
// whitelist

namespace {

std::set<std::string> lower_set(const json& arr) {
  std::set<std::string> out;
  for (const auto& v : arr) out.insert(text::to_lower(v.get<std::string>()));
  return out;
}

}  // namespace

SinkConfig SinkConfig::from_json(const json& doc) {
  SinkConfig cfg;
  for (const auto& v : doc.at("superglobals")) cfg.superglobals.insert(v.get<std::string>());
  for (const auto& v : doc.at("request_sources")) cfg.request_sources.insert(v.get<std::string>());
  for (const auto& v : doc.value("request_server_keys", json::array()))
    cfg.request_server_keys.insert(v.get<std::string>());
  for (const auto& [name, body] : doc.at("cwe").items()) {
    auto cwe = parse_cwe(name);
    if (!cwe) throw Error("sink config: unknown class " + name);
    Class c;
    c.sinks = lower_set(body.value("sinks", json::array()));
    c.method_sinks = lower_set(body.value("method_sinks", json::array()));
    c.sanitizers = lower_set(body.value("sanitizers", json::array()));
    for (const auto& g : body.value("semantic_sinks", json::array())) c.semantic_sinks.push_back(g.get<std::string>());
    c.protections = lower_set(body.value("protections", json::array()));
    const json sink_args = body.value("sink_args", json::object());
    for (const auto& [fn, idx] : sink_args.items())
      c.sink_args[text::to_lower(fn)] = idx.get<std::vector<int>>();
    cfg.classes[*cwe] = std::move(c);
  }
  for (Cwe cwe : kAllCwes)
    if (!cfg.classes.count(cwe)) throw Error("sink config: missing class " + to_string(cwe));
  cfg.filters = lower_set(doc.value("filters", json::array()));
  const json by_ref = doc.value("by_ref_outputs", json::object());
  for (const auto& [name, idx] : by_ref.items())
    cfg.by_ref_outputs[text::to_lower(name)] = idx.get<std::vector<int>>();
  return cfg;
}

const SinkConfig::Class& SinkConfig::of(Cwe cwe) const { return classes.at(cwe); }

bool SinkConfig::is_request_input(std::string_view name, std::string_view key) const {
  if (request_sources.count(std::string(name))) return true;
  return name == "_SERVER" && request_server_keys.count(std::string(key));
}

const SinkConfig& default_sink_config() {
  static const SinkConfig cfg = SinkConfig::from_json(json::parse(data::get("sinks.json")));
  return cfg;
}

std::string to_string(StmtKind kind) {
  switch (kind) {
    case StmtKind::Assign: return "Assign";
    case StmtKind::Echo: return "Echo";
    case StmtKind::Call: return "Call";
    case StmtKind::Include: return "Include";
    case StmtKind::Redirect: return "Redirect";
    case StmtKind::If: return "If";
    case StmtKind::Loop: return "Loop";
    case StmtKind::Return: return "Return";
    case StmtKind::SqlExec: return "SqlExec";
    case StmtKind::SysExec: return "SysExec";
    case StmtKind::FileMove: return "FileMove";
    case StmtKind::Exit: return "Exit";
    case StmtKind::Html: return "Html";
    case StmtKind::Other: return "Other";
  }
  return "Other";
}

std::string VarRef::display() const {
  std::string out = "$" + name;
  if (superglobal_key) {
    out += *superglobal_key == "*" ? "[*]" : "['" + *superglobal_key + "']";
    if (subkey) out += "['" + *subkey + "']";
  }
  return out;
}

// ---------------------------------------------------------------------------
// expression helpers

namespace {

const Expr* chain_root(const Expr& e, std::vector<const Expr*>* indices) {
  const Expr* cur = &e;
  std::vector<const Expr*> idx;
  while (cur->kind == ExprKind::Index || cur->kind == ExprKind::Property) {
    if (cur->kind == ExprKind::Index) idx.push_back(cur->kids.size() > 1 ? cur->kids[1].get() : nullptr);
    cur = cur->kids[0].get();
  }
  std::reverse(idx.begin(), idx.end());
  if (indices) *indices = std::move(idx);
  return cur;
}

class ExprScanner {
 public:
  explicit ExprScanner(const SinkConfig& cfg) : cfg_(cfg) {}

  VarRef ref_for(const Expr& lvalue, bool partial) const {
    std::vector<const Expr*> idx;
    const Expr* root = chain_root(lvalue, &idx);
    VarRef r;
    r.name = root->kind == ExprKind::Variable ? root->text : "";
    r.partial = partial;
    if (cfg_.is_superglobal(r.name)) {
      r.superglobal_key = "*";
      if (!idx.empty() && idx[0]) {
        if (auto k = fold_constant_string(*idx[0])) r.superglobal_key = *k;
      }
      if (idx.size() > 1 && idx[1]) {
        if (auto k = fold_constant_string(*idx[1])) r.subkey = *k;
      }
    }
    return r;
  }

  void reads(const Expr& e, std::vector<VarRef>& out) const {
    switch (e.kind) {
      case ExprKind::Variable:
        if (e.text != "this") out.push_back(ref_for(e, false));
        return;
      case ExprKind::Index:
      case ExprKind::Property: {
        std::vector<const Expr*> idx;
        const Expr* root = chain_root(e, &idx);
        if (root->kind == ExprKind::Variable) {
          if (root->text != "this") out.push_back(ref_for(e, false));
        } else {
          reads(*root, out);
        }
        for (const Expr* i : idx)
          if (i) reads(*i, out);
        return;
      }
      case ExprKind::Assign: {
        const Expr& target = *e.kids[0];
        if (e.text != "=") {
          reads(target, out);
        } else if (target.kind == ExprKind::Index || target.kind == ExprKind::Property) {
          std::vector<const Expr*> idx;
          chain_root(target, &idx);
          for (const Expr* i : idx)
            if (i) reads(*i, out);
        }
        reads(*e.kids[1], out);
        return;
      }
      default:
        for (const auto& k : e.kids)
          if (k) reads(*k, out);
        for (const auto& k : e.keys)
          if (k) reads(*k, out);
    }
  }

  void writes(const Expr& e, std::vector<VarRef>& out) const {
    walk(e, [&](const Expr& x) {
      if (x.kind == ExprKind::Assign) {
        const Expr& t = *x.kids[0];
        if (t.kind == ExprKind::Opaque && t.text == "list") {
          for (const auto& k : t.kids)
            if (k) lvalue_write(*k, out);
        } else if (t.kind == ExprKind::Array) {
          for (const auto& k : t.kids)
            if (k) lvalue_write(*k, out);
        } else {
          lvalue_write(t, out);
        }
      } else if (x.kind == ExprKind::IncDec) {
        lvalue_write(*x.kids[0], out);
      } else if (x.kind == ExprKind::Call) {
        auto it = cfg_.by_ref_outputs.find(text::to_lower(x.text));
        if (it != cfg_.by_ref_outputs.end())
          for (int i : it->second)
            if (i < static_cast<int>(x.kids.size())) lvalue_write(*x.kids[static_cast<std::size_t>(i)], out);
      }
    });
  }

  void lvalue_write(const Expr& t, std::vector<VarRef>& out) const {
    const Expr* root = chain_root(t, nullptr);
    if (root->kind != ExprKind::Variable || root->text == "this") return;
    out.push_back(ref_for(t, t.kind != ExprKind::Variable));
  }

  static void calls(const Expr& e, std::vector<std::string>& out) {
    walk(e, [&](const Expr& x) {
      switch (x.kind) {
        case ExprKind::Call: out.push_back(x.text); break;
        case ExprKind::MethodCall: out.push_back("->" + x.text); break;
        case ExprKind::StaticCall: out.push_back(x.text); break;
        default: break;
      }
    });
  }

  void sinks(const Expr& e, std::vector<SinkHit>& out) const {
    walk(e, [&](const Expr& x) {
      for (Cwe cwe : kAllCwes) {
        const auto& c = cfg_.of(cwe);
        std::string name;
        std::size_t first_arg = 0;
        if (x.kind == ExprKind::Call && c.sinks.count(text::to_lower(x.text))) {
          name = x.text;
        } else if (x.kind == ExprKind::MethodCall && c.method_sinks.count(text::to_lower(x.text))) {
          name = "->" + x.text;
          first_arg = 1;
        } else if (x.kind == ExprKind::Exit && !x.kids.empty() && c.sinks.count(x.text)) {
          name = x.text;
        } else if (x.kind == ExprKind::Backtick && cwe == Cwe::CWE78) {
          name = "`";
        } else {
          continue;
        }
        SinkHit hit;
        hit.cwe = cwe;
        hit.callee = name;
        hit.call = &x;
        auto positions = c.sink_args.find(text::to_lower(name));
        for (std::size_t i = first_arg; i < x.kids.size(); ++i) {
          if (!x.kids[i]) continue;
          if (positions != c.sink_args.end()) {
            int pos = static_cast<int>(i - first_arg);
            if (std::find(positions->second.begin(), positions->second.end(), pos) == positions->second.end()) continue;
          }
          reads(*x.kids[i], hit.reads);
        }
        out.push_back(std::move(hit));
      }
    });
  }

  static void string_parts(const Expr& e, std::vector<std::string>& out, std::string& cur) {
    if (e.kind == ExprKind::Literal && e.lit == LiteralType::String) {
      cur += e.text;
      return;
    }
    if ((e.kind == ExprKind::Binary && e.text == ".") || e.kind == ExprKind::Interpolated) {
      for (const auto& k : e.kids)
        if (k) string_parts(*k, out, cur);
      return;
    }
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  }

 private:
  const SinkConfig& cfg_;
};

const Expr* find_include(const Expr& e) {
  if (e.kind == ExprKind::Include) return &e;
  if (e.kind == ExprKind::Assign) return find_include(*e.kids[1]);
  if (e.kind == ExprKind::Binary && (e.text == "or" || e.text == "||")) return find_include(*e.kids[0]);
  return nullptr;
}

// Leading literal text of a concatenation, e.g. "Location: " for "Location: " . $u.
std::string leading_literal(const Expr& e) {
  if (e.kind == ExprKind::Literal && e.lit == LiteralType::String) return e.text;
  if (e.kind == ExprKind::Binary && e.text == ".") {
    std::string l = leading_literal(*e.kids[0]);
    if (auto f = fold_constant_string(*e.kids[0])) return *f + leading_literal(*e.kids[1]);
    return l;
  }
  if (e.kind == ExprKind::Interpolated) {
    std::string out;
    for (const auto& k : e.kids) {
      if (k->kind != ExprKind::Literal) break;
      out += k->text;
    }
    return out;
  }
  return "";
}

bool is_location_header(std::string_view s) {
  return text::starts_with(text::to_lower(text::trim(s)), "location:");
}

std::string strip_location(std::string s) {
  s = text::trim(s);
  s = text::trim(std::string_view(s).substr(std::string("location:").size()));
  return s;
}

// Path part of a redirect URL: origin, query and fragment removed.
std::string redirect_path(std::string url) {
  auto scheme = url.find("://");
  if (scheme != std::string::npos) {
    auto slash = url.find('/', scheme + 3);
    url = slash == std::string::npos ? "" : url.substr(slash);
  }
  auto q = url.find_first_of("?#");
  if (q != std::string::npos) url = url.substr(0, q);
  return url;
}

const Expr* find_header_call(const Expr& e) {
  const Expr* found = nullptr;
  walk(e, [&](const Expr& x) {
    if (!found && x.kind == ExprKind::Call && text::to_lower(x.text) == "header" && !x.kids.empty() &&
        is_location_header(leading_literal(*x.kids[0])))
      found = &x;
  });
  return found;
}

class UnitBuilder {
 public:
  UnitBuilder(const SinkConfig& cfg, SourceUnit& unit) : cfg_(cfg), scan_(cfg), u_(unit) {}

  void block(const Block& b, int parent, int branch, const std::string& fn, bool top) {
    for (const auto& n : b) node(*n, parent, branch, fn, top);
  }

 private:
  const SinkConfig& cfg_;
  ExprScanner scan_;
  SourceUnit& u_;

  Stmt& add(const Node& n, StmtKind kind, int parent, int branch, const std::string& fn) {
    Stmt s;
    s.index = static_cast<int>(u_.statements.size());
    s.kind = kind;
    s.line = n.span.line;
    s.end_line = n.span.end_line;
    s.span = n.span;
    s.parent = parent;
    s.branch = branch;
    s.function = fn;
    s.node = &n;
    u_.node_index[&n] = s.index;
    u_.statements.push_back(std::move(s));
    return u_.statements.back();
  }

  void scan_exprs(Stmt& s, const std::vector<ExprPtr>& exprs) {
    for (const auto& e : exprs) {
      if (!e) continue;
      scan_.reads(*e, s.reads);
      scan_.writes(*e, s.writes);
      ExprScanner::calls(*e, s.calls);
      scan_.sinks(*e, s.sinks);
    }
  }

  void node(const Node& n, int parent, int branch, const std::string& fn, bool top) {
    switch (n.kind) {
      case NodeKind::InlineHtml:
        if (!top) add(n, StmtKind::Html, parent, branch, fn);
        return;
      case NodeKind::Function: {
        Stmt& s = add(n, StmtKind::Other, parent, branch, fn);
        int idx = s.index;
        FunctionDef def;
        def.name = n.name;
        def.path = u_.path;
        def.decl = idx;
        def.body_begin = idx + 1;
        def.line = n.span.line;
        def.end_line = n.span.end_line;
        def.node = &n;
        for (const auto& p : n.params) {
          def.params.push_back(p.name);
          VarRef w;
          w.name = p.name;
          u_.statements[static_cast<std::size_t>(idx)].writes.push_back(w);
        }
        block(n.bodies[0], idx, 0, n.name, false);
        def.body_end = static_cast<int>(u_.statements.size());
        std::string key = text::to_lower(n.name);
        if (u_.functions.count(key)) {
          const auto& first = u_.functions[key];
          throw DuplicateFunctionError("function " + n.name + " defined twice: " + u_.path + ":" +
                                       std::to_string(first.line) + " and " + u_.path + ":" +
                                       std::to_string(def.line));
        }
        u_.functions[key] = std::move(def);
        return;
      }
      case NodeKind::If:
      case NodeKind::Switch:
      case NodeKind::While:
      case NodeKind::DoWhile:
      case NodeKind::For:
      case NodeKind::Foreach: {
        bool is_if = n.kind == NodeKind::If || n.kind == NodeKind::Switch;
        Stmt& s = add(n, is_if ? StmtKind::If : StmtKind::Loop, parent, branch, fn);
        int idx = s.index;
        if (n.kind == NodeKind::Foreach) {
          Stmt& st = u_.statements[static_cast<std::size_t>(idx)];
          scan_.reads(*n.exprs[0], st.reads);
          ExprScanner::calls(*n.exprs[0], st.calls);
          scan_.sinks(*n.exprs[0], st.sinks);
          for (std::size_t i = 1; i < n.exprs.size(); ++i)
            if (n.exprs[i]) scan_.lvalue_write(*n.exprs[i], st.writes);
        } else {
          scan_exprs(u_.statements[static_cast<std::size_t>(idx)], n.exprs);
        }
        for (std::size_t b = 0; b < n.bodies.size(); ++b) block(n.bodies[b], idx, static_cast<int>(b), fn, false);
        return;
      }
      case NodeKind::Return: {
        Stmt& s = add(n, StmtKind::Return, parent, branch, fn);
        s.terminates = true;
        scan_exprs(s, n.exprs);
        return;
      }
      case NodeKind::Echo: {
        Stmt& s = add(n, StmtKind::Echo, parent, branch, fn);
        scan_exprs(s, n.exprs);
        s.callee = "echo";
        SinkHit hit;
        hit.cwe = Cwe::CWE79;
        hit.callee = "echo";
        for (const auto& e : n.exprs) scan_.reads(*e, hit.reads);
        s.sinks.insert(s.sinks.begin(), std::move(hit));
        std::string cur;
        for (const auto& e : n.exprs) ExprScanner::string_parts(*e, s.string_parts, cur);
        if (!cur.empty()) s.string_parts.push_back(cur);
        return;
      }
      case NodeKind::Global: {
        Stmt& s = add(n, StmtKind::Other, parent, branch, fn);
        for (const auto& name : n.names) {
          VarRef r;
          r.name = name;
          s.writes.push_back(r);
        }
        return;
      }
      case NodeKind::Static: {
        Stmt& s = add(n, StmtKind::Assign, parent, branch, fn);
        for (const auto& name : n.names) {
          VarRef r;
          r.name = name;
          s.writes.push_back(r);
        }
        for (const auto& e : n.exprs)
          if (e) scan_.reads(*e, s.reads);
        return;
      }
      case NodeKind::Unset: {
        Stmt& s = add(n, StmtKind::Other, parent, branch, fn);
        for (const auto& e : n.exprs) scan_.lvalue_write(*e, s.writes);
        return;
      }
      case NodeKind::Break:
      case NodeKind::Continue:
        add(n, StmtKind::Other, parent, branch, fn);
        return;
      case NodeKind::Other: {
        Stmt& s = add(n, StmtKind::Other, parent, branch, fn);
        for (const auto& e : n.exprs)
          if (e) scan_.reads(*e, s.reads);
        return;
      }
      case NodeKind::ExprStmt:
        expr_stmt(n, parent, branch, fn);
        return;
    }
  }

  void expr_stmt(const Node& n, int parent, int branch, const std::string& fn) {
    Stmt& s = add(n, StmtKind::Other, parent, branch, fn);
    scan_exprs(s, n.exprs);
    const Expr& top = *n.exprs[0];
    const std::string& src = u_.source();

    auto has_sink = [&](Cwe cwe) {
      return std::any_of(s.sinks.begin(), s.sinks.end(), [&](const SinkHit& h) { return h.cwe == cwe; });
    };
    auto sink_callee = [&](Cwe cwe) {
      for (const auto& h : s.sinks)
        if (h.cwe == cwe) return h.callee;
      return std::string();
    };
    const Expr* value = top.kind == ExprKind::Assign ? top.kids[1].get() : &top;
    std::string cur;
    ExprScanner::string_parts(*value, s.string_parts, cur);
    if (value->kind == ExprKind::Call || value->kind == ExprKind::MethodCall)
      for (const auto& k : value->kids)
        if (k) ExprScanner::string_parts(*k, s.string_parts, cur);
    if (!cur.empty()) s.string_parts.push_back(cur);

    if (const Expr* inc = find_include(top)) {
      s.kind = StmtKind::Include;
      s.callee = inc->text;
      if (auto f = fold_constant_string(*inc->kids[0], kDirPlaceholder)) {
        s.target = *f;
        s.target_is_literal = true;
      } else {
        s.target = slice(src, inc->kids[0]->span);
      }
      return;
    }
    if (const Expr* hdr = find_header_call(top)) {
      s.kind = StmtKind::Redirect;
      s.callee = hdr->text;
      if (auto f = fold_constant_string(*hdr->kids[0], kDirPlaceholder)) {
        s.target = strip_location(*f);
        s.target_is_literal = true;
      } else {
        s.target = slice(src, hdr->kids[0]->span);
      }
      return;
    }
    if (has_sink(Cwe::CWE89)) {
      s.kind = StmtKind::SqlExec;
      s.callee = sink_callee(Cwe::CWE89);
    } else if (has_sink(Cwe::CWE78)) {
      s.kind = StmtKind::SysExec;
      s.callee = sink_callee(Cwe::CWE78);
    } else if (has_sink(Cwe::CWE434)) {
      s.kind = StmtKind::FileMove;
      s.callee = sink_callee(Cwe::CWE434);
    } else if (top.kind == ExprKind::Exit) {
      s.kind = StmtKind::Exit;
      s.callee = top.text;
      s.terminates = true;
    } else if (top.kind == ExprKind::Call && has_sink(Cwe::CWE79)) {
      s.kind = StmtKind::Echo;
      s.callee = top.text;
    } else if (top.kind == ExprKind::Assign) {
      s.kind = StmtKind::Assign;
      if (value->kind == ExprKind::Call) s.callee = value->text;
      else if (value->kind == ExprKind::MethodCall) s.callee = "->" + value->text;
    } else if (top.kind == ExprKind::Call || top.kind == ExprKind::MethodCall || top.kind == ExprKind::StaticCall) {
      s.kind = StmtKind::Call;
      s.callee = top.kind == ExprKind::MethodCall ? "->" + top.text : top.text;
    } else if (top.kind == ExprKind::Binary && (top.text == "or" || top.text == "||") &&
               top.kids[1]->kind == ExprKind::Exit) {
      s.kind = top.kids[0]->kind == ExprKind::Assign ? StmtKind::Assign : StmtKind::Call;
    }
  }
};

// --- HTML element scan --------------------------------------------------------

bool is_void_element(const std::string& n) {
  static const std::set<std::string> v = {"area", "base", "br",   "col",   "embed",  "hr",    "img",
                                          "input", "link", "meta", "param", "source", "track", "wbr"};
  return v.count(n) > 0;
}

std::vector<HtmlTag> scan_tags(const std::string& masked, const std::function<int(std::size_t)>& line_of) {
  std::vector<HtmlTag> tags;
  std::vector<std::size_t> stack;
  std::size_t i = 0;
  while (i < masked.size()) {
    if (masked[i] != '<') {
      ++i;
      continue;
    }
    if (masked.compare(i, 4, "<!--") == 0) {
      auto end = masked.find("-->", i + 4);
      i = end == std::string::npos ? masked.size() : end + 3;
      continue;
    }
    bool closing = i + 1 < masked.size() && masked[i + 1] == '/';
    std::size_t p = i + (closing ? 2 : 1);
    std::size_t ns = p;
    while (p < masked.size() && (std::isalnum(static_cast<unsigned char>(masked[p])) || masked[p] == '-')) ++p;
    if (p == ns || !std::isalpha(static_cast<unsigned char>(masked[ns]))) {
      ++i;
      continue;
    }
    std::string name = text::to_lower(masked.substr(ns, p - ns));
    // find end of tag, honouring quotes
    char quote = 0;
    while (p < masked.size()) {
      char c = masked[p];
      if (quote) {
        if (c == quote) quote = 0;
      } else if (c == '"' || c == '\'') {
        quote = c;
      } else if (c == '>') {
        break;
      }
      ++p;
    }
    std::size_t tag_end = std::min(p + 1, masked.size());
    if (closing) {
      for (std::size_t k = stack.size(); k-- > 0;) {
        if (tags[stack[k]].name == name) {
          auto& t = tags[stack[k]];
          t.close_begin = i;
          t.close_end = tag_end;
          t.end_line = line_of(tag_end == 0 ? 0 : tag_end - 1);
          stack.resize(k);
          break;
        }
      }
      i = tag_end;
      continue;
    }
    HtmlTag t;
    t.name = name;
    t.open_begin = i;
    t.open_end = tag_end;
    t.line = line_of(i);
    t.end_line = line_of(tag_end == 0 ? 0 : tag_end - 1);
    bool self_closing = tag_end >= 2 && masked[tag_end - 2] == '/';
    if (is_void_element(name) || self_closing) {
      t.close_begin = t.close_end = tag_end;
      tags.push_back(t);
      i = tag_end;
      continue;
    }
    tags.push_back(t);
    if (name == "script" || name == "style" || name == "textarea" || name == "title") {
      std::string lower_rest = text::to_lower(std::string_view(masked).substr(tag_end));
      auto close = lower_rest.find("</" + name);
      if (close != std::string::npos) {
        std::size_t cb = tag_end + close;
        std::size_t ce = masked.find('>', cb);
        ce = ce == std::string::npos ? masked.size() : ce + 1;
        tags.back().close_begin = cb;
        tags.back().close_end = ce;
        tags.back().end_line = line_of(ce - 1);
        i = ce;
        continue;
      }
    }
    stack.push_back(tags.size() - 1);
    i = tag_end;
  }
  return tags;
}

void collect_html_spans(const Block& b, std::vector<Span>& out) {
  for (const auto& n : b) {
    if (n->kind == NodeKind::InlineHtml) out.push_back(n->span);
    for (const auto& body : n->bodies) collect_html_spans(body, out);
  }
}

bool is_trivia_line(std::string_view raw) {
  std::string t = text::trim(raw);
  if (t.empty()) return true;
  std::string l = text::to_lower(t);
  if (l == "<?php" || l == "?>" || l == "<?php ?>" || l == "<?") return true;
  return text::starts_with(t, "//") || text::starts_with(t, "#") || text::starts_with(t, "/*") ||
         text::starts_with(t, "*") || text::starts_with(t, "*/");
}

}  // namespace

// ---------------------------------------------------------------------------

const Stmt* SourceUnit::stmt_for(const Node* node) const {
  auto it = node_index.find(node);
  return it == node_index.end() ? nullptr : &statements[static_cast<std::size_t>(it->second)];
}

const HtmlTag* SourceUnit::innermost_tag(std::size_t offset) const {
  const HtmlTag* best = nullptr;
  for (const auto& t : tags) {
    std::size_t end = t.closed() ? t.close_end : source().size();
    if (t.open_begin <= offset && offset < end) {
      if (!best || t.open_begin >= best->open_begin) best = &t;
    }
  }
  return best;
}

std::vector<int> SourceUnit::uncovered_lines() const {
  auto lines = text::split_lines(source());
  std::vector<bool> covered(lines.size() + 2, false);
  auto mark = [&](int a, int b) {
    for (int l = std::max(a, 1); l <= b && l <= static_cast<int>(lines.size()); ++l)
      covered[static_cast<std::size_t>(l)] = true;
  };
  for (const auto& s : statements) mark(s.line, s.end_line);
  for (const auto& h : html_segments) mark(h.first_line, h.last_line);
  std::vector<int> out;
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (!covered[i + 1] && !is_trivia_line(lines[i])) out.push_back(static_cast<int>(i + 1));
  return out;
}

SourceUnit parse_php(const SourceFile& file, const SinkConfig& config) {
  SourceUnit u;
  u.path = file.path;
  u.ast = std::make_shared<const ParsedFile>(parse(file));
  UnitBuilder builder(config, u);
  builder.block(u.ast->statements, -1, -1, "", true);

  const std::string& src = u.source();
  std::vector<std::size_t> line_starts{0};
  for (std::size_t i = 0; i < src.size(); ++i)
    if (src[i] == '\n') line_starts.push_back(i + 1);
  auto line_of = [&](std::size_t off) {
    return static_cast<int>(std::upper_bound(line_starts.begin(), line_starts.end(), off) - line_starts.begin());
  };

  std::vector<Span> html_spans;
  collect_html_spans(u.ast->statements, html_spans);
  std::string masked(src.size(), ' ');
  for (std::size_t i = 0; i < src.size(); ++i)
    if (src[i] == '\n') masked[i] = '\n';
  for (const auto& sp : html_spans)
    for (std::size_t i = sp.begin; i < sp.end && i < src.size(); ++i) masked[i] = src[i];
  u.tags = scan_tags(masked, line_of);

  for (const auto& chunk : u.ast->html) {
    HtmlSegment seg;
    seg.first_line = chunk.span.line;
    seg.last_line = chunk.span.end_line;
    seg.span = chunk.span;
    for (const auto& t : u.tags) {
      std::size_t end = t.closed() ? t.close_end : src.size();
      if (t.open_begin < chunk.span.end && end > chunk.span.begin) seg.tags.push_back(t);
    }
    u.html_segments.push_back(std::move(seg));
  }
  return u;
}

// ---------------------------------------------------------------------------

std::string normalize_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i <= path.size()) {
    auto slash = path.find('/', i);
    std::string seg(path.substr(i, slash == std::string_view::npos ? std::string_view::npos : slash - i));
    if (seg == "..") {
      if (!parts.empty()) parts.pop_back();
    } else if (!seg.empty() && seg != ".") {
      parts.push_back(seg);
    }
    if (slash == std::string_view::npos) break;
    i = slash + 1;
  }
  return text::join(parts, "/");
}

namespace {

std::string dir_of(const std::string& path) {
  auto slash = path.rfind('/');
  return slash == std::string::npos ? "" : path.substr(0, slash);
}

std::string join_path(const std::string& dir, std::string_view rel) {
  if (dir.empty()) return std::string(rel);
  return dir + "/" + std::string(rel);
}

}  // namespace

std::optional<std::string> resolve_target(const std::string& from, const std::string& target,
                                          const std::set<std::string>& known) {
  std::string t = target;
  std::vector<std::string> candidates;
  if (text::starts_with(t, kDirPlaceholder)) {
    candidates.push_back(normalize_path(join_path(dir_of(from), t.substr(kDirPlaceholder.size()))));
  } else if (text::starts_with(t, "/")) {
    std::string rel = normalize_path(t);
    candidates.push_back(rel);
    for (const auto& k : known)
      if (text::ends_with(rel, "/" + k)) candidates.push_back(k);
  } else {
    candidates.push_back(normalize_path(join_path(dir_of(from), t)));
    candidates.push_back(normalize_path(t));
  }
  for (const auto& c : candidates)
    if (known.count(c)) return c;
  return std::nullopt;
}

const SourceUnit* ProgramModel::unit(const std::string& path) const {
  auto i = unit_index(path);
  return i ? &units[*i] : nullptr;
}

std::optional<std::size_t> ProgramModel::unit_index(const std::string& path) const {
  for (std::size_t i = 0; i < units.size(); ++i)
    if (units[i].path == path) return i;
  return std::nullopt;
}

const FunctionDef* ProgramModel::function(std::string_view name) const {
  std::string key = text::to_lower(name);
  auto it = functions.find(key);
  if (it == functions.end()) return nullptr;
  return &units[it->second].functions.at(key);
}

std::vector<const Edge*> ProgramModel::edges_into(const std::string& path) const {
  std::vector<const Edge*> out;
  for (const auto& e : edges)
    if (e.to == path) out.push_back(&e);
  return out;
}

std::vector<const Edge*> ProgramModel::edges_from(const std::string& path) const {
  std::vector<const Edge*> out;
  for (const auto& e : edges)
    if (e.from == path) out.push_back(&e);
  return out;
}

const Edge* ProgramModel::edge_at(const std::string& path, int stmt) const {
  for (const auto& e : edges)
    if (e.from == path && e.stmt == stmt) return &e;
  return nullptr;
}

ProgramModel build_program_model(std::vector<SourceUnit> units, const SinkConfig& config) {
  ProgramModel m;
  m.config = &config;
  std::set<std::string> known;
  for (const auto& u : units)
    if (!known.insert(u.path).second) throw ContractViolation("duplicate unit path: " + u.path);
  m.units = std::move(units);
  std::sort(m.units.begin(), m.units.end(), [](const SourceUnit& a, const SourceUnit& b) { return a.path < b.path; });

  for (std::size_t ui = 0; ui < m.units.size(); ++ui) {
    const auto& u = m.units[ui];
    for (const auto& [key, def] : u.functions) {
      auto it = m.functions.find(key);
      if (it != m.functions.end()) {
        const FunctionDef& first = m.units[it->second].functions.at(key);
        throw DuplicateFunctionError("function " + def.name + " defined twice: " + first.path + ":" +
                                     std::to_string(first.line) + " and " + def.path + ":" + std::to_string(def.line));
      }
      m.functions[key] = ui;
    }
    for (const auto& s : u.statements) {
      if (s.kind != StmtKind::Include && s.kind != StmtKind::Redirect) continue;
      Edge e;
      e.from = u.path;
      e.stmt = s.index;
      e.line = s.line;
      e.kind = s.kind == StmtKind::Include ? EdgeKind::Include : EdgeKind::Redirect;
      e.target = text::replace_all(s.target.value_or(""), kDirPlaceholder, "__DIR__");
      std::optional<std::string> to;
      if (s.target_is_literal) {
        std::string t = *s.target;
        if (s.kind == StmtKind::Redirect) t = redirect_path(t);
        to = resolve_target(u.path, t, known);
      }
      if (to) {
        e.to = *to;
        m.edges.push_back(std::move(e));
      } else {
        m.dangling.push_back(std::move(e));
      }
    }
  }
  return m;
}

}  // namespace pocgen::php
