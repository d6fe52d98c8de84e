// Lexer and recursive-descent parser for the supported PHP subset.

#include <algorithm>
#include <cctype>
#include <functional>
#include <set>

#include "pocgen/php_ast.hpp"

namespace pocgen::php {

ParseError::ParseError(std::string path, int line, const std::string& what)
    : Error(path + ":" + std::to_string(line) + ": " + what), path_(std::move(path)), line_(line) {}

std::string slice(const std::string& source, const Span& span) {
  if (span.begin >= source.size() || span.end <= span.begin) return {};
  return source.substr(span.begin, std::min(span.end, source.size()) - span.begin);
}

namespace {

enum class Tok {
  End,
  InlineHtml,
  OpenTag,
  OpenTagEcho,
  CloseTag,
  Variable,
  Ident,
  Int,
  Float,
  String,    // single-quoted / nowdoc; text = decoded value
  Template,  // double-quoted / heredoc; text = raw body
  Backtick,  // text = raw body
  Cast,      // text = normalised type
  Op,
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::size_t begin = 0, end = 0;
  int line = 1, end_line = 1;
  std::size_t body_offset = 0;  // Template/Backtick: offset of the raw body
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || (c & 0x80); }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || (c & 0x80); }

class Lexer {
 public:
  Lexer(const std::string& path, const std::string& src, bool start_in_php = false, std::size_t base = 0,
        int base_line = 1)
      : path_(path), src_(src), pos_(0), line_(base_line), in_php_(start_in_php), base_(base) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (pos_ < src_.size()) {
      if (!in_php_) {
        lex_html(out);
      } else {
        lex_php(out);
      }
    }
    Token end;
    end.kind = Tok::End;
    end.begin = end.end = base_ + src_.size();
    end.line = end.end_line = line_;
    out.push_back(end);
    return out;
  }

 private:
  const std::string& path_;
  const std::string& src_;
  std::size_t pos_;
  int line_;
  bool in_php_;
  std::size_t base_;

  [[noreturn]] void fail(int line, const std::string& what) { throw ParseError(path_, line, what); }

  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos_ < src_.size(); ++i, ++pos_)
      if (src_[pos_] == '\n') ++line_;
  }

  bool at(std::string_view s) const { return src_.compare(pos_, s.size(), s) == 0; }

  bool at_ci(std::string_view s) const {
    if (pos_ + s.size() > src_.size()) return false;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (std::tolower(static_cast<unsigned char>(src_[pos_ + i])) != s[i]) return false;
    return true;
  }

  Token make(Tok k, std::size_t b, int l) {
    Token t;
    t.kind = k;
    t.begin = base_ + b;
    t.end = base_ + pos_;
    t.line = l;
    t.end_line = line_;
    return t;
  }

  void lex_html(std::vector<Token>& out) {
    std::size_t b = pos_;
    int l = line_;
    std::size_t next = src_.find("<?", pos_);
    while (next != std::string::npos) {
      std::string_view rest(src_.data() + next, src_.size() - next);
      if (rest.size() >= 5 && text::to_lower(rest.substr(0, 5)) == "<?php") break;
      if (rest.size() >= 3 && rest.substr(0, 3) == "<?=") break;
      next = src_.find("<?", next + 2);
    }
    std::size_t stop = next == std::string::npos ? src_.size() : next;
    if (stop > pos_) {
      advance(stop - pos_);
      Token t = make(Tok::InlineHtml, b, l);
      t.text = src_.substr(b, stop - b);
      // a token ending with '\n' covers up to the previous line
      if (!t.text.empty() && t.text.back() == '\n') t.end_line = line_ - 1;
      out.push_back(std::move(t));
    }
    if (pos_ >= src_.size()) return;
    b = pos_;
    l = line_;
    if (at("<?=")) {
      advance(3);
      out.push_back(make(Tok::OpenTagEcho, b, l));
    } else {
      advance(5);
      out.push_back(make(Tok::OpenTag, b, l));
    }
    in_php_ = true;
  }

  void lex_php(std::vector<Token>& out) {
    // whitespace and comments
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance(1);
      } else if (at("//") || c == '#') {
        if (at("#[")) break;  // attribute, lexed as ops
        while (pos_ < src_.size() && src_[pos_] != '\n' && !at("?>")) advance(1);
      } else if (at("/*")) {
        int l = line_;
        auto close = src_.find("*/", pos_ + 2);
        if (close == std::string::npos) fail(l, "unterminated comment");
        advance(close + 2 - pos_);
      } else {
        break;
      }
    }
    if (pos_ >= src_.size()) return;
    std::size_t b = pos_;
    int l = line_;
    char c = src_[pos_];

    if (at("?>")) {
      advance(2);
      if (at("\r\n")) advance(2);
      else if (at("\n")) advance(1);
      out.push_back(make(Tok::CloseTag, b, l));
      in_php_ = false;
      return;
    }
    if (c == '$' && pos_ + 1 < src_.size() && is_ident_start(src_[pos_ + 1])) {
      advance(1);
      while (pos_ < src_.size() && is_ident_char(src_[pos_])) advance(1);
      Token t = make(Tok::Variable, b, l);
      t.text = src_.substr(b + 1, pos_ - b - 1);
      out.push_back(std::move(t));
      return;
    }
    if (is_ident_start(c) || (c == '\\' && pos_ + 1 < src_.size() && is_ident_start(src_[pos_ + 1]))) {
      while (pos_ < src_.size() && (is_ident_char(src_[pos_]) || src_[pos_] == '\\')) advance(1);
      Token t = make(Tok::Ident, b, l);
      t.text = src_.substr(b, pos_ - b);
      if (!t.text.empty() && t.text[0] == '\\') t.text = t.text.substr(1);
      out.push_back(std::move(t));
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      bool is_float = false;
      if (at("0x") || at("0X")) {
        advance(2);
        while (pos_ < src_.size() && std::isxdigit(static_cast<unsigned char>(src_[pos_]))) advance(1);
      } else {
        while (pos_ < src_.size() &&
               (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' || src_[pos_] == '_' ||
                src_[pos_] == 'e' || src_[pos_] == 'E')) {
          if (src_[pos_] == '.' || src_[pos_] == 'e' || src_[pos_] == 'E') is_float = true;
          if ((src_[pos_] == 'e' || src_[pos_] == 'E') && pos_ + 1 < src_.size() &&
              (src_[pos_ + 1] == '-' || src_[pos_ + 1] == '+'))
            advance(1);
          advance(1);
        }
      }
      Token t = make(is_float ? Tok::Float : Tok::Int, b, l);
      t.text = text::replace_all(src_.substr(b, pos_ - b), "_", "");
      out.push_back(std::move(t));
      return;
    }
    if (c == '\'') {
      advance(1);
      std::string value;
      while (true) {
        if (pos_ >= src_.size()) fail(l, "unterminated single-quoted string");
        char d = src_[pos_];
        if (d == '\\' && pos_ + 1 < src_.size() && (src_[pos_ + 1] == '\'' || src_[pos_ + 1] == '\\')) {
          value.push_back(src_[pos_ + 1]);
          advance(2);
        } else if (d == '\'') {
          advance(1);
          break;
        } else {
          value.push_back(d);
          advance(1);
        }
      }
      Token t = make(Tok::String, b, l);
      t.text = std::move(value);
      out.push_back(std::move(t));
      return;
    }
    if (c == '"' || c == '`') {
      advance(1);
      std::size_t body = pos_;
      while (true) {
        if (pos_ >= src_.size()) fail(l, c == '"' ? "unterminated double-quoted string" : "unterminated backtick string");
        char d = src_[pos_];
        if (d == '\\') {
          advance(2);
        } else if (d == c) {
          break;
        } else {
          advance(1);
        }
      }
      std::string raw = src_.substr(body, pos_ - body);
      advance(1);
      Token t = make(c == '"' ? Tok::Template : Tok::Backtick, b, l);
      t.text = std::move(raw);
      t.body_offset = base_ + body;
      out.push_back(std::move(t));
      return;
    }
    if (at("<<<")) {
      lex_heredoc(out, b, l);
      return;
    }
    if (c == '(') {
      // cast?
      std::size_t p = pos_ + 1;
      while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t')) ++p;
      std::size_t s = p;
      while (p < src_.size() && std::isalpha(static_cast<unsigned char>(src_[p]))) ++p;
      std::string word = text::to_lower(src_.substr(s, p - s));
      while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t')) ++p;
      static const std::set<std::string> casts = {"int", "integer", "string", "bool", "boolean", "float",
                                                  "double", "real", "array", "object", "binary"};
      if (p < src_.size() && src_[p] == ')' && casts.count(word)) {
        advance(p + 1 - pos_);
        Token t = make(Tok::Cast, b, l);
        if (word == "integer") word = "int";
        if (word == "boolean") word = "bool";
        if (word == "double" || word == "real") word = "float";
        if (word == "binary") word = "string";
        t.text = word;
        out.push_back(std::move(t));
        return;
      }
    }
    static const char* ops[] = {"===", "!==", "<=>", "**=", "...", "<<=", ">>=", "?\?=", "?->", "==", "!=",
                                "<>",  "<=",  ">=",  "&&",  "||",  "??",  "++",  "--",  "+=",  "-=",  "*=",
                                "/=",  ".=",  "%=",  "&=",  "|=",  "^=",  "->",  "=>",  "::",  "<<",  ">>",
                                "**",  "#[",  "+",   "-",   "*",   "/",   "%",   ".",   "=",   "<",   ">",
                                "!",   "(",   ")",   "[",   "]",   "{",   "}",   ",",   ";",   "?",   ":",
                                "@",   "&",   "|",   "^",   "~",   "$",   "\\"};
    for (const char* op : ops) {
      if (at(op)) {
        advance(std::char_traits<char>::length(op));
        Token t = make(Tok::Op, b, l);
        t.text = op;
        out.push_back(std::move(t));
        return;
      }
    }
    fail(l, std::string("unexpected character '") + c + "'");
  }

  void lex_heredoc(std::vector<Token>& out, std::size_t b, int l) {
    advance(3);
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) advance(1);
    bool nowdoc = false;
    bool quoted = false;
    if (pos_ < src_.size() && (src_[pos_] == '\'' || src_[pos_] == '"')) {
      nowdoc = src_[pos_] == '\'';
      quoted = true;
      advance(1);
    }
    std::size_t s = pos_;
    while (pos_ < src_.size() && is_ident_char(src_[pos_])) advance(1);
    std::string label = src_.substr(s, pos_ - s);
    if (label.empty()) fail(l, "malformed heredoc label");
    if (quoted) advance(1);
    if (pos_ < src_.size() && src_[pos_] == '\r') advance(1);
    if (pos_ >= src_.size() || src_[pos_] != '\n') fail(l, "heredoc label must end the line");
    advance(1);
    std::size_t body = pos_;
    // closing label: at line start (optionally indented) followed by a non-identifier char
    while (true) {
      if (pos_ >= src_.size()) fail(l, "unterminated heredoc");
      std::size_t line_start = pos_;
      std::size_t p = pos_;
      while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t')) ++p;
      if (src_.compare(p, label.size(), label) == 0 &&
          (p + label.size() >= src_.size() || !is_ident_char(src_[p + label.size()]))) {
        std::size_t body_end = line_start > body ? line_start - 1 : body;
        if (body_end > body && src_[body_end - 1] == '\r') --body_end;
        std::string raw = src_.substr(body, body_end - body);
        advance(p + label.size() - pos_);
        Token t = make(nowdoc ? Tok::String : Tok::Template, b, l);
        t.text = std::move(raw);
        t.body_offset = base_ + body;
        out.push_back(std::move(t));
        return;
      }
      auto nl = src_.find('\n', pos_);
      if (nl == std::string::npos) fail(l, "unterminated heredoc");
      advance(nl + 1 - pos_);
    }
  }
};

// ---------------------------------------------------------------------------

std::shared_ptr<Expr> new_expr(ExprKind k, const Token& first) {
  auto e = std::make_shared<Expr>();
  e->kind = k;
  e->span.begin = first.begin;
  e->span.end = first.end;
  e->span.line = first.line;
  e->span.end_line = first.end_line;
  return e;
}

std::string decode_escapes(std::string_view raw, bool backtick) {
  std::string out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (c != '\\' || i + 1 >= raw.size()) {
      out.push_back(c);
      continue;
    }
    char n = raw[i + 1];
    switch (n) {
      case 'n': out.push_back('\n'); ++i; break;
      case 't': out.push_back('\t'); ++i; break;
      case 'r': out.push_back('\r'); ++i; break;
      case 'v': out.push_back('\v'); ++i; break;
      case 'e': out.push_back('\x1b'); ++i; break;
      case 'f': out.push_back('\f'); ++i; break;
      case '\\': out.push_back('\\'); ++i; break;
      case '$': out.push_back('$'); ++i; break;
      case '"':
        if (!backtick) {
          out.push_back('"');
          ++i;
        } else {
          out.push_back('\\');
        }
        break;
      case '`':
        if (backtick) {
          out.push_back('`');
          ++i;
        } else {
          out.push_back('\\');
        }
        break;
      case 'x':
        if (i + 2 < raw.size() && std::isxdigit(static_cast<unsigned char>(raw[i + 2]))) {
          std::size_t j = i + 2;
          int v = 0, digits = 0;
          while (j < raw.size() && digits < 2 && std::isxdigit(static_cast<unsigned char>(raw[j]))) {
            v = v * 16 + (std::isdigit(static_cast<unsigned char>(raw[j])) ? raw[j] - '0' : (std::tolower(raw[j]) - 'a' + 10));
            ++j;
            ++digits;
          }
          out.push_back(static_cast<char>(v));
          i = j - 1;
        } else {
          out.push_back('\\');
        }
        break;
      default:
        if (n >= '0' && n <= '7') {
          std::size_t j = i + 1;
          int v = 0, digits = 0;
          while (j < raw.size() && digits < 3 && raw[j] >= '0' && raw[j] <= '7') {
            v = v * 8 + (raw[j] - '0');
            ++j;
            ++digits;
          }
          out.push_back(static_cast<char>(v & 0xFF));
          i = j - 1;
        } else {
          out.push_back('\\');
        }
    }
  }
  return out;
}

class Parser {
 public:
  Parser(std::string path, const std::string& source, std::vector<Token> toks)
      : path_(std::move(path)), source_(source), toks_(std::move(toks)) {}

  Block parse_file(std::vector<HtmlChunk>& html) {
    Block out;
    while (!is(Tok::End)) {
      if (is(Tok::InlineHtml)) {
        const Token& t = peek();
        html.push_back({span_of(t, t), t.text});
      }
      parse_statement_into(out, /*top=*/true);
    }
    return out;
  }

  ExprPtr parse_standalone_expr() {
    auto e = parse_expr(0);
    return e;
  }

 private:
  std::string path_;
  const std::string& source_;
  std::vector<Token> toks_;
  std::size_t i_ = 0;
  std::size_t php_open_ = 0;

  const Token& peek(std::size_t k = 0) const { return toks_[std::min(i_ + k, toks_.size() - 1)]; }
  const Token& prev() const { return toks_[i_ == 0 ? 0 : i_ - 1]; }
  bool is(Tok k) const { return peek().kind == k; }
  bool is_op(std::string_view op, std::size_t k = 0) const {
    return peek(k).kind == Tok::Op && peek(k).text == op;
  }
  bool is_kw(std::string_view kw, std::size_t k = 0) const {
    return peek(k).kind == Tok::Ident && text::to_lower(peek(k).text) == kw;
  }
  const Token& take() {
    const Token& t = toks_[i_];
    if (i_ + 1 < toks_.size()) ++i_;
    return t;
  }

  [[noreturn]] void fail(const std::string& what) { throw ParseError(path_, peek().line, what); }

  void expect_op(std::string_view op) {
    if (!is_op(op)) fail("expected '" + std::string(op) + "' near '" + describe(peek()) + "'");
    take();
  }

  static std::string describe(const Token& t) {
    switch (t.kind) {
      case Tok::End: return "end of file";
      case Tok::InlineHtml: return "inline HTML";
      case Tok::CloseTag: return "?>";
      case Tok::Variable: return "$" + t.text;
      default: return t.text;
    }
  }

  static Span span_of(const Token& a, const Token& b) {
    Span s;
    s.begin = a.begin;
    s.end = b.end;
    s.line = a.line;
    s.end_line = b.end_line;
    return s;
  }

  void finish(Expr& e, const Token& last) {
    e.span.end = std::max(e.span.end, last.end);
    e.span.end_line = std::max(e.span.end_line, last.end_line);
  }

  std::shared_ptr<Node> new_node(NodeKind k, const Token& first) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->span = span_of(first, first);
    n->php_open = php_open_;
    return n;
  }

  void close_node(Node& n) {
    const Token& last = prev();
    n.span.end = std::max(n.span.end, last.end);
    n.span.end_line = std::max(n.span.end_line, last.end_line);
    if (last.kind == Tok::CloseTag) {
      // "?>" swallowed a newline; the statement still ends on the tag's line
      n.span.end_line = std::max(n.span.line, last.line);
    }
  }

  // statement terminator: ';' or '?>' (or end of file)
  void end_statement() {
    if (is_op(";")) {
      take();
      return;
    }
    if (is(Tok::CloseTag) || is(Tok::End)) return;
    fail("expected ';' near '" + describe(peek()) + "'");
  }

  // ---- statements ---------------------------------------------------------

  void parse_statement_into(Block& out, bool top) {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::InlineHtml: {
        auto n = new_node(NodeKind::InlineHtml, t);
        n->html = t.text;
        take();
        out.push_back(n);
        (void)top;
        return;
      }
      case Tok::OpenTag:
        php_open_ = t.begin;
        take();
        return;
      case Tok::CloseTag:
        take();
        return;
      case Tok::OpenTagEcho: {
        php_open_ = t.begin;
        const Token& first = take();
        auto n = new_node(NodeKind::Echo, first);
        n->exprs.push_back(parse_expr(0));
        while (is_op(",")) {
          take();
          n->exprs.push_back(parse_expr(0));
        }
        if (is_op(";")) take();
        close_node(*n);
        out.push_back(n);
        return;
      }
      case Tok::End:
        return;
      default:
        break;
    }
    if (is_op(";")) {
      take();
      return;
    }
    if (is_op("{")) {
      take();
      while (!is_op("}")) {
        if (is(Tok::End)) fail("unbalanced braces: missing '}'");
        parse_statement_into(out, false);
      }
      take();
      return;
    }
    std::size_t start = i_;
    try {
      out.push_back(parse_statement());
    } catch (const ParseError&) {
      i_ = start;
      out.push_back(recover_other());
    }
  }

  // Skips one statement worth of tokens, keeping the variables it mentions.
  NodePtr recover_other() {
    const Token& first = peek();
    auto n = new_node(NodeKind::Other, first);
    int depth = 0;
    int open_line = first.line;
    while (true) {
      const Token& t = peek();
      if (t.kind == Tok::End) {
        if (depth > 0) throw ParseError(path_, open_line, "unbalanced brackets");
        break;
      }
      if (t.kind == Tok::Op && (t.text == "(" || t.text == "[" || t.text == "{")) {
        if (depth == 0) open_line = t.line;
        ++depth;
      } else if (t.kind == Tok::Op && (t.text == ")" || t.text == "]" || t.text == "}")) {
        if (depth == 0) break;
        --depth;
        if (depth == 0 && t.text == "}") {
          take();
          if (is_op(";")) take();
          break;
        }
      } else if (depth == 0 && ((t.kind == Tok::Op && t.text == ";") || t.kind == Tok::CloseTag)) {
        if (t.kind == Tok::Op) take();
        break;
      }
      if (t.kind == Tok::Variable) {
        auto v = new_expr(ExprKind::Variable, t);
        v->text = t.text;
        n->exprs.push_back(v);
      }
      take();
    }
    close_node(*n);
    return n;
  }

  NodePtr skip_balanced_other() {
    // class / interface / trait bodies and similar: keep vars, skip tokens
    const Token& first = peek();
    auto n = new_node(NodeKind::Other, first);
    while (!is_op("{") && !is_op(";")) {
      if (is(Tok::End)) fail("unexpected end of file");
      take();
    }
    if (is_op(";")) {
      take();
      close_node(*n);
      return n;
    }
    int open_line = peek().line;
    int depth = 0;
    do {
      const Token& t = peek();
      if (t.kind == Tok::End) throw ParseError(path_, open_line, "unbalanced braces: missing '}'");
      if (t.kind == Tok::Op && t.text == "{") ++depth;
      if (t.kind == Tok::Op && t.text == "}") --depth;
      if (t.kind == Tok::Variable) {
        auto v = new_expr(ExprKind::Variable, t);
        v->text = t.text;
        n->exprs.push_back(v);
      }
      take();
    } while (depth > 0);
    close_node(*n);
    return n;
  }

  Block parse_body(std::initializer_list<std::string_view> alt_end) {
    Block body;
    if (is_op(":")) {
      take();
      while (true) {
        if (is(Tok::End)) fail("unterminated alternative-syntax block");
        bool stop = false;
        for (auto kw : alt_end)
          if (is_kw(kw)) stop = true;
        if (stop) break;
        parse_statement_into(body, false);
      }
      return body;
    }
    if (is_op("{")) {
      int open_line = peek().line;
      take();
      while (!is_op("}")) {
        if (is(Tok::End)) throw ParseError(path_, open_line, "unbalanced braces: missing '}'");
        parse_statement_into(body, false);
      }
      take();
      return body;
    }
    // single statement
    while (is(Tok::CloseTag) || is(Tok::OpenTag)) take();
    parse_statement_into(body, false);
    return body;
  }

  bool uses_alt_syntax() const { return is_op(":"); }

  NodePtr parse_statement() {
    const Token& first = peek();
    if (first.kind == Tok::Ident) {
      std::string kw = text::to_lower(first.text);
      if (kw == "if") return parse_if();
      if (kw == "while") {
        auto n = new_node(NodeKind::While, take());
        n->exprs.push_back(parse_paren_expr());
        bool alt = uses_alt_syntax();
        n->bodies.push_back(parse_body({"endwhile"}));
        if (alt) {
          take();
          end_statement();
        }
        close_node(*n);
        return n;
      }
      if (kw == "do") {
        auto n = new_node(NodeKind::DoWhile, take());
        n->bodies.push_back(parse_body({}));
        if (!is_kw("while")) fail("expected 'while' after do-block");
        take();
        n->exprs.push_back(parse_paren_expr());
        end_statement();
        close_node(*n);
        return n;
      }
      if (kw == "for") return parse_for();
      if (kw == "foreach") return parse_foreach();
      if (kw == "switch") return parse_switch();
      if (kw == "function" && (peek(1).kind == Tok::Ident || (is_op("&", 1) && peek(2).kind == Tok::Ident)))
        return parse_function();
      if (kw == "return") {
        auto n = new_node(NodeKind::Return, take());
        if (!is_op(";") && !is(Tok::CloseTag) && !is(Tok::End)) n->exprs.push_back(parse_expr(0));
        end_statement();
        close_node(*n);
        return n;
      }
      if (kw == "break" || kw == "continue") {
        auto n = new_node(kw == "break" ? NodeKind::Break : NodeKind::Continue, take());
        if (is(Tok::Int)) take();
        end_statement();
        close_node(*n);
        return n;
      }
      if (kw == "echo") {
        auto n = new_node(NodeKind::Echo, take());
        n->exprs.push_back(parse_expr(0));
        while (is_op(",")) {
          take();
          n->exprs.push_back(parse_expr(0));
        }
        end_statement();
        close_node(*n);
        return n;
      }
      if (kw == "global") {
        auto n = new_node(NodeKind::Global, take());
        do {
          if (is_op(",")) take();
          if (!is(Tok::Variable)) fail("expected variable after 'global'");
          n->names.push_back(take().text);
        } while (is_op(","));
        end_statement();
        close_node(*n);
        return n;
      }
      if (kw == "static" && peek(1).kind == Tok::Variable) {
        auto n = new_node(NodeKind::Static, take());
        do {
          if (is_op(",")) take();
          if (!is(Tok::Variable)) fail("expected variable after 'static'");
          n->names.push_back(take().text);
          if (is_op("=")) {
            take();
            n->exprs.push_back(parse_expr(0));
          } else {
            n->exprs.push_back(nullptr);
          }
        } while (is_op(","));
        end_statement();
        close_node(*n);
        return n;
      }
      if (kw == "unset" && is_op("(", 1)) {
        auto n = new_node(NodeKind::Unset, take());
        take();
        while (!is_op(")")) {
          n->exprs.push_back(parse_expr(0));
          if (is_op(",")) take();
          else if (!is_op(")")) fail("expected ',' or ')' in unset");
        }
        take();
        end_statement();
        close_node(*n);
        return n;
      }
      if (kw == "class" || kw == "interface" || kw == "trait" || kw == "abstract" || kw == "final" ||
          kw == "enum" || kw == "readonly")
        return skip_balanced_other();
      if (kw == "namespace" || kw == "use" || kw == "declare" || kw == "goto" || kw == "throw" || kw == "const") {
        if (kw == "namespace" && (peek(1).kind == Tok::Ident) && is_op("{", 2)) return skip_balanced_other();
        return recover_other();
      }
      if (kw == "try") return parse_try();
    }
    // expression statement
    auto n = new_node(NodeKind::ExprStmt, first);
    n->exprs.push_back(parse_expr(0));
    end_statement();
    close_node(*n);
    return n;
  }

  NodePtr parse_try() {
    // try bodies run inline; catch/finally blocks become opaque statements
    const Token& first = take();
    auto wrapper = new_node(NodeKind::If, first);
    auto t = std::make_shared<Expr>();
    t->kind = ExprKind::Literal;
    t->lit = LiteralType::Bool;
    t->text = "1";
    t->span = span_of(first, first);
    wrapper->exprs.push_back(t);
    wrapper->bodies.push_back(parse_body({}));
    while (is_kw("catch") || is_kw("finally")) {
      Block ignored = {};
      wrapper->bodies.push_back(Block{skip_balanced_other()});
      (void)ignored;
    }
    // catch blocks are "else" branches that are never taken
    if (wrapper->bodies.size() > 1) {
      Block rest;
      for (std::size_t b = 1; b < wrapper->bodies.size(); ++b)
        rest.insert(rest.end(), wrapper->bodies[b].begin(), wrapper->bodies[b].end());
      wrapper->bodies.resize(1);
      wrapper->bodies.push_back(rest);
      wrapper->has_else = true;
    }
    close_node(*wrapper);
    return wrapper;
  }

  ExprPtr parse_paren_expr() {
    expect_op("(");
    auto e = parse_expr(0);
    expect_op(")");
    return e;
  }

  NodePtr parse_if() {
    auto n = new_node(NodeKind::If, take());
    n->exprs.push_back(parse_paren_expr());
    bool alt = uses_alt_syntax();
    n->bodies.push_back(parse_body({"elseif", "else", "endif"}));
    while (true) {
      if (is_kw("elseif") || (is_kw("else") && is_kw("if", 1))) {
        if (is_kw("else")) take();
        take();
        n->exprs.push_back(parse_paren_expr());
        n->bodies.push_back(parse_body({"elseif", "else", "endif"}));
        continue;
      }
      if (is_kw("else")) {
        take();
        n->has_else = true;
        n->bodies.push_back(parse_body({"endif"}));
      }
      break;
    }
    if (alt) {
      if (!is_kw("endif")) fail("expected 'endif'");
      take();
      end_statement();
    }
    close_node(*n);
    return n;
  }

  NodePtr parse_for() {
    auto n = new_node(NodeKind::For, take());
    expect_op("(");
    auto list = [&](std::string_view stop, int& count) {
      while (!is_op(stop)) {
        n->exprs.push_back(parse_expr(0));
        ++count;
        if (is_op(",")) take();
        else if (!is_op(stop)) fail("malformed for-loop header");
      }
      take();
    };
    list(";", n->for_init);
    list(";", n->for_cond);
    list(")", n->for_step);
    bool alt = uses_alt_syntax();
    n->bodies.push_back(parse_body({"endfor"}));
    if (alt) {
      take();
      end_statement();
    }
    close_node(*n);
    return n;
  }

  NodePtr parse_foreach() {
    auto n = new_node(NodeKind::Foreach, take());
    expect_op("(");
    n->exprs.push_back(parse_expr(0));
    if (!is_kw("as")) fail("expected 'as' in foreach");
    take();
    if (is_op("&")) take();
    auto first = parse_expr(0);
    if (is_op("=>")) {
      take();
      if (is_op("&")) take();
      n->exprs.push_back(first);
      n->exprs.push_back(parse_expr(0));
    } else {
      n->exprs.push_back(nullptr);
      n->exprs.push_back(first);
    }
    expect_op(")");
    bool alt = uses_alt_syntax();
    n->bodies.push_back(parse_body({"endforeach"}));
    if (alt) {
      take();
      end_statement();
    }
    close_node(*n);
    return n;
  }

  NodePtr parse_switch() {
    auto n = new_node(NodeKind::Switch, take());
    n->exprs.push_back(parse_paren_expr());
    bool alt = is_op(":");
    int open_line = peek().line;
    if (alt) take();
    else expect_op("{");
    while (true) {
      if (is(Tok::End)) throw ParseError(path_, open_line, "unbalanced braces: missing '}' for switch");
      if (!alt && is_op("}")) {
        take();
        break;
      }
      if (alt && is_kw("endswitch")) {
        take();
        end_statement();
        break;
      }
      if (is(Tok::CloseTag) || is(Tok::OpenTag) || is_op(";")) {
        if (is(Tok::OpenTag)) php_open_ = peek().begin;
        take();
        continue;
      }
      if (is(Tok::InlineHtml) && text::trim(peek().text).empty()) {
        take();
        continue;
      }
      if (is_kw("case")) {
        take();
        n->exprs.push_back(parse_expr(0));
      } else if (is_kw("default")) {
        take();
        n->exprs.push_back(nullptr);
      } else {
        fail("expected 'case' or 'default' in switch");
      }
      if (is_op(":") || is_op(";")) take();
      else fail("expected ':' after case label");
      Block body;
      while (!is_kw("case") && !is_kw("default") && !is_op("}") && !is_kw("endswitch")) {
        if (is(Tok::End)) throw ParseError(path_, open_line, "unbalanced braces: missing '}' for switch");
        parse_statement_into(body, false);
      }
      n->bodies.push_back(std::move(body));
    }
    close_node(*n);
    return n;
  }

  NodePtr parse_function() {
    auto n = new_node(NodeKind::Function, take());
    if (is_op("&")) take();
    n->name = take().text;
    expect_op("(");
    while (!is_op(")")) {
      Param p;
      // optional type hint(s)
      while (is(Tok::Ident) || is_op("?") || is_op("|")) take();
      if (is_op("&")) {
        p.by_ref = true;
        take();
      }
      if (is_op("...")) take();
      if (!is(Tok::Variable)) fail("expected parameter name");
      p.name = take().text;
      if (is_op("=")) {
        take();
        p.default_value = parse_expr(0);
      }
      n->params.push_back(std::move(p));
      if (is_op(",")) take();
      else if (!is_op(")")) fail("expected ',' or ')' in parameter list");
    }
    take();
    if (is_op(":")) {  // return type
      take();
      while (is(Tok::Ident) || is_op("?") || is_op("|")) take();
    }
    if (!is_op("{")) fail("expected '{' to open function body");
    n->bodies.push_back(parse_body({}));
    close_node(*n);
    return n;
  }

  // ---- expressions --------------------------------------------------------

  static int binary_prec(const Token& t) {
    if (t.kind == Tok::Ident) {
      std::string k = text::to_lower(t.text);
      if (k == "or") return 1;
      if (k == "xor") return 2;
      if (k == "and") return 3;
      if (k == "instanceof") return 18;
      return -1;
    }
    if (t.kind != Tok::Op) return -1;
    const std::string& o = t.text;
    if (o == "?") return 5;
    if (o == "??") return 6;
    if (o == "||") return 7;
    if (o == "&&") return 8;
    if (o == "|") return 9;
    if (o == "^") return 10;
    if (o == "&") return 11;
    if (o == "==" || o == "!=" || o == "===" || o == "!==" || o == "<>" || o == "<=>") return 12;
    if (o == "<" || o == "<=" || o == ">" || o == ">=") return 13;
    if (o == ".") return 14;
    if (o == "<<" || o == ">>") return 15;
    if (o == "+" || o == "-") return 16;
    if (o == "*" || o == "/" || o == "%") return 17;
    if (o == "**") return 20;
    return -1;
  }

  static bool is_assign_op(const Token& t) {
    if (t.kind != Tok::Op) return false;
    static const std::set<std::string> ops = {"=",  "+=", "-=", "*=", "/=", ".=", "%=",
                                              "&=", "|=", "^=", "<<=", ">>=", "**=", "?\?="};
    return ops.count(t.text) > 0;
  }

  static bool is_lvalue(const Expr& e) {
    return e.kind == ExprKind::Variable || e.kind == ExprKind::Index || e.kind == ExprKind::Property ||
           (e.kind == ExprKind::Opaque && e.text == "list");
  }

  ExprPtr parse_expr(int min_prec) {
    auto left = parse_unary();
    while (true) {
      const Token& t = peek();
      int prec = binary_prec(t);
      if (prec < 0 || prec < min_prec) break;
      if (t.kind == Tok::Op && t.text == "?") {
        take();
        auto e = std::make_shared<Expr>();
        e->kind = ExprKind::Ternary;
        e->span = left->span;
        e->kids.push_back(left);
        if (is_op(":")) {
          e->kids.push_back(nullptr);
        } else {
          e->kids.push_back(parse_expr(0));
        }
        expect_op(":");
        e->kids.push_back(parse_expr(prec + 1));
        finish(*e, prev());
        left = e;
        continue;
      }
      std::string op = t.kind == Tok::Ident ? text::to_lower(t.text) : t.text;
      take();
      bool right_assoc = op == "**" || op == "??";
      ExprPtr right;
      if (op == "instanceof") {
        right = parse_unary();
      } else {
        right = parse_expr(right_assoc ? prec : prec + 1);
      }
      auto e = std::make_shared<Expr>();
      e->kind = ExprKind::Binary;
      e->text = op;
      e->span = left->span;
      e->kids = {left, right};
      finish(*e, prev());
      left = e;
    }
    return left;
  }

  ExprPtr parse_unary() {
    const Token& t = peek();
    if (t.kind == Tok::Op) {
      if (t.text == "!" || t.text == "-" || t.text == "+" || t.text == "~") {
        take();
        auto e = new_expr(ExprKind::Unary, t);
        e->text = t.text;
        // '!' binds looser than arithmetic/comparison of its operand chain start
        e->kids.push_back(t.text == "!" ? parse_expr(19) : parse_expr(19));
        finish(*e, prev());
        return e;
      }
      if (t.text == "@") {
        take();
        return parse_unary();
      }
      if (t.text == "&") {
        take();
        return parse_unary();
      }
      if (t.text == "++" || t.text == "--") {
        take();
        auto e = new_expr(ExprKind::IncDec, t);
        e->text = t.text;
        e->prefix = true;
        e->kids.push_back(parse_unary());
        finish(*e, prev());
        return e;
      }
    }
    if (t.kind == Tok::Cast) {
      take();
      auto e = new_expr(ExprKind::Cast, t);
      e->text = t.text;
      e->kids.push_back(parse_unary());
      finish(*e, prev());
      return e;
    }
    if (t.kind == Tok::Ident) {
      std::string k = text::to_lower(t.text);
      if (k == "new") {
        take();
        auto e = new_expr(ExprKind::New, t);
        if (peek().kind == Tok::Ident) {
          e->text = take().text;
        } else if (is(Tok::Variable)) {
          e->text = "$" + take().text;
        } else if (is_kw("class")) {
          fail("anonymous classes are not supported");
        }
        if (is_op("(")) e->kids = parse_args();
        finish(*e, prev());
        return parse_postfix(e);
      }
      if (k == "print") {
        take();
        auto e = new_expr(ExprKind::Call, t);
        e->text = "print";
        e->kids.push_back(parse_expr(4));
        finish(*e, prev());
        return e;
      }
      if (k == "include" || k == "include_once" || k == "require" || k == "require_once") {
        take();
        auto e = new_expr(ExprKind::Include, t);
        e->text = k;
        e->kids.push_back(parse_expr(4));
        finish(*e, prev());
        return e;
      }
      if (k == "clone") {
        take();
        return parse_unary();
      }
    }
    return parse_postfix(parse_primary());
  }

  std::vector<ExprPtr> parse_args() {
    std::vector<ExprPtr> args;
    expect_op("(");
    while (!is_op(")")) {
      if (is_op("...")) take();
      if (peek().kind == Tok::Ident && is_op(":", 1) && !is_op("::", 1)) {  // named argument
        take();
        take();
      }
      args.push_back(parse_expr(0));
      if (is_op(",")) take();
      else if (!is_op(")")) fail("expected ',' or ')' in argument list");
    }
    take();
    return args;
  }

  ExprPtr parse_postfix(ExprPtr base) {
    while (true) {
      const Token& t = peek();
      if (t.kind != Tok::Op) break;
      if (t.text == "[") {
        take();
        auto e = std::make_shared<Expr>();
        e->kind = ExprKind::Index;
        e->span = base->span;
        e->kids.push_back(base);
        if (is_op("]")) {
          e->kids.push_back(nullptr);
        } else {
          e->kids.push_back(parse_expr(0));
        }
        expect_op("]");
        finish(*e, prev());
        base = e;
        continue;
      }
      if (t.text == "{" && (base->kind == ExprKind::Variable || base->kind == ExprKind::Index) &&
          peek(1).kind != Tok::Op) {
        // legacy string offset $s{0}
        take();
        auto e = std::make_shared<Expr>();
        e->kind = ExprKind::Index;
        e->span = base->span;
        e->kids.push_back(base);
        e->kids.push_back(parse_expr(0));
        expect_op("}");
        finish(*e, prev());
        base = e;
        continue;
      }
      if (t.text == "->" || t.text == "?->") {
        take();
        std::string name;
        if (peek().kind == Tok::Ident) {
          name = take().text;
        } else if (is(Tok::Variable)) {
          name = "$" + take().text;
        } else if (is_op("{")) {
          take();
          parse_expr(0);
          expect_op("}");
          name = "{}";
        } else {
          fail("expected member name after '->'");
        }
        if (is_op("(")) {
          auto e = std::make_shared<Expr>();
          e->kind = ExprKind::MethodCall;
          e->text = name;
          e->span = base->span;
          e->kids.push_back(base);
          auto args = parse_args();
          e->kids.insert(e->kids.end(), args.begin(), args.end());
          finish(*e, prev());
          base = e;
        } else {
          auto e = std::make_shared<Expr>();
          e->kind = ExprKind::Property;
          e->text = name;
          e->span = base->span;
          e->kids.push_back(base);
          finish(*e, prev());
          base = e;
        }
        continue;
      }
      if (t.text == "::") {
        take();
        std::string member;
        if (peek().kind == Tok::Ident) member = take().text;
        else if (is(Tok::Variable)) member = "$" + take().text;
        else fail("expected member after '::'");
        auto e = std::make_shared<Expr>();
        e->span = base->span;
        e->text = (base->kind == ExprKind::Constant ? base->text : std::string("?")) + "::" + member;
        if (is_op("(")) {
          e->kind = ExprKind::StaticCall;
          e->kids = parse_args();
        } else {
          e->kind = ExprKind::Constant;
        }
        finish(*e, prev());
        base = e;
        continue;
      }
      if (t.text == "(" && base->kind != ExprKind::Literal) {
        // call through an expression ($fn(), closure())
        auto e = std::make_shared<Expr>();
        e->kind = ExprKind::Opaque;
        e->text = "dyncall";
        e->span = base->span;
        e->kids.push_back(base);
        auto args = parse_args();
        e->kids.insert(e->kids.end(), args.begin(), args.end());
        finish(*e, prev());
        base = e;
        continue;
      }
      if (t.text == "++" || t.text == "--") {
        take();
        auto e = std::make_shared<Expr>();
        e->kind = ExprKind::IncDec;
        e->text = t.text;
        e->span = base->span;
        e->kids.push_back(base);
        finish(*e, prev());
        base = e;
        continue;
      }
      if (is_assign_op(t) && is_lvalue(*base)) {
        take();
        if (t.text == "=" && is_op("&")) take();
        auto e = std::make_shared<Expr>();
        e->kind = ExprKind::Assign;
        e->text = t.text;
        e->span = base->span;
        e->kids.push_back(base);
        e->kids.push_back(parse_expr(4));
        finish(*e, prev());
        return e;
      }
      break;
    }
    return base;
  }

  ExprPtr parse_array_items(std::shared_ptr<Expr> e, std::string_view close) {
    while (!is_op(close)) {
      if (is_op(",")) {  // list() holes
        take();
        continue;
      }
      if (is_op("...")) take();
      if (is_op("&")) take();
      auto first = parse_expr(0);
      if (is_op("=>")) {
        take();
        if (is_op("&")) take();
        e->keys.push_back(first);
        e->kids.push_back(parse_expr(0));
      } else {
        e->keys.push_back(nullptr);
        e->kids.push_back(first);
      }
      if (is_op(",")) take();
      else if (!is_op(close)) fail("expected ',' in array literal");
    }
    take();
    finish(*e, prev());
    return e;
  }

  ExprPtr parse_primary() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Variable: {
        take();
        auto e = new_expr(ExprKind::Variable, t);
        e->text = t.text;
        return e;
      }
      case Tok::Int:
      case Tok::Float: {
        take();
        auto e = new_expr(ExprKind::Literal, t);
        e->lit = t.kind == Tok::Int ? LiteralType::Int : LiteralType::Float;
        e->text = t.text;
        return e;
      }
      case Tok::String: {
        take();
        auto e = new_expr(ExprKind::Literal, t);
        e->lit = LiteralType::String;
        e->text = t.text;
        return e;
      }
      case Tok::Template:
      case Tok::Backtick: {
        take();
        return interpolate(t);
      }
      case Tok::Op: {
        if (t.text == "(") {
          take();
          auto inner = parse_expr(0);
          expect_op(")");
          return inner;
        }
        if (t.text == "[") {
          take();
          auto e = new_expr(ExprKind::Array, t);
          return parse_array_items(e, "]");
        }
        if (t.text == "$") {
          // variable variables: $$name / ${expr}
          take();
          auto e = new_expr(ExprKind::Opaque, t);
          e->text = "varvar";
          if (is(Tok::Variable)) {
            auto v = new_expr(ExprKind::Variable, peek());
            v->text = take().text;
            e->kids.push_back(v);
          } else if (is_op("{")) {
            take();
            e->kids.push_back(parse_expr(0));
            expect_op("}");
          } else {
            fail("malformed variable variable");
          }
          finish(*e, prev());
          return e;
        }
        if (t.text == "#[") {
          fail("attributes are not supported");
        }
        break;
      }
      case Tok::Ident: {
        std::string k = text::to_lower(t.text);
        take();
        if (k == "true" || k == "false") {
          auto e = new_expr(ExprKind::Literal, t);
          e->lit = LiteralType::Bool;
          e->text = k == "true" ? "1" : "";
          return e;
        }
        if (k == "null") {
          auto e = new_expr(ExprKind::Literal, t);
          e->lit = LiteralType::Null;
          return e;
        }
        if (k == "array" && is_op("(")) {
          take();
          auto e = new_expr(ExprKind::Array, t);
          return parse_array_items(e, ")");
        }
        if (k == "list" && is_op("(")) {
          take();
          auto e = new_expr(ExprKind::Array, t);
          parse_array_items(e, ")");
          e->kind = ExprKind::Opaque;
          e->text = "list";
          return e;
        }
        if (k == "isset" && is_op("(")) {
          auto e = new_expr(ExprKind::Isset, t);
          e->kids = parse_args();
          finish(*e, prev());
          return e;
        }
        if (k == "empty" && is_op("(")) {
          auto e = new_expr(ExprKind::Empty, t);
          e->kids = parse_args();
          if (e->kids.size() != 1) fail("empty() takes one argument");
          finish(*e, prev());
          return e;
        }
        if (k == "exit" || k == "die") {
          auto e = new_expr(ExprKind::Exit, t);
          e->text = k;
          if (is_op("(")) e->kids = parse_args();
          finish(*e, prev());
          return e;
        }
        if (k == "function" || k == "fn" || k == "static") {
          return parse_closure(t);
        }
        if (k == "match" && is_op("(")) fail("match expressions are not supported");
        if (is_op("(")) {
          auto e = new_expr(ExprKind::Call, t);
          e->text = t.text;
          e->kids = parse_args();
          finish(*e, prev());
          return e;
        }
        auto e = new_expr(ExprKind::Constant, t);
        e->text = t.text;
        return e;
      }
      default:
        break;
    }
    fail("unexpected '" + describe(t) + "' in expression");
  }

  ExprPtr parse_closure(const Token& t) {
    auto e = new_expr(ExprKind::Opaque, t);
    e->text = "closure";
    if (text::to_lower(t.text) == "static") {
      if (!is_kw("function") && !is_kw("fn")) fail("unexpected 'static'");
      take();
    }
    bool arrow = text::to_lower(prev().text) == "fn";
    if (is_op("&")) take();
    // parameters
    expect_op("(");
    int depth = 1;
    while (depth > 0) {
      if (is(Tok::End)) fail("unterminated closure parameter list");
      if (is_op("(")) ++depth;
      if (is_op(")")) --depth;
      take();
    }
    if (is_kw("use")) {
      take();
      auto args = parse_args();
      e->kids.insert(e->kids.end(), args.begin(), args.end());
    }
    if (is_op(":")) {
      take();
      while (is(Tok::Ident) || is_op("?") || is_op("|")) take();
    }
    if (arrow) {
      expect_op("=>");
      e->kids.push_back(parse_expr(4));
    } else {
      if (!is_op("{")) fail("expected closure body");
      int open_line = peek().line;
      int d = 0;
      do {
        if (is(Tok::End)) throw ParseError(path_, open_line, "unbalanced braces in closure");
        if (is_op("{")) ++d;
        if (is_op("}")) --d;
        take();
      } while (d > 0);
    }
    finish(*e, prev());
    return e;
  }

  // Splits a double-quoted/heredoc/backtick body into literal and variable parts.
  ExprPtr interpolate(const Token& t) {
    auto e = new_expr(t.kind == Tok::Backtick ? ExprKind::Backtick : ExprKind::Interpolated, t);
    const std::string& raw = t.text;
    std::string lit_raw;
    std::size_t lit_start = 0;
    int line = t.line;
    auto line_at = [&](std::size_t off) {
      int l = t.line;
      std::size_t body_start = t.body_offset;
      for (std::size_t p = body_start; p < body_start + off && p < source_.size(); ++p)
        if (source_[p] == '\n') ++l;
      return l;
    };
    auto flush = [&](std::size_t upto) {
      if (!lit_raw.empty()) {
        auto lit = std::make_shared<Expr>();
        lit->kind = ExprKind::Literal;
        lit->lit = LiteralType::String;
        lit->text = decode_escapes(lit_raw, t.kind == Tok::Backtick);
        lit->span.begin = t.body_offset + lit_start;
        lit->span.end = t.body_offset + upto;
        lit->span.line = line_at(lit_start);
        lit->span.end_line = line_at(upto);
        e->kids.push_back(lit);
        lit_raw.clear();
      }
    };
    (void)line;
    std::size_t i = 0;
    while (i < raw.size()) {
      char c = raw[i];
      if (c == '\\' && i + 1 < raw.size()) {
        if (lit_raw.empty()) lit_start = i;
        lit_raw.push_back(c);
        lit_raw.push_back(raw[i + 1]);
        i += 2;
        continue;
      }
      bool simple_var = c == '$' && i + 1 < raw.size() && is_ident_start(raw[i + 1]);
      bool complex_var = c == '{' && i + 1 < raw.size() && raw[i + 1] == '$';
      bool dollar_brace = c == '$' && i + 1 < raw.size() && raw[i + 1] == '{';
      if (!simple_var && !complex_var && !dollar_brace) {
        if (lit_raw.empty()) lit_start = i;
        lit_raw.push_back(c);
        ++i;
        continue;
      }
      flush(i);
      std::size_t var_start = i;
      ExprPtr part;
      if (simple_var) {
        std::size_t j = i + 1;
        while (j < raw.size() && is_ident_char(raw[j])) ++j;
        auto v = std::make_shared<Expr>();
        v->kind = ExprKind::Variable;
        v->text = raw.substr(i + 1, j - i - 1);
        v->span.begin = t.body_offset + i;
        v->span.end = t.body_offset + j;
        v->span.line = v->span.end_line = line_at(i);
        part = v;
        if (j < raw.size() && raw[j] == '[') {
          std::size_t close = raw.find(']', j);
          if (close != std::string::npos) {
            std::string key = raw.substr(j + 1, close - j - 1);
            auto idx = std::make_shared<Expr>();
            idx->kind = ExprKind::Index;
            idx->span = v->span;
            idx->span.end = t.body_offset + close + 1;
            idx->kids.push_back(v);
            auto k = std::make_shared<Expr>();
            if (!key.empty() && key[0] == '$') {
              k->kind = ExprKind::Variable;
              k->text = key.substr(1);
            } else {
              k->kind = ExprKind::Literal;
              bool numeric = !key.empty() && std::all_of(key.begin(), key.end(), [](char ch) {
                return std::isdigit(static_cast<unsigned char>(ch)) || ch == '-';
              });
              k->lit = numeric ? LiteralType::Int : LiteralType::String;
              if (key.size() >= 2 && (key.front() == '\'' || key.front() == '"')) key = key.substr(1, key.size() - 2);
              k->text = key;
            }
            k->span = idx->span;
            idx->kids.push_back(k);
            part = idx;
            j = close + 1;
          }
        } else if (j + 1 < raw.size() && raw[j] == '-' && raw[j + 1] == '>' && j + 2 < raw.size() &&
                   is_ident_start(raw[j + 2])) {
          std::size_t q = j + 2;
          while (q < raw.size() && is_ident_char(raw[q])) ++q;
          auto p = std::make_shared<Expr>();
          p->kind = ExprKind::Property;
          p->text = raw.substr(j + 2, q - j - 2);
          p->span = v->span;
          p->span.end = t.body_offset + q;
          p->kids.push_back(v);
          part = p;
          j = q;
        }
        i = j;
      } else {
        // {$expr} or ${name}
        std::size_t open = complex_var ? i : i + 1;
        int depth = 0;
        std::size_t j = open;
        for (; j < raw.size(); ++j) {
          if (raw[j] == '{') ++depth;
          else if (raw[j] == '}' && --depth == 0) break;
        }
        if (j >= raw.size()) throw ParseError(path_, line_at(i), "unterminated {$...} in string");
        std::string inner = raw.substr(open + 1, j - open - 1);
        if (dollar_brace) inner = "$" + inner;
        std::size_t base = t.body_offset + open + 1 - (dollar_brace ? 1 : 0);
        Lexer lx(path_, inner, true, base, line_at(open));
        Parser sub(path_, source_, lx.run());
        part = sub.parse_standalone_expr();
        i = j + 1;
      }
      (void)var_start;
      e->kids.push_back(part);
    }
    flush(raw.size());
    return e;
  }
};

}  // namespace

ParsedFile parse(const SourceFile& file) {
  Lexer lexer(file.path, file.content);
  auto toks = lexer.run();
  Parser parser(file.path, file.content, std::move(toks));
  ParsedFile out;
  out.path = file.path;
  out.source = file.content;
  out.statements = parser.parse_file(out.html);
  return out;
}

std::optional<std::string> fold_constant_string(const Expr& e, const std::string& dir_placeholder) {
  switch (e.kind) {
    case ExprKind::Literal:
      if (e.lit == LiteralType::String || e.lit == LiteralType::Int || e.lit == LiteralType::Float) return e.text;
      return std::nullopt;
    case ExprKind::Interpolated: {
      std::string out;
      for (const auto& k : e.kids) {
        if (!k || k->kind != ExprKind::Literal) return std::nullopt;
        out += k->text;
      }
      return out;
    }
    case ExprKind::Binary: {
      if (e.text != ".") return std::nullopt;
      auto l = fold_constant_string(*e.kids[0], dir_placeholder);
      auto r = fold_constant_string(*e.kids[1], dir_placeholder);
      if (!l || !r) return std::nullopt;
      return *l + *r;
    }
    case ExprKind::Constant:
      if (e.text == "__DIR__") return dir_placeholder;
      return std::nullopt;
    case ExprKind::Call: {
      if (text::to_lower(e.text) == "dirname" && e.kids.size() == 1 && e.kids[0]->kind == ExprKind::Constant &&
          e.kids[0]->text == "__FILE__")
        return dir_placeholder;
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

}  // namespace pocgen::php
