#include "pocgen/interp.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <memory>
#include <regex>
#include <set>
#include <sstream>
#include <variant>

#include "json.hpp"
#include "pocgen/php_ast.hpp"

namespace pocgen::interp {

namespace {

using php::Block;
using php::Expr;
using php::ExprKind;
using php::LiteralType;
using php::Node;
using php::NodeKind;

// ---------------------------------------------------------------------------
// values

struct ArrayData;

struct Value {
  enum class T { Null, Bool, Int, Float, Str, Arr };
  T t = T::Null;
  bool b = false;
  std::int64_t i = 0;
  double f = 0;
  std::string s;
  std::shared_ptr<ArrayData> a;

  static Value of(bool v) {
    Value x;
    x.t = T::Bool;
    x.b = v;
    return x;
  }
  static Value of(std::int64_t v) {
    Value x;
    x.t = T::Int;
    x.i = v;
    return x;
  }
  static Value of(int v) { return of(static_cast<std::int64_t>(v)); }
  static Value of(double v) {
    Value x;
    x.t = T::Float;
    x.f = v;
    return x;
  }
  static Value of(std::string v) {
    Value x;
    x.t = T::Str;
    x.s = std::move(v);
    return x;
  }
  static Value of(const char* v) { return of(std::string(v)); }
  static Value array();
  bool is_null() const { return t == T::Null; }
  bool is_arr() const { return t == T::Arr; }
};

using Key = std::variant<std::int64_t, std::string>;

struct ArrayData {
  std::vector<std::pair<Key, Value>> items;
  std::map<Key, std::size_t> index;
  std::int64_t next = 0;

  const Value* get(const Key& k) const {
    auto it = index.find(k);
    return it == index.end() ? nullptr : &items[it->second].second;
  }
  Value& set(const Key& k) {
    auto it = index.find(k);
    if (it != index.end()) return items[it->second].second;
    if (auto* n = std::get_if<std::int64_t>(&k); n && *n >= next) next = *n + 1;
    index[k] = items.size();
    items.push_back({k, Value{}});
    return items.back().second;
  }
  Value& append() { return set(Key{next}); }
  void erase(const Key& k) {
    auto it = index.find(k);
    if (it == index.end()) return;
    items.erase(items.begin() + static_cast<std::ptrdiff_t>(it->second));
    index.clear();
    for (std::size_t n = 0; n < items.size(); ++n) index[items[n].first] = n;
  }
};

Value Value::array() {
  Value x;
  x.t = T::Arr;
  x.a = std::make_shared<ArrayData>();
  return x;
}

ArrayData& mut_array(Value& v) {
  if (v.t != Value::T::Arr) v = Value::array();
  if (!v.a) v.a = std::make_shared<ArrayData>();
  if (v.a.use_count() > 1) v.a = std::make_shared<ArrayData>(*v.a);
  return *v.a;
}

struct Fatal {
  std::string message;
};

struct ExitSignal {};

bool parse_numeric(std::string_view s, double& out, bool& is_int, bool allow_trailing) {
  std::size_t p = 0;
  while (p < s.size() && std::isspace(static_cast<unsigned char>(s[p]))) ++p;
  std::size_t start = p;
  if (p < s.size() && (s[p] == '+' || s[p] == '-')) ++p;
  std::size_t digits = 0;
  while (p < s.size() && std::isdigit(static_cast<unsigned char>(s[p]))) ++p, ++digits;
  is_int = true;
  if (p < s.size() && s[p] == '.') {
    is_int = false;
    ++p;
    while (p < s.size() && std::isdigit(static_cast<unsigned char>(s[p]))) ++p, ++digits;
  }
  if (digits == 0) return false;
  if (p < s.size() && (s[p] == 'e' || s[p] == 'E')) {
    std::size_t q = p + 1;
    if (q < s.size() && (s[q] == '+' || s[q] == '-')) ++q;
    if (q < s.size() && std::isdigit(static_cast<unsigned char>(s[q]))) {
      is_int = false;
      p = q;
      while (p < s.size() && std::isdigit(static_cast<unsigned char>(s[p]))) ++p;
    }
  }
  std::size_t end = p;
  while (p < s.size() && std::isspace(static_cast<unsigned char>(s[p]))) ++p;
  if (p != s.size() && !allow_trailing) return false;
  out = std::strtod(std::string(s.substr(start, end - start)).c_str(), nullptr);
  return true;
}

bool is_numeric_str(std::string_view s) {
  double d;
  bool i;
  return parse_numeric(s, d, i, false);
}

std::string float_str(double d) {
  if (std::isnan(d)) return "NAN";
  if (std::isinf(d)) return d > 0 ? "INF" : "-INF";
  if (d == std::floor(d) && std::fabs(d) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", d);
    std::string s = buf;
    return s == "-0" ? "-0" : s;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.14G", d);
  std::string s = buf;
  auto e = s.find('E');
  if (e != std::string::npos && s.find('.') == std::string::npos) s.insert(e, ".0");
  return s;
}

std::string to_str(const Value& v) {
  switch (v.t) {
    case Value::T::Null: return "";
    case Value::T::Bool: return v.b ? "1" : "";
    case Value::T::Int: return std::to_string(v.i);
    case Value::T::Float: return float_str(v.f);
    case Value::T::Str: return v.s;
    case Value::T::Arr: return "Array";
  }
  return "";
}

bool to_bool(const Value& v) {
  switch (v.t) {
    case Value::T::Null: return false;
    case Value::T::Bool: return v.b;
    case Value::T::Int: return v.i != 0;
    case Value::T::Float: return v.f != 0.0;
    case Value::T::Str: return !v.s.empty() && v.s != "0";
    case Value::T::Arr: return v.a && !v.a->items.empty();
  }
  return false;
}

/// Number for arithmetic: Int or Float.
Value to_number(const Value& v) {
  switch (v.t) {
    case Value::T::Null: return Value::of(std::int64_t{0});
    case Value::T::Bool: return Value::of(std::int64_t{v.b});
    case Value::T::Int:
    case Value::T::Float: return v;
    case Value::T::Str: {
      double d;
      bool is_int;
      if (!parse_numeric(v.s, d, is_int, true)) return Value::of(std::int64_t{0});
      if (is_int && std::fabs(d) < 9.2e18) return Value::of(static_cast<std::int64_t>(d));
      return Value::of(d);
    }
    case Value::T::Arr: throw Fatal{"Unsupported operand types: array"};
  }
  return Value::of(std::int64_t{0});
}

std::int64_t to_int(const Value& v) {
  Value n = to_number(v);
  if (n.t == Value::T::Int) return n.i;
  if (std::isnan(n.f) || std::isinf(n.f)) return 0;
  return static_cast<std::int64_t>(n.f);
}

double to_float(const Value& v) {
  Value n = to_number(v);
  return n.t == Value::T::Int ? static_cast<double>(n.i) : n.f;
}

Key to_key(const Value& v) {
  switch (v.t) {
    case Value::T::Null: return std::string();
    case Value::T::Bool: return std::int64_t{v.b};
    case Value::T::Int: return v.i;
    case Value::T::Float: return static_cast<std::int64_t>(v.f);
    case Value::T::Str: {
      const std::string& s = v.s;
      bool canonical = !s.empty() && s.size() < 19 && (s == "0" || (s[0] != '0' && s[0] != '+' && !(s[0] == '-' && (s.size() == 1 || s[1] == '0'))));
      if (canonical)
        for (std::size_t k = s[0] == '-' ? 1 : 0; k < s.size(); ++k)
          if (!std::isdigit(static_cast<unsigned char>(s[k]))) canonical = false;
      if (canonical) return static_cast<std::int64_t>(std::stoll(s));
      return s;
    }
    case Value::T::Arr: throw Fatal{"Illegal offset type"};
  }
  return std::string();
}

Value key_value(const Key& k) {
  if (auto* n = std::get_if<std::int64_t>(&k)) return Value::of(*n);
  return Value::of(std::get<std::string>(k));
}

int cmp_num(double a, double b) { return a < b ? -1 : (a > b ? 1 : 0); }

int compare(const Value& a, const Value& b);

bool loose_eq(const Value& a, const Value& b) {
  using T = Value::T;
  if (a.t == T::Arr || b.t == T::Arr) {
    if (a.t != T::Arr || b.t != T::Arr) return false;
    if (a.a->items.size() != b.a->items.size()) return false;
    for (const auto& [k, v] : a.a->items) {
      const Value* o = b.a->get(k);
      if (!o || !loose_eq(v, *o)) return false;
    }
    return true;
  }
  return compare(a, b) == 0;
}

/// Loose three-way comparison.
int compare(const Value& a, const Value& b) {
  using T = Value::T;
  if (a.t == T::Bool || b.t == T::Bool || (a.t == T::Null && b.t != T::Str) || (b.t == T::Null && a.t != T::Str)) {
    bool x = to_bool(a), y = to_bool(b);
    return x == y ? 0 : (x ? 1 : -1);
  }
  if (a.t == T::Null && b.t == T::Str) return b.s.empty() ? 0 : -1;
  if (b.t == T::Null && a.t == T::Str) return a.s.empty() ? 0 : 1;
  if (a.t == T::Str && b.t == T::Str) {
    if (is_numeric_str(a.s) && is_numeric_str(b.s)) return cmp_num(to_float(a), to_float(b));
    int c = a.s.compare(b.s);
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  if (a.t == T::Arr || b.t == T::Arr) {
    if (a.t != T::Arr) return -1;
    if (b.t != T::Arr) return 1;
    return cmp_num(static_cast<double>(a.a->items.size()), static_cast<double>(b.a->items.size()));
  }
  if (a.t == T::Str && !is_numeric_str(a.s)) {
    int c = a.s.compare(to_str(b));
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  if (b.t == T::Str && !is_numeric_str(b.s)) {
    int c = to_str(a).compare(b.s);
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  Value x = to_number(a), y = to_number(b);
  if (x.t == T::Int && y.t == T::Int) return x.i < y.i ? -1 : (x.i > y.i ? 1 : 0);
  return cmp_num(to_float(x), to_float(y));
}

bool strict_eq(const Value& a, const Value& b) {
  using T = Value::T;
  if (a.t != b.t) return false;
  switch (a.t) {
    case T::Null: return true;
    case T::Bool: return a.b == b.b;
    case T::Int: return a.i == b.i;
    case T::Float: return a.f == b.f;
    case T::Str: return a.s == b.s;
    case T::Arr: {
      if (a.a->items.size() != b.a->items.size()) return false;
      for (std::size_t n = 0; n < a.a->items.size(); ++n)
        if (a.a->items[n].first != b.a->items[n].first || !strict_eq(a.a->items[n].second, b.a->items[n].second))
          return false;
      return true;
    }
  }
  return false;
}

std::string type_name(const Value& v) {
  switch (v.t) {
    case Value::T::Null: return "NULL";
    case Value::T::Bool: return "boolean";
    case Value::T::Int: return "integer";
    case Value::T::Float: return "double";
    case Value::T::Str: return "string";
    case Value::T::Arr: return "array";
  }
  return "NULL";
}

Value list_of(const std::vector<std::string>& items) {
  Value out = Value::array();
  auto& a = mut_array(out);
  for (const auto& s : items) a.append() = Value::of(s);
  return out;
}

// ---------------------------------------------------------------------------
// string helpers

std::string html_escape(const std::string& s, int flags) {
  bool dq = (flags & 2) != 0, sq = (flags & 3) == 3;
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += dq ? "&quot;" : "\""; break;
      case '\'': out += sq ? "&#039;" : "'"; break;
      default: out += c;
    }
  }
  return out;
}

std::string html_unescape(std::string s) {
  static const std::pair<const char*, const char*> table[] = {
      {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&#039;", "'"}, {"&#39;", "'"}, {"&apos;", "'"}, {"&amp;", "&"}};
  for (const auto& [from, to] : table) s = text::replace_all(s, from, to);
  return s;
}

std::string strip_tags(const std::string& s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '<') {
      if (s.compare(i, 4, "<!--") == 0) {
        auto e = s.find("-->", i + 4);
        i = e == std::string::npos ? s.size() : e + 3;
        continue;
      }
      char q = 0;
      std::size_t j = i + 1;
      for (; j < s.size(); ++j) {
        if (q) {
          if (s[j] == q) q = 0;
        } else if (s[j] == '"' || s[j] == '\'') {
          q = s[j];
        } else if (s[j] == '>') {
          break;
        }
      }
      i = j < s.size() ? j + 1 : s.size();
      continue;
    }
    out += s[i++];
  }
  return out;
}

std::string charlist(const std::string& spec) {
  std::string out;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    if (k + 3 < spec.size() + 0 && k + 3 <= spec.size() - 1 && spec.compare(k + 1, 2, "..") == 0) {
      for (int c = static_cast<unsigned char>(spec[k]); c <= static_cast<unsigned char>(spec[k + 3]); ++c)
        out += static_cast<char>(c);
      k += 3;
      continue;
    }
    out += spec[k];
  }
  return out;
}

std::string trim_chars(const std::string& s, const std::string& chars, bool left, bool right) {
  std::size_t b = 0, e = s.size();
  if (left)
    while (b < e && chars.find(s[b]) != std::string::npos) ++b;
  if (right)
    while (e > b && chars.find(s[e - 1]) != std::string::npos) --e;
  return s.substr(b, e - b);
}

const std::string kWhitespace(" \t\n\r\0\x0B", 6);

std::string url_encode(const std::string& s, bool raw) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || (raw && c == '~')) {
      out += static_cast<char>(c);
    } else if (c == ' ' && !raw) {
      out += '+';
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

std::string url_decode(const std::string& s, bool raw) {
  std::string out;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] == '+' && !raw) {
      out += ' ';
    } else if (s[k] == '%' && k + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[k + 1])) &&
               std::isxdigit(static_cast<unsigned char>(s[k + 2]))) {
      out += static_cast<char>(std::stoi(s.substr(k + 1, 2), nullptr, 16));
      k += 2;
    } else {
      out += s[k];
    }
  }
  return out;
}

std::string add_slashes(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\'' || c == '"' || c == '\\') out += '\\';
    if (c == '\0') {
      out += "\\0";
      continue;
    }
    out += c;
  }
  return out;
}

std::string strip_slashes(const std::string& s) {
  std::string out;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] == '\\' && k + 1 < s.size()) {
      ++k;
      out += s[k] == '0' ? '\0' : s[k];
    } else if (s[k] != '\\') {
      out += s[k];
    }
  }
  return out;
}

std::string replace_ci(const std::string& subject, const std::string& search, const std::string& repl, std::int64_t& n) {
  if (search.empty()) return subject;
  std::string ls = text::to_lower(subject), lf = text::to_lower(search), out;
  std::size_t pos = 0;
  while (true) {
    auto hit = ls.find(lf, pos);
    if (hit == std::string::npos) break;
    out += subject.substr(pos, hit - pos) + repl;
    pos = hit + search.size();
    ++n;
  }
  return out + subject.substr(pos);
}

std::string replace_cs(const std::string& subject, const std::string& search, const std::string& repl, std::int64_t& n) {
  if (search.empty()) return subject;
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = subject.find(search, pos);
    if (hit == std::string::npos) break;
    out += subject.substr(pos, hit - pos) + repl;
    pos = hit + search.size();
    ++n;
  }
  return out + subject.substr(pos);
}

std::string base64_encode(const std::string& in) {
  static const char* t = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  std::size_t k = 0;
  for (; k + 2 < in.size(); k += 3) {
    unsigned v = (static_cast<unsigned char>(in[k]) << 16) | (static_cast<unsigned char>(in[k + 1]) << 8) |
                 static_cast<unsigned char>(in[k + 2]);
    out += {t[v >> 18], t[(v >> 12) & 63], t[(v >> 6) & 63], t[v & 63]};
  }
  if (k + 1 == in.size()) {
    unsigned v = static_cast<unsigned char>(in[k]) << 16;
    out += {t[v >> 18], t[(v >> 12) & 63], '=', '='};
  } else if (k + 2 == in.size()) {
    unsigned v = (static_cast<unsigned char>(in[k]) << 16) | (static_cast<unsigned char>(in[k + 1]) << 8);
    out += {t[v >> 18], t[(v >> 12) & 63], t[(v >> 6) & 63], '='};
  }
  return out;
}

std::string base64_decode(const std::string& in) {
  std::string out;
  unsigned v = 0;
  int bits = 0;
  for (char c : in) {
    int d;
    if (c >= 'A' && c <= 'Z') d = c - 'A';
    else if (c >= 'a' && c <= 'z') d = c - 'a' + 26;
    else if (c >= '0' && c <= '9') d = c - '0' + 52;
    else if (c == '+') d = 62;
    else if (c == '/') d = 63;
    else continue;
    v = (v << 6) | static_cast<unsigned>(d);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((v >> bits) & 0xFF);
    }
  }
  return out;
}

std::string digest_hex(const std::string& in, const EVP_MD* md) {
  unsigned char buf[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_Digest(in.data(), in.size(), buf, &len, md, nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned k = 0; k < len; ++k) {
    out += hex[buf[k] >> 4];
    out += hex[buf[k] & 15];
  }
  return out;
}

/// PHP "/pattern/flags" to a std::regex.
std::regex compile_pcre(const std::string& pattern) {
  if (pattern.size() < 2) throw Fatal{"preg: empty regular expression"};
  char open = pattern[0];
  char close = open == '(' ? ')' : open == '{' ? '}' : open == '[' ? ']' : open == '<' ? '>' : open;
  auto end = pattern.rfind(close);
  if (end == 0 || end == std::string::npos) throw Fatal{"preg: no ending delimiter"};
  std::string body = pattern.substr(1, end - 1);
  std::string flags = pattern.substr(end + 1);
  auto opts = std::regex::ECMAScript;
  if (flags.find('i') != std::string::npos) opts |= std::regex::icase;
  if (flags.find('m') != std::string::npos) opts |= std::regex::multiline;
  if (flags.find('s') != std::string::npos) {
    std::string rewritten;
    bool in_class = false;
    for (std::size_t k = 0; k < body.size(); ++k) {
      char c = body[k];
      if (c == '\\' && k + 1 < body.size()) {
        rewritten += c;
        rewritten += body[++k];
        continue;
      }
      if (c == '[') in_class = true;
      if (c == ']') in_class = false;
      rewritten += (c == '.' && !in_class) ? std::string("[\\s\\S]") : std::string(1, c);
    }
    body = rewritten;
  }
  try {
    return std::regex(body, opts);
  } catch (const std::regex_error& e) {
    throw Fatal{std::string("preg: invalid pattern: ") + e.what()};
  }
}

std::string pcre_replacement(const std::string& r) {
  std::string out;
  for (std::size_t k = 0; k < r.size(); ++k) {
    char c = r[k];
    if ((c == '\\' || c == '$') && k + 1 < r.size() && std::isdigit(static_cast<unsigned char>(r[k + 1]))) {
      out += '$';
      out += r[++k];
      if (k + 1 < r.size() && std::isdigit(static_cast<unsigned char>(r[k + 1]))) out += r[++k];
      continue;
    }
    if (c == '$' && k + 1 < r.size() && r[k + 1] == '{') {
      auto e = r.find('}', k);
      if (e != std::string::npos) {
        out += '$' + r.substr(k + 2, e - k - 2);
        k = e;
        continue;
      }
    }
    if (c == '$') {
      out += "$$";
      continue;
    }
    out += c;
  }
  return out;
}

std::string format_printf(const std::vector<Value>& args) {
  if (args.empty()) return "";
  const std::string f = to_str(args[0]);
  std::string out;
  std::size_t next = 1;
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (f[k] != '%') {
      out += f[k];
      continue;
    }
    if (++k >= f.size()) break;
    if (f[k] == '%') {
      out += '%';
      continue;
    }
    std::size_t argno = 0;
    std::size_t save = k;
    while (k < f.size() && std::isdigit(static_cast<unsigned char>(f[k]))) argno = argno * 10 + (f[k++] - '0');
    if (k < f.size() && f[k] == '$' && argno > 0) {
      ++k;
    } else {
      argno = 0;
      k = save;
    }
    bool left = false, plus = false;
    char pad = ' ';
    while (k < f.size()) {
      if (f[k] == '-') left = true;
      else if (f[k] == '+') plus = true;
      else if (f[k] == '0') pad = '0';
      else if (f[k] == ' ') pad = ' ';
      else if (f[k] == '\'' && k + 1 < f.size()) pad = f[++k];
      else break;
      ++k;
    }
    std::size_t width = 0;
    while (k < f.size() && std::isdigit(static_cast<unsigned char>(f[k]))) width = width * 10 + (f[k++] - '0');
    int precision = -1;
    if (k < f.size() && f[k] == '.') {
      precision = 0;
      ++k;
      while (k < f.size() && std::isdigit(static_cast<unsigned char>(f[k]))) precision = precision * 10 + (f[k++] - '0');
    }
    if (k >= f.size()) break;
    char conv = f[k];
    Value arg = argno ? (argno < args.size() ? args[argno] : Value{}) : (next < args.size() ? args[next++] : Value{});
    std::string piece;
    char buf[512];
    switch (conv) {
      case 's':
        piece = to_str(arg);
        if (precision >= 0 && static_cast<std::size_t>(precision) < piece.size()) piece.resize(static_cast<std::size_t>(precision));
        break;
      case 'd':
      case 'i': {
        std::int64_t v = to_int(arg);
        piece = std::to_string(v);
        if (plus && v >= 0) piece = "+" + piece;
        break;
      }
      case 'u': piece = std::to_string(static_cast<std::uint64_t>(to_int(arg))); break;
      case 'f':
      case 'F':
        std::snprintf(buf, sizeof buf, "%.*f", precision < 0 ? 6 : precision, to_float(arg));
        piece = buf;
        if (plus && to_float(arg) >= 0) piece = "+" + piece;
        break;
      case 'e':
      case 'E':
        std::snprintf(buf, sizeof buf, conv == 'e' ? "%.*e" : "%.*E", precision < 0 ? 6 : precision, to_float(arg));
        piece = buf;
        break;
      case 'x': std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(to_int(arg))); piece = buf; break;
      case 'X': std::snprintf(buf, sizeof buf, "%llX", static_cast<unsigned long long>(to_int(arg))); piece = buf; break;
      case 'o': std::snprintf(buf, sizeof buf, "%llo", static_cast<unsigned long long>(to_int(arg))); piece = buf; break;
      case 'b': {
        auto v = static_cast<std::uint64_t>(to_int(arg));
        do {
          piece.insert(piece.begin(), static_cast<char>('0' + (v & 1)));
          v >>= 1;
        } while (v);
        break;
      }
      case 'c': piece = std::string(1, static_cast<char>(to_int(arg))); break;
      default: throw Fatal{std::string("sprintf: unknown format specifier \"") + conv + "\""};
    }
    if (piece.size() < width) {
      std::string fill(width - piece.size(), pad);
      piece = left ? piece + (pad == '0' ? std::string(width - piece.size(), ' ') : fill) : fill + piece;
    }
    out += piece;
  }
  return out;
}

void print_r_into(const Value& v, std::string& out, int indent) {
  if (!v.is_arr()) {
    out += to_str(v);
    return;
  }
  std::string pad(static_cast<std::size_t>(indent), ' ');
  out += "Array\n" + pad + "(\n";
  for (const auto& [k, x] : v.a->items) {
    out += pad + "    [" + to_str(key_value(k)) + "] => ";
    print_r_into(x, out, indent + 8);
    out += "\n";
  }
  out += pad + ")\n";
}

void var_dump_into(const Value& v, std::string& out, int indent) {
  std::string pad(static_cast<std::size_t>(indent), ' ');
  switch (v.t) {
    case Value::T::Null: out += pad + "NULL\n"; break;
    case Value::T::Bool: out += pad + "bool(" + (v.b ? "true" : "false") + ")\n"; break;
    case Value::T::Int: out += pad + "int(" + std::to_string(v.i) + ")\n"; break;
    case Value::T::Float: out += pad + "float(" + float_str(v.f) + ")\n"; break;
    case Value::T::Str: out += pad + "string(" + std::to_string(v.s.size()) + ") \"" + v.s + "\"\n"; break;
    case Value::T::Arr:
      out += pad + "array(" + std::to_string(v.a->items.size()) + ") {\n";
      for (const auto& [k, x] : v.a->items) {
        if (auto* n = std::get_if<std::int64_t>(&k))
          out += pad + "  [" + std::to_string(*n) + "]=>\n";
        else
          out += pad + "  [\"" + std::get<std::string>(k) + "\"]=>\n";
        var_dump_into(x, out, indent + 2);
      }
      out += pad + "}\n";
      break;
  }
}

nlohmann::json to_json_value(const Value& v) {
  switch (v.t) {
    case Value::T::Null: return nullptr;
    case Value::T::Bool: return v.b;
    case Value::T::Int: return v.i;
    case Value::T::Float: return v.f;
    case Value::T::Str: return v.s;
    case Value::T::Arr: {
      bool list = true;
      std::int64_t expect = 0;
      for (const auto& [k, x] : v.a->items) {
        auto* n = std::get_if<std::int64_t>(&k);
        if (!n || *n != expect++) list = false;
      }
      nlohmann::json j = list ? nlohmann::json::array() : nlohmann::json::object();
      for (const auto& [k, x] : v.a->items) {
        if (list)
          j.push_back(to_json_value(x));
        else
          j[to_str(key_value(k))] = to_json_value(x);
      }
      return j;
    }
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// interpreter

enum class Flow { Normal, Break, Continue, Return };

struct Signal {
  Flow flow = Flow::Normal;
  int levels = 0;
  Value ret;
};

using Box = std::shared_ptr<Value>;

struct Frame {
  std::map<std::string, Box> vars;
  std::string function;
};

struct UserFunction {
  const Node* node = nullptr;
  std::string file;
  std::map<std::string, Box> statics;
};

class Interp;
using Builtin = std::function<Value(Interp&, std::vector<Value>&)>;

const std::map<std::string, Builtin>& builtins();

/// Positions of by-reference parameters of builtins.
const std::map<std::string, std::size_t>& builtin_refs() {
  static const std::map<std::string, std::size_t> m = {{"preg_match", 2}, {"preg_match_all", 2}, {"array_push", 0},
                                                       {"array_pop", 0},  {"array_shift", 0},   {"array_unshift", 0},
                                                       {"sort", 0},       {"rsort", 0},         {"ksort", 0}};
  return m;
}

class Interp {
 public:
  Interp(const Request& req, const Options& opt) : req_(req), opt_(opt) {
    root_ = std::filesystem::weakly_canonical(std::filesystem::path(opt.root));
    init_superglobals();
  }

  Result run(const std::string& script) {
    try {
      std::string rel = normalize(script, "");
      if (rel.empty()) throw Fatal{"Failed opening required '" + script + "'"};
      entry_dir_ = dirname_of(rel);
      const php::ParsedFile& pf = load(rel);
      file_stack_.push_back(rel);
      std::size_t main = enter("{main}", true, "", rel, 0, 0);
      stack_.push_back(&globals_);
      try {
        hoist(pf.statements, rel);
        exec_block(pf.statements, globals_);
      } catch (const ExitSignal&) {
      }
      leave_all(main);
    } catch (const Fatal& f) {
      result_.error = f.message;
      result_.exit_code = 255;
      result_.output += "\nPHP Fatal error:  " + f.message;
      if (fatal_file_.empty() && !file_stack_.empty()) fatal_file_ = file_stack_.back();
      if (!fatal_file_.empty()) result_.output += " in " + fatal_file_ + " on line " + std::to_string(line_);
      result_.output += "\n";
      close_open_calls();
    }
    return std::move(result_);
  }

  // ---- services used by builtins ----
  void out(const std::string& s) {
    if (result_.output.size() + s.size() > opt_.max_output) throw Fatal{"output limit exceeded"};
    result_.output += s;
  }
  bool function_exists(const std::string& name) const {
    std::string l = text::to_lower(name);
    return functions_.count(l) || builtins().count(l);
  }
  Value call_named(const std::string& name, std::vector<Value> args) { return call_function(name, args, nullptr); }
  std::map<std::string, Value>& constants() { return constants_; }
  bool file_exists(const std::string& path) {
    if (virtual_files_.count(path)) return true;
    std::string rel = normalize(path, file_stack_.empty() ? "" : dirname_of(file_stack_.back()));
    return !rel.empty() && std::filesystem::is_regular_file(root_ / rel);
  }
  bool is_upload(const std::string& tmp) const { return uploads_.count(tmp) > 0; }
  bool move_upload(const std::string& tmp, const std::string& dest) {
    auto it = uploads_.find(tmp);
    if (it == uploads_.end()) return false;
    virtual_files_[dest] = it->second;
    uploads_.erase(it);
    return true;
  }
  void warn(const std::string& w) { result_.warnings.push_back(w); }

 private:
  const Request& req_;
  const Options& opt_;
  std::filesystem::path root_;
  std::string entry_dir_;
  Result result_;
  std::map<std::string, std::unique_ptr<php::ParsedFile>> files_;
  std::map<std::string, UserFunction> functions_;
  std::map<std::string, Value> constants_;
  std::map<std::string, Box> superglobals_;
  std::map<std::string, std::string> uploads_;        // tmp name -> content
  std::map<std::string, std::string> virtual_files_;  // written by move_uploaded_file
  std::set<std::string> included_;
  Frame globals_;
  std::vector<Frame*> stack_;
  std::vector<std::string> file_stack_;
  /// File that was executing when a fatal error was raised.
  std::string fatal_file_;
  std::vector<std::size_t> open_calls_;
  std::size_t steps_ = 0;
  int line_ = 0;
  int call_depth_ = 0;

  // ---- files ----

  static std::string dirname_of(const std::string& rel) {
    auto p = rel.rfind('/');
    return p == std::string::npos ? "" : rel.substr(0, p);
  }

  /// Root-relative normalized path, empty when it escapes the root.
  std::string normalize(const std::string& target, const std::string& base_dir) const {
    std::string t = target;
    std::string prefix = opt_.trace_prefix;
    if (!prefix.empty() && text::starts_with(t, prefix + "/")) t = t.substr(prefix.size() + 1);
    std::vector<std::string> parts;
    if (!t.empty() && t[0] == '/') {
      std::string rootstr = root_.string();
      if (!text::starts_with(t, rootstr + "/")) return "";
      t = t.substr(rootstr.size() + 1);
    } else if (!base_dir.empty()) {
      t = base_dir + "/" + t;
    }
    std::stringstream ss(t);
    std::string seg;
    while (std::getline(ss, seg, '/')) {
      if (seg.empty() || seg == ".") continue;
      if (seg == "..") {
        if (parts.empty()) return "";
        parts.pop_back();
        continue;
      }
      parts.push_back(seg);
    }
    return text::join(parts, "/");
  }

  const php::ParsedFile& load(const std::string& rel) {
    auto it = files_.find(rel);
    if (it != files_.end()) return *it->second;
    std::filesystem::path p = root_ / rel;
    if (!std::filesystem::is_regular_file(p)) throw Fatal{"Failed opening required '" + rel + "'"};
    SourceFile sf{rel, fsutil::read_file(p.string())};
    try {
      auto parsed = std::make_unique<php::ParsedFile>(php::parse(sf));
      return *(files_[rel] = std::move(parsed));
    } catch (const php::ParseError& e) {
      throw Fatal{std::string("syntax error, ") + e.what()};
    }
  }

  std::optional<std::string> resolve_include(const std::string& target) const {
    for (const std::string& base : {entry_dir_, file_stack_.empty() ? std::string() : dirname_of(file_stack_.back())}) {
      std::string rel = normalize(target, base);
      if (!rel.empty() && std::filesystem::is_regular_file(root_ / rel)) return rel;
    }
    return std::nullopt;
  }

  std::string traced(const std::string& rel) const {
    return opt_.trace_prefix.empty() ? rel : opt_.trace_prefix + "/" + rel;
  }

  // ---- tracing ----

  std::size_t enter(const std::string& fn, bool user, const std::string& include_file, const std::string& file, int line,
                    int argc) {
    if (!opt_.trace) return 0;
    Call c;
    c.level = static_cast<int>(open_calls_.size()) + 1;
    c.number = static_cast<int>(result_.calls.size());
    c.function = fn;
    c.user_defined = user;
    c.include_file = include_file.empty() ? "" : traced(include_file);
    c.file = traced(file);
    c.line = line;
    c.argc = argc;
    result_.calls.push_back(c);
    std::size_t idx = result_.calls.size() - 1;
    open_calls_.push_back(idx);
    record(false, idx);
    return idx;
  }

  void record(bool exit, std::size_t call) {
    std::int64_t n = static_cast<std::int64_t>(result_.records.size());
    result_.records.push_back({exit, call, 100 + static_cast<std::int64_t>(steps_) * 2 + n, 393216 + 64 * n});
  }

  void leave(std::size_t call) {
    if (!opt_.trace) return;
    while (!open_calls_.empty()) {
      std::size_t top = open_calls_.back();
      open_calls_.pop_back();
      record(true, top);
      if (top == call) break;
    }
  }

  void leave_all(std::size_t) { close_open_calls(); }

  void close_open_calls() {
    if (!opt_.trace) return;
    while (!open_calls_.empty()) {
      record(true, open_calls_.back());
      open_calls_.pop_back();
    }
  }

  // ---- superglobals ----

  static Value map_value(const std::map<std::string, std::string>& m) {
    Value v = Value::array();
    auto& a = mut_array(v);
    for (const auto& [k, x] : m) a.set(to_key(Value::of(k))) = Value::of(x);
    return v;
  }

  void init_superglobals() {
    auto box = [&](const std::string& n, Value v) { superglobals_[n] = std::make_shared<Value>(std::move(v)); };
    box("_GET", map_value(req_.get));
    box("_POST", map_value(req_.post));
    box("_COOKIE", map_value(req_.cookie));
    std::map<std::string, std::string> request = req_.get;
    for (const auto& [k, v] : req_.post) request[k] = v;
    box("_REQUEST", map_value(request));
    std::map<std::string, std::string> server = {{"REQUEST_METHOD", req_.method}};
    for (const auto& [k, v] : req_.server) server[k] = v;
    box("_SERVER", map_value(server));
    Value files = Value::array();
    int n = 0;
    for (const auto& [field, up] : req_.files) {
      std::string tmp = "/tmp/phpsub-upload-" + std::to_string(++n);
      uploads_[tmp] = up.content;
      Value f = Value::array();
      auto& a = mut_array(f);
      a.set(std::string("name")) = Value::of(up.name);
      a.set(std::string("type")) = Value::of(up.type);
      a.set(std::string("tmp_name")) = Value::of(tmp);
      a.set(std::string("error")) = Value::of(std::int64_t{0});
      a.set(std::string("size")) = Value::of(static_cast<std::int64_t>(up.content.size()));
      mut_array(files).set(to_key(Value::of(field))) = f;
    }
    box("_FILES", files);
    box("_SESSION", Value::array());
    box("_ENV", Value::array());
  }

  // ---- variables ----

  Frame& frame() { return *stack_.back(); }

  Box& var_box(Frame& f, const std::string& name) {
    auto sg = superglobals_.find(name);
    if (sg != superglobals_.end()) return sg->second;
    Box& b = f.vars[name];
    if (!b) b = std::make_shared<Value>();
    return b;
  }

  const Value* lookup(Frame& f, const std::string& name) {
    auto sg = superglobals_.find(name);
    if (sg != superglobals_.end()) return sg->second.get();
    auto it = f.vars.find(name);
    return it == f.vars.end() || !it->second ? nullptr : it->second.get();
  }

  /// Writable slot for an assignable expression, creating intermediate arrays.
  Value& lvalue(const Expr& e, Frame& f) {
    switch (e.kind) {
      case ExprKind::Variable: return *var_box(f, e.text);
      case ExprKind::Index: {
        std::optional<Key> key;
        if (e.kids.size() > 1 && e.kids[1]) key = to_key(eval(*e.kids[1], f));
        Value& base = lvalue(*e.kids[0], f);
        if (base.t == Value::T::Str && key) throw Fatal{"string offsets cannot be written by this interpreter"};
        if (!base.is_arr() && !base.is_null() && !(base.t == Value::T::Bool && !base.b) &&
            !(base.t == Value::T::Str && base.s.empty()))
          throw Fatal{"Cannot use a scalar value as an array"};
        ArrayData& a = mut_array(base);
        return key ? a.set(*key) : a.append();
      }
      default: throw Fatal{"Cannot assign to this expression"};
    }
  }

  /// Value of an expression without notices or auto-vivification; nullptr when unset.
  std::optional<Value> peek(const Expr& e, Frame& f) {
    switch (e.kind) {
      case ExprKind::Variable: {
        const Value* v = lookup(f, e.text);
        if (!v) return std::nullopt;
        return *v;
      }
      case ExprKind::Index: {
        auto base = peek(*e.kids[0], f);
        if (!base || e.kids.size() < 2 || !e.kids[1]) return std::nullopt;
        Value k = eval(*e.kids[1], f);
        if (base->is_arr()) {
          const Value* v = base->a->get(to_key(k));
          if (!v) return std::nullopt;
          return *v;
        }
        if (base->t == Value::T::Str) {
          std::int64_t n = to_int(k);
          if (n < 0) n += static_cast<std::int64_t>(base->s.size());
          if (n < 0 || n >= static_cast<std::int64_t>(base->s.size())) return std::nullopt;
          return Value::of(std::string(1, base->s[static_cast<std::size_t>(n)]));
        }
        return std::nullopt;
      }
      case ExprKind::Property: return std::nullopt;
      default: return eval(e, f);
    }
  }

  // ---- statements ----

  void step(const Node& n) {
    line_ = n.span.line;
    if (++steps_ > opt_.max_steps) throw Fatal{"execution step limit exceeded"};
  }

  void hoist(const Block& b, const std::string& file) {
    for (const auto& n : b)
      if (n->kind == NodeKind::Function) declare(*n, file, true);
  }

  void declare(const Node& n, const std::string& file, bool hoisting) {
    std::string key = text::to_lower(n.name);
    auto it = functions_.find(key);
    if (it != functions_.end()) {
      if (it->second.node == &n) return;
      if (!hoisting || it->second.node != &n) throw Fatal{"Cannot redeclare " + n.name + "()"};
    }
    if (builtins().count(key)) throw Fatal{"Cannot redeclare " + n.name + "()"};
    functions_[key] = UserFunction{&n, file, {}};
  }

  Signal exec_block(const Block& b, Frame& f) {
    for (const auto& n : b) {
      Signal s = exec(*n, f);
      if (s.flow != Flow::Normal) return s;
    }
    return {};
  }

  Signal loop_body(const Block& b, Frame& f, bool& stop) {
    Signal s = exec_block(b, f);
    stop = false;
    if (s.flow == Flow::Break) {
      stop = true;
      if (--s.levels > 0) return s;
      return {};
    }
    if (s.flow == Flow::Continue) {
      if (--s.levels > 0) {
        stop = true;
        return s;
      }
      return {};
    }
    if (s.flow == Flow::Return) stop = true;
    return s;
  }

  Signal exec(const Node& n, Frame& f) {
    step(n);
    switch (n.kind) {
      case NodeKind::ExprStmt:
        for (const auto& e : n.exprs)
          if (e) eval(*e, f);
        return {};
      case NodeKind::Echo:
        for (const auto& e : n.exprs) out(to_str(eval(*e, f)));
        return {};
      case NodeKind::InlineHtml:
        out(n.html);
        return {};
      case NodeKind::If: {
        for (std::size_t k = 0; k < n.exprs.size(); ++k)
          if (to_bool(eval(*n.exprs[k], f))) return exec_block(n.bodies[k], f);
        if (n.has_else && n.bodies.size() > n.exprs.size()) return exec_block(n.bodies.back(), f);
        return {};
      }
      case NodeKind::While: {
        while (to_bool(eval(*n.exprs[0], f))) {
          bool stop;
          Signal s = loop_body(n.bodies[0], f, stop);
          if (stop) return s;
          step(n);
        }
        return {};
      }
      case NodeKind::DoWhile: {
        do {
          bool stop;
          Signal s = loop_body(n.bodies[0], f, stop);
          if (stop) return s;
          step(n);
        } while (to_bool(eval(*n.exprs[0], f)));
        return {};
      }
      case NodeKind::For: {
        std::size_t k = 0;
        for (int c = 0; c < n.for_init; ++c, ++k)
          if (n.exprs[k]) eval(*n.exprs[k], f);
        std::size_t cond_begin = k, cond_end = k + static_cast<std::size_t>(n.for_cond);
        std::size_t step_end = cond_end + static_cast<std::size_t>(n.for_step);
        while (true) {
          bool ok = true;
          for (std::size_t c = cond_begin; c < cond_end; ++c)
            if (n.exprs[c]) ok = to_bool(eval(*n.exprs[c], f));
          if (!ok) break;
          bool stop;
          Signal s = loop_body(n.bodies[0], f, stop);
          if (stop) return s;
          for (std::size_t c = cond_end; c < step_end; ++c)
            if (n.exprs[c]) eval(*n.exprs[c], f);
          step(n);
        }
        return {};
      }
      case NodeKind::Foreach: {
        Value subject = eval(*n.exprs[0], f);
        if (!subject.is_arr()) {
          warn("foreach() argument must be of type array");
          return {};
        }
        auto items = subject.a->items;
        for (const auto& [k, v] : items) {
          if (n.exprs.size() > 1 && n.exprs[1]) lvalue(*n.exprs[1], f) = key_value(k);
          lvalue(*n.exprs[2], f) = v;
          bool stop;
          Signal s = loop_body(n.bodies[0], f, stop);
          if (stop) return s;
          step(n);
        }
        return {};
      }
      case NodeKind::Switch: {
        Value subject = eval(*n.exprs[0], f);
        std::optional<std::size_t> start;
        for (std::size_t c = 1; c < n.exprs.size() && !start; ++c)
          if (n.exprs[c] && loose_eq(subject, eval(*n.exprs[c], f))) start = c - 1;
        if (!start)
          for (std::size_t c = 1; c < n.exprs.size(); ++c)
            if (!n.exprs[c]) start = c - 1;
        if (!start) return {};
        for (std::size_t c = *start; c < n.bodies.size(); ++c) {
          Signal s = exec_block(n.bodies[c], f);
          if (s.flow == Flow::Break || s.flow == Flow::Continue) {
            if (--s.levels > 0) return s;
            return {};
          }
          if (s.flow == Flow::Return) return s;
        }
        return {};
      }
      case NodeKind::Function:
        declare(n, file_stack_.empty() ? "" : file_stack_.back(), false);
        return {};
      case NodeKind::Return: {
        Signal s;
        s.flow = Flow::Return;
        if (!n.exprs.empty() && n.exprs[0]) s.ret = eval(*n.exprs[0], f);
        return s;
      }
      case NodeKind::Break:
      case NodeKind::Continue: {
        Signal s;
        s.flow = n.kind == NodeKind::Break ? Flow::Break : Flow::Continue;
        s.levels = 1;
        if (!n.exprs.empty() && n.exprs[0]) s.levels = std::max<int>(1, static_cast<int>(to_int(eval(*n.exprs[0], f))));
        return s;
      }
      case NodeKind::Global:
        for (const auto& name : n.names) f.vars[name] = var_box(globals_, name);
        return {};
      case NodeKind::Static: {
        auto fn = functions_.find(text::to_lower(f.function));
        for (std::size_t k = 0; k < n.names.size(); ++k) {
          const std::string& name = n.names[k];
          if (fn == functions_.end()) {
            var_box(f, name);
            continue;
          }
          Box& b = fn->second.statics[name];
          if (!b) {
            b = std::make_shared<Value>();
            if (k < n.exprs.size() && n.exprs[k]) *b = eval(*n.exprs[k], f);
          }
          f.vars[name] = b;
        }
        return {};
      }
      case NodeKind::Unset:
        for (const auto& e : n.exprs) unset(*e, f);
        return {};
      case NodeKind::Other:
        throw Fatal{"unsupported statement"};
    }
    return {};
  }

  void unset(const Expr& e, Frame& f) {
    if (e.kind == ExprKind::Variable) {
      f.vars.erase(e.text);
      return;
    }
    if (e.kind == ExprKind::Index && e.kids.size() > 1 && e.kids[1]) {
      auto base = peek(*e.kids[0], f);
      if (!base || !base->is_arr()) return;
      Key k = to_key(eval(*e.kids[1], f));
      mut_array(lvalue(*e.kids[0], f)).erase(k);
    }
  }

  // ---- expressions ----

  Value eval(const Expr& e, Frame& f) {
    switch (e.kind) {
      case ExprKind::Literal:
        switch (e.lit) {
          case LiteralType::String: return Value::of(e.text);
          case LiteralType::Int: {
            const std::string& t = e.text;
            try {
              if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) return Value::of(static_cast<std::int64_t>(std::stoll(t.substr(2), nullptr, 16)));
              if (t.size() > 2 && t[0] == '0' && (t[1] == 'b' || t[1] == 'B')) return Value::of(static_cast<std::int64_t>(std::stoll(t.substr(2), nullptr, 2)));
              if (t.size() > 1 && t[0] == '0') return Value::of(static_cast<std::int64_t>(std::stoll(t, nullptr, 8)));
              return Value::of(static_cast<std::int64_t>(std::stoll(t)));
            } catch (const std::exception&) {
              return Value::of(std::strtod(t.c_str(), nullptr));
            }
          }
          case LiteralType::Float: return Value::of(std::strtod(e.text.c_str(), nullptr));
          case LiteralType::Bool: return Value::of(e.text == "1" || text::to_lower(e.text) == "true");
          case LiteralType::Null: return {};
        }
        return {};
      case ExprKind::Variable: {
        const Value* v = lookup(f, e.text);
        return v ? *v : Value{};
      }
      case ExprKind::Index: {
        if (e.kids.size() < 2 || !e.kids[1]) throw Fatal{"Cannot use [] for reading"};
        auto v = peek(e, f);
        return v ? *v : Value{};
      }
      case ExprKind::Interpolated: {
        std::string s;
        for (const auto& k : e.kids) s += to_str(eval(*k, f));
        return Value::of(s);
      }
      case ExprKind::Backtick: throw Fatal{"shell execution is disabled"};
      case ExprKind::Binary: return binary(e, f);
      case ExprKind::Unary: {
        const std::string& op = e.text;
        if (op == "@") return eval(*e.kids[0], f);
        Value v = eval(*e.kids[0], f);
        if (op == "!") return Value::of(!to_bool(v));
        if (op == "-") {
          Value n = to_number(v);
          return n.t == Value::T::Int ? Value::of(-n.i) : Value::of(-n.f);
        }
        if (op == "+") return to_number(v);
        if (op == "~") return Value::of(~to_int(v));
        throw Fatal{"unsupported unary operator " + op};
      }
      case ExprKind::Assign: return assign(e, f);
      case ExprKind::Call: return call(e, f);
      case ExprKind::Array: {
        Value out = Value::array();
        auto& a = mut_array(out);
        for (std::size_t k = 0; k < e.kids.size(); ++k) {
          if (!e.kids[k]) continue;
          Value v = eval(*e.kids[k], f);
          if (k < e.keys.size() && e.keys[k])
            a.set(to_key(eval(*e.keys[k], f))) = v;
          else
            a.append() = v;
        }
        return out;
      }
      case ExprKind::Ternary: {
        Value c = eval(*e.kids[0], f);
        if (to_bool(c)) return e.kids[1] ? eval(*e.kids[1], f) : c;
        return eval(*e.kids[2], f);
      }
      case ExprKind::Isset:
        for (const auto& k : e.kids) {
          auto v = peek(*k, f);
          if (!v || v->is_null()) return Value::of(false);
        }
        return Value::of(true);
      case ExprKind::Empty: {
        auto v = peek(*e.kids[0], f);
        return Value::of(!v || !to_bool(*v));
      }
      case ExprKind::Exit: {
        if (!e.kids.empty() && e.kids[0]) {
          Value v = eval(*e.kids[0], f);
          if (v.t == Value::T::Int)
            result_.exit_code = static_cast<int>(v.i);
          else
            out(to_str(v));
        }
        throw ExitSignal{};
      }
      case ExprKind::Include: return include(e, f);
      case ExprKind::Cast: {
        Value v = eval(*e.kids[0], f);
        const std::string& t = e.text;
        if (t == "int" || t == "integer") return Value::of(to_int(v));
        if (t == "float" || t == "double") return Value::of(to_float(v));
        if (t == "string") return Value::of(to_str(v));
        if (t == "bool" || t == "boolean") return Value::of(to_bool(v));
        if (t == "array") {
          if (v.is_arr()) return v;
          Value out = Value::array();
          if (!v.is_null()) mut_array(out).append() = v;
          return out;
        }
        throw Fatal{"unsupported cast " + t};
      }
      case ExprKind::Constant: return constant(e.text);
      case ExprKind::IncDec: {
        Value& slot = lvalue(*e.kids[0], f);
        Value before = slot;
        Value n = slot.is_null() && e.text == "--" ? Value{} : to_number(slot);
        if (!n.is_null()) {
          if (n.t == Value::T::Int)
            n.i += e.text == "++" ? 1 : -1;
          else
            n.f += e.text == "++" ? 1 : -1;
        }
        if (slot.is_null() && e.text == "++") n = Value::of(std::int64_t{1});
        slot = n;
        return e.prefix ? n : before;
      }
      case ExprKind::Property:
      case ExprKind::MethodCall:
      case ExprKind::StaticCall:
      case ExprKind::New: throw Fatal{"objects are not supported by this interpreter"};
      case ExprKind::Opaque: throw Fatal{"unsupported expression"};
    }
    throw Fatal{"unsupported expression"};
  }

  Value constant(const std::string& name) {
    auto it = constants_.find(name);
    if (it != constants_.end()) return it->second;
    static const std::map<std::string, std::int64_t> ints = {
        {"ENT_QUOTES", 3},         {"ENT_COMPAT", 2},          {"ENT_NOQUOTES", 0},          {"ENT_HTML401", 0},
        {"ENT_HTML5", 48},         {"ENT_SUBSTITUTE", 8},      {"ENT_IGNORE", 4},            {"PATHINFO_DIRNAME", 1},
        {"PATHINFO_BASENAME", 2},  {"PATHINFO_EXTENSION", 4},  {"PATHINFO_FILENAME", 8},     {"E_ALL", 32767},
        {"E_ERROR", 1},            {"E_WARNING", 2},           {"E_NOTICE", 8},              {"PHP_INT_MAX", INT64_MAX},
        {"FILTER_VALIDATE_INT", 257}, {"FILTER_VALIDATE_EMAIL", 274}, {"FILTER_VALIDATE_IP", 275},
        {"FILTER_DEFAULT", 516},   {"FILTER_UNSAFE_RAW", 516}, {"FILTER_SANITIZE_SPECIAL_CHARS", 515},
        {"FILTER_SANITIZE_FULL_SPECIAL_CHARS", 522}, {"FILTER_SANITIZE_NUMBER_INT", 519}, {"FILTER_SANITIZE_STRING", 513},
        {"UPLOAD_ERR_OK", 0},      {"JSON_PRETTY_PRINT", 128}, {"COUNT_RECURSIVE", 1}};
    auto i = ints.find(name);
    if (i != ints.end()) return Value::of(i->second);
    if (name == "PHP_EOL") return Value::of("\n");
    if (name == "PHP_VERSION") return Value::of("8.1.0");
    if (name == "DIRECTORY_SEPARATOR") return Value::of("/");
    if (name == "__FILE__") return Value::of(file_stack_.empty() ? "" : traced(file_stack_.back()));
    if (name == "__DIR__") return Value::of(file_stack_.empty() ? "" : traced(dirname_of(file_stack_.back())));
    if (name == "__LINE__") return Value::of(static_cast<std::int64_t>(line_));
    throw Fatal{"Undefined constant \"" + name + "\""};
  }

  Value binary(const Expr& e, Frame& f) {
    const std::string& op = e.text;
    if (op == "&&" || op == "and") return Value::of(to_bool(eval(*e.kids[0], f)) && to_bool(eval(*e.kids[1], f)));
    if (op == "||" || op == "or") return Value::of(to_bool(eval(*e.kids[0], f)) || to_bool(eval(*e.kids[1], f)));
    if (op == "??") {
      auto v = peek(*e.kids[0], f);
      if (v && !v->is_null()) return *v;
      return eval(*e.kids[1], f);
    }
    Value a = eval(*e.kids[0], f);
    Value b = eval(*e.kids[1], f);
    return arith(op, a, b);
  }

  static Value arith(const std::string& op, const Value& a, const Value& b) {
    if (op == ".") return Value::of(to_str(a) + to_str(b));
    if (op == "==") return Value::of(loose_eq(a, b));
    if (op == "!=" || op == "<>") return Value::of(!loose_eq(a, b));
    if (op == "===") return Value::of(strict_eq(a, b));
    if (op == "!==") return Value::of(!strict_eq(a, b));
    if (op == "<") return Value::of(compare(a, b) < 0);
    if (op == ">") return Value::of(compare(a, b) > 0);
    if (op == "<=") return Value::of(compare(a, b) <= 0);
    if (op == ">=") return Value::of(compare(a, b) >= 0);
    if (op == "<=>") return Value::of(static_cast<std::int64_t>(compare(a, b)));
    if (op == "xor") return Value::of(to_bool(a) != to_bool(b));
    if (op == "+" && a.is_arr() && b.is_arr()) {
      Value out = a;
      auto& o = mut_array(out);
      for (const auto& [k, v] : b.a->items)
        if (!o.get(k)) o.set(k) = v;
      return out;
    }
    if (op == "&" || op == "|" || op == "^" || op == "<<" || op == ">>") {
      std::int64_t x = to_int(a), y = to_int(b);
      if (op == "&") return Value::of(x & y);
      if (op == "|") return Value::of(x | y);
      if (op == "^") return Value::of(x ^ y);
      if (op == "<<") return Value::of(x << (y & 63));
      return Value::of(x >> (y & 63));
    }
    Value x = to_number(a), y = to_number(b);
    bool ints = x.t == Value::T::Int && y.t == Value::T::Int;
    if (op == "+") return ints ? Value::of(x.i + y.i) : Value::of(to_float(x) + to_float(y));
    if (op == "-") return ints ? Value::of(x.i - y.i) : Value::of(to_float(x) - to_float(y));
    if (op == "*") return ints ? Value::of(x.i * y.i) : Value::of(to_float(x) * to_float(y));
    if (op == "/") {
      if (to_float(y) == 0) throw Fatal{"Division by zero"};
      if (ints && x.i % y.i == 0) return Value::of(x.i / y.i);
      return Value::of(to_float(x) / to_float(y));
    }
    if (op == "%") {
      std::int64_t d = to_int(y);
      if (d == 0) throw Fatal{"Modulo by zero"};
      return Value::of(to_int(x) % d);
    }
    if (op == "**") {
      double r = std::pow(to_float(x), to_float(y));
      if (ints && y.i >= 0 && std::fabs(r) < 9e18) return Value::of(static_cast<std::int64_t>(r));
      return Value::of(r);
    }
    throw Fatal{"unsupported operator " + op};
  }

  Value assign(const Expr& e, Frame& f) {
    const std::string& op = e.text;
    const Expr& target = *e.kids[0];
    if (op == "?\?=") {
      auto cur = peek(target, f);
      if (cur && !cur->is_null()) return *cur;
      Value v = eval(*e.kids[1], f);
      lvalue(target, f) = v;
      return v;
    }
    if (op == "=" && target.kind == ExprKind::Array) {
      Value v = eval(*e.kids[1], f);
      for (std::size_t k = 0; k < target.kids.size(); ++k) {
        if (!target.kids[k]) continue;
        Key key = k < target.keys.size() && target.keys[k] ? to_key(eval(*target.keys[k], f)) : Key{static_cast<std::int64_t>(k)};
        const Value* x = v.is_arr() ? v.a->get(key) : nullptr;
        lvalue(*target.kids[k], f) = x ? *x : Value{};
      }
      return v;
    }
    if (op == "=&") {
      if (target.kind == ExprKind::Variable && e.kids[1]->kind == ExprKind::Variable) {
        Box& src = var_box(f, e.kids[1]->text);
        f.vars[target.text] = src;
        return *src;
      }
      Value v = eval(*e.kids[1], f);
      lvalue(target, f) = v;
      return v;
    }
    Value v = eval(*e.kids[1], f);
    if (op == "=") {
      lvalue(target, f) = v;
      return v;
    }
    std::string bin = op.substr(0, op.size() - 1);
    Value cur = peek(target, f).value_or(Value{});
    Value r = arith(bin, cur, v);
    lvalue(target, f) = r;
    return r;
  }

  Value include(const Expr& e, Frame& f) {
    std::string target = to_str(eval(*e.kids[0], f));
    bool once = text::ends_with(e.text, "_once");
    bool require = text::starts_with(e.text, "require");
    auto rel = resolve_include(target);
    std::string from = file_stack_.empty() ? "" : file_stack_.back();
    int line = e.span.line;
    if (!rel) {
      std::size_t c = enter(e.text, true, target, from, line, 1);
      leave(c);
      if (require) throw Fatal{"Failed opening required '" + target + "'"};
      warn(e.text + "(" + target + "): Failed to open stream");
      return Value::of(false);
    }
    if (once && included_.count(*rel)) return Value::of(true);
    included_.insert(*rel);
    std::size_t c = enter(e.text, true, *rel, from, line, 1);
    const php::ParsedFile& pf = load(*rel);
    file_stack_.push_back(*rel);
    Value ret = Value::of(std::int64_t{1});
    hoist(pf.statements, *rel);
    Signal s = exec_block(pf.statements, f);
    if (s.flow == Flow::Return) ret = s.ret;
    file_stack_.pop_back();
    leave(c);
    line_ = line;
    return ret;
  }

  Value call(const Expr& e, Frame& f) {
    std::string name = e.text;
    std::string key = text::to_lower(name);
    if (key == "compact" || key == "extract" || key == "get_defined_vars" || key == "func_get_args")
      throw Fatal{"unsupported function " + name};
    auto uf = functions_.find(key);
    if (uf != functions_.end()) return call_user(uf->second, e, f);
    auto bi = builtins().find(key);
    if (bi == builtins().end()) throw Fatal{"Call to undefined function " + name + "()"};
    std::vector<Value> args;
    for (const auto& k : e.kids) args.push_back(k ? eval(*k, f) : Value{});
    std::size_t c = enter(name, false, "", file_stack_.empty() ? "" : file_stack_.back(), e.span.line,
                          static_cast<int>(args.size()));
    Value r = bi->second(*this, args);
    leave(c);
    auto ref = builtin_refs().find(key);
    if (ref != builtin_refs().end() && ref->second < e.kids.size() && e.kids[ref->second] &&
        (e.kids[ref->second]->kind == ExprKind::Variable || e.kids[ref->second]->kind == ExprKind::Index))
      lvalue(*e.kids[ref->second], f) = args[ref->second];
    return r;
  }

  Value call_function(const std::string& name, std::vector<Value>& args, Frame*) {
    std::string key = text::to_lower(name);
    auto uf = functions_.find(key);
    if (uf != functions_.end()) return invoke(uf->second, args, {}, 0);
    auto bi = builtins().find(key);
    if (bi == builtins().end()) throw Fatal{"Call to undefined function " + name + "()"};
    return bi->second(*this, args);
  }

  Value call_user(UserFunction& fn, const Expr& e, Frame& f) {
    std::vector<Value> args;
    std::vector<Box> refs;
    const auto& params = fn.node->params;
    for (std::size_t k = 0; k < e.kids.size(); ++k) {
      bool by_ref = k < params.size() && params[k].by_ref && e.kids[k] && e.kids[k]->kind == ExprKind::Variable;
      if (by_ref) {
        Box& b = var_box(f, e.kids[k]->text);
        refs.push_back(b);
        args.push_back(*b);
      } else {
        refs.push_back(nullptr);
        args.push_back(e.kids[k] ? eval(*e.kids[k], f) : Value{});
      }
    }
    return invoke(fn, args, refs, e.span.line);
  }

  Value invoke(UserFunction& fn, std::vector<Value>& args, const std::vector<Box>& refs, int line) {
    if (++call_depth_ > opt_.max_call_depth) throw Fatal{"Maximum function nesting level reached"};
    const Node& n = *fn.node;
    std::size_t c = enter(n.name, true, "", file_stack_.empty() ? "" : file_stack_.back(), line, static_cast<int>(args.size()));
    Frame local;
    local.function = n.name;
    for (std::size_t k = 0; k < n.params.size(); ++k) {
      const auto& p = n.params[k];
      if (k < refs.size() && refs[k]) {
        local.vars[p.name] = refs[k];
      } else if (k < args.size()) {
        local.vars[p.name] = std::make_shared<Value>(args[k]);
      } else if (p.default_value) {
        local.vars[p.name] = std::make_shared<Value>(eval(*p.default_value, local));
      } else {
        throw Fatal{"Too few arguments to function " + n.name + "()"};
      }
    }
    stack_.push_back(&local);
    file_stack_.push_back(fn.file);
    Signal s;
    try {
      s = exec_block(n.bodies[0], local);
    } catch (const Fatal&) {
      if (fatal_file_.empty()) fatal_file_ = file_stack_.back();
      stack_.pop_back();
      file_stack_.pop_back();
      --call_depth_;
      throw;
    } catch (...) {
      stack_.pop_back();
      file_stack_.pop_back();
      --call_depth_;
      throw;
    }
    stack_.pop_back();
    file_stack_.pop_back();
    --call_depth_;
    leave(c);
    return s.flow == Flow::Return ? s.ret : Value{};
  }
};

// ---------------------------------------------------------------------------
// builtins

Value arg(std::vector<Value>& a, std::size_t k) { return k < a.size() ? a[k] : Value{}; }
std::string sarg(std::vector<Value>& a, std::size_t k) { return to_str(arg(a, k)); }

void need(std::vector<Value>& a, std::size_t n, const char* name) {
  if (a.size() < n) throw Fatal{std::string(name) + "() expects at least " + std::to_string(n) + " arguments"};
}

Value str_replace_impl(std::vector<Value>& a, bool ci) {
  need(a, 3, ci ? "str_ireplace" : "str_replace");
  std::int64_t count = 0;
  auto one = [&](std::string subject) {
    std::vector<std::string> search, repl;
    bool repl_list = a[1].is_arr();
    if (a[0].is_arr())
      for (const auto& [k, v] : a[0].a->items) search.push_back(to_str(v));
    else
      search.push_back(to_str(a[0]));
    if (repl_list)
      for (const auto& [k, v] : a[1].a->items) repl.push_back(to_str(v));
    for (std::size_t k = 0; k < search.size(); ++k) {
      std::string r = repl_list ? (k < repl.size() ? repl[k] : "") : to_str(a[1]);
      subject = ci ? replace_ci(subject, search[k], r, count) : replace_cs(subject, search[k], r, count);
    }
    return subject;
  };
  if (a[2].is_arr()) {
    Value out = Value::array();
    for (const auto& [k, v] : a[2].a->items) mut_array(out).set(k) = Value::of(one(to_str(v)));
    return out;
  }
  return Value::of(one(to_str(a[2])));
}

Value pathinfo_impl(const std::string& path, std::int64_t opt) {
  std::string dir, base = path;
  auto slash = path.rfind('/');
  if (slash != std::string::npos) {
    dir = slash == 0 ? "/" : path.substr(0, slash);
    base = path.substr(slash + 1);
  } else {
    dir = ".";
  }
  std::optional<std::string> ext;
  std::string filename = base;
  auto dot = base.rfind('.');
  if (dot != std::string::npos) {
    ext = base.substr(dot + 1);
    filename = base.substr(0, dot);
  }
  if (opt == 1) return Value::of(dir);
  if (opt == 2) return Value::of(base);
  if (opt == 4) return Value::of(ext.value_or(""));
  if (opt == 8) return Value::of(filename);
  Value out = Value::array();
  auto& m = mut_array(out);
  if (slash != std::string::npos) m.set(std::string("dirname")) = Value::of(dir);
  m.set(std::string("basename")) = Value::of(base);
  if (ext) m.set(std::string("extension")) = Value::of(*ext);
  m.set(std::string("filename")) = Value::of(filename);
  return out;
}

const std::map<std::string, Builtin>& builtins() {
  static const std::map<std::string, Builtin> table = [] {
    std::map<std::string, Builtin> b;
    auto str1 = [&b](const char* name, std::function<std::string(const std::string&)> fn) {
      b[name] = [fn, name](Interp&, std::vector<Value>& a) {
        need(a, 1, name);
        return Value::of(fn(to_str(a[0])));
      };
    };
    str1("strtolower", [](const std::string& s) { return text::to_lower(s); });
    str1("strtoupper", [](const std::string& s) {
      std::string o = s;
      for (auto& c : o) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      return o;
    });
    str1("ucfirst", [](const std::string& s) {
      std::string o = s;
      if (!o.empty()) o[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(o[0])));
      return o;
    });
    str1("lcfirst", [](const std::string& s) {
      std::string o = s;
      if (!o.empty()) o[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(o[0])));
      return o;
    });
    str1("ucwords", [](const std::string& s) {
      std::string o = s;
      bool start = true;
      for (auto& c : o) {
        if (start) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        start = std::isspace(static_cast<unsigned char>(c)) != 0;
      }
      return o;
    });
    str1("strrev", [](const std::string& s) { return std::string(s.rbegin(), s.rend()); });
    str1("strip_tags", strip_tags);
    str1("addslashes", add_slashes);
    str1("stripslashes", strip_slashes);
    str1("urlencode", [](const std::string& s) { return url_encode(s, false); });
    str1("rawurlencode", [](const std::string& s) { return url_encode(s, true); });
    str1("urldecode", [](const std::string& s) { return url_decode(s, false); });
    str1("rawurldecode", [](const std::string& s) { return url_decode(s, true); });
    str1("base64_encode", base64_encode);
    str1("base64_decode", base64_decode);
    str1("md5", [](const std::string& s) { return digest_hex(s, EVP_md5()); });
    str1("sha1", [](const std::string& s) { return digest_hex(s, EVP_sha1()); });
    str1("bin2hex", [](const std::string& s) {
      static const char* hex = "0123456789abcdef";
      std::string o;
      for (unsigned char c : s) o += {hex[c >> 4], hex[c & 15]};
      return o;
    });
    str1("nl2br", [](const std::string& s) { return text::replace_all(s, "\n", "<br />\n"); });
    str1("html_entity_decode", html_unescape);
    str1("htmlspecialchars_decode", html_unescape);
    str1("quotemeta", [](const std::string& s) {
      std::string o;
      for (char c : s) {
        if (std::string(".\\+*?[^]$()").find(c) != std::string::npos) o += '\\';
        o += c;
      }
      return o;
    });
    str1("escapeshellarg", [](const std::string& s) { return "'" + text::replace_all(s, "'", "'\\''") + "'"; });
    str1("escapeshellcmd", [](const std::string& s) {
      std::string o;
      for (char c : s) {
        if (std::string("&#;`|*?~<>^()[]{}$\\,\x0A\xFF'\"").find(c) != std::string::npos) o += '\\';
        o += c;
      }
      return o;
    });
    str1("basename", [](const std::string& s) {
      std::string t = s;
      while (t.size() > 1 && t.back() == '/') t.pop_back();
      auto p = t.rfind('/');
      return p == std::string::npos ? t : t.substr(p + 1);
    });
    str1("dirname", [](const std::string& s) {
      auto p = s.rfind('/');
      if (p == std::string::npos) return std::string(".");
      return p == 0 ? std::string("/") : s.substr(0, p);
    });

    b["strlen"] = [](Interp&, std::vector<Value>& a) {
      need(a, 1, "strlen");
      return Value::of(static_cast<std::int64_t>(to_str(a[0]).size()));
    };
    for (const char* name : {"trim", "ltrim", "rtrim", "chop"}) {
      std::string n = name;
      b[name] = [n](Interp&, std::vector<Value>& a) {
        need(a, 1, n.c_str());
        std::string chars = a.size() > 1 ? charlist(to_str(a[1])) : kWhitespace;
        bool left = n == "trim" || n == "ltrim";
        bool right = n != "ltrim";
        return Value::of(trim_chars(to_str(a[0]), chars, left, right));
      };
    }
    b["htmlspecialchars"] = [](Interp&, std::vector<Value>& a) {
      need(a, 1, "htmlspecialchars");
      int flags = a.size() > 1 && !a[1].is_null() ? static_cast<int>(to_int(a[1])) : 3;
      return Value::of(html_escape(to_str(a[0]), flags));
    };
    b["htmlentities"] = b["htmlspecialchars"];
    b["str_replace"] = [](Interp&, std::vector<Value>& a) { return str_replace_impl(a, false); };
    b["str_ireplace"] = [](Interp&, std::vector<Value>& a) { return str_replace_impl(a, true); };
    b["substr"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "substr");
      std::string s = to_str(a[0]);
      auto n = static_cast<std::int64_t>(s.size());
      std::int64_t start = to_int(a[1]);
      if (start < 0) start = std::max<std::int64_t>(0, n + start);
      if (start > n) return Value::of("");
      std::int64_t len = a.size() > 2 && !a[2].is_null() ? to_int(a[2]) : n - start;
      if (len < 0) len = std::max<std::int64_t>(0, n - start + len);
      return Value::of(s.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(len)));
    };
    auto finder = [](bool ci, bool reverse) {
      return [ci, reverse](Interp&, std::vector<Value>& a) {
        need(a, 2, "strpos");
        std::string h = to_str(a[0]), n = to_str(a[1]);
        if (ci) {
          h = text::to_lower(h);
          n = text::to_lower(n);
        }
        std::int64_t off = a.size() > 2 ? to_int(a[2]) : 0;
        if (off < 0) off += static_cast<std::int64_t>(h.size());
        if (off < 0 || off > static_cast<std::int64_t>(h.size())) throw Fatal{"strpos(): Offset not contained in string"};
        std::size_t p = reverse ? h.rfind(n) : h.find(n, static_cast<std::size_t>(off));
        if (p == std::string::npos || (reverse && static_cast<std::int64_t>(p) < off)) return Value::of(false);
        return Value::of(static_cast<std::int64_t>(p));
      };
    };
    b["strpos"] = finder(false, false);
    b["stripos"] = finder(true, false);
    b["strrpos"] = finder(false, true);
    b["strstr"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "strstr");
      std::string h = to_str(a[0]);
      auto p = h.find(to_str(a[1]));
      if (p == std::string::npos) return Value::of(false);
      return Value::of(a.size() > 2 && to_bool(a[2]) ? h.substr(0, p) : h.substr(p));
    };
    b["str_contains"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "str_contains");
      return Value::of(text::contains(to_str(a[0]), to_str(a[1])));
    };
    b["str_starts_with"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "str_starts_with");
      return Value::of(text::starts_with(to_str(a[0]), to_str(a[1])));
    };
    b["str_ends_with"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "str_ends_with");
      return Value::of(text::ends_with(to_str(a[0]), to_str(a[1])));
    };
    b["str_repeat"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "str_repeat");
      std::string o, s = to_str(a[0]);
      std::int64_t n = to_int(a[1]);
      if (n < 0 || n * static_cast<std::int64_t>(s.size()) > (1 << 24)) throw Fatal{"str_repeat(): invalid count"};
      for (std::int64_t k = 0; k < n; ++k) o += s;
      return Value::of(o);
    };
    b["str_pad"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "str_pad");
      std::string s = to_str(a[0]);
      auto len = static_cast<std::size_t>(std::max<std::int64_t>(0, to_int(a[1])));
      std::string pad = a.size() > 2 ? to_str(a[2]) : " ";
      std::int64_t type = a.size() > 3 ? to_int(a[3]) : 1;
      if (pad.empty() || s.size() >= len) return Value::of(s);
      std::size_t total = len - s.size();
      auto fill = [&](std::size_t n) {
        std::string o;
        while (o.size() < n) o += pad;
        return o.substr(0, n);
      };
      if (type == 0) return Value::of(fill(total) + s);
      if (type == 2) return Value::of(fill(total / 2) + s + fill(total - total / 2));
      return Value::of(s + fill(total));
    };
    b["sprintf"] = [](Interp&, std::vector<Value>& a) { return Value::of(format_printf(a)); };
    b["printf"] = [](Interp& in, std::vector<Value>& a) {
      std::string s = format_printf(a);
      in.out(s);
      return Value::of(static_cast<std::int64_t>(s.size()));
    };
    b["implode"] = [](Interp&, std::vector<Value>& a) {
      need(a, 1, "implode");
      Value glue = a.size() > 1 ? a[0] : Value::of("");
      Value list = a.size() > 1 ? a[1] : a[0];
      if (glue.is_arr()) std::swap(glue, list);
      if (!list.is_arr()) throw Fatal{"implode(): Argument must be of type array"};
      std::vector<std::string> parts;
      for (const auto& [k, v] : list.a->items) parts.push_back(to_str(v));
      return Value::of(text::join(parts, to_str(glue)));
    };
    b["join"] = b["implode"];
    b["explode"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "explode");
      std::string sep = to_str(a[0]), s = to_str(a[1]);
      if (sep.empty()) throw Fatal{"explode(): Argument #1 ($separator) cannot be empty"};
      std::int64_t limit = a.size() > 2 ? to_int(a[2]) : INT64_MAX;
      std::vector<std::string> parts;
      std::size_t pos = 0;
      while (true) {
        if (limit > 0 && static_cast<std::int64_t>(parts.size()) == limit - 1) break;
        auto hit = s.find(sep, pos);
        if (hit == std::string::npos) break;
        parts.push_back(s.substr(pos, hit - pos));
        pos = hit + sep.size();
      }
      parts.push_back(s.substr(pos));
      if (limit < 0) parts.resize(static_cast<std::size_t>(std::max<std::int64_t>(0, static_cast<std::int64_t>(parts.size()) + limit)));
      return list_of(parts);
    };
    b["intval"] = [](Interp&, std::vector<Value>& a) {
      need(a, 1, "intval");
      if (a.size() > 1 && a[0].t == Value::T::Str) {
        try {
          return Value::of(static_cast<std::int64_t>(std::stoll(text::trim(a[0].s), nullptr, static_cast<int>(to_int(a[1])))));
        } catch (const std::exception&) {
          return Value::of(std::int64_t{0});
        }
      }
      return Value::of(to_int(a[0]));
    };
    b["floatval"] = [](Interp&, std::vector<Value>& a) {
      need(a, 1, "floatval");
      return Value::of(to_float(a[0]));
    };
    b["strval"] = [](Interp&, std::vector<Value>& a) {
      need(a, 1, "strval");
      return Value::of(to_str(a[0]));
    };
    b["boolval"] = [](Interp&, std::vector<Value>& a) {
      need(a, 1, "boolval");
      return Value::of(to_bool(a[0]));
    };
    b["gettype"] = [](Interp&, std::vector<Value>& a) { return Value::of(type_name(arg(a, 0))); };
    b["is_numeric"] = [](Interp&, std::vector<Value>& a) {
      Value v = arg(a, 0);
      return Value::of(v.t == Value::T::Int || v.t == Value::T::Float || (v.t == Value::T::Str && is_numeric_str(v.s)));
    };
    b["is_string"] = [](Interp&, std::vector<Value>& a) { return Value::of(arg(a, 0).t == Value::T::Str); };
    b["is_array"] = [](Interp&, std::vector<Value>& a) { return Value::of(arg(a, 0).t == Value::T::Arr); };
    b["is_int"] = [](Interp&, std::vector<Value>& a) { return Value::of(arg(a, 0).t == Value::T::Int); };
    b["is_integer"] = b["is_int"];
    b["is_float"] = [](Interp&, std::vector<Value>& a) { return Value::of(arg(a, 0).t == Value::T::Float); };
    b["is_bool"] = [](Interp&, std::vector<Value>& a) { return Value::of(arg(a, 0).t == Value::T::Bool); };
    b["is_null"] = [](Interp&, std::vector<Value>& a) { return Value::of(arg(a, 0).is_null()); };
    auto ctype = [](int (*pred)(int)) {
      return [pred](Interp&, std::vector<Value>& a) {
        Value v = arg(a, 0);
        if (v.t != Value::T::Str || v.s.empty()) return Value::of(false);
        for (unsigned char c : v.s)
          if (!pred(c)) return Value::of(false);
        return Value::of(true);
      };
    };
    b["ctype_digit"] = ctype([](int c) { return std::isdigit(c); });
    b["ctype_alpha"] = ctype([](int c) { return std::isalpha(c); });
    b["ctype_alnum"] = ctype([](int c) { return std::isalnum(c); });
    b["ctype_xdigit"] = ctype([](int c) { return std::isxdigit(c); });
    b["filter_var"] = [](Interp&, std::vector<Value>& a) {
      need(a, 1, "filter_var");
      std::string s = to_str(a[0]);
      std::int64_t filter = a.size() > 1 ? to_int(a[1]) : 516;
      switch (filter) {
        case 257: {
          std::string t = text::trim(s);
          static const std::regex re("^[+-]?(0|[1-9][0-9]*)$");
          if (!std::regex_match(t, re)) return Value::of(false);
          return Value::of(static_cast<std::int64_t>(std::stoll(t)));
        }
        case 274: {
          static const std::regex re(R"(^[A-Za-z0-9.!#$%&'*+/=?^_`{|}~-]+@[A-Za-z0-9-]+(\.[A-Za-z0-9-]+)+$)");
          return std::regex_match(s, re) ? Value::of(s) : Value::of(false);
        }
        case 275: {
          static const std::regex re(R"(^((25[0-5]|2[0-4][0-9]|1[0-9][0-9]|[1-9]?[0-9])\.){3}(25[0-5]|2[0-4][0-9]|1[0-9][0-9]|[1-9]?[0-9])$)");
          return std::regex_match(s, re) ? Value::of(s) : Value::of(false);
        }
        case 515:
        case 522: return Value::of(html_escape(s, 3));
        case 519: {
          std::string o;
          for (char c : s)
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-') o += c;
          return Value::of(o);
        }
        case 513: return Value::of(text::replace_all(text::replace_all(strip_tags(s), "'", "&#39;"), "\"", "&#34;"));
        default: return Value::of(s);
      }
    };
    b["mysqli_real_escape_string"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "mysqli_real_escape_string");
      std::string o;
      for (char c : to_str(a[1])) {
        switch (c) {
          case '\0': o += "\\0"; break;
          case '\n': o += "\\n"; break;
          case '\r': o += "\\r"; break;
          case '\x1a': o += "\\Z"; break;
          case '\\': o += "\\\\"; break;
          case '\'': o += "\\'"; break;
          case '"': o += "\\\""; break;
          default: o += c;
        }
      }
      return Value::of(o);
    };
    b["mysqli_connect"] = [](Interp&, std::vector<Value>&) { return Value::of("mysqli-link"); };
    b["mysqli_query"] = [](Interp&, std::vector<Value>&) { return Value::of(false); };
    b["mysqli_fetch_assoc"] = [](Interp&, std::vector<Value>&) { return Value{}; };
    b["mysqli_num_rows"] = [](Interp&, std::vector<Value>&) { return Value::of(std::int64_t{0}); };
    b["mysqli_error"] = [](Interp&, std::vector<Value>&) { return Value::of(""); };
    b["count"] = [](Interp&, std::vector<Value>& a) {
      Value v = arg(a, 0);
      if (!v.is_arr()) throw Fatal{"count(): Argument #1 ($value) must be of type Countable|array"};
      return Value::of(static_cast<std::int64_t>(v.a->items.size()));
    };
    b["sizeof"] = b["count"];
    b["in_array"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "in_array");
      if (!a[1].is_arr()) throw Fatal{"in_array(): Argument #2 ($haystack) must be of type array"};
      bool strict = a.size() > 2 && to_bool(a[2]);
      for (const auto& [k, v] : a[1].a->items)
        if (strict ? strict_eq(v, a[0]) : loose_eq(v, a[0])) return Value::of(true);
      return Value::of(false);
    };
    b["array_search"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "array_search");
      if (!a[1].is_arr()) return Value::of(false);
      bool strict = a.size() > 2 && to_bool(a[2]);
      for (const auto& [k, v] : a[1].a->items)
        if (strict ? strict_eq(v, a[0]) : loose_eq(v, a[0])) return key_value(k);
      return Value::of(false);
    };
    b["array_key_exists"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "array_key_exists");
      return Value::of(a[1].is_arr() && a[1].a->get(to_key(a[0])) != nullptr);
    };
    b["key_exists"] = b["array_key_exists"];
    b["array_keys"] = [](Interp&, std::vector<Value>& a) {
      Value out = Value::array();
      Value v = arg(a, 0);
      if (v.is_arr())
        for (const auto& [k, x] : v.a->items) mut_array(out).append() = key_value(k);
      return out;
    };
    b["array_values"] = [](Interp&, std::vector<Value>& a) {
      Value out = Value::array();
      Value v = arg(a, 0);
      if (v.is_arr())
        for (const auto& [k, x] : v.a->items) mut_array(out).append() = x;
      return out;
    };
    b["array_merge"] = [](Interp&, std::vector<Value>& a) {
      Value out = Value::array();
      auto& o = mut_array(out);
      for (auto& v : a) {
        if (!v.is_arr()) throw Fatal{"array_merge(): Argument must be of type array"};
        for (const auto& [k, x] : v.a->items) {
          if (std::holds_alternative<std::int64_t>(k))
            o.append() = x;
          else
            o.set(k) = x;
        }
      }
      return out;
    };
    b["array_push"] = [](Interp&, std::vector<Value>& a) {
      need(a, 1, "array_push");
      auto& o = mut_array(a[0]);
      for (std::size_t k = 1; k < a.size(); ++k) o.append() = a[k];
      return Value::of(static_cast<std::int64_t>(o.items.size()));
    };
    b["array_pop"] = [](Interp&, std::vector<Value>& a) {
      need(a, 1, "array_pop");
      if (!a[0].is_arr() || a[0].a->items.empty()) return Value{};
      auto& o = mut_array(a[0]);
      Value last = o.items.back().second;
      o.erase(o.items.back().first);
      o.next = 0;
      for (const auto& [k, v] : o.items)
        if (auto* n = std::get_if<std::int64_t>(&k); n && *n >= o.next) o.next = *n + 1;
      return last;
    };
    b["array_shift"] = [](Interp&, std::vector<Value>& a) {
      need(a, 1, "array_shift");
      if (!a[0].is_arr() || a[0].a->items.empty()) return Value{};
      Value first = a[0].a->items.front().second;
      Value rebuilt = Value::array();
      auto& r = mut_array(rebuilt);
      for (std::size_t k = 1; k < a[0].a->items.size(); ++k) {
        const auto& [key, v] = a[0].a->items[k];
        if (std::holds_alternative<std::int64_t>(key))
          r.append() = v;
        else
          r.set(key) = v;
      }
      a[0] = rebuilt;
      return first;
    };
    b["array_map"] = [](Interp& in, std::vector<Value>& a) {
      need(a, 2, "array_map");
      if (!a[1].is_arr()) throw Fatal{"array_map(): Argument #2 ($array) must be of type array"};
      Value out = Value::array();
      for (const auto& [k, v] : a[1].a->items) {
        if (a[0].is_null()) {
          mut_array(out).set(k) = v;
          continue;
        }
        mut_array(out).set(k) = in.call_named(to_str(a[0]), {v});
      }
      return out;
    };
    b["array_filter"] = [](Interp& in, std::vector<Value>& a) {
      need(a, 1, "array_filter");
      Value out = Value::array();
      if (!a[0].is_arr()) return out;
      for (const auto& [k, v] : a[0].a->items) {
        bool keep = a.size() > 1 && !a[1].is_null() ? to_bool(in.call_named(to_str(a[1]), {v})) : to_bool(v);
        if (keep) mut_array(out).set(k) = v;
      }
      return out;
    };
    b["array_unique"] = [](Interp&, std::vector<Value>& a) {
      Value out = Value::array();
      Value v = arg(a, 0);
      if (!v.is_arr()) return out;
      std::vector<Value> seen;
      for (const auto& [k, x] : v.a->items) {
        bool dup = std::any_of(seen.begin(), seen.end(), [&](const Value& s) { return to_str(s) == to_str(x); });
        if (dup) continue;
        seen.push_back(x);
        mut_array(out).set(k) = x;
      }
      return out;
    };
    b["array_slice"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "array_slice");
      Value out = Value::array();
      if (!a[0].is_arr()) return out;
      auto n = static_cast<std::int64_t>(a[0].a->items.size());
      std::int64_t off = to_int(a[1]);
      if (off < 0) off = std::max<std::int64_t>(0, n + off);
      std::int64_t len = a.size() > 2 && !a[2].is_null() ? to_int(a[2]) : n;
      if (len < 0) len = std::max<std::int64_t>(0, n - off + len);
      for (std::int64_t k = off; k < std::min(n, off + len); ++k) {
        const auto& [key, v] = a[0].a->items[static_cast<std::size_t>(k)];
        if (std::holds_alternative<std::int64_t>(key))
          mut_array(out).append() = v;
        else
          mut_array(out).set(key) = v;
      }
      return out;
    };
    b["range"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "range");
      std::int64_t lo = to_int(a[0]), hi = to_int(a[1]);
      std::int64_t step = a.size() > 2 ? std::max<std::int64_t>(1, std::llabs(to_int(a[2]))) : 1;
      if (std::llabs(hi - lo) / step > 100000) throw Fatal{"range(): too many elements"};
      Value out = Value::array();
      if (lo <= hi)
        for (std::int64_t k = lo; k <= hi; k += step) mut_array(out).append() = Value::of(k);
      else
        for (std::int64_t k = lo; k >= hi; k -= step) mut_array(out).append() = Value::of(k);
      return out;
    };
    b["max"] = [](Interp&, std::vector<Value>& a) {
      std::vector<Value> xs = a;
      if (a.size() == 1 && a[0].is_arr()) {
        xs.clear();
        for (const auto& [k, v] : a[0].a->items) xs.push_back(v);
      }
      if (xs.empty()) throw Fatal{"max(): Argument #1 ($value) must contain at least one element"};
      Value best = xs[0];
      for (const auto& x : xs)
        if (compare(x, best) > 0) best = x;
      return best;
    };
    b["min"] = [](Interp&, std::vector<Value>& a) {
      std::vector<Value> xs = a;
      if (a.size() == 1 && a[0].is_arr()) {
        xs.clear();
        for (const auto& [k, v] : a[0].a->items) xs.push_back(v);
      }
      if (xs.empty()) throw Fatal{"min(): Argument #1 ($value) must contain at least one element"};
      Value best = xs[0];
      for (const auto& x : xs)
        if (compare(x, best) < 0) best = x;
      return best;
    };
    b["abs"] = [](Interp&, std::vector<Value>& a) {
      Value n = to_number(arg(a, 0));
      return n.t == Value::T::Int ? Value::of(n.i < 0 ? -n.i : n.i) : Value::of(std::fabs(n.f));
    };
    b["floor"] = [](Interp&, std::vector<Value>& a) { return Value::of(std::floor(to_float(arg(a, 0)))); };
    b["ceil"] = [](Interp&, std::vector<Value>& a) { return Value::of(std::ceil(to_float(arg(a, 0)))); };
    b["round"] = [](Interp&, std::vector<Value>& a) {
      double p = std::pow(10.0, static_cast<double>(a.size() > 1 ? to_int(a[1]) : 0));
      return Value::of(std::round(to_float(arg(a, 0)) * p) / p);
    };
    b["preg_match"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "preg_match");
      std::regex re = compile_pcre(to_str(a[0]));
      std::string s = to_str(a[1]);
      std::smatch m;
      bool ok = std::regex_search(s, m, re);
      if (a.size() > 2) {
        Value groups = Value::array();
        if (ok)
          for (std::size_t k = 0; k < m.size(); ++k) mut_array(groups).append() = Value::of(m[k].matched ? m[k].str() : "");
        a[2] = groups;
      }
      return Value::of(std::int64_t{ok});
    };
    b["preg_match_all"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "preg_match_all");
      std::regex re = compile_pcre(to_str(a[0]));
      std::string s = to_str(a[1]);
      std::vector<std::vector<std::string>> groups;
      std::int64_t n = 0;
      for (std::sregex_iterator it(s.begin(), s.end(), re), end; it != end; ++it, ++n) {
        if (groups.size() < it->size()) groups.resize(it->size());
        for (std::size_t k = 0; k < it->size(); ++k) groups[k].push_back((*it)[k].str());
      }
      if (a.size() > 2) {
        Value out = Value::array();
        for (const auto& g : groups) mut_array(out).append() = list_of(g);
        a[2] = out;
      }
      return Value::of(n);
    };
    b["preg_replace"] = [](Interp&, std::vector<Value>& a) {
      need(a, 3, "preg_replace");
      std::vector<std::string> pats, reps;
      if (a[0].is_arr())
        for (const auto& [k, v] : a[0].a->items) pats.push_back(to_str(v));
      else
        pats.push_back(to_str(a[0]));
      if (a[1].is_arr())
        for (const auto& [k, v] : a[1].a->items) reps.push_back(to_str(v));
      std::string s = to_str(a[2]);
      for (std::size_t k = 0; k < pats.size(); ++k) {
        std::string r = a[1].is_arr() ? (k < reps.size() ? reps[k] : "") : to_str(a[1]);
        s = std::regex_replace(s, compile_pcre(pats[k]), pcre_replacement(r));
      }
      return Value::of(s);
    };
    b["preg_split"] = [](Interp&, std::vector<Value>& a) {
      need(a, 2, "preg_split");
      std::regex re = compile_pcre(to_str(a[0]));
      std::string s = to_str(a[1]);
      std::vector<std::string> parts;
      std::sregex_token_iterator it(s.begin(), s.end(), re, -1), end;
      for (; it != end; ++it) parts.push_back(*it);
      return list_of(parts);
    };
    b["preg_quote"] = [](Interp&, std::vector<Value>& a) {
      std::string o, delim = a.size() > 1 ? to_str(a[1]) : "";
      for (char c : sarg(a, 0)) {
        if (std::string(".\\+*?[^]$(){}=!<>|:-#/").find(c) != std::string::npos || delim.find(c) != std::string::npos) o += '\\';
        o += c;
      }
      return Value::of(o);
    };
    b["pathinfo"] = [](Interp&, std::vector<Value>& a) {
      need(a, 1, "pathinfo");
      return pathinfo_impl(to_str(a[0]), a.size() > 1 ? to_int(a[1]) : 15);
    };
    b["json_encode"] = [](Interp&, std::vector<Value>& a) {
      auto j = to_json_value(arg(a, 0));
      return Value::of(a.size() > 1 && (to_int(a[1]) & 128) ? j.dump(4) : j.dump());
    };
    b["var_dump"] = [](Interp& in, std::vector<Value>& a) {
      std::string o;
      for (const auto& v : a) var_dump_into(v, o, 0);
      in.out(o);
      return Value{};
    };
    b["print_r"] = [](Interp& in, std::vector<Value>& a) {
      std::string o;
      print_r_into(arg(a, 0), o, 0);
      if (a.size() > 1 && to_bool(a[1])) return Value::of(o);
      in.out(o);
      return Value::of(true);
    };
    b["print"] = [](Interp& in, std::vector<Value>& a) {
      in.out(sarg(a, 0));
      return Value::of(std::int64_t{1});
    };
    b["function_exists"] = [](Interp& in, std::vector<Value>& a) { return Value::of(in.function_exists(sarg(a, 0))); };
    b["define"] = [](Interp& in, std::vector<Value>& a) {
      need(a, 2, "define");
      in.constants()[to_str(a[0])] = a[1];
      return Value::of(true);
    };
    b["defined"] = [](Interp& in, std::vector<Value>& a) { return Value::of(in.constants().count(sarg(a, 0)) > 0); };
    b["constant"] = [](Interp& in, std::vector<Value>& a) {
      auto it = in.constants().find(sarg(a, 0));
      if (it == in.constants().end()) throw Fatal{"Undefined constant \"" + sarg(a, 0) + "\""};
      return it->second;
    };
    b["file_exists"] = [](Interp& in, std::vector<Value>& a) { return Value::of(in.file_exists(sarg(a, 0))); };
    b["is_uploaded_file"] = [](Interp& in, std::vector<Value>& a) { return Value::of(in.is_upload(sarg(a, 0))); };
    b["move_uploaded_file"] = [](Interp& in, std::vector<Value>& a) {
      need(a, 2, "move_uploaded_file");
      return Value::of(in.move_upload(to_str(a[0]), to_str(a[1])));
    };
    b["chmod"] = [](Interp& in, std::vector<Value>& a) { return Value::of(in.file_exists(sarg(a, 0))); };
    for (const char* noop : {"header", "error_reporting", "ini_set", "set_time_limit", "session_start", "ob_start",
                             "setcookie", "date_default_timezone_set"})
      b[noop] = [](Interp&, std::vector<Value>&) { return Value::of(true); };
    return b;
  }();
  return table;
}

}  // namespace

Result run(const std::string& script, const Request& request, const Options& options) {
  Interp in(request, options);
  return in.run(script);
}

std::string render_trace(const Result& r) {
  std::ostringstream out;
  auto secs = [](std::int64_t micros) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(micros) / 1e6);
    return std::string(buf);
  };
  out << "Version: 3.1.6\n";
  out << "File format: 4\n";
  out << "TRACE START [1970-01-01 00:00:00.000000]\n";
  std::int64_t last_time = 0, last_mem = 393216;
  for (const auto& rec : r.records) {
    const Call& c = r.calls[rec.call];
    last_time = rec.micros;
    last_mem = rec.memory;
    if (!rec.exit) {
      out << c.level << '\t' << c.number << "\t0\t" << secs(rec.micros) << '\t' << rec.memory << '\t' << c.function << '\t'
          << (c.user_defined ? 1 : 0) << '\t' << c.include_file << '\t' << c.file << '\t' << c.line << '\t' << c.argc << '\n';
    } else {
      out << c.level << '\t' << c.number << "\t1\t" << secs(rec.micros) << '\t' << rec.memory << '\n';
    }
  }
  out << "\t\t\t" << secs(last_time + 1) << '\t' << last_mem << '\n';
  out << "TRACE END   [1970-01-01 00:00:00.000000]\n\n";
  return out.str();
}

std::vector<std::string> builtin_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : builtins()) out.push_back(k);
  return out;
}

}  // namespace pocgen::interp
