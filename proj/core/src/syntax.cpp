#include "pocgen/syntax.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "pocgen/common.hpp"
#include "pocgen/data.hpp"

namespace pocgen::syntax {

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }

const std::set<std::string>& url_attributes() {
  static const std::set<std::string> attrs = {"href", "src", "action", "formaction", "data", "background", "poster", "xlink:href"};
  return attrs;
}

/// Strips whitespace/control characters and decodes a few entities, enough to
/// recognise obfuscated "javascript:" URLs.
std::string normalize_url(std::string_view v) {
  std::string decoded = text::replace_all(std::string(v), "&colon;", ":");
  decoded = text::replace_all(decoded, "&#58;", ":");
  decoded = text::replace_all(decoded, "&#x3a;", ":");
  decoded = text::replace_all(decoded, "&#x3A;", ":");
  std::string out;
  for (char c : decoded)
    if (!is_space(c) && static_cast<unsigned char>(c) >= 0x20) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

enum class H {
  Data, TagOpen, TagName, EndTag, BeforeAttrName, AttrName, AfterAttrName, BeforeAttrValue,
  ValueDq, ValueSq, ValueUq, Comment, RawText, RcData
};

struct HtmlMachine {
  std::string_view s;
  Scan out;
  H state = H::Data;
  std::string tag;
  std::size_t tag_start = 0;
  std::string attr;
  std::size_t attr_start = 0;
  std::size_t value_start = 0;
  std::string raw_end;  // closing tag for RawText/RcData

  bool in_handler() const { return text::starts_with(attr, "on"); }

  void emit(std::string name, std::size_t pos) { out.events.push_back({std::move(name), pos}); }

  void end_attr_name() { emit("attr:" + attr, attr_start); }

  void end_value(std::size_t end) {
    if (url_attributes().count(attr) && text::starts_with(normalize_url(s.substr(value_start, end - value_start)), "javascript:"))
      emit("url:javascript", value_start);
  }

  void close_tag() {
    if (tag == "script" || tag == "style") {
      state = H::RawText;
      raw_end = "</" + tag;
    } else if (tag == "textarea" || tag == "title") {
      state = H::RcData;
      raw_end = "</" + tag;
    } else {
      state = H::Data;
    }
  }

  bool at(std::size_t i, std::string_view lit) const {
    if (i + lit.size() > s.size()) return false;
    for (std::size_t k = 0; k < lit.size(); ++k)
      if (std::tolower(static_cast<unsigned char>(s[i + k])) != std::tolower(static_cast<unsigned char>(lit[k]))) return false;
    return true;
  }

  void run() {
    for (std::size_t i = 0; i < s.size(); ++i) {
      char c = s[i];
      switch (state) {
        case H::Data:
          if (c == '<' && i + 1 < s.size() && is_alpha(s[i + 1])) {
            state = H::TagName;
            tag.clear();
            tag_start = i;
          } else if (c == '<' && i + 1 < s.size() && s[i + 1] == '/') {
            state = H::EndTag;
          } else if (at(i, "<!--")) {
            state = H::Comment;
            i += 3;
          }
          break;
        case H::TagOpen:
          break;
        case H::TagName:
          if (is_space(c) || c == '/' || c == '>') {
            emit("tag:" + tag, tag_start);
            if (c == '>')
              close_tag();
            else
              state = H::BeforeAttrName;
          } else {
            tag += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
          }
          break;
        case H::EndTag:
          if (c == '>') state = H::Data;
          break;
        case H::BeforeAttrName:
          if (c == '>') {
            close_tag();
          } else if (!is_space(c) && c != '/') {
            state = H::AttrName;
            attr.assign(1, static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            attr_start = i;
          }
          break;
        case H::AttrName:
          if (is_space(c) || c == '=' || c == '>' || c == '/') {
            end_attr_name();
            if (c == '=')
              state = H::BeforeAttrValue;
            else if (c == '>')
              close_tag();
            else if (c == '/')
              state = H::BeforeAttrName;
            else
              state = H::AfterAttrName;
          } else {
            attr += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
          }
          break;
        case H::AfterAttrName:
          if (c == '=') {
            state = H::BeforeAttrValue;
          } else if (c == '>') {
            close_tag();
          } else if (!is_space(c) && c != '/') {
            state = H::AttrName;
            attr.assign(1, static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            attr_start = i;
          }
          break;
        case H::BeforeAttrValue:
          if (c == '"') {
            state = H::ValueDq;
            value_start = i + 1;
          } else if (c == '\'') {
            state = H::ValueSq;
            value_start = i + 1;
          } else if (c == '>') {
            close_tag();
          } else if (!is_space(c)) {
            state = H::ValueUq;
            value_start = i;
            if (in_handler() && (c == '(' || c == '`')) emit("js-call", i);
          }
          break;
        case H::ValueDq:
        case H::ValueSq: {
          char q = state == H::ValueDq ? '"' : '\'';
          if (c == q) {
            end_value(i);
            state = H::BeforeAttrName;
          } else if (in_handler() && (c == '(' || c == '`')) {
            emit("js-call", i);
          }
          break;
        }
        case H::ValueUq:
          if (is_space(c) || c == '>') {
            end_value(i);
            if (c == '>')
              close_tag();
            else
              state = H::BeforeAttrName;
          } else if (in_handler() && (c == '(' || c == '`')) {
            emit("js-call", i);
          }
          break;
        case H::Comment:
          if (at(i, "-->")) {
            emit("comment-close", i);
            state = H::Data;
            i += 2;
          }
          break;
        case H::RawText:
        case H::RcData:
          if (at(i, raw_end)) {
            state = H::EndTag;
            i += raw_end.size() - 1;
          } else if (state == H::RawText && tag == "script" && (c == '(' || c == '`')) {
            emit("js-call", i);
          }
          break;
      }
    }
    out.tag = tag;
    switch (state) {
      case H::Data:
        out.descriptor = "html-body";
        out.tag.clear();
        break;
      case H::TagOpen:
      case H::TagName:
      case H::EndTag:
      case H::BeforeAttrName:
      case H::AttrName:
      case H::AfterAttrName:
      case H::BeforeAttrValue:
        out.descriptor = "html-tag";
        break;
      case H::ValueDq:
      case H::ValueSq:
      case H::ValueUq:
        out.attribute = attr;
        if (in_handler())
          out.descriptor = "html-event-handler";
        else if (url_attributes().count(attr))
          out.descriptor = "html-url-attr";
        else
          out.descriptor = state == H::ValueDq ? "html-attr-double" : state == H::ValueSq ? "html-attr-single" : "html-attr-unquoted";
        break;
      case H::Comment:
        out.descriptor = "html-comment";
        out.tag.clear();
        break;
      case H::RawText:
        out.descriptor = tag == "script" ? "html-script-block" : "html-style-block";
        break;
      case H::RcData:
        out.descriptor = "html-rcdata";
        break;
    }
  }
};

const std::set<std::string>& sql_keywords() {
  static const std::set<std::string> words = {"UNION", "SELECT", "OR", "AND", "SLEEP", "BENCHMARK", "INSERT", "UPDATE",
                                              "DELETE", "DROP", "WHERE", "ORDER", "GROUP", "HAVING", "LIKE", "FROM"};
  return words;
}

}  // namespace

Scan scan_html(std::string_view text) {
  HtmlMachine m;
  m.s = text;
  m.run();
  return m.out;
}

Scan scan_sql(std::string_view s) {
  enum class Q { Code, Sq, Dq, Bq, Line, Block } st = Q::Code;
  Scan out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    switch (st) {
      case Q::Code:
        if (c == '\'') {
          st = Q::Sq;
        } else if (c == '"') {
          st = Q::Dq;
        } else if (c == '`') {
          st = Q::Bq;
        } else if (c == '#' || (c == '-' && i + 1 < s.size() && s[i + 1] == '-' && (i + 2 == s.size() || is_space(s[i + 2])))) {
          out.events.push_back({"comment", i});
          st = Q::Line;
        } else if (c == '/' && i + 1 < s.size() && s[i + 1] == '*') {
          out.events.push_back({"comment", i});
          st = Q::Block;
          ++i;
        } else if (c == ';') {
          out.events.push_back({"statement-end", i});
        } else if (is_alpha(c) || c == '_') {
          std::size_t j = i;
          while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
          std::string word(s.substr(i, j - i));
          std::string upper = word;
          for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
          if (sql_keywords().count(upper)) out.events.push_back({"keyword:" + upper, i});
          i = j - 1;
        }
        break;
      case Q::Sq:
      case Q::Dq: {
        char q = st == Q::Sq ? '\'' : '"';
        if (c == '\\') {
          ++i;
        } else if (c == q && i + 1 < s.size() && s[i + 1] == q) {
          ++i;
        } else if (c == q) {
          out.events.push_back({"quote-breakout", i});
          st = Q::Code;
        }
        break;
      }
      case Q::Bq:
        if (c == '`') {
          out.events.push_back({"quote-breakout", i});
          st = Q::Code;
        }
        break;
      case Q::Line:
        if (c == '\n') st = Q::Code;
        break;
      case Q::Block:
        if (c == '*' && i + 1 < s.size() && s[i + 1] == '/') {
          st = Q::Code;
          ++i;
        }
        break;
    }
  }
  switch (st) {
    case Q::Sq: out.descriptor = "sql-single-quoted"; break;
    case Q::Dq: out.descriptor = "sql-double-quoted"; break;
    case Q::Bq: out.descriptor = "sql-identifier"; break;
    default: out.descriptor = "sql-numeric"; break;
  }
  return out;
}

Scan scan_shell(std::string_view s) {
  enum class Q { Unq, Sq, Dq } st = Q::Unq;
  Scan out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    switch (st) {
      case Q::Unq:
        if (c == '\\') {
          ++i;
        } else if (c == '\'') {
          st = Q::Sq;
        } else if (c == '"') {
          st = Q::Dq;
        } else if (c == ';' || c == '|' || c == '&' || c == '\n') {
          out.events.push_back({std::string("metachar:") + (c == '\n' ? std::string("\\n") : std::string(1, c)), i});
        } else if (c == '`' || (c == '$' && i + 1 < s.size() && s[i + 1] == '(')) {
          out.events.push_back({"substitution", i});
        }
        break;
      case Q::Sq:
        if (c == '\'') {
          out.events.push_back({"quote-breakout", i});
          st = Q::Unq;
        }
        break;
      case Q::Dq:
        if (c == '\\') {
          ++i;
        } else if (c == '"') {
          out.events.push_back({"quote-breakout", i});
          st = Q::Unq;
        } else if (c == '`' || (c == '$' && i + 1 < s.size() && s[i + 1] == '(')) {
          out.events.push_back({"substitution", i});
        }
        break;
    }
  }
  out.descriptor = st == Q::Sq ? "shell-single-quoted" : st == Q::Dq ? "shell-double-quoted" : "shell-unquoted";
  return out;
}

Scan scan(Family family, std::string_view text) {
  switch (family) {
    case Family::Html: return scan_html(text);
    case Family::Sql: return scan_sql(text);
    case Family::Shell: return scan_shell(text);
    case Family::None: break;
  }
  Scan s;
  s.descriptor = "none";
  return s;
}

Family family_of(std::string_view d) {
  if (text::starts_with(d, "html-")) return Family::Html;
  if (text::starts_with(d, "sql-")) return Family::Sql;
  if (text::starts_with(d, "shell-")) return Family::Shell;
  return Family::None;
}

namespace {

struct Tables {
  std::vector<DescriptorInfo> infos;
  std::map<std::string, Matcher, std::less<>> matchers;
};

const Tables& tables() {
  static const Tables t = [] {
    Tables out;
    auto doc = nlohmann::json::parse(data::get("syntax_matchers.json"));
    for (const auto& d : doc.at("descriptors")) {
      Matcher m;
      m.descriptor = d.at("id").get<std::string>();
      m.any_of = d.at("any_of").get<std::vector<std::string>>();
      m.active_tags = d.at("active_tags").get<std::vector<std::string>>();
      out.infos.push_back({m.descriptor, d.at("description").get<std::string>()});
      out.matchers.emplace(m.descriptor, std::move(m));
    }
    return out;
  }();
  return t;
}

}  // namespace

const std::vector<DescriptorInfo>& taxonomy() { return tables().infos; }

std::string describe(std::string_view descriptor) {
  for (const auto& i : taxonomy())
    if (i.id == descriptor) return i.description;
  throw Error("unknown syntax descriptor: " + std::string(descriptor));
}

const Matcher& matcher_for(std::string_view descriptor) {
  const auto& m = tables().matchers;
  auto it = m.find(descriptor);
  if (it == m.end()) throw Error("unknown syntax descriptor: " + std::string(descriptor));
  return it->second;
}

Verdict executable(std::string_view descriptor, std::string_view fragment, std::size_t begin, std::size_t end) {
  const Matcher& m = matcher_for(descriptor);
  if (m.any_of.empty()) return {false, "no executable form exists for context " + std::string(descriptor)};
  Scan sc = scan(family_of(descriptor), fragment);
  for (const auto& ev : sc.events) {
    if (ev.pos < begin || ev.pos >= end) continue;
    for (const auto& rule : m.any_of) {
      if (!text::starts_with(ev.name, rule)) continue;
      if (rule == "tag:") {
        std::string name = ev.name.substr(4);
        if (std::find(m.active_tags.begin(), m.active_tags.end(), name) == m.active_tags.end()) continue;
      }
      return {true, ev.name + " at offset " + std::to_string(ev.pos)};
    }
  }
  return {false, "payload region contains no executable construct for context " + std::string(descriptor)};
}

}  // namespace pocgen::syntax
