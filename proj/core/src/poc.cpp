#include "pocgen/poc.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <regex>
#include <sstream>

#include "pocgen/data.hpp"

namespace pocgen::poc {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Format f) {
  switch (f) {
    case Format::Html: return "html";
    case Format::PyScript: return "python";
    case Format::ShellCommand: return "shell";
    case Format::PlainText: return "text";
    case Format::ProxyRequest: return "proxy-request";
    case Format::PhpScript: return "php";
  }
  return "text";
}

std::optional<Format> parse_format(std::string_view text) {
  for (Format f : kAllFormats)
    if (to_string(f) == text) return f;
  return std::nullopt;
}

std::string extension(Format f) {
  switch (f) {
    case Format::Html: return ".html";
    case Format::PyScript: return ".py";
    case Format::ShellCommand: return ".sh";
    case Format::PlainText: return ".txt";
    case Format::ProxyRequest: return ".http";
    case Format::PhpScript: return ".php";
  }
  return ".txt";
}

AssemblyError::AssemblyError(std::string subtask)
    : Error("PoC assembly needs an answer for sub-task: " + subtask), subtask_(std::move(subtask)) {}

// ---------------------------------------------------------------------------
// classification

namespace {

struct Rule {
  Format format;
  std::string scope;  // "first-line", "any-line", "body"
  std::regex pattern;
};

struct Rules {
  int version = 0;
  std::vector<Rule> rules;
};

const Rules& rules() {
  static const Rules r = [] {
    Rules out;
    json doc = json::parse(data::get("format_rules.json"));
    out.version = doc.at("version").get<int>();
    for (const auto& j : doc.at("rules")) {
      auto f = parse_format(j.at("format").get<std::string>());
      if (!f) throw Error("format_rules.json: unknown format " + j.at("format").dump());
      auto flags = std::regex::ECMAScript;
      if (j.value("icase", false)) flags |= std::regex::icase;
      out.rules.push_back({*f, j.at("scope").get<std::string>(), std::regex(j.at("pattern").get<std::string>(), flags)});
    }
    return out;
  }();
  return r;
}

}  // namespace

int format_rules_version() { return rules().version; }

Format classify_format(std::string_view body) {
  std::string text(body);
  std::vector<std::string> lines;
  for (auto& l : text::split_lines(text)) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
    lines.push_back(l);
  }
  std::string first;
  for (const auto& l : lines)
    if (!text::trim(l).empty()) {
      first = text::trim(l);
      break;
    }
  for (const auto& r : rules().rules) {
    bool hit = false;
    if (r.scope == "first-line") {
      hit = std::regex_search(first, r.pattern);
    } else if (r.scope == "any-line") {
      hit = std::any_of(lines.begin(), lines.end(),
                        [&](const std::string& l) { return std::regex_search(text::trim(l), r.pattern); });
    } else {
      hit = std::regex_search(text, r.pattern);
    }
    if (hit) return r.format;
  }
  return Format::PlainText;
}

// ---------------------------------------------------------------------------
// encoding

std::string url_encode(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.') {
      out += static_cast<char>(c);
    } else if (c == ' ') {
      out += '+';
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
               std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::string encode_params(const Params& params) {
  std::string out;
  for (const auto& [k, v] : params) {
    if (!out.empty()) out += '&';
    out += url_encode(k) + "=" + url_encode(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// assembly

namespace {

std::string display_name(const std::string& id) {
  static const std::map<std::string, std::string> names = {
      {"request_method", "request method"},       {"request_url", "request URL"},
      {"request_parameters", "request parameters"}, {"attack_payload", "attack payload"},
      {"operation_parameters", "operation parameters"}, {"file_name", "file name"},
      {"file_content_type", "file content-type"}, {"file_content", "file content"},
      {"path_constraint_values", "path constraint variables and values"}};
  auto it = names.find(id);
  return it == names.end() ? id : it->second;
}

class Answers {
 public:
  explicit Answers(const std::vector<subtask::SubTaskResult>& results) : results_(results) {}

  const subtask::SubTaskResult* find(const std::string& id) const {
    for (const auto& r : results_)
      if (r.id == id && r.status == subtask::Status::Answered && r.value) return &r;
    return nullptr;
  }
  const subtask::SubTaskResult& need(const std::string& id) const {
    if (auto* r = find(id)) return *r;
    throw AssemblyError(display_name(id));
  }
  std::string text(const std::string& id) const { return text::trim(subtask::answer_text(need(id))); }
  Params map(const std::string& id, bool required) const {
    const subtask::SubTaskResult* r = required ? &need(id) : find(id);
    Params out;
    if (!r) return out;
    if (!r->value->is_object()) throw AssemblyError(display_name(id));
    for (const auto& [k, v] : r->value->items()) out.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
    return out;
  }

 private:
  const std::vector<subtask::SubTaskResult>& results_;
};

void put(Params& params, const std::string& key, const std::string& value) {
  for (auto& [k, v] : params)
    if (k == key) {
      v = value;
      return;
    }
  params.emplace_back(key, value);
}

struct SplitUrl {
  std::string path;  // always starts with '/'
  Params query;
};

SplitUrl split_url(const std::string& url) {
  std::string rest = text::trim(url);
  if (auto hash = rest.find('#'); hash != std::string::npos) rest.erase(hash);
  if (auto scheme = rest.find("://"); scheme != std::string::npos) {
    auto slash = rest.find_first_of("/?", scheme + 3);
    rest = slash == std::string::npos ? "/" : rest.substr(slash);
  }
  SplitUrl out;
  auto q = rest.find('?');
  out.path = rest.substr(0, q);
  if (out.path.empty() || out.path[0] != '/') out.path = "/" + out.path;
  if (q != std::string::npos) {
    std::stringstream ss(rest.substr(q + 1));
    std::string pair;
    while (std::getline(ss, pair, '&')) {
      if (pair.empty()) continue;
      auto eq = pair.find('=');
      put(out.query, url_decode(pair.substr(0, eq)), eq == std::string::npos ? "" : url_decode(pair.substr(eq + 1)));
    }
  }
  return out;
}

std::string host_of(const std::string& base_url) {
  auto p = base_url.find("://");
  return p == std::string::npos ? base_url : base_url.substr(p + 3);
}

std::string fill(std::string value, const std::string& payload) {
  if (payload.empty()) return value;
  value = text::replace_all(value, "{{payload}}", payload);
  return text::replace_all(value, "<payload>", payload);
}

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string request_line(const Request& r, const std::string& base_url) {
  std::string target = r.url.substr(base_url.size());
  return r.method + " " + (target.empty() ? "/" : target) + " HTTP/1.1";
}

std::string render_http(const Request& r, const std::string& base_url, const std::string& body) {
  std::string out = request_line(r, base_url) + "\r\n";
  for (const auto& [k, v] : r.headers) out += k + ": " + v + "\r\n";
  out += "\r\n" + body;
  return out;
}

constexpr const char* kBoundary = "----pocgenFormBoundary7MA4YWxkTrZu0gW";

}  // namespace

PocArtifact assemble(const std::vector<subtask::SubTaskResult>& results, const corpus::CveRecord& record,
                     const Provenance& provenance) {
  Answers a(results);
  PocArtifact art;
  art.cwe = record.cwe;
  art.provenance = provenance;
  if (art.provenance.record_id.empty()) art.provenance.record_id = record.id;

  Request req;
  req.method = text::trim(a.text("request_method"));
  std::transform(req.method.begin(), req.method.end(), req.method.begin(), ::toupper);
  static const std::regex token("^[A-Z]+$");
  if (!std::regex_match(req.method, token)) throw AssemblyError(display_name("request_method"));
  SplitUrl url = split_url(a.text("request_url"));
  Params request_params = a.map("request_parameters", true);
  Params constraint_params = a.map("path_constraint_values", false);

  if (is_taint_style(record.cwe)) art.payload = a.text("attack_payload");
  Params op_params;
  if (record.cwe == Cwe::CWE352) op_params = a.map("operation_parameters", true);
  std::string file_name, file_type, file_content;
  if (record.cwe == Cwe::CWE434) {
    file_name = a.text("file_name");
    file_type = a.text("file_content_type");
    file_content = subtask::answer_text(a.need("file_content"));
  }

  const bool in_body = req.method != "GET" && req.method != "HEAD";
  Params query = url.query;
  for (auto& kv : query) kv.second = fill(kv.second, art.payload);
  for (const auto& [k, v] : constraint_params) put(query, k, fill(v, art.payload));
  Params body;
  Params& target = in_body ? body : query;
  for (const auto& [k, v] : op_params) put(target, k, fill(v, art.payload));
  for (const auto& [k, v] : request_params) put(target, k, fill(v, art.payload));

  std::optional<std::string> file_field;
  if (record.cwe == Cwe::CWE434) {
    for (Params* ps : {&body, &query}) {
      for (auto it = ps->begin(); it != ps->end(); ++it) {
        const std::string v = text::trim(it->second);
        if (v == "<file>" || v == "{{file}}" || v == file_name) {
          file_field = it->first;
          ps->erase(it);
          break;
        }
      }
      if (file_field) break;
    }
    if (!file_field) throw AssemblyError(display_name("request_parameters"));
  }

  std::string base = record.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  req.url = base + url.path + (query.empty() ? "" : "?" + encode_params(query));
  req.params = in_body ? body : query;
  req.headers.emplace_back("Host", host_of(base));

  if (record.cwe == Cwe::CWE352) {
    std::ostringstream h;
    std::string action = req.method == "GET" ? base + url.path : req.url;
    h << "<!DOCTYPE html>\n<html>\n<body>\n";
    h << "<form id=\"poc\" method=\"" << text::to_lower(req.method) << "\" action=\"" << html_escape(action)
      << "\">\n";
    for (const auto& [k, v] : (req.method == "GET" ? query : body))
      h << "  <input type=\"hidden\" name=\"" << html_escape(k) << "\" value=\"" << html_escape(v) << "\">\n";
    h << "</form>\n<script>document.getElementById('poc').submit();</script>\n</body>\n</html>\n";
    req.headers.clear();
    art.format = Format::Html;
    art.body = h.str();
  } else if (record.cwe == Cwe::CWE434) {
    for (const auto& [k, v] : body) req.parts.push_back({k, std::nullopt, "", v});
    req.parts.push_back({*file_field, file_name, file_type, file_content});
    std::string boundary = kBoundary;
    auto clashes = [&] {
      return std::any_of(req.parts.begin(), req.parts.end(),
                         [&](const Part& p) { return text::contains(p.content, boundary); });
    };
    while (clashes()) boundary += "x";
    std::string payload_body;
    for (const auto& p : req.parts) {
      payload_body += "--" + boundary + "\r\n";
      payload_body += "Content-Disposition: form-data; name=\"" + p.name + "\"";
      if (p.filename) payload_body += "; filename=\"" + *p.filename + "\"";
      payload_body += "\r\n";
      if (p.filename) payload_body += "Content-Type: " + (p.content_type.empty() ? "application/octet-stream" : p.content_type) + "\r\n";
      payload_body += "\r\n" + p.content + "\r\n";
    }
    payload_body += "--" + boundary + "--\r\n";
    req.params = body;
    req.headers.emplace_back("Content-Type", "multipart/form-data; boundary=" + boundary);
    req.headers.emplace_back("Content-Length", std::to_string(payload_body.size()));
    req.headers.emplace_back("Connection", "close");
    art.format = Format::ProxyRequest;
    art.body = render_http(req, base, payload_body);
  } else {
    std::string payload_body;
    if (in_body) {
      payload_body = encode_params(body);
      req.headers.emplace_back("Content-Type", "application/x-www-form-urlencoded");
      req.headers.emplace_back("Content-Length", std::to_string(payload_body.size()));
    }
    req.headers.emplace_back("Connection", "close");
    art.format = Format::ProxyRequest;
    art.body = render_http(req, base, payload_body);
  }
  art.request = std::move(req);
  return art;
}

PocArtifact from_text(std::string body, Cwe cwe, const Provenance& provenance) {
  PocArtifact art;
  art.format = classify_format(body);
  art.body = std::move(body);
  art.cwe = cwe;
  art.provenance = provenance;
  return art;
}

// ---------------------------------------------------------------------------
// serialization

std::string file_stem(const Provenance& p) {
  return p.record_id + "_" + p.scenario + "_" + std::to_string(p.trial);
}

json sidecar(const PocArtifact& a) {
  json j = {{"record_id", a.provenance.record_id},
            {"scenario", a.provenance.scenario},
            {"trial", a.provenance.trial},
            {"cwe", to_string(a.cwe)},
            {"format", to_string(a.format)},
            {"format_rules_version", format_rules_version()},
            {"file", file_stem(a.provenance) + extension(a.format)}};
  if (!a.payload.empty()) j["payload"] = a.payload;
  if (a.request) {
    auto pairs = [](const Params& ps) {
      json arr = json::array();
      for (const auto& [k, v] : ps) arr.push_back({k, v});
      return arr;
    };
    json parts = json::array();
    for (const auto& p : a.request->parts) {
      json pj = {{"name", p.name}, {"content", p.content}};
      if (p.filename) pj["filename"] = *p.filename;
      if (!p.content_type.empty()) pj["content_type"] = p.content_type;
      parts.push_back(std::move(pj));
    }
    j["request"] = {{"url", a.request->url},
                    {"method", a.request->method},
                    {"params", pairs(a.request->params)},
                    {"headers", pairs(a.request->headers)},
                    {"parts", parts}};
  }
  return j;
}

std::string serialize(const PocArtifact& artifact, const std::string& out_dir) {
  if (artifact.provenance.record_id.empty()) throw ContractViolation("artifact has no record id");
  fs::create_directories(out_dir);
  const std::string stem = (fs::path(out_dir) / file_stem(artifact.provenance)).string();
  const std::string path = stem + extension(artifact.format);
  fsutil::write_file(path, artifact.body);
  fsutil::write_file(stem + ".json", sidecar(artifact).dump(2) + "\n");
  return path;
}

}  // namespace pocgen::poc
