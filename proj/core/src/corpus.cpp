#include "pocgen/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <regex>
#include <set>

namespace pocgen::corpus {

using json = nlohmann::json;
namespace fs = std::filesystem;

const SourceFile* CveRecord::file(const std::string& path) const {
  for (const auto& f : files)
    if (f.path == path) return &f;
  return nullptr;
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::S1: return "S1";
    case Stage::S2: return "S2";
    case Stage::S3: return "S3";
  }
  return "S?";
}

std::optional<Stage> parse_stage(std::string_view t) {
  std::string s = text::to_lower(text::trim(t));
  if (s == "s1" || s == "1") return Stage::S1;
  if (s == "s2" || s == "2") return Stage::S2;
  if (s == "s3" || s == "3") return Stage::S3;
  return std::nullopt;
}

ScenarioInput build_scenario(const CveRecord& record, Stage stage) {
  ScenarioInput in;
  in.record_id = record.id;
  in.cwe = record.cwe;
  in.stage = stage;
  in.description = record.description;
  if (stage != Stage::S1) in.patch = record.patch;
  if (stage == Stage::S3) in.files = record.files;
  return in;
}

// ---------------------------------------------------------------------------
// Unified diff

PatchParseError::PatchParseError(int line, const std::string& what)
    : Error("patch line " + std::to_string(line) + ": " + what), line_(line) {}

const std::string& PatchHunk::path() const {
  return new_path.empty() || new_path == "/dev/null" ? old_path : new_path;
}

std::vector<int> PatchHunk::touched_old_lines() const {
  std::vector<int> out;
  int old_line = old_start;
  bool pending_insert = false;
  bool replacing = false;
  for (const auto& l : body) {
    if (l.empty()) {
      ++old_line;
      replacing = false;
      continue;
    }
    switch (l[0]) {
      case ' ':
        if (pending_insert) {
          out.push_back(old_line);
          pending_insert = false;
        }
        ++old_line;
        replacing = false;
        break;
      case '-':
        out.push_back(old_line++);
        pending_insert = false;
        replacing = true;
        break;
      case '+':
        if (!replacing) pending_insert = true;
        break;
      default:
        break;
    }
  }
  if (pending_insert) out.push_back(std::max(old_line - 1, 1));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

std::string strip_diff_path(std::string p) {
  auto tab = p.find('\t');
  if (tab != std::string::npos) p = p.substr(0, tab);
  p = text::trim(p);
  if (p == "/dev/null") return p;
  if (text::starts_with(p, "a/") || text::starts_with(p, "b/")) p = p.substr(2);
  return p;
}

}  // namespace

std::vector<PatchHunk> parse_patch(std::string_view diff) {
  std::vector<PatchHunk> hunks;
  if (text::trim(diff).empty()) return hunks;

  static const std::regex header_re(R"(^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@.*$)");
  auto lines = text::split_lines(diff);
  std::string old_path, new_path;
  bool have_files = false;
  bool saw_header_lines = false;

  std::size_t i = 0;
  while (i < lines.size()) {
    const std::string& l = lines[i];
    const int lineno = static_cast<int>(i) + 1;
    if (text::starts_with(l, "--- ") && i + 1 < lines.size() && text::starts_with(lines[i + 1], "+++ ")) {
      old_path = strip_diff_path(l.substr(4));
      new_path = strip_diff_path(lines[i + 1].substr(4));
      have_files = true;
      saw_header_lines = true;
      i += 2;
      continue;
    }
    if (text::starts_with(l, "@@")) {
      std::smatch m;
      if (!std::regex_match(l, m, header_re)) throw PatchParseError(lineno, "malformed hunk header");
      if (!have_files) throw PatchParseError(lineno, "hunk before ---/+++ file header");
      PatchHunk h;
      h.old_path = old_path;
      h.new_path = new_path;
      h.header = l;
      h.old_start = std::stoi(m[1]);
      h.old_count = m[2].matched ? std::stoi(m[2]) : 1;
      h.new_start = std::stoi(m[3]);
      h.new_count = m[4].matched ? std::stoi(m[4]) : 1;
      int old_left = h.old_count, new_left = h.new_count;
      ++i;
      while (old_left > 0 || new_left > 0) {
        if (i >= lines.size())
          throw PatchParseError(static_cast<int>(i) + 1, "truncated hunk (" + std::to_string(old_left) +
                                                             " old / " + std::to_string(new_left) +
                                                             " new lines missing)");
        const std::string& b = lines[i];
        const char tag = b.empty() ? ' ' : b[0];
        if (tag == ' ') {
          --old_left;
          --new_left;
        } else if (tag == '-') {
          --old_left;
          h.removed.push_back(b.substr(1));
        } else if (tag == '+') {
          --new_left;
          h.added.push_back(b.substr(1));
        } else if (tag == '\\') {
          // "\ No newline at end of file"
        } else {
          throw PatchParseError(static_cast<int>(i) + 1, "unexpected line inside hunk");
        }
        if (old_left < 0 || new_left < 0)
          throw PatchParseError(static_cast<int>(i) + 1, "hunk body longer than its header declares");
        h.body.push_back(b);
        ++i;
      }
      while (i < lines.size() && text::starts_with(lines[i], "\\")) h.body.push_back(lines[i++]);
      hunks.push_back(std::move(h));
      continue;
    }
    if (text::starts_with(l, "*** ") || text::starts_with(l, "***************"))
      throw PatchParseError(lineno, "context diff format is not supported; expected unified diff");
    if (have_files && !text::starts_with(l, "diff ") && !text::starts_with(l, "index ") && !l.empty() &&
        !text::starts_with(l, "new file") && !text::starts_with(l, "deleted file") &&
        !text::starts_with(l, "old mode") && !text::starts_with(l, "new mode") &&
        !text::starts_with(l, "similarity") && !text::starts_with(l, "rename ") &&
        !text::starts_with(l, "Binary files") && !text::starts_with(l, "-- ") &&
        !text::starts_with(l, "--- ")) {
      if (hunks.empty()) throw PatchParseError(lineno, "expected '@@' hunk header");
    }
    ++i;
  }
  if (hunks.empty()) {
    if (saw_header_lines) throw PatchParseError(static_cast<int>(lines.size()), "file header without hunks");
    throw PatchParseError(1, "no unified-diff hunks found");
  }
  return hunks;
}

std::string render_hunks(const std::vector<PatchHunk>& hunks) {
  std::vector<std::string> out;
  for (const auto& h : hunks) {
    out.push_back(h.header);
    out.insert(out.end(), h.body.begin(), h.body.end());
  }
  return text::join(out, "\n");
}

// ---------------------------------------------------------------------------
// Records

CorpusError::CorpusError(std::string id, std::string field, const std::string& what)
    : Error("record '" + id + "' field '" + field + "': " + what), id_(std::move(id)), field_(std::move(field)) {}

bool is_origin(std::string_view url) {
  static const std::regex re(R"(^https?://[A-Za-z0-9]([A-Za-z0-9.\-]*[A-Za-z0-9])?(:\d{1,5})?$)");
  return std::regex_match(url.begin(), url.end(), re);
}

bool is_safe_relative_path(std::string_view path) {
  if (path.empty() || path.front() == '/' || text::contains(path, "\\")) return false;
  std::size_t start = 0;
  while (start <= path.size()) {
    auto slash = path.find('/', start);
    auto seg = path.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
    if (seg.empty() || seg == "..") return false;
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return true;
}

namespace {

const json& require(const json& doc, const std::string& id, const char* key) {
  if (!doc.contains(key)) throw CorpusError(id, key, "missing");
  return doc.at(key);
}

std::string require_string(const json& doc, const std::string& id, const char* key) {
  const json& v = require(doc, id, key);
  if (!v.is_string()) throw CorpusError(id, key, "expected a string");
  return v.get<std::string>();
}

}  // namespace

void validate_record(const CveRecord& r) {
  if (r.id.empty()) throw CorpusError(r.id, "id", "empty");
  if (r.cvss < 0.0) throw CorpusError(r.id, "cvss", "must be >= 0");
  if (!is_origin(r.base_url)) throw CorpusError(r.id, "base_url", "not an absolute origin without path: " + r.base_url);
  std::set<std::string> seen;
  for (const auto& f : r.files) {
    if (!is_safe_relative_path(f.path)) throw CorpusError(r.id, "files", "unsafe path: " + f.path);
    if (!seen.insert(f.path).second) throw CorpusError(r.id, "files", "duplicate path: " + f.path);
  }
  std::vector<PatchHunk> hunks;
  try {
    hunks = parse_patch(r.patch);
  } catch (const PatchParseError& e) {
    throw CorpusError(r.id, "patch", e.what());
  }
  for (const auto& h : hunks) {
    const std::string& p = h.path();
    if (p == "/dev/null") continue;
    if (!seen.count(p)) throw CorpusError(r.id, "files", "patch touches '" + p + "' which is not in files");
  }
}

CveRecord record_from_json(const json& doc) {
  if (!doc.is_object()) throw CorpusError("", "id", "record is not an object");
  CveRecord r;
  r.id = require_string(doc, "", "id");
  const std::string cwe_text = require_string(doc, r.id, "cwe");
  auto cwe = parse_cwe(cwe_text);
  if (!cwe || !text::starts_with(text::trim(cwe_text), "CWE-"))
    throw CorpusError(r.id, "cwe", "unsupported class '" + cwe_text + "'");
  r.cwe = *cwe;
  const json& cvss = require(doc, r.id, "cvss");
  if (!cvss.is_number()) throw CorpusError(r.id, "cvss", "expected a number");
  r.cvss = cvss.get<double>();
  r.description = require_string(doc, r.id, "description");
  r.patch = require_string(doc, r.id, "patch");
  const json& files = require(doc, r.id, "files");
  if (!files.is_array()) throw CorpusError(r.id, "files", "expected an array");
  for (const auto& f : files) {
    if (!f.is_object() || !f.contains("path") || !f.contains("content") || !f["path"].is_string() ||
        !f["content"].is_string())
      throw CorpusError(r.id, "files", "entries need string 'path' and 'content'");
    r.files.push_back({f["path"].get<std::string>(), f["content"].get<std::string>()});
  }
  r.base_url = require_string(doc, r.id, "base_url");
  r.entry_url = require_string(doc, r.id, "entry_url");
  if (doc.contains("ground_truth_poc") && !doc["ground_truth_poc"].is_null()) {
    if (!doc["ground_truth_poc"].is_string()) throw CorpusError(r.id, "ground_truth_poc", "expected a string");
    r.ground_truth_poc = doc["ground_truth_poc"].get<std::string>();
  }
  if (doc.contains("semantic_sinks")) {
    const json& s = doc["semantic_sinks"];
    if (!s.is_array()) throw CorpusError(r.id, "semantic_sinks", "expected an array of strings");
    for (const auto& p : s) {
      if (!p.is_string()) throw CorpusError(r.id, "semantic_sinks", "expected an array of strings");
      r.semantic_sinks.push_back(p.get<std::string>());
    }
  }
  validate_record(r);
  return r;
}

json record_to_json(const CveRecord& r) {
  json doc;
  doc["id"] = r.id;
  doc["cwe"] = to_string(r.cwe);
  doc["cvss"] = r.cvss;
  doc["description"] = r.description;
  doc["patch"] = r.patch;
  doc["files"] = json::array();
  for (const auto& f : r.files) doc["files"].push_back({{"path", f.path}, {"content", f.content}});
  doc["base_url"] = r.base_url;
  doc["entry_url"] = r.entry_url;
  doc["ground_truth_poc"] = r.ground_truth_poc ? json(*r.ground_truth_poc) : json(nullptr);
  if (!r.semantic_sinks.empty()) doc["semantic_sinks"] = r.semantic_sinks;
  return doc;
}

CorpusLoad load_corpus(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error("corpus path is not a readable directory: " + dir);
  std::vector<fs::path> paths;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec))
    if (it->is_regular_file() && it->path().extension() == ".json") paths.push_back(it->path());
  if (ec) throw Error("cannot list corpus directory " + dir + ": " + ec.message());
  std::sort(paths.begin(), paths.end());

  CorpusLoad out;
  for (const auto& p : paths) {
    std::string id = p.stem().string();
    try {
      json doc = json::parse(fsutil::read_file(p.string()));
      if (doc.is_object() && doc.contains("id") && doc["id"].is_string()) id = doc["id"].get<std::string>();
      out.records.push_back(record_from_json(doc));
    } catch (const CorpusError& e) {
      out.errors.push_back({p.filename().string(), e.id().empty() ? id : e.id(), e.field(), e.what()});
    } catch (const json::exception& e) {
      out.errors.push_back({p.filename().string(), id, "", std::string("malformed JSON: ") + e.what()});
    }
  }
  std::sort(out.records.begin(), out.records.end(),
            [](const CveRecord& a, const CveRecord& b) { return a.id < b.id; });
  return out;
}

}  // namespace pocgen::corpus
