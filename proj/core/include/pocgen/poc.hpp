#pragma once

#include "json.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pocgen/common.hpp"
#include "pocgen/corpus.hpp"
#include "pocgen/subtask.hpp"

namespace pocgen::poc {

/// PoC formats counted in the format distribution.
enum class Format { Html, PyScript, ShellCommand, PlainText, ProxyRequest, PhpScript };

inline constexpr Format kAllFormats[] = {Format::Html,         Format::PyScript,     Format::ShellCommand,
                                         Format::PlainText,    Format::ProxyRequest, Format::PhpScript};

/// "html", "python", "shell", "text", "proxy-request", "php".
std::string to_string(Format f);
std::optional<Format> parse_format(std::string_view text);
/// ".html", ".py", ".sh", ".txt", ".http", ".php".
std::string extension(Format f);

using Params = std::vector<std::pair<std::string, std::string>>;

/// One multipart/form-data part; `filename` set for file parts.
struct Part {
  std::string name;
  std::optional<std::string> filename;
  std::string content_type;
  std::string content;
};

struct Request {
  /// Absolute URL including the query string.
  std::string url;
  std::string method = "GET";
  /// Body parameters (POST) or query parameters (GET), decoded.
  Params params;
  Params headers;
  std::vector<Part> parts;
};

struct Provenance {
  std::string record_id;
  std::string scenario;
  int trial = 1;
};

struct PocArtifact {
  Format format = Format::PlainText;
  std::string body;
  std::optional<Request> request;
  Cwe cwe = Cwe::CWE79;
  Provenance provenance;
  /// Raw (unencoded) attack payload, when one was assembled.
  std::string payload;
};

class AssemblyError : public Error {
 public:
  explicit AssemblyError(std::string subtask);
  /// Display name of the missing or unusable sub-task, e.g. "request method".
  const std::string& subtask() const { return subtask_; }

 private:
  std::string subtask_;
};

/// Builds a PoC from sub-task answers. Taint-style classes yield a raw HTTP
/// request, CWE-352 an auto-submitting HTML form, CWE-434 a multipart upload
/// request. Path-constraint values go into the query string; request
/// parameters into the body (POST) or query (GET); the placeholders
/// "<payload>" and "{{payload}}" are replaced by the attack payload; the URL is
/// rebased onto the record's base_url. Throws AssemblyError naming the first
/// required sub-task without an answer.
PocArtifact assemble(const std::vector<subtask::SubTaskResult>& results, const corpus::CveRecord& record,
                     const Provenance& provenance = {});

/// Wraps free-form PoC text, classifying its format.
PocArtifact from_text(std::string body, Cwe cwe, const Provenance& provenance = {});

/// Applies the bundled format rules (format_rules.json) in order; PlainText
/// when none matches.
Format classify_format(std::string_view body);
/// Version of the bundled format rules.
int format_rules_version();

/// PHP urlencode: alphanumerics and "-_." kept, space as '+', rest %XX.
std::string url_encode(std::string_view s);
std::string url_decode(std::string_view s);
std::string encode_params(const Params& params);

/// `<id>_<scenario>_<trial><ext>`.
std::string file_stem(const Provenance& p);
/// Metadata record written next to a serialized artifact.
nlohmann::json sidecar(const PocArtifact& artifact);
/// Writes the body and a .json sidecar into `out_dir` (created when missing)
/// and returns the body path.
std::string serialize(const PocArtifact& artifact, const std::string& out_dir);

}  // namespace pocgen::poc
