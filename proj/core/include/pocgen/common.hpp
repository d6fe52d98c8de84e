#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pocgen {

/// The five weakness classes the pipeline understands.
enum class Cwe { CWE78, CWE79, CWE89, CWE352, CWE434 };

inline constexpr Cwe kAllCwes[] = {Cwe::CWE78, Cwe::CWE79, Cwe::CWE89, Cwe::CWE352, Cwe::CWE434};

/// "CWE-79" style identifier.
std::string to_string(Cwe cwe);
/// Accepts "CWE-79", "CWE79" and "79". Returns nullopt for anything else.
std::optional<Cwe> parse_cwe(std::string_view text);
std::string cwe_title(Cwe cwe);

/// CWE-78/79/89 share the source-to-sink decomposition.
inline bool is_taint_style(Cwe cwe) {
  return cwe == Cwe::CWE78 || cwe == Cwe::CWE79 || cwe == Cwe::CWE89;
}

/// A file of the vulnerable application: relative '/'-separated path + full text.
struct SourceFile {
  std::string path;
  std::string content;

  bool operator==(const SourceFile&) const = default;
};

/// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a caller breaks an operation's precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Token estimate used for every budget decision: characters / 4, rounded up.
/// Characters are Unicode code points of the UTF-8 input.
std::size_t estimate_tokens(std::string_view text);

/// Exact non-negative rational; every reported rate is one of these.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  /// Percentage in tenths of a percent, rounded half up (21/100 -> 210).
  std::int64_t tenths() const;
  /// "21.0%".
  std::string percent() const;
  /// Same value, lowest terms.
  Ratio reduced() const;
};

namespace text {

std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);
bool contains(std::string_view haystack, std::string_view needle);
std::string replace_all(std::string s, std::string_view from, std::string_view to);
/// Shell-style glob with '*' and '?', case-insensitive.
bool glob_match(std::string_view pattern, std::string_view value);
/// Lines [first, last] (1-based, inclusive) of `content`.
std::string line_range(std::string_view content, int first, int last);
int count_lines(std::string_view content);

}  // namespace text

namespace fsutil {

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace fsutil

}  // namespace pocgen
