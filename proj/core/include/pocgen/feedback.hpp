#pragma once

#include <string>

namespace pocgen::feedback {

enum class Verdict { Valid, Invalid, Inconclusive };

std::string to_string(Verdict v);

/// Printed by a harness when a control-flow guard on the way to the sink fails.
inline constexpr const char* kControlMarker = "control flow constraints are not satisfied.";
inline constexpr const char* kDataProbeOpen = "[[probe:data]]";
inline constexpr const char* kDataProbeClose = "[[/probe:data]]";
inline constexpr const char* kSyntaxProbeOpen = "[[probe:syntax]]";
inline constexpr const char* kSyntaxProbeClose = "[[/probe:syntax]]";

inline constexpr const char* kPayloadUnavailable = "The current payload is not available.";
inline constexpr const char* kPayloadAvailable = "The current payload is available.";
inline constexpr const char* kPocUnavailable = "The current PoC is not available.";

/// Evidence from one validator run, handed back to the generator.
struct ValidationFeedback {
  /// "payload" or "path".
  std::string kind;
  Verdict verdict = Verdict::Inconclusive;
  /// Usability line, e.g. kPayloadUnavailable.
  std::string usability;
  /// Probe block or trace message.
  std::string details;
  /// 1-based validation round.
  int iteration = 1;

  /// Usability line, newline, details.
  std::string render() const;
};

}  // namespace pocgen::feedback
