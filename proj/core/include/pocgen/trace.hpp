#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "pocgen/common.hpp"
#include "pocgen/context.hpp"
#include "pocgen/feedback.hpp"

namespace pocgen::trace {

enum class CallKind { User, Builtin, Include };

std::string to_string(CallKind k);

/// One entry record of a function trace.
struct Event {
  int depth = 0;
  int number = 0;
  std::string function;
  CallKind kind = CallKind::User;
  /// Included file for include/require events.
  std::string include_file;
  std::string file;
  int line = 0;
  double time = 0;
  std::int64_t memory = 0;

  bool operator==(const Event&) const = default;
};

struct ExecutionTrace {
  std::string source;
  std::string version;
  std::string file_format;
  std::vector<Event> events;
  /// Lines that could not be read, "line N: reason".
  std::vector<std::string> warnings;
};

class TraceFormatError : public Error {
 public:
  using Error::Error;
};

/// Reads the tab-separated computerized trace layout. Throws TraceFormatError
/// when the "Version:" header is missing; other defects become warnings.
ExecutionTrace parse_trace_text(std::string_view text, const std::string& source = "");
ExecutionTrace parse_trace(const std::string& path);

/// Writes `trace` back in the same layout, closing calls by nesting.
std::string render(const ExecutionTrace& trace);

/// Observed coverage of a navigation chain.
struct NavDiff {
  std::vector<std::string> triggered;
  /// In chain order.
  std::vector<std::string> untriggered;
  bool sink_reached = false;
};

/// True when trace path `observed` names chain node `node`: equal, or ending
/// in "/" + node. Case-sensitive.
bool path_matches(std::string_view observed, std::string_view node);

/// Compares the files a run touched with the predicted chain. A node is
/// triggered when some event ran in it or included it and every node before
/// it was triggered; untriggered nodes are the chain from the first miss on.
/// The sink counts as reached when an event in the sink file sits at or after
/// the sink line; for language-construct sinks (echo, print, include, exit,
/// backtick), which tracers do not record, reaching the sink file is enough.
/// Throws ContractViolation on an empty chain.
NavDiff diff_navigation(const ExecutionTrace& trace, const context::NavigationContext& nav,
                        const context::SinkFact& sink);

/// "path:line (callee)".
std::string sink_descriptor(const context::SinkFact& sink);

/// The navigation feedback line naming the first untriggered node, or the sink
/// when every node ran; further untriggered nodes follow on a "Diagnostics:"
/// line. Throws ContractViolation when the chain ran and the sink was reached.
std::string feedback_message(const NavDiff& diff, const std::string& sink_descriptor);

/// feedback_message plus the usability line, as validator feedback.
feedback::ValidationFeedback path_feedback(const NavDiff& diff, const std::string& sink_descriptor, int iteration = 1);

}  // namespace pocgen::trace
