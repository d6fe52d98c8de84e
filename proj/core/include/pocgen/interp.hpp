#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pocgen/common.hpp"

namespace pocgen::interp {

/// One uploaded file of a simulated multipart request.
struct Upload {
  std::string name;
  std::string type;
  std::string content;
};

/// Request data the script sees through the superglobals.
struct Request {
  std::string method = "GET";
  std::map<std::string, std::string> get;
  std::map<std::string, std::string> post;
  std::map<std::string, std::string> cookie;
  std::map<std::string, std::string> server;
  std::map<std::string, Upload> files;
};

struct Options {
  /// Directory scripts and includes are read from; nothing outside it is read.
  std::string root = ".";
  /// Statement executions before the run is aborted.
  std::size_t max_steps = 2'000'000;
  std::size_t max_output = 4 * 1024 * 1024;
  int max_call_depth = 200;
  /// Record an execution trace.
  bool trace = false;
  /// Directory prefix written in front of file names in the trace.
  std::string trace_prefix = "/var/www/html";
};

/// A call as a function tracer records it.
struct Call {
  int level = 0;
  int number = 0;
  std::string function;  // "{main}", "include", "strlen", ...
  bool user_defined = false;
  std::string include_file;  // include/require target, trace-prefixed
  std::string file;          // calling file, trace-prefixed
  int line = 0;
  int argc = 0;
};

/// Entry or exit of a call, in execution order.
struct TraceRecord {
  bool exit = false;
  std::size_t call = 0;  // index into Result::calls
  std::int64_t micros = 0;
  std::int64_t memory = 0;
};

struct Result {
  std::string output;
  /// 0 on normal completion or exit(), the exit() status when numeric, 255 on a fatal error.
  int exit_code = 0;
  /// Fatal error message, empty when none occurred.
  std::string error;
  /// Warnings raised while running (failed includes, undefined indexes are silent).
  std::vector<std::string> warnings;
  /// Calls in entry order and their entry/exit records, when tracing.
  std::vector<Call> calls;
  std::vector<TraceRecord> records;
};

/// Runs `script` (relative to options.root) for `request`. Never throws for
/// errors inside the script: they end the run and land in Result::error.
Result run(const std::string& script, const Request& request, const Options& options);

/// Renders recorded calls in the tab-separated computerized trace layout
/// (format 4): version header, entry and exit records, trailer.
std::string render_trace(const Result& result);

/// Builtin functions the interpreter implements, sorted.
std::vector<std::string> builtin_names();

}  // namespace pocgen::interp
