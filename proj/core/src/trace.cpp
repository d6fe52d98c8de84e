#include "pocgen/trace.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace pocgen::trace {

std::string to_string(CallKind k) {
  switch (k) {
    case CallKind::User: return "user";
    case CallKind::Builtin: return "builtin";
    case CallKind::Include: return "include";
  }
  return "user";
}

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    out.emplace_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

bool parse_int(const std::string& s, long long& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtoll(s.c_str(), &end, 10);
  return end && *end == '\0';
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end && *end == '\0';
}

bool is_include(const std::string& fn) {
  return fn == "include" || fn == "include_once" || fn == "require" || fn == "require_once";
}

}  // namespace

ExecutionTrace parse_trace_text(std::string_view text, const std::string& source) {
  ExecutionTrace t;
  t.source = source;
  auto lines = text::split_lines(text);
  bool have_version = false;
  std::vector<int> open;  // call numbers of unclosed entries, outermost first
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = "line " + std::to_string(i + 1) + ": ";
    if (text::starts_with(line, "Version:")) {
      t.version = text::trim(line.substr(8));
      have_version = true;
      continue;
    }
    if (text::starts_with(line, "File format:")) {
      t.file_format = text::trim(line.substr(12));
      continue;
    }
    if (text::starts_with(line, "TRACE START") || text::starts_with(line, "TRACE END") || text::trim(line).empty())
      continue;
    auto f = split_tabs(line);
    if (f.size() >= 3 && f[0].empty() && f[1].empty() && f[2].empty()) continue;  // summary trailer
    if (f.size() < 3) {
      t.warnings.push_back(where + "too few fields");
      continue;
    }
    long long depth = 0, number = 0;
    if (!parse_int(f[0], depth) || !parse_int(f[1], number) || depth < 1) {
      t.warnings.push_back(where + "bad level or call number");
      continue;
    }
    const std::string& type = f[2];
    if (type == "1") {
      auto it = std::find(open.begin(), open.end(), static_cast<int>(number));
      if (it == open.end())
        t.warnings.push_back(where + "exit record for unknown call " + f[1]);
      else
        open.erase(it, open.end());
      continue;
    }
    if (type == "R" || type == "A") continue;
    if (type != "0") {
      t.warnings.push_back(where + "unknown record type '" + type + "'");
      continue;
    }
    if (f.size() < 10) {
      t.warnings.push_back(where + "entry record with " + std::to_string(f.size()) + " fields");
      continue;
    }
    if (depth > static_cast<long long>(open.size()) + 1) {
      t.warnings.push_back(where + "level " + f[0] + " deeper than its parent allows");
      continue;
    }
    Event e;
    e.depth = static_cast<int>(depth);
    e.number = static_cast<int>(number);
    e.function = f[5];
    long long user = 0, lineno = 0;
    if (!parse_int(f[6], user) || !parse_int(f[9], lineno) || !parse_double(f[3], e.time)) {
      t.warnings.push_back(where + "bad numeric field");
      continue;
    }
    long long mem = 0;
    if (parse_int(f[4], mem)) e.memory = mem;
    e.kind = is_include(e.function) ? CallKind::Include : (user ? CallKind::User : CallKind::Builtin);
    e.include_file = f[7];
    e.file = f[8];
    e.line = static_cast<int>(lineno);
    open.resize(static_cast<std::size_t>(depth - 1));
    open.push_back(e.number);
    t.events.push_back(std::move(e));
  }
  if (!have_version) throw TraceFormatError("trace " + (source.empty() ? std::string("text") : source) + " has no Version header");
  return t;
}

ExecutionTrace parse_trace(const std::string& path) { return parse_trace_text(fsutil::read_file(path), path); }

std::string render(const ExecutionTrace& t) {
  std::ostringstream out;
  auto secs = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  out << "Version: " << (t.version.empty() ? "3.1.6" : t.version) << "\n";
  out << "File format: " << (t.file_format.empty() ? "4" : t.file_format) << "\n";
  out << "TRACE START [1970-01-01 00:00:00.000000]\n";
  std::vector<const Event*> open;
  auto close_to = [&](std::size_t depth) {
    while (open.size() > depth) {
      const Event* e = open.back();
      open.pop_back();
      out << e->depth << '\t' << e->number << "\t1\t" << secs(e->time) << '\t' << e->memory << '\n';
    }
  };
  double last = 0;
  std::int64_t mem = 0;
  for (const auto& e : t.events) {
    close_to(static_cast<std::size_t>(std::max(0, e.depth - 1)));
    out << e.depth << '\t' << e.number << "\t0\t" << secs(e.time) << '\t' << e.memory << '\t' << e.function << '\t'
        << (e.kind == CallKind::Builtin ? 0 : 1) << '\t' << e.include_file << '\t' << e.file << '\t' << e.line
        << "\t0\n";
    open.push_back(&e);
    last = std::max(last, e.time);
    mem = e.memory;
  }
  close_to(0);
  out << "\t\t\t" << secs(last) << '\t' << mem << '\n';
  out << "TRACE END   [1970-01-01 00:00:00.000000]\n\n";
  return out.str();
}

bool path_matches(std::string_view observed, std::string_view node) {
  if (node.empty() || observed.empty()) return false;
  if (observed == node) return true;
  return observed.size() > node.size() && text::ends_with(observed, node) &&
         observed[observed.size() - node.size() - 1] == '/';
}

namespace {

bool construct_sink(const std::string& callee) {
  static const std::set<std::string> constructs = {"echo", "print", "include", "include_once", "require",
                                                   "require_once", "exit", "die", "`", "eval"};
  return constructs.count(text::to_lower(callee)) > 0;
}

}  // namespace

NavDiff diff_navigation(const ExecutionTrace& trace, const context::NavigationContext& nav,
                        const context::SinkFact& sink) {
  if (nav.file_navigation_chain.empty()) throw ContractViolation("navigation chain is empty");
  NavDiff d;
  auto touched = [&](const std::string& node) {
    return std::any_of(trace.events.begin(), trace.events.end(), [&](const Event& e) {
      return path_matches(e.file, node) || path_matches(e.include_file, node);
    });
  };
  for (const auto& node : nav.file_navigation_chain)
    (d.untriggered.empty() && touched(node) ? d.triggered : d.untriggered).push_back(node);
  const std::string& sink_file = sink.location.path;
  d.sink_reached = std::any_of(trace.events.begin(), trace.events.end(), [&](const Event& e) {
    return path_matches(e.file, sink_file) && e.line >= sink.location.line;
  });
  if (!d.sink_reached && construct_sink(sink.callee)) d.sink_reached = touched(sink_file);
  return d;
}

std::string sink_descriptor(const context::SinkFact& sink) {
  return sink.location.path + ":" + std::to_string(sink.location.line) + " (" + sink.callee + ")";
}

std::string feedback_message(const NavDiff& diff, const std::string& sink) {
  if (diff.untriggered.empty() && diff.sink_reached)
    throw ContractViolation("navigation chain fully executed and sink reached; nothing to report");
  const std::string node = diff.untriggered.empty() ? sink : diff.untriggered.front();
  std::string out =
      "The current PoC fails to fully execute the file navigation chain, and application execution flow failed to "
      "reach " +
      node;
  if (diff.untriggered.size() > 1) {
    std::vector<std::string> rest(diff.untriggered.begin() + 1, diff.untriggered.end());
    out += "\nDiagnostics: also untriggered: " + text::join(rest, ", ");
  }
  return out;
}

feedback::ValidationFeedback path_feedback(const NavDiff& diff, const std::string& sink, int iteration) {
  feedback::ValidationFeedback fb;
  fb.kind = "path";
  fb.iteration = iteration;
  if (diff.untriggered.empty() && diff.sink_reached) {
    fb.verdict = feedback::Verdict::Valid;
    fb.usability = "The current PoC is available.";
    fb.details = "The PoC executes the whole file navigation chain and reaches " + sink;
    return fb;
  }
  fb.verdict = feedback::Verdict::Invalid;
  fb.usability = feedback::kPocUnavailable;
  fb.details = feedback_message(diff, sink);
  return fb;
}

}  // namespace pocgen::trace
