#include "pocgen/payload.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "pocgen/php_model.hpp"
#include "pocgen/syntax.hpp"

namespace pocgen::payload {

namespace fs = std::filesystem;
using feedback::Verdict;

std::string php_quote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\\' || c == '\'') out += '\\';
    out += c;
  }
  return out + "'";
}

// ---------------------------------------------------------------------------
// lint

namespace {

const std::set<std::string>& forbidden_calls() {
  static const std::set<std::string> names = {
      "file_put_contents", "fopen", "fwrite", "fputs", "unlink", "mkdir", "rmdir", "rename", "copy", "touch",
      "tempnam", "tmpfile", "move_uploaded_file", "chmod", "chown", "symlink", "link", "system", "exec",
      "shell_exec", "passthru", "popen", "proc_open", "pcntl_exec", "fsockopen", "pfsockopen",
      "stream_socket_client", "socket_create", "socket_connect", "curl_init", "curl_exec", "file_get_contents",
      "readfile", "file", "mail", "mysqli_connect", "mysql_connect", "pg_connect", "eval", "assert",
      "create_function", "dl", "putenv", "ini_set", "set_include_path"};
  return names;
}

}  // namespace

std::vector<std::string> lint(const std::string& source) {
  std::vector<std::string> problems;
  for (const char* marker : {feedback::kDataProbeOpen, feedback::kSyntaxProbeOpen, feedback::kControlMarker})
    if (!text::contains(source, marker)) problems.push_back(std::string("missing probe ") + marker);
  php::SourceUnit unit;
  try {
    unit = php::parse_php(SourceFile{"harness.php", source});
  } catch (const std::exception& e) {
    problems.push_back(std::string("does not parse: ") + e.what());
    return problems;
  }
  for (const auto& st : unit.statements) {
    const std::string where = "line " + std::to_string(st.line) + ": ";
    for (const auto& c : st.calls) {
      std::string name = text::to_lower(c);
      if (forbidden_calls().count(name)) problems.push_back(where + "forbidden call " + c + "()");
    }
    for (const auto& s : st.sinks)
      if (s.callee == "`") problems.push_back(where + "backtick shell execution");
    if (st.kind == php::StmtKind::Include) {
      const std::string target = st.target.value_or("");
      if (!st.target_is_literal)
        problems.push_back(where + "include with a computed target");
      else if (text::starts_with(target, "/") || text::contains(target, "://") || text::contains(target, ".."))
        problems.push_back(where + "include outside the workspace: " + target);
    }
  }
  std::sort(problems.begin(), problems.end());
  problems.erase(std::unique(problems.begin(), problems.end()), problems.end());
  return problems;
}

// ---------------------------------------------------------------------------
// template harness

namespace {

std::string regex_escape(std::string_view s) {
  static const std::string special = R"(\^$.|?*+()[]{}/)";
  std::string out;
  for (char c : s) {
    if (special.find(c) != std::string::npos) out += '\\';
    out += c;
  }
  return out;
}

std::regex source_pattern(const context::SourceFact& src) {
  std::string sg = regex_escape("$" + src.superglobal);
  if (src.key.empty() || src.key == "*") return std::regex(sg + R"(\s*\[[^\]]*\])");
  return std::regex(sg + R"re(\s*\[\s*(['"]))re" + regex_escape(src.key) + R"re(\1\s*\])re");
}

std::string replace_source(const std::string& code, const context::SourceFact& src) {
  return std::regex_replace(code, source_pattern(src), "$$value");
}

struct Def {
  std::string path;
  int line = 0;
  int end_line = 0;
};

void require_taint_function_level(const context::VulnerabilityContext& vuln) {
  if (!is_taint_style(vuln.cwe))
    throw ContractViolation("payload validation applies to taint-style classes, not " + to_string(vuln.cwe));
  if (vuln.granularity != context::Granularity::Function)
    throw ContractViolation("payload validation needs a function-level vulnerability context");
}

}  // namespace

HarnessSpec template_harness(const corpus::CveRecord& record, const context::VulnerabilityContext& vuln,
                             const std::string& payload) {
  require_taint_function_level(vuln);
  if (vuln.path.empty()) throw ContractViolation("vulnerability context has no source-to-sink path");
  const php::ProgramModel model = context::model_for_record(record);

  // User functions reachable from the path statements and data-flow steps.
  std::map<std::string, Def> defs;
  std::vector<std::string> pending;
  auto want = [&](const std::string& name) {
    const php::FunctionDef* f = model.function(name);
    if (!f) return;
    std::string key = text::to_lower(f->name);
    if (defs.count(key)) return;
    defs[key] = Def{f->path, f->line, f->end_line};
    pending.push_back(key);
  };
  for (const auto& step : vuln.data_flow_constraints)
    if (step.definition) want(step.callee);
  for (const auto& step : vuln.path) {
    const php::SourceUnit* u = model.unit(step.location.path);
    if (u && step.stmt >= 0 && step.stmt < static_cast<int>(u->statements.size()))
      for (const auto& c : u->statements[step.stmt].calls) want(c);
  }
  while (!pending.empty()) {
    std::string key = pending.back();
    pending.pop_back();
    const php::FunctionDef* f = model.function(key);
    const php::SourceUnit* u = model.unit(f->path);
    for (int i = f->body_begin; i < f->body_end && i < static_cast<int>(u->statements.size()); ++i)
      for (const auto& c : u->statements[i].calls) want(c);
  }
  std::vector<Def> ordered;
  for (const auto& [k, d] : defs) ordered.push_back(d);
  std::sort(ordered.begin(), ordered.end(),
            [](const Def& a, const Def& b) { return std::tie(a.path, a.line) < std::tie(b.path, b.line); });
  auto inside_def = [&](const context::Location& loc) {
    return std::any_of(ordered.begin(), ordered.end(), [&](const Def& d) {
      return d.path == loc.path && loc.line >= d.line && loc.line <= d.end_line;
    });
  };

  // Path statements up to (not including) the sink.
  struct Line {
    context::Location at;
    std::string code;
  };
  std::vector<Line> steps;
  std::set<std::pair<std::string, int>> seen;
  for (std::size_t i = 0; i + 1 < vuln.path.size(); ++i) {
    const auto& step = vuln.path[i];
    if (inside_def(step.location)) continue;
    std::string code = text::trim(step.code);
    if (code.empty() || code.back() != ';') continue;
    if (!seen.insert({step.location.path, step.location.line}).second) continue;
    steps.push_back({step.location, replace_source(code, vuln.source)});
  }

  std::string sink_var = vuln.path.back().variable;
  if (sink_var.empty() || sink_var[0] != '$' || text::starts_with(sink_var, "$_")) sink_var = "$value";

  auto guard_code = [&](const context::Guard& g) {
    return "if (!(" + replace_source(g.predicate, vuln.source) + ")) { echo \"" + feedback::kControlMarker +
           "\\n\"; exit(0); }";
  };
  std::vector<std::vector<std::string>> before(steps.size() + 1);
  for (const auto& g : vuln.control_flow_constraints) {
    std::size_t slot = steps.size();
    for (std::size_t i = 0; i < steps.size(); ++i)
      if (steps[i].at.path == g.location.path && steps[i].at.line > g.location.line) {
        slot = i;
        break;
      }
    before[slot].push_back(guard_code(g));
  }

  std::ostringstream o;
  o << "<?php\n";
  for (const auto& d : ordered) {
    const SourceFile* f = record.file(d.path);
    std::string body = f ? text::line_range(f->content, d.line, d.end_line)
                         : text::line_range(model.unit(d.path)->source(), d.line, d.end_line);
    o << "// " << d.path << ":" << d.line << "-" << d.end_line << "\n" << body << "\n";
  }
  o << "$value = " << php_quote(payload) << ";\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    for (const auto& g : before[i]) o << g << "\n";
    o << "// " << steps[i].at.display() << "\n" << steps[i].code << "\n";
  }
  o << "echo " << php_quote(feedback::kDataProbeOpen) << " . " << sink_var << " . "
    << php_quote(feedback::kDataProbeClose) << " . \"\\n\";\n";
  for (const auto& g : before[steps.size()]) o << g << "\n";
  const auto& sc = vuln.syntax_constraints;
  o << "// " << vuln.sink.location.display() << " (" << vuln.sink.callee << ")\n";
  o << "echo " << php_quote(feedback::kSyntaxProbeOpen) << " . " << php_quote(sc.prefix) << " . " << sink_var
    << " . " << php_quote(sc.suffix) << " . " << php_quote(feedback::kSyntaxProbeClose) << " . \"\\n\";\n";

  HarnessSpec spec;
  spec.source = o.str();
  spec.payload = payload;
  spec.probes = {feedback::kDataProbeOpen, feedback::kSyntaxProbeOpen, feedback::kControlMarker};
  spec.origin = "template";
  if (auto problems = lint(spec.source); !problems.empty())
    throw HarnessSynthesisError("template harness for " + vuln.record_id + " failed lint: " + text::join(problems, "; "));
  return spec;
}

HarnessSpec TemplateHarness::build(const context::VulnerabilityContext& vuln, const std::string& payload) {
  return template_harness(record_, vuln, payload);
}

// ---------------------------------------------------------------------------
// model-written harness

prompt::Prompt harness_prompt(const context::VulnerabilityContext& vuln, const std::string& payload,
                              const std::vector<std::string>& lint_errors) {
  require_taint_function_level(vuln);
  std::string system =
      "You write small self-contained PHP programs that replay one code path of a web application locally so a "
      "candidate payload can be checked without a deployed server.";
  std::ostringstream u;
  u << prompt::render_vuln_context(vuln) << "\n";
  u << "## Attack payload\n```\n" << payload << "\n```\n\n";
  u << "## Task\nWrite one PHP program that:\n";
  u << "- assigns the attack payload to a variable in place of reading the request source;\n";
  u << "- keeps every data flow transformation and sanitizer of the code above, copying user function bodies;\n";
  u << "- prints " << feedback::kDataProbeOpen << "<value>" << feedback::kDataProbeClose
    << " with the value after the last transformation;\n";
  u << "- prints exactly \"" << feedback::kControlMarker
    << "\" and stops when a control flow constraint on the way to the sink does not hold;\n";
  u << "- otherwise prints " << feedback::kSyntaxProbeOpen << "<text>" << feedback::kSyntaxProbeClose
    << " with the exact text the sink would receive, including its literal surroundings;\n";
  u << "- writes no files, opens no network connections, runs no shell commands and includes no other files.\n";
  if (!lint_errors.empty()) {
    u << "\n## Problems with your previous program\n";
    for (const auto& e : lint_errors) u << "- " << e << "\n";
  }
  u << "\n## Output\nReply with the program in a single ```php code block.\n";
  return prompt::make_prompt(system, u.str(), prompt::ExpectedOutput::FreePoC);
}

std::optional<std::string> extract_php(std::string_view reply) {
  std::string r(reply);
  std::string trimmed = text::trim(r);
  if (text::starts_with(trimmed, "<?php")) return trimmed + "\n";
  static const std::regex fence(R"(```(?:php|PHP)?[ \t]*\r?\n([\s\S]*?)```)");
  std::smatch m;
  if (std::regex_search(r, m, fence)) {
    std::string body = m[1].str();
    if (!text::starts_with(text::trim(body), "<?php")) body = "<?php\n" + body;
    return body;
  }
  return std::nullopt;
}

HarnessSpec LlmHarness::build(const context::VulnerabilityContext& vuln, const std::string& payload) {
  std::vector<std::string> problems;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto reply = client_.complete(harness_prompt(vuln, payload, problems), cfg_);
    auto code = extract_php(reply.text);
    problems = code ? lint(*code) : std::vector<std::string>{"reply contains no PHP code block"};
    if (problems.empty()) {
      HarnessSpec spec;
      spec.source = *code;
      spec.payload = payload;
      spec.probes = {feedback::kDataProbeOpen, feedback::kSyntaxProbeOpen, feedback::kControlMarker};
      spec.origin = "llm";
      return spec;
    }
  }
  throw HarnessSynthesisError("harness for " + vuln.record_id + " rejected twice: " + text::join(problems, "; "));
}

// ---------------------------------------------------------------------------
// execution

ProbeOutputs parse_probes(const std::string& stdout_text) {
  ProbeOutputs o;
  o.stdout_text = stdout_text;
  o.control = text::contains(stdout_text, feedback::kControlMarker);
  auto between = [&](const char* open, const char* close) -> std::optional<std::string> {
    auto a = stdout_text.find(open);
    if (a == std::string::npos) return std::nullopt;
    a += std::strlen(open);
    auto b = stdout_text.find(close, a);
    if (b == std::string::npos) return std::nullopt;
    return stdout_text.substr(a, b - a);
  };
  o.data = between(feedback::kDataProbeOpen, feedback::kDataProbeClose);
  o.syntax = between(feedback::kSyntaxProbeOpen, feedback::kSyntaxProbeClose);
  return o;
}

namespace {

constexpr std::size_t kOutputCap = 1 << 20;

struct Exec {
  std::string out;
  std::string err;
  int status = 0;
  bool timed_out = false;
  std::int64_t ms = 0;
};

Exec exec_confined(const std::vector<std::string>& argv, const std::string& cwd, int timeout_ms) {
  int out_pipe[2], err_pipe[2];
  if (pipe2(out_pipe, O_CLOEXEC) != 0 || pipe2(err_pipe, O_CLOEXEC) != 0)
    throw Error(std::string("pipe: ") + std::strerror(errno));
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  std::string home = "HOME=" + cwd, tmp = "TMPDIR=" + cwd;
  std::vector<char*> envp = {const_cast<char*>("PATH=/usr/local/bin:/usr/bin:/bin"), home.data(), tmp.data(),
                             nullptr};

  auto start = std::chrono::steady_clock::now();
  pid_t pid = fork();
  if (pid < 0) throw Error(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    setpgid(0, 0);
    if (unshare(CLONE_NEWNET) != 0) unshare(CLONE_NEWUSER | CLONE_NEWNET);
    dup2(out_pipe[1], 1);
    dup2(err_pipe[1], 2);
    int devnull = open("/dev/null", O_RDONLY);
    if (devnull >= 0) dup2(devnull, 0);
    if (chdir(cwd.c_str()) != 0) _exit(126);
    execve(args[0], args.data(), envp.data());
    if (!text::contains(argv[0], "/")) {
      for (const char* dir : {"/usr/local/bin/", "/usr/bin/", "/bin/"}) {
        std::string full = std::string(dir) + argv[0];
        execve(full.c_str(), args.data(), envp.data());
      }
    }
    _exit(127);
  }
  close(out_pipe[1]);
  close(err_pipe[1]);

  Exec r;
  pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  int open_fds = 2;
  auto deadline = start + std::chrono::milliseconds(timeout_ms);
  char buf[4096];
  while (open_fds > 0) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      r.timed_out = true;
      break;
    }
    int n = poll(fds, 2, static_cast<int>(left.count()));
    if (n < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      ssize_t got = read(fds[i].fd, buf, sizeof buf);
      if (got <= 0) {
        close(fds[i].fd);
        fds[i].fd = -1;
        --open_fds;
        continue;
      }
      std::string& dst = i == 0 ? r.out : r.err;
      if (dst.size() < kOutputCap) dst.append(buf, std::min<std::size_t>(got, kOutputCap - dst.size()));
    }
  }
  if (r.timed_out) kill(-pid, SIGKILL);
  for (auto& f : fds)
    if (f.fd >= 0) close(f.fd);
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
  r.ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

ProbeOutputs run_harness(HarnessSpec& spec, const RunOptions& opts) {
  if (opts.command.empty()) throw ContractViolation("interpreter command is empty");
  if (opts.timeout_ms <= 0) throw ContractViolation("timeout must be > 0");
  bool created = false;
  if (spec.workspace.empty()) {
    fs::path root = opts.workspace_root.empty() ? fs::temp_directory_path() : fs::path(opts.workspace_root);
    fs::create_directories(root);
    std::string tmpl = (root / "harness-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw Error("cannot create harness workspace under " + root.string());
    spec.workspace = tmpl;
    created = true;
  } else if (!fs::is_directory(spec.workspace) || !fs::is_empty(spec.workspace)) {
    throw ContractViolation("harness workspace " + spec.workspace + " must be an existing empty directory");
  }
  const std::string workspace = fs::canonical(spec.workspace).string();
  const std::string script = workspace + "/harness.php";
  fsutil::write_file(script, spec.source);

  std::vector<std::string> argv;
  for (std::string a : opts.command) {
    a = text::replace_all(a, "{script}", script);
    a = text::replace_all(a, "{workspace}", workspace);
    argv.push_back(a);
  }
  Exec ex = exec_confined(argv, workspace, opts.timeout_ms);
  if (created && !opts.keep_workspace) {
    std::error_code ec;
    fs::remove_all(workspace, ec);
  }
  ProbeOutputs out = parse_probes(text::replace_all(ex.out, workspace + "/", ""));
  out.stderr_text = text::replace_all(ex.err, workspace + "/", "");
  out.exit_status = ex.status;
  out.timed_out = ex.timed_out;
  out.wall_ms = ex.ms;
  return out;
}

// ---------------------------------------------------------------------------
// judgment

namespace {

struct Region {
  std::size_t begin = 0;
  std::size_t end = 0;
};

Region payload_region(const context::VulnerabilityContext& vuln, const ProbeOutputs& out) {
  const std::string& s = *out.syntax;
  const auto& sc = vuln.syntax_constraints;
  bool framed = s.size() >= sc.prefix.size() + sc.suffix.size() && text::starts_with(s, sc.prefix) &&
                text::ends_with(s, sc.suffix);
  if (out.data) {
    const std::string& d = *out.data;
    if (framed && s.compare(sc.prefix.size(), d.size(), d) == 0) return {sc.prefix.size(), sc.prefix.size() + d.size()};
    if (auto p = s.find(d); p != std::string::npos) return {p, p + d.size()};
  }
  if (framed) return {sc.prefix.size(), s.size() - sc.suffix.size()};
  return {0, s.size()};
}

syntax::Verdict syntax_check(const context::VulnerabilityContext& vuln, const ProbeOutputs& out) {
  Region r = payload_region(vuln, out);
  if (r.begin >= r.end) return {false, "the payload is empty at the sink"};
  return syntax::executable(vuln.syntax_constraints.descriptor, *out.syntax, r.begin, r.end);
}

}  // namespace

Verdict judge(const context::VulnerabilityContext& vuln, const ProbeOutputs& out) {
  if (out.control) return Verdict::Invalid;
  if (out.timed_out || !out.syntax) return Verdict::Inconclusive;
  if (vuln.syntax_constraints.descriptor.empty()) return Verdict::Inconclusive;
  return syntax_check(vuln, out).executable ? Verdict::Valid : Verdict::Invalid;
}

feedback::ValidationFeedback make_feedback(const context::VulnerabilityContext& vuln, const ProbeOutputs& out,
                                           Verdict verdict, int iteration) {
  feedback::ValidationFeedback fb;
  fb.kind = "payload";
  fb.verdict = verdict;
  fb.iteration = iteration;
  fb.usability = verdict == Verdict::Valid ? feedback::kPayloadAvailable : feedback::kPayloadUnavailable;
  std::vector<std::string> lines;
  if (out.data) lines.push_back(std::string(feedback::kDataProbeOpen) + *out.data + feedback::kDataProbeClose);
  if (out.syntax) lines.push_back(std::string(feedback::kSyntaxProbeOpen) + *out.syntax + feedback::kSyntaxProbeClose);
  if (out.control) lines.emplace_back(feedback::kControlMarker);
  if (!out.data && !out.syntax && !out.control) {
    std::string note = "The harness produced no probe output";
    if (out.timed_out) note += " before the time limit";
    if (out.exit_status != 0) note += " and exited with status " + std::to_string(out.exit_status);
    lines.push_back(note + ".");
    for (const auto& l : text::split_lines(out.stdout_text))
      if (text::contains(l, "Fatal error")) lines.push_back(l);
  }
  if (out.syntax && !out.control && verdict == Verdict::Invalid && !vuln.syntax_constraints.descriptor.empty()) {
    const auto& sc = vuln.syntax_constraints;
    lines.push_back("The payload is not executable at the sink, which expects " +
                    (sc.description.empty() ? syntax::describe(sc.descriptor) : sc.description) + ": " +
                    syntax_check(vuln, out).reason + ".");
  }
  fb.details = text::join(lines, "\n");
  return fb;
}

// ---------------------------------------------------------------------------
// refinement

LlmPayloadSession::LlmPayloadSession(llm::Client& client, llm::ModelConfig cfg, prompt::CotInputs inputs,
                                     std::vector<subtask::SubTaskResult> prior)
    : client_(client),
      cfg_(std::move(cfg)),
      inputs_(std::move(inputs)),
      prior_(std::move(prior)),
      plan_(subtask::decompose(inputs_.scenario.cwe)) {}

std::string LlmPayloadSession::regenerate(const feedback::ValidationFeedback& fb) {
  const std::size_t step = plan_.step_of("attack_payload");
  auto p = prompt::cot_prompt(plan_, step, prior_, prompt::IclBank::bundled(), fb, inputs_);
  auto reply = client_.complete(p, cfg_);
  std::vector<subtask::SubTask> asked;
  for (const auto& id : plan_.cot_steps[step].subtasks) asked.push_back(*plan_.find(id));
  for (auto& r : subtask::parse_answers(asked, reply.text)) {
    if (r.id != "attack_payload") continue;
    if (r.status != subtask::Status::Answered) throw Error("regenerated reply has no usable attack payload");
    std::string next = subtask::answer_text(r);
    auto it = std::find_if(prior_.begin(), prior_.end(), [](const auto& x) { return x.id == "attack_payload"; });
    if (it != prior_.end())
      *it = r;
    else
      prior_.push_back(r);
    return next;
  }
  throw Error("regenerated reply has no attack payload");
}

RefineResult refine_loop(PayloadSession& session, const context::VulnerabilityContext& vuln,
                         const std::string& initial_payload, HarnessProvider& harness, const RunOptions& opts) {
  if (initial_payload.empty()) throw ContractViolation("initial payload is empty");
  RefineResult res;
  res.payload = initial_payload;
  for (int i = 1; i <= kMaxIterations; ++i) {
    res.iterations = i;
    HarnessSpec spec;
    try {
      spec = harness.build(vuln, res.payload);
    } catch (const HarnessSynthesisError& e) {
      res.verdict = Verdict::Inconclusive;
      res.error = e.what();
      return res;
    }
    ProbeOutputs out = run_harness(spec, opts);
    res.verdict = judge(vuln, out);
    res.history.push_back(make_feedback(vuln, out, res.verdict, i));
    if (res.verdict == Verdict::Valid || i == kMaxIterations) break;
    try {
      std::string next = session.regenerate(res.history.back());
      if (next.empty()) throw Error("regenerated payload is empty");
      res.payload = std::move(next);
    } catch (const Error& e) {
      res.error = e.what();
      break;
    }
  }
  return res;
}

}  // namespace pocgen::payload
