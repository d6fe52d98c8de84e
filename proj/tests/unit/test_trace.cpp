#include "doctest.h"

#include <filesystem>

#include "pocgen/interp.hpp"
#include "pocgen/trace.hpp"
#include "support.hpp"

using namespace pocgen;
using namespace pocgen::trace;

namespace {

const char* const kTemplate =
    "The current PoC fails to fully execute the file navigation chain, and application execution flow failed to "
    "reach ";

std::vector<std::string> trace_fixtures() {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(testing::fixture("traces")))
    if (e.path().extension() == ".xt") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

/// Entry records counted straight from the text: lines whose third field is "0".
std::size_t count_entries(const std::string& text) {
  std::size_t n = 0;
  for (const auto& line : text::split_lines(text)) {
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '\t') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f.size() >= 10 && f[2] == "0") ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("trace fixtures parse and round-trip") {
  auto files = trace_fixtures();
  REQUIRE(files.size() >= 5);
  for (const auto& path : files) {
    CAPTURE(path);
    std::string text = fsutil::read_file(path);
    auto t = parse_trace(path);
    CHECK(t.warnings.empty());
    CHECK(t.events.size() == count_entries(text));
    auto again = parse_trace_text(render(t));
    CHECK(again.events.size() == t.events.size());
    CHECK(again.events == t.events);
    CHECK(again.version == t.version);
  }
}

TEST_CASE("annotated trace: return and assignment records are skipped") {
  auto t = parse_trace(testing::fixture("traces/synthetic_annotated.xt"));
  CHECK(t.version == "3.3.2");
  CHECK(t.file_format == "4");
  REQUIRE(t.events.size() == 3);
  CHECK(t.events[0].function == "{main}");
  CHECK(t.events[0].kind == CallKind::User);
  CHECK(t.events[1].function == "isset");
  CHECK(t.events[1].kind == CallKind::Builtin);
  CHECK(t.events[1].depth == 2);
  CHECK(t.events[2].line == 5);
  CHECK(t.events[2].file == "/srv/app/search.php");
}

TEST_CASE("include events carry the included file") {
  auto t = parse_trace(testing::fixture("traces/fig4_full.xt"));
  auto inc = std::find_if(t.events.begin(), t.events.end(), [](const Event& e) { return e.function == "include"; });
  REQUIRE(inc != t.events.end());
  CHECK(inc->kind == CallKind::Include);
  CHECK(inc->include_file == "/var/www/html/search_results.php");
  CHECK(inc->line == 4);
}

TEST_CASE("malformed traces") {
  CHECK_THROWS_AS(parse_trace_text("1\t0\t0\t0.1\t100\t{main}\t1\t\t/a.php\t0\t0\n"), TraceFormatError);
  auto t = parse_trace_text("Version: 3.1.6\nFile format: 4\nTRACE START [x]\n"
                            "1\t0\t0\t0.1\t100\t{main}\t1\t\t/a.php\t0\t0\n"
                            "3\t1\t0\t0.2\t100\tf\t1\t\t/a.php\t2\t0\n"
                            "garbage line\n");
  CHECK(t.events.size() == 1);
  CHECK(t.warnings.size() == 2);
}

TEST_CASE("path matching") {
  CHECK(path_matches("/var/www/html/search.php", "search.php"));
  CHECK(path_matches("search.php", "search.php"));
  CHECK_FALSE(path_matches("/var/www/html/advsearch.php", "search.php"));
  CHECK_FALSE(path_matches("/var/www/html/Search.php", "search.php"));
  CHECK(path_matches("/srv/data/inc/files.php", "data/inc/files.php"));
}

TEST_CASE("a trace touching only the entry page names the included file") {
  auto e = testing::extract("fig4");
  auto t = parse_trace(testing::fixture("traces/fig4_search_only.xt"));
  auto d = diff_navigation(t, e.nav, e.vuln.sink);
  CHECK(d.triggered == std::vector<std::string>{"search.php"});
  CHECK(d.untriggered == std::vector<std::string>{"search_results.php"});
  CHECK_FALSE(d.sink_reached);
  auto msg = feedback_message(d, sink_descriptor(e.vuln.sink));
  CHECK(msg == std::string(kTemplate) + "search_results.php");
  auto fb = path_feedback(d, sink_descriptor(e.vuln.sink));
  CHECK(fb.verdict == feedback::Verdict::Invalid);
  CHECK(fb.render() == std::string(feedback::kPocUnavailable) + "\n" + kTemplate + "search_results.php");
}

TEST_CASE("the working request runs the whole chain") {
  auto e = testing::extract("fig4");
  auto d = diff_navigation(parse_trace(testing::fixture("traces/fig4_full.xt")), e.nav, e.vuln.sink);
  CHECK(d.untriggered.empty());
  CHECK(d.sink_reached);
  CHECK_THROWS_AS(feedback_message(d, sink_descriptor(e.vuln.sink)), ContractViolation);
  auto fb = path_feedback(d, sink_descriptor(e.vuln.sink));
  CHECK(fb.verdict == feedback::Verdict::Valid);
}

TEST_CASE("upload page: the sink needs the upload branch") {
  auto e = testing::extract("fig15");
  const std::string sink = sink_descriptor(e.vuln.sink);
  CHECK(sink == "data/inc/files.php:15 (move_uploaded_file)");
  auto no = diff_navigation(parse_trace(testing::fixture("traces/fig15_no_upload.xt")), e.nav, e.vuln.sink);
  CHECK(no.untriggered.empty());
  CHECK_FALSE(no.sink_reached);
  CHECK(feedback_message(no, sink) == std::string(kTemplate) + sink);
  auto yes = diff_navigation(parse_trace(testing::fixture("traces/fig15_upload.xt")), e.nav, e.vuln.sink);
  CHECK(yes.sink_reached);
}

TEST_CASE("untriggered nodes are the chain from the first miss") {
  context::NavigationContext nav;
  nav.file_navigation_chain = {"a.php", "b.php", "c.php"};
  context::SinkFact sink{{"c.php", 5, 5}, "mysqli_query", "", 0};
  ExecutionTrace empty;
  auto d = diff_navigation(empty, nav, sink);
  CHECK(d.untriggered == nav.file_navigation_chain);
  auto msg = feedback_message(d, sink_descriptor(sink));
  CHECK(msg == std::string(kTemplate) + "a.php\nDiagnostics: also untriggered: b.php, c.php");

  ExecutionTrace skip;
  skip.events.push_back(Event{1, 0, "{main}", CallKind::User, "", "/w/a.php", 0});
  skip.events.push_back(Event{2, 1, "mysqli_query", CallKind::Builtin, "", "/w/c.php", 9});
  auto s = diff_navigation(skip, nav, sink);
  CHECK(s.triggered == std::vector<std::string>{"a.php"});
  CHECK(s.untriggered == std::vector<std::string>{"b.php", "c.php"});
  CHECK(s.triggered.size() + s.untriggered.size() == nav.file_navigation_chain.size());

  nav.file_navigation_chain.clear();
  CHECK_THROWS_AS(diff_navigation(empty, nav, sink), ContractViolation);
}

TEST_CASE("interpreter traces parse back") {
  interp::Options opt;
  opt.root = testing::fixture("apps/fig4/vulnerable");
  opt.trace = true;
  interp::Request req;
  req.get = {{"mode", "search"}, {"search", "x"}};
  auto r = interp::run("search.php", req, opt);
  CHECK(r.error.empty());
  auto t = parse_trace_text(interp::render_trace(r));
  CHECK(t.events.size() == r.calls.size());
  CHECK(t.warnings.empty());
}
