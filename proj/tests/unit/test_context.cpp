#include "doctest.h"

#include <algorithm>

#include "pocgen/context.hpp"
#include "support.hpp"

using namespace pocgen;
using context::Granularity;
using nlohmann::json;

namespace {

json load_golden(const std::string& id) {
  return json::parse(fsutil::read_file(testing::golden(id + ".context.json")));
}

json extract_document(const std::string& id) {
  auto e = testing::extract(id);
  return context::context_document(e.vuln, e.nav);
}

corpus::CveRecord inline_record(const std::string& id, Cwe cwe, std::vector<SourceFile> files,
                                const std::string& entry) {
  corpus::CveRecord r;
  r.id = id;
  r.cwe = cwe;
  r.description = "synthetic";
  r.files = std::move(files);
  r.base_url = "http://localhost:8080";
  r.entry_url = "http://localhost:8080/" + entry;
  return r;
}

struct Pair {
  context::VulnerabilityContext vuln;
  context::NavigationContext nav;
};

Pair extract_inline(const corpus::CveRecord& r) {
  auto model = context::model_for_record(r);
  Pair p;
  p.vuln = context::extract_vuln_context(model, r, Granularity::Function);
  p.nav = context::extract_nav_context(model, p.vuln, Granularity::Function);
  return p;
}

const context::Fact* find_fact(const context::VulnerabilityContext& v, const std::string& kind,
                               const std::string& needle) {
  for (const auto& f : v.facts)
    if (f.kind == kind && f.value.find(needle) != std::string::npos) return &f;
  return nullptr;
}

}  // namespace

TEST_CASE("search page: extracted documents match the goldens") {
  for (const char* id : {"fig4", "fig14", "fig15"}) {
    CAPTURE(id);
    CHECK(extract_document(id) == load_golden(id));
  }
}

TEST_CASE("search page: source, sink, sanitizer, guard and chain") {
  auto e = testing::extract("fig4");
  const auto& v = e.vuln;
  CHECK(v.source.location.path == "search_results.php");
  CHECK(v.source.location.line == 6);
  CHECK(v.source.superglobal == "_GET");
  CHECK(v.source.key == "search");
  CHECK(v.sink.callee == "echo");
  CHECK(v.sink.location.path == "search_results.php");
  CHECK(v.sink.location.line == 9);
  REQUIRE(v.data_flow_constraints.size() == 1);
  const auto& df = v.data_flow_constraints[0];
  CHECK(df.callee == "sanitize_search");
  CHECK(df.role == "sanitizer");
  REQUIRE(df.definition.has_value());
  CHECK(*df.definition == context::Location{"search_functions.php", 2, 7});
  REQUIRE(v.control_flow_constraints.size() == 1);
  CHECK(v.control_flow_constraints[0].location.line == 8);
  CHECK(v.control_flow_constraints[0].predicate == "strlen($term) > 0");
  CHECK(v.syntax_constraints.descriptor == "html-attr-single");
  CHECK(v.syntax_constraints.prefix == "<input type='text' name='search' value='");
  CHECK(v.syntax_constraints.suffix == "'>");

  CHECK(e.nav.file_navigation_chain == std::vector<std::string>{"search.php", "search_results.php"});
  REQUIRE(e.nav.path_constraint_values.size() == 1);
  const auto& pc = e.nav.path_constraint_values[0];
  CHECK(pc.superglobal == "_GET");
  CHECK(pc.key == "mode");
  CHECK(pc.op == "==");
  CHECK(pc.value == "search");
  CHECK(e.nav.entry_url == "http://localhost:8080/search.php");
}

TEST_CASE("ratings page: state-changing operation facts") {
  auto e = testing::extract("fig14");
  const auto& v = e.vuln;
  CHECK(v.cwe == Cwe::CWE352);
  CHECK(v.sink.callee == "delete_ratings_log");
  CHECK(v.sink.location == context::Location{"stat.ratings.php", 22, 22});
  const auto* exec = find_fact(v, "execution_code", "delete_ratings_log");
  REQUIRE(exec);
  CHECK(exec->location == context::Location{"stat.ratings.php", 22, 23});
  const auto* op = find_fact(v, "operation_parameters", "action=clear-statistics");
  REQUIRE(op);
  CHECK(op->location.line == 16);
  CHECK(find_fact(v, "protection_mechanisms", "none") != nullptr);
  CHECK(e.nav.file_navigation_chain == std::vector<std::string>{"stat.ratings.php"});
}

TEST_CASE("file manager: blacklist, upload and storage path") {
  auto e = testing::extract("fig15");
  const auto& v = e.vuln;
  CHECK(v.cwe == Cwe::CWE434);
  const auto* bl = find_fact(v, "validation_mechanism", "blacklist");
  REQUIRE(bl);
  CHECK(bl->location == context::Location{"data/inc/files.php", 9, 13});
  for (const char* ext : {"php", "php5", "phtml", "htaccess"}) CHECK(bl->value.find(ext) != std::string::npos);
  const auto* up = find_fact(v, "upload_code", "filefile");
  REQUIRE(up);
  CHECK(up->location.line == 3);
  const auto* store = find_fact(v, "storage_path_code", "$target");
  REQUIRE(store);
  CHECK(store->location.line == 4);
  CHECK(v.sink.callee == "move_uploaded_file");
  CHECK(v.sink.location.line == 15);
  CHECK(e.nav.file_navigation_chain == std::vector<std::string>{"admin.php", "data/inc/files.php"});
  REQUIRE(e.nav.path_constraint_values.size() == 1);
  CHECK(e.nav.path_constraint_values[0].key == "action");
  CHECK(e.nav.path_constraint_values[0].value == "files");
}

TEST_CASE("file granularity carries whole files") {
  auto e = testing::extract("fig4", Granularity::File);
  CHECK(e.vuln.granularity == Granularity::File);
  std::set<std::string> paths;
  for (const auto& s : e.vuln.code_slices) {
    CHECK(s.kind == "file");
    paths.insert(s.path);
  }
  CHECK(paths.count("search_results.php") == 1);
  CHECK(paths.count("search_functions.php") == 1);
  auto f = testing::extract("fig4", Granularity::Function);
  std::size_t file_tokens = 0, fn_tokens = 0;
  for (const auto& s : e.vuln.code_slices) file_tokens += context::slice_tokens(s);
  for (const auto& s : f.vuln.code_slices) fn_tokens += context::slice_tokens(s);
  CHECK(fn_tokens < file_tokens);
}

TEST_CASE("taint crosses a user function defined in another file") {
  auto r = inline_record("interproc", Cwe::CWE89,
                         {{"lib.php", "<?php\nfunction build_query($id) {\n    return \"SELECT * FROM t WHERE id = \" . $id;\n}\n"},
                          {"view.php", "<?php\nrequire 'lib.php';\n$id = $_GET['id'];\n$sql = build_query($id);\nmysqli_query($conn, $sql);\n"}},
                         "view.php");
  auto p = extract_inline(r);
  CHECK(p.vuln.source.key == "id");
  CHECK(p.vuln.source.location.line == 3);
  CHECK(p.vuln.sink.callee == "mysqli_query");
  CHECK(p.vuln.sink.location == context::Location{"view.php", 5, 5});
  bool through_lib = std::any_of(p.vuln.code_slices.begin(), p.vuln.code_slices.end(),
                                 [](const auto& s) { return s.path == "lib.php"; });
  CHECK(through_lib);
  CHECK(p.nav.file_navigation_chain == std::vector<std::string>{"view.php"});
}

TEST_CASE("navigation across three files") {
  auto r = inline_record(
      "three-hop", Cwe::CWE79,
      {{"index.php", "<?php\n$in_app = 1;\nif ($_GET['page'] == 'tools') {\n    include 'inc/tools.php';\n}\n"},
       {"inc/tools.php", "<?php\nif (!isset($in_app)) { exit; }\nif ($_GET['tool'] == 'echo') {\n    include 'echo.php';\n}\n"},
       {"inc/echo.php", "<?php\nif (!isset($in_app)) { exit; }\n$msg = $_GET['msg'];\necho '<p>' . $msg . '</p>';\n"}},
      "index.php");
  auto p = extract_inline(r);
  CHECK(p.vuln.sink.location.path == "inc/echo.php");
  CHECK(p.vuln.syntax_constraints.descriptor == "html-body");
  CHECK(p.nav.file_navigation_chain == std::vector<std::string>{"index.php", "inc/tools.php", "inc/echo.php"});
  std::map<std::string, std::string> want = {{"page", "tools"}, {"tool", "echo"}};
  std::map<std::string, std::string> got;
  for (const auto& c : p.nav.path_constraint_values) got[c.key] = c.value;
  CHECK(got == want);
}

TEST_CASE("an unguarded sink has no control-flow constraints") {
  auto r = inline_record("open", Cwe::CWE79, {{"hello.php", "<?php\n$name = $_GET['name'];\necho 'Hello ' . $name;\n"}},
                         "hello.php");
  auto p = extract_inline(r);
  CHECK(p.vuln.control_flow_constraints.empty());
  CHECK(p.vuln.data_flow_constraints.empty());
  CHECK(p.nav.path_constraint_values.empty());
  CHECK(p.nav.file_navigation_chain == std::vector<std::string>{"hello.php"});
}

TEST_CASE("variables that never reach the sink are left out") {
  auto r = inline_record("unused", Cwe::CWE79,
                         {{"page.php", "<?php\n$unused = $_GET['debug'];\n$title = $_GET['title'];\necho '<h1>' . $title . '</h1>';\n"}},
                         "page.php");
  auto p = extract_inline(r);
  CHECK(p.vuln.source.key == "title");
  CHECK(std::find(p.vuln.vulnerable_variables.begin(), p.vuln.vulnerable_variables.end(), "$unused") ==
        p.vuln.vulnerable_variables.end());
  for (const auto& s : p.vuln.path) CHECK(s.code.find("debug") == std::string::npos);
}

TEST_CASE("a record without a reachable sink raises ContextNotFound") {
  auto r = inline_record("nosink", Cwe::CWE79, {{"a.php", "<?php\n$x = $_GET['x'];\n$y = strlen($x);\n"}}, "a.php");
  auto model = context::model_for_record(r);
  try {
    context::extract_vuln_context(model, r, Granularity::Function);
    FAIL("expected ContextNotFound");
  } catch (const context::ContextNotFound& e) {
    CHECK(e.which() == "vulnerability");
  }
}

TEST_CASE("reachability of included files") {
  auto model = context::model_for_record(testing::record("fig4"));
  CHECK(context::is_public(model, "search.php"));
  CHECK_FALSE(context::is_public(model, "search_results.php"));
  const auto* unit = model.unit("search_results.php");
  REQUIRE(unit != nullptr);
  auto sink = std::find_if(unit->statements.begin(), unit->statements.end(),
                           [](const php::Stmt& s) { return !s.sinks.empty() && s.line == 9; });
  REQUIRE(sink != unit->statements.end());
  REQUIRE(sink->parent >= 0);
  auto direct = context::check_chain(model, {"search_results.php"}, sink->parent);
  CHECK_FALSE(direct.reachable);
  auto via_search = context::check_chain(model, {"search.php", "search_results.php"}, sink->parent);
  CHECK(via_search.reachable);
  CHECK_THROWS_AS(context::check_chain(model, {"search_results.php"}, 99), ContractViolation);
}
