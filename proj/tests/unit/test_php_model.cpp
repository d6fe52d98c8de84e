#include "doctest.h"

#include <algorithm>

#include "pocgen/context.hpp"
#include "pocgen/php_model.hpp"
#include "support.hpp"

using namespace pocgen;

namespace {

const php::Stmt* stmt_at(const php::SourceUnit& u, int line) {
  for (const auto& s : u.statements)
    if (s.line == line) return &s;
  return nullptr;
}

}  // namespace

TEST_CASE("statement facts of the search results page") {
  const auto& rec = testing::record("fig4");
  auto unit = php::parse_php(*rec.file("search_results.php"));
  CHECK(unit.uncovered_lines().empty());

  const php::Stmt* src = stmt_at(unit, 6);
  REQUIRE(src);
  CHECK(src->kind == php::StmtKind::Assign);
  REQUIRE(src->writes.size() == 1);
  CHECK(src->writes[0].name == "term");
  auto read = std::find_if(src->reads.begin(), src->reads.end(), [](const auto& v) { return v.name == "_GET"; });
  REQUIRE(read != src->reads.end());
  CHECK(read->superglobal_key == "search");

  const php::Stmt* sink = stmt_at(unit, 9);
  REQUIRE(sink);
  CHECK(sink->kind == php::StmtKind::Echo);
  REQUIRE_FALSE(sink->sinks.empty());
  CHECK(sink->sinks[0].cwe == Cwe::CWE79);
  CHECK(sink->sinks[0].callee == "echo");
  REQUIRE(sink->parent >= 0);
  CHECK(unit.statements[static_cast<std::size_t>(sink->parent)].kind == php::StmtKind::If);
  CHECK(unit.statements[static_cast<std::size_t>(sink->parent)].line == 8);

  const php::Stmt* inc = stmt_at(unit, 3);
  REQUIRE(inc);
  CHECK(inc->kind == php::StmtKind::Include);
  CHECK(inc->target == "search_functions.php");
  CHECK(inc->target_is_literal);
}

TEST_CASE("program model links includes and functions") {
  auto model = context::model_for_record(testing::record("fig4"));
  REQUIRE(model.units.size() == 3);
  const php::FunctionDef* fn = model.function("SANITIZE_SEARCH");
  REQUIRE(fn);
  CHECK(fn->path == "search_functions.php");
  CHECK(fn->line == 2);
  CHECK(fn->end_line == 7);
  CHECK(fn->params == std::vector<std::string>{"text"});
  auto into = model.edges_into("search_results.php");
  REQUIRE(into.size() == 1);
  CHECK(into[0]->from == "search.php");
  CHECK(into[0]->line == 4);
  CHECK(model.dangling.empty());
}

TEST_CASE("sink classes per weakness") {
  const auto& ping = testing::record("cmd-ping");
  auto unit = php::parse_php(*ping.file("ping.php"));
  bool found = false;
  for (const auto& s : unit.statements)
    for (const auto& h : s.sinks)
      if (h.cwe == Cwe::CWE78 && h.callee == "shell_exec") found = true;
  CHECK(found);

  const auto& sqli = testing::record("sqli-user");
  auto u2 = php::parse_php(*sqli.file("user.php"));
  found = false;
  for (const auto& s : u2.statements)
    for (const auto& h : s.sinks)
      if (h.cwe == Cwe::CWE89 && h.callee == "mysqli_query") found = true;
  CHECK(found);
}

TEST_CASE("duplicate function definitions are rejected") {
  auto a = php::parse_php({"a.php", "<?php\nfunction f() { return 1; }\n"});
  auto b = php::parse_php({"b.php", "<?php\nfunction F() { return 2; }\n"});
  CHECK_THROWS_AS(php::build_program_model({a, b}), php::DuplicateFunctionError);
}

TEST_CASE("duplicate unit paths break the contract") {
  auto a = php::parse_php({"a.php", "<?php\n$x = 1;\n"});
  CHECK_THROWS_AS(php::build_program_model({a, a}), ContractViolation);
}

TEST_CASE("include resolution and path normalization") {
  std::set<std::string> known = {"admin.php", "data/inc/files.php", "lib/db.php"};
  CHECK(php::resolve_target("admin.php", "data/inc/files.php", known) == "data/inc/files.php");
  CHECK(php::resolve_target("data/inc/files.php", "../../lib/db.php", known) == "lib/db.php");
  CHECK(php::resolve_target("admin.php", php::kDirPlaceholder + "/lib/db.php", known) == "lib/db.php");
  CHECK_FALSE(php::resolve_target("admin.php", "missing.php", known).has_value());
  CHECK(php::normalize_path("a/./b/../c") == "a/c");
  CHECK(php::normalize_path("../x.php") == "x.php");
}

TEST_CASE("dynamic include targets stay dangling") {
  auto u = php::parse_php({"index.php", "<?php\ninclude $_GET['page'] . '.php';\n"});
  auto model = php::build_program_model({u});
  REQUIRE(model.dangling.size() == 1);
  CHECK(model.dangling[0].to.empty());
  CHECK(model.dangling[0].line == 2);
}

TEST_CASE("html segments are covered") {
  const auto& rec = testing::record("fig14");
  auto unit = php::parse_php(*rec.file("stat.ratings.php"));
  CHECK(unit.uncovered_lines().empty());
  CHECK_FALSE(unit.html_segments.empty());
  bool form = std::any_of(unit.tags.begin(), unit.tags.end(), [](const auto& t) { return t.name == "form"; });
  CHECK(form);
}
