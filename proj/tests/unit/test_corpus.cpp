#include "doctest.h"

#include "pocgen/corpus.hpp"
#include "support.hpp"

using namespace pocgen;
using nlohmann::json;

namespace {

json minimal_record() {
  return {{"id", "r1"},
          {"cwe", "CWE-89"},
          {"cvss", 7.5},
          {"description", "SQL injection in a.php via id."},
          {"patch", "--- a/a.php\n+++ b/a.php\n@@ -1,2 +1,2 @@\n <?php\n-$q = $_GET['id'];\n+$q = (int)$_GET['id'];\n"},
          {"files", json::array({{{"path", "a.php"}, {"content", "<?php\n$q = $_GET['id'];\n"}}})},
          {"base_url", "http://localhost:8080"},
          {"entry_url", "http://localhost:8080/a.php"}};
}

}  // namespace

TEST_CASE("fixture corpus loads without errors") {
  auto load = corpus::load_corpus(testing::corpus_dir());
  CHECK(load.errors.empty());
  REQUIRE(load.records.size() == 5);
  for (std::size_t i = 1; i < load.records.size(); ++i) CHECK(load.records[i - 1].id < load.records[i].id);
}

TEST_CASE("record round-trips through json") {
  const auto& r = testing::record("fig15");
  auto back = corpus::record_from_json(corpus::record_to_json(r));
  CHECK(back.id == r.id);
  CHECK(back.cwe == r.cwe);
  CHECK(back.files == r.files);
  CHECK(back.patch == r.patch);
  CHECK(back.base_url == r.base_url);
}

TEST_CASE("record validation names the offending field") {
  auto check_field = [](json doc, const std::string& field) {
    try {
      corpus::record_from_json(doc);
      FAIL("accepted an invalid record");
    } catch (const corpus::CorpusError& e) {
      CHECK(e.field() == field);
    }
  };
  CHECK_NOTHROW(corpus::record_from_json(minimal_record()));
  auto d = minimal_record();
  d["cwe"] = "CWE-22";
  check_field(d, "cwe");
  d = minimal_record();
  d["base_url"] = "http://localhost:8080/app";
  check_field(d, "base_url");
  d = minimal_record();
  d["files"][0]["path"] = "../etc/passwd";
  check_field(d, "files");
  d = minimal_record();
  d["patch"] = "--- a/b.php\n+++ b/b.php\n@@ -1 +1 @@\n-x\n+y\n";
  check_field(d, "files");
  d = minimal_record();
  d.erase("description");
  check_field(d, "description");
}

TEST_CASE("a broken file does not abort the load") {
  testing::TempDir dir;
  fsutil::write_file((dir.path() / "good.json").string(), minimal_record().dump());
  fsutil::write_file((dir.path() / "bad.json").string(), "{not json");
  auto load = corpus::load_corpus(dir.str());
  CHECK(load.records.size() == 1);
  REQUIRE(load.errors.size() == 1);
  CHECK(load.errors[0].file.find("bad.json") != std::string::npos);
}

TEST_CASE("scenarios expose exactly their stage") {
  const auto& r = testing::record("fig4");
  auto s1 = corpus::build_scenario(r, corpus::Stage::S1);
  CHECK_FALSE(s1.patch.has_value());
  CHECK_FALSE(s1.files.has_value());
  auto s2 = corpus::build_scenario(r, corpus::Stage::S2);
  CHECK(s2.patch == r.patch);
  CHECK_FALSE(s2.files.has_value());
  auto s3 = corpus::build_scenario(r, corpus::Stage::S3);
  CHECK(s3.patch.has_value());
  REQUIRE(s3.files.has_value());
  CHECK(*s3.files == r.files);
}

TEST_CASE("patch hunks") {
  auto hunks = corpus::parse_patch(testing::record("fig4").patch);
  REQUIRE(hunks.size() == 1);
  const auto& h = hunks[0];
  CHECK(h.path() == "search_results.php");
  CHECK(h.old_start == 6);
  CHECK(h.old_count == 5);
  CHECK(h.removed.size() == 1);
  CHECK(h.added.size() == 1);
  CHECK(h.touched_old_lines() == std::vector<int>{9});
  CHECK(corpus::render_hunks(hunks).rfind("@@ -6,5 +6,5 @@", 0) == 0);
}

TEST_CASE("malformed patches are rejected with a line number") {
  CHECK_THROWS_AS(corpus::parse_patch("--- a/x\n+++ b/x\n@@ -1,3 +1,3 @@\n-a\n"), corpus::PatchParseError);
  CHECK_THROWS_AS(corpus::parse_patch("--- a/x\n+++ b/x\n@@ garbage @@\n"), corpus::PatchParseError);
}

TEST_CASE("origin and path predicates") {
  CHECK(corpus::is_origin("http://localhost:8080"));
  CHECK(corpus::is_origin("https://example.test"));
  CHECK_FALSE(corpus::is_origin("http://localhost:8080/"));
  CHECK_FALSE(corpus::is_origin("localhost:8080"));
  CHECK(corpus::is_safe_relative_path("data/inc/files.php"));
  CHECK_FALSE(corpus::is_safe_relative_path("/etc/passwd"));
  CHECK_FALSE(corpus::is_safe_relative_path("a/../../b"));
}
