#include "doctest.h"

#include <filesystem>

#include "pocgen/llm.hpp"
#include "support.hpp"

using namespace pocgen;
using testing::run_command;
using nlohmann::json;

namespace {

std::vector<std::string> cli(std::vector<std::string> args) {
  args.insert(args.begin(), testing::cli_path());
  return args;
}

std::map<std::string, std::string> tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file())
      out[std::filesystem::relative(e.path(), root).string()] = fsutil::read_file(e.path().string());
  return out;
}

}  // namespace

TEST_CASE("usage errors exit 2, runtime errors exit 1") {
  CHECK(run_command(cli({"--bogus"})).status == 2);
  CHECK(run_command(cli({"run", "--mode", "base-s1"})).status == 2);
  auto missing = run_command(cli({"metrics", "/nonexistent/outcomes.json"}));
  CHECK(missing.status == 1);
  CHECK(missing.out.find("error:") != std::string::npos);
  CHECK(run_command(cli({"extract-context", "no-such-record", "--corpus", testing::corpus_dir()})).status == 1);
}

TEST_CASE("validate-corpus") {
  auto ok = run_command(cli({"validate-corpus", testing::corpus_dir()}));
  CHECK(ok.status == 0);
  testing::TempDir dir;
  fsutil::write_file((dir.path() / "broken.json").string(), "{\"id\": \"b\"}");
  CHECK(run_command(cli({"validate-corpus", dir.str()})).status == 1);
}

TEST_CASE("extract-context writes the golden documents") {
  testing::TempDir dir;
  for (const char* id : {"fig4", "fig14", "fig15"}) {
    CAPTURE(id);
    auto out = (dir.path() / (std::string(id) + ".json")).string();
    auto r = run_command(cli({"extract-context", id, "--corpus", testing::corpus_dir(), "--out", out}));
    REQUIRE(r.status == 0);
    CHECK(fsutil::read_file(out) == fsutil::read_file(testing::golden(std::string(id) + ".context.json")));
  }
}

TEST_CASE("prompts subcommand agrees with the committed replay script") {
  auto r = run_command(cli({"prompts", "fig4", "--mode", "base-s1", "--corpus", testing::corpus_dir()}));
  REQUIRE(r.status == 0);
  auto doc = json::parse(r.out);
  prompt::Prompt p{doc["system"], doc["user"], prompt::ExpectedOutput::FreePoC, 0};
  CHECK(doc["digest"] == llm::prompt_digest(p));
  auto script = json::parse(fsutil::read_file(testing::fixture("replay/base_s1.json")));
  int hits = 0;
  for (const auto& e : script["entries"]) hits += e["digest"] == doc["digest"];
  CHECK(hits == 3);
}

TEST_CASE("replay runs are byte-identical") {
  testing::TempDir a, b;
  auto args = [&](const std::string& out, const std::string& workers) {
    return cli({"run", "--corpus", testing::corpus_dir(), "--mode", "base-s1", "--transport", "replay", "--replay",
                testing::fixture("replay/base_s1.json"), "--out", out, "--workers", workers});
  };
  auto ra = run_command(args(a.str(), "1"));
  auto rb = run_command(args(b.str(), "3"));
  REQUIRE(ra.status == 0);
  REQUIRE(rb.status == 0);
  auto ta = tree(a.path());
  auto tb = tree(b.path());
  CHECK(ta.count("outcomes.json") == 1);
  CHECK(ta.count("report.json") == 1);
  CHECK(ta.count("report.txt") == 1);
  CHECK(ta == tb);
}

TEST_CASE("metrics recomputes the run report") {
  testing::TempDir run, again;
  REQUIRE(run_command(cli({"run", "--corpus", testing::corpus_dir(), "--mode", "base-s1", "--transport", "replay",
                           "--replay", testing::fixture("replay/base_s1.json"), "--out", run.str()}))
              .status == 0);
  auto m = run_command(cli({"metrics", (run.path() / "outcomes.json").string(), "--out", again.str()}));
  REQUIRE(m.status == 0);
  CHECK(fsutil::read_file((again.path() / "report.json").string()) ==
        fsutil::read_file((run.path() / "report.json").string()));
  CHECK(fsutil::read_file((again.path() / "report.txt").string()) ==
        fsutil::read_file((run.path() / "report.txt").string()));
}

TEST_CASE("trace-diff prints validator feedback") {
  auto r = run_command(
      cli({"trace-diff", testing::fixture("traces/fig4_search_only.xt"), "fig4", "--corpus", testing::corpus_dir()}));
  CHECK(r.status == 0);
  CHECK(r.out ==
        "The current PoC is not available.\nThe current PoC fails to fully execute the file navigation chain, and "
        "application execution flow failed to reach search_results.php\n");
}

TEST_CASE("replay misses are reported per record") {
  testing::TempDir out;
  auto r = run_command(cli({"run", "--corpus", testing::corpus_dir(), "--mode", "base-s2", "--transport", "replay",
                            "--replay", testing::fixture("replay/base_s1.json"), "--out", out.str()}));
  CHECK(r.status == 0);
  auto doc = json::parse(fsutil::read_file((out.path() / "outcomes.json").string()));
  for (const auto& o : doc["outcomes"]) CHECK_FALSE(o["error"].get<std::string>().empty());
}
