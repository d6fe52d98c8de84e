#include "doctest.h"

#include <set>

#include "pocgen/llm.hpp"
#include "pocgen/prompt.hpp"
#include "support.hpp"

using namespace pocgen;
using corpus::Stage;

namespace {

const char* const kIds[] = {"cmd-ping", "fig14", "fig15", "fig4", "sqli-user"};

/// Trimmed lines of `withheld` (at least 12 characters) not present in `allowed`.
std::vector<std::string> withheld_lines(const std::string& withheld, const std::string& allowed) {
  std::vector<std::string> out;
  for (const auto& raw : text::split_lines(withheld)) {
    std::string line = text::trim(raw);
    if (line.size() >= 12 && allowed.find(line) == std::string::npos) out.push_back(line);
  }
  return out;
}

std::string all_file_text(const corpus::CveRecord& r) {
  std::string s;
  for (const auto& f : r.files) s += f.content + "\n";
  return s;
}

std::vector<prompt::Prompt> prompts_for(const corpus::CveRecord& r, Stage stage) {
  auto sc = corpus::build_scenario(r, stage);
  auto plan = subtask::decompose(r.cwe);
  std::vector<prompt::Prompt> out = {prompt::base_prompt(sc, r.base_url), prompt::subtask_prompt(plan, sc, r.base_url)};
  prompt::CotInputs in{sc, r.base_url, nullptr, nullptr};
  for (std::size_t i = 0; i < plan.cot_steps.size(); ++i)
    out.push_back(prompt::cot_prompt(plan, i, {}, prompt::IclBank::bundled(), std::nullopt, in));
  return out;
}

}  // namespace

TEST_CASE("early-stage prompts carry no withheld bytes") {
  for (const char* id : kIds) {
    CAPTURE(id);
    const auto& r = testing::record(id);
    for (const auto& p : prompts_for(r, Stage::S1)) {
      std::string all = p.system + "\n" + p.user;
      for (const auto& line : withheld_lines(r.patch, r.description)) CHECK_MESSAGE(all.find(line) == std::string::npos, line);
      for (const auto& line : withheld_lines(all_file_text(r), r.description))
        CHECK_MESSAGE(all.find(line) == std::string::npos, line);
      if (r.ground_truth_poc) CHECK(all.find(*r.ground_truth_poc) == std::string::npos);
    }
    for (const auto& p : prompts_for(r, Stage::S2)) {
      std::string all = p.system + "\n" + p.user;
      CHECK(all.find(r.patch) != std::string::npos);
      for (const auto& line : withheld_lines(all_file_text(r), r.description + "\n" + r.patch))
        CHECK_MESSAGE(all.find(line) == std::string::npos, line);
    }
  }
}

TEST_CASE("full-disclosure prompts include the source") {
  const auto& r = testing::record("fig4");
  auto p = prompt::base_prompt(corpus::build_scenario(r, Stage::S3), r.base_url);
  for (const auto& f : r.files) CHECK(p.user.find(f.content) != std::string::npos);
}

TEST_CASE("prompt token counts") {
  const auto& r = testing::record("fig15");
  auto p = prompt::base_prompt(corpus::build_scenario(r, Stage::S2), r.base_url);
  CHECK(p.tokens == testing::count_tokens(p.system) + testing::count_tokens(p.user));
  CHECK(p.expected == prompt::ExpectedOutput::FreePoC);
}

TEST_CASE("prompts are a pure function of their inputs") {
  for (const char* id : kIds) {
    const auto& r = testing::record(id);
    auto a = prompts_for(r, Stage::S3);
    auto b = prompts_for(r, Stage::S3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(llm::prompt_digest(a[i]) == llm::prompt_digest(b[i]));
  }
}

TEST_CASE("direct prompts require matching granularity") {
  const auto& r = testing::record("fig4");
  auto fn = testing::extract("fig4", context::Granularity::Function);
  auto file = testing::extract("fig4", context::Granularity::File);
  auto p = prompt::direct_prompt(r, fn.vuln, fn.nav, fn.nav.entry_url);
  CHECK(p.user.find("search_results.php") != std::string::npos);
  CHECK(p.user.find("sanitize_search") != std::string::npos);
  CHECK_THROWS_AS(prompt::direct_prompt(r, fn.vuln, file.nav, fn.nav.entry_url), ContractViolation);
}

TEST_CASE("cot prompts: facts, feedback and range") {
  const auto& r = testing::record("fig4");
  auto e = testing::extract("fig4");
  auto plan = subtask::decompose(r.cwe);
  prompt::CotInputs in{corpus::build_scenario(r, Stage::S3), r.base_url, &e.vuln, &e.nav};
  subtask::SubTaskResult prior{"request_method", "", nlohmann::json("GET"), subtask::Status::Answered};
  feedback::ValidationFeedback fb{"payload", feedback::Verdict::Invalid, feedback::kPayloadUnavailable,
                                  "probe block here", 1};
  const std::size_t last = plan.cot_steps.size() - 1;
  auto p = prompt::cot_prompt(plan, last, {prior}, prompt::IclBank::bundled(), fb, in);
  CHECK(p.expected == prompt::ExpectedOutput::StepJson);
  CHECK(p.user.find(fb.render()) != std::string::npos);
  CHECK_THROWS_AS(prompt::cot_prompt(plan, plan.cot_steps.size(), {}, prompt::IclBank::bundled(), std::nullopt, in),
                  ContractViolation);
}

TEST_CASE("bundled exemplars name their source and match plan ids") {
  const auto& bank = prompt::IclBank::bundled();
  auto keys = bank.keys();
  CHECK_FALSE(keys.empty());
  std::map<std::string, Cwe> plan_of = {{"taint", Cwe::CWE79}, {"CWE-352", Cwe::CWE352}, {"CWE-434", Cwe::CWE434}};
  for (const auto& [plan_key, id] : keys) {
    CAPTURE(plan_key);
    CAPTURE(id);
    REQUIRE(plan_of.count(plan_key) == 1);
    auto plan = subtask::decompose(plan_of[plan_key]);
    CHECK(plan.find(id) != nullptr);
    for (const auto& ex : bank.find(plan_of[plan_key], id)) {
      CHECK_FALSE(ex.citation.empty());
      CHECK_FALSE(ex.answer.empty());
    }
  }
  CHECK(prompt::plan_key(Cwe::CWE89) == "taint");
  CHECK(prompt::plan_key(Cwe::CWE434) == "CWE-434");
}

TEST_CASE("rendered contexts name every constraint") {
  auto e = testing::extract("fig4");
  auto text = prompt::render_vuln_context(e.vuln);
  for (const char* needle : {"search_results.php:6", "sanitize_search", "strlen($term) > 0", "html-attr-single"})
    CHECK_MESSAGE(text.find(needle) != std::string::npos, needle);
  auto nav = prompt::render_nav_context(e.nav);
  CHECK(nav.find("search.php") != std::string::npos);
  CHECK(nav.find("mode") != std::string::npos);
}
