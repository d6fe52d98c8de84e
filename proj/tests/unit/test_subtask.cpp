#include "doctest.h"

#include <map>
#include <set>

#include "pocgen/subtask.hpp"

using namespace pocgen;
using namespace pocgen::subtask;

namespace {

std::vector<std::size_t> phase_sizes(const PhasePlan& p) {
  std::vector<std::size_t> out;
  for (const auto& ph : p.phases) out.push_back(ph.subtasks.size());
  return out;
}

}  // namespace

TEST_CASE("plan sizes per weakness class") {
  for (Cwe c : {Cwe::CWE78, Cwe::CWE79, Cwe::CWE89}) {
    auto p = decompose(c);
    CHECK(p.subtasks().size() == 14);
    CHECK(phase_sizes(p) == std::vector<std::size_t>{7, 4, 3});
    CHECK(p.cot_steps.size() == 9);
  }
  auto csrf = decompose(Cwe::CWE352);
  CHECK(csrf.subtasks().size() == 11);
  CHECK(phase_sizes(csrf) == std::vector<std::size_t>{4, 4, 3});
  auto upload = decompose(Cwe::CWE434);
  CHECK(upload.subtasks().size() == 17);
  CHECK(phase_sizes(upload) == std::vector<std::size_t>{10, 4, 3});
}

TEST_CASE("every sub-task sits in exactly one CoT step") {
  for (Cwe c : kAllCwes) {
    CAPTURE(to_string(c));
    auto p = decompose(c);
    std::map<std::string, int> seen;
    for (const auto& step : p.cot_steps)
      for (const auto& id : step.subtasks) ++seen[id];
    std::set<std::string> ids;
    for (const auto& t : p.subtasks()) {
      CHECK(ids.insert(t.id).second);
      CHECK(seen[t.id] == 1);
    }
    CHECK(seen.size() == ids.size());
    for (const auto& t : p.subtasks()) CHECK(p.cot_steps[p.step_of(t.id)].subtasks.size() >= 1);
    CHECK_THROWS_AS(p.step_of("no_such_task"), ContractViolation);
  }
}

TEST_CASE("the last phase is the request assembly") {
  for (Cwe c : kAllCwes) {
    auto p = decompose(c);
    std::set<std::string> last;
    for (const auto& t : p.phases.back().subtasks) last.insert(t.id);
    CHECK(last == std::set<std::string>{"request_method", "request_url", "request_parameters"});
  }
}

TEST_CASE("answer parsing") {
  auto p = decompose(Cwe::CWE79);
  std::vector<SubTask> asked = {*p.find("request_method"), *p.find("request_url"), *p.find("request_parameters")};
  auto res = parse_answers(asked,
                           "Here you go:\n```json\n{\"request_method\": \"GET\", \"request_url\": \"unknown\", "
                           "\"request_parameters\": \"oops\"}\n```");
  REQUIRE(res.size() == 3);
  CHECK(res[0].status == Status::Answered);
  CHECK(answer_text(res[0]) == "GET");
  CHECK(res[1].status == Status::Unanswerable);
  CHECK(res[2].status == Status::Malformed);

  auto none = parse_answers(asked, "I cannot help with that.");
  for (const auto& r : none) CHECK(r.status == Status::Malformed);

  auto missing = parse_answers(asked, "{\"request_method\": \"POST\"}");
  CHECK(missing[1].status == Status::Malformed);
}

TEST_CASE("json object extraction tolerates prose and braces in strings") {
  auto j = extract_json_object("text before {\"a\": \"}{\", \"b\": [1, 2]} text after");
  REQUIRE(j.has_value());
  CHECK((*j)["a"] == "}{");
  CHECK_FALSE(extract_json_object("no object here").has_value());
}

TEST_CASE("failure tags") {
  FailureLedger l{"r", false, true, false, true, false, true};
  CHECK(classify_failure(l) == std::set<std::string>{kC1Vulnerability});
  FailureLedger both{"r", false, false, false, false, false, false};
  CHECK(classify_failure(both) == std::set<std::string>{kC1Vulnerability, kC1Navigation});
  FailureLedger ident{"r", true, true, false, true, false, true};
  CHECK(classify_failure(ident) == std::set<std::string>{kC2Identification});
  FailureLedger reason{"r", true, true, true, true, false, true};
  CHECK(classify_failure(reason) == std::set<std::string>{kC2Reasoning});
  FailureLedger ok{"r", true, true, true, true, true, true};
  CHECK(classify_failure(ok).empty());
  FailureLedger bad{"r", false, true, true, true, false, false};
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("identification and reasoning failure rates") {
  // 1 - (8/10 + 15/20) / 2 = 0.225
  FailureCounts c{10, 8, 20, 15, 0, 0};
  auto ident = ident_failure_rate(c);
  REQUIRE(ident.has_value());
  CHECK(ident->reduced().num == 9);
  CHECK(ident->reduced().den == 40);
  CHECK(ident->value() == doctest::Approx(0.225));

  // 1 - (4/8 + 12/15) / 2 = 0.35
  FailureCounts r{0, 8, 0, 15, 4, 12};
  auto reason = reason_failure_rate(r);
  REQUIRE(reason.has_value());
  CHECK(reason->reduced().num == 7);
  CHECK(reason->reduced().den == 20);

  CHECK_FALSE(ident_failure_rate(FailureCounts{0, 0, 5, 5, 0, 0}).has_value());
  CHECK_FALSE(reason_failure_rate(FailureCounts{5, 0, 5, 5, 0, 0}).has_value());
}

TEST_CASE("rates from ledgers equal rates from their counts") {
  std::vector<FailureLedger> ls;
  for (int i = 0; i < 20; ++i) {
    FailureLedger l;
    l.record_id = "r" + std::to_string(i);
    l.complete_vul = i % 5 != 0;
    l.ident_vul = l.complete_vul && i % 3 != 0;
    l.gen_payload = l.ident_vul && i % 2 == 0;
    l.complete_nav = i % 7 != 0;
    l.ident_nav = l.complete_nav && i % 4 != 0;
    l.gen_pathvar = l.ident_nav && i % 3 == 1;
    ls.push_back(l);
  }
  auto c = count(ls);
  std::int64_t cv = 0;
  for (const auto& l : ls) cv += l.complete_vul;
  CHECK(c.complete_vul == cv);
  CHECK(ident_failure_rate(ls)->tenths() == ident_failure_rate(c)->tenths());
  CHECK(reason_failure_rate(ls)->tenths() == reason_failure_rate(c)->tenths());
  auto tsv = ledger_tsv(ls);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 21);
}
