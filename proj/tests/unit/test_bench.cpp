#include "doctest.h"

#include <filesystem>

#include "pocgen/bench.hpp"
#include "support.hpp"

using namespace pocgen;
using namespace pocgen::bench;
using nlohmann::json;

namespace {

Trial judged(int index, bool functional, std::optional<poc::Format> format = poc::Format::ProxyRequest) {
  Trial t;
  t.index = index;
  t.generated = format.has_value();
  t.format = format;
  t.functional = functional;
  t.judgment = functional ? "functional" : "non-functional";
  return t;
}

TrialOutcome outcome(const std::string& id, Cwe cwe, Mode mode, bool success) {
  TrialOutcome o;
  o.record_id = id;
  o.cwe = cwe;
  o.mode = mode;
  for (int i = 1; i <= 3; ++i) o.trials.push_back(judged(i, success || i < 3));
  o.success = all_functional(o.trials, 3);
  return o;
}

/// n records of `mode`, the first `wins` successful, spread over the five classes.
std::vector<TrialOutcome> synthetic(Mode mode, int n, int wins) {
  std::vector<TrialOutcome> out;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "r%03d", i);
    out.push_back(outcome(id, kAllCwes[i % 5], mode, i < wins));
  }
  return out;
}

/// Ledgers realizing the given aggregate counts.
std::vector<subtask::FailureLedger> ledgers_for(const subtask::FailureCounts& c) {
  const std::int64_t n = std::max(c.complete_vul, c.complete_nav);
  std::vector<subtask::FailureLedger> out;
  for (std::int64_t i = 0; i < n; ++i) {
    subtask::FailureLedger l;
    l.record_id = "l" + std::to_string(i);
    l.complete_vul = i < c.complete_vul;
    l.ident_vul = i < c.ident_vul;
    l.gen_payload = i < c.gen_payload;
    l.complete_nav = i < c.complete_nav;
    l.ident_nav = i < c.ident_nav;
    l.gen_pathvar = i < c.gen_pathvar;
    l.validate();
    out.push_back(l);
  }
  return out;
}

llm::ReplayEntry reply(json answers, std::optional<bool> functional = std::nullopt) {
  return {"", answers.dump(), functional, ""};
}

}  // namespace

TEST_CASE("success needs k functional trials") {
  CHECK(all_functional({judged(1, true), judged(2, true), judged(3, true)}, 3));
  CHECK_FALSE(all_functional({judged(1, true), judged(2, true), judged(3, false)}, 3));
  CHECK_FALSE(all_functional({judged(1, true), judged(2, true)}, 3));
  CHECK_FALSE(all_functional({}, 3));
}

TEST_CASE("aggregate success rates") {
  auto base = synthetic(Mode::BaseS1, 100, 21);
  auto adaptive = synthetic(Mode::Adaptive, 100, 34);
  base.insert(base.end(), adaptive.begin(), adaptive.end());
  auto r = compute_metrics(base);
  CHECK(r.total[Mode::BaseS1].n_vulns == 100);
  CHECK(r.total[Mode::BaseS1].n_success == 21);
  CHECK(r.total[Mode::BaseS1].rate->percent() == "21.0%");
  CHECK(r.total[Mode::Adaptive].rate->percent() == "34.0%");
  std::int64_t per_class = 0;
  for (Cwe c : kAllCwes) per_class += r.success[c][Mode::Adaptive].n_success;
  CHECK(per_class == 34);
  auto table = render_table(r);
  CHECK(table.find("21.0% (21/100)") != std::string::npos);
  CHECK(table.find("34.0% (34/100)") != std::string::npos);
}

TEST_CASE("an empty run has no rates") {
  auto r = compute_metrics({});
  CHECK(r.total.empty());
  CHECK_FALSE(r.ident_failure.has_value());
  CHECK_NOTHROW(render_table(r));
}

TEST_CASE("format distribution counts generated PoCs only") {
  TrialOutcome o;
  o.record_id = "x";
  o.cwe = Cwe::CWE79;
  o.mode = Mode::BaseS1;
  o.trials = {judged(1, false, poc::Format::Html), judged(2, false, poc::Format::PlainText), judged(3, false, std::nullopt)};
  auto r = compute_metrics({o});
  CHECK(r.n_poc[Cwe::CWE79] == 2);
  CHECK(distribution(r, Cwe::CWE79, poc::Format::Html)->percent() == "50.0%");
  CHECK(distribution(r, Cwe::CWE79, poc::Format::ShellCommand)->num == 0);
  CHECK_FALSE(distribution(r, Cwe::CWE89, poc::Format::Html).has_value());
}

TEST_CASE("failure rates from the committed count fixture") {
  auto doc = json::parse(fsutil::read_file(testing::fixture("metrics/failure_counts.json")));
  const auto& g = doc["models"]["gpt-4o"];
  subtask::FailureCounts c{g["complete_vul"], g["ident_vul"], g["complete_nav"],
                           g["ident_nav"],    g["gen_payload"], g["gen_pathvar"]};
  CHECK(subtask::ident_failure_rate(c)->percent() == "24.3%");
  CHECK(subtask::reason_failure_rate(c)->percent() == "34.9%");

  std::vector<TrialOutcome> outs;
  for (const auto& l : ledgers_for(c)) {
    TrialOutcome o = outcome(l.record_id, Cwe::CWE79, Mode::Adaptive, false);
    o.ledger = l;
    outs.push_back(o);
  }
  auto r = compute_metrics(outs);
  REQUIRE(r.failure.has_value());
  CHECK(r.failure->ident_nav == 13);
  CHECK(r.ident_failure->percent() == "24.3%");
  CHECK(r.reason_failure->percent() == "34.9%");
}

TEST_CASE("outcomes round-trip through json") {
  auto outs = synthetic(Mode::DirectFunction, 7, 3);
  outs[2].error = "context not found";
  outs[2].trials.clear();
  outs[2].success = false;
  outs[4].ledger = subtask::FailureLedger{"r004", true, true, true, false, false, false};
  auto doc = outcomes_to_json(outs);
  CHECK(doc["version"] == 1);
  auto back = outcomes_from_json(doc);
  REQUIRE(back.size() == outs.size());
  CHECK(outcomes_to_json(back) == doc);
  CHECK(compute_metrics(back).errored == std::vector<std::string>{"r002"});
}

TEST_CASE("modes and judges parse") {
  for (Mode m : kAllModes) CHECK(parse_mode(to_string(m)) == m);
  CHECK(label(Mode::BaseS1) == "Base-S1");
  CHECK_FALSE(parse_mode("base-s4").has_value());
  CHECK(parse_judge("validator") == JudgeSource::Validator);
}

TEST_CASE("poc extraction") {
  CHECK(extract_poc("Sure:\n```http\nGET / HTTP/1.1\n```\nmore") == "GET / HTTP/1.1");
  CHECK(extract_poc("  plain  ") == "plain");
  CHECK(extract_poc("") == "");
}

TEST_CASE("base run over the fixture corpus with the committed replay script") {
  auto load = corpus::load_corpus(testing::corpus_dir());
  auto run = [&](int workers) {
    auto client = llm::ReplayClient::from_file(testing::fixture("replay/base_s1.json"));
    Config cfg;
    cfg.workers = workers;
    auto res = run_experiment(load.records, Mode::BaseS1, client, cfg);
    CHECK(client.remaining() == 0);
    return res;
  };
  auto a = run(1);
  auto b = run(4);
  CHECK(outcomes_to_json(a.outcomes) == outcomes_to_json(b.outcomes));
  REQUIRE(a.outcomes.size() == 5);
  std::map<std::string, bool> success;
  for (const auto& o : a.outcomes) success[o.record_id] = o.success;
  CHECK(success == std::map<std::string, bool>{
                       {"cmd-ping", false}, {"fig14", true}, {"fig15", false}, {"fig4", false}, {"sqli-user", false}});
  const auto& sqli = a.outcomes[4];
  CHECK_FALSE(sqli.trials[1].generated);
  auto r = compute_metrics(a.outcomes);
  CHECK(r.n_poc[Cwe::CWE89] == 2);
  CHECK(r.total[Mode::BaseS1].rate->percent() == "20.0%");
}

TEST_CASE("validator judge is refused outside adaptive runs") {
  llm::ReplayClient client({});
  Config cfg;
  cfg.judge = JudgeSource::Validator;
  CHECK_THROWS_AS(run_experiment({testing::record("fig4")}, Mode::BaseS2, client, cfg), ContractViolation);
}

TEST_CASE("missing replay entries isolate the record") {
  llm::ReplayClient client({});
  Config cfg;
  auto res = run_experiment({testing::record("fig4"), testing::record("fig14")}, Mode::BaseS3, client, cfg);
  CHECK(res.errored == std::vector<std::string>{"fig14", "fig4"});
  for (const auto& o : res.outcomes) CHECK_FALSE(o.success);
}

TEST_CASE("adaptive run on the search page") {
  const std::string v1 = "<script>alert(1)</script>";
  const std::string v2 = "question'><script>alert(1)</script>";
  std::vector<llm::ReplayEntry> script = {
      reply({{"sink", "search_results.php line 9: echo"}, {"vulnerable_variable", "$term"},
             {"source", "search_results.php:6 $_GET['search']"}}),
      reply({{"data_flow_constraints", "sanitize_search in search_functions.php:2-7"},
             {"control_flow_constraints", "strlen($term) > 0"}}),
      reply({{"syntax_constraints", "single-quoted value attribute"}}),
      reply({{"attack_payload", v1}}),
      reply({{"attack_payload", v2}}),
      reply({{"file_navigation_chain", {"search.php", "search_results.php"}}, {"file_navigation_code", "include"}}),
      reply({{"path_constraint_code", "$_GET['mode'] == 'search'"}}),
      reply({{"path_constraint_values", {{"mode", "search"}}}}),
      reply({{"request_parameters", {{"search", "<payload>"}}}, {"request_method", "GET"}}),
      reply({{"request_url", "/search.php"}}, true),
  };
  llm::ReplayClient client(script, llm::ReplayClient::Mode::Ordinal);
  testing::TempDir out;
  Config cfg;
  cfg.k = 1;
  cfg.judge = JudgeSource::Validator;
  cfg.failure_analysis = true;
  cfg.harness = testing::harness_options();
  cfg.out_dir = out.str();
  auto res = run_experiment({testing::record("fig4")}, Mode::Adaptive, client, cfg);
  CHECK(client.remaining() == 0);
  REQUIRE(res.outcomes.size() == 1);
  const auto& o = res.outcomes[0];
  CHECK(o.error.empty());
  REQUIRE(o.trials.size() == 1);
  CHECK(o.trials[0].refine_iterations == 2);
  CHECK(o.trials[0].judgment == "functional");
  CHECK(o.success);
  REQUIRE(o.ledger.has_value());
  CHECK(subtask::classify_failure(*o.ledger).empty());
  auto body = fsutil::read_file((out.path() / o.trials[0].poc_file).string());
  CHECK(body.find("GET /search.php?mode=search&search=question%27%3E%3Cscript%3Ealert%281%29%3C%2Fscript%3E") == 0);
}

TEST_CASE("report files") {
  testing::TempDir out;
  auto r = compute_metrics(synthetic(Mode::BaseS2, 10, 4));
  auto paths = emit_report(r, out.str());
  REQUIRE(paths.size() == 2);
  CHECK(json::parse(fsutil::read_file(paths[0])) == to_json(r));
  CHECK(fsutil::read_file(paths[1]) == render_table(r));
}
