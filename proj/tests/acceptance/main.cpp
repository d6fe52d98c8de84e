// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 when any fails.

#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "pocgen/bench.hpp"
#include "pocgen/context.hpp"
#include "pocgen/payload.hpp"
#include "pocgen/prompt.hpp"
#include "pocgen/subtask.hpp"
#include "pocgen/trace.hpp"
#include "support.hpp"

using namespace pocgen;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Collects failed expectations of one criterion.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

json golden_doc(const std::string& id) {
  return json::parse(fsutil::read_file(testing::golden(id + ".context.json")));
}

json document(const std::string& id) {
  auto e = testing::extract(id);
  return context::context_document(e.vuln, e.nav);
}

bool has_fact(const context::VulnerabilityContext& v, const std::string& kind, const std::string& needle, int line,
              int end_line) {
  for (const auto& f : v.facts)
    if (f.kind == kind && f.value.find(needle) != std::string::npos && f.location.line == line &&
        f.location.end_line == end_line)
      return true;
  return false;
}

void search_page_context(Check& c) {
  auto e = testing::extract("fig4");
  const auto& v = e.vuln;
  c.expect(v.source.location == context::Location{"search_results.php", 6, 6} && v.source.key == "search",
           "source search_results.php:6 search");
  c.expect(v.sink.callee == "echo" && v.sink.location.line == 9, "sink echo at line 9");
  c.expect(v.data_flow_constraints.size() == 1 && v.data_flow_constraints[0].definition &&
               *v.data_flow_constraints[0].definition == context::Location{"search_functions.php", 2, 7},
           "sanitizer search_functions.php:2-7");
  c.expect(v.control_flow_constraints.size() == 1 && v.control_flow_constraints[0].location.line == 8, "guard at line 8");
  c.expect(e.nav.file_navigation_chain == std::vector<std::string>{"search.php", "search_results.php"},
           "chain [search.php, search_results.php]");
  c.expect(e.nav.path_constraint_values.size() == 1 && e.nav.path_constraint_values[0].key == "mode" &&
               e.nav.path_constraint_values[0].value == "search",
           "constraint mode=search");
  c.expect(document("fig4") == golden_doc("fig4"), "golden document fig4");
}

void class_specific_contexts(Check& c) {
  auto csrf = testing::extract("fig14");
  c.expect(has_fact(csrf.vuln, "operation_parameters", "action=clear-statistics", 16, 16),
           "operation parameter action=clear-statistics");
  c.expect(has_fact(csrf.vuln, "execution_code", "delete_ratings_log", 22, 23), "execution code lines 22-23");
  auto upload = testing::extract("fig15");
  c.expect(has_fact(upload.vuln, "validation_mechanism", "blacklist", 9, 13), "blacklist at files.php:9-13");
  c.expect(has_fact(upload.vuln, "upload_code", "filefile", 3, 3), "upload code line");
  c.expect(has_fact(upload.vuln, "storage_path_code", "$target", 4, 4), "storage path line");
  c.expect(document("fig14") == golden_doc("fig14"), "golden document fig14");
  c.expect(document("fig15") == golden_doc("fig15"), "golden document fig15");
}

void plan_shape(Check& c) {
  struct Want {
    Cwe cwe;
    std::size_t total;
    std::vector<std::size_t> split;
  };
  for (const Want& w : {Want{Cwe::CWE79, 14, {7, 4, 3}}, Want{Cwe::CWE78, 14, {7, 4, 3}}, Want{Cwe::CWE89, 14, {7, 4, 3}},
                        Want{Cwe::CWE352, 11, {4, 4, 3}}, Want{Cwe::CWE434, 17, {10, 4, 3}}}) {
    auto p = subtask::decompose(w.cwe);
    std::vector<std::size_t> split;
    for (const auto& ph : p.phases) split.push_back(ph.subtasks.size());
    c.expect(p.subtasks().size() == w.total, to_string(w.cwe) + " sub-task count");
    c.expect(split == w.split, to_string(w.cwe) + " phase split");
    std::map<std::string, int> seen;
    for (const auto& s : p.cot_steps)
      for (const auto& id : s.subtasks) ++seen[id];
    bool once = seen.size() == p.subtasks().size();
    for (const auto& t : p.subtasks()) once = once && seen[t.id] == 1;
    c.expect(once, to_string(w.cwe) + " each sub-task in exactly one step");
    if (is_taint_style(w.cwe)) c.expect(p.cot_steps.size() == 9, to_string(w.cwe) + " 9 CoT steps");
  }
}

std::vector<bench::TrialOutcome> synthetic(bench::Mode mode, int n, int wins) {
  std::vector<bench::TrialOutcome> out;
  for (int i = 0; i < n; ++i) {
    bench::TrialOutcome o;
    o.record_id = mode == bench::Mode::BaseS1 ? "b" : "a";
    o.record_id += std::to_string(1000 + i);
    o.cwe = kAllCwes[i % 5];
    o.mode = mode;
    for (int t = 1; t <= 3; ++t) {
      bench::Trial tr;
      tr.index = t;
      tr.generated = true;
      tr.functional = i < wins || t < 3;
      o.trials.push_back(tr);
    }
    o.success = bench::all_functional(o.trials, 3);
    out.push_back(o);
  }
  return out;
}

void metric_formulas(Check& c) {
  auto outs = synthetic(bench::Mode::BaseS1, 100, 21);
  auto more = synthetic(bench::Mode::Adaptive, 100, 34);
  outs.insert(outs.end(), more.begin(), more.end());
  auto r = bench::compute_metrics(outs);
  c.expect(r.total[bench::Mode::BaseS1].rate && r.total[bench::Mode::BaseS1].rate->percent() == "21.0%", "21/100 -> 21.0%");
  c.expect(r.total[bench::Mode::Adaptive].rate && r.total[bench::Mode::Adaptive].rate->percent() == "34.0%",
           "34/100 -> 34.0%");
  auto e1 = subtask::ident_failure_rate(subtask::FailureCounts{10, 8, 20, 15, 0, 0});
  c.expect(e1 && e1->num * 1000 == 225 * e1->den, "identification failure 0.225");
  auto e2 = subtask::reason_failure_rate(subtask::FailureCounts{0, 8, 0, 15, 4, 12});
  c.expect(e2 && e2->num * 100 == 35 * e2->den, "reasoning failure 0.35");
  auto doc = json::parse(fsutil::read_file(testing::fixture("metrics/failure_counts.json")));
  const auto& g = doc["models"]["gpt-4o"];
  subtask::FailureCounts counts{g["complete_vul"], g["ident_vul"], g["complete_nav"],
                                g["ident_nav"],    g["gen_payload"], g["gen_pathvar"]};
  auto i = subtask::ident_failure_rate(counts);
  auto s = subtask::reason_failure_rate(counts);
  c.expect(i && i->percent() == "24.3%", "aggregate identification failure 24.3%");
  c.expect(s && s->percent() == "34.9%", "aggregate reasoning failure 34.9%");
}

llm::ReplayClient payload_script(const std::vector<std::string>& payloads) {
  std::vector<llm::ReplayEntry> entries;
  for (const auto& p : payloads) entries.push_back({"", json{{"attack_payload", p}}.dump(), std::nullopt, ""});
  return llm::ReplayClient(entries, llm::ReplayClient::Mode::Ordinal);
}

void refinement_contract(Check& c) {
  const auto& rec = testing::record("fig4");
  auto e = testing::extract("fig4");
  prompt::CotInputs in{corpus::build_scenario(rec, corpus::Stage::S3), rec.base_url, &e.vuln, &e.nav};
  payload::TemplateHarness harness(rec);
  const std::string v1 = "<script>alert(1)</script>";
  const std::string v2 = "question'><script>alert(1)</script>";

  auto good = payload_script({v2});
  payload::LlmPayloadSession s1(good, llm::model_config("gpt-4o"), in, {});
  auto r1 = payload::refine_loop(s1, e.vuln, v1, harness, testing::harness_options());
  c.expect(r1.verdict == feedback::Verdict::Valid && r1.iterations == 2 && r1.payload == v2, "v1 blocked, v2 Valid in 2");

  auto blocked = payload_script({"\"><script>alert(1)</script>", "<svg onload=alert(1)>", "<b>x</b>"});
  payload::LlmPayloadSession s2(blocked, llm::model_config("gpt-4o"), in, {});
  auto r2 = payload::refine_loop(s2, e.vuln, v1, harness, testing::harness_options());
  c.expect(r2.verdict == feedback::Verdict::Invalid && r2.iterations == 3, "always blocked: Invalid in exactly 3");

  c.expect(std::string(feedback::kControlMarker) == "control flow constraints are not satisfied.", "control marker text");
  auto h = payload::template_harness(rec, e.vuln, " ");
  auto out = payload::run_harness(h, testing::harness_options());
  c.expect(out.stdout_text.find("control flow constraints are not satisfied.\n") != std::string::npos,
           "harness prints the control marker");
}

void trace_diffing(Check& c) {
  auto e = testing::extract("fig4");
  auto t = trace::parse_trace(testing::fixture("traces/fig4_search_only.xt"));
  auto d = trace::diff_navigation(t, e.nav, e.vuln.sink);
  auto msg = trace::feedback_message(d, trace::sink_descriptor(e.vuln.sink));
  c.expect(msg ==
               "The current PoC fails to fully execute the file navigation chain, and application execution flow "
               "failed to reach search_results.php",
           "feedback names search_results.php");
  int files = 0;
  for (const auto& entry : fs::directory_iterator(testing::fixture("traces"))) {
    if (entry.path().extension() != ".xt") continue;
    ++files;
    auto tr = trace::parse_trace(entry.path().string());
    auto back = trace::parse_trace_text(trace::render(tr));
    c.expect(back.events.size() == tr.events.size() && !tr.events.empty(),
             "round trip " + entry.path().filename().string());
  }
  c.expect(files >= 5, "trace fixtures present");
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = fsutil::read_file(e.path().string());
  return out;
}

void determinism_and_hygiene(Check& c) {
  testing::TempDir a, b;
  for (const auto* dir : {&a, &b}) {
    auto r = testing::run_command({testing::cli_path(), "run", "--corpus", testing::corpus_dir(), "--mode", "base-s1",
                                   "--transport", "replay", "--replay", testing::fixture("replay/base_s1.json"), "--out",
                                   dir->str()});
    c.expect(r.status == 0, "replay run exits 0");
  }
  auto ta = tree(a.path()), tb = tree(b.path());
  c.expect(ta.count("outcomes.json") && ta.count("report.json") && ta.count("report.txt"), "run writes outcomes and reports");
  c.expect(ta == tb, "two replay runs byte-identical");

  for (const auto& rec : corpus::load_corpus(testing::corpus_dir()).records) {
    for (auto stage : {corpus::Stage::S1, corpus::Stage::S2}) {
      auto sc = corpus::build_scenario(rec, stage);
      auto plan = subtask::decompose(rec.cwe);
      std::vector<prompt::Prompt> ps = {prompt::base_prompt(sc, rec.base_url), prompt::subtask_prompt(plan, sc, rec.base_url)};
      prompt::CotInputs in{sc, rec.base_url, nullptr, nullptr};
      for (std::size_t i = 0; i < plan.cot_steps.size(); ++i)
        ps.push_back(prompt::cot_prompt(plan, i, {}, prompt::IclBank::bundled(), std::nullopt, in));
      std::string allowed = rec.description + (stage == corpus::Stage::S2 ? "\n" + rec.patch : "");
      std::vector<std::string> withheld;
      std::string sources;
      for (const auto& f : rec.files) sources += f.content + "\n";
      if (stage == corpus::Stage::S1) sources += rec.patch;
      for (const auto& raw : text::split_lines(sources)) {
        std::string line = text::trim(raw);
        if (line.size() >= 12 && allowed.find(line) == std::string::npos) withheld.push_back(line);
      }
      for (const auto& p : ps)
        for (const auto& w : withheld)
          c.expect((p.system + p.user).find(w) == std::string::npos,
                   rec.id + " " + corpus::to_string(stage) + " prompt leaks: " + w);
    }
  }

  testing::TempDir root("pocgen-ws");
  auto before = testing::snapshot(fs::temp_directory_path());
  const auto& rec = testing::record("fig4");
  auto e = testing::extract("fig4");
  auto opts = testing::harness_options();
  opts.workspace_root = root.str();
  auto h = payload::template_harness(rec, e.vuln, "question'><script>alert(1)</script>");
  payload::run_harness(h, opts);
  c.expect(fs::is_empty(root.path()), "workspace removed");
  for (const auto& [path, size] : testing::snapshot(fs::temp_directory_path()))
    if (!before.count(path)) c.expect(path.rfind("pocgen-", 0) == 0, "new file outside workspace: " + path);
}

void budget_trimming(Check& c) {
  std::mt19937 rng(8);
  int cases = 0;
  for (; cases < 1000; ++cases) {
    std::vector<context::CodeSlice> slices;
    std::size_t mandatory = 0, total = 0;
    for (std::size_t i = 0, n = rng() % 8; i < n; ++i) {
      context::CodeSlice s{"f.php", 1, 2, "function", std::string(rng() % 200, 'x'), rng() % 3 == 0,
                           static_cast<double>(rng() % 3)};
      std::size_t t = context::slice_tokens(s);
      total += t;
      if (s.mandatory) mandatory += t;
      slices.push_back(s);
    }
    std::size_t budget = 1 + rng() % (total + 10);
    if (mandatory > budget) {
      bool threw = false;
      try {
        context::trim_to_budget(slices, budget);
      } catch (const context::BudgetExceeded&) {
        threw = true;
      }
      c.expect(threw, "mandatory overflow raises BudgetExceeded");
      continue;
    }
    auto out = context::trim_to_budget(slices, budget);
    std::size_t kept_mandatory = 0, used = 0;
    for (const auto& s : out) {
      used += context::slice_tokens(s);
      if (s.mandatory) kept_mandatory += context::slice_tokens(s);
    }
    c.expect(kept_mandatory == mandatory, "mandatory slices kept");
    c.expect(used <= budget, "result fits the budget");
    auto twice = context::trim_to_budget(out, budget);
    bool same = twice.size() == out.size();
    for (std::size_t i = 0; same && i < out.size(); ++i) same = twice[i].text == out[i].text;
    c.expect(same, "idempotent");
    if (c.failures.size() > 5) break;
  }
  c.expect(cases >= 1000, "1000 randomized cases");
}

}  // namespace

int main() {
  struct Criterion {
    const char* title;
    std::function<void(Check&)> run;
  };
  const std::vector<Criterion> criteria = {
      {"search page vulnerability and navigation context", search_page_context},
      {"CSRF and upload fixture facts", class_specific_contexts},
      {"sub-task plan shape", plan_shape},
      {"metric formulas", metric_formulas},
      {"payload refinement loop contract", refinement_contract},
      {"trace diffing and round trip", trace_diffing},
      {"determinism and hygiene", determinism_and_hygiene},
      {"budget trimming properties", budget_trimming},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      criteria[i].run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    std::ostringstream line;
    line << "criterion " << (i + 1) << ": " << (c.failures.empty() ? "PASS" : "FAIL") << "  " << criteria[i].title;
    if (!c.failures.empty()) {
      ++failed;
      line << " (" << c.failures.front();
      if (c.failures.size() > 1) line << "; +" << (c.failures.size() - 1) << " more";
      line << ")";
    }
    std::cout << line.str() << "\n";
  }
  return failed == 0 ? 0 : 1;
}
