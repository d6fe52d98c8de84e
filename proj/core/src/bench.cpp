#include "pocgen/bench.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <iomanip>
#include <regex>
#include <sstream>
#include <thread>

#include "pocgen/context.hpp"
#include "pocgen/prompt.hpp"

namespace pocgen::bench {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Mode m) {
  switch (m) {
    case Mode::BaseS1: return "base-s1";
    case Mode::BaseS2: return "base-s2";
    case Mode::BaseS3: return "base-s3";
    case Mode::DirectFile: return "direct-file";
    case Mode::DirectFunction: return "direct-function";
    case Mode::Adaptive: return "adaptive";
  }
  return "base-s1";
}

std::optional<Mode> parse_mode(std::string_view text) {
  std::string t = text::to_lower(text);
  for (Mode m : kAllModes)
    if (to_string(m) == t) return m;
  return std::nullopt;
}

std::string label(Mode m) {
  switch (m) {
    case Mode::BaseS1: return "Base-S1";
    case Mode::BaseS2: return "Base-S2";
    case Mode::BaseS3: return "Base-S3";
    case Mode::DirectFile: return "Direct-File";
    case Mode::DirectFunction: return "Direct-Function";
    case Mode::Adaptive: return "Adaptive";
  }
  return "Base-S1";
}

std::string to_string(JudgeSource j) {
  switch (j) {
    case JudgeSource::Scripted: return "scripted";
    case JudgeSource::Validator: return "validator";
    case JudgeSource::External: return "external";
  }
  return "scripted";
}

std::optional<JudgeSource> parse_judge(std::string_view text) {
  for (JudgeSource j : {JudgeSource::Scripted, JudgeSource::Validator, JudgeSource::External})
    if (to_string(j) == text) return j;
  return std::nullopt;
}

std::string judgment_key(const std::string& record_id, Mode mode, int trial) {
  return record_id + "/" + to_string(mode) + "/" + std::to_string(trial);
}

ExternalJudgments load_judgments(const std::string& path) {
  json doc = json::parse(fsutil::read_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.contains("judgments")) throw Error("judgment file " + path + " is not valid");
  ExternalJudgments out;
  for (const auto& j : doc.at("judgments")) {
    auto mode = parse_mode(j.at("mode").get<std::string>());
    if (!mode) throw Error("judgment file " + path + ": unknown mode " + j.at("mode").dump());
    out[judgment_key(j.at("record_id").get<std::string>(), *mode, j.at("trial").get<int>())] =
        j.at("functional").get<bool>();
  }
  return out;
}

std::string extract_poc(std::string_view reply) {
  static const std::regex fence(R"(```[^\n`]*\n([\s\S]*?)```)");
  std::string r(reply);
  std::smatch m;
  if (std::regex_search(r, m, fence)) return text::trim(m[1].str());
  return text::trim(r);
}

bool all_functional(const std::vector<Trial>& trials, int k) {
  return static_cast<int>(trials.size()) == k &&
         std::all_of(trials.begin(), trials.end(), [](const Trial& t) { return t.functional; });
}

// ---------------------------------------------------------------------------
// experiment

namespace {

struct Contexts {
  std::optional<context::VulnerabilityContext> vuln;
  std::optional<context::NavigationContext> nav;
  std::string missing;  // ContextNotFound message
};

Contexts extract(const corpus::CveRecord& r, context::Granularity g) {
  Contexts c;
  try {
    auto model = context::model_for_record(r);
    c.vuln = context::extract_vuln_context(model, r, g);
    c.nav = context::extract_nav_context(model, *c.vuln, g);
  } catch (const context::ContextNotFound& e) {
    c.missing = e.what();
  }
  return c;
}

void set_judgment(Trial& t, std::optional<bool> functional) {
  if (!functional) {
    t.functional = false;
    t.judgment = "unjudged";
    return;
  }
  t.functional = *functional && t.generated;
  t.judgment = t.functional ? "functional" : "non-functional";
}

std::optional<bool> external_judgment(const Config& cfg, const std::string& id, Mode mode, int trial) {
  auto it = cfg.external.find(judgment_key(id, mode, trial));
  if (it == cfg.external.end()) return std::nullopt;
  return it->second;
}

void keep_artifact(Trial& t, const poc::PocArtifact& art, const Config& cfg, Mode mode) {
  t.generated = !text::trim(art.body).empty();
  if (!t.generated) return;
  t.format = art.format;
  if (cfg.out_dir.empty()) return;
  const std::string dir = (fs::path(cfg.out_dir) / "pocs" / to_string(mode)).string();
  std::string path = poc::serialize(art, dir);
  t.poc_file = fs::relative(path, cfg.out_dir).generic_string();
}

std::vector<Trial> free_form_trials(const corpus::CveRecord& r, Mode mode, const prompt::Prompt& p,
                                    llm::Client& client, const Config& cfg) {
  std::vector<Trial> trials;
  auto completions = llm::run_trials(client, p, cfg.model, cfg.k);
  for (std::size_t i = 0; i < completions.size(); ++i) {
    Trial t;
    t.index = static_cast<int>(i) + 1;
    auto art = poc::from_text(extract_poc(completions[i].text), r.cwe, {r.id, to_string(mode), t.index});
    keep_artifact(t, art, cfg, mode);
    if (!t.generated) t.note = "empty generation";
    set_judgment(t, cfg.judge == JudgeSource::External ? external_judgment(cfg, r.id, mode, t.index)
                                                       : completions[i].functional);
    trials.push_back(std::move(t));
  }
  return trials;
}

std::string basename(const std::string& path) { return fs::path(path).filename().string(); }

const subtask::SubTaskResult* answered(const std::vector<subtask::SubTaskResult>& rs, const std::string& id) {
  for (const auto& r : rs)
    if (r.id == id && r.status == subtask::Status::Answered) return &r;
  return nullptr;
}

std::string locating_subtask(Cwe cwe) {
  if (cwe == Cwe::CWE352) return "execution_code";
  if (cwe == Cwe::CWE434) return "upload_code";
  return "sink";
}

bool constraint_met(const context::PathConstraint& c, const json& values) {
  if (!values.is_object() || !values.contains(c.key)) return false;
  const json& v = values.at(c.key);
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (c.op == "==") return s == c.value;
  if (c.op == "!=") return s != c.value;
  if (c.op == "non-empty") return !s.empty() && s != "0";
  return true;
}

subtask::FailureLedger grade(const corpus::CveRecord& r, const Contexts& ctx,
                             const std::vector<subtask::SubTaskResult>& answers, bool payload_ok) {
  subtask::FailureLedger l;
  l.record_id = r.id;
  l.complete_vul = ctx.vuln.has_value();
  l.complete_nav = ctx.nav.has_value();
  if (ctx.vuln) {
    if (auto* a = answered(answers, locating_subtask(r.cwe))) {
      std::string t = subtask::answer_text(*a);
      l.ident_vul = text::contains(t, basename(ctx.vuln->sink.location.path)) &&
                    text::contains(t, std::to_string(ctx.vuln->sink.location.line));
    }
  }
  if (ctx.nav) {
    if (auto* a = answered(answers, "file_navigation_chain"); a && a->value->is_array()) {
      std::vector<std::string> got;
      for (const auto& x : *a->value) got.push_back(basename(x.is_string() ? x.get<std::string>() : x.dump()));
      std::vector<std::string> want;
      for (const auto& n : ctx.nav->file_navigation_chain) want.push_back(basename(n));
      l.ident_nav = got == want;
    }
    const auto& cs = ctx.nav->path_constraint_values;
    if (auto* a = answered(answers, "path_constraint_values"))
      l.gen_pathvar = std::all_of(cs.begin(), cs.end(), [&](const auto& c) { return constraint_met(c, *a->value); });
    else
      l.gen_pathvar = cs.empty();
  }
  l.gen_payload = payload_ok;
  l.ident_vul = l.ident_vul && l.complete_vul;
  l.ident_nav = l.ident_nav && l.complete_nav;
  l.gen_payload = l.gen_payload && l.ident_vul;
  l.gen_pathvar = l.gen_pathvar && l.ident_nav;
  return l;
}

struct AdaptiveTrial {
  Trial trial;
  std::vector<subtask::SubTaskResult> answers;
  bool payload_ok = false;
};

AdaptiveTrial adaptive_trial(const corpus::CveRecord& r, const Contexts& ctx, int index, llm::Client& client,
                             const Config& cfg) {
  AdaptiveTrial out;
  out.trial.index = index;
  const auto plan = subtask::decompose(r.cwe);
  prompt::CotInputs inputs{corpus::build_scenario(r, corpus::Stage::S3), r.base_url,
                           ctx.vuln ? &*ctx.vuln : nullptr, ctx.nav ? &*ctx.nav : nullptr};
  const bool taint = is_taint_style(r.cwe);
  const std::size_t payload_step = taint ? plan.step_of("attack_payload") : plan.cot_steps.size();
  std::optional<bool> scripted;
  std::optional<feedback::Verdict> refined;
  for (std::size_t s = 0; s < plan.cot_steps.size(); ++s) {
    auto c = client.complete(prompt::cot_prompt(plan, s, out.answers, prompt::IclBank::bundled(), std::nullopt, inputs),
                             cfg.model);
    scripted = c.functional;
    std::vector<subtask::SubTask> asked;
    for (const auto& id : plan.cot_steps[s].subtasks) asked.push_back(*plan.find(id));
    for (auto& a : subtask::parse_answers(asked, c.text)) out.answers.push_back(std::move(a));
    if (s != payload_step || !ctx.vuln) continue;
    auto it = std::find_if(out.answers.begin(), out.answers.end(), [](const auto& a) {
      return a.id == "attack_payload" && a.status == subtask::Status::Answered;
    });
    if (it == out.answers.end()) continue;
    payload::LlmPayloadSession session(client, cfg.model, inputs, out.answers);
    payload::TemplateHarness tmpl(r);
    payload::LlmHarness llm2(client, cfg.model);
    payload::HarnessProvider& provider = cfg.llm_harness ? static_cast<payload::HarnessProvider&>(llm2) : tmpl;
    auto res = payload::refine_loop(session, *ctx.vuln, subtask::answer_text(*it), provider, cfg.harness);
    it->value = res.payload;
    out.trial.refine_iterations = res.iterations;
    refined = res.verdict;
    if (!res.error.empty()) out.trial.note = res.error;
  }
  out.payload_ok = taint ? refined == feedback::Verdict::Valid : false;
  try {
    auto art = poc::assemble(out.answers, r, {r.id, to_string(Mode::Adaptive), index});
    keep_artifact(out.trial, art, cfg, Mode::Adaptive);
  } catch (const poc::AssemblyError& e) {
    out.trial.generated = false;
    out.trial.note = e.what();
  }
  std::optional<bool> verdict;
  switch (cfg.judge) {
    case JudgeSource::Scripted: verdict = scripted; break;
    case JudgeSource::External: verdict = external_judgment(cfg, r.id, Mode::Adaptive, index); break;
    case JudgeSource::Validator:
      if (refined) verdict = *refined == feedback::Verdict::Valid;
      break;
  }
  set_judgment(out.trial, verdict);
  if (!taint) out.payload_ok = out.trial.functional;
  return out;
}

TrialOutcome run_record(const corpus::CveRecord& r, Mode mode, llm::Client& client, const Config& cfg) {
  TrialOutcome o;
  o.record_id = r.id;
  o.cwe = r.cwe;
  o.mode = mode;
  try {
    switch (mode) {
      case Mode::BaseS1:
      case Mode::BaseS2:
      case Mode::BaseS3: {
        auto stage = mode == Mode::BaseS1 ? corpus::Stage::S1
                     : mode == Mode::BaseS2 ? corpus::Stage::S2
                                            : corpus::Stage::S3;
        o.trials = free_form_trials(r, mode, prompt::base_prompt(corpus::build_scenario(r, stage), r.base_url),
                                    client, cfg);
        break;
      }
      case Mode::DirectFile:
      case Mode::DirectFunction: {
        auto g = mode == Mode::DirectFile ? context::Granularity::File : context::Granularity::Function;
        Contexts ctx = extract(r, g);
        if (!ctx.vuln || !ctx.nav) throw Error("context not found: " + ctx.missing);
        o.trials = free_form_trials(r, mode, prompt::direct_prompt(r, *ctx.vuln, *ctx.nav, r.entry_url), client, cfg);
        break;
      }
      case Mode::Adaptive: {
        Contexts ctx = extract(r, context::Granularity::Function);
        for (int i = 1; i <= cfg.k; ++i) {
          auto t = adaptive_trial(r, ctx, i, client, cfg);
          if (i == 1 && cfg.failure_analysis) o.ledger = grade(r, ctx, t.answers, t.payload_ok);
          o.trials.push_back(std::move(t.trial));
        }
        break;
      }
    }
  } catch (const std::exception& e) {
    o.trials.clear();
    o.error = e.what();
  }
  o.success = o.error.empty() && all_functional(o.trials, cfg.k);
  return o;
}

}  // namespace

RunResult run_experiment(const std::vector<corpus::CveRecord>& records, Mode mode, llm::Client& client,
                         const Config& cfg) {
  if (cfg.k < 1) throw ContractViolation("k must be >= 1");
  if (cfg.judge == JudgeSource::Validator && mode != Mode::Adaptive)
    throw ContractViolation("the validator judge only applies to adaptive runs");
  std::vector<corpus::CveRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  RunResult res;
  res.outcomes.resize(sorted.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < sorted.size(); i = next++) res.outcomes[i] = run_record(sorted[i], mode, client, cfg);
  };
  const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(sorted.size())));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& o : res.outcomes)
    if (!o.error.empty()) res.errored.push_back(o.record_id);
  return res;
}

// ---------------------------------------------------------------------------
// metrics

MetricsReport compute_metrics(const std::vector<TrialOutcome>& outcomes) {
  MetricsReport r;
  std::vector<subtask::FailureLedger> ledgers;
  for (const auto& o : outcomes) {
    if (std::find(r.modes.begin(), r.modes.end(), o.mode) == r.modes.end()) r.modes.push_back(o.mode);
    if (std::find(r.cwes.begin(), r.cwes.end(), o.cwe) == r.cwes.end()) r.cwes.push_back(o.cwe);
    Cell& c = r.success[o.cwe][o.mode];
    Cell& t = r.total[o.mode];
    ++c.n_vulns;
    ++t.n_vulns;
    if (o.success) {
      ++c.n_success;
      ++t.n_success;
    }
    for (const auto& tr : o.trials) {
      if (!tr.generated || !tr.format) continue;
      ++r.formats[o.cwe][*tr.format];
      ++r.n_poc[o.cwe];
      ++r.total_formats[*tr.format];
      ++r.total_poc;
    }
    if (o.ledger) ledgers.push_back(*o.ledger);
    if (!o.error.empty()) r.errored.push_back(o.record_id);
  }
  auto mode_index = [](Mode m) { return static_cast<int>(m); };
  std::sort(r.modes.begin(), r.modes.end(), [&](Mode a, Mode b) { return mode_index(a) < mode_index(b); });
  std::sort(r.cwes.begin(), r.cwes.end(),
            [](Cwe a, Cwe b) { return std::find(std::begin(kAllCwes), std::end(kAllCwes), a) <
                                      std::find(std::begin(kAllCwes), std::end(kAllCwes), b); });
  auto finish = [](Cell& c) {
    if (c.n_vulns > 0) c.rate = Ratio{c.n_success, c.n_vulns};
  };
  for (auto& [cwe, row] : r.success)
    for (auto& [m, c] : row) finish(c);
  for (auto& [m, c] : r.total) finish(c);
  if (!ledgers.empty()) {
    r.failure = subtask::count(ledgers);
    r.ident_failure = subtask::ident_failure_rate(*r.failure);
    r.reason_failure = subtask::reason_failure_rate(*r.failure);
  }
  return r;
}

std::optional<Ratio> distribution(const MetricsReport& r, Cwe cwe, poc::Format f) {
  auto n = r.n_poc.find(cwe);
  if (n == r.n_poc.end() || n->second == 0) return std::nullopt;
  std::int64_t count = 0;
  if (auto row = r.formats.find(cwe); row != r.formats.end())
    if (auto it = row->second.find(f); it != row->second.end()) count = it->second;
  return Ratio{count, n->second};
}

// ---------------------------------------------------------------------------
// serialization

json to_json(const TrialOutcome& o) {
  json trials = json::array();
  for (const auto& t : o.trials) {
    trials.push_back({{"index", t.index},
                      {"generated", t.generated},
                      {"format", t.format ? json(poc::to_string(*t.format)) : json(nullptr)},
                      {"poc_file", t.poc_file},
                      {"functional", t.functional},
                      {"judgment", t.judgment},
                      {"note", t.note},
                      {"refine_iterations", t.refine_iterations}});
  }
  json j = {{"record_id", o.record_id}, {"cwe", to_string(o.cwe)}, {"mode", to_string(o.mode)},
            {"trials", trials},         {"success", o.success},     {"error", o.error}};
  if (o.ledger) {
    const auto& l = *o.ledger;
    j["ledger"] = {{"complete_vul", l.complete_vul}, {"ident_vul", l.ident_vul},     {"gen_payload", l.gen_payload},
                   {"complete_nav", l.complete_nav}, {"ident_nav", l.ident_nav},     {"gen_pathvar", l.gen_pathvar}};
  } else {
    j["ledger"] = nullptr;
  }
  return j;
}

TrialOutcome outcome_from_json(const json& j) {
  TrialOutcome o;
  o.record_id = j.at("record_id").get<std::string>();
  auto cwe = parse_cwe(j.at("cwe").get<std::string>());
  auto mode = parse_mode(j.at("mode").get<std::string>());
  if (!cwe) throw Error("outcome " + o.record_id + ": unknown cwe");
  if (!mode) throw Error("outcome " + o.record_id + ": unknown mode");
  o.cwe = *cwe;
  o.mode = *mode;
  for (const auto& tj : j.at("trials")) {
    Trial t;
    t.index = tj.at("index").get<int>();
    t.generated = tj.at("generated").get<bool>();
    if (tj.contains("format") && !tj.at("format").is_null()) {
      t.format = poc::parse_format(tj.at("format").get<std::string>());
      if (!t.format) throw Error("outcome " + o.record_id + ": unknown format");
    }
    t.poc_file = tj.value("poc_file", std::string());
    t.functional = tj.at("functional").get<bool>();
    t.judgment = tj.value("judgment", std::string("unjudged"));
    t.note = tj.value("note", std::string());
    t.refine_iterations = tj.value("refine_iterations", 0);
    o.trials.push_back(std::move(t));
  }
  o.success = j.at("success").get<bool>();
  o.error = j.value("error", std::string());
  if (j.contains("ledger") && !j.at("ledger").is_null()) {
    const json& l = j.at("ledger");
    subtask::FailureLedger fl;
    fl.record_id = o.record_id;
    fl.complete_vul = l.at("complete_vul").get<bool>();
    fl.ident_vul = l.at("ident_vul").get<bool>();
    fl.gen_payload = l.at("gen_payload").get<bool>();
    fl.complete_nav = l.at("complete_nav").get<bool>();
    fl.ident_nav = l.at("ident_nav").get<bool>();
    fl.gen_pathvar = l.at("gen_pathvar").get<bool>();
    fl.validate();
    o.ledger = fl;
  }
  return o;
}

json outcomes_to_json(const std::vector<TrialOutcome>& outcomes) {
  json list = json::array();
  for (const auto& o : outcomes) list.push_back(to_json(o));
  return {{"version", 1}, {"outcomes", list}};
}

std::vector<TrialOutcome> outcomes_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("outcomes")) throw Error("outcomes document has no \"outcomes\" list");
  std::vector<TrialOutcome> out;
  for (const auto& j : doc.at("outcomes")) out.push_back(outcome_from_json(j));
  return out;
}

namespace {

json ratio_json(const std::optional<Ratio>& r) {
  if (!r) return nullptr;
  return {{"num", r->num}, {"den", r->den}, {"percent", r->percent()}};
}

json cell_json(const Cell& c) {
  return {{"n_success", c.n_success}, {"n_vulns", c.n_vulns}, {"rate", ratio_json(c.rate)}};
}

}  // namespace

json to_json(const MetricsReport& r) {
  json modes = json::array();
  for (Mode m : r.modes) modes.push_back(to_string(m));
  json success = json::object();
  for (const auto& [cwe, row] : r.success)
    for (const auto& [m, c] : row) success[to_string(cwe)][to_string(m)] = cell_json(c);
  json total = json::object();
  for (const auto& [m, c] : r.total) total[to_string(m)] = cell_json(c);
  json formats = json::object();
  for (Cwe cwe : r.cwes) {
    json row = json::object();
    for (poc::Format f : poc::kAllFormats) {
      std::int64_t n = 0;
      if (auto it = r.formats.find(cwe); it != r.formats.end())
        if (auto jt = it->second.find(f); jt != it->second.end()) n = jt->second;
      row[poc::to_string(f)] = {{"n_format", n}, {"rate", ratio_json(distribution(r, cwe, f))}};
    }
    auto np = r.n_poc.find(cwe);
    formats[to_string(cwe)] = {{"n_poc", np == r.n_poc.end() ? 0 : np->second}, {"formats", row}};
  }
  json j = {{"modes", modes},   {"success", success},         {"total", total},
            {"formats", formats}, {"total_poc", r.total_poc}, {"errored", r.errored}};
  if (r.failure) {
    const auto& f = *r.failure;
    j["failure"] = {{"counts",
                     {{"complete_vul", f.complete_vul},
                      {"ident_vul", f.ident_vul},
                      {"complete_nav", f.complete_nav},
                      {"ident_nav", f.ident_nav},
                      {"gen_payload", f.gen_payload},
                      {"gen_pathvar", f.gen_pathvar}}},
                    {"ident_failure_rate", ratio_json(r.ident_failure)},
                    {"reason_failure_rate", ratio_json(r.reason_failure)}};
  } else {
    j["failure"] = nullptr;
  }
  return j;
}

namespace {

std::string format_header(poc::Format f) {
  switch (f) {
    case poc::Format::Html: return "HTML";
    case poc::Format::PyScript: return "Python";
    case poc::Format::ShellCommand: return "Shell";
    case poc::Format::PlainText: return "Text";
    case poc::Format::ProxyRequest: return "Proxy";
    case poc::Format::PhpScript: return "PHP";
  }
  return "";
}

std::string cell_text(const Cell& c) {
  if (!c.rate) return "-";
  return c.rate->percent() + " (" + std::to_string(c.n_success) + "/" + std::to_string(c.n_vulns) + ")";
}

class Table {
 public:
  void row(std::vector<std::string> cells) { rows_.push_back(std::move(cells)); }
  std::string render() const {
    std::vector<std::size_t> width;
    for (const auto& r : rows_)
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (width.size() <= i) width.push_back(0);
        width[i] = std::max(width[i], r[i].size());
      }
    std::ostringstream o;
    for (std::size_t n = 0; n < rows_.size(); ++n) {
      std::string line;
      for (std::size_t i = 0; i < rows_[n].size(); ++i) {
        if (i) line += " | ";
        line += rows_[n][i] + std::string(width[i] - rows_[n][i].size(), ' ');
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      o << line << "\n";
      if (n == 0) {
        std::string rule;
        for (std::size_t i = 0; i < width.size(); ++i) {
          if (i) rule += "-+-";
          rule += std::string(width[i], '-');
        }
        o << rule << "\n";
      }
    }
    return o.str();
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace

std::string render_table(const MetricsReport& r) {
  std::ostringstream o;
  o << "Success rate (N_success / N_vulns)\n\n";
  Table s;
  std::vector<std::string> head = {"CWE"};
  for (Mode m : r.modes) head.push_back(label(m));
  s.row(head);
  for (Cwe cwe : r.cwes) {
    std::vector<std::string> row = {to_string(cwe)};
    for (Mode m : r.modes) {
      auto it = r.success.find(cwe);
      Cell c;
      if (it != r.success.end())
        if (auto jt = it->second.find(m); jt != it->second.end()) c = jt->second;
      row.push_back(cell_text(c));
    }
    s.row(row);
  }
  std::vector<std::string> total = {"Total"};
  for (Mode m : r.modes) total.push_back(cell_text(r.total.count(m) ? r.total.at(m) : Cell{}));
  s.row(total);
  o << s.render();

  o << "\nPoC format distribution (N_format / N_PoC)\n\n";
  Table f;
  std::vector<std::string> fhead = {"CWE"};
  for (poc::Format fm : poc::kAllFormats) fhead.push_back(format_header(fm));
  fhead.push_back("N_PoC");
  f.row(fhead);
  for (Cwe cwe : r.cwes) {
    std::vector<std::string> row = {to_string(cwe)};
    for (poc::Format fm : poc::kAllFormats) {
      auto d = distribution(r, cwe, fm);
      row.push_back(d ? d->percent() : "-");
    }
    auto np = r.n_poc.find(cwe);
    row.push_back(std::to_string(np == r.n_poc.end() ? 0 : np->second));
    f.row(row);
  }
  std::vector<std::string> ftotal = {"Total"};
  for (poc::Format fm : poc::kAllFormats) {
    auto it = r.total_formats.find(fm);
    std::int64_t n = it == r.total_formats.end() ? 0 : it->second;
    ftotal.push_back(r.total_poc ? Ratio{n, r.total_poc}.percent() : "-");
  }
  ftotal.push_back(std::to_string(r.total_poc));
  f.row(ftotal);
  o << f.render();

  if (r.failure) {
    o << "\nFailure analysis\n\n";
    o << "Identification failure rate: " << (r.ident_failure ? r.ident_failure->percent() : "undefined") << "\n";
    o << "Reasoning failure rate: " << (r.reason_failure ? r.reason_failure->percent() : "undefined") << "\n";
  }
  if (!r.errored.empty()) o << "\nErrored records: " << text::join(r.errored, ", ") << "\n";
  return o.str();
}

std::vector<std::string> emit_report(const MetricsReport& r, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::string json_path = (fs::path(out_dir) / "report.json").string();
  const std::string txt_path = (fs::path(out_dir) / "report.txt").string();
  fsutil::write_file(json_path, to_json(r).dump(2) + "\n");
  fsutil::write_file(txt_path, render_table(r));
  return {json_path, txt_path};
}

}  // namespace pocgen::bench
