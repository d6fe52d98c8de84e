#include "pocgen/prompt.hpp"

#include <sstream>

#include "pocgen/data.hpp"

namespace pocgen::prompt {

using nlohmann::json;

std::string to_string(ExpectedOutput e) {
  switch (e) {
    case ExpectedOutput::FreePoC: return "free-poc";
    case ExpectedOutput::SubTaskJson: return "subtask-json";
    case ExpectedOutput::StepJson: return "step-json";
  }
  return "free-poc";
}

Prompt make_prompt(std::string system, std::string user, ExpectedOutput expected) {
  Prompt p;
  p.tokens = estimate_tokens(system) + estimate_tokens(user);
  p.system = std::move(system);
  p.user = std::move(user);
  p.expected = expected;
  return p;
}

std::string plan_key(Cwe cwe) { return is_taint_style(cwe) ? "taint" : to_string(cwe); }

namespace {

std::string role(Cwe cwe) {
  return "You are a web security expert who writes proof-of-concept exploits for " + cwe_title(cwe) + " (" +
         to_string(cwe) +
         ") vulnerabilities. You work only against locally deployed test instances of the affected application, "
         "for authorized verification of disclosed issues.";
}

std::string fence(const std::string& lang, const std::string& body) {
  std::string out = "```" + lang + "\n" + body;
  if (body.empty() || body.back() != '\n') out += "\n";
  return out + "```\n";
}

std::string lang_of(const std::string& path) {
  std::string l = text::to_lower(path);
  if (text::ends_with(l, ".php") || text::ends_with(l, ".inc") || text::ends_with(l, ".phtml")) return "php";
  if (text::ends_with(l, ".js")) return "javascript";
  if (text::ends_with(l, ".html") || text::ends_with(l, ".htm")) return "html";
  return "";
}

/// Information blocks of a scenario: description, then patch and files when the stage carries them.
std::string scenario_blocks(const corpus::ScenarioInput& s) {
  std::string out = "## Vulnerability description\n" + s.description;
  if (s.description.empty() || s.description.back() != '\n') out += "\n";
  if (s.patch) out += "\n## Patch (unified diff)\n" + fence("diff", *s.patch);
  if (s.files) {
    out += "\n## Vulnerable source files\n";
    for (const auto& f : *s.files) out += "### " + f.path + "\n" + fence(lang_of(f.path), f.content);
  }
  return out;
}

std::string stage_task(corpus::Stage stage) {
  switch (stage) {
    case corpus::Stage::S1:
      return "Only the public description of the vulnerability is known. Infer the affected file, parameter and "
             "request from it and write a working proof-of-concept.";
    case corpus::Stage::S2:
      return "The public description and the patch that fixes the vulnerability are known. Use the removed and "
             "added lines of the patch to locate the flaw and write a working proof-of-concept.";
    case corpus::Stage::S3:
      return "The public description, the fixing patch and the vulnerable source files are known. Trace the flaw "
             "through the source and write a working proof-of-concept.";
  }
  return "";
}

std::string answer_type(subtask::AnswerType t) {
  switch (t) {
    case subtask::AnswerType::Text: return "text";
    case subtask::AnswerType::List: return "list";
    case subtask::AnswerType::Map: return "map";
  }
  return "text";
}

std::string question_line(const subtask::SubTask& t) {
  return "- `" + t.id + "` (" + t.name + ", " + answer_type(t.type) + "): " + t.definition + "\n";
}

}  // namespace

Prompt base_prompt(const corpus::ScenarioInput& scenario, const std::string& base_url) {
  std::ostringstream u;
  u << "Target application: " << base_url << "\n";
  u << "Weakness class: " << to_string(scenario.cwe) << " (" << cwe_title(scenario.cwe) << ")\n\n";
  u << "## Task\n" << stage_task(scenario.stage) << "\n";
  u << "Every URL in the PoC must start with " << base_url << ".\n\n";
  u << scenario_blocks(scenario);
  u << "\n## Output\nReply with the proof-of-concept only: an HTTP request, an HTML page, a script or a command. "
       "Put it in a single fenced code block.\n";
  return make_prompt(role(scenario.cwe), u.str(), ExpectedOutput::FreePoC);
}

Prompt subtask_prompt(const subtask::PhasePlan& plan, const corpus::ScenarioInput& scenario,
                      const std::string& base_url) {
  std::ostringstream u;
  u << "Target application: " << base_url << "\n";
  u << "Weakness class: " << to_string(scenario.cwe) << " (" << cwe_title(scenario.cwe) << ")\n\n";
  u << scenario_blocks(scenario);
  u << "\n## Sub-tasks\nGenerating a proof-of-concept for this vulnerability breaks down into the sub-tasks below. "
       "Answer each one from the information above.\n";
  for (const auto& phase : plan.phases) {
    u << "\n### " << phase.name << "\n";
    for (const auto& t : phase.subtasks) u << question_line(t);
  }
  u << "\n## Output\nReply with one JSON object. Use every sub-task id above as a key. A text answer is a string, a "
       "list answer an array and a map answer an object. Use null for a sub-task the information does not let you "
       "answer.\n";
  return make_prompt(role(scenario.cwe), u.str(), ExpectedOutput::SubTaskJson);
}

std::string render_vuln_context(const context::VulnerabilityContext& v) {
  std::ostringstream o;
  o << "## Vulnerability context (" << context::to_string(v.granularity) << " granularity)\n";
  o << "Source: " << v.source.location.display() << " $" << v.source.superglobal << "['" << v.source.key << "']: "
    << v.source.code << "\n";
  o << "Sink: " << v.sink.location.display() << " (" << v.sink.callee << "): " << v.sink.code << "\n";
  if (!v.vulnerable_variables.empty()) o << "Vulnerable variable: " << text::join(v.vulnerable_variables, " -> ") << "\n";
  o << "Data flow constraints:";
  if (v.data_flow_constraints.empty()) o << " none";
  o << "\n";
  for (const auto& d : v.data_flow_constraints) {
    o << "- " << d.callee << " (" << d.role << ") at " << d.site.display();
    if (d.definition) o << ", defined at " << d.definition->display();
    if (!d.inner_calls.empty()) o << ", calls " << text::join(d.inner_calls, ", ");
    o << "\n";
  }
  o << "Control flow constraints:";
  if (v.control_flow_constraints.empty()) o << " none";
  o << "\n";
  for (const auto& g : v.control_flow_constraints) o << "- " << g.location.display() << ": " << g.predicate << "\n";
  const auto& s = v.syntax_constraints;
  o << "Syntax constraints: " << s.descriptor << " (" << s.description << ")";
  if (!s.prefix.empty()) o << "; text before the value: " << json(s.prefix).dump();
  if (!s.suffix.empty()) o << "; text after the value: " << json(s.suffix).dump();
  o << "\n";
  if (!v.facts.empty()) {
    o << "Facts:\n";
    for (const auto& f : v.facts) o << "- " << f.kind << " at " << f.location.display() << ": " << f.value << "\n";
  }
  o << "Code:\n";
  for (const auto& c : v.code_slices) o << fence(lang_of(c.path), context::render_slice(c));
  return o.str();
}

std::string render_nav_context(const context::NavigationContext& n) {
  std::ostringstream o;
  o << "## Navigation context (" << context::to_string(n.granularity) << " granularity)\n";
  o << "Entry URL: " << n.entry_url << "\n";
  o << "File navigation chain: " << text::join(n.file_navigation_chain, " -> ") << "\n";
  o << "Navigation code:";
  if (n.file_navigation_code.empty()) o << " none";
  o << "\n";
  for (const auto& h : n.file_navigation_code)
    o << "- " << h.from << " -> " << h.to << " (" << h.kind << ") at " << h.location.display() << ": " << h.code << "\n";
  o << "Path constraints:";
  if (n.path_constraint_code.empty() && n.path_constraint_values.empty()) o << " none";
  o << "\n";
  for (const auto& g : n.path_constraint_code) o << "- " << g.location.display() << ": " << g.predicate << "\n";
  for (const auto& c : n.path_constraint_values) {
    o << "- $" << c.superglobal << "['" << c.key << "'] " << c.op;
    if (!c.value.empty()) o << " " << json(c.value).dump();
    o << "\n";
  }
  if (!n.code_slices.empty()) {
    o << "Code:\n";
    for (const auto& c : n.code_slices) o << fence(lang_of(c.path), context::render_slice(c));
  }
  return o.str();
}

Prompt direct_prompt(const corpus::CveRecord& record, const context::VulnerabilityContext& vuln,
                     const context::NavigationContext& nav, const std::string& entry_url) {
  if (vuln.granularity != nav.granularity) throw ContractViolation("contexts differ in granularity");
  std::ostringstream u;
  u << "Target application: " << record.base_url << "\n";
  u << "Entry URL: " << entry_url << "\n";
  u << "Weakness class: " << to_string(record.cwe) << " (" << cwe_title(record.cwe) << ")\n\n";
  u << "## Vulnerability description\n" << record.description;
  if (record.description.empty() || record.description.back() != '\n') u << "\n";
  u << "\n## Patch (unified diff)\n" << fence("diff", record.patch);
  u << "\n" << render_vuln_context(vuln) << "\n" << render_nav_context(nav);
  u << "\n## Task\nUsing the vulnerability context and the navigation context, write a proof-of-concept that starts "
       "at the entry URL, satisfies every path constraint and delivers a payload that survives the data flow "
       "constraints and fits the syntax constraints at the sink.\n";
  u << "\n## Output\nReply with the proof-of-concept only, in a single fenced code block.\n";
  return make_prompt(role(record.cwe), u.str(), ExpectedOutput::FreePoC);
}

// ---------------------------------------------------------------------------
// ICL bank

const IclBank& IclBank::bundled() {
  static const IclBank bank = from_json(json::parse(data::get("icl_bank.json")));
  return bank;
}

IclBank IclBank::from_json(const json& doc) {
  IclBank b;
  for (const auto& [plan, subtasks] : doc.at("plans").items()) {
    for (const auto& [id, list] : subtasks.items()) {
      auto& dst = b.entries_[{plan, id}];
      for (const auto& e : list)
        dst.push_back({e.at("input").get<std::string>(), e.at("answer").get<std::string>(),
                       e.at("citation").get<std::string>()});
    }
  }
  return b;
}

const std::vector<Exemplar>& IclBank::find(Cwe cwe, const std::string& subtask_id) const {
  static const std::vector<Exemplar> none;
  auto it = entries_.find({plan_key(cwe), subtask_id});
  return it == entries_.end() ? none : it->second;
}

std::vector<std::pair<std::string, std::string>> IclBank::keys() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : entries_)
    if (!v.empty()) out.push_back(k);
  return out;
}

// ---------------------------------------------------------------------------
// CoT

Prompt cot_prompt(const subtask::PhasePlan& plan, std::size_t step, const std::vector<subtask::SubTaskResult>& prior,
                  const IclBank& icl, const std::optional<feedback::ValidationFeedback>& fb, const CotInputs& in) {
  if (step >= plan.cot_steps.size())
    throw ContractViolation("CoT step " + std::to_string(step) + " out of range (plan has " +
                            std::to_string(plan.cot_steps.size()) + ")");
  const auto& st = plan.cot_steps[step];
  std::ostringstream u;
  u << "Target application: " << in.base_url << "\n";
  u << "Weakness class: " << to_string(plan.cwe) << " (" << cwe_title(plan.cwe) << ")\n\n";
  u << scenario_blocks(in.scenario);
  if (in.vuln) u << "\n" << render_vuln_context(*in.vuln);
  if (in.nav) u << "\n" << render_nav_context(*in.nav);

  std::vector<const subtask::SubTaskResult*> facts;
  for (const auto& r : prior)
    if (r.status == subtask::Status::Answered) facts.push_back(&r);
  if (!facts.empty()) {
    u << "\n## Established facts\n";
    for (const auto* r : facts) {
      const auto* t = plan.find(r->id);
      u << "- " << (t ? t->name : r->id) << ": " << subtask::answer_text(*r) << "\n";
    }
  }

  u << "\n## Step " << step + 1 << " of " << plan.cot_steps.size() << ": " << st.title << "\n";
  u << "Think through this step, then answer:\n";
  for (const auto& id : st.subtasks) {
    const auto* t = plan.find(id);
    if (!t) throw ContractViolation("CoT step names unknown sub-task " + id);
    u << question_line(*t);
  }
  for (const auto& id : st.subtasks) {
    const auto& ex = icl.find(plan.cwe, id);
    if (ex.empty()) continue;
    u << "\n### Examples for " << plan.find(id)->name << "\n";
    for (const auto& e : ex) {
      u << "Input:\n" << e.input;
      if (e.input.empty() || e.input.back() != '\n') u << "\n";
      u << "Answer:\n" << e.answer;
      if (e.answer.empty() || e.answer.back() != '\n') u << "\n";
      u << "(source: " << e.citation << ")\n";
    }
  }
  if (fb) u << "\n## Validation feedback (round " << fb->iteration << ")\n" << fb->render() << "\n";
  u << "\n## Output\nReason step by step, then end with one JSON object keyed by the sub-task ids of this step.\n";
  return make_prompt(role(plan.cwe), u.str(), ExpectedOutput::StepJson);
}

}  // namespace pocgen::prompt
