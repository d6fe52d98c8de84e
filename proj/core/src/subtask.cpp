#include "pocgen/subtask.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "pocgen/data.hpp"

namespace pocgen::subtask {

using nlohmann::json;

std::string to_string(Category c) {
  switch (c) {
    case Category::IdentifyVul: return "identify-vul";
    case Category::ReasonVul: return "reason-vul";
    case Category::IdentifyNav: return "identify-nav";
    case Category::ReasonNav: return "reason-nav";
    case Category::Assembly: return "assembly";
  }
  return "assembly";
}

std::string to_string(Status s) {
  switch (s) {
    case Status::Answered: return "answered";
    case Status::Unanswerable: return "unanswerable";
    case Status::Malformed: return "malformed";
  }
  return "malformed";
}

std::vector<SubTask> PhasePlan::subtasks() const {
  std::vector<SubTask> out;
  for (const auto& p : phases) out.insert(out.end(), p.subtasks.begin(), p.subtasks.end());
  return out;
}

const SubTask* PhasePlan::find(std::string_view id) const {
  for (const auto& p : phases)
    for (const auto& s : p.subtasks)
      if (s.id == id) return &s;
  return nullptr;
}

std::size_t PhasePlan::step_of(std::string_view id) const {
  for (std::size_t i = 0; i < cot_steps.size(); ++i)
    for (const auto& s : cot_steps[i].subtasks)
      if (s == id) return i;
  throw ContractViolation("sub-task not in any step: " + std::string(id));
}

namespace {

Category parse_category(const std::string& s) {
  static const std::map<std::string, Category> m = {{"identify-vul", Category::IdentifyVul},
                                                    {"reason-vul", Category::ReasonVul},
                                                    {"identify-nav", Category::IdentifyNav},
                                                    {"reason-nav", Category::ReasonNav},
                                                    {"assembly", Category::Assembly}};
  auto it = m.find(s);
  if (it == m.end()) throw Error("plans.json: unknown category " + s);
  return it->second;
}

AnswerType parse_type(const std::string& s) {
  if (s == "text") return AnswerType::Text;
  if (s == "list") return AnswerType::List;
  if (s == "map") return AnswerType::Map;
  throw Error("plans.json: unknown answer type " + s);
}

const json& plans_doc() {
  static const json doc = json::parse(data::get("plans.json"));
  return doc;
}

}  // namespace

PhasePlan decompose(Cwe cwe) {
  const json& doc = plans_doc();
  std::string key = is_taint_style(cwe) ? "taint" : to_string(cwe);
  if (!doc.at("plans").contains(key)) throw ContractViolation("no decomposition for " + to_string(cwe));
  const json& plan = doc.at("plans").at(key);
  const json& defs = doc.at("subtasks");
  PhasePlan out;
  out.cwe = cwe;
  for (const auto& ph : plan.at("phases")) {
    Phase p;
    p.name = ph.at("name").get<std::string>();
    for (const auto& id : ph.at("subtasks")) {
      const json& d = defs.at(id.get<std::string>());
      SubTask t;
      t.id = id.get<std::string>();
      t.name = d.at("name").get<std::string>();
      t.definition = d.at("definition").get<std::string>();
      t.type = parse_type(d.at("type").get<std::string>());
      t.category = parse_category(d.at("category").get<std::string>());
      p.subtasks.push_back(std::move(t));
    }
    out.phases.push_back(std::move(p));
  }
  for (const auto& st : plan.at("cot_steps"))
    out.cot_steps.push_back({st.at("title").get<std::string>(), st.at("subtasks").get<std::vector<std::string>>()});
  return out;
}

std::optional<json> extract_json_object(std::string_view reply) {
  for (std::size_t start = reply.find('{'); start != std::string_view::npos; start = reply.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false, escape = false;
    for (std::size_t i = start; i < reply.size(); ++i) {
      char c = reply[i];
      if (in_string) {
        if (escape)
          escape = false;
        else if (c == '\\')
          escape = true;
        else if (c == '"')
          in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      if (c == '{') ++depth;
      if (c == '}' && --depth == 0) {
        json doc = json::parse(reply.substr(start, i - start + 1), nullptr, false);
        if (!doc.is_discarded() && doc.is_object()) return doc;
        break;
      }
    }
  }
  return std::nullopt;
}

namespace {

bool unanswerable(const json& v) {
  if (v.is_null()) return true;
  if (!v.is_string()) return false;
  std::string s = text::to_lower(text::trim(v.get<std::string>()));
  return s.empty() || s == "unknown" || s == "n/a" || s == "none" || s == "not available";
}

bool type_ok(AnswerType t, const json& v) {
  switch (t) {
    case AnswerType::Text: return v.is_string() || v.is_number();
    case AnswerType::List: return v.is_array();
    case AnswerType::Map: return v.is_object();
  }
  return false;
}

}  // namespace

std::vector<SubTaskResult> parse_answers(const std::vector<SubTask>& asked, std::string_view reply) {
  std::vector<SubTaskResult> out;
  auto doc = extract_json_object(reply);
  for (const auto& t : asked) {
    SubTaskResult r;
    r.id = t.id;
    if (!doc || !doc->contains(t.id)) {
      r.raw = doc ? "" : std::string(reply);
      r.status = Status::Malformed;
      out.push_back(std::move(r));
      continue;
    }
    const json& v = doc->at(t.id);
    r.raw = v.dump();
    if (unanswerable(v)) {
      r.status = Status::Unanswerable;
    } else if (!type_ok(t.type, v)) {
      r.status = Status::Malformed;
    } else {
      r.status = Status::Answered;
      r.value = v;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string answer_text(const SubTaskResult& r) {
  if (!r.value) return "";
  if (r.value->is_string()) return r.value->get<std::string>();
  return r.value->dump();
}

void FailureLedger::validate() const {
  if (ident_vul && !complete_vul) throw ContractViolation(record_id + ": ident_vul without complete_vul");
  if (ident_nav && !complete_nav) throw ContractViolation(record_id + ": ident_nav without complete_nav");
  if (gen_payload && !ident_vul) throw ContractViolation(record_id + ": gen_payload without ident_vul");
  if (gen_pathvar && !ident_nav) throw ContractViolation(record_id + ": gen_pathvar without ident_nav");
}

std::set<std::string> classify_failure(const FailureLedger& l) {
  l.validate();
  std::set<std::string> tags;
  if (!l.complete_vul) tags.insert(kC1Vulnerability);
  if (!l.complete_nav) tags.insert(kC1Navigation);
  if ((l.complete_vul && !l.ident_vul) || (l.complete_nav && !l.ident_nav)) tags.insert(kC2Identification);
  if ((l.ident_vul && !l.gen_payload) || (l.ident_nav && !l.gen_pathvar)) tags.insert(kC2Reasoning);
  return tags;
}

FailureCounts count(const std::vector<FailureLedger>& ledgers) {
  FailureCounts c;
  for (const auto& l : ledgers) {
    l.validate();
    c.complete_vul += l.complete_vul;
    c.ident_vul += l.ident_vul;
    c.complete_nav += l.complete_nav;
    c.ident_nav += l.ident_nav;
    c.gen_payload += l.gen_payload;
    c.gen_pathvar += l.gen_pathvar;
  }
  return c;
}

namespace {

/// 1 − ½(a/b + c/d) as an exact ratio.
std::optional<Ratio> one_minus_half_sum(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  if (b <= 0 || d <= 0) return std::nullopt;
  if (a < 0 || c < 0 || a > b || c > d) throw ContractViolation("failure counts exceed their denominators");
  return Ratio{2 * b * d - a * d - c * b, 2 * b * d}.reduced();
}

}  // namespace

std::optional<Ratio> ident_failure_rate(const FailureCounts& c) {
  return one_minus_half_sum(c.ident_vul, c.complete_vul, c.ident_nav, c.complete_nav);
}

std::optional<Ratio> reason_failure_rate(const FailureCounts& c) {
  return one_minus_half_sum(c.gen_payload, c.ident_vul, c.gen_pathvar, c.ident_nav);
}

std::optional<Ratio> ident_failure_rate(const std::vector<FailureLedger>& ledgers) {
  return ident_failure_rate(count(ledgers));
}

std::optional<Ratio> reason_failure_rate(const std::vector<FailureLedger>& ledgers) {
  return reason_failure_rate(count(ledgers));
}

std::string ledger_tsv(const std::vector<FailureLedger>& ledgers) {
  std::ostringstream out;
  out << "id\tcomplete_vul\tcomplete_nav\tident_vul\tident_nav\tgen_payload\tgen_pathvar\ttags\n";
  for (const auto& l : ledgers) {
    auto tags = classify_failure(l);
    out << l.record_id << '\t' << l.complete_vul << '\t' << l.complete_nav << '\t' << l.ident_vul << '\t' << l.ident_nav
        << '\t' << l.gen_payload << '\t' << l.gen_pathvar << '\t'
        << text::join(std::vector<std::string>(tags.begin(), tags.end()), ",") << '\n';
  }
  return out.str();
}

}  // namespace pocgen::subtask
