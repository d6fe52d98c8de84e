// Command-line front end: corpus checks, context extraction, experiment runs,
// metrics, trace diffing and prompt snapshots.

#include <filesystem>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "pocgen/bench.hpp"
#include "pocgen/context.hpp"
#include "pocgen/corpus.hpp"
#include "pocgen/llm.hpp"
#include "pocgen/prompt.hpp"
#include "pocgen/trace.hpp"

namespace fs = std::filesystem;
using namespace pocgen;
using nlohmann::json;

namespace {

constexpr int kUsage = 2;

class Failure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

corpus::CveRecord find_record(const std::string& dir, const std::string& id) {
  auto load = corpus::load_corpus(dir);
  for (auto& r : load.records)
    if (r.id == id) return r;
  for (const auto& e : load.errors)
    if (e.id == id) throw Failure("record " + id + " is invalid: " + e.field + ": " + e.message);
  throw Failure("no record " + id + " in " + dir);
}

context::Granularity granularity_of(const std::string& s) {
  auto g = context::parse_granularity(s);
  if (!g) throw Failure("unknown granularity " + s);
  return *g;
}

std::string self_dir() {
  std::error_code ec;
  auto p = fs::read_symlink("/proc/self/exe", ec);
  return ec ? std::string(".") : p.parent_path().string();
}

std::string default_interpreter() {
  for (const auto& c : {fs::path(self_dir()) / "phpsub", fs::path(self_dir()) / ".." / "bin" / "phpsub"})
    if (fs::exists(c)) return fs::canonical(c).string();
  return "phpsub";
}

int cmd_validate_corpus(const std::string& dir) {
  auto load = corpus::load_corpus(dir);
  for (const auto& r : load.records) std::cout << "ok\t" << r.id << "\t" << to_string(r.cwe) << "\n";
  for (const auto& e : load.errors)
    std::cout << "error\t" << (e.id.empty() ? e.file : e.id) << "\t" << e.field << "\t" << e.message << "\n";
  std::cout << load.records.size() << " valid, " << load.errors.size() << " invalid\n";
  return load.errors.empty() ? 0 : 1;
}

int cmd_extract_context(const std::string& dir, const std::string& id, const std::string& gran,
                        const std::string& out) {
  auto record = find_record(dir, id);
  auto model = context::model_for_record(record);
  auto g = granularity_of(gran);
  auto vuln = context::extract_vuln_context(model, record, g);
  auto nav = context::extract_nav_context(model, vuln, g);
  std::string doc = context::context_document(vuln, nav).dump(2) + "\n";
  if (out.empty())
    std::cout << doc;
  else
    fsutil::write_file(out, doc);
  return 0;
}

struct RunArgs {
  std::string corpus;
  std::string mode;
  std::string transport = "replay";
  std::string replay;
  std::string model = "gpt-4o";
  std::string endpoint;
  std::string out = "out";
  std::string judge = "scripted";
  std::string judgments;
  std::string interpreter;
  std::string workspace_root;
  std::string log;
  int k = 3;
  int workers = 1;
  int timeout_ms = 10000;
  int min_interval_ms = 0;
  bool failure_analysis = false;
  bool llm_harness = false;
};

int cmd_run(const RunArgs& a) {
  auto mode = bench::parse_mode(a.mode);
  if (!mode) throw Failure("unknown mode " + a.mode);
  auto judge = bench::parse_judge(a.judge);
  if (!judge) throw Failure("unknown judge " + a.judge);
  auto load = corpus::load_corpus(a.corpus);
  for (const auto& e : load.errors)
    std::cerr << "skipping invalid record " << (e.id.empty() ? e.file : e.id) << ": " << e.message << "\n";

  bench::Config cfg;
  cfg.model = llm::model_config(a.model);
  if (!a.endpoint.empty()) cfg.model.endpoint = a.endpoint;
  cfg.model.min_interval_ms = a.min_interval_ms;
  cfg.k = a.k;
  cfg.workers = a.workers;
  cfg.judge = *judge;
  if (!a.judgments.empty()) cfg.external = bench::load_judgments(a.judgments);
  cfg.out_dir = a.out;
  cfg.failure_analysis = a.failure_analysis;
  cfg.llm_harness = a.llm_harness;
  cfg.harness.command = {a.interpreter.empty() ? default_interpreter() : a.interpreter, "--root", "{workspace}",
                         "{script}"};
  cfg.harness.workspace_root = a.workspace_root;
  cfg.harness.timeout_ms = a.timeout_ms;

  std::unique_ptr<llm::Client> client;
  if (a.transport == "replay") {
    if (a.replay.empty()) throw Failure("--transport replay needs --replay <script>");
    client = std::make_unique<llm::ReplayClient>(llm::ReplayClient::from_file(a.replay));
  } else if (a.transport == "live") {
    client = std::make_unique<llm::LiveClient>(a.log);
  } else {
    throw Failure("unknown transport " + a.transport);
  }

  auto res = bench::run_experiment(load.records, *mode, *client, cfg);
  fs::create_directories(a.out);
  const std::string outcomes = (fs::path(a.out) / "outcomes.json").string();
  fsutil::write_file(outcomes, bench::outcomes_to_json(res.outcomes).dump(2) + "\n");
  auto report = bench::compute_metrics(res.outcomes);
  bench::emit_report(report, a.out);
  std::cout << bench::render_table(report);
  std::cout << "\noutcomes: " << outcomes << "\n";
  for (const auto& o : res.outcomes)
    if (!o.error.empty()) std::cerr << "record " << o.record_id << " failed: " << o.error << "\n";
  return 0;
}

int cmd_metrics(const std::string& file, const std::string& out) {
  if (!fs::exists(file)) throw Failure("outcomes file " + file + " does not exist");
  json doc = json::parse(fsutil::read_file(file), nullptr, false);
  if (doc.is_discarded()) throw Failure("outcomes file " + file + " is not JSON");
  auto report = bench::compute_metrics(bench::outcomes_from_json(doc));
  if (!out.empty()) bench::emit_report(report, out);
  std::cout << bench::render_table(report);
  return 0;
}

int cmd_trace_diff(const std::string& dir, const std::string& trace_file, const std::string& id,
                   const std::string& gran) {
  auto record = find_record(dir, id);
  auto model = context::model_for_record(record);
  auto g = granularity_of(gran);
  auto vuln = context::extract_vuln_context(model, record, g);
  auto nav = context::extract_nav_context(model, vuln, g);
  auto tr = trace::parse_trace(trace_file);
  for (const auto& w : tr.warnings) std::cerr << "warning: " << w << "\n";
  auto diff = trace::diff_navigation(tr, nav, vuln.sink);
  auto fb = trace::path_feedback(diff, trace::sink_descriptor(vuln.sink));
  std::cout << fb.render() << "\n";
  return 0;
}

int cmd_prompts(const std::string& dir, const std::string& id, const std::string& mode_text) {
  auto record = find_record(dir, id);
  auto mode = bench::parse_mode(mode_text);
  if (!mode) throw Failure("unknown mode " + mode_text);
  prompt::Prompt p;
  switch (*mode) {
    case bench::Mode::BaseS1: p = prompt::base_prompt(corpus::build_scenario(record, corpus::Stage::S1), record.base_url); break;
    case bench::Mode::BaseS2: p = prompt::base_prompt(corpus::build_scenario(record, corpus::Stage::S2), record.base_url); break;
    case bench::Mode::BaseS3: p = prompt::base_prompt(corpus::build_scenario(record, corpus::Stage::S3), record.base_url); break;
    case bench::Mode::DirectFile:
    case bench::Mode::DirectFunction: {
      auto g = *mode == bench::Mode::DirectFile ? context::Granularity::File : context::Granularity::Function;
      auto model = context::model_for_record(record);
      auto vuln = context::extract_vuln_context(model, record, g);
      auto nav = context::extract_nav_context(model, vuln, g);
      p = prompt::direct_prompt(record, vuln, nav, record.entry_url);
      break;
    }
    case bench::Mode::Adaptive: {
      auto model = context::model_for_record(record);
      auto vuln = context::extract_vuln_context(model, record, context::Granularity::Function);
      auto nav = context::extract_nav_context(model, vuln, context::Granularity::Function);
      prompt::CotInputs in{corpus::build_scenario(record, corpus::Stage::S3), record.base_url, &vuln, &nav};
      p = prompt::cot_prompt(subtask::decompose(record.cwe), 0, {}, prompt::IclBank::bundled(), std::nullopt, in);
      break;
    }
  }
  json j = {{"record_id", record.id}, {"mode", bench::to_string(*mode)}, {"digest", llm::prompt_digest(p)},
            {"tokens", p.tokens},     {"system", p.system},              {"user", p.user}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PoC generation pipeline for PHP web vulnerabilities"};
  app.require_subcommand(1);

  std::string corpus_dir = "corpus";
  std::string record_id, granularity = "function", out, file, mode;
  RunArgs run;

  auto* vc = app.add_subcommand("validate-corpus", "Check every record of a corpus directory");
  vc->add_option("dir", corpus_dir, "Corpus directory")->required();

  auto* ec = app.add_subcommand("extract-context", "Print the vulnerability and navigation contexts of a record");
  ec->add_option("record", record_id, "Record id")->required();
  ec->add_option("--corpus", corpus_dir, "Corpus directory");
  ec->add_option("--granularity", granularity, "function or file");
  ec->add_option("--out", out, "Write the document here instead of stdout");

  auto* rn = app.add_subcommand("run", "Run one experiment mode over a corpus");
  rn->add_option("--corpus", run.corpus, "Corpus directory")->required();
  rn->add_option("--mode", run.mode, "base-s1, base-s2, base-s3, direct-file, direct-function or adaptive")->required();
  rn->add_option("--transport", run.transport, "replay or live");
  rn->add_option("--replay", run.replay, "Replay script for --transport replay");
  rn->add_option("--model", run.model, "Model name");
  rn->add_option("--endpoint", run.endpoint, "Chat-completions origin for live runs");
  rn->add_option("--out", run.out, "Output directory");
  rn->add_option("--k", run.k, "Trials per record");
  rn->add_option("--workers", run.workers, "Records processed concurrently");
  rn->add_option("--judge", run.judge, "scripted, validator or external");
  rn->add_option("--judgments", run.judgments, "External judgment file");
  rn->add_flag("--failure-analysis", run.failure_analysis, "Grade sub-task answers (adaptive)");
  rn->add_flag("--llm-harness", run.llm_harness, "Let the model write validation harnesses");
  rn->add_option("--interpreter", run.interpreter, "Harness interpreter (default: phpsub next to this binary)");
  rn->add_option("--workspace-root", run.workspace_root, "Parent directory of harness workspaces");
  rn->add_option("--timeout-ms", run.timeout_ms, "Harness wall-clock limit");
  rn->add_option("--min-interval-ms", run.min_interval_ms, "Minimum spacing of live requests");
  rn->add_option("--log", run.log, "JSON-lines request log for live runs");

  auto* mt = app.add_subcommand("metrics", "Recompute the report from an outcomes file");
  mt->add_option("outcomes", file, "outcomes.json")->required();
  mt->add_option("--out", out, "Also write report.json and report.txt here");

  auto* td = app.add_subcommand("trace-diff", "Compare a function trace with a record's navigation chain");
  td->add_option("trace", file, "Trace file")->required();
  td->add_option("record", record_id, "Record id")->required();
  td->add_option("--corpus", corpus_dir, "Corpus directory");
  td->add_option("--granularity", granularity, "function or file");

  auto* pr = app.add_subcommand("prompts", "Print the first prompt of a mode with its digest");
  pr->add_option("record", record_id, "Record id")->required();
  pr->add_option("--corpus", corpus_dir, "Corpus directory");
  pr->add_option("--mode", mode, "Experiment mode")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*vc) return cmd_validate_corpus(corpus_dir);
    if (*ec) return cmd_extract_context(corpus_dir, record_id, granularity, out);
    if (*rn) return cmd_run(run);
    if (*mt) return cmd_metrics(file, out);
    if (*td) return cmd_trace_diff(corpus_dir, file, record_id, granularity);
    if (*pr) return cmd_prompts(corpus_dir, record_id, mode);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}
