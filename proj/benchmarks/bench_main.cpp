#include <benchmark/benchmark.h>

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pocgen/context.hpp"
#include "pocgen/corpus.hpp"
#include "pocgen/php_model.hpp"
#include "pocgen/trace.hpp"

using namespace pocgen;

namespace {

const corpus::CveRecord& record(const std::string& id) {
  static const corpus::CorpusLoad load = corpus::load_corpus(POCGEN_BENCH_FIXTURES "/corpus");
  for (const auto& r : load.records)
    if (r.id == id) return r;
  throw std::runtime_error("no fixture record " + id);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Slices with random sizes, a quarter of them mandatory.
std::vector<context::CodeSlice> random_slices(std::size_t n, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> len(20, 400);
  std::uniform_real_distribution<double> rel(0.0, 1.0);
  std::vector<context::CodeSlice> out;
  for (std::size_t i = 0; i < n; ++i) {
    context::CodeSlice s;
    s.path = "f" + std::to_string(i % 7) + ".php";
    s.first_line = static_cast<int>(i) * 10 + 1;
    s.last_line = s.first_line + 9;
    s.kind = "function";
    s.text = std::string(static_cast<std::size_t>(len(rng)), 'x');
    s.mandatory = i % 4 == 0;
    s.relevance = rel(rng);
    out.push_back(std::move(s));
  }
  return out;
}

void BM_parse_php(benchmark::State& state) {
  const auto& r = record("fig15");
  for (auto _ : state)
    for (const auto& f : r.files) benchmark::DoNotOptimize(php::parse_php(f));
}
BENCHMARK(BM_parse_php);

void BM_extract_vuln_context(benchmark::State& state) {
  const auto& r = record("fig4");
  auto model = context::model_for_record(r);
  for (auto _ : state)
    benchmark::DoNotOptimize(context::extract_vuln_context(model, r, context::Granularity::Function));
}
BENCHMARK(BM_extract_vuln_context);

void BM_trim_to_budget(benchmark::State& state) {
  auto slices = random_slices(static_cast<std::size_t>(state.range(0)), 7);
  std::size_t total = 0, mandatory = 0;
  for (const auto& s : slices) {
    total += context::slice_tokens(s);
    if (s.mandatory) mandatory += context::slice_tokens(s);
  }
  std::size_t budget = (total + mandatory) / 2;
  for (auto _ : state) benchmark::DoNotOptimize(context::trim_to_budget(slices, budget));
}
BENCHMARK(BM_trim_to_budget)->Arg(16)->Arg(256)->Arg(4096);

void BM_parse_trace(benchmark::State& state) {
  std::string text = read_file(POCGEN_BENCH_FIXTURES "/traces/fig15_upload.xt");
  for (auto _ : state) benchmark::DoNotOptimize(trace::parse_trace_text(text));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_parse_trace);

}  // namespace

BENCHMARK_MAIN();
