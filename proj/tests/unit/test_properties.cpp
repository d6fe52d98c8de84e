#include "doctest.h"

#include <random>

#include "pocgen/context.hpp"
#include "pocgen/interp.hpp"
#include "pocgen/payload.hpp"
#include "pocgen/poc.hpp"
#include "pocgen/trace.hpp"
#include "support.hpp"

using namespace pocgen;
using context::CodeSlice;

namespace {

std::string random_text(std::mt19937& rng, std::size_t max_len) {
  static const std::vector<std::string> alphabet = {"a", "b", " ", "\n", "$x", ";", "\xc3\xa9", "\xe2\x82\xac", "{", "}"};
  std::size_t n = rng() % (max_len + 1);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += alphabet[rng() % alphabet.size()];
  return s;
}

std::vector<CodeSlice> random_slices(std::mt19937& rng) {
  std::vector<CodeSlice> out;
  std::size_t n = rng() % 9;
  for (std::size_t i = 0; i < n; ++i) {
    CodeSlice s;
    s.path = "f" + std::to_string(rng() % 3) + ".php";
    s.first_line = static_cast<int>(rng() % 50) + 1;
    s.last_line = s.first_line + static_cast<int>(rng() % 10);
    s.kind = (rng() % 2) ? "function" : "toplevel";
    s.text = random_text(rng, 120);
    s.mandatory = rng() % 3 == 0;
    s.relevance = static_cast<double>(rng() % 4) / 4.0;
    out.push_back(s);
  }
  return out;
}

std::size_t cost(const CodeSlice& s) {
  return testing::count_tokens("// " + s.path + ":" + std::to_string(s.first_line) + "-" +
                               std::to_string(s.last_line) + " (" + s.kind + ")\n" + s.text + "\n");
}

bool same_slice(const CodeSlice& a, const CodeSlice& b) {
  return a.path == b.path && a.first_line == b.first_line && a.last_line == b.last_line && a.text == b.text &&
         a.mandatory == b.mandatory && a.relevance == b.relevance && a.kind == b.kind;
}

/// Indices of `out` within `in`, requiring an order-preserving subsequence.
std::optional<std::vector<std::size_t>> embed(const std::vector<CodeSlice>& in, const std::vector<CodeSlice>& out) {
  std::vector<std::size_t> idx;
  std::size_t j = 0;
  for (const auto& s : out) {
    while (j < in.size() && !same_slice(in[j], s)) ++j;
    if (j == in.size()) return std::nullopt;
    idx.push_back(j++);
  }
  return idx;
}

}  // namespace

TEST_CASE("trim_to_budget properties over randomized slice sets") {
  std::mt19937 rng(20240501);
  int trimmed = 0, rejected = 0;
  for (int iter = 0; iter < 2000; ++iter) {
    CAPTURE(iter);
    auto slices = random_slices(rng);
    std::size_t total = 0, mandatory = 0;
    for (const auto& s : slices) {
      CHECK(context::slice_tokens(s) == cost(s));
      total += cost(s);
      if (s.mandatory) mandatory += cost(s);
    }
    const std::size_t budget = 1 + rng() % (total + 20);
    if (mandatory > budget) {
      ++rejected;
      try {
        context::trim_to_budget(slices, budget);
        FAIL("mandatory overflow accepted");
      } catch (const context::BudgetExceeded& e) {
        CHECK(e.overshoot() == mandatory - budget);
      }
      continue;
    }
    auto out = context::trim_to_budget(slices, budget);
    std::size_t used = 0;
    for (const auto& s : out) used += cost(s);
    CHECK(used <= budget);

    auto idx = embed(slices, out);
    REQUIRE(idx.has_value());
    std::vector<bool> kept(slices.size(), false);
    for (std::size_t i : *idx) kept[i] = true;
    for (std::size_t i = 0; i < slices.size(); ++i)
      if (slices[i].mandatory) CHECK(kept[i]);

    // Dropped slices rank no higher than kept optional ones (relevance, then later first).
    for (std::size_t d = 0; d < slices.size(); ++d) {
      if (kept[d]) continue;
      for (std::size_t k = 0; k < slices.size(); ++k) {
        if (!kept[k] || slices[k].mandatory) continue;
        bool d_first = slices[d].relevance < slices[k].relevance ||
                       (slices[d].relevance == slices[k].relevance && d > k);
        CHECK(d_first);
      }
    }
    // Nothing is dropped without need: putting back the last dropped slice overflows.
    if (out.size() < slices.size()) {
      ++trimmed;
      std::size_t cheapest_need = SIZE_MAX;
      for (std::size_t d = 0; d < slices.size(); ++d)
        if (!kept[d]) {
          bool last = true;
          for (std::size_t e = 0; e < slices.size(); ++e) {
            if (kept[e] || e == d) continue;
            bool e_after = slices[e].relevance > slices[d].relevance ||
                           (slices[e].relevance == slices[d].relevance && e < d);
            if (e_after) last = false;
          }
          if (last) cheapest_need = used + cost(slices[d]);
        }
      CHECK(cheapest_need > budget);
    } else {
      CHECK(total <= budget);
    }
    auto twice = context::trim_to_budget(out, budget);
    REQUIRE(twice.size() == out.size());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(same_slice(twice[i], out[i]));
  }
  CHECK(trimmed > 100);
  CHECK(rejected > 100);
  CHECK_THROWS_AS(context::trim_to_budget({}, 0), ContractViolation);
}

TEST_CASE("url encoding round-trips arbitrary bytes") {
  std::mt19937 rng(11);
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    std::size_t n = rng() % 40;
    for (std::size_t k = 0; k < n; ++k) s += static_cast<char>(rng() % 256);
    std::string enc = poc::url_encode(s);
    for (unsigned char c : enc) CHECK((std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '%' || c == '+'));
    CHECK(poc::url_decode(enc) == s);
  }
}

TEST_CASE("ratio rounding agrees with integer arithmetic") {
  std::mt19937 rng(3);
  for (int i = 0; i < 2000; ++i) {
    std::int64_t den = 1 + static_cast<std::int64_t>(rng() % 1000);
    std::int64_t num = static_cast<std::int64_t>(rng() % static_cast<std::uint32_t>(den + 1));
    // tenths of a percent = num * 1000 / den, rounded half up
    std::int64_t want = (num * 2000 + den) / (2 * den);
    CHECK(Ratio{num, den}.tenths() == want);
  }
}

TEST_CASE("php_quote survives the interpreter") {
  testing::TempDir dir;
  std::mt19937 rng(5);
  static const std::string pool = "ab'\\\"$\n{}<>? x";
  std::string script = "<?php\n";
  std::vector<std::string> values;
  for (int i = 0; i < 300; ++i) {
    std::string v;
    std::size_t n = rng() % 12;
    for (std::size_t k = 0; k < n; ++k) v += pool[rng() % pool.size()];
    values.push_back(v);
    script += "echo strlen(" + payload::php_quote(v) + ") . ':' . " + payload::php_quote(v) + " . \"\\x00\";\n";
  }
  fsutil::write_file((dir.path() / "q.php").string(), script);
  interp::Options opt;
  opt.root = dir.str();
  auto r = interp::run("q.php", {}, opt);
  REQUIRE(r.error.empty());
  std::string expected;
  for (const auto& v : values) expected += std::to_string(v.size()) + ":" + v + std::string(1, '\0');
  CHECK(r.output == expected);
}

TEST_CASE("rendered traces parse back to the same events") {
  std::mt19937 rng(9);
  for (int iter = 0; iter < 300; ++iter) {
    trace::ExecutionTrace t;
    t.version = "3.1.6";
    t.file_format = "4";
    int depth = 1, number = 0;
    t.events.push_back({1, number++, "{main}", trace::CallKind::User, "", "/w/index.php", 0, 0.0001, 1000});
    std::size_t n = rng() % 20;
    for (std::size_t i = 0; i < n; ++i) {
      int d = 2 + static_cast<int>(rng() % static_cast<unsigned>(depth));
      trace::Event e;
      e.depth = d;
      e.number = number++;
      switch (rng() % 3) {
        case 0: e.function = "strlen"; e.kind = trace::CallKind::Builtin; break;
        case 1: e.function = "helper" + std::to_string(rng() % 4); e.kind = trace::CallKind::User; break;
        default: e.function = "include"; e.kind = trace::CallKind::Include; e.include_file = "/w/inc.php"; break;
      }
      e.file = "/w/index.php";
      e.line = 1 + static_cast<int>(rng() % 40);
      e.time = 0.0001 * static_cast<double>(e.number + 1);
      e.memory = 1000 + e.number * 64;
      t.events.push_back(e);
      depth = d;
    }
    auto back = trace::parse_trace_text(trace::render(t));
    CHECK(back.warnings.empty());
    REQUIRE(back.events.size() == t.events.size());
    for (std::size_t i = 0; i < t.events.size(); ++i) {
      CHECK(back.events[i].depth == t.events[i].depth);
      CHECK(back.events[i].function == t.events[i].function);
      CHECK(back.events[i].kind == t.events[i].kind);
      CHECK(back.events[i].include_file == t.events[i].include_file);
      CHECK(back.events[i].line == t.events[i].line);
    }
  }
}
