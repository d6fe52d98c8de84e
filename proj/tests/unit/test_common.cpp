#include "doctest.h"

#include "pocgen/common.hpp"
#include "support.hpp"

using namespace pocgen;

TEST_CASE("ratio tenths round half up") {
  CHECK(Ratio{21, 100}.tenths() == 210);
  CHECK(Ratio{34, 100}.tenths() == 340);
  CHECK(Ratio{1, 3}.tenths() == 333);
  CHECK(Ratio{2, 3}.tenths() == 667);
  // 1/16 = 6.25% -> 62.5 tenths -> 63
  CHECK(Ratio{1, 16}.tenths() == 63);
  CHECK(Ratio{0, 7}.tenths() == 0);
  CHECK(Ratio{21, 100}.percent() == "21.0%");
  CHECK(Ratio{1, 3}.percent() == "33.3%");
  CHECK(Ratio{7, 7}.percent() == "100.0%");
}

TEST_CASE("ratio reduced keeps the value") {
  Ratio r = Ratio{30, 120}.reduced();
  CHECK(r.num == 1);
  CHECK(r.den == 4);
}

TEST_CASE("cwe parsing accepts the documented spellings") {
  CHECK(parse_cwe("CWE-79") == Cwe::CWE79);
  CHECK(parse_cwe("CWE79") == Cwe::CWE79);
  CHECK(parse_cwe("352") == Cwe::CWE352);
  CHECK_FALSE(parse_cwe("CWE-22").has_value());
  CHECK_FALSE(parse_cwe("").has_value());
  for (Cwe c : kAllCwes) CHECK(parse_cwe(to_string(c)) == c);
}

TEST_CASE("estimate_tokens counts code points") {
  CHECK(estimate_tokens("") == 0);
  CHECK(estimate_tokens("abcd") == 1);
  CHECK(estimate_tokens("abcde") == 2);
  // four two-byte characters
  CHECK(estimate_tokens("\xc3\xa9\xc3\xa9\xc3\xa9\xc3\xa9") == 1);
  for (const char* s : {"x", "hello world", "\xe2\x82\xac uro", "<?php echo 1;"})
    CHECK(estimate_tokens(s) == testing::count_tokens(s));
}

TEST_CASE("text helpers") {
  CHECK(text::line_range("a\nb\nc\nd", 2, 3) == "b\nc");
  CHECK(text::count_lines("a\nb\n") == 2);
  CHECK(text::glob_match("delete_*", "DELETE_ratings_log"));
  CHECK(text::glob_match("re?et", "reset"));
  CHECK_FALSE(text::glob_match("delete_*", "load_ratings"));
  CHECK(text::replace_all("aXbXc", "X", "--") == "a--b--c");
  CHECK(text::trim("  a b \n") == "a b");
}
