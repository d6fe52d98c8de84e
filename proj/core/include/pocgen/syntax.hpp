#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pocgen::syntax {

/// Something structurally interesting seen while scanning sink output.
/// HTML: "tag:<name>", "attr:<name>", "url:javascript", "comment-close".
/// SQL: "quote-breakout", "comment", "keyword:<word>", "statement-end".
/// Shell: "quote-breakout", "metachar:<c>", "substitution".
struct Event {
  std::string name;
  std::size_t pos = 0;
};

struct Scan {
  /// Descriptor of the context at the end of the text (see taxonomy()).
  std::string descriptor;
  std::string tag;        // HTML: enclosing tag name
  std::string attribute;  // HTML: enclosing attribute name
  std::vector<Event> events;
};

enum class Family { Html, Sql, Shell, None };

Scan scan_html(std::string_view text);
Scan scan_sql(std::string_view text);
Scan scan_shell(std::string_view text);
Scan scan(Family family, std::string_view text);

Family family_of(std::string_view descriptor);

struct DescriptorInfo {
  std::string id;
  std::string description;
};

/// Every descriptor the extractor may assign, with a one-line description.
const std::vector<DescriptorInfo>& taxonomy();
std::string describe(std::string_view descriptor);

/// Rules deciding whether a payload reaching a sink in a given context is
/// executable, loaded from the bundled syntax_matchers.json.
struct Matcher {
  std::string descriptor;
  /// Event-name prefixes; the payload is executable when any one of them
  /// occurs inside the payload region.
  std::vector<std::string> any_of;
  /// Tag names counting for a "tag:" rule.
  std::vector<std::string> active_tags;
};

const Matcher& matcher_for(std::string_view descriptor);

struct Verdict {
  bool executable = false;
  std::string reason;
};

/// Decides whether `fragment` (the full sink input) carries the payload
/// occupying [begin, end) in executable form for `descriptor`.
Verdict executable(std::string_view descriptor, std::string_view fragment, std::size_t begin, std::size_t end);

}  // namespace pocgen::syntax
