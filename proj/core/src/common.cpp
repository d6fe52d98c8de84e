#include "pocgen/common.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace pocgen {

std::string to_string(Cwe cwe) {
  switch (cwe) {
    case Cwe::CWE78: return "CWE-78";
    case Cwe::CWE79: return "CWE-79";
    case Cwe::CWE89: return "CWE-89";
    case Cwe::CWE352: return "CWE-352";
    case Cwe::CWE434: return "CWE-434";
  }
  return "CWE-?";
}

std::optional<Cwe> parse_cwe(std::string_view t) {
  std::string s = text::trim(t);
  std::string up;
  for (char c : s) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (text::starts_with(up, "CWE-")) up = up.substr(4);
  else if (text::starts_with(up, "CWE")) up = up.substr(3);
  if (up == "78") return Cwe::CWE78;
  if (up == "79") return Cwe::CWE79;
  if (up == "89") return Cwe::CWE89;
  if (up == "352") return Cwe::CWE352;
  if (up == "434") return Cwe::CWE434;
  return std::nullopt;
}

std::string cwe_title(Cwe cwe) {
  switch (cwe) {
    case Cwe::CWE78: return "OS Command Injection";
    case Cwe::CWE79: return "Cross-site Scripting";
    case Cwe::CWE89: return "SQL Injection";
    case Cwe::CWE352: return "Cross-Site Request Forgery";
    case Cwe::CWE434: return "Unrestricted File Upload";
  }
  return "";
}

std::size_t estimate_tokens(std::string_view s) {
  std::size_t chars = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++chars;
  return (chars + 3) / 4;
}

std::int64_t Ratio::tenths() const {
  if (den <= 0 || num < 0) throw ContractViolation("ratio must be non-negative with a positive denominator");
  return (2000 * num + den) / (2 * den);
}

std::string Ratio::percent() const {
  std::int64_t t = tenths();
  return std::to_string(t / 10) + "." + std::to_string(t % 10) + "%";
}

Ratio Ratio::reduced() const {
  std::int64_t g = std::gcd(num, den);
  return g == 0 ? *this : Ratio{num / g, den / g};
}

namespace text {

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < s.size()) out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

bool ends_with(std::string_view s, std::string_view p) {
  return s.size() >= p.size() && s.substr(s.size() - p.size()) == p;
}

bool contains(std::string_view h, std::string_view n) { return h.find(n) != std::string_view::npos; }

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

bool glob_match(std::string_view pattern, std::string_view value) {
  std::string p = to_lower(pattern), v = to_lower(value);
  std::size_t pi = 0, vi = 0, star = std::string::npos, mark = 0;
  while (vi < v.size()) {
    if (pi < p.size() && (p[pi] == '?' || p[pi] == v[vi])) {
      ++pi;
      ++vi;
    } else if (pi < p.size() && p[pi] == '*') {
      star = pi++;
      mark = vi;
    } else if (star != std::string::npos) {
      pi = star + 1;
      vi = ++mark;
    } else {
      return false;
    }
  }
  while (pi < p.size() && p[pi] == '*') ++pi;
  return pi == p.size();
}

std::string line_range(std::string_view content, int first, int last) {
  auto lines = split_lines(content);
  std::vector<std::string> picked;
  for (int l = std::max(first, 1); l <= last && l <= static_cast<int>(lines.size()); ++l)
    picked.push_back(lines[static_cast<std::size_t>(l - 1)]);
  return join(picked, "\n");
}

int count_lines(std::string_view content) { return static_cast<int>(split_lines(content).size()); }

}  // namespace text

namespace fsutil {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed: " + path);
}

}  // namespace fsutil

}  // namespace pocgen

#include "pocgen/data.hpp"

namespace pocgen::data {

std::string_view get(std::string_view name) {
  const auto& files = all();
  auto it = files.find(std::string(name));
  if (it == files.end()) throw Error("unknown bundled data file: " + std::string(name));
  return it->second;
}

}  // namespace pocgen::data
