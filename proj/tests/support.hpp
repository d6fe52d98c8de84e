#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pocgen/context.hpp"
#include "pocgen/corpus.hpp"
#include "pocgen/payload.hpp"

namespace pocgen::testing {

/// Absolute path of a file under tests/fixtures.
std::string fixture(const std::string& rel);
/// Absolute path of a file under tests/golden.
std::string golden(const std::string& rel);
std::string corpus_dir();

/// Record of the fixture corpus; throws when absent.
const corpus::CveRecord& record(const std::string& id);

struct Extracted {
  context::VulnerabilityContext vuln;
  context::NavigationContext nav;
};

/// Function-level contexts of a fixture record.
Extracted extract(const std::string& id,
                  context::Granularity granularity = context::Granularity::Function);

/// Harness options running the built phpsub interpreter.
payload::RunOptions harness_options();

std::string phpsub_path();
std::string cli_path();

/// Fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "pocgen-test");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

/// Relative path -> size of every regular file below `root`.
std::map<std::string, std::uintmax_t> snapshot(const std::filesystem::path& root);

struct CommandResult {
  int status = -1;
  std::string out;
};

/// Runs argv without a shell, capturing stdout and stderr together.
CommandResult run_command(const std::vector<std::string>& argv);

/// Token estimate computed independently of the library: ceil(code points / 4).
std::size_t count_tokens(const std::string& s);

}  // namespace pocgen::testing
