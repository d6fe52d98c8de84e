#include "support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <stdexcept>

namespace pocgen::testing {

std::string fixture(const std::string& rel) { return std::string(POCGEN_TEST_FIXTURES) + "/" + rel; }
std::string golden(const std::string& rel) { return std::string(POCGEN_TEST_GOLDEN) + "/" + rel; }
std::string corpus_dir() { return fixture("corpus"); }

const corpus::CveRecord& record(const std::string& id) {
  static const corpus::CorpusLoad load = corpus::load_corpus(corpus_dir());
  for (const auto& r : load.records)
    if (r.id == id) return r;
  throw std::runtime_error("fixture record " + id + " not found");
}

Extracted extract(const std::string& id, context::Granularity granularity) {
  const auto& rec = record(id);
  auto model = context::model_for_record(rec);
  Extracted e;
  e.vuln = context::extract_vuln_context(model, rec, granularity);
  e.nav = context::extract_nav_context(model, e.vuln, granularity);
  return e;
}

std::string phpsub_path() { return POCGEN_TEST_PHPSUB; }
std::string cli_path() { return POCGEN_TEST_CLI; }

payload::RunOptions harness_options() {
  payload::RunOptions o;
  o.command = {phpsub_path(), "--root", "{workspace}", "{script}"};
  o.timeout_ms = 10000;
  return o;
}

TempDir::TempDir(const std::string& tag) {
  std::string tmpl = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
  if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::map<std::string, std::uintmax_t> snapshot(const std::filesystem::path& root) {
  std::map<std::string, std::uintmax_t> out;
  std::error_code ec;
  for (auto it = std::filesystem::recursive_directory_iterator(
           root, std::filesystem::directory_options::skip_permission_denied, ec);
       it != std::filesystem::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    std::error_code fec;
    if (it->is_regular_file(fec))
      out[std::filesystem::relative(it->path(), root).string()] = it->file_size(fec);
    else if (it->is_directory(fec))
      out[std::filesystem::relative(it->path(), root).string() + "/"] = 0;
  }
  return out;
}

CommandResult run_command(const std::vector<std::string>& argv) {
  int fds[2];
  if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
  pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    ::dup2(fds[1], 1);
    ::dup2(fds[1], 2);
    ::close(fds[0]);
    ::close(fds[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execv(args[0], args.data());
    std::_Exit(127);
  }
  ::close(fds[1]);
  CommandResult r;
  char buf[4096];
  ssize_t n;
  while ((n = ::read(fds[0], buf, sizeof buf)) > 0) r.out.append(buf, static_cast<std::size_t>(n));
  ::close(fds[0]);
  int status = 0;
  ::waitpid(pid, &status, 0);
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::size_t count_tokens(const std::string& s) {
  std::size_t cps = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++cps;
  return (cps + 3) / 4;
}

}  // namespace pocgen::testing
