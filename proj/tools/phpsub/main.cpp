// Runs a script of the supported PHP subset for one simulated request and
// optionally writes a function trace.

#include <iostream>

#include "CLI11.hpp"
#include "pocgen/interp.hpp"

namespace {

std::pair<std::string, std::string> split_pair(const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos) throw CLI::ValidationError("expected name=value, got " + kv);
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Run a PHP-subset script for one simulated request"};
  std::string script;
  pocgen::interp::Options opt;
  pocgen::interp::Request req;
  std::vector<std::string> get, post, cookie, server, files;
  std::string trace_out;
  app.add_option("script", script, "Script path relative to --root (or a file directly)")->required();
  app.add_option("--root", opt.root, "Application root; nothing outside it is read");
  app.add_option("--method", req.method, "Request method");
  app.add_option("--get", get, "Query parameter name=value");
  app.add_option("--post", post, "Body parameter name=value");
  app.add_option("--cookie", cookie, "Cookie name=value");
  app.add_option("--server", server, "$_SERVER entry NAME=value");
  app.add_option("--file", files, "Upload field=path:name:type");
  app.add_option("--trace", trace_out, "Write a computerized function trace here");
  app.add_option("--trace-prefix", opt.trace_prefix, "Directory written before file names in the trace");
  app.add_option("--max-steps", opt.max_steps, "Statement executions before aborting");
  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& kv : get) req.get.insert(split_pair(kv));
    for (const auto& kv : post) req.post.insert(split_pair(kv));
    for (const auto& kv : cookie) req.cookie.insert(split_pair(kv));
    for (const auto& kv : server) req.server.insert(split_pair(kv));
    for (const auto& spec : files) {
      auto [field, rest] = split_pair(spec);
      auto c1 = rest.find(':');
      auto c2 = rest.find(':', c1 == std::string::npos ? rest.size() : c1 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos)
        throw CLI::ValidationError("--file expects field=path:name:type");
      req.files[field] = {rest.substr(c1 + 1, c2 - c1 - 1), rest.substr(c2 + 1),
                          pocgen::fsutil::read_file(rest.substr(0, c1))};
    }
    if (!post.empty() || !files.empty()) req.method = req.method == "GET" ? "POST" : req.method;
    opt.trace = !trace_out.empty();
    auto result = pocgen::interp::run(script, req, opt);
    std::cout << result.output;
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    if (!result.error.empty()) std::cerr << "fatal: " << result.error << "\n";
    if (opt.trace) pocgen::fsutil::write_file(trace_out, pocgen::interp::render_trace(result));
    return result.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "phpsub: " << e.what() << "\n";
    return 2;
  }
}
