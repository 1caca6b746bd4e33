#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.h"

namespace ookb::testing {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;

  std::vector<std::string> lines() const {
    std::vector<std::string> v;
    std::istringstream in(out);
    for (std::string l; std::getline(in, l);) v.push_back(l);
    return v;
  }
  /// Id printed on the last "<kind> <id>" line for `kind`.
  std::string id_of(const std::string& kind) const {
    std::string id;
    for (const auto& l : lines()) {
      if (l.rfind(kind + " ", 0) == 0) id = l.substr(kind.size() + 1);
    }
    return id;
  }
};

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

/// Runs `binary args...` with `input` on stdin.
inline CliResult run_binary(const std::string& binary, const std::vector<std::string>& args,
                            const std::string& input = "") {
  static int counter = 0;
  const auto base = std::filesystem::temp_directory_path() /
                    ("ookb-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  const auto in_path = base.string() + ".in";
  const auto err_path = base.string() + ".err";
  write_text(in_path, input);
  std::string cmd = shell_quote(binary);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " < " + shell_quote(in_path) + " 2> " + shell_quote(err_path);
  CliResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = read_text(err_path);
  std::filesystem::remove(in_path);
  std::filesystem::remove(err_path);
  return r;
}

}  // namespace ookb::testing
