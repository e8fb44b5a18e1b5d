#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "statefuzz/input.h"

namespace testing_support {

inline statefuzz::FuzzInput Ftp(std::initializer_list<std::string> lines) {
  statefuzz::FuzzInput in;
  for (const auto& l : lines) in.messages.push_back(statefuzz::ToBytes(l + "\r\n"));
  return in;
}

inline statefuzz::FuzzInput Raw(std::initializer_list<std::string> msgs) {
  statefuzz::FuzzInput in;
  for (const auto& m : msgs) in.messages.push_back(statefuzz::ToBytes(m));
  return in;
}

inline std::vector<uint8_t> RandomBytes(std::mt19937_64& rng, size_t n) {
  std::vector<uint8_t> out(n);
  for (auto& b : out) b = static_cast<uint8_t>(rng());
  return out;
}

inline std::filesystem::path SourceDir() { return STATEFUZZ_SOURCE_DIR; }
inline std::filesystem::path SeedDir(const std::string& target) {
  return SourceDir() / "seeds" / target;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path ScratchDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("statefuzz-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string ReadText(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout only
};

inline CommandResult RunCommand(const std::string& cmd) {
  CommandResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::string LastLine(const std::string& text) {
  std::string t = text;
  while (!t.empty() && t.back() == '\n') t.pop_back();
  const auto pos = t.rfind('\n');
  return pos == std::string::npos ? t : t.substr(pos + 1);
}

}  // namespace testing_support
