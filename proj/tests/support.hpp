#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <optional>
#include <sys/wait.h>
#include <unistd.h>

#include "pretext_forge/corpus.hpp"
#include "pretext_forge/synth.hpp"

namespace pforge::test {

inline std::filesystem::path source_dir() { return PFORGE_SOURCE_DIR; }
inline std::filesystem::path fixture_dir() { return source_dir() / "data" / "fixture"; }

inline Vocabulary default_vocab() { return parse_vocabulary(synth::kDefaultVocabulary); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "pforge") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

/// In-memory synthetic corpus with the given split seed applied.
inline Corpus synthetic_corpus(std::size_t n, std::uint64_t seed, std::optional<std::uint64_t> split_seed = {}) {
  Corpus c;
  c.root = ".";
  c.records = synth::make_records(static_cast<int>(n), seed, default_vocab());
  if (split_seed) {
    std::vector<std::string> ids;
    for (const auto& r : c.records) ids.push_back(r.id);
    const auto sp = split_corpus(ids, *split_seed);
    for (auto& r : c.records) r.split = sp.at(r.id);
  }
  return c;
}

struct CommandResult {
  int exit_code = -1;
  std::string out, err;
};

/// Runs a shell command, capturing standard output and standard error.
inline CommandResult run_command(const std::string& cmd) {
  TempDir tmp("pforge-cmd");
  const auto out = tmp / "out", err = tmp / "err";
  const std::string full = cmd + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(full.c_str());
  CommandResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text_file(out);
  r.err = read_text_file(err);
  return r;
}

inline std::string cli() { return std::string("'") + PFORGE_CLI + "'"; }

}  // namespace pforge::test
