#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "linksyn/corpus.hpp"

namespace testutil {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("linksyn-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline linksyn::QAInstance make_instance(std::string id, std::vector<std::string> kps,
                                         std::string discipline = "Mathematics", int difficulty = 3,
                                         std::string text = "") {
  linksyn::QAInstance q;
  q.id = std::move(id);
  q.text = text.empty() ? "Question about " + (kps.empty() ? std::string("nothing") : kps.front()) : std::move(text);
  q.discipline = std::move(discipline);
  q.difficulty = difficulty;
  q.kps = std::move(kps);
  return q;
}

// Random corpus over a KP alphabet "k0".."k{alphabet-1}".
inline linksyn::Corpus random_corpus(std::mt19937_64& gen, std::size_t instances, std::size_t max_kps,
                                     std::size_t alphabet) {
  const auto& labels = linksyn::default_discipline_labels();
  std::vector<linksyn::QAInstance> out;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t n = 1 + gen() % std::min(max_kps, alphabet);
    std::vector<std::string> kps;
    while (kps.size() < n) {
      std::string k = "k" + std::to_string(gen() % alphabet);
      if (std::find(kps.begin(), kps.end(), k) == kps.end()) kps.push_back(k);
    }
    out.push_back(make_instance("q" + std::to_string(i), kps, labels[gen() % 4], 1 + static_cast<int>(gen() % 5)));
  }
  return linksyn::Corpus(std::move(out), linksyn::DisciplineTaxonomy{});
}

// Fixed 20-node corpus with a ring, chords and uneven repetition, so both
// start laws and most transition rows are non-uniform.
inline linksyn::Corpus toy20_corpus() {
  std::vector<linksyn::QAInstance> out;
  auto kp = [](int i) { return "n" + std::to_string((i + 20) % 20); };
  int id = 0;
  for (int i = 0; i < 20; ++i) {
    for (int r = 0; r <= i % 3; ++r) out.push_back(make_instance("t" + std::to_string(id++), {kp(i), kp(i + 1)}));
    if (i % 2 == 0) out.push_back(make_instance("t" + std::to_string(id++), {kp(i), kp(i + 7), kp(i + 3)}));
    if (i % 5 == 0)
      for (int r = 0; r < 3; ++r) out.push_back(make_instance("t" + std::to_string(id++), {kp(i)}));
  }
  return linksyn::Corpus(std::move(out), linksyn::DisciplineTaxonomy{});
}

}  // namespace testutil
