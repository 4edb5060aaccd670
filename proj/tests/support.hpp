#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "stbt/common.hpp"
#include "stbt/corpus.hpp"
#include "stbt/synth.hpp"

namespace stbt::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& label) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("stbt-" + label + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Sentence of `len` tokens drawn from the first `vocab` letters of `alphabet`.
inline Sentence random_sentence(Rng& rng, std::size_t len, std::size_t vocab, const std::string& alphabet = "abcdefgh") {
  Sentence s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(std::string(1, alphabet[uniform_index(rng, vocab)]));
  return s;
}

inline TaggedDataset parallel_dataset(std::vector<SentencePair> pairs, std::string tag = std::string(tags::kInDomain),
                                      int upsample = 1, std::string name = "bitext") {
  TaggedDataset ds;
  ds.name = std::move(name);
  ds.side = Side::Parallel;
  ds.tag = std::move(tag);
  ds.pairs = std::move(pairs);
  ds.upsample = upsample;
  return ds;
}

/// Small synthetic bundle that trains in well under a second.
inline SynthBundle tiny_bundle(std::uint64_t seed = 1) {
  SynthSpec spec = default_synth_spec();
  spec.vocab_size = 30;
  spec.max_length = 6;
  spec.seed = seed;
  spec.derive();
  SynthSizes sizes;
  sizes.parallel = 200;
  sizes.mono_source = 150;
  sizes.mono_target = 150;
  sizes.dev = 40;
  sizes.test = 40;
  return gen_corpora(spec, sizes);
}

}  // namespace stbt::testing
