#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stbt/common.hpp"

namespace stbt {

inline constexpr std::string_view kDefaultJoiner = "@@";

/// How decoded words are joined. Unspaced concatenates every word, which is
/// the post-processing used for scripts written without spaces.
enum class DetokPolicy { SpaceJoined, Unspaced };

DetokPolicy parse_detok_policy(std::string_view s);

/// Learned byte-pair merges over Unicode code points.
///
/// Tokens in `reserved`, and every `<...>` tag, are never split or merged.
/// Continuation pieces of a word carry the joiner as a prefix.
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;
  std::size_t vocab_size_target = 0;
  std::string joiner{kDefaultJoiner};
  std::set<std::string> reserved;

  bool is_reserved(std::string_view token) const;
};

/// Symbol-inventory size after each merge while learning; entry 0 is the
/// character inventory.
struct BpeLearnTrace {
  std::vector<std::size_t> inventory;
};

/// Greedy merge learning. Repeatedly merges the most frequent adjacent pair
/// (ties: smallest (left, right)) until the inventory reaches `vocab_size` or
/// the best pair occurs fewer than two times. A pair whose concatenation is
/// already in the inventory is skipped, so each merge adds exactly one symbol.
BpeModel learn_bpe(const std::vector<Sentence>& corpus, std::size_t vocab_size,
                   std::string joiner = std::string(kDefaultJoiner), std::set<std::string> reserved = {},
                   BpeLearnTrace* trace = nullptr);

Sentence encode(const Sentence& s, const BpeModel& model);

/// Encoder with the merge ranks indexed once; use it for bulk encoding.
/// Holds a reference to the model.
class BpeEncoder {
 public:
  explicit BpeEncoder(const BpeModel& model);
  Sentence encode(const Sentence& s) const;
  std::vector<std::string> segment(std::string_view word) const;

 private:
  const BpeModel* model_;
  std::unordered_map<std::string, int> rank_;
};

/// Splits one word into pieces (without joiner prefixes).
std::vector<std::string> segment_word(std::string_view word, const BpeModel& model);

std::string decode(const Sentence& s, const BpeModel& model, DetokPolicy policy = DetokPolicy::SpaceJoined);

std::string serialize(const BpeModel& model);
BpeModel parse_bpe(std::string_view text);
void save(const BpeModel& model, const std::filesystem::path& path);
BpeModel load_bpe(const std::filesystem::path& path);

}  // namespace stbt
