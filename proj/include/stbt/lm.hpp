#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stbt/common.hpp"

namespace stbt {

/// Smoothed n-gram language model.
///
/// Each order interpolates its add-k estimate with the next lower order:
///
///   P_m(w | h) = (c(h, w) + k·|V|·P_{m-1}(w | h')) / (c(h) + k·|V|)
///
/// with P_{-1} uniform over V = training symbols ∪ {</s>, <unk>}. At order 1
/// this is plain add-k. A fine-tuned model mixes a base model and an
/// in-domain model over the same vocabulary: (1-α)·P_base + α·P_in.
class NGramLM {
 public:
  static constexpr int kMaxOrder = 8;
  static constexpr int kUnk = 0;
  static constexpr int kEos = 1;
  static constexpr int kBos = 2;

  NGramLM() = default;

  /// `weights` (optional) gives each sentence a multiplicity. A non-null
  /// `vocab` fixes the symbol set; other tokens are counted as <unk>.
  static NGramLM train(std::span<const Sentence> corpus, int order, double k,
                       std::span<const std::uint64_t> weights = {}, const std::vector<std::string>* vocab = nullptr);

  int order() const { return order_; }
  double k() const { return k_; }
  /// Interpolation weight toward the in-domain component (0 for plain models).
  double alpha() const { return alpha_; }
  bool interpolated() const { return in_domain_ != nullptr; }

  /// Training symbols, excluding the <unk>/</s>/<s> specials.
  std::vector<std::string> symbols() const;
  int id(std::string_view token) const;
  /// |V| including </s> and <unk>.
  std::size_t outcome_count() const { return vocab_ ? vocab_->tokens.size() - 1 : 0; }

  /// P(w | history); `history` holds preceding ids, most recent last, and is
  /// padded with <s> when shorter than order - 1.
  double prob(std::span<const int> history, int w) const;

  /// Σ ln P over the tokens and the closing </s>.
  double logprob(const Sentence& s) const;
  double perplexity(std::span<const Sentence> corpus) const;

  /// Interpolates toward a model trained on `in_domain` with this model's
  /// order, k and vocabulary.
  NGramLM finetune(std::span<const Sentence> in_domain, double alpha) const;

  std::string serialize() const;
  static NGramLM parse(std::string_view text);
  /// Content hash of serialize(); computed once per model.
  std::string hash() const;

 private:
  struct Vocab {
    std::vector<std::string> tokens;  // id -> token; ids 0..2 are specials
    std::unordered_map<std::string, int> index;
  };
  struct Counts {
    std::unordered_map<std::uint64_t, std::uint32_t> children;  // (node, word) -> node
    std::unordered_map<std::uint64_t, std::uint64_t> ngrams;    // (node, word) -> count
    std::vector<std::uint64_t> totals;                          // node -> Σ counts
    std::vector<std::uint32_t> parent;
    std::vector<int> word;
    std::uint32_t child(std::uint32_t node, int w) const;
    std::uint32_t add_child(std::uint32_t node, int w);
  };
  static constexpr std::uint32_t kNoNode = 0xFFFFFFFFu;

  static std::shared_ptr<const Vocab> make_vocab(std::vector<std::string> symbols);
  static std::string serialize_counts(const NGramLM& lm);
  void check_order() const;

  int order_ = 0;
  double k_ = 0.0;
  double alpha_ = 0.0;
  std::shared_ptr<const Vocab> vocab_;
  std::shared_ptr<const Counts> counts_;
  std::shared_ptr<const NGramLM> base_;
  std::shared_ptr<const NGramLM> in_domain_;

  struct HashCache {
    std::once_flag once;
    std::string value;
  };
  std::shared_ptr<HashCache> hash_cache_ = std::make_shared<HashCache>();
};

NGramLM train_lm(std::span<const Sentence> corpus, int order, double k);
double logprob(const NGramLM& lm, const Sentence& s);
double perplexity(const NGramLM& lm, std::span<const Sentence> corpus);
NGramLM finetune_lm(const NGramLM& base, std::span<const Sentence> in_domain, double alpha);

void save(const NGramLM& lm, const std::filesystem::path& path);
NGramLM load_lm(const std::filesystem::path& path);

}  // namespace stbt
