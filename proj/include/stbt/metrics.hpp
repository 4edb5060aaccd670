#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stbt/rerank.hpp"

namespace stbt {

inline constexpr int kBleuOrder = 4;

/// Sufficient statistics of corpus BLEU-4.
struct BleuStats {
  std::array<std::uint64_t, kBleuOrder> matches{};  // clipped
  std::array<std::uint64_t, kBleuOrder> totals{};   // hypothesis n-grams
  std::uint64_t hyp_length = 0;
  std::uint64_t ref_length = 0;

  BleuStats& operator+=(const BleuStats& o);
};

BleuStats bleu_stats(const Sentence& hyp, const Sentence& ref);

/// Corpus BLEU in [0, 100]. A zero match count at order n counts as
/// 1/(2·totals[n]); orders without hypothesis n-grams are left out of the
/// geometric mean. An empty hypothesis side scores 0.
double bleu(const BleuStats& stats);
double bleu(std::span<const Sentence> hyps, std::span<const Sentence> refs);

struct EvalReport {
  double bleu = 0.0;
  std::size_t sentences = 0;
  DecodeMode mode = DecodeMode::Beam;
  NoisyChannelWeights weights;
  std::string model_hash;
  std::vector<Sentence> hypotheses;  // detokenized
  std::vector<Sentence> references;  // detokenized

  std::string to_json() const;
  std::string to_text() const;
};

EvalReport evaluate_system(const Ensemble& forward, std::span<const SentencePair> test, DecodeMode mode,
                           const RerankContext* ctx, const Detok& detok = {}, unsigned workers = 1);

}  // namespace stbt
