#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stbt/ensemble.hpp"
#include "stbt/lm.hpp"
#include "stbt/subword.hpp"

namespace stbt {

/// Noisy-channel weights; both lie in [0, 3].
struct NoisyChannelWeights {
  double lambda1 = 0.0;  // channel (backward model) weight
  double lambda2 = 0.0;  // language model weight

  friend bool operator==(const NoisyChannelWeights&, const NoisyChannelWeights&) = default;
};

inline constexpr double kMaxLambda = 3.0;
inline constexpr int kDefaultNBest = 50;

void validate(const NoisyChannelWeights& w);

/// fwd + λ1·channel + λ2·lm. Non-finite inputs are a DataError.
double combined_score(double fwd, double channel, double lm, const NoisyChannelWeights& w);

/// Fills the channel and lm slots and re-sorts by combined score, keeping the
/// prior order on exact ties. `backward` translates hypotheses back into the
/// source language.
NBestList rerank(NBestList list, const Ensemble& backward, const NGramLM& lm, const NoisyChannelWeights& w);
NBestList rerank(NBestList list, const LexModel& backward, const NGramLM& lm, const NoisyChannelWeights& w);

/// Only re-sorts; channel and lm slots must already be filled.
NBestList resort(NBestList list, const NoisyChannelWeights& w);

enum class DecodeMode { Beam, Rerank };

std::string_view to_string(DecodeMode m);
DecodeMode parse_decode_mode(std::string_view s);

/// What reranked decoding needs besides the forward model.
struct RerankContext {
  std::shared_ptr<const Ensemble> backward;
  std::shared_ptr<const NGramLM> lm;
  NoisyChannelWeights weights;
  int nbest = kDefaultNBest;
};

/// Top-1 output. Rerank mode requires `ctx` with a backward model and an LM.
Sentence decode_best(const Ensemble& forward, const Sentence& x, DecodeMode mode, const RerankContext* ctx);

/// decode_best over many sentences; output order equals input order.
std::vector<Sentence> decode_all(const Ensemble& forward, std::span<const Sentence> sources, DecodeMode mode,
                                 const RerankContext* ctx, unsigned workers = 1);

/// Output-side detokenization applied before BLEU: BPE decoding under a
/// policy, then whitespace retokenization.
struct Detok {
  const BpeModel* bpe = nullptr;
  DetokPolicy policy = DetokPolicy::SpaceJoined;

  Sentence operator()(const Sentence& s) const;
};

struct LambdaTrial {
  NoisyChannelWeights weights;
  double bleu = 0.0;
};

struct TuneResult {
  NoisyChannelWeights weights;
  double bleu = 0.0;
  std::vector<LambdaTrial> trials;
};

/// Random search for λ on a tuning set. Trial 0 is (0, 0); trial i ≥ 1 draws
/// both weights uniformly from [0, 3] with a seed derived from (seed, i). The
/// best dev BLEU of reranked top-1 outputs wins; ties go to the earlier trial.
TuneResult tune_lambdas(std::span<const SentencePair> dev, const Ensemble& forward, const Ensemble& backward,
                        const NGramLM& lm, int trials, std::uint64_t seed, int nbest = kDefaultNBest,
                        const Detok& detok = {}, unsigned workers = 1);

/// N-best interchange: one tab-separated record per candidate
///   sent_id  rank  hypothesis  fwd  channel  lm  combined
/// with "-" for unset scores. Ranks count from 0 within a sentence.
void write_nbest(const std::filesystem::path& path, std::span<const NBestList> lists);
std::string format_nbest(std::span<const NBestList> lists);
/// Sources are left empty; entries keep file order.
std::vector<NBestList> parse_nbest(std::string_view text);
std::vector<NBestList> read_nbest(const std::filesystem::path& path);

}  // namespace stbt
