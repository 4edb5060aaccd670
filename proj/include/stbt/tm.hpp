#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stbt/common.hpp"
#include "stbt/corpus.hpp"
#include "stbt/lm.hpp"

namespace stbt {

/// Forward models translate source language to target language; backward
/// models translate target to source.
enum class Direction { Forward, Backward };

std::string_view to_string(Direction d);
Direction parse_direction(std::string_view s);
inline Direction opposite(Direction d) { return d == Direction::Forward ? Direction::Backward : Direction::Forward; }

/// Addresses the NULL source row of a lexical table.
inline constexpr std::string_view kNullToken = "<null>";

struct DecoderSettings {
  int beam = 5;
  int window = 1;  // local reordering radius
  double lm_weight = 0.5;
  int max_candidates = 8;  // target options per source symbol
  double floor = 1e-9;     // probability of unknown symbols and missing entries
};

struct NBestEntry {
  Sentence hypothesis;
  double fwd = 0.0;
  std::optional<double> channel;
  std::optional<double> lm;
  std::optional<double> combined;
};

enum class RankKey { Forward, Combined };

/// Ranked candidates for one source sentence, sorted by the active key
/// (descending) and distinct as token sequences.
struct NBestList {
  Sentence source;
  std::vector<NBestEntry> entries;
  RankKey key = RankKey::Forward;
};

struct TableEntry {
  std::string source;  // kNullToken for the NULL row
  std::string target;
  double prob = 0.0;
};

/// Lexical translation model t(target | source) with a NULL source row, a
/// target-side language model and decoder settings.
class LexModel {
 public:
  LexModel() = default;

  /// Builds a model from explicit entries. Rows are stored as given, not
  /// renormalized.
  static LexModel from_table(Direction direction, std::span<const TableEntry> entries, DecoderSettings settings = {},
                             std::shared_ptr<const NGramLM> lm = nullptr);

  Direction direction() const { return direction_; }
  const DecoderSettings& settings() const { return settings_; }
  const std::shared_ptr<const NGramLM>& lm() const { return lm_; }
  LexModel with_settings(DecoderSettings settings) const;
  LexModel with_lm(std::shared_ptr<const NGramLM> lm) const;

  /// Stored t(target | source), or nullopt when the entry is absent.
  std::optional<double> t(std::string_view source, std::string_view target) const;
  /// Σ over a source row (kNullToken for NULL); 0 for unknown sources.
  double row_sum(std::string_view source) const;
  const std::vector<std::string>& source_symbols() const { return vocab_->source; }
  const std::vector<std::string>& target_symbols() const { return vocab_->target; }
  bool same_vocabulary(const LexModel& other) const;

  /// Additive score for `target` when decoding sentences tagged `tag`.
  void set_tag_bias(const std::string& tag, const std::string& target, double bias);

  std::string serialize() const;
  /// `lm` must match the hash recorded in the text (or be null when none is).
  static LexModel parse(std::string_view text, std::shared_ptr<const NGramLM> lm);
  std::string hash() const { return sha256_hex(serialize()); }
  /// Content hash of the referenced LM, "none" without one.
  std::string lm_hash() const { return lm_ ? lm_->hash() : "none"; }
  /// Reads only the LM reference from serialized text.
  static std::string referenced_lm(std::string_view text);

  // ---- decoder internals ----
  struct Vocab {
    std::vector<std::string> source;  // sorted
    std::vector<std::string> target;  // sorted
    std::unordered_map<std::string, int> source_index;
    std::unordered_map<std::string, int> target_index;
  };
  struct Row {
    std::vector<int> target;       // ascending ids
    std::vector<double> prob;
    std::vector<int> by_prob;      // positions into target/prob, best first
  };
  const Vocab& vocab() const { return *vocab_; }
  /// Rows 0..S-1 follow the source vocabulary; row S is NULL.
  const std::vector<Row>& rows() const { return *rows_; }
  int null_row() const { return static_cast<int>(vocab_->source.size()); }
  /// Stored probability or -1 when absent.
  double lookup(int row, int target) const;
  /// LM ids for target vocabulary ids (empty without an LM).
  const std::vector<int>& lm_ids() const { return lm_ids_; }
  const std::unordered_map<std::string, std::unordered_map<int, double>>& tag_bias() const { return tag_bias_; }

 private:
  friend class Ibm1Trainer;
  static std::shared_ptr<const Vocab> make_vocab(std::vector<std::string> source, std::vector<std::string> target);
  static void index_row(Row& row);
  void bind_lm();

  Direction direction_ = Direction::Forward;
  DecoderSettings settings_;
  std::shared_ptr<const Vocab> vocab_;
  std::shared_ptr<const std::vector<Row>> rows_;
  std::shared_ptr<const NGramLM> lm_;
  std::vector<int> lm_ids_;
  std::unordered_map<std::string, std::unordered_map<int, double>> tag_bias_;
};

struct TrainOptions {
  int iterations = 5;
  std::uint64_t seed = 1;
  Direction direction = Direction::Forward;
  DecoderSettings decoder;
  int lm_order = 3;
  double lm_k = 0.1;
};

/// IBM Model 1 EM with a NULL source word. Identical training pairs are
/// merged into one weighted pair; domain tags are stripped from sources.
class Ibm1Trainer {
 public:
  /// Fresh training with uniform initialization over the target vocabulary.
  explicit Ibm1Trainer(const DataMix& mix);

  /// Continues EM from `init` on `pairs`. Symbols outside the model's
  /// vocabulary are ignored; rows that receive counts are re-estimated and
  /// all other rows keep their values.
  Ibm1Trainer(const LexModel& init, std::span<const SentencePair> pairs);

  /// Training-data log-likelihood Σ_pairs Σ_j ln((1/(l+1)) Σ_i t(y_j | x_i)).
  double log_likelihood() const;

  /// One E-step + M-step. Returns the log-likelihood of the parameters the
  /// step started from.
  double step();

  int iterations_done() const { return iterations_; }

  /// Snapshot of the current table.
  LexModel model(Direction direction, const DecoderSettings& settings, std::shared_ptr<const NGramLM> lm) const;

  /// Unique target sentences with multiplicities, for LM training.
  const std::vector<Sentence>& targets() const { return targets_; }
  const std::vector<std::uint64_t>& target_weights() const { return weights_; }

 private:
  void index_params(bool uniform);
  double expectation(std::vector<double>* counts) const;

  std::shared_ptr<const LexModel::Vocab> vocab_;
  const LexModel* init_ = nullptr;
  std::vector<std::vector<int>> src_;  // row ids (without NULL)
  std::vector<std::vector<int>> tgt_;
  std::vector<Sentence> targets_;
  std::vector<std::uint64_t> weights_;
  // parameter layout
  std::vector<int> param_row_;
  std::vector<int> param_target_;
  std::vector<double> t_;
  std::vector<std::size_t> offsets_;  // per pair: start of its (l+1)·m param ids
  std::vector<int> param_ids_;
  int iterations_ = 0;
  std::shared_ptr<const std::vector<LexModel::Row>> base_rows_;
};

/// Trains a model on the mix: EM on the lexical table and an n-gram LM on the
/// mix targets. `ll_trace`, when given, receives the log-likelihood before
/// every iteration followed by the final one.
LexModel em_train(const DataMix& mix, const TrainOptions& options, std::vector<double>* ll_trace = nullptr);

/// Beam search over target sequences with one target symbol per source
/// position. Step i may consume any unused source position j with
/// |j - i| <= window; the step score is ln t(y|x_j) + lm_weight · ln P_lm(y |
/// history) plus any tag bias. A leading tag is stripped from `x` and selects
/// the bias table. Returns up to n distinct hypotheses; each fwd is the
/// output's best score over all admissible alignments (pair_logprob).
NBestList translate_nbest(const LexModel& m, const Sentence& x, int n);

/// IBM1 marginal Σ_j ln((1/(l+1)) Σ_{i=0..l} t(x_j | y_i)), l = |y|, with y_0
/// the NULL word. `m` must translate the y language into the x language.
double channel_score(const LexModel& m, const Sentence& x, const Sentence& y);

/// Best decoder score of `y` for `x` over all alignments admissible under the
/// window; equals the forward score the decoder assigns the same hypothesis.
double pair_logprob(const LexModel& m, const Sentence& x, const Sentence& y);

void save(const LexModel& m, const std::filesystem::path& path);
LexModel load_lexmodel(const std::filesystem::path& path, std::shared_ptr<const NGramLM> lm);

namespace detail {
using Members = std::span<const LexModel* const>;
/// Shared implementation for single models and probability-averaging ensembles.
NBestList beam_search(Members members, const Sentence& x, int n);
double ibm1_logprob(Members members, const Sentence& x, const Sentence& y);
double viterbi_score(Members members, const Sentence& x, const Sentence& y);
/// ln of the member-averaged t(target | source), floor for missing entries.
double lexical_logprob(Members members, std::string_view source, std::string_view target);
}  // namespace detail

}  // namespace stbt
