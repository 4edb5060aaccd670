#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stbt/augment.hpp"
#include "stbt/ensemble.hpp"
#include "stbt/rerank.hpp"
#include "stbt/tm.hpp"

namespace stbt {

/// One point of the search space.
struct TrialConfig {
  int em_iterations = 5;
  int lm_order = 3;
  double lm_k = 0.1;
  double lm_weight = 0.5;
  int window = 1;
  int beam = 5;
  int up_bitext = 3;
  int up_st = 1;
  int up_bt = 1;
  std::uint64_t seed = 1;

  TrainOptions train_options(Direction direction) const;
  Upsampling upsampling() const { return {up_bitext, up_st, up_bt}; }
  std::string to_json() const;
  friend bool operator==(const TrialConfig&, const TrialConfig&) = default;
};

/// Configuration used wherever no search runs (initial models, baselines).
TrialConfig default_config();

/// Finite value lists per dimension. Defaults map the transformer grid onto
/// the model's knobs; upsampling ratios and seeds follow the original grid.
struct SearchSpace {
  std::vector<int> em_iterations{4, 6, 8};
  std::vector<int> lm_order{2, 3};
  std::vector<double> lm_k{0.01, 0.05, 0.1, 0.5};
  std::vector<double> lm_weight{0.0, 0.25, 0.5, 1.0};
  std::vector<int> window{0, 1};
  std::vector<int> beam{3, 5, 8};
  std::vector<int> up_bitext{1, 2, 3, 4, 6, 8, 12, 16, 20, 32, 40, 64};
  std::vector<int> up_st{1, 2, 3, 4, 6, 8, 9};
  std::vector<int> up_bt{1, 2, 3, 4, 6, 8, 9};
  std::vector<std::uint64_t> seeds = default_seeds();

  static std::vector<std::uint64_t> default_seeds();
  void validate() const;
  std::string to_json() const;
  /// Missing keys keep their defaults.
  static SearchSpace from_json(std::string_view text);
};

inline constexpr int kDefaultTrials = 30;

/// n configs drawn uniformly per dimension (in declaration order) from a
/// stream derived from `seed`. Duplicates are allowed.
std::vector<TrialConfig> sample_configs(const SearchSpace& space, int n, std::uint64_t seed);

/// Patience-based stopping on a sequence of values where lower is better.
class EarlyStopper {
 public:
  static constexpr int kNever = std::numeric_limits<int>::max();

  explicit EarlyStopper(int patience = 2);
  /// Records the next value; returns true when training should stop.
  bool observe(double value);
  /// 0-based index of the best value so far.
  std::size_t best_index() const { return best_index_; }
  double best_value() const { return best_; }

 private:
  int patience_;
  int bad_ = 0;
  std::size_t seen_ = 0;
  std::size_t best_index_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

/// The datasets of one training direction, before upsampling.
struct TrainingData {
  TaggedDataset bitext;
  std::optional<TaggedDataset> st;
  std::optional<TaggedDataset> bt;

  DataMix mix(const Upsampling& upsamples) const;
  /// Same data for the opposite direction: every dataset swapped, each tag
  /// moving to the new source side.
  TrainingData swapped() const;
};

struct TrialOptions {
  Direction direction = Direction::Forward;
  int patience = 2;
  Detok detok;
};

struct TrialResult {
  std::size_t index = 0;
  TrialConfig config;
  std::shared_ptr<const LexModel> model;
  std::vector<double> dev_perplexity;  // after each EM iteration
  int iterations_run = 0;
  std::size_t checkpoint = 0;  // EM iterations in the returned model
  double bleu = 0.0;           // dev BLEU with beam decoding
  std::vector<Sentence> dev_output;

  std::string to_json() const;
};

/// IBM1 perplexity exp(-Σ ln P(y | x) / Σ |y|) of the model on `dev`.
double dev_perplexity(const LexModel& m, std::span<const SentencePair> dev);

/// Trains one model; after each EM iteration the dev perplexity is checked
/// and training stops once it fails to improve `patience` times in a row. The
/// best-perplexity checkpoint is kept and scored by dev BLEU.
TrialResult run_trial(const TrialConfig& config, const DataMix& mix, std::span<const SentencePair> dev,
                      const TrialOptions& options = {});

/// Runs every config on data.mix(config upsampling); results are in config
/// order and independent of `workers`.
std::vector<TrialResult> random_search(std::span<const TrialConfig> configs, const TrainingData& data,
                                       std::span<const SentencePair> dev, const TrialOptions& options,
                                       unsigned workers = 1);

/// Indices of the k best results by dev BLEU; ties go to the lower index.
std::vector<std::size_t> top_k_indices(std::span<const TrialResult> results, std::size_t k);
Ensemble select_top_k(std::span<const TrialResult> results, std::size_t k);

struct FinetuneOptions {
  int max_steps = 3;
  double lm_alpha = 0.5;  // interpolation toward the in-domain LM after step 0
  Detok detok;
  unsigned workers = 1;
};

struct FinetuneResult {
  std::shared_ptr<const LexModel> model;
  std::size_t step = 0;        // chosen checkpoint; 0 is the input model
  std::vector<double> bleu;    // dev BLEU per step, step 0 first
};

/// Continues EM on the in-domain pairs and interpolates the LM toward their
/// targets, scoring dev BLEU with beam decoding after every step. Returns the
/// argmax checkpoint; ties go to the earlier step.
FinetuneResult finetune(const LexModel& model, const TaggedDataset& in_domain, std::span<const SentencePair> dev,
                        const FinetuneOptions& options = {});

}  // namespace stbt
