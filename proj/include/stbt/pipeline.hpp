#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "stbt/corpus.hpp"
#include "stbt/ensemble.hpp"
#include "stbt/rerank.hpp"
#include "stbt/search.hpp"
#include "stbt/subword.hpp"

namespace stbt {

inline constexpr int kMaxPipelineIterations = 3;

struct PipelineOptions {
  int iterations = 1;  // T
  int trials = kDefaultTrials;  // N per direction and iteration
  int topk = 3;        // k
  std::uint64_t seed = 1;
  unsigned workers = 1;
  SearchSpace space;
  TrialConfig initial = default_config();  // line-2 models
  int patience = 2;
  int lambda_trials = kDefaultTrials;
  int nbest = kDefaultNBest;
  int finetune_steps = 3;
  double finetune_alpha = 0.5;
  bool finetune_every_iteration = false;
  std::size_t bpe_vocab = 10000;
  DetokPolicy detok = DetokPolicy::SpaceJoined;
  int rerank_lm_order = 3;
  double rerank_lm_k = 0.1;
  double rerank_lm_alpha = 0.5;  // interpolation of the reranking LMs toward the parallel sides
  bool parallel_only = false;

  nlohmann::ordered_json to_json() const;
};

/// Raw (untagged, not yet BPE-encoded) inputs. In parallel-only mode the
/// monolingual sets are ignored and replaced by the two sides of `parallel`.
struct PipelineInputs {
  TaggedDataset parallel;
  TaggedDataset mono_source;
  TaggedDataset mono_target;
  TaggedDataset dev;
};

/// Persistent record of one run, stored as manifest.json in the run
/// directory. Paths are relative to the run directory.
struct PipelineManifest {
  nlohmann::ordered_json doc;

  std::string dump() const { return doc.dump(2) + "\n"; }
  double dev_bleu(Direction d) const;
  int iterations() const { return static_cast<int>(doc.at("iterations").size()); }
};

struct PipelineResult {
  PipelineManifest manifest;
  std::shared_ptr<const BpeModel> bpe;
  std::shared_ptr<const Ensemble> forward;
  std::shared_ptr<const Ensemble> backward;
  RerankContext forward_context;   // channel = backward, LM over the target language
  RerankContext backward_context;  // channel = forward, LM over the source language
};

/// Iterative back-translation and self-training. Stages already recorded in
/// an existing manifest of the same run, whose artifacts still match their
/// hashes, are loaded instead of recomputed.
PipelineResult run_pipeline(const PipelineInputs& inputs, const PipelineOptions& options,
                            const std::filesystem::path& run_dir);

/// run_pipeline with the monolingual sets taken from the parallel data's own
/// sides and reranking LMs trained on the parallel sides only.
PipelineResult run_parallel_only(const TaggedDataset& parallel, const TaggedDataset& dev, PipelineOptions options,
                                 const std::filesystem::path& run_dir);

}  // namespace stbt
