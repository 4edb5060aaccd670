#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "stbt/corpus.hpp"

namespace stbt {

/// Synthetic language pair with a known translation function.
///
/// Source word i translates to target word lexicon[i]. Adjacent source words
/// that both belong to the swap class are transposed (left to right, without
/// overlap), so the translation is a length-preserving bijection whose
/// inverse follows the same rule. Sentences come from one of two domains,
/// each a Zipf unigram sampler over its own frequency ranking plus a
/// preferred-successor bigram component.
struct SynthSpec {
  int vocab_size = 200;
  double zipf = 1.0;
  double successor_prob = 0.5;  // chance the next word is drawn from the previous word's successors
  int successors = 3;
  double swap_fraction = 0.3;   // share of source words in the swap class
  double noise = 0.1;           // per-token corruption rate of parallel training targets
  double domain_shift = 0.5;    // per-draw chance the out-of-domain sampler leaves the in-domain tables
  int min_length = 4;
  int max_length = 10;
  std::uint64_t seed = 1;

  // derived by derive()
  std::vector<std::string> source_words;
  std::vector<std::string> target_words;
  std::vector<int> lexicon;  // source id -> target id
  std::vector<bool> swap_class;
  std::vector<int> in_rank, out_rank;  // source id -> frequency rank per domain
  std::vector<std::vector<int>> in_next, out_next;
  std::unordered_map<std::string, int> source_index, target_index;

  /// Validates the parameters and fills the derived tables from `seed`.
  void derive();

  std::string to_json() const;
  static SynthSpec from_json(std::string_view text);
};

SynthSpec default_synth_spec();

enum class Domain { In, Out };

/// Unigram component of a domain's sampler, indexed by source id. The
/// out-of-domain one mixes the in-domain ranking with a rotated ranking:
/// (1 - domain_shift)·p_in + domain_shift·p_rotated.
std::vector<double> unigram_distribution(const SynthSpec& spec, Domain d);

Sentence sample_sentence(const SynthSpec& spec, Domain d, Rng& rng);

Sentence ground_truth(const SynthSpec& spec, const Sentence& x);
/// Maps a target sentence back to its source sentence.
Sentence inverse_ground_truth(const SynthSpec& spec, const Sentence& y);

struct SynthSizes {
  std::size_t parallel = 2000;
  std::size_t mono_source = 50000;
  std::size_t mono_target = 50000;
  std::size_t dev = 500;
  std::size_t test = 500;
};

/// Parallel, dev and test come from the in-domain sampler; mono-source is
/// in-domain; mono-target is the translation of out-of-domain text. Only the
/// parallel training targets are corrupted.
struct SynthBundle {
  TaggedDataset parallel;
  TaggedDataset mono_source;
  TaggedDataset mono_target;
  TaggedDataset dev;
  TaggedDataset test;
};

SynthBundle gen_corpora(const SynthSpec& spec, const SynthSizes& sizes);

/// Writes spec.json, the corpora and a datasets.json manifest into `dir`.
void write_bundle(const std::filesystem::path& dir, const SynthSpec& spec, const SynthBundle& bundle);

}  // namespace stbt
