#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stbt/corpus.hpp"
#include "stbt/ensemble.hpp"
#include "stbt/rerank.hpp"

namespace stbt {

/// Where a synthetic dataset came from.
struct Provenance {
  std::string generator;              // ensemble hash
  std::vector<std::string> members;   // member model hashes
  DecodeMode mode = DecodeMode::Beam;
  NoisyChannelWeights weights;
  std::uint64_t seed = 0;
  std::size_t dropped = 0;            // generated sides that were empty or all-unknown

  std::string to_json() const;
  static Provenance from_json(std::string_view text);
};

struct SyntheticDataset {
  TaggedDataset data;
  Provenance provenance;
};

/// Pairs (g(y), y) for every y in `mono_target`, tagged with the
/// back-translation tag. `g` must be a backward model.
SyntheticDataset back_translate(const Ensemble& g, const TaggedDataset& mono_target, DecodeMode mode,
                                const RerankContext* ctx, std::uint64_t seed = 0, unsigned workers = 1);

/// Pairs (x, f(x)) for every x in `mono_source`, tagged with the
/// self-training tag. `f` must be a forward model.
SyntheticDataset self_train(const Ensemble& f, const TaggedDataset& mono_source, DecodeMode mode,
                            const RerankContext* ctx, std::uint64_t seed = 0, unsigned workers = 1);

struct Upsampling {
  int bitext = 1;
  int st = 1;
  int bt = 1;
};

/// build_mix over the bitext and whichever synthetic datasets are present.
DataMix assemble_training_mix(const TaggedDataset& bitext, const TaggedDataset* st, const TaggedDataset* bt,
                              const Upsampling& upsamples);

/// Writes the pairs as TSV and the provenance next to it as
/// "<path>.provenance.json".
void write_synthetic(const std::filesystem::path& path, const SyntheticDataset& ds);
SyntheticDataset read_synthetic(const std::filesystem::path& path, std::string name, std::string tag);

}  // namespace stbt
