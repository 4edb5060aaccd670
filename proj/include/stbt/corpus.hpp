#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stbt/common.hpp"

namespace stbt {

/// Tags shipped in the default configurations: in-domain parallel data,
/// out-of-domain parallel data, self-trained data, back-translated data.
namespace tags {
inline constexpr std::string_view kInDomain = "<d:in>";
inline constexpr std::string_view kOutDomain = "<d:out>";
inline constexpr std::string_view kSelfTrain = "<d:st>";
inline constexpr std::string_view kBackTranslation = "<d:bt>";
}  // namespace tags

enum class Side { Parallel, MonoSource, MonoTarget };

std::string_view to_string(Side side);
Side parse_side(std::string_view s);

struct SentencePair {
  Sentence source;
  Sentence target;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

/// A corpus carrying a domain/origin tag and an upsampling weight.
/// Parallel datasets fill `pairs`; monolingual ones fill `sentences`.
struct TaggedDataset {
  std::string name;
  Side side = Side::Parallel;
  std::string tag;
  std::vector<SentencePair> pairs;
  std::vector<Sentence> sentences;
  int upsample = 1;
  std::size_t dropped = 0;  // lines dropped while loading

  std::size_t size() const { return side == Side::Parallel ? pairs.size() : sentences.size(); }
  bool empty() const { return size() == 0; }
};

/// Throws DataError when the tag is malformed, upsample < 1, or a parallel
/// entry has an empty side.
void validate(const TaggedDataset& ds);

/// Reads a whitespace-tokenized corpus. Blank lines, and parallel lines with
/// an empty side, are dropped and counted in `dropped`. Non-UTF-8 input and a
/// parallel line without exactly one tab are errors.
TaggedDataset load_corpus(const std::filesystem::path& path, Side side, std::string name = {},
                          std::string tag = {}, int upsample = 1);

/// Parses corpus text already in memory; `origin` is used in diagnostics.
TaggedDataset parse_corpus(std::string_view text, Side side, std::string_view origin = "<memory>");

/// Prepends the dataset tag to every source sentence. Mono-target datasets
/// are returned unchanged. Idempotent.
TaggedDataset apply_tag(TaggedDataset ds);

/// Same as apply_tag but replaces an existing different leading tag.
TaggedDataset retag(TaggedDataset ds, std::string tag);

/// Training mix over tagged parallel datasets. The flattened view replicates
/// each dataset `upsample` times: dataset order, then line order, then replica.
class DataMix {
 public:
  DataMix() = default;
  explicit DataMix(std::vector<TaggedDataset> datasets) : datasets_(std::move(datasets)) {}

  const std::vector<TaggedDataset>& datasets() const { return datasets_; }

  /// Σ size × upsample.
  std::size_t size() const;

  std::vector<SentencePair> flatten() const;

  /// Visits every (pair, multiplicity) once per dataset line, without
  /// materializing replicas.
  template <class F>
  void for_each_weighted(F&& f) const {
    for (const auto& ds : datasets_)
      for (const auto& p : ds.pairs) f(p, static_cast<std::size_t>(ds.upsample));
  }

 private:
  std::vector<TaggedDataset> datasets_;
};

/// Tags every dataset and builds the mix. Requires parallel datasets only and
/// at least one pair overall.
DataMix build_mix(std::vector<TaggedDataset> datasets);

/// Swaps source and target on every pair and re-applies each dataset tag on
/// the new source side. An involution on pair content.
DataMix swap_direction(const DataMix& mix);

/// Swaps one dataset; the tag moves to the new source side.
TaggedDataset swap_dataset(const TaggedDataset& ds);

/// Removes repeated sentences, keeping first occurrences in order.
std::vector<Sentence> dedup(const std::vector<Sentence>& sentences);

void write_parallel(const std::filesystem::path& path, const std::vector<SentencePair>& pairs);
void write_mono(const std::filesystem::path& path, const std::vector<Sentence>& sentences);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// One entry of a dataset manifest (JSON array of objects with these keys).
struct DatasetEntry {
  std::string name;
  std::string path;  // relative paths resolve against the manifest directory
  Side side = Side::Parallel;
  std::string tag;
  int upsample = 1;
};

std::vector<DatasetEntry> read_dataset_manifest(const std::filesystem::path& path);
void write_dataset_manifest(const std::filesystem::path& path, const std::vector<DatasetEntry>& entries);

/// Loads every dataset listed in a manifest, untagged.
std::vector<TaggedDataset> load_datasets(const std::filesystem::path& manifest);

}  // namespace stbt
