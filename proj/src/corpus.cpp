#include "stbt/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace stbt {

std::string_view to_string(Side side) {
  switch (side) {
    case Side::Parallel: return "parallel";
    case Side::MonoSource: return "mono-source";
    case Side::MonoTarget: return "mono-target";
  }
  return "parallel";
}

Side parse_side(std::string_view s) {
  if (s == "parallel") return Side::Parallel;
  if (s == "mono-source") return Side::MonoSource;
  if (s == "mono-target") return Side::MonoTarget;
  throw DataError("unknown dataset side '" + std::string(s) + "'");
}

void validate(const TaggedDataset& ds) {
  if (!ds.tag.empty() && (!is_tag(ds.tag) || split_ws(ds.tag).size() != 1))
    throw DataError("dataset '" + ds.name + "': tag '" + ds.tag + "' is not a single <...> token");
  if (ds.upsample < 1) throw DataError("dataset '" + ds.name + "': upsample must be >= 1");
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const auto& p = ds.pairs[i];
    if (strip_tag(p.source).empty() || p.target.empty())
      throw DataError("dataset '" + ds.name + "': pair " + std::to_string(i) + " has an empty side");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

TaggedDataset parse_corpus(std::string_view text, Side side, std::string_view origin) {
  if (!valid_utf8(text)) throw DataError(std::string(origin) + ": input is not valid UTF-8");
  TaggedDataset ds;
  ds.side = side;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (split_ws(line).empty()) {
      ++ds.dropped;
      continue;
    }
    if (side == Side::Parallel) {
      const std::size_t tab = line.find('\t');
      if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos)
        throw DataError(std::string(origin) + ":" + std::to_string(line_no) +
                        ": parallel line needs exactly one tab separator");
      SentencePair p{split_ws(line.substr(0, tab)), split_ws(line.substr(tab + 1))};
      if (p.source.empty() || p.target.empty()) {
        ++ds.dropped;
        continue;
      }
      ds.pairs.push_back(std::move(p));
    } else {
      ds.sentences.push_back(split_ws(line));
    }
  }
  return ds;
}

TaggedDataset load_corpus(const std::filesystem::path& path, Side side, std::string name, std::string tag,
                          int upsample) {
  TaggedDataset ds = parse_corpus(read_file(path), side, path.string());
  ds.name = name.empty() ? path.stem().string() : std::move(name);
  ds.tag = std::move(tag);
  ds.upsample = upsample;
  validate(ds);
  return ds;
}

TaggedDataset apply_tag(TaggedDataset ds) {
  if (ds.tag.empty() || ds.side == Side::MonoTarget) return ds;
  auto tag_one = [&](Sentence& s) {
    if (s.empty() || s.front() != ds.tag) s.insert(s.begin(), ds.tag);
  };
  for (auto& p : ds.pairs) tag_one(p.source);
  for (auto& s : ds.sentences) tag_one(s);
  return ds;
}

TaggedDataset retag(TaggedDataset ds, std::string tag) {
  ds.tag = std::move(tag);
  for (auto& p : ds.pairs) p.source = strip_tag(p.source);
  if (ds.side == Side::MonoSource)
    for (auto& s : ds.sentences) s = strip_tag(s);
  return apply_tag(std::move(ds));
}

std::size_t DataMix::size() const {
  std::size_t n = 0;
  for (const auto& ds : datasets_) n += ds.pairs.size() * static_cast<std::size_t>(ds.upsample);
  return n;
}

std::vector<SentencePair> DataMix::flatten() const {
  std::vector<SentencePair> out;
  out.reserve(size());
  for (const auto& ds : datasets_)
    for (const auto& p : ds.pairs)
      for (int r = 0; r < ds.upsample; ++r) out.push_back(p);
  return out;
}

DataMix build_mix(std::vector<TaggedDataset> datasets) {
  std::size_t pairs = 0;
  for (auto& ds : datasets) {
    if (ds.side != Side::Parallel)
      throw DataError("dataset '" + ds.name + "' is monolingual; a training mix takes parallel data only");
    validate(ds);
    ds = apply_tag(std::move(ds));
    pairs += ds.pairs.size();
  }
  if (pairs == 0) throw DataError("training mix has no parallel data");
  return DataMix(std::move(datasets));
}

TaggedDataset swap_dataset(const TaggedDataset& ds) {
  TaggedDataset out = ds;
  out.pairs.clear();
  out.pairs.reserve(ds.pairs.size());
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const auto& p = ds.pairs[i];
    SentencePair q{p.target, strip_tag(p.source)};
    if (q.source.empty() || q.target.empty())
      throw DataError("dataset '" + ds.name + "': pair " + std::to_string(i) + " has an empty side");
    out.pairs.push_back(std::move(q));
  }
  return apply_tag(std::move(out));
}

DataMix swap_direction(const DataMix& mix) {
  std::vector<TaggedDataset> swapped;
  swapped.reserve(mix.datasets().size());
  for (const auto& ds : mix.datasets()) swapped.push_back(swap_dataset(ds));
  return DataMix(std::move(swapped));
}

std::vector<Sentence> dedup(const std::vector<Sentence>& sentences) {
  std::unordered_set<std::string> seen;
  std::vector<Sentence> out;
  for (const auto& s : sentences)
    if (seen.insert(join(s, "\x1f")).second) out.push_back(s);
  return out;
}

void write_parallel(const std::filesystem::path& path, const std::vector<SentencePair>& pairs) {
  std::string text;
  for (const auto& p : pairs) {
    text += join(p.source);
    text += '\t';
    text += join(p.target);
    text += '\n';
  }
  write_file(path, text);
}

void write_mono(const std::filesystem::path& path, const std::vector<Sentence>& sentences) {
  std::string text;
  for (const auto& s : sentences) {
    text += join(s);
    text += '\n';
  }
  write_file(path, text);
}

std::vector<DatasetEntry> read_dataset_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw DataError(path.string() + ": dataset manifest must be a JSON array");
  std::vector<DatasetEntry> out;
  for (const auto& e : j) {
    try {
      DatasetEntry d;
      d.name = e.at("name").get<std::string>();
      d.path = e.at("path").get<std::string>();
      d.side = parse_side(e.at("side").get<std::string>());
      d.tag = e.value("tag", std::string{});
      d.upsample = e.value("upsample", 1);
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(path.string() + ": " + ex.what());
    }
  }
  return out;
}

void write_dataset_manifest(const std::filesystem::path& path, const std::vector<DatasetEntry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries)
    j.push_back({{"name", e.name}, {"path", e.path}, {"side", to_string(e.side)}, {"tag", e.tag},
                 {"upsample", e.upsample}});
  write_file(path, j.dump(2) + "\n");
}

std::vector<TaggedDataset> load_datasets(const std::filesystem::path& manifest) {
  std::vector<TaggedDataset> out;
  const auto base = manifest.parent_path();
  for (const auto& e : read_dataset_manifest(manifest)) {
    std::filesystem::path p = e.path;
    if (p.is_relative()) p = base / p;
    out.push_back(load_corpus(p, e.side, e.name, e.tag, e.upsample));
  }
  return out;
}

}  // namespace stbt
