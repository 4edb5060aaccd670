#include "stbt/subword.hpp"

#include <climits>
#include <map>
#include <unordered_map>

#include "stbt/corpus.hpp"

namespace stbt {

namespace {

// "\0" sorts below every other byte, so keys order exactly like (left, right).
std::string pair_key(std::string_view left, std::string_view right) {
  std::string k;
  k.reserve(left.size() + right.size() + 1);
  k.append(left);
  k.push_back('\0');
  k.append(right);
  return k;
}

void merge_in_place(std::vector<std::string>& symbols, const std::string& left, const std::string& right) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size();) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      out.push_back(left + right);
      i += 2;
    } else {
      out.push_back(std::move(symbols[i]));
      ++i;
    }
  }
  symbols = std::move(out);
}

}  // namespace

DetokPolicy parse_detok_policy(std::string_view s) {
  if (s == "space-joined") return DetokPolicy::SpaceJoined;
  if (s == "unspaced") return DetokPolicy::Unspaced;
  throw UsageError("unknown detokenization policy '" + std::string(s) + "'");
}

bool BpeModel::is_reserved(std::string_view token) const {
  return is_tag(token) || reserved.count(std::string(token)) > 0;
}

BpeModel learn_bpe(const std::vector<Sentence>& corpus, std::size_t vocab_size, std::string joiner,
                   std::set<std::string> reserved, BpeLearnTrace* trace) {
  if (corpus.empty()) throw DataError("learn_bpe: empty corpus");
  if (joiner.empty()) throw UsageError("learn_bpe: joiner must be non-empty");
  BpeModel model;
  model.vocab_size_target = vocab_size;
  model.joiner = std::move(joiner);
  model.reserved = std::move(reserved);

  std::map<std::string, std::size_t> word_freq;
  for (const auto& s : corpus)
    for (const auto& tok : s) {
      if (model.is_reserved(tok)) continue;
      if (tok.find(model.joiner) != std::string::npos)
        throw DataError("learn_bpe: token '" + tok + "' contains the joiner '" + model.joiner + "'");
      ++word_freq[tok];
    }

  std::vector<std::vector<std::string>> words;
  std::vector<std::size_t> freqs;
  std::set<std::string> inventory;
  for (const auto& [w, f] : word_freq) {
    words.push_back(utf8_chars(w));
    freqs.push_back(f);
    inventory.insert(words.back().begin(), words.back().end());
  }
  if (vocab_size < inventory.size())
    throw UsageError("learn_bpe: vocab size " + std::to_string(vocab_size) + " is smaller than the " +
                     std::to_string(inventory.size()) + "-symbol character inventory");
  if (trace) trace->inventory = {inventory.size()};

  while (inventory.size() < vocab_size) {
    std::unordered_map<std::string, std::size_t> counts;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& sym = words[w];
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) counts[pair_key(sym[i], sym[i + 1])] += freqs[w];
    }
    const std::string* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [key, c] : counts) {
      if (c < 2) continue;
      if (c < best_count || (c == best_count && key > *best)) continue;
      const std::size_t sep = key.find('\0');
      if (inventory.count(key.substr(0, sep) + key.substr(sep + 1))) continue;
      best = &key;
      best_count = c;
    }
    if (!best) break;
    const std::size_t sep = best->find('\0');
    std::string left = best->substr(0, sep), right = best->substr(sep + 1);
    for (auto& sym : words) merge_in_place(sym, left, right);
    inventory.insert(left + right);
    model.merges.emplace_back(std::move(left), std::move(right));
    if (trace) trace->inventory.push_back(inventory.size());
  }
  return model;
}

namespace {

std::vector<std::string> segment_ranked(std::string_view word, const std::unordered_map<std::string, int>& rank) {
  // Lowest-rank pair first, merged at every non-overlapping position left to
  // right. Merge outputs are unique, so this equals replaying the merge list
  // in order.
  std::vector<std::string> sym = utf8_chars(word);
  for (;;) {
    int best = INT_MAX;
    std::size_t at = 0;
    for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
      auto it = rank.find(pair_key(sym[i], sym[i + 1]));
      if (it != rank.end() && it->second < best) {
        best = it->second;
        at = i;
      }
    }
    if (best == INT_MAX) break;
    const std::string left = sym[at], right = sym[at + 1];
    merge_in_place(sym, left, right);
  }
  return sym;
}

}  // namespace

BpeEncoder::BpeEncoder(const BpeModel& model) : model_(&model) {
  rank_.reserve(model.merges.size());
  for (std::size_t r = 0; r < model.merges.size(); ++r)
    rank_.emplace(pair_key(model.merges[r].first, model.merges[r].second), static_cast<int>(r));
}

std::vector<std::string> BpeEncoder::segment(std::string_view word) const { return segment_ranked(word, rank_); }

Sentence BpeEncoder::encode(const Sentence& s) const {
  Sentence out;
  for (const auto& tok : s) {
    if (model_->is_reserved(tok)) {
      out.push_back(tok);
      continue;
    }
    const auto sym = segment_ranked(tok, rank_);
    for (std::size_t i = 0; i < sym.size(); ++i) out.push_back(i == 0 ? sym[i] : model_->joiner + sym[i]);
  }
  return out;
}

std::vector<std::string> segment_word(std::string_view word, const BpeModel& model) {
  return BpeEncoder(model).segment(word);
}

Sentence encode(const Sentence& s, const BpeModel& model) { return BpeEncoder(model).encode(s); }

std::string decode(const Sentence& s, const BpeModel& model, DetokPolicy policy) {
  std::vector<std::string> words;
  for (const auto& piece : s) {
    const bool continuation = piece.size() > model.joiner.size() && piece.compare(0, model.joiner.size(), model.joiner) == 0;
    if (continuation && !words.empty())
      words.back() += piece.substr(model.joiner.size());
    else if (continuation)
      words.push_back(piece.substr(model.joiner.size()));
    else
      words.push_back(piece);
  }
  return join(words, policy == DetokPolicy::Unspaced ? "" : " ");
}

std::string serialize(const BpeModel& model) {
  std::string out = "#bpe v1\tjoiner=" + model.joiner + "\tvocab=" + std::to_string(model.vocab_size_target) +
                    "\treserved=";
  bool first = true;
  for (const auto& r : model.reserved) {
    if (!first) out += ' ';
    out += r;
    first = false;
  }
  out += '\n';
  for (const auto& [l, r] : model.merges) out += l + " " + r + "\n";
  return out;
}

BpeModel parse_bpe(std::string_view text) {
  BpeModel model;
  std::size_t pos = text.find('\n');
  if (pos == std::string_view::npos) throw DataError("bpe model: missing header");
  const std::string header(text.substr(0, pos));
  if (header.rfind("#bpe v1\t", 0) != 0) throw DataError("bpe model: unsupported header '" + header + "'");
  std::size_t at = 8;
  while (at < header.size()) {
    std::size_t tab = header.find('\t', at);
    if (tab == std::string::npos) tab = header.size();
    const std::string field = header.substr(at, tab - at);
    const std::size_t eq = field.find('=');
    if (eq == std::string::npos) throw DataError("bpe model: bad header field '" + field + "'");
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "joiner")
      model.joiner = value;
    else if (key == "vocab")
      model.vocab_size_target = static_cast<std::size_t>(std::stoull(value));
    else if (key == "reserved")
      for (auto& r : split_ws(value)) model.reserved.insert(r);
    at = tab + 1;
  }
  ++pos;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const Sentence parts = split_ws(text.substr(pos, end - pos));
    pos = end + 1;
    if (parts.empty()) continue;
    if (parts.size() != 2) throw DataError("bpe model: merge line must hold two symbols");
    model.merges.emplace_back(parts[0], parts[1]);
  }
  return model;
}

void save(const BpeModel& model, const std::filesystem::path& path) { write_file(path, serialize(model)); }

BpeModel load_bpe(const std::filesystem::path& path) { return parse_bpe(read_file(path)); }

}  // namespace stbt
