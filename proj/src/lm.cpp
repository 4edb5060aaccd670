#include "stbt/lm.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "stbt/corpus.hpp"

namespace stbt {

namespace {

std::uint64_t key(std::uint32_t node, int w) { return (static_cast<std::uint64_t>(node) << 32) | static_cast<std::uint32_t>(w); }

// Splits off the next '\n'-terminated line.
std::string_view next_line(std::string_view text, std::size_t& pos) {
  if (pos >= text.size()) throw DataError("language model: unexpected end of file");
  std::size_t end = text.find('\n', pos);
  if (end == std::string_view::npos) end = text.size();
  std::string_view line = text.substr(pos, end - pos);
  pos = end + 1;
  return line;
}

std::string_view expect_field(std::string_view line, std::string_view name) {
  if (line.substr(0, name.size()) != name || line.size() <= name.size() || line[name.size()] != ' ')
    throw DataError("language model: expected '" + std::string(name) + "', got '" + std::string(line) + "'");
  return line.substr(name.size() + 1);
}

}  // namespace

std::uint32_t NGramLM::Counts::child(std::uint32_t node, int w) const {
  auto it = children.find(key(node, w));
  return it == children.end() ? kNoNode : it->second;
}

std::uint32_t NGramLM::Counts::add_child(std::uint32_t node, int w) {
  auto [it, inserted] = children.emplace(key(node, w), static_cast<std::uint32_t>(totals.size()));
  if (inserted) {
    totals.push_back(0);
    parent.push_back(node);
    word.push_back(w);
  }
  return it->second;
}

std::shared_ptr<const NGramLM::Vocab> NGramLM::make_vocab(std::vector<std::string> symbols) {
  std::sort(symbols.begin(), symbols.end());
  symbols.erase(std::unique(symbols.begin(), symbols.end()), symbols.end());
  auto v = std::make_shared<Vocab>();
  v->tokens = {"<unk>", "</s>", "<s>"};
  for (auto& s : symbols)
    if (s != "<unk>" && s != "</s>" && s != "<s>") v->tokens.push_back(std::move(s));
  for (std::size_t i = 0; i < v->tokens.size(); ++i) v->index.emplace(v->tokens[i], static_cast<int>(i));
  return v;
}

void NGramLM::check_order() const {
  if (order_ < 1) throw UsageError("n-gram order must be >= 1");
  if (order_ > kMaxOrder) throw UsageError("n-gram order must be <= " + std::to_string(kMaxOrder));
}

NGramLM NGramLM::train(std::span<const Sentence> corpus, int order, double k, std::span<const std::uint64_t> weights,
                       const std::vector<std::string>* vocab) {
  NGramLM lm;
  lm.order_ = order;
  lm.k_ = k;
  lm.check_order();
  if (!(k > 0.0) || !std::isfinite(k)) throw UsageError("smoothing k must be a positive real");
  if (!weights.empty() && weights.size() != corpus.size()) throw UsageError("one weight per sentence required");
  if (corpus.empty()) throw DataError("language model: empty training corpus");

  if (vocab) {
    lm.vocab_ = make_vocab(*vocab);
  } else {
    std::set<std::string> seen;
    for (const auto& s : corpus) seen.insert(s.begin(), s.end());
    lm.vocab_ = make_vocab(std::vector<std::string>(seen.begin(), seen.end()));
  }

  auto counts = std::make_shared<Counts>();
  counts->totals.push_back(0);  // root
  counts->parent.push_back(kNoNode);
  counts->word.push_back(-1);
  std::vector<int> ids;
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    const std::uint64_t w = weights.empty() ? 1 : weights[n];
    if (w == 0) continue;
    ids.assign(static_cast<std::size_t>(order - 1), kBos);
    for (const auto& tok : corpus[n]) ids.push_back(lm.id(tok));
    ids.push_back(kEos);
    for (std::size_t p = static_cast<std::size_t>(order - 1); p < ids.size(); ++p) {
      std::uint32_t node = 0;
      for (int m = 0;; ++m) {
        counts->ngrams[key(node, ids[p])] += w;
        counts->totals[node] += w;
        if (m == order - 1) break;
        node = counts->add_child(node, ids[p - 1 - m]);
      }
    }
  }
  lm.counts_ = std::move(counts);
  return lm;
}

std::vector<std::string> NGramLM::symbols() const {
  if (!vocab_) return {};
  return std::vector<std::string>(vocab_->tokens.begin() + 3, vocab_->tokens.end());
}

int NGramLM::id(std::string_view token) const {
  auto it = vocab_->index.find(std::string(token));
  if (it == vocab_->index.end() || it->second == kBos) return kUnk;
  return it->second;
}

double NGramLM::prob(std::span<const int> history, int w) const {
  if (in_domain_) {
    const double p = base_->prob(history, w);
    const double q = in_domain_->prob(history, w);
    return (1.0 - alpha_) * p + alpha_ * q;
  }
  const double kv = k_ * static_cast<double>(outcome_count());
  double p = 1.0 / static_cast<double>(outcome_count());
  const Counts& c = *counts_;
  std::uint32_t node = 0;
  for (int m = 0;; ++m) {
    auto it = c.ngrams.find(key(node, w));
    const double count = it == c.ngrams.end() ? 0.0 : static_cast<double>(it->second);
    p = (count + kv * p) / (static_cast<double>(c.totals[node]) + kv);
    if (m == order_ - 1) break;
    const int h = static_cast<std::size_t>(m) < history.size() ? history[history.size() - 1 - m] : kBos;
    node = c.child(node, h);
    if (node == kNoNode) break;
  }
  return p;
}

double NGramLM::logprob(const Sentence& s) const {
  std::vector<int> ids;
  ids.reserve(s.size() + 1);
  for (const auto& tok : s) ids.push_back(id(tok));
  ids.push_back(kEos);
  double total = 0.0;
  for (std::size_t p = 0; p < ids.size(); ++p)
    total += std::log(prob(std::span<const int>(ids.data(), p), ids[p]));
  return total;
}

double NGramLM::perplexity(std::span<const Sentence> corpus) const {
  if (corpus.empty()) throw DataError("perplexity: empty corpus");
  double lp = 0.0;
  std::size_t tokens = 0;
  for (const auto& s : corpus) {
    lp += logprob(s);
    tokens += s.size() + 1;
  }
  return std::exp(-lp / static_cast<double>(tokens));
}

NGramLM NGramLM::finetune(std::span<const Sentence> in_domain, double alpha) const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("finetune alpha must lie in [0, 1]");
  const std::vector<std::string> vocab = symbols();
  NGramLM in = train(in_domain, order_, k_, {}, &vocab);
  in.vocab_ = vocab_;  // same symbol set and ids
  NGramLM out;
  out.order_ = order_;
  out.k_ = k_;
  out.alpha_ = alpha;
  out.vocab_ = vocab_;
  out.base_ = std::make_shared<const NGramLM>(*this);
  out.in_domain_ = std::make_shared<const NGramLM>(std::move(in));
  return out;
}

std::string NGramLM::serialize_counts(const NGramLM& lm) {
  const Counts& c = *lm.counts_;
  std::vector<std::string> records;
  records.reserve(c.ngrams.size());
  std::vector<int> path;
  for (const auto& [k, count] : c.ngrams) {
    const auto node = static_cast<std::uint32_t>(k >> 32);
    const int w = static_cast<int>(static_cast<std::uint32_t>(k));
    path.clear();
    // the deepest trie node holds the oldest history word
    for (std::uint32_t n = node; n != 0; n = c.parent[n]) path.push_back(c.word[n]);
    std::string rec = std::to_string(count) + "\t";
    for (int h : path) rec += std::to_string(h) + " ";
    rec += std::to_string(w);
    records.push_back(std::move(rec));
  }
  std::sort(records.begin(), records.end());
  std::string out = "ngrams " + std::to_string(records.size()) + "\n";
  for (const auto& r : records) out += r + "\n";
  return out;
}

std::string NGramLM::serialize() const {
  if (!vocab_) throw UsageError("serialize: empty language model");
  if (in_domain_) {
    const std::string b = base_->serialize(), i = in_domain_->serialize();
    return "ngramlm-mix v1\nalpha " + format_double(alpha_) + "\nbase " + std::to_string(b.size()) + "\n" + b +
           "in-domain " + std::to_string(i.size()) + "\n" + i;
  }
  std::string out = "ngramlm v1\norder " + std::to_string(order_) + "\nk " + format_double(k_) + "\nvocab " +
                    std::to_string(vocab_->tokens.size() - 3) + "\n";
  for (std::size_t i = 3; i < vocab_->tokens.size(); ++i) out += vocab_->tokens[i] + "\n";
  out += serialize_counts(*this);
  return out;
}

std::string NGramLM::hash() const {
  std::call_once(hash_cache_->once, [this] { hash_cache_->value = sha256_hex(serialize()); });
  return hash_cache_->value;
}

NGramLM NGramLM::parse(std::string_view text) {
  std::size_t pos = 0;
  const std::string_view magic = next_line(text, pos);
  if (magic == "ngramlm-mix v1") {
    NGramLM out;
    out.alpha_ = parse_double(expect_field(next_line(text, pos), "alpha"));
    const auto bsize = static_cast<std::size_t>(std::stoull(std::string(expect_field(next_line(text, pos), "base"))));
    if (pos + bsize > text.size()) throw DataError("language model: truncated base section");
    NGramLM base = parse(text.substr(pos, bsize));
    pos += bsize;
    const auto isize =
        static_cast<std::size_t>(std::stoull(std::string(expect_field(next_line(text, pos), "in-domain"))));
    if (pos + isize > text.size()) throw DataError("language model: truncated in-domain section");
    NGramLM in = parse(text.substr(pos, isize));
    out.order_ = base.order_;
    out.k_ = base.k_;
    out.vocab_ = base.vocab_;
    in.vocab_ = base.vocab_;
    out.base_ = std::make_shared<const NGramLM>(std::move(base));
    out.in_domain_ = std::make_shared<const NGramLM>(std::move(in));
    return out;
  }
  if (magic != "ngramlm v1") throw DataError("language model: unsupported header '" + std::string(magic) + "'");
  NGramLM lm;
  lm.order_ = std::stoi(std::string(expect_field(next_line(text, pos), "order")));
  lm.check_order();
  lm.k_ = parse_double(expect_field(next_line(text, pos), "k"));
  const auto nvocab = std::stoull(std::string(expect_field(next_line(text, pos), "vocab")));
  std::vector<std::string> symbols;
  for (std::size_t i = 0; i < nvocab; ++i) symbols.emplace_back(next_line(text, pos));
  lm.vocab_ = make_vocab(std::move(symbols));
  if (lm.vocab_->tokens.size() != nvocab + 3) throw DataError("language model: duplicate vocabulary entries");
  const auto nrec = std::stoull(std::string(expect_field(next_line(text, pos), "ngrams")));
  auto counts = std::make_shared<Counts>();
  counts->totals.push_back(0);
  counts->parent.push_back(kNoNode);
  counts->word.push_back(-1);
  for (std::size_t r = 0; r < nrec; ++r) {
    const std::string_view line = next_line(text, pos);
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) throw DataError("language model: bad n-gram record");
    const auto count = std::stoull(std::string(line.substr(0, tab)));
    const Sentence ids = split_ws(line.substr(tab + 1));
    if (ids.empty() || ids.size() > static_cast<std::size_t>(lm.order_))
      throw DataError("language model: bad n-gram record");
    std::uint32_t node = 0;
    // context stored oldest first; the trie walks most recent first
    for (std::size_t i = ids.size() - 1; i-- > 0;) node = counts->add_child(node, std::stoi(ids[i]));
    counts->ngrams[key(node, std::stoi(ids.back()))] += count;
    counts->totals[node] += count;
  }
  lm.counts_ = std::move(counts);
  return lm;
}

NGramLM train_lm(std::span<const Sentence> corpus, int order, double k) { return NGramLM::train(corpus, order, k); }

double logprob(const NGramLM& lm, const Sentence& s) { return lm.logprob(s); }

double perplexity(const NGramLM& lm, std::span<const Sentence> corpus) { return lm.perplexity(corpus); }

NGramLM finetune_lm(const NGramLM& base, std::span<const Sentence> in_domain, double alpha) {
  return base.finetune(in_domain, alpha);
}

void save(const NGramLM& lm, const std::filesystem::path& path) { write_file(path, lm.serialize()); }

NGramLM load_lm(const std::filesystem::path& path) { return NGramLM::parse(read_file(path)); }

}  // namespace stbt
