#include "stbt/rerank.hpp"

#include <algorithm>
#include <cmath>

#include "stbt/metrics.hpp"

namespace stbt {

void validate(const NoisyChannelWeights& w) {
  if (!(w.lambda1 >= 0.0 && w.lambda1 <= kMaxLambda && w.lambda2 >= 0.0 && w.lambda2 <= kMaxLambda))
    throw UsageError("noisy-channel weights must lie in [0, 3]");
}

double combined_score(double fwd, double channel, double lm, const NoisyChannelWeights& w) {
  if (!std::isfinite(fwd) || !std::isfinite(channel) || !std::isfinite(lm))
    throw DataError("combined_score: non-finite component score");
  return fwd + w.lambda1 * channel + w.lambda2 * lm;
}

NBestList resort(NBestList list, const NoisyChannelWeights& w) {
  for (auto& e : list.entries) {
    if (!e.channel || !e.lm) throw UsageError("resort: channel and lm scores are required");
    e.combined = combined_score(e.fwd, *e.channel, *e.lm, w);
  }
  std::stable_sort(list.entries.begin(), list.entries.end(),
                   [](const NBestEntry& a, const NBestEntry& b) { return *a.combined > *b.combined; });
  list.key = RankKey::Combined;
  return list;
}

NBestList rerank(NBestList list, const Ensemble& backward, const NGramLM& lm, const NoisyChannelWeights& w) {
  if (list.entries.empty()) throw DataError("rerank: empty n-best list");
  for (auto& e : list.entries) {
    e.channel = backward.channel_score(list.source, e.hypothesis);
    e.lm = lm.logprob(e.hypothesis);
  }
  return resort(std::move(list), w);
}

NBestList rerank(NBestList list, const LexModel& backward, const NGramLM& lm, const NoisyChannelWeights& w) {
  const LexModel* members[] = {&backward};
  if (list.entries.empty()) throw DataError("rerank: empty n-best list");
  for (auto& e : list.entries) {
    e.channel = detail::ibm1_logprob(members, list.source, e.hypothesis);
    e.lm = lm.logprob(e.hypothesis);
  }
  return resort(std::move(list), w);
}

std::string_view to_string(DecodeMode m) { return m == DecodeMode::Beam ? "beam" : "rerank"; }

DecodeMode parse_decode_mode(std::string_view s) {
  if (s == "beam") return DecodeMode::Beam;
  if (s == "rerank") return DecodeMode::Rerank;
  throw UsageError("unknown decode mode '" + std::string(s) + "'");
}

Sentence decode_best(const Ensemble& forward, const Sentence& x, DecodeMode mode, const RerankContext* ctx) {
  if (mode == DecodeMode::Beam) return forward.nbest(x, 1).entries.front().hypothesis;
  if (!ctx || !ctx->backward || !ctx->lm) throw UsageError("reranked decoding needs a backward model and an LM");
  if (ctx->backward->direction() == forward.direction())
    throw UsageError("the channel model must run opposite to the forward model");
  NBestList list = rerank(forward.nbest(x, ctx->nbest), *ctx->backward, *ctx->lm, ctx->weights);
  return list.entries.front().hypothesis;
}

std::vector<Sentence> decode_all(const Ensemble& forward, std::span<const Sentence> sources, DecodeMode mode,
                                 const RerankContext* ctx, unsigned workers) {
  std::vector<Sentence> out(sources.size());
  parallel_for(sources.size(), workers, [&](std::size_t i) { out[i] = decode_best(forward, sources[i], mode, ctx); });
  return out;
}

Sentence Detok::operator()(const Sentence& s) const {
  if (!bpe) return s;
  return split_ws(decode(s, *bpe, policy));
}

TuneResult tune_lambdas(std::span<const SentencePair> dev, const Ensemble& forward, const Ensemble& backward,
                        const NGramLM& lm, int trials, std::uint64_t seed, int nbest, const Detok& detok,
                        unsigned workers) {
  if (trials < 1) throw UsageError("tune_lambdas: trials must be >= 1");
  if (dev.empty()) throw DataError("tune_lambdas: empty tuning set");
  if (backward.direction() == forward.direction())
    throw UsageError("the channel model must run opposite to the forward model");

  std::vector<NBestList> lists(dev.size());
  std::vector<std::vector<BleuStats>> stats(dev.size());
  parallel_for(dev.size(), workers, [&](std::size_t i) {
    NBestList list = forward.nbest(dev[i].source, nbest);
    for (auto& e : list.entries) {
      e.channel = backward.channel_score(list.source, e.hypothesis);
      e.lm = lm.logprob(e.hypothesis);
    }
    const Sentence ref = detok(dev[i].target);
    for (const auto& e : list.entries) stats[i].push_back(bleu_stats(detok(e.hypothesis), ref));
    lists[i] = std::move(list);
  });

  TuneResult result;
  for (int t = 0; t < trials; ++t) {
    NoisyChannelWeights w;
    if (t > 0) {
      Rng rng(derive_seed(seed, "lambda", static_cast<std::uint64_t>(t)));
      w.lambda1 = kMaxLambda * uniform01(rng);
      w.lambda2 = kMaxLambda * uniform01(rng);
    }
    BleuStats total;
    for (std::size_t i = 0; i < lists.size(); ++i) {
      // first entry with the maximal combined score, matching the stable sort
      std::size_t best = 0;
      double best_score = 0.0;
      for (std::size_t e = 0; e < lists[i].entries.size(); ++e) {
        const auto& entry = lists[i].entries[e];
        const double s = combined_score(entry.fwd, *entry.channel, *entry.lm, w);
        if (e == 0 || s > best_score) {
          best = e;
          best_score = s;
        }
      }
      total += stats[i][best];
    }
    const double score = bleu(total);
    result.trials.push_back({w, score});
    if (t == 0 || score > result.bleu) {
      result.bleu = score;
      result.weights = w;
    }
  }
  return result;
}

namespace {

std::string score_field(const std::optional<double>& v) { return v ? format_double(*v) : "-"; }

std::optional<double> parse_score(std::string_view s) {
  if (s == "-") return std::nullopt;
  return parse_double(s);
}

}  // namespace

std::string format_nbest(std::span<const NBestList> lists) {
  std::string out;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    for (std::size_t r = 0; r < lists[i].entries.size(); ++r) {
      const auto& e = lists[i].entries[r];
      out += std::to_string(i) + "\t" + std::to_string(r) + "\t" + join(e.hypothesis) + "\t" + format_double(e.fwd) +
             "\t" + score_field(e.channel) + "\t" + score_field(e.lm) + "\t" + score_field(e.combined) + "\n";
    }
  }
  return out;
}

void write_nbest(const std::filesystem::path& path, std::span<const NBestList> lists) {
  write_file(path, format_nbest(lists));
}

std::vector<NBestList> parse_nbest(std::string_view text) {
  std::vector<NBestList> lists;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::size_t at = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', at);
      f.push_back(line.substr(at, tab == std::string_view::npos ? std::string_view::npos : tab - at));
      if (tab == std::string_view::npos) break;
      at = tab + 1;
    }
    const std::string where = "n-best line " + std::to_string(line_no);
    if (f.size() != 7) throw DataError(where + ": expected 7 tab-separated fields");
    std::size_t id = 0, rank = 0;
    try {
      id = std::stoull(std::string(f[0]));
      rank = std::stoull(std::string(f[1]));
    } catch (const std::exception&) {
      throw DataError(where + ": bad sentence id or rank");
    }
    if (id + 1 < lists.size() || id > lists.size()) throw DataError(where + ": sentence ids must be consecutive");
    if (id == lists.size()) lists.emplace_back();
    NBestList& list = lists.back();
    if (rank != list.entries.size()) throw DataError(where + ": ranks must be consecutive from 0");
    NBestEntry e;
    e.hypothesis = split_ws(f[2]);
    e.fwd = parse_double(f[3]);
    e.channel = parse_score(f[4]);
    e.lm = parse_score(f[5]);
    e.combined = parse_score(f[6]);
    if (e.combined) list.key = RankKey::Combined;
    list.entries.push_back(std::move(e));
  }
  return lists;
}

std::vector<NBestList> read_nbest(const std::filesystem::path& path) { return parse_nbest(read_file(path)); }

}  // namespace stbt
