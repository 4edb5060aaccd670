#include "stbt/mine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stbt/corpus.hpp"

namespace stbt {

double lev_sim(std::string_view a, std::string_view b) {
  const std::u32string s = to_u32(a), t = to_u32(b);
  if (s.empty() && t.empty()) return 1.0;
  std::vector<std::size_t> row(t.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (std::size_t i = 1; i <= s.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= t.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (s[i - 1] == t[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return 1.0 - static_cast<double>(row[t.size()]) / static_cast<double>(std::max(s.size(), t.size()));
}

Dictionary make_dictionary(const LexModel& m, double threshold, bool symmetric) {
  Dictionary dict;
  const auto& rows = m.rows();
  for (std::size_t r = 0; r < m.vocab().source.size(); ++r) {
    const auto& row = rows[r];
    if (row.by_prob.empty()) continue;
    const int best = row.by_prob.front();
    if (!(row.prob[best] > threshold)) continue;
    const std::string& src = m.vocab().source[r];
    const std::string& tgt = m.vocab().target[row.target[best]];
    dict[src].insert(tgt);
    if (symmetric) dict[tgt].insert(src);
  }
  return dict;
}

namespace {

std::set<std::string> augmented_tokens(const WebDoc& d, const Dictionary& dict) {
  std::set<std::string> out;
  for (const auto& s : d.sentences)
    for (const auto& tok : s) {
      out.insert(tok);
      auto it = dict.find(tok);
      if (it != dict.end()) out.insert(it->second.begin(), it->second.end());
    }
  return out;
}

double set_jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : a) common += b.count(t);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

std::vector<Match> greedy(std::vector<Match> cand, double threshold, std::size_t rows, std::size_t cols) {
  std::sort(cand.begin(), cand.end(), [](const Match& x, const Match& y) {
    if (x.score != y.score) return x.score > y.score;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  std::vector<bool> used_i(rows, false), used_j(cols, false);
  std::vector<Match> out;
  for (const auto& m : cand) {
    if (!(m.score >= threshold)) break;
    if (used_i[m.i] || used_j[m.j]) continue;
    used_i[m.i] = used_j[m.j] = true;
    out.push_back(m);
  }
  return out;
}

}  // namespace

double jaccard(const WebDoc& a, const WebDoc& b, const Dictionary& dict) {
  return set_jaccard(augmented_tokens(a, dict), augmented_tokens(b, dict));
}

double doc_sim(const WebDoc& a, const WebDoc& b, const Dictionary& dict) {
  return lev_sim(a.url, b.url) * jaccard(a, b, dict);
}

std::vector<Match> greedy_match(const std::vector<std::vector<double>>& sims, double threshold) {
  std::vector<Match> cand;
  std::size_t cols = 0;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    cols = std::max(cols, sims[i].size());
    for (std::size_t j = 0; j < sims[i].size(); ++j) {
      if (std::isnan(sims[i][j])) throw DataError("greedy_match: NaN score");
      cand.push_back({i, j, sims[i][j]});
    }
  }
  return greedy(std::move(cand), threshold, sims.size(), cols);
}

std::vector<ScoredPair> align_sentences(const WebDoc& a, const WebDoc& b, const LexModel& model, double floor) {
  if (!(floor >= 0.0 && floor <= 1.0)) throw UsageError("align_sentences: floor must lie in [0, 1]");
  std::vector<Match> cand;
  for (std::size_t i = 0; i < a.sentences.size(); ++i) {
    const std::size_t len = strip_tag(a.sentences[i]).size();
    if (len == 0) continue;
    for (std::size_t j = 0; j < b.sentences.size(); ++j)
      cand.push_back({i, j, channel_score(model, a.sentences[i], b.sentences[j]) / static_cast<double>(len)});
  }
  const double log_floor = floor > 0.0 ? std::log(floor) : -std::numeric_limits<double>::infinity();
  std::vector<ScoredPair> out;
  for (const auto& m : greedy(std::move(cand), log_floor, a.sentences.size(), b.sentences.size()))
    out.push_back({m.i, m.j, m.score, {a.sentences[m.i], b.sentences[m.j]}});
  return out;
}

std::vector<MinedPair> mine(const std::vector<WebDoc>& docs_a, const std::vector<WebDoc>& docs_b,
                            const LexModel& model, const Dictionary& dict, double threshold, double floor,
                            unsigned workers) {
  std::vector<std::vector<double>> sims(docs_a.size(), std::vector<double>(docs_b.size()));
  parallel_for(docs_a.size(), workers, [&](std::size_t i) {
    for (std::size_t j = 0; j < docs_b.size(); ++j) sims[i][j] = doc_sim(docs_a[i], docs_b[j], dict);
  });
  const std::vector<Match> matches = greedy_match(sims, threshold);
  std::vector<std::vector<ScoredPair>> aligned(matches.size());
  parallel_for(matches.size(), workers, [&](std::size_t k) {
    aligned[k] = align_sentences(docs_a[matches[k].i], docs_b[matches[k].j], model, floor);
  });
  std::vector<MinedPair> out;
  for (std::size_t k = 0; k < matches.size(); ++k)
    for (auto& p : aligned[k])
      out.push_back({docs_a[matches[k].i].url, docs_b[matches[k].j].url, matches[k].score, std::move(p)});
  return out;
}

std::vector<WebDoc> load_documents(const std::filesystem::path& index) {
  const std::string text = read_file(index);
  const auto base = index.parent_path();
  std::vector<WebDoc> docs;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (split_ws(line).empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw DataError(index.string() + ":" + std::to_string(line_no) + ": expected lang<TAB>url<TAB>path");
    WebDoc d;
    d.lang = line.substr(0, t1);
    d.url = line.substr(t1 + 1, t2 - t1 - 1);
    if (d.url.empty()) throw DataError(index.string() + ":" + std::to_string(line_no) + ": empty url");
    std::filesystem::path p = line.substr(t2 + 1);
    if (p.is_relative()) p = base / p;
    d.sentences = dedup(load_corpus(p, Side::MonoSource).sentences);
    docs.push_back(std::move(d));
  }
  return docs;
}

void write_mined(const std::filesystem::path& path, const std::vector<MinedPair>& pairs) {
  std::vector<SentencePair> tsv;
  std::string scores;
  for (const auto& p : pairs) {
    tsv.push_back(p.sentences.pair);
    scores += p.url_a + "\t" + p.url_b + "\t" + format_double(p.doc_score) + "\t" +
              format_double(p.sentences.score) + "\n";
  }
  write_parallel(path, tsv);
  write_file(path.string() + ".scores", scores);
}

}  // namespace stbt
