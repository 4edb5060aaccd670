#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stbt/tm.hpp"

namespace stbt {

struct WebDoc {
  std::string url;
  std::vector<Sentence> sentences;  // deduplicated at ingestion
  std::string lang;
};

/// Bilingual unigram lexicon: symbol -> translations.
using Dictionary = std::unordered_map<std::string, std::set<std::string>>;

/// 1 - edit distance / longer length, over code points; 1 for two empty strings.
double lev_sim(std::string_view a, std::string_view b);

/// For each source symbol, the argmax target of its row when its probability
/// exceeds `threshold`. With `symmetric`, reverse entries are added as well.
Dictionary make_dictionary(const LexModel& m, double threshold = 0.1, bool symmetric = true);

/// |A ∩ B| / |A ∪ B| over token sets augmented with dictionary translations
/// of their own tokens; 0 when both sets are empty.
double jaccard(const WebDoc& a, const WebDoc& b, const Dictionary& dict);

/// lev_sim(urls) · jaccard(docs).
double doc_sim(const WebDoc& a, const WebDoc& b, const Dictionary& dict);

struct Match {
  std::size_t i = 0;
  std::size_t j = 0;
  double score = 0.0;

  friend bool operator==(const Match&, const Match&) = default;
};

/// Greedy one-to-one matching: candidates sorted by score descending (ties:
/// lower i, then lower j); a pair is taken when both ends are free and
/// score >= threshold. Output is in acceptance order.
std::vector<Match> greedy_match(const std::vector<std::vector<double>>& sims, double threshold);

struct ScoredPair {
  std::size_t i = 0;  // sentence index in doc a
  std::size_t j = 0;  // sentence index in doc b
  double score = 0.0;
  SentencePair pair;
};

/// Scores every (a sentence, b sentence) by channel_score(model, a, b) / |a|
/// and greedily keeps pairs whose per-token probability exp(score) is at
/// least `floor`. `model` translates doc b's language into doc a's.
std::vector<ScoredPair> align_sentences(const WebDoc& a, const WebDoc& b, const LexModel& model, double floor);

struct MinedPair {
  std::string url_a;
  std::string url_b;
  double doc_score = 0.0;
  ScoredPair sentences;
};

/// Document matching followed by sentence alignment inside matched documents.
std::vector<MinedPair> mine(const std::vector<WebDoc>& docs_a, const std::vector<WebDoc>& docs_b,
                            const LexModel& model, const Dictionary& dict, double threshold, double floor,
                            unsigned workers = 1);

/// Document index: one "lang<TAB>url<TAB>path" line per document; paths
/// resolve against the index directory. Each document file holds one
/// sentence per line.
std::vector<WebDoc> load_documents(const std::filesystem::path& index);

/// Writes the mined pairs as parallel TSV and "<path>.scores" with
/// url_a, url_b, doc score and sentence score per line.
void write_mined(const std::filesystem::path& path, const std::vector<MinedPair>& pairs);

}  // namespace stbt
