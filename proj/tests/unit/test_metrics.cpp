#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "stbt/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace stbt;
using namespace stbt::oracle;

TEST_CASE("clipped unigram precision on the repeated-word case") {
  const auto st = bleu_stats(split_ws("the the the the the the the"), split_ws("the cat is on the mat"));
  CHECK(st.matches[0] == 2);
  CHECK(st.totals[0] == 7);
}

TEST_CASE("perfect output scores 100") {
  const std::vector<Sentence> refs{{"a", "b", "c", "d", "e"}, {"f"}, {"g", "h"}};
  CHECK(bleu(refs, refs) == 100.0);
}

TEST_CASE("brevity penalty at half length") {
  // hypothesis is the first half of the reference: all precisions are 1
  const Sentence ref{"a", "b", "c", "d", "e", "f", "g", "h"}, hyp{"a", "b", "c", "d"};
  CHECK(bleu(std::vector<Sentence>{hyp}, std::vector<Sentence>{ref}) == doctest::Approx(100.0 * std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("matches an independent counter on 200 random corpora") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 6);
    std::vector<Sentence> hyps, refs;
    OracleStats oracle;
    BleuStats stats;
    for (std::size_t i = 0; i < n; ++i) {
      hyps.push_back(testing::random_sentence(rng, uniform_index(rng, 9), 3, "abc"));
      refs.push_back(testing::random_sentence(rng, 1 + uniform_index(rng, 8), 3, "abc"));
      oracle_add(oracle, hyps.back(), refs.back());
      stats += bleu_stats(hyps.back(), refs.back());
    }
    for (int k = 0; k < 4; ++k) {
      CHECK(stats.matches[k] == oracle.matches[k]);
      CHECK(stats.totals[k] == oracle.totals[k]);
    }
    CHECK(stats.hyp_length == oracle.c);
    CHECK(stats.ref_length == oracle.r);
    CHECK(bleu(hyps, refs) == doctest::Approx(oracle_bleu(oracle)).epsilon(1e-12));
  }
}

TEST_CASE("score bounds, order invariance and the perfect-score condition") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Sentence> refs, hyps;
    bool all_equal = true;
    for (std::size_t i = 0, n = 1 + uniform_index(rng, 5); i < n; ++i) {
      refs.push_back(testing::random_sentence(rng, 1 + uniform_index(rng, 7), 4));
      Sentence h = refs.back();
      if (uniform01(rng) < 0.3) {
        h[uniform_index(rng, h.size())] = "zz";
        all_equal = false;
      }
      hyps.push_back(h);
    }
    const double b = bleu(hyps, refs);
    CHECK(b >= 0.0);
    CHECK(b <= 100.0);
    CHECK((b == 100.0) == all_equal);
    std::vector<std::size_t> order(hyps.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::reverse(order.begin(), order.end());
    std::vector<Sentence> h2, r2;
    for (auto i : order) {
      h2.push_back(hyps[i]);
      r2.push_back(refs[i]);
    }
    CHECK(bleu(h2, r2) == b);
  }
}

TEST_CASE("corpus errors and empty hypotheses") {
  CHECK_THROWS_AS(bleu(std::vector<Sentence>{{"a"}}, std::vector<Sentence>{}), UsageError);
  CHECK_THROWS_AS(bleu(std::vector<Sentence>{}, std::vector<Sentence>{}), UsageError);
  CHECK(bleu(std::vector<Sentence>{{}}, std::vector<Sentence>{{"a"}}) == 0.0);
}

TEST_CASE("identity system scores 100 and reports") {
  const std::vector<TableEntry> id{{"a", "a", 1.0}, {"b", "b", 1.0}};
  DecoderSettings st;
  st.window = 0;
  const auto e = Ensemble::single(LexModel::from_table(Direction::Forward, id, st));
  const std::vector<SentencePair> test{{{"a", "b"}, {"a", "b"}}, {{"b", "b", "a"}, {"b", "b", "a"}}};
  const auto report = evaluate_system(e, test, DecodeMode::Beam, nullptr);
  CHECK(report.bleu == 100.0);
  CHECK(report.sentences == 2);
  CHECK(report.model_hash == e.hash());
  CHECK(report.to_text() == "BLEU = 100.00 (2 sentences, beam decoding)\n");
  CHECK(report.to_json().find("\"decode\": \"beam\"") != std::string::npos);
  CHECK(evaluate_system(e, test, DecodeMode::Beam, nullptr, {}, 2).bleu == report.bleu);
}

TEST_CASE("detokenization before scoring") {
  BpeModel bpe;
  const Detok spaced{&bpe, DetokPolicy::SpaceJoined}, unspaced{&bpe, DetokPolicy::Unspaced};
  CHECK(spaced({"ab", "@@c", "d"}) == Sentence{"abc", "d"});
  CHECK(unspaced({"ab", "@@c", "d"}) == Sentence{"abcd"});
  CHECK(Detok{}({"ab", "@@c"}) == Sentence{"ab", "@@c"});
}
