#include <cmath>

#include "doctest.h"
#include "stbt/lm.hpp"
#include "support.hpp"

using namespace stbt;

namespace {

std::vector<Sentence> random_corpus(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<Sentence> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back(testing::random_sentence(rng, 1 + uniform_index(rng, 6), vocab));
  return c;
}

// Σ over every outcome (symbols, </s>, <unk>) for one history.
double outcome_mass(const NGramLM& lm, const std::vector<int>& history) {
  double sum = 0.0;
  sum += lm.prob(history, NGramLM::kUnk);
  sum += lm.prob(history, NGramLM::kEos);
  for (const auto& s : lm.symbols()) sum += lm.prob(history, lm.id(s));
  return sum;
}

}  // namespace

TEST_CASE("unambiguous bigram approaches certainty as k shrinks") {
  std::vector<Sentence> corpus(10, Sentence{"a", "b"});
  const auto lm = NGramLM::train(corpus, 2, 1e-9);
  const int a = lm.id("a"), b = lm.id("b");
  CHECK(lm.prob(std::vector<int>{a}, b) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(lm.logprob({"a", "b"}) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("huge k tends to uniform over symbols, end marker and unknown") {
  const auto lm = NGramLM::train(std::vector<Sentence>{{"a", "b", "c", "d"}}, 2, 1e12);
  // |V| = 4 symbols + </s> + <unk>
  CHECK(lm.outcome_count() == 6);
  CHECK(lm.prob(std::vector<int>{lm.id("a")}, lm.id("c")) == doctest::Approx(1.0 / 6.0).epsilon(1e-9));
}

TEST_CASE("unigram add-k on a hand-counted corpus") {
  // "a a a b" + </s>: c(a)=3 over 5 events, |V| = {a, b, </s>, <unk>} = 4.
  const double k = 0.5;
  const auto lm = NGramLM::train(std::vector<Sentence>{{"a", "a", "a", "b"}}, 1, k);
  CHECK(lm.prob({}, lm.id("a")) == doctest::Approx((3.0 + k) / (5.0 + 4.0 * k)));
  CHECK(lm.prob({}, NGramLM::kUnk) == doctest::Approx(k / (5.0 + 4.0 * k)));
}

TEST_CASE("bigram scores match a hand-computed sum") {
  // corpus: "a b" and "a a"; order 2, k = 1, V = {a, b, </s>, <unk>}
  const double k = 1.0, V = 4.0;
  const auto lm = NGramLM::train(std::vector<Sentence>{{"a", "b"}, {"a", "a"}}, 2, k);
  // unigram counts: a=3 b=1 </s>=2, total 6
  const double u_a = (3 + k) / (6 + k * V), u_b = (1 + k) / (6 + k * V), u_e = (2 + k) / (6 + k * V);
  // history <s>: a twice; history a: b once, a once, </s> once; history b: </s> once
  const double p_a_bos = (2 + k * V * u_a) / (2 + k * V);
  const double p_b_a = (1 + k * V * u_b) / (3 + k * V);
  const double p_e_b = (1 + k * V * u_e) / (1 + k * V);
  const double expected = std::log(p_a_bos) + std::log(p_b_a) + std::log(p_e_b);
  CHECK(lm.logprob({"a", "b"}) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("conditional distributions sum to one") {
  Rng rng(1);
  for (int order = 1; order <= 4; ++order) {
    const auto lm = NGramLM::train(random_corpus(rng, 60, 6), order, 0.05 * order);
    for (int c = 0; c < 250; ++c) {
      std::vector<int> history;
      for (std::size_t h = 0, n = uniform_index(rng, 4); h < n; ++h)
        history.push_back(static_cast<int>(uniform_index(rng, lm.outcome_count() + 1)));
      CHECK(std::abs(outcome_mass(lm, history) - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("scores stay finite on unseen symbols") {
  Rng rng(2);
  const auto lm = NGramLM::train(random_corpus(rng, 40, 4), 3, 0.1);
  for (int i = 0; i < 100; ++i) {
    const auto s = testing::random_sentence(rng, 1 + uniform_index(rng, 8), 8);
    CHECK(std::isfinite(lm.logprob(s)));
  }
}

// With </s> scored, a longer sentence can outscore a shorter one; the score
// of the prefix (without </s>) never rises as tokens are appended.
TEST_CASE("extending a sentence never raises its prefix score") {
  Rng rng(3);
  const auto lm = NGramLM::train(random_corpus(rng, 40, 5), 3, 0.1);
  for (int i = 0; i < 50; ++i) {
    auto s = testing::random_sentence(rng, 1 + uniform_index(rng, 5), 5);
    const double before = lm.logprob(s);
    s.push_back(std::string(1, "abcde"[uniform_index(rng, 5)]));
    std::vector<int> ids;
    double prefix_before = 0.0, prefix_after = 0.0;
    for (std::size_t p = 0; p < s.size(); ++p) {
      const double lp = std::log(lm.prob(ids, lm.id(s[p])));
      if (p + 1 < s.size()) prefix_before += lp;
      prefix_after += lp;
      ids.push_back(lm.id(s[p]));
    }
    CHECK(prefix_after <= prefix_before);
    CHECK(std::isfinite(before));
  }
}

TEST_CASE("perplexity identities") {
  // huge k: every outcome has probability 1/6, so perplexity is 6
  const auto uniform = NGramLM::train(std::vector<Sentence>{{"a", "b", "c", "d"}}, 2, 1e12);
  CHECK(uniform.perplexity(std::vector<Sentence>{{"a", "c", "b"}}) == doctest::Approx(6.0).epsilon(1e-6));

  Rng rng(4);
  const auto corpus = random_corpus(rng, 80, 5);
  const auto lm = NGramLM::train(corpus, 3, 0.1);
  const Sentence s{"a", "b", "c"};
  CHECK(lm.perplexity(std::vector<Sentence>{s}) == doctest::Approx(std::exp(-lm.logprob(s) / 4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(lm.perplexity(std::vector<Sentence>{}), DataError);
}

TEST_CASE("fitted model prefers its training data over random text") {
  Rng rng(5);
  std::vector<Sentence> patterned;
  for (int i = 0; i < 200; ++i) patterned.push_back({"a", "b", "c", "a", "b"});
  const auto lm = NGramLM::train(patterned, 3, 0.1);
  for (int t = 0; t < 20; ++t) {
    const auto random = random_corpus(rng, 20, 5);
    CHECK(lm.perplexity(patterned) <= lm.perplexity(random));
  }
}

TEST_CASE("interpolation endpoints and midpoint") {
  Rng rng(6);
  const auto base_corpus = random_corpus(rng, 50, 6);
  const auto in_corpus = random_corpus(rng, 30, 4);
  const auto base = NGramLM::train(base_corpus, 3, 0.1);
  const auto vocab = base.symbols();
  const auto in_only = NGramLM::train(in_corpus, 3, 0.1, {}, &vocab);
  const auto zero = base.finetune(in_corpus, 0.0);
  const auto one = base.finetune(in_corpus, 1.0);
  for (int i = 0; i < 50; ++i) {
    const auto s = testing::random_sentence(rng, 1 + uniform_index(rng, 6), 7);
    CHECK(std::abs(zero.logprob(s) - base.logprob(s)) <= 1e-12);
    CHECK(std::abs(one.logprob(s) - in_only.logprob(s)) <= 1e-12);
  }

  // disjoint unigram corpora, alpha 0.5: the average of the two estimates
  const auto b1 = NGramLM::train(std::vector<Sentence>{{"a", "a"}, {"b"}}, 1, 0.1);
  const auto v1 = b1.symbols();
  const auto i1 = NGramLM::train(std::vector<Sentence>{{"b", "b", "b"}}, 1, 0.1, {}, &v1);
  const auto mid = b1.finetune(std::vector<Sentence>{{"b", "b", "b"}}, 0.5);
  for (const auto& tok : {"a", "b"}) {
    const int id = b1.id(tok);
    CHECK(mid.prob({}, id) == doctest::Approx(0.5 * b1.prob({}, id) + 0.5 * i1.prob({}, id)).epsilon(1e-15));
  }
  CHECK_THROWS_AS(base.finetune(in_corpus, 1.5), UsageError);
}

TEST_CASE("weights act as multiplicities") {
  const std::vector<Sentence> unique{{"a", "b"}, {"b"}};
  const std::vector<std::uint64_t> w{3, 2};
  const auto weighted = NGramLM::train(unique, 2, 0.2, w);
  const auto expanded = NGramLM::train(std::vector<Sentence>{{"a", "b"}, {"a", "b"}, {"a", "b"}, {"b"}, {"b"}}, 2, 0.2);
  CHECK(weighted.serialize() == expanded.serialize());
}

TEST_CASE("serialization round trip preserves scores and hash") {
  testing::TempDir dir("lm");
  Rng rng(7);
  const auto lm = NGramLM::train(random_corpus(rng, 60, 6), 3, 0.05);
  const auto mixed = lm.finetune(random_corpus(rng, 10, 3), 0.3);
  for (const NGramLM* m : {&lm, &mixed}) {
    save(*m, dir / "m.lm");
    const auto back = load_lm(dir / "m.lm");
    CHECK(back.hash() == m->hash());
    for (int i = 0; i < 20; ++i) {
      const auto s = testing::random_sentence(rng, 1 + uniform_index(rng, 6), 7);
      CHECK(back.logprob(s) == m->logprob(s));
    }
  }
  CHECK_THROWS_AS(NGramLM::parse("nonsense\n"), DataError);
  CHECK_THROWS_AS(NGramLM::train(std::vector<Sentence>{{"a"}}, 0, 0.1), UsageError);
  CHECK_THROWS_AS(NGramLM::train(std::vector<Sentence>{{"a"}}, 2, 0.0), UsageError);
}
