#include <cmath>
#include <set>

#include "doctest.h"
#include "stbt/mine.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace stbt;
using namespace stbt::oracle;

namespace {

WebDoc doc(std::string url, std::vector<Sentence> sentences) { return {std::move(url), std::move(sentences), "xx"}; }

// b-language {u, v} into a-language {p, q}: t(p|u)=.8 t(q|u)=.2 t(p|v)=.3 t(q|v)=.7
LexModel hand_model() {
  const std::vector<TableEntry> t{{"u", "p", 0.8}, {"u", "q", 0.2}, {"v", "p", 0.3}, {"v", "q", 0.7}};
  return LexModel::from_table(Direction::Backward, t);
}

}  // namespace

TEST_CASE("levenshtein similarity") {
  CHECK(lev_sim("abc", "abc") == 1.0);
  CHECK(lev_sim("abc", "abd") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(lev_sim("", "ab") == 0.0);
  CHECK(lev_sim("", "") == 1.0);
  CHECK(lev_sim("kitten", "sitting") == doctest::Approx(1.0 - 3.0 / 7.0));
  // code points, not bytes: one substitution of a two-byte character
  CHECK(lev_sim("\xc3\xa9t\xc3\xa9", "\xc3\xa9te") == doctest::Approx(2.0 / 3.0));
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    std::string a, b;
    for (std::size_t k = 0, n = uniform_index(rng, 7); k < n; ++k) a += "abc"[uniform_index(rng, 3)];
    for (std::size_t k = 0, n = uniform_index(rng, 7); k < n; ++k) b += "abc"[uniform_index(rng, 3)];
    CHECK(lev_sim(a, b) == lev_sim(b, a));
    CHECK(lev_sim(a, b) >= 0.0);
    CHECK(lev_sim(a, b) <= 1.0);
  }
}

TEST_CASE("jaccard over dictionary-augmented token sets") {
  const Dictionary none;
  const auto a = doc("u", {{"a", "b"}}), b = doc("u", {{"b", "c"}});
  CHECK(jaccard(a, b, none) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(jaccard(a, a, none) == 1.0);
  CHECK(jaccard(a, doc("u", {{"d"}}), none) == 0.0);
  CHECK(jaccard(doc("u", {}), doc("v", {}), none) == 0.0);
  // a -> c adds c to A: {a, b, c} vs {b, c}
  const Dictionary dict{{"a", {"c"}}};
  CHECK(jaccard(a, b, dict) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("document similarity is the product of its factors") {
  const Dictionary none;
  const auto a = doc("abc", {{"a", "b"}}), b = doc("abd", {{"a", "b"}});
  CHECK(doc_sim(a, b, none) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  // lev 0.5 ("ab" vs "ax"), jaccard 1/3
  CHECK(doc_sim(doc("ab", {{"a", "b"}}), doc("ax", {{"b", "c"}}), none) == doctest::Approx(0.5 / 3.0).epsilon(1e-15));
  CHECK(doc_sim(doc("ab", {{"a"}}), doc("ab", {{"z"}}), none) == 0.0);
  CHECK(doc_sim(doc("", {{"a"}}), doc("ab", {{"a"}}), none) == 0.0);
  CHECK(doc_sim(a, a, none) == 1.0);
  const Dictionary sym{{"a", {"z"}}, {"z", {"a"}}};
  const auto c = doc("abz", {{"z", "b"}});
  CHECK(doc_sim(a, c, sym) == doc_sim(c, a, sym));
}

TEST_CASE("greedy matching hand cases") {
  const std::vector<std::vector<double>> m{{0.9, 0.1}, {0.8, 0.7}};
  CHECK(greedy_match(m, 0.0) == std::vector<Match>{{0, 0, 0.9}, {1, 1, 0.7}});
  CHECK(greedy_match(m, 0.95).empty());
  const std::vector<std::vector<double>> perm{{0, 0, 1}, {1, 0, 0}, {0, 1, 0}};
  const auto p = greedy_match(perm, 0.5);
  REQUIRE(p.size() == 3);
  std::set<std::pair<std::size_t, std::size_t>> got;
  for (const auto& x : p) got.insert({x.i, x.j});
  CHECK(got == std::set<std::pair<std::size_t, std::size_t>>{{0, 2}, {1, 0}, {2, 1}});
  CHECK(greedy_match({}, 0.0).empty());
  CHECK_THROWS_AS(greedy_match({{NAN}}, 0.0), DataError);
}

TEST_CASE("greedy matching equals brute-force greedy on 500 random matrices") {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t rows = 1 + uniform_index(rng, 5), cols = 1 + uniform_index(rng, 5);
    // coarse values force frequent ties
    std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
    for (auto& row : m)
      for (auto& v : row) v = trial % 2 ? static_cast<double>(uniform_index(rng, 4)) / 4.0 : uniform01(rng);
    const double threshold = uniform01(rng) * 0.6;
    const auto got = greedy_match(m, threshold);
    CHECK(got == brute_greedy(m, threshold));
    std::set<std::size_t> is, js;
    for (const auto& x : got) {
      CHECK(is.insert(x.i).second);
      CHECK(js.insert(x.j).second);
      CHECK(x.score >= threshold);
    }
  }
}

TEST_CASE("dictionary from the translation table") {
  const auto m = hand_model();
  const auto d = make_dictionary(m, 0.1, false);
  CHECK(d.at("u") == std::set<std::string>{"p"});
  CHECK(d.at("v") == std::set<std::string>{"q"});
  CHECK(d.count("p") == 0);
  const auto sym = make_dictionary(m, 0.1, true);
  CHECK(sym.at("p") == std::set<std::string>{"u"});
  CHECK(make_dictionary(m, 0.75, false).size() == 1);
}

TEST_CASE("sentence alignment") {
  const auto m = hand_model();
  const auto a = doc("a", {{"p"}, {"q"}}), b = doc("b", {{"u"}, {"v"}});
  const auto out = align_sentences(a, b, m, 0.0);
  REQUIRE(out.size() == 2);
  // per-token score ln((t(a|null) + t(a|b)) / 2); the null row is absent, so it contributes the floor
  const double fl = m.settings().floor;
  CHECK(out[0].i == 0);
  CHECK(out[0].j == 0);
  CHECK(out[0].score == doctest::Approx(std::log((fl + 0.8) / 2.0)).epsilon(1e-12));
  CHECK(out[1].i == 1);
  CHECK(out[1].j == 1);
  CHECK(out[1].score == doctest::Approx(std::log((fl + 0.7) / 2.0)).epsilon(1e-12));
  CHECK(out[0].pair == SentencePair{{"p"}, {"u"}});
  // the chosen matching has the larger total of the two possible ones
  const double diag = out[0].score + out[1].score;
  const double anti = std::log((fl + 0.3) / 2.0) + std::log((fl + 0.2) / 2.0);
  CHECK(diag > anti);
  // per-token probabilities are 0.4 and 0.35
  CHECK(align_sentences(a, b, m, 0.36).size() == 1);
  CHECK(align_sentences(doc("a", {}), doc("b", {}), m, 0.0).empty());
  CHECK(align_sentences(a, b, m, 0.0).front().score == channel_score(m, {"p"}, {"u"}));
  CHECK_THROWS_AS(align_sentences(a, b, m, 1.5), UsageError);
}

TEST_CASE("mining end to end and file formats") {
  testing::TempDir dir("mine");
  const auto m = hand_model();
  const auto dict = make_dictionary(m);
  write_file(dir / "a1.txt", "p q\np\np q\n");
  write_file(dir / "b1.txt", "u v\nu\n");
  write_file(dir / "b2.txt", "zz\n");
  write_file(dir / "index.tsv", "a\thttp://site/en/1\ta1.txt\nb\thttp://site/my/1\tb1.txt\nb\thttp://other/x\tb2.txt\n");
  const auto docs = load_documents(dir / "index.tsv");
  REQUIRE(docs.size() == 3);
  CHECK(docs[0].sentences.size() == 2);  // duplicates removed at ingestion
  std::vector<WebDoc> as, bs;
  for (const auto& d : docs) (d.lang == "a" ? as : bs).push_back(d);
  const auto mined = mine(as, bs, m, dict, 0.1, 0.0);
  REQUIRE_FALSE(mined.empty());
  for (const auto& p : mined) CHECK(p.url_b == "http://site/my/1");
  CHECK(mine(as, bs, m, dict, 0.1, 0.0, 3).size() == mined.size());
  write_mined(dir / "out.tsv", mined);
  CHECK(load_corpus(dir / "out.tsv", Side::Parallel).pairs.size() == mined.size());
  CHECK(std::filesystem::exists(dir / "out.tsv.scores"));
  write_file(dir / "bad.tsv", "a\tonly-two-fields\n");
  CHECK_THROWS_AS(load_documents(dir / "bad.tsv"), DataError);
}
