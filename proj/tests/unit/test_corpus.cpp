#include <algorithm>
#include <map>

#include "doctest.h"
#include "stbt/corpus.hpp"
#include "support.hpp"

using namespace stbt;
using stbt::testing::parallel_dataset;
using stbt::testing::TempDir;

TEST_CASE("text helpers") {
  CHECK(split_ws(" a\tb  c\r\n") == Sentence{"a", "b", "c"});
  CHECK(join({"a", "b"}) == "a b");
  CHECK(is_tag("<d:in>"));
  CHECK_FALSE(is_tag("<>"));
  CHECK_FALSE(is_tag("word"));
  CHECK(strip_tag({"<t>", "a"}) == Sentence{"a"});
  CHECK(strip_tag({"a", "<t>"}) == Sentence{"a", "<t>"});
  CHECK(utf8_chars("aé") == std::vector<std::string>{"a", "é"});
  CHECK(valid_utf8("ကခ"));
  CHECK_FALSE(valid_utf8("\xC0\xAF"));  // overlong '/'
  CHECK_FALSE(valid_utf8("\xE0\x80"));  // truncated
  CHECK(parse_double(format_double(0.1)) == 0.1);
  CHECK_THROWS_AS(parse_double("1x"), DataError);
}

TEST_CASE("sha256 of known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("derived seeds depend on every input") {
  const auto s = derive_seed(7, "stage", 0);
  CHECK(s == derive_seed(7, "stage", 0));
  CHECK(s != derive_seed(8, "stage", 0));
  CHECK(s != derive_seed(7, "stagf", 0));
  CHECK(s != derive_seed(7, "stage", 1));
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(50, 3,
                               [](std::size_t i) {
                                 if (i == 17) throw DataError("boom");
                               }),
                  DataError);
}

TEST_CASE("parallel line parsing") {
  const auto ds = parse_corpus("a b\tc d\n", Side::Parallel);
  REQUIRE(ds.pairs.size() == 1);
  CHECK(ds.pairs[0] == SentencePair{{"a", "b"}, {"c", "d"}});
}

TEST_CASE("blank lines are dropped and counted") {
  const auto ds = parse_corpus("a b\n\nc\n", Side::MonoSource);
  CHECK(ds.sentences.size() == 2);
  CHECK(ds.dropped == 1);
}

TEST_CASE("duplicate lines survive loading") {
  const auto ds = parse_corpus("x\ty\nx\ty\n", Side::Parallel);
  REQUIRE(ds.pairs.size() == 2);
  CHECK(ds.pairs[0] == ds.pairs[1]);
}

TEST_CASE("malformed parallel input") {
  CHECK_THROWS_AS(parse_corpus("a b c\n", Side::Parallel), DataError);
  CHECK_THROWS_AS(parse_corpus("a\tb\tc\n", Side::Parallel), DataError);
  CHECK_THROWS_AS(parse_corpus("a\t\xFF\n", Side::Parallel), DataError);
  const auto ds = parse_corpus("a\t \nb\tc\n", Side::Parallel);
  CHECK(ds.pairs.size() == 1);
  CHECK(ds.dropped == 1);
}

TEST_CASE("loading is deterministic") {
  TempDir dir("corpus");
  write_file(dir / "p.tsv", "a b\tc\nd\te f\n");
  const auto a = load_corpus(dir / "p.tsv", Side::Parallel, "p", "<d:in>", 3);
  const auto b = load_corpus(dir / "p.tsv", Side::Parallel, "p", "<d:in>", 3);
  CHECK(a.pairs == b.pairs);
  CHECK(a.upsample == 3);
  CHECK_THROWS_AS(load_corpus(dir / "missing.tsv", Side::Parallel), DataError);
  CHECK_THROWS_AS(load_corpus(dir / "p.tsv", Side::Parallel, "p", "notatag"), DataError);
  CHECK_THROWS_AS(load_corpus(dir / "p.tsv", Side::Parallel, "p", "<d:in>", 0), DataError);
}

TEST_CASE("tagging prepends once and never touches targets") {
  auto ds = parallel_dataset({{{"a"}, {"b"}}}, "<d:alt>");
  const auto tagged = apply_tag(ds);
  CHECK(tagged.pairs[0] == SentencePair{{"<d:alt>", "a"}, {"b"}});
  CHECK(apply_tag(tagged).pairs == tagged.pairs);

  TaggedDataset mono;
  mono.side = Side::MonoTarget;
  mono.tag = "<d:bt>";
  mono.sentences = {{"x", "y"}};
  CHECK(apply_tag(mono).sentences == mono.sentences);

  const auto re = retag(tagged, "<d:st>");
  CHECK(re.pairs[0] == SentencePair{{"<d:st>", "a"}, {"b"}});
}

TEST_CASE("mix size is the upsampled sum") {
  const auto three = parallel_dataset({{{"a"}, {"x"}}, {{"b"}, {"y"}}, {{"c"}, {"z"}}}, "<d:in>", 3);
  const auto mix = build_mix({three});
  CHECK(mix.size() == 9);
  std::map<std::vector<std::string>, int> copies;
  for (const auto& p : mix.flatten()) copies[p.source]++;
  CHECK(copies.size() == 3);
  for (const auto& [src, n] : copies) CHECK(n == 3);

  const auto a = parallel_dataset({{{"a"}, {"x"}}, {{"b"}, {"y"}}}, "<d:in>", 1, "a");
  const auto b = parallel_dataset({{{"c"}, {"z"}}}, "<d:out>", 4, "b");
  CHECK(build_mix({a, b}).size() == 6);
}

TEST_CASE("mix size law over random dataset lists") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TaggedDataset> list;
    std::size_t expected = 0;
    const std::size_t count = 1 + uniform_index(rng, 4);
    for (std::size_t d = 0; d < count; ++d) {
      std::vector<SentencePair> pairs;
      const std::size_t n = 1 + uniform_index(rng, 6);
      for (std::size_t i = 0; i < n; ++i)
        pairs.push_back({testing::random_sentence(rng, 1 + uniform_index(rng, 3), 4),
                         testing::random_sentence(rng, 1 + uniform_index(rng, 3), 4)});
      const int up = 1 + static_cast<int>(uniform_index(rng, 5));
      expected += n * static_cast<std::size_t>(up);
      list.push_back(parallel_dataset(std::move(pairs), "<d:in>", up, "d" + std::to_string(d)));
    }
    const auto mix = build_mix(list);
    CHECK(mix.size() == expected);
    CHECK(mix.flatten().size() == expected);
  }
}

TEST_CASE("mix rejects monolingual data, empty sides and empty mixes") {
  TaggedDataset mono;
  mono.side = Side::MonoSource;
  mono.sentences = {{"a"}};
  CHECK_THROWS_AS(build_mix({mono}), DataError);
  CHECK_THROWS_AS(build_mix({parallel_dataset({{{"a"}, {}}})}), DataError);
  CHECK_THROWS_AS(build_mix({parallel_dataset({})}), DataError);
}

TEST_CASE("direction swap moves the tag and is an involution") {
  const auto ds = apply_tag(parallel_dataset({{{"a"}, {"b"}}}, "<t>"));
  const auto swapped = swap_dataset(ds);
  CHECK(swapped.pairs[0] == SentencePair{{"<t>", "b"}, {"a"}});

  Rng rng(3);
  std::vector<SentencePair> pairs;
  for (int i = 0; i < 30; ++i) pairs.push_back({testing::random_sentence(rng, 3, 5), testing::random_sentence(rng, 2, 5)});
  const auto mix = build_mix({parallel_dataset(pairs, "<d:in>", 2), parallel_dataset(pairs, "<d:bt>", 1, "bt")});
  const auto twice = swap_direction(swap_direction(mix));
  CHECK(twice.flatten() == mix.flatten());
  CHECK_THROWS_AS(swap_dataset(parallel_dataset({{{"<t>"}, {"b"}}}, "<t>")), DataError);
}

TEST_CASE("dedup keeps first occurrences in order") {
  CHECK(dedup({{"a"}, {"b"}, {"a"}, {"c"}, {"b"}}) == std::vector<Sentence>{{"a"}, {"b"}, {"c"}});
}

TEST_CASE("dataset manifest round trip") {
  TempDir dir("manifest");
  write_file(dir / "p.tsv", "a\tb\n");
  write_file(dir / "m.txt", "c d\n");
  write_dataset_manifest(dir / "datasets.json", {{"p", "p.tsv", Side::Parallel, "<d:in>", 3},
                                                 {"m", "m.txt", Side::MonoTarget, "<d:bt>", 1}});
  const auto entries = read_dataset_manifest(dir / "datasets.json");
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].upsample == 3);
  CHECK(entries[1].side == Side::MonoTarget);
  const auto loaded = load_datasets(dir / "datasets.json");
  CHECK(loaded[0].pairs.size() == 1);
  CHECK(loaded[1].sentences[0] == Sentence{"c", "d"});
  write_file(dir / "bad.json", "{\"not\": \"a list\"}");
  CHECK_THROWS_AS(read_dataset_manifest(dir / "bad.json"), DataError);
}
