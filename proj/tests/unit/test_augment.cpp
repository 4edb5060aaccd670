#include <cmath>

#include "doctest.h"
#include "stbt/augment.hpp"
#include "support.hpp"

using namespace stbt;

namespace {

TaggedDataset mono(std::vector<Sentence> sentences, Side side) {
  TaggedDataset ds;
  ds.name = "mono";
  ds.side = side;
  ds.sentences = std::move(sentences);
  return ds;
}

std::shared_ptr<const Ensemble> identity(Direction d) {
  DecoderSettings st;
  st.window = 0;
  const std::vector<TableEntry> t{{"x", "x", 1.0}, {"y", "y", 1.0}};
  return std::make_shared<const Ensemble>(Ensemble::single(LexModel::from_table(d, t, st)));
}

// Generator prefers a (0.6) over b (0.4) for the single input word p, while
// the channel model explains p far better from b (0.9) than from a (0.1).
struct TwoCandidates {
  std::shared_ptr<const Ensemble> generator, channel;
  std::shared_ptr<const NGramLM> lm;

  explicit TwoCandidates(Direction generator_direction) {
    DecoderSettings st;
    st.window = 0;
    const Direction other = generator_direction == Direction::Forward ? Direction::Backward : Direction::Forward;
    const std::vector<TableEntry> gen{{"p", "a", 0.6}, {"p", "b", 0.4}};
    const std::vector<TableEntry> chan{{"a", "p", 0.1}, {"a", "q", 0.9}, {"b", "p", 0.9}, {"b", "q", 0.1}};
    generator = std::make_shared<const Ensemble>(Ensemble::single(LexModel::from_table(generator_direction, gen, st)));
    channel = std::make_shared<const Ensemble>(Ensemble::single(LexModel::from_table(other, chan, st)));
    lm = std::make_shared<const NGramLM>(NGramLM::train(std::vector<Sentence>{{"a"}, {"b"}}, 1, 1.0));
  }

  RerankContext context() const { return {channel, lm, {1.0, 0.0}, 10}; }

  // hand scores: fwd = ln t, channel = ln((floor + t) / 2) with the null row absent
  void check_scores() const {
    const auto list = generator->nbest({"p"}, 10);
    REQUIRE(list.entries.size() == 2);
    CHECK(list.entries[0].hypothesis == Sentence{"a"});
    CHECK(list.entries[0].fwd == doctest::Approx(std::log(0.6)).epsilon(1e-12));
    const double fl = channel->lead().settings().floor;
    const auto out = rerank(list, *channel, *lm, {1.0, 0.0});
    CHECK(out.entries[0].hypothesis == Sentence{"b"});
    CHECK(*out.entries[0].combined == doctest::Approx(std::log(0.4) + std::log((fl + 0.9) / 2.0)).epsilon(1e-12));
    CHECK(*out.entries[1].combined == doctest::Approx(std::log(0.6) + std::log((fl + 0.1) / 2.0)).epsilon(1e-12));
  }
};

}  // namespace

TEST_CASE("identity models copy sentences through") {
  const auto bt = back_translate(*identity(Direction::Backward), mono({{"x", "y"}}, Side::MonoTarget), DecodeMode::Beam, nullptr);
  REQUIRE(bt.data.pairs.size() == 1);
  CHECK(bt.data.pairs[0].source == Sentence{std::string(tags::kBackTranslation), "x", "y"});
  CHECK(bt.data.pairs[0].target == Sentence{"x", "y"});
  CHECK(bt.data.tag == tags::kBackTranslation);

  const auto st = self_train(*identity(Direction::Forward), mono({{"y", "x"}}, Side::MonoSource), DecodeMode::Beam, nullptr);
  REQUIRE(st.data.pairs.size() == 1);
  CHECK(st.data.pairs[0].source == Sentence{std::string(tags::kSelfTrain), "y", "x"});
  CHECK(st.data.pairs[0].target == Sentence{"y", "x"});  // target side stays untagged
}

TEST_CASE("direction mismatch is rejected") {
  CHECK_THROWS_AS(back_translate(*identity(Direction::Forward), mono({{"x"}}, Side::MonoTarget), DecodeMode::Beam, nullptr),
                  UsageError);
  CHECK_THROWS_AS(self_train(*identity(Direction::Backward), mono({{"x"}}, Side::MonoSource), DecodeMode::Beam, nullptr),
                  UsageError);
}

TEST_CASE("reranked back-translation picks the channel-favored source") {
  const TwoCandidates c(Direction::Backward);
  c.check_scores();
  const auto ctx = c.context();
  const auto data = mono({{"p"}}, Side::MonoTarget);
  const auto beam = back_translate(*c.generator, data, DecodeMode::Beam, nullptr);
  const auto rr = back_translate(*c.generator, data, DecodeMode::Rerank, &ctx);
  CHECK(beam.data.pairs[0].source.back() == "a");
  CHECK(rr.data.pairs[0].source.back() == "b");
  CHECK(rr.provenance.mode == DecodeMode::Rerank);
  CHECK(rr.provenance.weights == NoisyChannelWeights{1.0, 0.0});
}

TEST_CASE("reranked self-training differs from beam self-training") {
  const TwoCandidates c(Direction::Forward);
  c.check_scores();
  const auto ctx = c.context();
  const auto data = mono({{"p"}}, Side::MonoSource);
  CHECK(self_train(*c.generator, data, DecodeMode::Beam, nullptr).data.pairs[0].target == Sentence{"a"});
  CHECK(self_train(*c.generator, data, DecodeMode::Rerank, &ctx).data.pairs[0].target == Sentence{"b"});
}

TEST_CASE("one pair per input, verbatim preserved side, deterministic order") {
  Rng rng(1);
  std::vector<TableEntry> t;
  for (const char* s : {"x", "y", "z"})
    for (const char* u : {"x", "y", "z"}) t.push_back({s, u, 0.05 + 0.3 * uniform01(rng)});
  const auto g = std::make_shared<const Ensemble>(Ensemble::single(LexModel::from_table(Direction::Backward, t)));
  std::vector<Sentence> sentences;
  for (int i = 0; i < 200; ++i) sentences.push_back(testing::random_sentence(rng, 1 + uniform_index(rng, 5), 3, "xyz"));
  const auto data = mono(sentences, Side::MonoTarget);
  const auto a = back_translate(*g, data, DecodeMode::Beam, nullptr, 5, 1);
  const auto b = back_translate(*g, data, DecodeMode::Beam, nullptr, 5, 3);
  REQUIRE(a.data.pairs.size() == sentences.size());
  CHECK(a.data.pairs == b.data.pairs);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    CHECK(a.data.pairs[i].target == sentences[i]);
    CHECK(a.data.pairs[i].source.size() == sentences[i].size() + 1);
  }
  CHECK(a.provenance.generator == g->hash());
  CHECK(a.provenance.members == g->manifest());
}

TEST_CASE("outputs with nothing known are dropped and counted") {
  // q is outside the model, so its copy-through output is all-unknown
  const auto bt = back_translate(*identity(Direction::Backward), mono({{"x"}, {"q"}, {"y", "q"}}, Side::MonoTarget),
                                 DecodeMode::Beam, nullptr);
  CHECK(bt.data.pairs.size() == 2);
  CHECK(bt.provenance.dropped == 1);
}

TEST_CASE("training mixes carry the right tag on every source") {
  const auto bitext = testing::parallel_dataset({{{"a"}, {"x"}}, {{"b", "a"}, {"y", "x"}}});
  const auto st = self_train(*identity(Direction::Forward), mono({{"x"}, {"y", "x"}, {"y"}}, Side::MonoSource),
                             DecodeMode::Beam, nullptr);
  const auto bt = back_translate(*identity(Direction::Backward), mono({{"y"}}, Side::MonoTarget), DecodeMode::Beam, nullptr);
  const DataMix mix = assemble_training_mix(bitext, &st.data, &bt.data, {3, 2, 4});
  CHECK(mix.size() == 2 * 3 + 3 * 2 + 1 * 4);
  for (const auto& ds : mix.datasets())
    for (const auto& p : ds.pairs) {
      CHECK(p.source.front() == ds.tag);
      CHECK_FALSE(is_tag(p.target.front()));
    }
  CHECK(mix.datasets()[0].tag == tags::kInDomain);
  CHECK(mix.datasets()[1].tag == tags::kSelfTrain);
  CHECK(mix.datasets()[2].tag == tags::kBackTranslation);

  CHECK(assemble_training_mix(bitext, nullptr, nullptr, {}).flatten().size() == 2);
  CHECK(assemble_training_mix(bitext, nullptr, &bt.data, {1, 1, 2}).size() == 4);
  CHECK_THROWS_AS(assemble_training_mix(bitext, nullptr, nullptr, {0, 1, 1}), UsageError);
}

TEST_CASE("synthetic datasets round trip with provenance") {
  testing::TempDir dir("augment");
  const TwoCandidates c(Direction::Backward);
  const auto ctx = c.context();
  auto ds = back_translate(*c.generator, mono({{"p"}, {"p", "p"}}, Side::MonoTarget), DecodeMode::Rerank, &ctx, 42);
  write_synthetic(dir / "bt.tsv", ds);
  const auto back = read_synthetic(dir / "bt.tsv", "bt", std::string(tags::kBackTranslation));
  CHECK(back.data.pairs == ds.data.pairs);
  CHECK(back.provenance.generator == ds.provenance.generator);
  CHECK(back.provenance.seed == 42);
  CHECK(back.provenance.to_json() == ds.provenance.to_json());
  CHECK_THROWS_AS(Provenance::from_json("{}"), DataError);
}
