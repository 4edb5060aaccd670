#include <cmath>
#include <map>

#include "doctest.h"
#include "stbt/synth.hpp"
#include "support.hpp"

using namespace stbt;

namespace {

SynthSizes small_sizes() {
  SynthSizes s;
  s.parallel = 300;
  s.mono_source = 3000;
  s.mono_target = 3000;
  s.dev = 50;
  s.test = 50;
  return s;
}

Sentence random_source(const SynthSpec& spec, Rng& rng, std::size_t len) {
  Sentence s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(spec.source_words[uniform_index(rng, spec.source_words.size())]);
  return s;
}

std::map<std::string, double> unigram_frequencies(const std::vector<Sentence>& corpus) {
  std::map<std::string, double> f;
  double n = 0;
  for (const auto& s : corpus)
    for (const auto& w : s) {
      f[w] += 1;
      n += 1;
    }
  for (auto& [w, c] : f) c /= n;
  return f;
}

}  // namespace

TEST_CASE("lexicon is a bijection and the defaults hold") {
  const auto spec = default_synth_spec();
  CHECK(spec.vocab_size == 200);
  const SynthSizes sizes;
  CHECK(sizes.parallel == 2000);
  CHECK(sizes.mono_source == 50000);
  CHECK(sizes.mono_target == 50000);
  CHECK(sizes.dev == 500);
  CHECK(sizes.test == 500);
  std::vector<int> hits(spec.vocab_size, 0);
  for (int t : spec.lexicon) ++hits.at(t);
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("swap rule traces") {
  auto spec = default_synth_spec();
  int in_class = -1, in_class2 = -1, out_class = -1;
  for (int i = 0; i < spec.vocab_size; ++i) {
    if (spec.swap_class[i] && in_class < 0) in_class = i;
    else if (spec.swap_class[i] && in_class2 < 0) in_class2 = i;
    else if (!spec.swap_class[i] && out_class < 0) out_class = i;
  }
  REQUIRE(in_class2 >= 0);
  REQUIRE(out_class >= 0);
  auto src = [&](int i) { return spec.source_words[i]; };
  auto tgt = [&](int i) { return spec.target_words[spec.lexicon[i]]; };
  // a word outside the class never moves
  CHECK(ground_truth(spec, {src(out_class), src(in_class)}) == Sentence{tgt(out_class), tgt(in_class)});
  CHECK(ground_truth(spec, {src(in_class), src(out_class)}) == Sentence{tgt(in_class), tgt(out_class)});
  // two class members are transposed
  CHECK(ground_truth(spec, {src(in_class), src(in_class2)}) == Sentence{tgt(in_class2), tgt(in_class)});
  // left to right without overlap: s s s -> (s s) swapped, third untouched
  CHECK(ground_truth(spec, {src(in_class), src(in_class2), src(in_class)}) ==
        Sentence{tgt(in_class2), tgt(in_class), tgt(in_class)});
  CHECK_THROWS_AS(ground_truth(spec, {"not-a-word"}), DataError);
}

TEST_CASE("ground truth preserves length and inverts") {
  const auto spec = default_synth_spec();
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto x = random_source(spec, rng, 1 + uniform_index(rng, 12));
    const auto y = ground_truth(spec, x);
    CHECK(y.size() == x.size());
    CHECK(inverse_ground_truth(spec, y) == x);
  }
}

TEST_CASE("domain unigram distributions differ by more than 0.2") {
  const auto spec = default_synth_spec();
  const auto in = unigram_distribution(spec, Domain::In), out = unigram_distribution(spec, Domain::Out);
  double tv = 0.0, zin = 0.0, zout = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    tv += std::abs(in[i] - out[i]) / 2.0;
    zin += in[i];
    zout += out[i];
  }
  CHECK(zin == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(zout == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tv > 0.2);

  // empirical: mono-source words against the sources behind mono-target
  const auto bundle = gen_corpora(spec, small_sizes());
  std::vector<Sentence> hidden;
  for (const auto& y : bundle.mono_target.sentences) hidden.push_back(inverse_ground_truth(spec, y));
  const auto fs = unigram_frequencies(bundle.mono_source.sentences), ft = unigram_frequencies(hidden);
  double etv = 0.0;
  for (const auto& w : spec.source_words) {
    const double a = fs.count(w) ? fs.at(w) : 0.0, b = ft.count(w) ? ft.at(w) : 0.0;
    etv += std::abs(a - b) / 2.0;
  }
  CHECK(etv > 0.2);
}

TEST_CASE("corpora follow the generation contract") {
  auto spec = default_synth_spec();
  spec.noise = 0.0;
  spec.derive();
  const auto b = gen_corpora(spec, small_sizes());
  CHECK(b.parallel.pairs.size() == 300);
  CHECK(b.mono_source.sentences.size() == 3000);
  for (const auto* ds : {&b.parallel, &b.dev, &b.test})
    for (const auto& p : ds->pairs) CHECK(p.target == ground_truth(spec, p.source));
  for (const auto& s : b.mono_source.sentences) {
    CHECK(static_cast<int>(s.size()) >= spec.min_length);
    CHECK(static_cast<int>(s.size()) <= spec.max_length);
  }

  // noise touches the parallel targets only
  auto noisy = default_synth_spec();
  noisy.noise = 0.3;
  noisy.derive();
  const auto nb = gen_corpora(noisy, small_sizes());
  std::size_t corrupted = 0;
  for (const auto& p : nb.parallel.pairs) corrupted += p.target != ground_truth(noisy, p.source);
  CHECK(corrupted > 0);
  for (const auto& p : nb.test.pairs) CHECK(p.target == ground_truth(noisy, p.source));
}

TEST_CASE("generation is deterministic by seed") {
  const auto spec = default_synth_spec();
  const auto a = gen_corpora(spec, small_sizes()), b = gen_corpora(spec, small_sizes());
  CHECK(a.parallel.pairs == b.parallel.pairs);
  CHECK(a.mono_target.sentences == b.mono_target.sentences);
  auto other = default_synth_spec();
  other.seed = 2;
  other.derive();
  CHECK(gen_corpora(other, small_sizes()).parallel.pairs != a.parallel.pairs);
}

TEST_CASE("spec file round trip and validation") {
  testing::TempDir dir("synth");
  auto spec = default_synth_spec();
  spec.domain_shift = 0.7;
  spec.derive();
  const auto back = SynthSpec::from_json(spec.to_json());
  CHECK(back.to_json() == spec.to_json());
  CHECK(back.lexicon == spec.lexicon);
  CHECK_THROWS_AS(SynthSpec::from_json("{"), DataError);
  auto bad = default_synth_spec();
  bad.domain_shift = 0.0;
  CHECK_THROWS_AS(bad.derive(), UsageError);
  SynthSizes zero = small_sizes();
  zero.dev = 0;
  CHECK_THROWS_AS(gen_corpora(spec, zero), UsageError);

  write_bundle(dir.path(), spec, gen_corpora(spec, small_sizes()));
  const auto datasets = load_datasets(dir / "datasets.json");
  CHECK(datasets.size() == 5);
  CHECK(std::filesystem::exists(dir / "spec.json"));
}
