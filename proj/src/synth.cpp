#include "stbt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace stbt {

namespace {

std::string make_word(std::size_t i, std::string_view consonants, std::string_view vowels) {
  const std::size_t syllables = consonants.size() * vowels.size();
  std::string w;
  std::size_t v = i;
  int count = 0;
  do {
    const std::size_t s = v % syllables;
    w += consonants[s / vowels.size()];
    w += vowels[s % vowels.size()];
    v /= syllables;
    ++count;
  } while (v > 0 || count < 2);
  return w;
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::vector<double> cumulative(const std::vector<double>& p) {
  std::vector<double> c(p.size());
  std::partial_sum(p.begin(), p.end(), c.begin());
  return c;
}

std::size_t draw(const std::vector<double>& cdf, Rng& rng) {
  const double u = uniform01(rng) * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

Sentence transpose(const std::vector<int>& ids, const std::vector<bool>& swap_class,
                   const std::vector<std::string>& words) {
  Sentence out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size();) {
    if (i + 1 < ids.size() && swap_class[ids[i]] && swap_class[ids[i + 1]]) {
      out.push_back(words[ids[i + 1]]);
      out.push_back(words[ids[i]]);
      i += 2;
    } else {
      out.push_back(words[ids[i]]);
      ++i;
    }
  }
  return out;
}

}  // namespace

void SynthSpec::derive() {
  if (vocab_size < 2) throw UsageError("synth: vocab size must be >= 2");
  if (!(zipf >= 0.0)) throw UsageError("synth: zipf exponent must be >= 0");
  if (!(successor_prob >= 0.0 && successor_prob <= 1.0)) throw UsageError("synth: successor_prob must lie in [0, 1]");
  if (successors < 1) throw UsageError("synth: successors must be >= 1");
  if (!(swap_fraction >= 0.0 && swap_fraction <= 1.0)) throw UsageError("synth: swap_fraction must lie in [0, 1]");
  if (!(noise >= 0.0 && noise <= 1.0)) throw UsageError("synth: noise must lie in [0, 1]");
  if (!(domain_shift > 0.0 && domain_shift <= 1.0)) throw UsageError("synth: domain_shift must lie in (0, 1]");
  if (min_length < 1 || max_length < min_length) throw UsageError("synth: need 1 <= min_length <= max_length");

  const auto n = static_cast<std::size_t>(vocab_size);
  Rng rng(derive_seed(seed, "synth-spec"));
  source_words.clear();
  target_words.clear();
  for (std::size_t i = 0; i < n; ++i) {
    source_words.push_back(make_word(i, "ktpsmnlr", "aeiou"));
    target_words.push_back(make_word(i, "bdgfvzhw", "aeiou") + "o");
  }
  lexicon.resize(n);
  std::iota(lexicon.begin(), lexicon.end(), 0);
  shuffle(lexicon, rng);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  swap_class.assign(n, false);
  const auto swaps = static_cast<std::size_t>(std::llround(swap_fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < swaps; ++i) swap_class[order[i]] = true;

  // Out-of-domain ranks rotate the in-domain ranking by half the vocabulary,
  // so the head of one domain is the middle of the other.
  shuffle(order, rng);
  in_rank.assign(n, 0);
  out_rank.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    in_rank[order[r]] = static_cast<int>(r);
    out_rank[order[r]] = static_cast<int>((r + n - n / 2) % n);
  }
  auto successor_table = [&](std::string_view label) {
    Rng r(derive_seed(seed, label));
    std::vector<std::vector<int>> next(n);
    for (auto& row : next)
      for (int k = 0; k < successors; ++k) row.push_back(static_cast<int>(uniform_index(r, n)));
    return next;
  };
  in_next = successor_table("synth-next-in");
  out_next = successor_table("synth-next-out");

  source_index.clear();
  target_index.clear();
  for (std::size_t i = 0; i < n; ++i) {
    source_index.emplace(source_words[i], static_cast<int>(i));
    target_index.emplace(target_words[i], static_cast<int>(i));
  }
}

std::string SynthSpec::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["vocab_size"] = vocab_size;
  j["zipf"] = zipf;
  j["successor_prob"] = successor_prob;
  j["successors"] = successors;
  j["swap_fraction"] = swap_fraction;
  j["noise"] = noise;
  j["domain_shift"] = domain_shift;
  j["min_length"] = min_length;
  j["max_length"] = max_length;
  j["seed"] = seed;
  if (!lexicon.empty()) {
    nlohmann::ordered_json lex = nlohmann::ordered_json::array();
    nlohmann::ordered_json swaps = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < lexicon.size(); ++i) {
      lex.push_back({source_words[i], target_words[lexicon[i]]});
      if (swap_class[i]) swaps.push_back(source_words[i]);
    }
    j["lexicon"] = lex;
    j["swap_class"] = swaps;
  }
  return j.dump(2) + "\n";
}

SynthSpec SynthSpec::from_json(std::string_view text) {
  SynthSpec s;
  try {
    const auto j = nlohmann::json::parse(text);
    s.vocab_size = j.value("vocab_size", s.vocab_size);
    s.zipf = j.value("zipf", s.zipf);
    s.successor_prob = j.value("successor_prob", s.successor_prob);
    s.successors = j.value("successors", s.successors);
    s.swap_fraction = j.value("swap_fraction", s.swap_fraction);
    s.noise = j.value("noise", s.noise);
    s.domain_shift = j.value("domain_shift", s.domain_shift);
    s.min_length = j.value("min_length", s.min_length);
    s.max_length = j.value("max_length", s.max_length);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("synth spec: ") + e.what());
  }
  s.derive();
  return s;
}

SynthSpec default_synth_spec() {
  SynthSpec s;
  s.derive();
  return s;
}

namespace {

std::vector<double> zipf_over(const std::vector<int>& rank, double exponent) {
  std::vector<double> p(rank.size());
  double z = 0.0;
  for (std::size_t i = 0; i < rank.size(); ++i) z += p[i] = std::pow(rank[i] + 1.0, -exponent);
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace

std::vector<double> unigram_distribution(const SynthSpec& spec, Domain d) {
  std::vector<double> p = zipf_over(spec.in_rank, spec.zipf);
  if (d == Domain::In) return p;
  const std::vector<double> rotated = zipf_over(spec.out_rank, spec.zipf);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = (1.0 - spec.domain_shift) * p[i] + spec.domain_shift * rotated[i];
  return p;
}

namespace {

struct Sampler {
  std::vector<double> cdf;
  const std::vector<std::vector<int>>* next;
  const std::vector<std::vector<int>>* shifted_next;  // null in-domain
  double shift = 0.0;
};

Sampler make_sampler(const SynthSpec& spec, Domain d) {
  if (d == Domain::In) return {cumulative(unigram_distribution(spec, d)), &spec.in_next, nullptr, 0.0};
  return {cumulative(unigram_distribution(spec, d)), &spec.in_next, &spec.out_next, spec.domain_shift};
}

std::vector<int> sample_ids(const SynthSpec& spec, const Sampler& s, Rng& rng) {
  const auto len = static_cast<std::size_t>(spec.min_length) +
                   uniform_index(rng, static_cast<std::size_t>(spec.max_length - spec.min_length + 1));
  std::vector<int> ids;
  for (std::size_t i = 0; i < len; ++i) {
    if (i > 0 && uniform01(rng) < spec.successor_prob) {
      const bool shifted = s.shifted_next && uniform01(rng) < s.shift;
      const auto& row = (*(shifted ? s.shifted_next : s.next))[ids.back()];
      ids.push_back(row[uniform_index(rng, row.size())]);
    } else {
      ids.push_back(static_cast<int>(draw(s.cdf, rng)));
    }
  }
  return ids;
}

Sentence words_of(const SynthSpec& spec, const std::vector<int>& ids) {
  Sentence s;
  for (int id : ids) s.push_back(spec.source_words[id]);
  return s;
}

}  // namespace

Sentence sample_sentence(const SynthSpec& spec, Domain d, Rng& rng) {
  return words_of(spec, sample_ids(spec, make_sampler(spec, d), rng));
}

Sentence ground_truth(const SynthSpec& spec, const Sentence& x) {
  std::vector<int> ids;
  for (const auto& tok : x) {
    auto it = spec.source_index.find(tok);
    if (it == spec.source_index.end()) throw DataError("ground_truth: unknown source symbol '" + tok + "'");
    ids.push_back(it->second);
  }
  // the swap class is defined on source ids; translate ids after reordering
  Sentence reordered = transpose(ids, spec.swap_class, spec.source_words);
  Sentence out;
  for (const auto& tok : reordered) out.push_back(spec.target_words[spec.lexicon[spec.source_index.at(tok)]]);
  return out;
}

Sentence inverse_ground_truth(const SynthSpec& spec, const Sentence& y) {
  std::vector<int> inverse(spec.lexicon.size());
  for (std::size_t i = 0; i < spec.lexicon.size(); ++i) inverse[spec.lexicon[i]] = static_cast<int>(i);
  std::vector<int> ids;
  for (const auto& tok : y) {
    auto it = spec.target_index.find(tok);
    if (it == spec.target_index.end()) throw DataError("inverse_ground_truth: unknown target symbol '" + tok + "'");
    ids.push_back(inverse[it->second]);
  }
  return transpose(ids, spec.swap_class, spec.source_words);
}

SynthBundle gen_corpora(const SynthSpec& spec, const SynthSizes& sizes) {
  if (sizes.parallel < 1 || sizes.mono_source < 1 || sizes.mono_target < 1 || sizes.dev < 1 || sizes.test < 1)
    throw UsageError("synth: every corpus size must be >= 1");
  if (spec.lexicon.empty()) throw UsageError("synth: spec not derived");
  const Sampler in = make_sampler(spec, Domain::In), out = make_sampler(spec, Domain::Out);

  auto parallel = [&](std::string name, std::size_t n, std::string_view label, bool noisy) {
    TaggedDataset ds;
    ds.name = std::move(name);
    ds.side = Side::Parallel;
    ds.tag = std::string(tags::kInDomain);
    Rng rng(derive_seed(spec.seed, label));
    Rng noise_rng(derive_seed(spec.seed, std::string(label) + "-noise"));
    for (std::size_t i = 0; i < n; ++i) {
      Sentence x = words_of(spec, sample_ids(spec, in, rng));
      Sentence y = ground_truth(spec, x);
      if (noisy)
        for (auto& tok : y)
          if (uniform01(noise_rng) < spec.noise) tok = spec.target_words[uniform_index(noise_rng, spec.target_words.size())];
      ds.pairs.push_back({std::move(x), std::move(y)});
    }
    return ds;
  };

  SynthBundle b;
  b.parallel = parallel("parallel", sizes.parallel, "synth-parallel", true);
  b.dev = parallel("dev", sizes.dev, "synth-dev", false);
  b.test = parallel("test", sizes.test, "synth-test", false);

  b.mono_source.name = "mono_source";
  b.mono_source.side = Side::MonoSource;
  b.mono_source.tag = std::string(tags::kSelfTrain);
  Rng ms(derive_seed(spec.seed, "synth-mono-source"));
  for (std::size_t i = 0; i < sizes.mono_source; ++i) b.mono_source.sentences.push_back(words_of(spec, sample_ids(spec, in, ms)));

  b.mono_target.name = "mono_target";
  b.mono_target.side = Side::MonoTarget;
  b.mono_target.tag = std::string(tags::kBackTranslation);
  Rng mt(derive_seed(spec.seed, "synth-mono-target"));
  for (std::size_t i = 0; i < sizes.mono_target; ++i)
    b.mono_target.sentences.push_back(ground_truth(spec, words_of(spec, sample_ids(spec, out, mt))));
  return b;
}

void write_bundle(const std::filesystem::path& dir, const SynthSpec& spec, const SynthBundle& b) {
  std::filesystem::create_directories(dir);
  write_file(dir / "spec.json", spec.to_json());
  write_parallel(dir / "parallel.tsv", b.parallel.pairs);
  write_parallel(dir / "dev.tsv", b.dev.pairs);
  write_parallel(dir / "test.tsv", b.test.pairs);
  write_mono(dir / "mono.src", b.mono_source.sentences);
  write_mono(dir / "mono.tgt", b.mono_target.sentences);
  write_dataset_manifest(dir / "datasets.json",
                         {{"parallel", "parallel.tsv", Side::Parallel, b.parallel.tag, 3},
                          {"mono_source", "mono.src", Side::MonoSource, b.mono_source.tag, 1},
                          {"mono_target", "mono.tgt", Side::MonoTarget, b.mono_target.tag, 1},
                          {"dev", "dev.tsv", Side::Parallel, b.dev.tag, 1},
                          {"test", "test.tsv", Side::Parallel, b.test.tag, 1}});
}

}  // namespace stbt
