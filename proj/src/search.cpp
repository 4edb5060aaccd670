#include "stbt/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "stbt/metrics.hpp"

namespace stbt {

TrainOptions TrialConfig::train_options(Direction direction) const {
  TrainOptions o;
  o.iterations = em_iterations;
  o.seed = seed;
  o.direction = direction;
  o.decoder.beam = beam;
  o.decoder.window = window;
  o.decoder.lm_weight = lm_weight;
  o.lm_order = lm_order;
  o.lm_k = lm_k;
  return o;
}

namespace {

nlohmann::ordered_json config_json(const TrialConfig& c) {
  nlohmann::ordered_json j;
  j["em_iterations"] = c.em_iterations;
  j["lm_order"] = c.lm_order;
  j["lm_k"] = c.lm_k;
  j["lm_weight"] = c.lm_weight;
  j["window"] = c.window;
  j["beam"] = c.beam;
  j["up_bitext"] = c.up_bitext;
  j["up_st"] = c.up_st;
  j["up_bt"] = c.up_bt;
  j["seed"] = c.seed;
  return j;
}

template <class T>
const T& pick(const std::vector<T>& values, Rng& rng) {
  return values[uniform_index(rng, values.size())];
}

}  // namespace

std::string TrialConfig::to_json() const { return config_json(*this).dump(); }

TrialConfig default_config() { return TrialConfig{}; }

std::vector<std::uint64_t> SearchSpace::default_seeds() {
  std::vector<std::uint64_t> s(30);
  std::iota(s.begin(), s.end(), 1);
  return s;
}

void SearchSpace::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("search space: dimension '") + what + "' is empty");
  };
  need(!em_iterations.empty(), "em_iterations");
  need(!lm_order.empty(), "lm_order");
  need(!lm_k.empty(), "lm_k");
  need(!lm_weight.empty(), "lm_weight");
  need(!window.empty(), "window");
  need(!beam.empty(), "beam");
  need(!up_bitext.empty(), "up_bitext");
  need(!up_st.empty(), "up_st");
  need(!up_bt.empty(), "up_bt");
  need(!seeds.empty(), "seeds");
  for (int v : em_iterations)
    if (v < 1) throw UsageError("search space: em_iterations must be >= 1");
  for (int v : lm_order)
    if (v < 1 || v > NGramLM::kMaxOrder) throw UsageError("search space: lm_order out of range");
  for (double v : lm_k)
    if (!(v > 0.0)) throw UsageError("search space: lm_k must be > 0");
  for (double v : lm_weight)
    if (!(v >= 0.0)) throw UsageError("search space: lm_weight must be >= 0");
  for (int v : window)
    if (v < 0 || v > 30) throw UsageError("search space: window must lie in [0, 30]");
  for (int v : beam)
    if (v < 1) throw UsageError("search space: beam must be >= 1");
  for (const auto* dim : {&up_bitext, &up_st, &up_bt})
    for (int v : *dim)
      if (v < 1) throw UsageError("search space: upsampling ratios must be >= 1");
}

std::string SearchSpace::to_json() const {
  nlohmann::ordered_json j;
  j["em_iterations"] = em_iterations;
  j["lm_order"] = lm_order;
  j["lm_k"] = lm_k;
  j["lm_weight"] = lm_weight;
  j["window"] = window;
  j["beam"] = beam;
  j["up_bitext"] = up_bitext;
  j["up_st"] = up_st;
  j["up_bt"] = up_bt;
  j["seeds"] = seeds;
  return j.dump(2) + "\n";
}

SearchSpace SearchSpace::from_json(std::string_view text) {
  SearchSpace s;
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw DataError("search space must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "em_iterations") s.em_iterations = value.get<std::vector<int>>();
      else if (key == "lm_order") s.lm_order = value.get<std::vector<int>>();
      else if (key == "lm_k") s.lm_k = value.get<std::vector<double>>();
      else if (key == "lm_weight") s.lm_weight = value.get<std::vector<double>>();
      else if (key == "window") s.window = value.get<std::vector<int>>();
      else if (key == "beam") s.beam = value.get<std::vector<int>>();
      else if (key == "up_bitext") s.up_bitext = value.get<std::vector<int>>();
      else if (key == "up_st") s.up_st = value.get<std::vector<int>>();
      else if (key == "up_bt") s.up_bt = value.get<std::vector<int>>();
      else if (key == "seeds") s.seeds = value.get<std::vector<std::uint64_t>>();
      else throw DataError("search space: unknown dimension '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("search space: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<TrialConfig> sample_configs(const SearchSpace& space, int n, std::uint64_t seed) {
  if (n < 1) throw UsageError("sample_configs: n must be >= 1");
  space.validate();
  Rng rng(derive_seed(seed, "search-configs"));
  std::vector<TrialConfig> out;
  for (int i = 0; i < n; ++i) {
    TrialConfig c;
    c.em_iterations = pick(space.em_iterations, rng);
    c.lm_order = pick(space.lm_order, rng);
    c.lm_k = pick(space.lm_k, rng);
    c.lm_weight = pick(space.lm_weight, rng);
    c.window = pick(space.window, rng);
    c.beam = pick(space.beam, rng);
    c.up_bitext = pick(space.up_bitext, rng);
    c.up_st = pick(space.up_st, rng);
    c.up_bt = pick(space.up_bt, rng);
    c.seed = pick(space.seeds, rng);
    out.push_back(c);
  }
  return out;
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience < 1) throw UsageError("patience must be >= 1");
}

bool EarlyStopper::observe(double value) {
  if (seen_ == 0 || value < best_) {
    best_ = value;
    best_index_ = seen_;
    bad_ = 0;
  } else {
    ++bad_;
  }
  ++seen_;
  return bad_ >= patience_;
}

DataMix TrainingData::mix(const Upsampling& upsamples) const {
  return assemble_training_mix(bitext, st ? &*st : nullptr, bt ? &*bt : nullptr, upsamples);
}

TrainingData TrainingData::swapped() const {
  TrainingData out;
  out.bitext = swap_dataset(apply_tag(bitext));
  if (st) out.st = swap_dataset(apply_tag(*st));
  if (bt) out.bt = swap_dataset(apply_tag(*bt));
  return out;
}

std::string TrialResult::to_json() const {
  nlohmann::ordered_json j;
  j["trial"] = index;
  j["config"] = config_json(config);
  j["dev_perplexity"] = dev_perplexity;
  j["iterations_run"] = iterations_run;
  j["checkpoint"] = checkpoint;
  j["bleu"] = bleu;
  j["model"] = model ? model->hash() : std::string();
  return j.dump();
}

double dev_perplexity(const LexModel& m, std::span<const SentencePair> dev) {
  if (dev.empty()) throw DataError("dev_perplexity: empty dev set");
  const LexModel* members[] = {&m};
  double lp = 0.0;
  std::size_t tokens = 0;
  for (const auto& p : dev) {
    lp += detail::ibm1_logprob(members, p.target, p.source);
    tokens += strip_tag(p.target).size();
  }
  if (tokens == 0) throw DataError("dev_perplexity: dev targets are empty");
  return std::exp(-lp / static_cast<double>(tokens));
}

namespace {

double dev_bleu(const LexModel& m, std::span<const SentencePair> dev, const Detok& detok, unsigned workers,
                std::vector<Sentence>* outputs) {
  std::vector<Sentence> sources;
  for (const auto& p : dev) sources.push_back(p.source);
  const Ensemble e = Ensemble::single(m);
  std::vector<Sentence> hyps = decode_all(e, sources, DecodeMode::Beam, nullptr, workers);
  BleuStats total;
  for (std::size_t i = 0; i < dev.size(); ++i) total += bleu_stats(detok(hyps[i]), detok(dev[i].target));
  if (outputs) *outputs = std::move(hyps);
  return bleu(total);
}

}  // namespace

TrialResult run_trial(const TrialConfig& config, const DataMix& mix, std::span<const SentencePair> dev,
                      const TrialOptions& options) {
  if (dev.empty()) throw DataError("run_trial: empty dev set");
  try {
    const TrainOptions train = config.train_options(options.direction);
    if (train.iterations < 1) throw UsageError("EM iterations must be >= 1");
    TrialResult result;
    result.config = config;
    Ibm1Trainer trainer(mix);
    EarlyStopper stopper(options.patience);
    std::optional<LexModel> best;
    for (int it = 1; it <= train.iterations; ++it) {
      trainer.step();
      LexModel snapshot = trainer.model(train.direction, train.decoder, nullptr);
      const double ppl = dev_perplexity(snapshot, dev);
      result.dev_perplexity.push_back(ppl);
      result.iterations_run = it;
      const bool stop = stopper.observe(ppl);
      if (stopper.best_index() + 1 == result.dev_perplexity.size()) {
        best = std::move(snapshot);
        result.checkpoint = static_cast<std::size_t>(it);
      }
      if (stop) break;
    }
    auto lm = std::make_shared<const NGramLM>(
        NGramLM::train(trainer.targets(), train.lm_order, train.lm_k, trainer.target_weights()));
    result.model = std::make_shared<const LexModel>(best->with_lm(std::move(lm)));
    result.bleu = dev_bleu(*result.model, dev, options.detok, 1, &result.dev_output);
    return result;
  } catch (const UsageError& e) {
    throw UsageError("trial " + config.to_json() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("trial " + config.to_json() + ": " + e.what());
  }
}

std::vector<TrialResult> random_search(std::span<const TrialConfig> configs, const TrainingData& data,
                                       std::span<const SentencePair> dev, const TrialOptions& options,
                                       unsigned workers) {
  std::vector<TrialResult> results(configs.size());
  parallel_for(configs.size(), workers, [&](std::size_t i) {
    results[i] = run_trial(configs[i], data.mix(configs[i].upsampling()), dev, options);
    results[i].index = i;
  });
  return results;
}

std::vector<std::size_t> top_k_indices(std::span<const TrialResult> results, std::size_t k) {
  if (k < 1 || k > results.size())
    throw UsageError("select_top_k: k = " + std::to_string(k) + " with " + std::to_string(results.size()) +
                     " results");
  std::vector<std::size_t> order(results.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return results[a].bleu > results[b].bleu; });
  order.resize(k);
  return order;
}

Ensemble select_top_k(std::span<const TrialResult> results, std::size_t k) {
  std::vector<std::shared_ptr<const LexModel>> members;
  for (std::size_t i : top_k_indices(results, k)) members.push_back(results[i].model);
  return Ensemble(std::move(members));
}

FinetuneResult finetune(const LexModel& model, const TaggedDataset& in_domain, std::span<const SentencePair> dev,
                        const FinetuneOptions& options) {
  if (in_domain.pairs.empty()) throw DataError("finetune: empty in-domain data");
  if (options.max_steps < 0) throw UsageError("finetune: max_steps must be >= 0");
  FinetuneResult result;
  result.model = std::make_shared<const LexModel>(model);
  result.bleu.push_back(dev_bleu(model, dev, options.detok, options.workers, nullptr));
  if (options.max_steps == 0) return result;

  std::shared_ptr<const NGramLM> lm = model.lm();
  if (lm) {
    std::vector<Sentence> targets;
    for (const auto& p : in_domain.pairs) targets.push_back(p.target);
    lm = std::make_shared<const NGramLM>(lm->finetune(targets, options.lm_alpha));
  }
  Ibm1Trainer trainer(model, in_domain.pairs);
  for (int step = 1; step <= options.max_steps; ++step) {
    trainer.step();
    auto candidate = std::make_shared<const LexModel>(trainer.model(model.direction(), model.settings(), lm));
    const double b = dev_bleu(*candidate, dev, options.detok, options.workers, nullptr);
    result.bleu.push_back(b);
    if (b > result.bleu[result.step]) {
      result.step = static_cast<std::size_t>(step);
      result.model = std::move(candidate);
    }
  }
  return result;
}

}  // namespace stbt
