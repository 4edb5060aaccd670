#include "stbt/augment.hpp"

#include <nlohmann/json.hpp>

namespace stbt {

std::string Provenance::to_json() const {
  nlohmann::ordered_json j;
  j["generator"] = generator;
  j["members"] = members;
  j["decode"] = std::string(to_string(mode));
  j["lambda1"] = weights.lambda1;
  j["lambda2"] = weights.lambda2;
  j["seed"] = seed;
  j["dropped"] = dropped;
  return j.dump(2) + "\n";
}

Provenance Provenance::from_json(std::string_view text) {
  Provenance p;
  try {
    const auto j = nlohmann::json::parse(text);
    p.generator = j.at("generator").get<std::string>();
    p.members = j.at("members").get<std::vector<std::string>>();
    p.mode = parse_decode_mode(j.at("decode").get<std::string>());
    p.weights.lambda1 = j.at("lambda1").get<double>();
    p.weights.lambda2 = j.at("lambda2").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.dropped = j.at("dropped").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("provenance record: ") + e.what());
  }
  return p;
}

namespace {

SyntheticDataset generate(const Ensemble& model, const TaggedDataset& mono, DecodeMode mode, const RerankContext* ctx,
                          std::uint64_t seed, unsigned workers, bool generated_is_source) {
  std::vector<Sentence> inputs;
  inputs.reserve(mono.sentences.size());
  for (const auto& s : mono.sentences) inputs.push_back(strip_tag(s));
  const std::vector<Sentence> outputs = decode_all(model, inputs, mode, ctx, workers);

  SyntheticDataset out;
  out.data.name = mono.name + (generated_is_source ? "-bt" : "-st");
  out.data.side = Side::Parallel;
  out.data.tag = std::string(generated_is_source ? tags::kBackTranslation : tags::kSelfTrain);
  const auto& known = model.lead().vocab().target_index;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    bool any_known = false;
    for (const auto& tok : outputs[i]) any_known = any_known || known.count(tok) > 0;
    if (inputs[i].empty() || outputs[i].empty() || !any_known) {
      ++out.provenance.dropped;
      continue;
    }
    if (generated_is_source)
      out.data.pairs.push_back({outputs[i], inputs[i]});
    else
      out.data.pairs.push_back({inputs[i], outputs[i]});
  }
  out.data = apply_tag(std::move(out.data));
  out.provenance.generator = model.hash();
  out.provenance.members = model.manifest();
  out.provenance.mode = mode;
  if (mode == DecodeMode::Rerank && ctx) out.provenance.weights = ctx->weights;
  out.provenance.seed = seed;
  return out;
}

}  // namespace

SyntheticDataset back_translate(const Ensemble& g, const TaggedDataset& mono_target, DecodeMode mode,
                                const RerankContext* ctx, std::uint64_t seed, unsigned workers) {
  if (g.direction() != Direction::Backward) throw UsageError("back_translate needs a backward (target-to-source) model");
  return generate(g, mono_target, mode, ctx, seed, workers, true);
}

SyntheticDataset self_train(const Ensemble& f, const TaggedDataset& mono_source, DecodeMode mode,
                            const RerankContext* ctx, std::uint64_t seed, unsigned workers) {
  if (f.direction() != Direction::Forward) throw UsageError("self_train needs a forward (source-to-target) model");
  return generate(f, mono_source, mode, ctx, seed, workers, false);
}

DataMix assemble_training_mix(const TaggedDataset& bitext, const TaggedDataset* st, const TaggedDataset* bt,
                              const Upsampling& upsamples) {
  std::vector<TaggedDataset> datasets;
  auto add = [&](const TaggedDataset& ds, int upsample) {
    if (upsample < 1) throw UsageError("upsampling ratios must be >= 1");
    TaggedDataset copy = ds;
    copy.upsample = upsample;
    datasets.push_back(std::move(copy));
  };
  add(bitext, upsamples.bitext);
  if (st) add(*st, upsamples.st);
  if (bt) add(*bt, upsamples.bt);
  return build_mix(std::move(datasets));
}

void write_synthetic(const std::filesystem::path& path, const SyntheticDataset& ds) {
  write_parallel(path, ds.data.pairs);
  write_file(path.string() + ".provenance.json", ds.provenance.to_json());
}

SyntheticDataset read_synthetic(const std::filesystem::path& path, std::string name, std::string tag) {
  SyntheticDataset ds;
  ds.data = load_corpus(path, Side::Parallel, std::move(name), std::move(tag));
  ds.provenance = Provenance::from_json(read_file(path.string() + ".provenance.json"));
  return ds;
}

}  // namespace stbt
