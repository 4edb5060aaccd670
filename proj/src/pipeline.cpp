#include "stbt/pipeline.hpp"

#include <set>

#include "stbt/augment.hpp"
#include "stbt/metrics.hpp"

namespace stbt {

using json = nlohmann::ordered_json;

nlohmann::ordered_json PipelineOptions::to_json() const {
  json j;
  j["iterations"] = iterations;
  j["trials"] = trials;
  j["topk"] = topk;
  j["seed"] = seed;
  j["space"] = json::parse(space.to_json());
  j["initial"] = json::parse(initial.to_json());
  j["patience"] = patience;
  j["lambda_trials"] = lambda_trials;
  j["nbest"] = nbest;
  j["finetune_steps"] = finetune_steps;
  j["finetune_alpha"] = finetune_alpha;
  j["finetune_every_iteration"] = finetune_every_iteration;
  j["bpe_vocab"] = bpe_vocab;
  j["detok"] = detok == DetokPolicy::SpaceJoined ? "space-joined" : "unspaced";
  j["rerank_lm_order"] = rerank_lm_order;
  j["rerank_lm_k"] = rerank_lm_k;
  j["rerank_lm_alpha"] = rerank_lm_alpha;
  j["parallel_only"] = parallel_only;
  return j;
}

double PipelineManifest::dev_bleu(Direction d) const {
  const auto& its = doc.at("iterations");
  if (its.empty()) throw UsageError("manifest has no completed iteration");
  return its.back().at("selection").at("dev_bleu").at(std::string(to_string(d))).get<double>();
}

namespace {

namespace fs = std::filesystem;

std::string dname(Direction d) { return std::string(to_string(d)); }

std::string dataset_digest(const TaggedDataset& ds) {
  std::string text;
  for (const auto& p : ds.pairs) text += join(p.source) + "\t" + join(p.target) + "\n";
  for (const auto& s : ds.sentences) text += join(s) + "\n";
  return sha256_hex(text);
}

std::vector<SentencePair> oriented(const TaggedDataset& ds, Direction d) {
  if (d == Direction::Forward) return ds.pairs;
  return swap_dataset(ds).pairs;
}

/// State of one run directory: the manifest under construction and the
/// previous manifest whose completed stages may be reused.
class Run {
 public:
  Run(fs::path root, json header) : root_(std::move(root)) {
    fs::create_directories(root_ / "artifacts" / "models");
    fs::create_directories(root_ / "artifacts" / "lms");
    fs::create_directories(root_ / "artifacts" / "datasets");
    fs::create_directories(root_ / "artifacts" / "nbest");
    fs::create_directories(root_ / "logs");
    const fs::path mf = root_ / "manifest.json";
    if (fs::exists(mf)) {
      json old;
      try {
        old = json::parse(read_file(mf));
      } catch (const json::exception& e) {
        throw DataError(mf.string() + ": " + e.what());
      }
      if (old.value("run_id", std::string()) != header.at("run_id").get<std::string>())
        throw UsageError(root_.string() + " holds a different run; use a fresh run directory");
      previous_ = std::move(old);
      for (const auto& s : previous_.value("stages", json::array())) reusable_.insert(s.get<std::string>());
    }
    doc_ = std::move(header);
    doc_["stages"] = json::array();
  }

  json& doc() { return doc_; }
  const json& previous() const { return previous_; }
  fs::path abs(const std::string& rel) const { return root_ / rel; }

  /// Runs `load` when the stage completed before and nothing upstream was
  /// recomputed; falls back to `compute` when loading fails.
  template <class Load, class Compute>
  void stage(const std::string& key, Load&& load, Compute&& compute) {
    bool loaded = false;
    if (!invalidated_ && reusable_.count(key)) {
      try {
        load();
        loaded = true;
      } catch (const Error&) {
        loaded = false;
      }
    }
    if (!loaded) {
      invalidated_ = true;
      compute();
    }
    doc_["stages"].push_back(key);
    save();
  }

  json file_ref(const std::string& rel) const {
    return json{{"path", rel}, {"sha256", sha256_hex(read_file(abs(rel)))}};
  }

  void verify(const json& ref) const {
    const std::string rel = ref.at("path").get<std::string>();
    if (!fs::exists(abs(rel)) || sha256_hex(read_file(abs(rel))) != ref.at("sha256").get<std::string>())
      throw DataError("artifact " + rel + " is missing or modified");
  }

  json save_member(const LexModel& m, const std::string& name) const {
    json lm = nullptr;
    if (m.lm()) {
      const std::string lm_rel = "artifacts/lms/" + m.lm_hash().substr(0, 16) + ".lm";
      if (!fs::exists(abs(lm_rel))) stbt::save(*m.lm(), abs(lm_rel));
      lm = file_ref(lm_rel);
    }
    const std::string rel = "artifacts/models/" + name + ".lex";
    stbt::save(m, abs(rel));
    json j = file_ref(rel);
    j["hash"] = m.hash();
    j["lm"] = lm;
    return j;
  }

  std::shared_ptr<const LexModel> load_member(const json& j) const {
    verify(j);
    std::shared_ptr<const NGramLM> lm;
    if (!j.at("lm").is_null()) {
      verify(j.at("lm"));
      lm = std::make_shared<const NGramLM>(load_lm(abs(j.at("lm").at("path").get<std::string>())));
    }
    auto m = std::make_shared<const LexModel>(load_lexmodel(abs(j.at("path").get<std::string>()), lm));
    if (m->hash() != j.at("hash").get<std::string>()) throw DataError("model hash mismatch");
    return m;
  }

  json ensemble_json(const std::vector<json>& members, const Ensemble& e) const {
    return json{{"hash", e.hash()}, {"members", members}};
  }

  void save() const {
    const fs::path tmp = root_ / "manifest.json.tmp";
    write_file(tmp, doc_.dump(2) + "\n");
    fs::rename(tmp, root_ / "manifest.json");
  }

 private:
  fs::path root_;
  json doc_;
  json previous_;
  std::set<std::string> reusable_;
  bool invalidated_ = false;
};

const json& find_iteration(const json& doc, int t) {
  for (const auto& it : doc.at("iterations"))
    if (it.at("iteration").get<int>() == t) return it;
  throw DataError("iteration " + std::to_string(t) + " missing from manifest");
}

void validate_options(const PipelineOptions& o) {
  if (o.iterations < 1 || o.iterations > kMaxPipelineIterations)
    throw UsageError("pipeline iterations must lie in [1, " + std::to_string(kMaxPipelineIterations) + "]");
  if (o.topk < 1 || o.trials < o.topk) throw UsageError("pipeline needs trials >= topk >= 1");
  if (o.lambda_trials < 1) throw UsageError("lambda trials must be >= 1");
  if (o.nbest < 1) throw UsageError("nbest must be >= 1");
  if (o.finetune_steps < 0) throw UsageError("finetune steps must be >= 0");
  if (!(o.finetune_alpha >= 0.0 && o.finetune_alpha <= 1.0)) throw UsageError("finetune alpha must lie in [0, 1]");
  if (!(o.rerank_lm_alpha >= 0.0 && o.rerank_lm_alpha <= 1.0))
    throw UsageError("rerank LM alpha must lie in [0, 1]");
  o.space.validate();
}

}  // namespace

PipelineResult run_pipeline(const PipelineInputs& raw, const PipelineOptions& options, const fs::path& run_dir) {
  validate_options(options);
  if (raw.parallel.pairs.empty()) throw DataError("pipeline: empty parallel data");
  if (raw.dev.pairs.empty()) throw DataError("pipeline: empty dev data");

  PipelineInputs in = raw;
  if (options.parallel_only) {
    in.mono_source = TaggedDataset{"mono_source", Side::MonoSource, std::string(tags::kSelfTrain), {}, {}, 1, 0};
    in.mono_target = TaggedDataset{"mono_target", Side::MonoTarget, std::string(tags::kBackTranslation), {}, {}, 1, 0};
    for (const auto& p : raw.parallel.pairs) {
      in.mono_source.sentences.push_back(strip_tag(p.source));
      in.mono_target.sentences.push_back(p.target);
    }
  }
  if (in.mono_source.sentences.empty() || in.mono_target.sentences.empty())
    throw DataError("pipeline: monolingual data is empty (use parallel-only mode)");
  in.parallel.tag = in.parallel.tag.empty() ? std::string(tags::kInDomain) : in.parallel.tag;
  in.dev.tag = in.dev.tag.empty() ? in.parallel.tag : in.dev.tag;

  json header;
  header["format"] = "stbt-pipeline v1";
  json inputs;
  inputs["parallel"] = dataset_digest(in.parallel);
  inputs["mono_source"] = dataset_digest(in.mono_source);
  inputs["mono_target"] = dataset_digest(in.mono_target);
  inputs["dev"] = dataset_digest(in.dev);
  const json opts = options.to_json();
  header["run_id"] = sha256_hex(opts.dump() + inputs.dump()).substr(0, 16);
  header["seed"] = options.seed;
  header["options"] = opts;
  header["inputs"] = inputs;
  Run run(run_dir, header);
  run.doc()["iterations"] = json::array();

  // ---- prepare: subword model, encoded corpora, reranking LMs ----
  auto bpe = std::make_shared<BpeModel>();
  TaggedDataset P, MS, MT, D;
  std::shared_ptr<const NGramLM> target_lm, source_lm;
  const std::vector<std::pair<std::string, TaggedDataset*>> corpora = {
      {"parallel", &P}, {"mono_source", &MS}, {"mono_target", &MT}, {"dev", &D}};
  auto load_lms = [&](const json& sec) {
    run.verify(sec.at("target"));
    run.verify(sec.at("source"));
    target_lm = std::make_shared<const NGramLM>(load_lm(run.abs(sec.at("target").at("path").get<std::string>())));
    source_lm = std::make_shared<const NGramLM>(load_lm(run.abs(sec.at("source").at("path").get<std::string>())));
  };
  run.stage(
      "prepare",
      [&] {
        const json& prev = run.previous().at("prepare");
        run.verify(prev.at("bpe"));
        *bpe = load_bpe(run.abs(prev.at("bpe").at("path").get<std::string>()));
        for (const auto& [name, ds] : corpora) {
          const json& ref = prev.at("datasets").at(name);
          run.verify(ref);
          const TaggedDataset& src = name == "parallel" ? in.parallel
                                     : name == "mono_source" ? in.mono_source
                                     : name == "mono_target" ? in.mono_target
                                                              : in.dev;
          *ds = load_corpus(run.abs(ref.at("path").get<std::string>()), src.side, src.name, src.tag);
        }
        load_lms(prev.at("rerank_lms"));
        run.doc()["prepare"] = prev;
      },
      [&] {
        std::vector<Sentence> both;
        for (const auto& p : in.parallel.pairs) {
          both.push_back(strip_tag(p.source));
          both.push_back(p.target);
        }
        std::set<std::string> reserved{std::string(tags::kInDomain), std::string(tags::kOutDomain),
                                       std::string(tags::kSelfTrain), std::string(tags::kBackTranslation)};
        *bpe = learn_bpe(both, options.bpe_vocab, std::string(kDefaultJoiner), reserved);
        save(*bpe, run.abs("artifacts/bpe.model"));
        const BpeEncoder enc(*bpe);
        json sec;
        sec["bpe"] = run.file_ref("artifacts/bpe.model");
        const std::vector<const TaggedDataset*> raw_sets = {&in.parallel, &in.mono_source, &in.mono_target, &in.dev};
        for (std::size_t c = 0; c < corpora.size(); ++c) {
          const TaggedDataset& src = *raw_sets[c];
          TaggedDataset& dst = *corpora[c].second;
          dst = src;
          for (auto& p : dst.pairs) {
            p.source = enc.encode(strip_tag(p.source));
            p.target = enc.encode(p.target);
          }
          for (auto& s : dst.sentences) s = enc.encode(strip_tag(s));
          const std::string rel = "artifacts/datasets/" + corpora[c].first + (src.side == Side::Parallel ? ".tsv" : ".txt");
          if (src.side == Side::Parallel)
            write_parallel(run.abs(rel), dst.pairs);
          else
            write_mono(run.abs(rel), dst.sentences);
          sec["datasets"][corpora[c].first] = run.file_ref(rel);
        }
        std::vector<Sentence> tgt_side, src_side;
        for (const auto& p : P.pairs) {
          src_side.push_back(p.source);
          tgt_side.push_back(p.target);
        }
        auto make_lm = [&](const std::vector<Sentence>& parallel_side, const std::vector<Sentence>& mono) {
          if (options.parallel_only)
            return NGramLM::train(parallel_side, options.rerank_lm_order, options.rerank_lm_k);
          std::vector<Sentence> all = parallel_side;
          all.insert(all.end(), mono.begin(), mono.end());
          return NGramLM::train(all, options.rerank_lm_order, options.rerank_lm_k)
              .finetune(parallel_side, options.rerank_lm_alpha);
        };
        target_lm = std::make_shared<const NGramLM>(make_lm(tgt_side, MT.sentences));
        source_lm = std::make_shared<const NGramLM>(make_lm(src_side, MS.sentences));
        save(*target_lm, run.abs("artifacts/lms/rerank_target.lm"));
        save(*source_lm, run.abs("artifacts/lms/rerank_source.lm"));
        sec["rerank_lms"]["target"] = run.file_ref("artifacts/lms/rerank_target.lm");
        sec["rerank_lms"]["source"] = run.file_ref("artifacts/lms/rerank_source.lm");
        run.doc()["prepare"] = sec;
      });

  const Detok detok{bpe.get(), options.detok};
  const std::vector<SentencePair> dev_f = oriented(D, Direction::Forward), dev_b = oriented(D, Direction::Backward);
  auto dev_of = [&](Direction d) -> const std::vector<SentencePair>& { return d == Direction::Forward ? dev_f : dev_b; };
  auto lm_of = [&](Direction d) { return d == Direction::Forward ? target_lm : source_lm; };
  const TrialOptions trial_f{Direction::Forward, options.patience, detok};
  const TrialOptions trial_b{Direction::Backward, options.patience, detok};

  std::shared_ptr<const Ensemble> ens_f, ens_b;
  NoisyChannelWeights w_f, w_b;

  auto tune = [&](std::uint64_t stage_seed, json& sec) {
    for (Direction d : {Direction::Forward, Direction::Backward}) {
      const Ensemble& fwd = d == Direction::Forward ? *ens_f : *ens_b;
      const Ensemble& bwd = d == Direction::Forward ? *ens_b : *ens_f;
      const TuneResult r = tune_lambdas(dev_of(d), fwd, bwd, *lm_of(d), options.lambda_trials,
                                        derive_seed(stage_seed, "lambda-" + dname(d)), options.nbest, detok,
                                        options.workers);
      (d == Direction::Forward ? w_f : w_b) = r.weights;
      sec["lambdas"][dname(d)] = json{{"lambda1", r.weights.lambda1}, {"lambda2", r.weights.lambda2}, {"tune_bleu", r.bleu}};
    }
  };
  auto load_lambdas = [&](const json& sec) {
    w_f = {sec.at("lambdas").at("forward").at("lambda1").get<double>(),
           sec.at("lambdas").at("forward").at("lambda2").get<double>()};
    w_b = {sec.at("lambdas").at("backward").at("lambda1").get<double>(),
           sec.at("lambdas").at("backward").at("lambda2").get<double>()};
  };

  // ---- line 2: initial forward and backward models ----
  run.stage(
      "initial",
      [&] {
        const json& prev = run.previous().at("initial");
        ens_f = std::make_shared<const Ensemble>(std::vector{run.load_member(prev.at("forward").at("member"))});
        ens_b = std::make_shared<const Ensemble>(std::vector{run.load_member(prev.at("backward").at("member"))});
        load_lambdas(prev);
        run.doc()["initial"] = prev;
      },
      [&] {
        json sec;
        const TrainingData data{P, std::nullopt, std::nullopt};
        const TrialResult rf = run_trial(options.initial, data.mix(options.initial.upsampling()), dev_f, trial_f);
        const TrialResult rb =
            run_trial(options.initial, data.swapped().mix(options.initial.upsampling()), dev_b, trial_b);
        sec["forward"] = json{{"trial", json::parse(rf.to_json())}, {"member", run.save_member(*rf.model, "initial_forward")}};
        sec["backward"] = json{{"trial", json::parse(rb.to_json())}, {"member", run.save_member(*rb.model, "initial_backward")}};
        ens_f = std::make_shared<const Ensemble>(std::vector{rf.model});
        ens_b = std::make_shared<const Ensemble>(std::vector{rb.model});
        sec["forward"]["ensemble"] = ens_f->hash();
        sec["backward"]["ensemble"] = ens_b->hash();
        tune(derive_seed(options.seed, "initial"), sec);
        run.doc()["initial"] = sec;
      });

  for (int t = 1; t <= options.iterations; ++t) {
    const std::string it = "it" + std::to_string(t);
    const std::uint64_t it_seed = derive_seed(options.seed, "iteration", static_cast<std::uint64_t>(t));
    json rec;
    rec["iteration"] = t;
    auto prev_rec = [&]() -> const json& { return find_iteration(run.previous(), t); };

    // ---- lines 6-7: synthetic data from the previous ensembles ----
    SyntheticDataset F, B;
    run.stage(
        it + "/generate",
        [&] {
          const json& sec = prev_rec().at("synthetic");
          for (auto [key, ds, tag] : {std::tuple{"st", &F, tags::kSelfTrain}, std::tuple{"bt", &B, tags::kBackTranslation}}) {
            run.verify(sec.at(key));
            *ds = read_synthetic(run.abs(sec.at(key).at("path").get<std::string>()), it + "_" + key, std::string(tag));
          }
          rec["synthetic"] = sec;
        },
        [&] {
          const RerankContext ctx_f{ens_b, target_lm, w_f, options.nbest};
          const RerankContext ctx_b{ens_f, source_lm, w_b, options.nbest};
          F = self_train(*ens_f, MS, DecodeMode::Rerank, &ctx_f, derive_seed(it_seed, "st"), options.workers);
          B = back_translate(*ens_b, MT, DecodeMode::Rerank, &ctx_b, derive_seed(it_seed, "bt"), options.workers);
          F.data.name = it + "_st";
          B.data.name = it + "_bt";
          json sec;
          for (auto [key, ds] : {std::pair{"st", &F}, std::pair{"bt", &B}}) {
            const std::string rel = "artifacts/datasets/" + it + "_" + key + ".tsv";
            write_synthetic(run.abs(rel), *ds);
            json ref = run.file_ref(rel);
            ref["generator"] = ds->provenance.generator;
            ref["pairs"] = ds->data.pairs.size();
            ref["dropped"] = ds->provenance.dropped;
            sec[key] = ref;
          }
          rec["synthetic"] = sec;
        });
    const TrainingData data_f{P, F.data, B.data};

    // ---- lines 8-9: random search in both directions ----
    std::vector<std::shared_ptr<const LexModel>> members_f, members_b;
    std::vector<json> member_refs_f, member_refs_b;
    for (Direction d : {Direction::Forward, Direction::Backward}) {
      auto& members = d == Direction::Forward ? members_f : members_b;
      auto& refs = d == Direction::Forward ? member_refs_f : member_refs_b;
      run.stage(
          it + "/search-" + dname(d),
          [&] {
            const json& sec = prev_rec().at("search").at(dname(d));
            for (const auto& m : sec.at("members")) {
              members.push_back(run.load_member(m));
              refs.push_back(m);
            }
            rec["search"][dname(d)] = sec;
          },
          [&] {
            const auto configs = sample_configs(options.space, options.trials, derive_seed(it_seed, "search-" + dname(d)));
            const TrainingData data = d == Direction::Forward ? data_f : data_f.swapped();
            const auto results = random_search(configs, data, dev_of(d), d == Direction::Forward ? trial_f : trial_b,
                                               options.workers);
            json sec;
            sec["trials"] = json::array();
            std::string log;
            for (const auto& r : results) {
              sec["trials"].push_back(json::parse(r.to_json()));
              log += r.to_json() + "\n";
            }
            write_file(run.abs("logs/" + it + "_" + dname(d) + "_trials.jsonl"), log);
            const auto top = top_k_indices(results, static_cast<std::size_t>(options.topk));
            sec["selected"] = top;
            sec["members"] = json::array();
            for (std::size_t i : top) {
              members.push_back(results[i].model);
              refs.push_back(run.save_member(*results[i].model, it + "_" + dname(d) + "_trial" + std::to_string(i)));
              sec["members"].push_back(refs.back());
            }
            rec["search"][dname(d)] = sec;
          });
    }

    // ---- lines 10-12: fine-tuning on the in-domain parallel data ----
    if (t == options.iterations || options.finetune_every_iteration) {
      for (Direction d : {Direction::Forward, Direction::Backward}) {
        auto& members = d == Direction::Forward ? members_f : members_b;
        auto& refs = d == Direction::Forward ? member_refs_f : member_refs_b;
        run.stage(
            it + "/finetune-" + dname(d),
            [&] {
              const json& sec = prev_rec().at("finetune").at(dname(d));
              members.clear();
              refs.clear();
              for (const auto& m : sec) {
                members.push_back(run.load_member(m.at("member")));
                refs.push_back(m.at("member"));
              }
              rec["finetune"][dname(d)] = sec;
            },
            [&] {
              const TaggedDataset in_domain = d == Direction::Forward ? apply_tag(P) : swap_dataset(apply_tag(P));
              const FinetuneOptions fo{options.finetune_steps, options.finetune_alpha, detok, options.workers};
              json sec = json::array();
              for (std::size_t i = 0; i < members.size(); ++i) {
                const FinetuneResult r = finetune(*members[i], in_domain, dev_of(d), fo);
                members[i] = r.model;
                refs[i] = run.save_member(*r.model, it + "_" + dname(d) + "_ft" + std::to_string(i));
                sec.push_back(json{{"step", r.step}, {"bleu", r.bleu}, {"member", refs[i]}});
              }
              rec["finetune"][dname(d)] = sec;
            });
      }
    }

    // ---- lines 13-14: ensembles, λ, dev scores ----
    ens_f = std::make_shared<const Ensemble>(members_f);
    ens_b = std::make_shared<const Ensemble>(members_b);
    run.stage(
        it + "/select",
        [&] {
          const json& sec = prev_rec().at("selection");
          if (sec.at("ensembles").at("forward").at("hash").get<std::string>() != ens_f->hash() ||
              sec.at("ensembles").at("backward").at("hash").get<std::string>() != ens_b->hash())
            throw DataError("ensemble mismatch");
          for (Direction d : {Direction::Forward, Direction::Backward}) run.verify(sec.at("nbest").at(dname(d)));
          load_lambdas(sec);
          rec["selection"] = sec;
        },
        [&] {
          json sec;
          sec["ensembles"]["forward"] = run.ensemble_json(member_refs_f, *ens_f);
          sec["ensembles"]["backward"] = run.ensemble_json(member_refs_b, *ens_b);
          tune(derive_seed(it_seed, "select"), sec);
          for (Direction d : {Direction::Forward, Direction::Backward}) {
            const Ensemble& fwd = d == Direction::Forward ? *ens_f : *ens_b;
            const RerankContext ctx{d == Direction::Forward ? ens_b : ens_f, lm_of(d),
                                    d == Direction::Forward ? w_f : w_b, options.nbest};
            const auto& dev = dev_of(d);
            std::vector<NBestList> lists(dev.size());
            parallel_for(dev.size(), options.workers, [&](std::size_t i) {
              lists[i] = rerank(fwd.nbest(dev[i].source, ctx.nbest), *ctx.backward, *ctx.lm, ctx.weights);
            });
            std::vector<Sentence> hyps, refs;
            for (std::size_t i = 0; i < dev.size(); ++i) {
              hyps.push_back(detok(lists[i].entries.front().hypothesis));
              refs.push_back(detok(dev[i].target));
            }
            const std::string rel = "artifacts/nbest/" + it + "_" + dname(d) + "_dev.nbest";
            write_nbest(run.abs(rel), lists);
            sec["nbest"][dname(d)] = run.file_ref(rel);
            sec["dev_bleu"][dname(d)] = bleu(hyps, refs);
          }
          rec["selection"] = sec;
        });
    run.doc()["iterations"].push_back(rec);
    run.save();
  }

  PipelineResult result;
  result.manifest.doc = run.doc();
  result.bpe = bpe;
  result.forward = ens_f;
  result.backward = ens_b;
  result.forward_context = {ens_b, target_lm, w_f, options.nbest};
  result.backward_context = {ens_f, source_lm, w_b, options.nbest};
  return result;
}

PipelineResult run_parallel_only(const TaggedDataset& parallel, const TaggedDataset& dev, PipelineOptions options,
                                 const fs::path& run_dir) {
  options.parallel_only = true;
  PipelineInputs in;
  in.parallel = parallel;
  in.dev = dev;
  return run_pipeline(in, options, run_dir);
}

}  // namespace stbt
