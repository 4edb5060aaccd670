// stbt: command-line entry point for every stage of the toolkit.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stbt/augment.hpp"
#include "stbt/corpus.hpp"
#include "stbt/ensemble.hpp"
#include "stbt/lm.hpp"
#include "stbt/metrics.hpp"
#include "stbt/mine.hpp"
#include "stbt/pipeline.hpp"
#include "stbt/rerank.hpp"
#include "stbt/search.hpp"
#include "stbt/subword.hpp"
#include "stbt/synth.hpp"
#include "stbt/tm.hpp"

namespace fs = std::filesystem;
using namespace stbt;

namespace {

// A model file "m.lex" keeps its language model in "m.lex.lm".
fs::path lm_path_of(const fs::path& model) { return model.string() + ".lm"; }

void save_model(const LexModel& m, const fs::path& path) {
  if (m.lm()) save(*m.lm(), lm_path_of(path));
  save(m, path);
}

std::shared_ptr<const LexModel> load_model(const fs::path& path) {
  const std::string text = read_file(path);
  std::shared_ptr<const NGramLM> lm;
  if (LexModel::referenced_lm(text) != "none") lm = std::make_shared<const NGramLM>(load_lm(lm_path_of(path)));
  return std::make_shared<const LexModel>(LexModel::parse(text, lm));
}

std::shared_ptr<const Ensemble> load_ensemble(const std::vector<std::string>& paths) {
  if (paths.empty()) throw UsageError("at least one model is required");
  std::vector<std::shared_ptr<const LexModel>> members;
  for (const auto& p : paths) members.push_back(load_model(p));
  return std::make_shared<const Ensemble>(std::move(members));
}

TaggedDataset load_parallel(const std::string& path, std::string tag = std::string(tags::kInDomain)) {
  return load_corpus(path, Side::Parallel, {}, std::move(tag));
}

std::vector<Sentence> load_mono(const std::string& path) { return load_corpus(path, Side::MonoSource).sentences; }

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-")
    std::cout << text;
  else
    write_file(out, text);
}

std::string lines(const std::vector<Sentence>& sentences) {
  std::string s;
  for (const auto& x : sentences) s += join(x) + "\n";
  return s;
}

/// Flags shared by commands that can decode with noisy-channel reranking.
struct DecodeFlags {
  std::string mode = "beam";
  std::vector<std::string> channel;
  std::string lm;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  int nbest = kDefaultNBest;

  void add(CLI::App* app) {
    app->add_option("--mode", mode, "Decoding: beam or rerank")->check(CLI::IsMember({"beam", "rerank"}));
    app->add_option("--channel", channel, "Channel model(s) running opposite to the decoding model (rerank)");
    app->add_option("--lm", lm, "Language model over the output language (rerank)");
    app->add_option("--lambda1", lambda1, "Channel score weight in [0, 3]");
    app->add_option("--lambda2", lambda2, "Language model weight in [0, 3]");
    app->add_option("--nbest", nbest, "Candidates per sentence")->check(CLI::PositiveNumber);
  }

  DecodeMode decode_mode() const { return parse_decode_mode(mode); }

  std::unique_ptr<RerankContext> context() const {
    if (decode_mode() == DecodeMode::Beam) return nullptr;
    if (channel.empty() || lm.empty()) throw UsageError("--mode rerank needs --channel and --lm");
    auto ctx = std::make_unique<RerankContext>();
    ctx->backward = load_ensemble(channel);
    ctx->lm = std::make_shared<const NGramLM>(load_lm(lm));
    ctx->weights = {lambda1, lambda2};
    validate(ctx->weights);
    ctx->nbest = nbest;
    return ctx;
  }
};

struct ConfigFlags {
  TrialConfig config = default_config();

  void add(CLI::App* app) {
    app->add_option("--em-iterations", config.em_iterations, "EM iterations")->check(CLI::PositiveNumber);
    app->add_option("--lm-order", config.lm_order, "Target LM order")->check(CLI::Range(1, NGramLM::kMaxOrder));
    app->add_option("--lm-k", config.lm_k, "Add-k smoothing constant");
    app->add_option("--lm-weight", config.lm_weight, "Decoder LM weight");
    app->add_option("--window", config.window, "Reordering window")->check(CLI::Range(0, 30));
    app->add_option("--beam", config.beam, "Beam size")->check(CLI::PositiveNumber);
    app->add_option("--up-bitext", config.up_bitext, "Bitext upsampling ratio")->check(CLI::PositiveNumber);
    app->add_option("--up-st", config.up_st, "Self-training data upsampling ratio")->check(CLI::PositiveNumber);
    app->add_option("--up-bt", config.up_bt, "Back-translated data upsampling ratio")->check(CLI::PositiveNumber);
  }
};

struct TrainingFlags {
  std::string parallel, st, bt;
  std::string direction = "forward";

  void add(CLI::App* app) {
    app->add_option("--parallel", parallel, "Parallel training data (TSV)")->required();
    app->add_option("--st", st, "Self-training data (TSV)");
    app->add_option("--bt", bt, "Back-translated data (TSV)");
    app->add_option("--direction", direction, "forward or backward")->check(CLI::IsMember({"forward", "backward"}));
  }

  Direction dir() const { return parse_direction(direction); }

  TrainingData data() const {
    TrainingData d{load_parallel(parallel), std::nullopt, std::nullopt};
    if (!st.empty()) d.st = load_parallel(st, std::string(tags::kSelfTrain));
    if (!bt.empty()) d.bt = load_parallel(bt, std::string(tags::kBackTranslation));
    return dir() == Direction::Forward ? d : d.swapped();
  }

  std::vector<SentencePair> dev(const std::string& path) const {
    TaggedDataset ds = load_parallel(path);
    return dir() == Direction::Forward ? ds.pairs : swap_dataset(ds).pairs;
  }
};

Detok make_detok(const std::string& bpe_path, const std::string& policy, std::shared_ptr<BpeModel>& holder) {
  Detok d;
  d.policy = parse_detok_policy(policy);
  if (!bpe_path.empty()) {
    holder = std::make_shared<BpeModel>(load_bpe(bpe_path));
    d.bpe = holder.get();
  }
  return d;
}

int run(int argc, char** argv) {
  CLI::App app{"stbt: back-translation, self-training and noisy-channel reranking toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  unsigned workers = 1;
  std::uint64_t seed = 1;
  app.add_option("--workers", workers, "Worker threads for parallel stages")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Global seed; every stage derives its seed from it");

  // ---- synth-gen ----
  auto* synth = app.add_subcommand("synth-gen", "Generate the synthetic benchmark bundle");
  std::string synth_out, synth_spec;
  SynthSizes sizes;
  double synth_noise = -1.0, synth_shift = -1.0;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--spec", synth_spec, "Spec file (JSON); defaults otherwise");
  synth->add_option("--parallel", sizes.parallel, "Parallel training pairs");
  synth->add_option("--mono-source", sizes.mono_source, "Source-side monolingual sentences");
  synth->add_option("--mono-target", sizes.mono_target, "Target-side monolingual sentences");
  synth->add_option("--dev", sizes.dev, "Dev pairs");
  synth->add_option("--test", sizes.test, "Test pairs");
  synth->add_option("--noise", synth_noise, "Override the target noise rate");
  synth->add_option("--domain-shift", synth_shift, "Override the out-of-domain shift in (0, 1]");
  synth->callback([&] {
    SynthSpec spec = synth_spec.empty() ? SynthSpec{} : SynthSpec::from_json(read_file(synth_spec));
    if (synth_spec.empty() || app.get_option("--seed")->count() > 0) spec.seed = seed;
    if (synth_noise >= 0.0) spec.noise = synth_noise;
    if (synth_shift >= 0.0) spec.domain_shift = synth_shift;
    spec.derive();
    write_bundle(synth_out, spec, gen_corpora(spec, sizes));
  });

  // ---- learn-bpe ----
  auto* lbpe = app.add_subcommand("learn-bpe", "Learn BPE merges over both sides of parallel corpora");
  std::vector<std::string> bpe_inputs;
  std::size_t bpe_vocab = 10000;
  std::string bpe_out, joiner{kDefaultJoiner};
  lbpe->add_option("--input", bpe_inputs, "Parallel TSV files")->required();
  lbpe->add_option("--vocab", bpe_vocab, "Target symbol inventory size");
  lbpe->add_option("--joiner", joiner, "Continuation marker");
  lbpe->add_option("--out", bpe_out, "Merge file")->required();
  lbpe->callback([&] {
    std::vector<Sentence> corpus;
    for (const auto& f : bpe_inputs)
      for (const auto& p : load_parallel(f).pairs) {
        corpus.push_back(strip_tag(p.source));
        corpus.push_back(p.target);
      }
    std::set<std::string> reserved{std::string(tags::kInDomain), std::string(tags::kOutDomain),
                                   std::string(tags::kSelfTrain), std::string(tags::kBackTranslation)};
    save(learn_bpe(corpus, bpe_vocab, joiner, reserved), bpe_out);
  });

  // ---- train-lm ----
  auto* tlm = app.add_subcommand("train-lm", "Train an n-gram LM, optionally fine-tuned toward in-domain text");
  std::vector<std::string> lm_inputs;
  std::string lm_in_domain, lm_out;
  int lm_order = 3;
  double lm_k = 0.1, lm_alpha = 0.5;
  tlm->add_option("--input", lm_inputs, "Monolingual files")->required();
  tlm->add_option("--in-domain", lm_in_domain, "In-domain monolingual file for interpolation");
  tlm->add_option("--alpha", lm_alpha, "Interpolation weight toward the in-domain model")->check(CLI::Range(0.0, 1.0));
  tlm->add_option("--order", lm_order, "Order")->check(CLI::Range(1, NGramLM::kMaxOrder));
  tlm->add_option("--k", lm_k, "Add-k constant");
  tlm->add_option("--out", lm_out, "Output file")->required();
  tlm->callback([&] {
    std::vector<Sentence> corpus;
    for (const auto& f : lm_inputs)
      for (auto& s : load_mono(f)) corpus.push_back(std::move(s));
    NGramLM lm = NGramLM::train(corpus, lm_order, lm_k);
    if (!lm_in_domain.empty()) lm = lm.finetune(load_mono(lm_in_domain), lm_alpha);
    save(lm, lm_out);
  });

  // ---- train ----
  auto* train = app.add_subcommand("train", "Train one model (a single search trial)");
  TrainingFlags train_data;
  ConfigFlags train_config;
  std::string train_dev, train_out;
  int patience = 2;
  train_data.add(train);
  train_config.add(train);
  train->add_option("--dev", train_dev, "Dev pairs for early stopping and BLEU")->required();
  train->add_option("--patience", patience, "Early-stopping patience")->check(CLI::PositiveNumber);
  train->add_option("--out", train_out, "Model file; its LM goes to <out>.lm")->required();
  train->callback([&] {
    train_config.config.seed = seed;
    const TrainingData data = train_data.data();
    const TrialResult r = run_trial(train_config.config, data.mix(train_config.config.upsampling()),
                                    train_data.dev(train_dev), {train_data.dir(), patience, {}});
    save_model(*r.model, train_out);
    std::cout << r.to_json() << "\n";
  });

  // ---- search ----
  auto* search = app.add_subcommand("search", "Random hyper-parameter search");
  TrainingFlags search_data;
  std::string search_dev, search_out, search_space;
  int trials = kDefaultTrials, topk = 1;
  search_data.add(search);
  search->add_option("--dev", search_dev, "Dev pairs")->required();
  search->add_option("--trials", trials, "Number of sampled configurations")->check(CLI::PositiveNumber);
  search->add_option("--topk", topk, "Models kept for the ensemble")->check(CLI::PositiveNumber);
  search->add_option("--space", search_space, "Search space file (JSON)");
  search->add_option("--patience", patience, "Early-stopping patience")->check(CLI::PositiveNumber);
  search->add_option("--out", search_out, "Output directory")->required();
  search->callback([&] {
    const SearchSpace space = search_space.empty() ? SearchSpace{} : SearchSpace::from_json(read_file(search_space));
    const auto configs = sample_configs(space, trials, seed);
    const auto results = random_search(configs, search_data.data(), search_data.dev(search_dev),
                                       {search_data.dir(), patience, {}}, workers);
    std::string log;
    for (const auto& r : results) log += r.to_json() + "\n";
    write_file(fs::path(search_out) / "trials.jsonl", log);
    const auto top = top_k_indices(results, static_cast<std::size_t>(topk));
    for (std::size_t rank = 0; rank < top.size(); ++rank)
      save_model(*results[top[rank]].model, fs::path(search_out) / ("top" + std::to_string(rank) + ".lex"));
  });

  // ---- translate ----
  auto* translate = app.add_subcommand("translate", "Translate sentences with a model or ensemble");
  std::vector<std::string> tr_models;
  std::string tr_input, tr_out, tr_nbest_out, tr_bpe;
  DecodeFlags tr_flags;
  translate->add_option("--model", tr_models, "Model file(s); several form an ensemble")->required();
  translate->add_option("--input", tr_input, "Source sentences, one per line")->required();
  translate->add_option("--out", tr_out, "Output file (default stdout)");
  translate->add_option("--nbest-out", tr_nbest_out, "Write full n-best lists here");
  translate->add_option("--bpe", tr_bpe, "Encode inputs and decode outputs with this BPE model");
  tr_flags.add(translate);
  translate->callback([&] {
    const auto model = load_ensemble(tr_models);
    const auto ctx = tr_flags.context();
    std::vector<Sentence> inputs = load_mono(tr_input);
    std::unique_ptr<BpeModel> bpe;
    if (!tr_bpe.empty()) {
      bpe = std::make_unique<BpeModel>(load_bpe(tr_bpe));
      const BpeEncoder enc(*bpe);
      for (auto& s : inputs) s = enc.encode(s);
    }
    std::vector<NBestList> lists(inputs.size());
    parallel_for(inputs.size(), workers, [&](std::size_t i) {
      lists[i] = model->nbest(inputs[i], tr_flags.nbest);
      if (ctx) lists[i] = rerank(std::move(lists[i]), *ctx->backward, *ctx->lm, ctx->weights);
    });
    if (!tr_nbest_out.empty()) write_nbest(tr_nbest_out, lists);
    std::string out;
    for (const auto& l : lists) {
      const Sentence& best = l.entries.front().hypothesis;
      out += (bpe ? decode(best, *bpe) : join(best)) + "\n";
    }
    emit(tr_out, out);
  });

  // ---- rerank ----
  auto* rr = app.add_subcommand("rerank", "Rerank an n-best file with channel and LM scores");
  std::string rr_nbest, rr_source, rr_out, rr_nbest_out;
  DecodeFlags rr_flags;
  rr->add_option("--nbest-file", rr_nbest, "N-best file")->required();
  rr->add_option("--source", rr_source, "Source sentences in n-best order")->required();
  rr->add_option("--out", rr_out, "Top-1 output (default stdout)");
  rr->add_option("--nbest-out", rr_nbest_out, "Rescored n-best file");
  rr_flags.add(rr);
  rr->callback([&] {
    rr_flags.mode = "rerank";
    const auto ctx = rr_flags.context();
    auto lists = read_nbest(rr_nbest);
    const auto sources = load_mono(rr_source);
    if (sources.size() != lists.size())
      throw DataError("n-best file has " + std::to_string(lists.size()) + " sentences, source has " +
                      std::to_string(sources.size()));
    for (std::size_t i = 0; i < lists.size(); ++i) {
      lists[i].source = sources[i];
      lists[i] = rerank(std::move(lists[i]), *ctx->backward, *ctx->lm, ctx->weights);
    }
    if (!rr_nbest_out.empty()) write_nbest(rr_nbest_out, lists);
    std::vector<Sentence> best;
    for (const auto& l : lists) best.push_back(l.entries.front().hypothesis);
    emit(rr_out, lines(best));
  });

  // ---- tune-lambdas ----
  auto* tl = app.add_subcommand("tune-lambdas", "Random search for the noisy-channel weights");
  std::vector<std::string> tl_fwd, tl_bwd;
  std::string tl_lm, tl_dev, tl_bpe, tl_detok = "space-joined";
  int tl_trials = kDefaultTrials, tl_nbest = kDefaultNBest;
  tl->add_option("--forward", tl_fwd, "Forward model(s)")->required();
  tl->add_option("--backward", tl_bwd, "Channel model(s)")->required();
  tl->add_option("--lm", tl_lm, "Output-language LM")->required();
  tl->add_option("--dev", tl_dev, "Tuning pairs (TSV, oriented like the forward model)")->required();
  tl->add_option("--tune-trials", tl_trials, "Random-search trials")->check(CLI::PositiveNumber);
  tl->add_option("--nbest", tl_nbest, "Candidates per sentence")->check(CLI::PositiveNumber);
  tl->add_option("--bpe", tl_bpe, "BPE model for detokenized BLEU");
  tl->add_option("--detok", tl_detok, "space-joined or unspaced");
  tl->callback([&] {
    std::shared_ptr<BpeModel> holder;
    const Detok detok = make_detok(tl_bpe, tl_detok, holder);
    const auto fwd = load_ensemble(tl_fwd), bwd = load_ensemble(tl_bwd);
    const NGramLM lm = load_lm(tl_lm);
    const auto dev = load_parallel(tl_dev).pairs;
    const TuneResult r = tune_lambdas(dev, *fwd, *bwd, lm, tl_trials, seed, tl_nbest, detok, workers);
    std::cout << "{\"lambda1\": " << format_double(r.weights.lambda1)
              << ", \"lambda2\": " << format_double(r.weights.lambda2) << ", \"bleu\": " << format_double(r.bleu)
              << "}\n";
  });

  // ---- augment-bt / augment-st ----
  struct AugmentFlags {
    std::vector<std::string> model;
    std::string mono, out;
    DecodeFlags decode;
  };
  AugmentFlags bt_flags, st_flags;
  auto add_augment = [&](const char* name, const char* help, AugmentFlags& f, bool back) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--model", f.model, back ? "Backward model(s)" : "Forward model(s)")->required();
    cmd->add_option("--mono", f.mono, back ? "Target-side monolingual text" : "Source-side monolingual text")
        ->required();
    cmd->add_option("--out", f.out, "Synthetic parallel TSV; provenance goes to <out>.provenance.json")->required();
    f.decode.add(cmd);
    cmd->callback([&f, &workers, &seed, back] {
      const auto model = load_ensemble(f.model);
      const auto ctx = f.decode.context();
      TaggedDataset mono = load_corpus(f.mono, back ? Side::MonoTarget : Side::MonoSource);
      const SyntheticDataset ds = back ? back_translate(*model, mono, f.decode.decode_mode(), ctx.get(), seed, workers)
                                       : self_train(*model, mono, f.decode.decode_mode(), ctx.get(), seed, workers);
      write_synthetic(f.out, ds);
    });
  };
  add_augment("augment-bt", "Back-translate target-side monolingual text", bt_flags, true);
  add_augment("augment-st", "Self-train on source-side monolingual text", st_flags, false);

  // ---- pipeline ----
  auto* pipe = app.add_subcommand("pipeline", "Iterative back-translation and self-training");
  PipelineOptions popt;
  std::string p_data, p_run, p_space, p_detok = "space-joined";
  pipe->add_option("--data", p_data, "Dataset manifest with parallel, mono_source, mono_target and dev")->required();
  pipe->add_option("--run-dir", p_run, "Run directory")->required();
  pipe->add_option("--iterations", popt.iterations, "Rounds T (at most 3)")->check(CLI::PositiveNumber);
  pipe->add_option("--trials", popt.trials, "Search trials per direction and round")->check(CLI::PositiveNumber);
  pipe->add_option("--topk", popt.topk, "Ensemble size k")->check(CLI::PositiveNumber);
  pipe->add_flag("--parallel-only", popt.parallel_only, "Use the parallel data's own sides as monolingual data");
  pipe->add_option("--space", p_space, "Search space file (JSON)");
  pipe->add_option("--tune-trials", popt.lambda_trials, "Lambda random-search trials")->check(CLI::PositiveNumber);
  pipe->add_option("--nbest", popt.nbest, "Candidates per sentence for reranking")->check(CLI::PositiveNumber);
  pipe->add_option("--finetune-steps", popt.finetune_steps, "Fine-tuning EM steps");
  pipe->add_flag("--finetune-every-iteration", popt.finetune_every_iteration, "Fine-tune in every round");
  pipe->add_option("--bpe-vocab", popt.bpe_vocab, "BPE symbol inventory size");
  pipe->add_option("--detok", p_detok, "space-joined or unspaced");
  pipe->callback([&] {
    if (popt.iterations > kMaxPipelineIterations) {
      std::cerr << "stbt: --iterations " << popt.iterations << " capped at " << kMaxPipelineIterations << "\n";
      popt.iterations = kMaxPipelineIterations;
    }
    popt.seed = seed;
    popt.workers = workers;
    popt.detok = parse_detok_policy(p_detok);
    if (!p_space.empty()) popt.space = SearchSpace::from_json(read_file(p_space));
    PipelineInputs in;
    bool have_parallel = false, have_dev = false;
    for (auto& ds : load_datasets(p_data)) {
      if (ds.name == "parallel") {
        in.parallel = std::move(ds);
        have_parallel = true;
      } else if (ds.name == "dev") {
        in.dev = std::move(ds);
        have_dev = true;
      } else if (ds.name == "mono_source") {
        in.mono_source = std::move(ds);
      } else if (ds.name == "mono_target") {
        in.mono_target = std::move(ds);
      }
    }
    if (!have_parallel || !have_dev) throw DataError(p_data + ": needs datasets named 'parallel' and 'dev'");
    const PipelineResult r = run_pipeline(in, popt, p_run);
    std::printf("dev BLEU forward %.2f backward %.2f\n", r.manifest.dev_bleu(Direction::Forward),
                r.manifest.dev_bleu(Direction::Backward));
  });

  // ---- mine ----
  auto* mn = app.add_subcommand("mine", "Mine parallel sentences from comparable documents");
  std::string mn_a, mn_b, mn_model, mn_out;
  double mn_threshold = 0.1, mn_floor = 0.0, mn_dict = 0.1;
  mn->add_option("--index-a", mn_a, "Document index of language a")->required();
  mn->add_option("--index-b", mn_b, "Document index of language b")->required();
  mn->add_option("--model", mn_model, "Model translating language b into language a")->required();
  mn->add_option("--threshold", mn_threshold, "Minimum document similarity");
  mn->add_option("--floor", mn_floor, "Minimum per-token sentence-pair probability")->check(CLI::Range(0.0, 1.0));
  mn->add_option("--dict-threshold", mn_dict, "Minimum t-table probability for dictionary entries");
  mn->add_option("--out", mn_out, "Mined parallel TSV; scores go to <out>.scores")->required();
  mn->callback([&] {
    const auto model = load_model(mn_model);
    const auto docs_a = load_documents(mn_a), docs_b = load_documents(mn_b);
    const auto mined = mine(docs_a, docs_b, *model, make_dictionary(*model, mn_dict), mn_threshold, mn_floor, workers);
    write_mined(mn_out, mined);
  });

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "Decode a test set and report BLEU");
  std::vector<std::string> ev_models;
  std::string ev_test, ev_bpe, ev_detok = "space-joined", ev_report, ev_hyps;
  DecodeFlags ev_flags;
  ev->add_option("--model", ev_models, "Model file(s)")->required();
  ev->add_option("--test", ev_test, "Test pairs (TSV)")->required();
  ev->add_option("--bpe", ev_bpe, "BPE model for detokenization");
  ev->add_option("--detok", ev_detok, "space-joined or unspaced");
  ev->add_option("--report", ev_report, "Machine-readable report (JSON)");
  ev->add_option("--hyps", ev_hyps, "Per-sentence detokenized outputs");
  ev_flags.add(ev);
  ev->callback([&] {
    std::shared_ptr<BpeModel> holder;
    const Detok detok = make_detok(ev_bpe, ev_detok, holder);
    const auto model = load_ensemble(ev_models);
    const auto ctx = ev_flags.context();
    const EvalReport r =
        evaluate_system(*model, load_parallel(ev_test).pairs, ev_flags.decode_mode(), ctx.get(), detok, workers);
    if (!ev_report.empty()) write_file(ev_report, r.to_json());
    if (!ev_hyps.empty()) write_file(ev_hyps, lines(r.hypotheses));
    std::cout << r.to_text();
  });

  // ---- finetune ----
  auto* ft = app.add_subcommand("finetune", "Continue training on in-domain data, keeping the best checkpoint");
  std::string ft_model, ft_in, ft_dev, ft_out, ft_direction = "forward";
  FinetuneOptions fopt;
  ft->add_option("--model", ft_model, "Model to fine-tune")->required();
  ft->add_option("--in-domain", ft_in, "In-domain parallel TSV (source<TAB>target)")->required();
  ft->add_option("--dev", ft_dev, "Dev pairs (TSV)")->required();
  ft->add_option("--max-steps", fopt.max_steps, "EM steps");
  ft->add_option("--alpha", fopt.lm_alpha, "LM interpolation toward in-domain targets")->check(CLI::Range(0.0, 1.0));
  ft->add_option("--out", ft_out, "Output model")->required();
  ft->callback([&] {
    const auto model = load_model(ft_model);
    fopt.workers = workers;
    TaggedDataset in_domain = load_parallel(ft_in);
    TaggedDataset dev = load_parallel(ft_dev);
    if (model->direction() == Direction::Backward) {
      in_domain = swap_dataset(in_domain);
      dev = swap_dataset(dev);
    }
    const FinetuneResult r = finetune(*model, in_domain, dev.pairs, fopt);
    save_model(*r.model, ft_out);
    std::cout << "{\"step\": " << r.step << ", \"bleu\": " << format_double(r.bleu[r.step]) << "}\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "stbt: usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "stbt: data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "stbt: internal error: " << e.what() << "\n";
    return 3;
  }
}
